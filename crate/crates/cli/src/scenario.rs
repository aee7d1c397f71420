//! Scenario documents and the builders they select.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gaugecraft::detect::DetectorSpec;
use gaugecraft::dynamics::{InitialState, StepControl};
use gaugecraft::hamiltonians::{
    build_beyond_dipole, build_dipole_with, build_generalized_1d, build_naive_with, BdGauge, Gauge1D, GaugeParam,
    HamiltonianBundle, Longitudinal, Placement1D, ProfileShape, SegmentQuadrature, TdGauge, Truncation,
};
use gaugecraft::matter::{EmitterSpec, TimeProfile};
use gaugecraft::modes::{
    solve_dielectric_1d, Dielectric1D, GridNode, ModeSet, NormalModeSet1D, QnmSet, Vec3,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Inline mode set, or `{"file": "path"}` relative to the scenario.
    #[serde(default)]
    pub modeset: Option<serde_json::Value>,
    #[serde(default)]
    pub emitter: Option<EmitterSpec>,
    #[serde(default = "coulomb")]
    pub gauge_theta: GaugeParam,
    #[serde(default)]
    pub fock_cutoffs: Option<Vec<usize>>,
    #[serde(default)]
    pub longitudinal: Longitudinal,
    #[serde(default)]
    pub time_profile: Option<TimeProfile>,
    #[serde(default = "correct")]
    pub truncation: Truncation,
    #[serde(default = "one")]
    pub naive_order: usize,
    #[serde(default)]
    pub beyond_dipole: Option<BeyondDipole>,
    #[serde(default)]
    pub generalized_1d: Option<Generalized1D>,
    #[serde(default)]
    pub detector: Option<DetectorSection>,
    #[serde(default)]
    pub evolve: Option<EvolveSection>,
    #[serde(default)]
    pub gauge_check: GaugeCheckSection,
    #[serde(default)]
    pub modes: Option<ModesSection>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
}

fn coulomb() -> GaugeParam {
    GaugeParam::COULOMB
}

fn correct() -> Truncation {
    Truncation::Correct
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeyondDipole {
    pub profile: ProfileShape,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
}

fn default_nodes() -> usize {
    SegmentQuadrature::default().nodes
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generalized1D {
    pub dielectric: Dielectric1D,
    /// Normal modes solved (and summed in the naive gmp form).
    pub solved_modes: usize,
    /// Modes kept in the truncated Hamiltonian.
    pub n_modes: usize,
    pub x0: f64,
    #[serde(default = "x_hat")]
    pub polarization: [f64; 3],
}

fn x_hat() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    /// Fixed detector frequency; when absent the detector is tuned to each
    /// transition.
    #[serde(default)]
    pub omega_d: Option<f64>,
    pub d_d: [f64; 3],
    pub r_d: String,
    /// Explicit `(i, j)` pairs; otherwise the first `count` allowed
    /// transitions out of the ground state.
    #[serde(default)]
    pub transitions: Option<Vec<(usize, usize)>>,
    #[serde(default = "three")]
    pub count: usize,
}

fn three() -> usize {
    3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSection {
    pub t_end: f64,
    #[serde(default = "hundred")]
    pub n_times: usize,
    #[serde(default)]
    pub step: StepControl,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default = "td_coulomb")]
    pub gauge: TdGauge,
    /// Also evolve in the other gauge and report `‖ψ_mp − Wψ_C‖`.
    #[serde(default = "yes")]
    pub compare_gauges: bool,
    #[serde(default)]
    pub dump_states: bool,
}

fn hundred() -> usize {
    100
}

fn td_coulomb() -> TdGauge {
    TdGauge::Coulomb
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeCheckSection {
    #[serde(default = "default_eta_grid")]
    pub eta_grid: Vec<f64>,
    #[serde(default = "five")]
    pub k: usize,
    #[serde(default = "half")]
    pub low_fraction: f64,
}

impl Default for GaugeCheckSection {
    fn default() -> Self {
        GaugeCheckSection { eta_grid: default_eta_grid(), k: five(), low_fraction: half() }
    }
}

fn default_eta_grid() -> Vec<f64> {
    vec![0.0, 0.1, 0.3, 0.5, 1.0]
}

fn five() -> usize {
    5
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSection {
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub qnm: Option<QnmSection>,
    #[serde(default)]
    pub dielectric: Option<DielectricSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nodes: Vec<GridNode>,
    pub projections: Vec<Vec<gaugecraft::C64>>,
    #[serde(default)]
    pub profile_points: BTreeMap<String, Vec<Vec3>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QnmSection {
    pub qnm: QnmSet,
    #[serde(default = "window")]
    pub window_gammas: f64,
    #[serde(default = "ppp")]
    pub points_per_panel: usize,
}

fn window() -> f64 {
    gaugecraft::modes::DEFAULT_WINDOW_GAMMAS
}

fn ppp() -> usize {
    16
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DielectricSection {
    pub dielectric: Dielectric1D,
    pub n_modes: usize,
}

/// Documented defaults: spectral 1e-6 (in units of χ), unitarity 1e-12,
/// quadrature 1e-8.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "spectral")]
    pub spectral: f64,
    #[serde(default = "unitarity")]
    pub unitarity: f64,
    #[serde(default = "quadrature")]
    pub quadrature: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { spectral: spectral(), unitarity: unitarity(), quadrature: quadrature() }
    }
}

fn spectral() -> f64 {
    1e-6
}

fn unitarity() -> f64 {
    1e-12
}

fn quadrature() -> f64 {
    1e-8
}

/// A scenario with its mode set resolved.
pub struct Resolved {
    pub scenario: Scenario,
    pub modeset: Option<ModeSet>,
    pub normal_modes: Option<NormalModeSet1D>,
}

impl Resolved {
    pub fn new(scenario: Scenario, base_dir: &Path) -> Result<Self, CliError> {
        let normal_modes = match &scenario.generalized_1d {
            Some(g) => Some(
                solve_dielectric_1d(&g.dielectric, g.solved_modes).map_err(|e| CliError::core("generalized_1d", e))?,
            ),
            None => None,
        };
        let modeset = match (&scenario.modeset, &normal_modes, &scenario.generalized_1d) {
            (Some(doc), _, _) => Some(load_modeset(doc, base_dir)?),
            (None, Some(nm), Some(g)) => {
                let label = scenario.emitter.as_ref().map_or(gaugecraft::matter::DEFAULT_POSITION, |e| e.position_label());
                Some(
                    nm.to_mode_set(g.n_modes, &[(label, g.x0)], g.polarization)
                        .map_err(|e| CliError::core("generalized_1d", e))?,
                )
            }
            _ => None,
        };
        Ok(Resolved { scenario, modeset, normal_modes })
    }

    pub fn modeset(&self) -> Result<&ModeSet, CliError> {
        self.modeset.as_ref().ok_or_else(|| CliError::missing("modeset"))
    }

    pub fn emitter(&self) -> Result<&EmitterSpec, CliError> {
        self.scenario.emitter.as_ref().ok_or_else(|| CliError::missing("emitter"))
    }

    pub fn cutoffs(&self) -> Result<Vec<usize>, CliError> {
        let cutoffs = self.scenario.fock_cutoffs.clone().ok_or_else(|| CliError::missing("fock_cutoffs"))?;
        let m = self.modeset()?.m();
        if cutoffs.len() != m {
            return Err(CliError::config("fock_cutoffs", format!("{} entries for {m} modes", cutoffs.len())));
        }
        Ok(cutoffs)
    }

    /// The Hamiltonian the scenario describes at gauge `theta`.
    pub fn build(&self, theta: GaugeParam, cutoffs: &[usize]) -> Result<HamiltonianBundle, CliError> {
        self.build_as(theta, cutoffs, self.scenario.truncation)
    }

    /// As [`Resolved::build`] with the truncation overridden.
    pub fn build_as(
        &self,
        theta: GaugeParam,
        cutoffs: &[usize],
        truncation: Truncation,
    ) -> Result<HamiltonianBundle, CliError> {
        let s = &self.scenario;
        let em = self.emitter()?;
        if let (Some(g), Some(nm)) = (&s.generalized_1d, &self.normal_modes) {
            let gauge = endpoint(theta, "gauge_theta")?;
            let gauge = if gauge { Gauge1D::Gmp } else { Gauge1D::Gc };
            let placement = Placement1D { x0: g.x0, polarization: g.polarization };
            return build_generalized_1d(nm, em, gauge, g.n_modes, placement, cutoffs, truncation)
                .map_err(|e| CliError::core("generalized_1d", e));
        }
        let ms = self.modeset()?;
        if let Some(bd) = &s.beyond_dipole {
            let gauge = if endpoint(theta, "gauge_theta")? { BdGauge::Multipolar } else { BdGauge::Coulomb };
            let shape = &bd.profile;
            let prof = shape.profiles(ms, em.position_label()).map_err(|e| CliError::core("beyond_dipole", e))?;
            let quad = SegmentQuadrature { nodes: bd.quadrature_nodes, tol: s.tolerances.quadrature, ..Default::default() };
            return build_beyond_dipole(ms, em, &prof, gauge, cutoffs, quad).map_err(|e| CliError::core("beyond_dipole", e));
        }
        match truncation {
            Truncation::Correct => {
                build_dipole_with(ms, em, theta, cutoffs, &s.longitudinal).map_err(|e| CliError::core("scenario", e))
            }
            Truncation::Naive => build_naive_with(ms, em, theta, cutoffs, s.naive_order, &s.longitudinal)
                .map_err(|e| CliError::core("truncation", e)),
        }
    }

    pub fn detector(&self) -> Result<&DetectorSection, CliError> {
        self.scenario.detector.as_ref().ok_or_else(|| CliError::missing("detector"))
    }
}

impl DetectorSection {
    /// Detector at frequency `omega` (or the configured one).
    pub fn spec(&self, omega: f64) -> Result<DetectorSpec, CliError> {
        DetectorSpec::new(self.omega_d.unwrap_or(omega), self.d_d, self.r_d.clone())
            .map_err(|e| CliError::core("detector", e))
    }
}

/// `true` for θ = 1, `false` for θ = 0; other values are rejected.
fn endpoint(theta: GaugeParam, key: &str) -> Result<bool, CliError> {
    match theta.theta() {
        0.0 => Ok(false),
        1.0 => Ok(true),
        t => Err(CliError::config(key, format!("this builder needs θ = 0 or θ = 1, got {t}"))),
    }
}

fn load_modeset(doc: &serde_json::Value, base_dir: &Path) -> Result<ModeSet, CliError> {
    if let Some(file) = doc.get("file") {
        let rel = file.as_str().ok_or_else(|| CliError::config("modeset.file", "expected a path string"))?;
        let path: PathBuf = base_dir.join(rel);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::config("modeset.file", format!("cannot read {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        return serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::config(&format!("modeset.file:{}", e.path()), e.inner().to_string()));
    }
    serde_path_to_error::deserialize(doc.clone())
        .map_err(|e| CliError::config(&format!("modeset.{}", e.path()), e.inner().to_string()))
}

/// `(χ, ω0)` of a single-mode two-level scenario.
pub fn single_mode_tls_parameters(r: &Resolved) -> Result<(f64, f64), CliError> {
    let ms = r.modeset()?;
    if ms.m() != 1 {
        return Err(CliError::config("modeset", format!("gauge-check needs a single mode, got {}", ms.m())));
    }
    let em = r.emitter()?;
    let omega0 = em.omega0().map_err(|e| CliError::core("emitter", e))?;
    Ok((ms.chi_diag(0), omega0))
}
