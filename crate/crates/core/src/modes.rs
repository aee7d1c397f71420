//! Discrete mode sets: the χ matrix, mode profiles at named points and their
//! χ-weighted derived profiles, together with the constructions that produce
//! them (discretized polariton continuum, quasinormal modes, 1D dielectric
//! normal modes).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::panel_rule;

/// Complex Cartesian 3-vector.
pub type Vec3 = [C64; 3];

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Smallest eigenvalue accepted by [`hermitian_power`].
pub const EIGEN_FLOOR: f64 = 1e-14;

pub fn dot(d: &Vec3, f: &Vec3) -> C64 {
    d[0] * f[0] + d[1] * f[1] + d[2] * f[2]
}

pub fn real_vec3(v: [f64; 3]) -> Vec3 {
    [C64::new(v[0], 0.0), C64::new(v[1], 0.0), C64::new(v[2], 0.0)]
}

/// `M^p` of a Hermitian positive-definite matrix via its eigendecomposition.
/// Eigenvalues below [`EIGEN_FLOOR`] are rejected.
pub fn hermitian_power(m: MatRef<'_, C64>, p: f64) -> Result<Mat<C64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let mut scaled = Mat::<C64>::zeros(n, n);
    for j in 0..n {
        let lam = s[j].re;
        if !(lam > EIGEN_FLOOR) {
            return Err(Error::invalid(format!(
                "matrix is not positive definite (eigenvalue {lam:e} below floor {EIGEN_FLOOR:e})"
            )));
        }
        let f = lam.powf(p);
        for i in 0..n {
            scaled[(i, j)] = u[(i, j)] * f;
        }
    }
    Ok(&scaled * u.adjoint())
}

fn hermitian_residual(m: MatRef<'_, C64>) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `M` discrete modes with their χ matrix and profiles.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ModeSetDoc", into = "ModeSetDoc")]
pub struct ModeSet {
    chi: Mat<C64>,
    profiles: BTreeMap<String, Vec<Vec3>>,
    derived: BTreeMap<String, Vec<Vec3>>,
}

impl ModeSet {
    /// Validates χ (Hermitian at 1e-12, positive definite) and computes the
    /// derived profiles `f'_μ = Σ_ν χ*_{μν} / √(χ_μμ χ_νν) f_ν`.
    pub fn new(chi: Mat<C64>, profiles: BTreeMap<String, Vec<Vec3>>) -> Result<Self> {
        let m = chi.nrows();
        if chi.ncols() != m {
            return Err(Error::DimensionMismatch(format!("chi is {}x{}", m, chi.ncols())));
        }
        if (0..m).any(|j| (0..m).any(|i| !chi[(i, j)].is_finite())) {
            return Err(Error::NonFinite);
        }
        let dev = hermitian_residual(chi.as_ref());
        if dev >= 1e-12 {
            return Err(Error::NotHermitian(dev));
        }
        let mut chi = chi;
        for j in 0..m {
            for i in 0..j {
                let avg = (chi[(i, j)] + chi[(j, i)].conj()) * 0.5;
                chi[(i, j)] = avg;
                chi[(j, i)] = avg.conj();
            }
            chi[(j, j)] = C64::new(chi[(j, j)].re, 0.0);
        }
        if m > 0 {
            let ev = chi
                .as_ref()
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| Error::Eigen(format!("{e:?}")))?;
            if !(ev[0] > 0.0) {
                return Err(Error::invalid(format!("chi is not positive definite (smallest eigenvalue {:e})", ev[0])));
            }
        }
        for (label, fs) in &profiles {
            if fs.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "profile `{label}` has {} entries for {m} modes",
                    fs.len()
                )));
            }
        }
        let derived = profiles
            .iter()
            .map(|(label, fs)| (label.clone(), derive_profiles(chi.as_ref(), fs)))
            .collect();
        Ok(ModeSet { chi, profiles, derived })
    }

    /// Modes with `χ = diag(freqs)`.
    pub fn diagonal(freqs: &[f64], profiles: BTreeMap<String, Vec<Vec3>>) -> Result<Self> {
        let m = freqs.len();
        let chi = Mat::from_fn(m, m, |i, j| if i == j { C64::new(freqs[i], 0.0) } else { ZERO });
        Self::new(chi, profiles)
    }

    pub fn m(&self) -> usize {
        self.chi.nrows()
    }

    pub fn chi(&self) -> MatRef<'_, C64> {
        self.chi.as_ref()
    }

    pub fn chi_diag(&self, mu: usize) -> f64 {
        self.chi[(mu, mu)].re
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }

    pub fn profile(&self, label: &str) -> Result<&[Vec3]> {
        self.profiles
            .get(label)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingProfile(label.to_string()))
    }

    pub fn derived_profile(&self, label: &str) -> Result<&[Vec3]> {
        self.derived
            .get(label)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingProfile(label.to_string()))
    }

    /// Largest off-diagonal modulus of χ.
    pub fn off_diagonal_max(&self) -> f64 {
        let m = self.m();
        let mut out = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    out = out.max(self.chi[(i, j)].norm());
                }
            }
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn derive_profiles(chi: MatRef<'_, C64>, fs: &[Vec3]) -> Vec<Vec3> {
    let m = chi.nrows();
    (0..m)
        .map(|mu| {
            let mut acc = [ZERO; 3];
            for nu in 0..m {
                let w = chi[(mu, nu)].conj() / (chi[(mu, mu)].re * chi[(nu, nu)].re).sqrt();
                for c in 0..3 {
                    acc[c] += w * fs[nu][c];
                }
            }
            acc
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ModeSetDoc {
    chi: Vec<Vec<C64>>,
    #[serde(default)]
    profiles: BTreeMap<String, Vec<Vec3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    derived_profiles: Option<BTreeMap<String, Vec<Vec3>>>,
}

impl TryFrom<ModeSetDoc> for ModeSet {
    type Error = Error;

    fn try_from(doc: ModeSetDoc) -> Result<Self> {
        let m = doc.chi.len();
        if let Some(row) = doc.chi.iter().position(|r| r.len() != m) {
            return Err(Error::DimensionMismatch(format!("chi row {row} does not have {m} entries")));
        }
        let chi = Mat::from_fn(m, m, |i, j| doc.chi[i][j]);
        let ms = ModeSet::new(chi, doc.profiles)?;
        if let Some(given) = doc.derived_profiles {
            for (label, fs) in &given {
                let ours = ms.derived_profile(label)?;
                let mismatch = fs.len() != ours.len()
                    || fs
                        .iter()
                        .zip(ours)
                        .any(|(a, b)| (0..3).any(|c| (a[c] - b[c]).norm() > 1e-10 * (1.0 + b[c].norm())));
                if mismatch {
                    return Err(Error::invalid(format!(
                        "derived_profiles for `{label}` disagree with those computed from chi"
                    )));
                }
            }
        }
        Ok(ms)
    }
}

impl From<ModeSet> for ModeSetDoc {
    fn from(ms: ModeSet) -> Self {
        let m = ms.m();
        ModeSetDoc {
            chi: (0..m).map(|i| (0..m).map(|j| ms.chi[(i, j)]).collect()).collect(),
            profiles: ms.profiles,
            derived_profiles: Some(ms.derived),
        }
    }
}

/// One node of a discretized polariton continuum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridNode {
    pub label: String,
    pub omega: f64,
    pub weight: f64,
}

/// Weighted node list with `M` projection vectors `L_μ` over it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolaritonGrid {
    pub nodes: Vec<GridNode>,
    /// `projections[μ][k] = L_μ(k)`.
    pub projections: Vec<Vec<C64>>,
}

impl PolaritonGrid {
    pub fn new(nodes: Vec<GridNode>, projections: Vec<Vec<C64>>) -> Result<Self> {
        if let Some(n) = nodes.iter().find(|n| !(n.omega > 0.0)) {
            return Err(Error::invalid(format!("node `{}` has non-positive frequency {}", n.label, n.omega)));
        }
        if let Some(n) = nodes.iter().find(|n| !(n.weight > 0.0)) {
            return Err(Error::invalid(format!("node `{}` has non-positive weight {}", n.label, n.weight)));
        }
        let k = nodes.len();
        if let Some(mu) = projections.iter().position(|l| l.len() != k) {
            return Err(Error::DimensionMismatch(format!("projection {mu} does not have {k} entries")));
        }
        Ok(PolaritonGrid { nodes, projections })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn m(&self) -> usize {
        self.projections.len()
    }

    /// Same grid keeping only the first `m` projection vectors.
    pub fn leading(&self, m: usize) -> Self {
        PolaritonGrid { nodes: self.nodes.clone(), projections: self.projections[..m.min(self.m())].to_vec() }
    }

    /// `Σ_k w_k g(ω_k) L_μ(k) L*_ν(k)`.
    fn weighted_gram(&self, g: impl Fn(f64) -> f64) -> Mat<C64> {
        let m = self.m();
        let mut out = Mat::<C64>::zeros(m, m);
        for (k, node) in self.nodes.iter().enumerate() {
            let w = node.weight * g(node.omega);
            for mu in 0..m {
                let lm = self.projections[mu][k] * w;
                for nu in 0..m {
                    out[(mu, nu)] += lm * self.projections[nu][k].conj();
                }
            }
        }
        out
    }

    /// `max |Σ_k w_k L_μ(k) L*_ν(k) − δ_μν|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let gram = self.weighted_gram(|_| 1.0);
        let m = self.m();
        let mut out = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                out = out.max((gram[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        out
    }
}

/// `χ_μν = Σ_k w_k ω_k L_μ(k) L*_ν(k)`, with `profile_points` mapping each
/// label to the `M` profile vectors `f_μ` there.
pub fn build_from_grid(grid: &PolaritonGrid, profile_points: BTreeMap<String, Vec<Vec3>>) -> Result<ModeSet> {
    let res = grid.orthonormality_residual();
    if res > 1e-8 {
        return Err(Error::invalid(format!("projection vectors are not orthonormal (residual {res:e})")));
    }
    let mut chi = grid.weighted_gram(|w| w);
    let m = grid.m();
    for j in 0..m {
        for i in 0..j {
            let avg = (chi[(i, j)] + chi[(j, i)].conj()) * 0.5;
            chi[(i, j)] = avg;
            chi[(j, i)] = avg.conj();
        }
        chi[(j, j)] = C64::new(chi[(j, j)].re, 0.0);
    }
    ModeSet::new(chi, profile_points)
}

/// `‖B†B − I‖_max` with `B_μk = √w_k L_μ(k)`: how far the kept modes are from
/// resolving the identity on the grid.
pub fn completeness_residual(ms: &ModeSet, grid: &PolaritonGrid) -> Result<f64> {
    if ms.m() != grid.m() {
        return Err(Error::DimensionMismatch(format!(
            "mode set has {} modes, grid carries {} projections",
            ms.m(),
            grid.m()
        )));
    }
    let chi_grid = grid.weighted_gram(|w| w);
    let scale = 1.0 + ms.chi().norm_max();
    for i in 0..ms.m() {
        for j in 0..ms.m() {
            if (chi_grid[(i, j)] - ms.chi()[(i, j)]).norm() > 1e-10 * scale {
                return Err(Error::invalid("mode set was not built from this grid"));
            }
        }
    }
    let k = grid.len();
    let sw: Vec<f64> = grid.nodes.iter().map(|n| n.weight.sqrt()).collect();
    let mut out = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            let mut acc = ZERO;
            for l in &grid.projections {
                acc += (l[a] * sw[a]).conj() * l[b] * sw[b];
            }
            let target = if a == b { 1.0 } else { 0.0 };
            out = out.max((acc - C64::new(target, 0.0)).norm());
        }
    }
    Ok(out)
}

/// Overlap spectrum `S_μν(ω)` of a QNM set.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapSpectrum {
    /// Frequency-independent Hermitian matrix, row-major.
    Constant(Vec<Vec<C64>>),
    /// Samples at ascending frequencies, linearly interpolated and held
    /// constant outside the sampled range.
    Tabulated { freqs: Vec<f64>, samples: Vec<Vec<Vec<C64>>> },
}

impl OverlapSpectrum {
    fn at(&self, omega: f64) -> Mat<C64> {
        let rows = |s: &Vec<Vec<C64>>| Mat::from_fn(s.len(), s.len(), |i, j| s[i][j]);
        match self {
            OverlapSpectrum::Constant(s) => rows(s),
            OverlapSpectrum::Tabulated { freqs, samples } => {
                let n = freqs.len();
                if omega <= freqs[0] {
                    return rows(&samples[0]);
                }
                if omega >= freqs[n - 1] {
                    return rows(&samples[n - 1]);
                }
                let hi = freqs.partition_point(|&f| f <= omega).min(n - 1);
                let lo = hi - 1;
                let t = (omega - freqs[lo]) / (freqs[hi] - freqs[lo]);
                let (a, b) = (&samples[lo], &samples[hi]);
                Mat::from_fn(a.len(), a.len(), |i, j| a[i][j] * (1.0 - t) + b[i][j] * t)
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            OverlapSpectrum::Constant(s) => s.len(),
            OverlapSpectrum::Tabulated { samples, .. } => samples.first().map_or(0, Vec::len),
        }
    }
}

/// Quasinormal modes `ω̃_μ = ω_μ − iγ_μ` and their overlap spectrum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QnmSet {
    pub omega: Vec<f64>,
    pub gamma: Vec<f64>,
    pub overlap: OverlapSpectrum,
}

impl QnmSet {
    pub fn new(omega: Vec<f64>, gamma: Vec<f64>, overlap: OverlapSpectrum) -> Result<Self> {
        let q = QnmSet { omega, gamma, overlap };
        q.validate()?;
        Ok(q)
    }

    /// Single mode of quality factor `q = ω/(2γ)` with `S(ω) = 1`.
    pub fn single_constant(omega: f64, q: f64) -> Result<Self> {
        Self::new(vec![omega], vec![omega / (2.0 * q)], OverlapSpectrum::Constant(vec![vec![C64::new(1.0, 0.0)]]))
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.omega.len();
        if m == 0 || self.gamma.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} QNM frequencies and {} damping rates",
                m,
                self.gamma.len()
            )));
        }
        for mu in 0..m {
            if !(self.omega[mu] > 0.0) || !(self.gamma[mu] > 0.0) || !self.quality(mu).is_finite() {
                return Err(Error::invalid(format!(
                    "QNM {mu} needs omega > 0 and gamma > 0 (got {}, {})",
                    self.omega[mu], self.gamma[mu]
                )));
            }
        }
        if self.overlap.dim() != m {
            return Err(Error::DimensionMismatch(format!("overlap spectrum is {}-dimensional", self.overlap.dim())));
        }
        let check = |s: &Vec<Vec<C64>>| -> Result<()> {
            if s.iter().any(|r| r.len() != m) {
                return Err(Error::DimensionMismatch("overlap matrix is not square".into()));
            }
            let mat = Mat::from_fn(m, m, |i, j| s[i][j]);
            let dev = hermitian_residual(mat.as_ref());
            if dev >= 1e-12 {
                return Err(Error::NotHermitian(dev));
            }
            Ok(())
        };
        match &self.overlap {
            OverlapSpectrum::Constant(s) => check(s)?,
            OverlapSpectrum::Tabulated { freqs, samples } => {
                if freqs.is_empty() || freqs.len() != samples.len() {
                    return Err(Error::DimensionMismatch("tabulated overlap needs one sample per frequency".into()));
                }
                if freqs.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::invalid("tabulated overlap frequencies must be strictly ascending"));
                }
                for s in samples {
                    check(s)?;
                }
            }
        }
        Ok(())
    }

    pub fn quality(&self, mu: usize) -> f64 {
        self.omega[mu] / (2.0 * self.gamma[mu])
    }
}

/// Quadrature nodes and weights on the frequency axis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Default half-width of the frequency window, in units of each γ_μ.
pub const DEFAULT_WINDOW_GAMMAS: f64 = 1000.0;

impl FrequencyGrid {
    /// Gauss–Legendre panels graded around each resonance: breakpoints at
    /// `ω_μ ± γ_μ·{0, 1, 2, 4, …}` out to `window_gammas·γ_μ`, clipped to
    /// `ω > 0`.
    pub fn lorentzian_panels(qnm: &QnmSet, window_gammas: f64, points_per_panel: usize) -> Result<Self> {
        qnm.validate()?;
        if !(window_gammas >= 3.0) {
            return Err(Error::invalid("frequency window must span at least 3 linewidths"));
        }
        if points_per_panel < 2 {
            return Err(Error::invalid("need at least 2 points per panel"));
        }
        let m = qnm.omega.len();
        let lo = (0..m).map(|mu| qnm.omega[mu] - window_gammas * qnm.gamma[mu]).fold(f64::INFINITY, f64::min).max(0.0);
        let hi = (0..m).map(|mu| qnm.omega[mu] + window_gammas * qnm.gamma[mu]).fold(f64::NEG_INFINITY, f64::max);
        let mut breaks = vec![lo, hi];
        for mu in 0..m {
            let (w, g) = (qnm.omega[mu], qnm.gamma[mu]);
            breaks.push(w);
            let mut step = 1.0;
            while step < window_gammas {
                breaks.push(w - step * g);
                breaks.push(w + step * g);
                step *= 2.0;
            }
            breaks.push(w - window_gammas * g);
            breaks.push(w + window_gammas * g);
        }
        breaks.retain(|&b| b >= lo && b <= hi);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1.0));
        let (nodes, weights) = panel_rule(&breaks, points_per_panel);
        Ok(FrequencyGrid { nodes, weights })
    }
}

/// χ obtained from a QNM set, with the polariton grid that realizes it.
#[derive(Clone, Debug)]
pub struct QnmChi {
    pub modes: ModeSet,
    pub grid: PolaritonGrid,
    /// `|χ_μμ − ω_μ| / ω_μ`.
    pub deviations: Vec<f64>,
}

/// Builds orthonormal projections `L = S^{-1/2} g` from the QNM pole
/// functions `g_μ(ω) = √(ω_μ/2π) C_μc(ω) / (ω − ω̃_μ)`, where
/// `S_μν(ω) = Σ_c C_μc C*_νc`, then χ by the weighted Gram sum.
pub fn chi_from_qnm(qnm: &QnmSet, freq: &FrequencyGrid) -> Result<QnmChi> {
    qnm.validate()?;
    let m = qnm.omega.len();
    if freq.nodes.len() != freq.weights.len() || freq.nodes.is_empty() {
        return Err(Error::DimensionMismatch("frequency grid nodes and weights differ in length".into()));
    }
    check_resolution(qnm, freq)?;

    let mut nodes = Vec::new();
    let mut raw: Vec<Vec<C64>> = vec![Vec::new(); m];
    for (k, (&w, &wt)) in freq.nodes.iter().zip(&freq.weights).enumerate() {
        if !(w > 0.0) || !(wt > 0.0) {
            continue;
        }
        let factor = overlap_factor(&qnm.overlap.at(w))?;
        for (c, column) in factor.iter().enumerate() {
            nodes.push(GridNode { label: format!("w{k}c{c}"), omega: w, weight: wt });
            for mu in 0..m {
                let pole = C64::new(w - qnm.omega[mu], qnm.gamma[mu]);
                raw[mu].push(column[mu] * (qnm.omega[mu] / (2.0 * PI)).sqrt() / pole);
            }
        }
    }
    let raw_grid = PolaritonGrid::new(nodes, raw)?;
    let s = raw_grid.weighted_gram(|_| 1.0);
    let s_inv_half = hermitian_power(s.as_ref(), -0.5)?;
    let k = raw_grid.len();
    let projections: Vec<Vec<C64>> = (0..m)
        .map(|mu| {
            (0..k)
                .map(|node| (0..m).map(|nu| s_inv_half[(mu, nu)] * raw_grid.projections[nu][node]).sum())
                .collect()
        })
        .collect();
    let grid = PolaritonGrid::new(raw_grid.nodes, projections)?;
    let modes = build_from_grid(&grid, BTreeMap::new())?;
    let deviations = (0..m).map(|mu| (modes.chi_diag(mu) - qnm.omega[mu]).abs() / qnm.omega[mu]).collect();
    Ok(QnmChi { modes, grid, deviations })
}

/// Columns `c` of `C` with `S = C C†`, dropping null directions.
fn overlap_factor(s: &Mat<C64>) -> Result<Vec<Vec<C64>>> {
    let m = s.nrows();
    let diagonal = (0..m).all(|i| (0..m).all(|j| i == j || s[(i, j)] == ZERO));
    if diagonal {
        let mut cols = Vec::new();
        for c in 0..m {
            let v = s[(c, c)].re;
            if v < -1e-12 {
                return Err(Error::invalid(format!("overlap spectrum has negative weight {v:e}")));
            }
            if v > 0.0 {
                let mut col = vec![ZERO; m];
                col[c] = C64::new(v.sqrt(), 0.0);
                cols.push(col);
            }
        }
        return Ok(cols);
    }
    let evd = s.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let lam = evd.S();
    let u = evd.U();
    let top = (0..m).map(|i| lam[i].re.abs()).fold(0.0, f64::max);
    let mut cols = Vec::new();
    for c in 0..m {
        let l = lam[c].re;
        if l < -1e-12 * top.max(1.0) {
            return Err(Error::invalid(format!("overlap spectrum is not positive semidefinite ({l:e})")));
        }
        if l > 1e-14 * top {
            let r = l.sqrt();
            cols.push((0..m).map(|i| u[(i, c)] * r).collect());
        }
    }
    Ok(cols)
}

fn check_resolution(qnm: &QnmSet, freq: &FrequencyGrid) -> Result<()> {
    let lo = freq.nodes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = freq.nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for mu in 0..qnm.omega.len() {
        let (w, g) = (qnm.omega[mu], qnm.gamma[mu]);
        let near = freq.nodes.iter().filter(|&&x| (x - w).abs() <= g).count();
        if near < 20 {
            return Err(Error::invalid(format!(
                "frequency grid has {near} nodes within one linewidth of QNM {mu}; need at least 10 per gamma"
            )));
        }
        if hi < w + 3.0 * g || lo > (w - 3.0 * g).max(0.0) + 0.5 * g {
            return Err(Error::invalid(format!("frequency grid does not span several linewidths around QNM {mu}")));
        }
    }
    Ok(())
}

/// Closed 1D dielectric on `[0, L]` sampled at `N_x` points including both
/// ends.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "Dielectric1DDoc", into = "Dielectric1DDoc")]
pub struct Dielectric1D {
    length: f64,
    epsilon: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Dielectric1DDoc {
    length: f64,
    n_x: usize,
    epsilon: Vec<f64>,
}

impl TryFrom<Dielectric1DDoc> for Dielectric1D {
    type Error = Error;
    fn try_from(doc: Dielectric1DDoc) -> Result<Self> {
        if doc.epsilon.len() != doc.n_x {
            return Err(Error::DimensionMismatch(format!(
                "n_x = {} but epsilon has {} samples",
                doc.n_x,
                doc.epsilon.len()
            )));
        }
        Dielectric1D::new(doc.length, doc.epsilon)
    }
}

impl From<Dielectric1D> for Dielectric1DDoc {
    fn from(d: Dielectric1D) -> Self {
        Dielectric1DDoc { length: d.length, n_x: d.epsilon.len(), epsilon: d.epsilon }
    }
}

impl Dielectric1D {
    pub fn new(length: f64, epsilon: Vec<f64>) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::invalid(format!("length must be positive, got {length}")));
        }
        if epsilon.len() < 16 {
            return Err(Error::invalid(format!("need at least 16 grid points, got {}", epsilon.len())));
        }
        if let Some(k) = epsilon.iter().position(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::invalid(format!("epsilon[{k}] = {} is not positive", epsilon[k])));
        }
        Ok(Dielectric1D { length, epsilon })
    }

    /// Samples `eps(x)` at `n_x` equally spaced points.
    pub fn from_fn(length: f64, n_x: usize, eps: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = length / (n_x.max(2) - 1) as f64;
        Self::new(length, (0..n_x).map(|k| eps(k as f64 * dx)).collect())
    }

    pub fn uniform(length: f64, n_x: usize, eps: f64) -> Result<Self> {
        Self::from_fn(length, n_x, |_| eps)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_x(&self) -> usize {
        self.epsilon.len()
    }

    pub fn dx(&self) -> f64 {
        self.length / (self.n_x() - 1) as f64
    }

    pub fn epsilon(&self) -> &[f64] {
        &self.epsilon
    }
}

/// Normal modes `h_μ` of a closed 1D dielectric, sampled on the full grid
/// (boundary samples are zero) and normalised so `Σ_k Δx ε_k h_μ(x_k)² = 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalModeSet1D {
    pub length: f64,
    pub dx: f64,
    pub epsilon: Vec<f64>,
    pub omegas: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
}

/// Second-order finite differences for `−h'' = ω² ε h` with `h = 0` at both
/// ends (c = 1).
pub fn solve_dielectric_1d(d: &Dielectric1D, n_modes: usize) -> Result<NormalModeSet1D> {
    let n_x = d.n_x();
    let n = n_x - 2;
    if n_modes == 0 || n_modes > n {
        return Err(Error::invalid(format!("n_modes = {n_modes} must be in 1..={n}")));
    }
    let dx = d.dx();
    let eps = &d.epsilon[1..n_x - 1];
    let inv_h2 = 1.0 / (dx * dx);
    let a = Mat::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * inv_h2 / eps[i]
        } else if i.abs_diff(j) == 1 {
            -inv_h2 / (eps[i] * eps[j]).sqrt()
        } else {
            0.0
        }
    });
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let mut omegas = Vec::with_capacity(n_modes);
    let mut profiles = Vec::with_capacity(n_modes);
    for mu in 0..n_modes {
        let lam = s[mu];
        if !(lam > 0.0) {
            return Err(Error::Invariant(format!("non-positive Helmholtz eigenvalue {lam:e}")));
        }
        omegas.push(lam.sqrt());
        let mut h = vec![0.0; n_x];
        for i in 0..n {
            h[i + 1] = u[(i, mu)] / (eps[i] * dx).sqrt();
        }
        let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(first) = h.iter().find(|v| v.abs() > 1e-8 * peak) {
            if *first < 0.0 {
                h.iter_mut().for_each(|v| *v = -*v);
            }
        }
        profiles.push(h);
    }
    Ok(NormalModeSet1D { length: d.length, dx, epsilon: d.epsilon.clone(), omegas, profiles })
}

impl NormalModeSet1D {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// `max |Σ_k Δx ε_k h_μ h_ν − δ_μν|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let m = self.len();
        let mut out = 0.0f64;
        for a in 0..m {
            for b in 0..m {
                let s: f64 = (0..self.epsilon.len())
                    .map(|k| self.dx * self.epsilon[k] * self.profiles[a][k] * self.profiles[b][k])
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                out = out.max((s - target).abs());
            }
        }
        out
    }

    /// Linear interpolation of `h_μ` at `x`.
    pub fn value_at(&self, mu: usize, x: f64) -> Result<f64> {
        if !(0.0..=self.length).contains(&x) {
            return Err(Error::invalid(format!("position {x} lies outside [0, {}]", self.length)));
        }
        let h = &self.profiles[mu];
        let t = x / self.dx;
        let k = (t.floor() as usize).min(h.len() - 2);
        let frac = t - k as f64;
        Ok(h[k] * (1.0 - frac) + h[k + 1] * frac)
    }

    /// Mode set with `χ = diag(ω)` and profiles `h_μ(x) ê` at the named
    /// points, keeping the lowest `n_modes` modes.
    pub fn to_mode_set(&self, n_modes: usize, points: &[(&str, f64)], polarization: [f64; 3]) -> Result<ModeSet> {
        if n_modes == 0 || n_modes > self.len() {
            return Err(Error::invalid(format!("n_modes = {n_modes} exceeds the {} solved modes", self.len())));
        }
        let mut profiles = BTreeMap::new();
        for (label, x) in points {
            let fs = (0..n_modes)
                .map(|mu| {
                    let h = self.value_at(mu, *x)?;
                    Ok(real_vec3([h * polarization[0], h * polarization[1], h * polarization[2]]))
                })
                .collect::<Result<Vec<_>>>()?;
            profiles.insert(label.to_string(), fs);
        }
        ModeSet::diagonal(&self.omegas[..n_modes], profiles)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn indicator_grid(freqs: &[f64], weights: &[f64]) -> PolaritonGrid {
        let nodes = freqs
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(k, (&omega, &weight))| GridNode { label: format!("n{k}"), omega, weight })
            .collect();
        let k = freqs.len();
        let projections = (0..k)
            .map(|mu| (0..k).map(|j| if j == mu { c(1.0 / weights[mu].sqrt(), 0.0) } else { ZERO }).collect())
            .collect();
        PolaritonGrid::new(nodes, projections).unwrap()
    }

    /// Two Lorentzian-shaped vectors on a frequency grid, orthonormalised by
    /// hand-written Gram–Schmidt.
    fn lorentzian_grid(k: usize) -> PolaritonGrid {
        let w: Vec<f64> = (0..k).map(|i| 0.5 + i as f64 / k as f64).collect();
        let wt = 1.0 / k as f64;
        let nodes: Vec<GridNode> =
            w.iter().enumerate().map(|(i, &omega)| GridNode { label: format!("n{i}"), omega, weight: wt }).collect();
        let lor = |w0: f64, g: f64, ph: f64| -> Vec<C64> {
            w.iter().map(|&x| C64::from_polar(1.0, ph * x) / C64::new(x - w0, g)).collect()
        };
        let ip = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x * y.conj() * wt).sum() };
        let mut l1 = lor(0.9, 0.1, 0.3);
        let n1 = ip(&l1, &l1).re.sqrt();
        l1.iter_mut().for_each(|x| *x /= n1);
        let mut l2 = lor(1.1, 0.15, -0.7);
        let p = ip(&l2, &l1);
        for (a, b) in l2.iter_mut().zip(&l1) {
            *a -= p * b;
        }
        let n2 = ip(&l2, &l2).re.sqrt();
        l2.iter_mut().for_each(|x| *x /= n2);
        PolaritonGrid::new(nodes, vec![l1, l2]).unwrap()
    }

    #[test]
    fn delta_projection_gives_unit_chi() {
        let grid = PolaritonGrid::new(
            vec![GridNode { label: "a".into(), omega: 1.0, weight: 0.25 }, GridNode { label: "b".into(), omega: 3.0, weight: 1.0 }],
            vec![vec![c(2.0, 0.0), ZERO]],
        )
        .unwrap();
        let ms = build_from_grid(&grid, BTreeMap::new()).unwrap();
        assert!((ms.chi()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn indicator_basis_gives_diagonal_chi() {
        let grid = indicator_grid(&[0.5, 1.0, 2.0], &[0.1, 0.2, 0.3]);
        let ms = build_from_grid(&grid, BTreeMap::new()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { [0.5, 1.0, 2.0][i] } else { 0.0 };
                assert!((ms.chi()[(i, j)] - c(expected, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn lorentzian_chi_matches_direct_sum() {
        let grid = lorentzian_grid(400);
        let ms = build_from_grid(&grid, BTreeMap::new()).unwrap();
        // direct oracle, written independently of weighted_gram
        let mut oracle = [[ZERO; 2]; 2];
        for (k, node) in grid.nodes.iter().enumerate() {
            for (mu, row) in oracle.iter_mut().enumerate() {
                for (nu, entry) in row.iter_mut().enumerate() {
                    *entry += grid.projections[mu][k] * grid.projections[nu][k].conj() * (node.weight * node.omega);
                }
            }
        }
        for mu in 0..2 {
            for nu in 0..2 {
                assert!((ms.chi()[(mu, nu)] - oracle[mu][nu]).norm() < 1e-12);
            }
        }
        assert!(ms.off_diagonal_max() > 1e-3);
    }

    #[test]
    fn non_orthonormal_grid_rejected() {
        let grid = PolaritonGrid::new(
            vec![GridNode { label: "a".into(), omega: 1.0, weight: 1.0 }],
            vec![vec![c(1.1, 0.0)]],
        )
        .unwrap();
        assert!(build_from_grid(&grid, BTreeMap::new()).is_err());
        assert!(PolaritonGrid::new(vec![GridNode { label: "z".into(), omega: 0.0, weight: 1.0 }], vec![]).is_err());
    }

    #[test]
    fn derived_profiles_reduce_for_diagonal_chi() {
        let mut profiles = BTreeMap::new();
        profiles.insert("x0".to_string(), vec![real_vec3([1.0, 0.0, 0.0]), real_vec3([0.0, 2.0, 0.0])]);
        let ms = ModeSet::diagonal(&[1.0, 2.0], profiles).unwrap();
        assert_eq!(ms.profile("x0").unwrap(), ms.derived_profile("x0").unwrap());
    }

    #[test]
    fn derived_profiles_oracle() {
        let chi = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(1.0, 0.0),
            (1, 1) => c(4.0, 0.0),
            (0, 1) => c(0.3, 0.2),
            _ => c(0.3, -0.2),
        });
        let f = vec![real_vec3([1.0, 0.0, 0.0]), [ZERO, c(0.0, 1.0), ZERO]];
        let mut profiles = BTreeMap::new();
        profiles.insert("p".to_string(), f.clone());
        let ms = ModeSet::new(chi, profiles).unwrap();
        let fp = ms.derived_profile("p").unwrap();
        // f'_0 = f_0 + (0.3-0.2i)/2 f_1, f'_1 = (0.3+0.2i)/2 f_0 + f_1
        let w01 = c(0.3, -0.2) / 2.0;
        let w10 = c(0.3, 0.2) / 2.0;
        assert!((fp[0][0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((fp[0][1] - w01 * c(0.0, 1.0)).norm() < 1e-15);
        assert!((fp[1][0] - w10).norm() < 1e-15);
        assert!((fp[1][1] - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn mode_set_rejects_bad_chi() {
        let not_pd = Mat::from_fn(2, 2, |i, j| if i == j { c(1.0, 0.0) } else { c(2.0, 0.0) });
        assert!(ModeSet::new(not_pd, BTreeMap::new()).is_err());
        let not_herm = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { c(0.1, 0.0) } else if i == j { c(1.0, 0.0) } else { ZERO });
        assert!(matches!(ModeSet::new(not_herm, BTreeMap::new()), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn json_round_trip() {
        let grid = lorentzian_grid(50);
        let mut profiles = BTreeMap::new();
        profiles.insert("x0".to_string(), vec![real_vec3([1.0, 0.0, 0.0]), [c(0.5, 0.5), ZERO, ZERO]]);
        let ms = build_from_grid(&grid, profiles).unwrap();
        let text = ms.to_json().unwrap();
        let back = ModeSet::from_json(&text).unwrap();
        assert_eq!(ms.chi(), back.chi());
        assert_eq!(ms.derived_profile("x0").unwrap(), back.derived_profile("x0").unwrap());
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["derived_profiles"]["x0"][0][0][0] = serde_json::json!(7.0);
        assert!(ModeSet::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn completeness_limits() {
        let grid = indicator_grid(&[0.5, 1.0, 2.0, 3.0], &[0.1, 0.2, 0.3, 0.4]);
        let full = build_from_grid(&grid, BTreeMap::new()).unwrap();
        assert!(completeness_residual(&full, &grid).unwrap() < 1e-10);
        let empty = grid.leading(0);
        let ms0 = build_from_grid(&empty, BTreeMap::new()).unwrap();
        assert!((completeness_residual(&ms0, &empty).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn completeness_after_removal_bounds_removed_weight() {
        // rotate the indicator basis so removed weight is spread over nodes
        let k = 4;
        let weights = [0.1, 0.2, 0.3, 0.4];
        let nodes: Vec<GridNode> = (0..k)
            .map(|i| GridNode { label: format!("n{i}"), omega: 1.0 + i as f64, weight: weights[i] })
            .collect();
        // orthonormal columns of a 4x4 Hadamard-like unitary, scaled by 1/√w
        let h = [[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
        let projections: Vec<Vec<C64>> =
            (0..k).map(|mu| (0..k).map(|j| c(h[mu][j] / 2.0 / weights[j].sqrt(), 0.2 * mu as f64 * 0.0)).collect()).collect();
        let grid = PolaritonGrid::new(nodes, projections).unwrap();
        let partial = grid.leading(k - 1);
        let ms = build_from_grid(&partial, BTreeMap::new()).unwrap();
        let res = completeness_residual(&ms, &partial).unwrap();
        let removed = &grid.projections[k - 1];
        let largest = (0..k).map(|j| weights[j] * removed[j].norm_sqr()).fold(0.0, f64::max);
        assert!(res >= largest - 1e-14, "{res} < {largest}");
        let mismatched = build_from_grid(&grid, BTreeMap::new()).unwrap();
        assert!(completeness_residual(&mismatched, &partial).is_err());
    }

    /// Closed form for a single Lorentzian with constant S on `[a, b]`:
    /// `χ = ω₁ + ½ ln(((b−ω₁)²+γ²)/((a−ω₁)²+γ²)) / I₀`,
    /// `I₀ = (atan((b−ω₁)/γ) − atan((a−ω₁)/γ)) / γ`.
    fn lorentzian_moment_oracle(w1: f64, g: f64, a: f64, b: f64) -> f64 {
        let i0 = (((b - w1) / g).atan() - ((a - w1) / g).atan()) / g;
        let log = (((b - w1).powi(2) + g * g) / ((a - w1).powi(2) + g * g)).ln();
        w1 + 0.5 * log / i0
    }

    #[test]
    fn qnm_chi_matches_lorentzian_oracle() {
        for q in [10.0, 50.0, 500.0] {
            let qnm = QnmSet::single_constant(1.0, q).unwrap();
            let grid = FrequencyGrid::lorentzian_panels(&qnm, DEFAULT_WINDOW_GAMMAS, 16).unwrap();
            let out = chi_from_qnm(&qnm, &grid).unwrap();
            let g = qnm.gamma[0];
            let a = (1.0 - DEFAULT_WINDOW_GAMMAS * g).max(0.0);
            let b = 1.0 + DEFAULT_WINDOW_GAMMAS * g;
            let oracle = lorentzian_moment_oracle(1.0, g, a, b);
            assert!((out.modes.chi_diag(0) - oracle).abs() < 1e-10, "Q={q}");
        }
        let qnm = QnmSet::single_constant(1.0, 500.0).unwrap();
        let grid = FrequencyGrid::lorentzian_panels(&qnm, DEFAULT_WINDOW_GAMMAS, 16).unwrap();
        assert!(chi_from_qnm(&qnm, &grid).unwrap().deviations[0] < 1e-2);
    }

    #[test]
    fn qnm_high_q_limit() {
        let qnm = QnmSet::single_constant(2.0, 1e6).unwrap();
        let grid = FrequencyGrid::lorentzian_panels(&qnm, DEFAULT_WINDOW_GAMMAS, 16).unwrap();
        assert!(chi_from_qnm(&qnm, &grid).unwrap().deviations[0] < 1e-5);
    }

    #[test]
    fn qnm_deviation_decreases_with_q() {
        let devs: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&q| {
                let qnm = QnmSet::single_constant(1.0, q).unwrap();
                let grid = FrequencyGrid::lorentzian_panels(&qnm, DEFAULT_WINDOW_GAMMAS, 16).unwrap();
                chi_from_qnm(&qnm, &grid).unwrap().deviations[0]
            })
            .collect();
        assert!(devs[0] > devs[1] && devs[1] > devs[2], "{devs:?}");
    }

    #[test]
    fn decoupled_qnms_give_diagonal_chi() {
        let s = vec![vec![c(1.0, 0.0), ZERO], vec![ZERO, c(2.0, 0.0)]];
        let qnm = QnmSet::new(vec![1.0, 1.3], vec![0.01, 0.02], OverlapSpectrum::Constant(s)).unwrap();
        let grid = FrequencyGrid::lorentzian_panels(&qnm, 200.0, 16).unwrap();
        let out = chi_from_qnm(&qnm, &grid).unwrap();
        assert!(out.modes.off_diagonal_max() < 1e-12);
    }

    #[test]
    fn overlapping_qnms_couple() {
        let s = vec![vec![c(1.0, 0.0), c(0.5, 0.1)], vec![c(0.5, -0.1), c(1.0, 0.0)]];
        let qnm = QnmSet::new(vec![1.0, 1.05], vec![0.02, 0.03], OverlapSpectrum::Constant(s)).unwrap();
        let grid = FrequencyGrid::lorentzian_panels(&qnm, 200.0, 16).unwrap();
        let out = chi_from_qnm(&qnm, &grid).unwrap();
        assert!(out.modes.off_diagonal_max() > 1e-4);
        assert!(out.grid.orthonormality_residual() < 1e-10);
    }

    #[test]
    fn qnm_coarse_grid_rejected() {
        let qnm = QnmSet::single_constant(1.0, 100.0).unwrap();
        let nodes: Vec<f64> = (1..40).map(|k| k as f64 * 0.05).collect();
        let weights = vec![0.05; nodes.len()];
        assert!(chi_from_qnm(&qnm, &FrequencyGrid { nodes, weights }).is_err());
    }

    #[test]
    fn uniform_box_modes() {
        let d = Dielectric1D::uniform(PI, 129, 1.0).unwrap();
        let nm = solve_dielectric_1d(&d, 3).unwrap();
        for (n, w) in nm.omegas.iter().enumerate() {
            let exact = (n + 1) as f64;
            assert!((w - exact).abs() < 0.01 * exact);
        }
        let k = 40;
        let x = k as f64 * nm.dx;
        let expected = (2.0 / PI).sqrt() * (2.0 * x).sin();
        assert!((nm.profiles[1][k] - expected).abs() < 1e-3);
        assert!(nm.orthonormality_residual() < 1e-8);
    }

    /// Sturm-sequence bisection for the k-th eigenvalue of the symmetric
    /// tridiagonal pencil `K − λ D` with `K = tridiag(−1, 2, −1)/Δx²`.
    fn sturm_eigenvalue(eps: &[f64], dx: f64, k: usize) -> f64 {
        let n = eps.len();
        let count_below = |lam: f64| -> usize {
            let mut count = 0;
            let mut q = 1.0;
            for i in 0..n {
                let diag = 2.0 / (dx * dx) - lam * eps[i];
                let off2 = if i == 0 { 0.0 } else { 1.0 / (dx * dx * dx * dx) };
                q = diag - if i == 0 { 0.0 } else { off2 / q };
                if q == 0.0 {
                    q = 1e-300;
                }
                if q < 0.0 {
                    count += 1;
                }
            }
            count
        };
        let mut lo = 0.0;
        let mut hi = 4.0 / (dx * dx) / eps.iter().cloned().fold(f64::INFINITY, f64::min);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn piecewise_dielectric_matches_sturm_oracle() {
        let length = 2.0;
        let d = Dielectric1D::from_fn(length, 101, |x| if x < length / 2.0 { 1.0 } else { 4.0 }).unwrap();
        let nm = solve_dielectric_1d(&d, 5).unwrap();
        let eps = &d.epsilon()[1..d.n_x() - 1];
        for k in 0..5 {
            let lam = sturm_eigenvalue(eps, d.dx(), k);
            assert!((nm.omegas[k].powi(2) - lam).abs() < 1e-10 * lam.max(1.0), "mode {k}");
        }
        assert!(nm.orthonormality_residual() < 1e-8);
        assert!(nm.omegas.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn second_order_convergence() {
        let err = |n_x: usize| -> Vec<f64> {
            let d = Dielectric1D::uniform(PI, n_x, 1.0).unwrap();
            let nm = solve_dielectric_1d(&d, 3).unwrap();
            nm.omegas.iter().enumerate().map(|(n, w)| (w - (n + 1) as f64).abs()).collect()
        };
        let coarse = err(65);
        let fine = err(129);
        for (c, f) in coarse.iter().zip(&fine) {
            let ratio = c / f;
            assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
        }
    }

    #[test]
    fn dielectric_validation() {
        assert!(Dielectric1D::uniform(1.0, 10, 1.0).is_err());
        assert!(Dielectric1D::new(1.0, vec![1.0; 15].into_iter().chain([0.0]).collect()).is_err());
        let d = Dielectric1D::uniform(1.0, 20, 1.0).unwrap();
        assert!(solve_dielectric_1d(&d, 19).is_err());
        let json = r#"{"length": 1.0, "n_x": 17, "epsilon": [1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1]}"#;
        let parsed: Dielectric1D = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.n_x(), 17);
    }

    proptest::proptest! {
        #[test]
        fn grid_chi_is_hermitian_positive(seed in 0u64..5000, k in 2usize..7) {
            let mut s = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            let mut rnd = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 11) as f64 / (1u64 << 53) as f64 };
            let freqs: Vec<f64> = (0..k).map(|_| 0.1 + 3.0 * rnd()).collect();
            let weights: Vec<f64> = (0..k).map(|_| 0.05 + rnd()).collect();
            let nodes: Vec<GridNode> = (0..k).map(|i| GridNode { label: format!("n{i}"), omega: freqs[i], weight: weights[i] }).collect();
            // random orthonormal vectors in the weighted inner product
            let m = k - 1;
            let mut vecs: Vec<Vec<C64>> = Vec::new();
            for _ in 0..m {
                let mut v: Vec<C64> = (0..k).map(|_| c(rnd() - 0.5, rnd() - 0.5)).collect();
                for u in &vecs {
                    let p: C64 = (0..k).map(|j| v[j] * u[j].conj() * weights[j]).sum();
                    for j in 0..k { v[j] -= p * u[j]; }
                }
                let nrm: f64 = (0..k).map(|j| v[j].norm_sqr() * weights[j]).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= nrm);
                vecs.push(v);
            }
            let grid = PolaritonGrid::new(nodes, vecs).unwrap();
            let ms = build_from_grid(&grid, BTreeMap::new()).unwrap();
            let ev = ms.chi().self_adjoint_eigenvalues(Side::Lower).unwrap();
            proptest::prop_assert!(ev[0] > 0.0);
            // completeness residual is monotone under removal
            let mut prev = 0.0;
            for keep in (0..=m).rev() {
                let g = grid.leading(keep);
                let msk = build_from_grid(&g, BTreeMap::new()).unwrap();
                let r = completeness_residual(&msk, &g).unwrap();
                proptest::prop_assert!(r >= prev - 1e-12);
                prev = r;
            }
        }
    }
}
