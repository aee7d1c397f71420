//! Correctly truncated light-matter Hamiltonians.
//!
//! Space layout: one photon factor per mode (in mode order), then the
//! emitter, then any auxiliary longitudinal bosons. The coupling generator is
//! `X = Σ_μ (a†_μ ⊗ G_μ + a_μ ⊗ G†_μ)` with
//! `G_μ = Σ_c d̂_c f*_{μ,c}(x₀) / √(2χ_μμ)`; a two-level emitter with
//! `d̂ = d σx` has `G_μ = η_μ σx`.

use std::f64::consts::FRAC_1_SQRT_2;

use faer::{Mat, MatRef};
use log::warn;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{herm_eig, local_pauli, Factor, HilbertSpec, Operator, SpectralExp, Spectrum};
use crate::matter::{EmitterSpec, TimeProfile};
use crate::modes::{dot, ModeSet, NormalModeSet1D, Vec3};
use crate::quadrature::simpson_adaptive;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Sign of the `μ̇ X` term in the time-dependent multipolar Hamiltonian.
pub const ADDITIONAL_TERM_SIGN: f64 = 1.0;

/// Per-mode coupling matrices `G_μ` on the emitter.
#[derive(Clone, Debug)]
pub struct CouplingSet {
    pub g: Vec<Mat<C64>>,
    /// `η_μ` when every `G_μ = η_μ σx`.
    pub eta: Option<Vec<C64>>,
}

impl CouplingSet {
    /// Two-level couplings `G_μ = η_μ σx`.
    pub fn tls(eta: Vec<C64>) -> Self {
        let [sx, _, _] = local_pauli();
        let g = eta.iter().map(|&e| Mat::from_fn(2, 2, |i, j| sx[(i, j)] * e)).collect();
        CouplingSet { g, eta: Some(eta) }
    }

    pub fn from_matrices(g: Vec<Mat<C64>>) -> Self {
        let eta = tls_scalars(&g);
        CouplingSet { g, eta }
    }

    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn levels(&self) -> usize {
        self.g.first().map_or(0, Mat::nrows)
    }

    /// `max_μ ‖G_μ‖₁` (induced 1-norm); equals `max |η_μ|` for a TLS.
    pub fn strength(&self) -> f64 {
        self.g
            .iter()
            .map(|m| (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// True when all `G_μ` and `G†_ν` commute, which makes the explicit
    /// multipolar form exact in the untruncated limit.
    pub fn commuting(&self) -> bool {
        let mut all: Vec<Mat<C64>> = self.g.clone();
        all.extend(self.g.iter().map(|m| m.adjoint().to_owned()));
        for a in 0..all.len() {
            for b in 0..a {
                let c = &all[a] * &all[b] - &all[b] * &all[a];
                if c.norm_max() > 1e-13 * (1.0 + all[a].norm_max() * all[b].norm_max()) {
                    return false;
                }
            }
        }
        true
    }
}

fn tls_scalars(g: &[Mat<C64>]) -> Option<Vec<C64>> {
    g.iter()
        .map(|m| {
            if m.nrows() != 2 || m[(0, 0)] != ZERO || m[(1, 1)] != ZERO || m[(0, 1)] != m[(1, 0)] {
                None
            } else {
                Some(m[(0, 1)])
            }
        })
        .collect()
}

/// `G_μ = Σ_c d̂_c f*_{μ,c}(x₀) / √(2χ_μμ)` at the emitter's profile point.
pub fn couplings(ms: &ModeSet, em: &EmitterSpec) -> Result<CouplingSet> {
    let f = ms.profile(em.position_label())?;
    let g = (0..ms.m())
        .map(|mu| {
            let conj: Vec3 = [f[mu][0].conj(), f[mu][1].conj(), f[mu][2].conj()];
            let scale = 1.0 / (2.0 * ms.chi_diag(mu)).sqrt();
            let m = em.dipole_dot(&conj);
            Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * scale)
        })
        .collect::<Vec<_>>();
    if g.iter().any(|m| (0..m.nrows()).any(|i| (0..m.ncols()).any(|j| !m[(i, j)].is_finite()))) {
        return Err(Error::NonFinite);
    }
    let mut cs = CouplingSet::from_matrices(g);
    if em.is_tls() {
        if let Ok(d) = em.tls_dipole() {
            let dv = crate::modes::real_vec3(d);
            cs.eta = Some(
                (0..ms.m())
                    .map(|mu| {
                        let fc: Vec3 = [f[mu][0].conj(), f[mu][1].conj(), f[mu][2].conj()];
                        dot(&dv, &fc) / (2.0 * ms.chi_diag(mu)).sqrt()
                    })
                    .collect(),
            );
        }
    }
    Ok(cs)
}

/// Gauge parameter θ ∈ [0, 1]: θ = 0 is the Coulomb gauge, θ = 1 the
/// multipolar gauge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GaugeParam(f64);

impl GaugeParam {
    pub const COULOMB: GaugeParam = GaugeParam(0.0);
    pub const MULTIPOLAR: GaugeParam = GaugeParam(1.0);

    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid(format!("gauge parameter {theta} outside [0, 1]")));
        }
        Ok(GaugeParam(theta))
    }

    pub fn theta(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GaugeParam {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        GaugeParam::new(v)
    }
}

impl From<GaugeParam> for f64 {
    fn from(g: GaugeParam) -> f64 {
        g.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    Correct,
    Naive,
}

/// Auxiliary longitudinal coupling, added identically in every gauge as
/// `Σ_l ω_l b†_l b_l − (b_l + b†_l) ⊗ d̂·g_l`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Longitudinal {
    #[default]
    Off,
    Custom { modes: Vec<LongitudinalMode> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalMode {
    pub omega: f64,
    pub coupling: [f64; 3],
    pub cutoff: usize,
}

impl Longitudinal {
    fn cutoffs(&self) -> Vec<usize> {
        match self {
            Longitudinal::Off => vec![],
            Longitudinal::Custom { modes } => modes.iter().map(|m| m.cutoff).collect(),
        }
    }
}

/// Factor layout: modes `0..n_modes`, emitter at `n_modes`, auxiliary bosons
/// after it.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub space: HilbertSpec,
    pub n_modes: usize,
    pub matter: usize,
    pub aux: Vec<usize>,
}

impl Layout {
    pub fn new(cutoffs: &[usize], levels: usize, aux_cutoffs: &[usize]) -> Result<Self> {
        let mut factors: Vec<Factor> = cutoffs.iter().map(|&n| Factor::photon(n)).collect();
        factors.push(Factor::matter(levels));
        factors.extend(aux_cutoffs.iter().map(|&n| Factor::photon(n)));
        let n_modes = cutoffs.len();
        Ok(Layout {
            space: HilbertSpec::new(factors)?,
            n_modes,
            matter: n_modes,
            aux: (n_modes + 1..n_modes + 1 + aux_cutoffs.len()).collect(),
        })
    }

    /// Recovers the layout of a space built by [`Layout::new`]: photon factors
    /// before the first matter factor are modes, the rest are auxiliary.
    pub fn from_space(space: &HilbertSpec) -> Result<Self> {
        let matter = space
            .factors()
            .iter()
            .position(|f| f.kind == crate::hilbert::FactorKind::Matter)
            .ok_or_else(|| Error::invalid("space has no matter factor"))?;
        if space.factors()[matter + 1..].iter().any(|f| f.kind == crate::hilbert::FactorKind::Matter) {
            return Err(Error::invalid("space has more than one matter factor"));
        }
        Ok(Layout {
            space: space.clone(),
            n_modes: matter,
            matter,
            aux: (matter + 1..space.factors().len()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn cutoffs(&self) -> Vec<usize> {
        (0..self.n_modes).map(|i| self.space.factors()[i].dim - 1).collect()
    }

    pub fn photon_dim(&self) -> usize {
        self.space.factors()[..self.n_modes].iter().map(|f| f.dim).product()
    }

    pub fn matter_dim(&self) -> usize {
        self.space.factors()[self.matter].dim
    }

    fn aux_dim(&self) -> usize {
        self.space.factors()[self.matter + 1..].iter().map(|f| f.dim).product()
    }

    /// Photon-only space of the cavity modes.
    pub fn photon_space(&self) -> Result<HilbertSpec> {
        HilbertSpec::new(self.space.factors()[..self.n_modes].to_vec())
    }

    pub fn matter_op(&self, local: MatRef<'_, C64>) -> Result<Operator> {
        Operator::embedded(&self.space, self.matter, local)
    }

    /// `ph ⊗ m ⊗ I_aux` for an operator `ph` on the joint photon space.
    pub fn photon_matter(&self, ph: MatRef<'_, C64>, m: MatRef<'_, C64>) -> Result<Operator> {
        let (dp, dm, da) = (self.photon_dim(), self.matter_dim(), self.aux_dim());
        if ph.nrows() != dp || m.nrows() != dm {
            return Err(Error::DimensionMismatch("photon/matter operator dimensions".into()));
        }
        let n = self.dim();
        let mut out = Mat::<C64>::zeros(n, n);
        for pc in 0..dp {
            for pr in 0..dp {
                let pv = ph[(pr, pc)];
                if pv == ZERO {
                    continue;
                }
                for mc in 0..dm {
                    for mr in 0..dm {
                        let v = pv * m[(mr, mc)];
                        if v == ZERO {
                            continue;
                        }
                        for a in 0..da {
                            out[((pr * dm + mr) * da + a, (pc * dm + mc) * da + a)] = v;
                        }
                    }
                }
            }
        }
        Operator::new(self.space.clone(), out)
    }
}

fn local_annihilation(dim: usize) -> Mat<C64> {
    Mat::from_fn(dim, dim, |i, j| if j == i + 1 { C64::new((j as f64).sqrt(), 0.0) } else { ZERO })
}

fn local_creation(dim: usize) -> Mat<C64> {
    local_annihilation(dim).adjoint().to_owned()
}

fn adjoint(m: &Mat<C64>) -> Mat<C64> {
    m.adjoint().to_owned()
}

fn scaled(m: MatRef<'_, C64>, c: C64) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * c)
}

/// `H_F = Σ_μν χ_μν a†_μ a_ν`.
pub fn field_hamiltonian(layout: &Layout, chi: MatRef<'_, C64>) -> Result<Operator> {
    let m = layout.n_modes;
    if chi.nrows() != m {
        return Err(Error::DimensionMismatch(format!("chi is {}x{} for {m} modes", chi.nrows(), chi.ncols())));
    }
    let n = layout.dim();
    let mut out = Mat::<C64>::zeros(n, n);
    for mu in 0..m {
        let d_mu = layout.space.factors()[mu].dim;
        for nu in 0..m {
            let c = chi[(mu, nu)];
            if c == ZERO {
                continue;
            }
            let term = if mu == nu {
                let num = Mat::from_fn(d_mu, d_mu, |i, j| if i == j { C64::new(i as f64, 0.0) } else { ZERO });
                layout.space.embed(mu, num.as_ref())?
            } else {
                let d_nu = layout.space.factors()[nu].dim;
                let ad = local_creation(d_mu);
                let a = local_annihilation(d_nu);
                layout.space.embed_product(&[(mu, ad.as_ref()), (nu, a.as_ref())])?
            };
            out += scaled(term.as_ref(), c);
        }
    }
    Operator::new(layout.space.clone(), out)?.hermitize(1e-12)
}

/// `X = Σ_μ (a†_μ ⊗ G_μ + a_μ ⊗ G†_μ)`.
pub fn generator(layout: &Layout, cs: &CouplingSet) -> Result<Operator> {
    if cs.m() != layout.n_modes {
        return Err(Error::DimensionMismatch(format!(
            "{} coupling matrices for {} modes",
            cs.m(),
            layout.n_modes
        )));
    }
    if cs.m() > 0 && cs.levels() != layout.matter_dim() {
        return Err(Error::DimensionMismatch("coupling matrices do not match the emitter".into()));
    }
    let n = layout.dim();
    let mut out = Mat::<C64>::zeros(n, n);
    for (mu, g) in cs.g.iter().enumerate() {
        let d = layout.space.factors()[mu].dim;
        let ad = local_creation(d);
        let a = local_annihilation(d);
        let gd = adjoint(g);
        let up = layout.space.embed_product(&[(mu, ad.as_ref()), (layout.matter, g.as_ref())])?;
        let down = layout.space.embed_product(&[(mu, a.as_ref()), (layout.matter, gd.as_ref())])?;
        out = out + up + down;
    }
    Operator::new(layout.space.clone(), out)?.hermitize(1e-12)
}

fn h0_operator(layout: &Layout, em: &EmitterSpec) -> Result<Operator> {
    layout.matter_op(em.h0_local().as_ref())?.hermitize(0.0)
}

fn longitudinal_term(layout: &Layout, em: &EmitterSpec, long: &Longitudinal) -> Result<Option<Operator>> {
    let modes = match long {
        Longitudinal::Off => return Ok(None),
        Longitudinal::Custom { modes } => modes,
    };
    let n = layout.dim();
    let mut out = Mat::<C64>::zeros(n, n);
    for (l, mode) in modes.iter().enumerate() {
        if !(mode.omega > 0.0) {
            return Err(Error::invalid(format!("longitudinal mode {l} needs a positive frequency")));
        }
        let idx = layout.aux[l];
        let d = mode.cutoff + 1;
        let num = Mat::from_fn(d, d, |i, j| if i == j { C64::new(i as f64 * mode.omega, 0.0) } else { ZERO });
        out += layout.space.embed(idx, num.as_ref())?;
        let x = local_annihilation(d) + local_creation(d);
        let dg = em.dipole_dot(&crate::modes::real_vec3(mode.coupling));
        let coupling = layout.space.embed_product(&[(idx, x.as_ref()), (layout.matter, dg.as_ref())])?;
        out -= coupling;
    }
    Ok(Some(Operator::new(layout.space.clone(), out)?.hermitize(1e-12)?))
}

/// A built Hamiltonian with its provenance.
#[derive(Clone, Debug)]
pub struct HamiltonianBundle {
    pub h: Operator,
    pub layout: Layout,
    /// 0 for Coulomb-type builders, 1 for multipolar-type builders, θ for the
    /// interpolating family.
    pub theta: f64,
    pub couplings: CouplingSet,
    pub truncation: Truncation,
    pub builder: &'static str,
    pub warnings: Vec<String>,
}

impl HamiltonianBundle {
    pub fn space(&self) -> &HilbertSpec {
        &self.layout.space
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        herm_eig(&self.h)
    }

    /// The `k` lowest eigenvalues.
    pub fn lowest(&self, k: usize) -> Result<Vec<f64>> {
        let spec = self.spectrum()?;
        if k > spec.len() {
            return Err(Error::invalid(format!("asked for {k} eigenvalues of a {}-dimensional space", spec.len())));
        }
        Ok(spec.values[..k].to_vec())
    }
}

/// Relative bound on `|H - H†|_max` accepted from any builder before symmetrization.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Checks Hermiticity against [`HERMITIAN_TOL`], then makes the matrix exactly Hermitian.
fn finish(h: Operator, builder: &str) -> Result<Operator> {
    if !h.is_finite() {
        return Err(Error::NonFinite);
    }
    let tol = HERMITIAN_TOL * h.max_abs().max(1.0);
    h.hermitize(tol).map_err(|e| match e {
        Error::NotHermitian(dev) => Error::Invariant(format!("{builder} produced a non-Hermitian matrix ({dev:e})")),
        other => other,
    })
}

/// Heuristic adequacy check of the Fock cutoffs for a displacement of size
/// `θ·‖G‖`.
pub fn cutoff_warnings(theta: f64, cs: &CouplingSet, cutoffs: &[usize]) -> Vec<String> {
    let s = theta.abs() * cs.strength();
    let mut out = Vec::new();
    for (mu, &n) in cutoffs.iter().enumerate() {
        let nf = n as f64;
        if nf < 4.0 * s * s + 10.0 || s > nf / 4.0 {
            let msg = format!("Fock cutoff {n} of mode {mu} may be too small for displacement {s:.3}");
            warn!("{msg}");
            out.push(msg);
        }
    }
    out
}

fn check_cutoffs(ms: &ModeSet, cutoffs: &[usize]) -> Result<()> {
    if cutoffs.len() != ms.m() {
        return Err(Error::DimensionMismatch(format!("{} Fock cutoffs for {} modes", cutoffs.len(), ms.m())));
    }
    Ok(())
}

/// `H(θ) = V_θ H_F V_θ† + U_θ H₀ U_θ†` with `V_θ = exp(−iθX)` and
/// `U_θ = exp(+i(1−θ)X)`, both exact on the truncated space.
pub fn build_dipole(ms: &ModeSet, em: &EmitterSpec, g: GaugeParam, cutoffs: &[usize]) -> Result<HamiltonianBundle> {
    build_dipole_with(ms, em, g, cutoffs, &Longitudinal::Off)
}

pub fn build_dipole_with(
    ms: &ModeSet,
    em: &EmitterSpec,
    g: GaugeParam,
    cutoffs: &[usize],
    long: &Longitudinal,
) -> Result<HamiltonianBundle> {
    check_cutoffs(ms, cutoffs)?;
    let cs = couplings(ms, em)?;
    let layout = Layout::new(cutoffs, em.n_levels(), &long.cutoffs())?;
    let hf = field_hamiltonian(&layout, ms.chi())?;
    let h0 = h0_operator(&layout, em)?;
    let x = generator(&layout, &cs)?;
    let theta = g.theta();
    let exp = SpectralExp::new(&x)?;
    let v = exp.unitary(-theta)?;
    let u = exp.unitary(1.0 - theta)?;
    let mut h = &hf.conjugate_by(&v) + &h0.conjugate_by(&u);
    if let Some(l) = longitudinal_term(&layout, em, long)? {
        h = &h + &l;
    }
    let warnings = cutoff_warnings(theta.max(1.0 - theta), &cs, cutoffs);
    Ok(HamiltonianBundle {
        h: finish(h, "build_dipole")?,
        layout,
        theta,
        couplings: cs,
        truncation: Truncation::Correct,
        builder: "build_dipole",
        warnings,
    })
}

/// Function of a Hermitian photon-space operator via its eigendecomposition.
fn photon_function(op: &Operator, f: impl Fn(f64) -> f64) -> Result<Mat<C64>> {
    let spec = herm_eig(op)?;
    Ok(spec.apply_function(|l| C64::new(f(l), 0.0)).into_matrix())
}

fn single_mode_setup(chi: f64, cutoff: usize) -> Result<(Layout, Operator)> {
    if cutoff < 1 {
        return Err(Error::invalid("single-mode builders need a Fock cutoff of at least 1"));
    }
    if !(chi > 0.0) {
        return Err(Error::invalid(format!("mode frequency must be positive, got {chi}")));
    }
    let layout = Layout::new(&[cutoff], 2, &[])?;
    let chi_m = Mat::from_fn(1, 1, |_, _| C64::new(chi, 0.0));
    let hf = field_hamiltonian(&layout, chi_m.as_ref())?;
    Ok((layout, hf))
}

/// `Φ = Σ_μ (η_μ a†_μ + η*_μ a_μ)` on the joint photon space.
fn photon_quadrature(photon_space: &HilbertSpec, eta: &[C64]) -> Result<Operator> {
    let n = photon_space.dim();
    let mut out = Mat::<C64>::zeros(n, n);
    for (mu, &e) in eta.iter().enumerate() {
        let d = photon_space.factors()[mu].dim;
        let local = Mat::from_fn(d, d, |i, j| {
            if i == j + 1 {
                e * (i as f64).sqrt()
            } else if j == i + 1 {
                e.conj() * (j as f64).sqrt()
            } else {
                ZERO
            }
        });
        out += photon_space.embed(mu, local.as_ref())?;
    }
    Operator::new(photon_space.clone(), out)?.hermitize(1e-14)
}

/// `H = χ a†a + (ω0/2)[cos(2Φ)σz + sin(2Φ)σy]` with `Φ = η a† + η* a`.
pub fn build_tls_coulomb_single(chi: f64, omega0: f64, eta: C64, cutoff: usize) -> Result<HamiltonianBundle> {
    let (layout, hf) = single_mode_setup(chi, cutoff)?;
    let phi = photon_quadrature(&layout.photon_space()?, &[eta])?;
    let h = &hf + &coulomb_trig(&layout, &phi, omega0, 2.0)?;
    let cs = CouplingSet::tls(vec![eta]);
    let warnings = cutoff_warnings(1.0, &cs, &[cutoff]);
    Ok(HamiltonianBundle {
        h: finish(h, "build_tls_coulomb_single")?,
        layout,
        theta: 0.0,
        couplings: cs,
        truncation: Truncation::Correct,
        builder: "build_tls_coulomb_single",
        warnings,
    })
}

/// `(ω0/2)[cos(cΦ)σz + sin(cΦ)σy]`.
fn coulomb_trig(layout: &Layout, phi: &Operator, omega0: f64, c: f64) -> Result<Operator> {
    let cos = photon_function(phi, |l| (c * l).cos())?;
    let sin = photon_function(phi, |l| (c * l).sin())?;
    let [_, sy, sz] = local_pauli();
    let half = C64::new(0.5 * omega0, 0.0);
    let a = layout.photon_matter(cos.as_ref(), scaled(sz.as_ref(), half).as_ref())?;
    let b = layout.photon_matter(sin.as_ref(), scaled(sy.as_ref(), half).as_ref())?;
    Ok(&a + &b)
}

/// `H = χ a†a + (ω0/2)σz + iχ(η a† − η* a)σx + χ|η|²`.
pub fn build_tls_multipolar_single(chi: f64, omega0: f64, eta: C64, cutoff: usize) -> Result<HamiltonianBundle> {
    let (layout, _) = single_mode_setup(chi, cutoff)?;
    let cs = CouplingSet::tls(vec![eta]);
    let chi_m = Mat::from_fn(1, 1, |_, _| C64::new(chi, 0.0));
    let h0 = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => C64::new(0.5 * omega0, 0.0),
        (1, 1) => C64::new(-0.5 * omega0, 0.0),
        _ => ZERO,
    });
    let h = explicit_multipolar(&layout, chi_m.as_ref(), h0.as_ref(), &cs.g, true)?;
    let warnings = cutoff_warnings(1.0, &cs, &[cutoff]);
    Ok(HamiltonianBundle {
        h: finish(h, "build_tls_multipolar_single")?,
        layout,
        theta: 1.0,
        couplings: cs,
        truncation: Truncation::Correct,
        builder: "build_tls_multipolar_single",
        warnings,
    })
}

/// `H_F + H₀ + Σ_μν χ_μν (i a†_μ G_ν − i a_ν G†_μ) + [Σ_μν χ_μν G†_μ G_ν]`,
/// the last (polarization-squared) term only when `with_square`.
fn explicit_multipolar(
    layout: &Layout,
    chi: MatRef<'_, C64>,
    h0: MatRef<'_, C64>,
    gs: &[Mat<C64>],
    with_square: bool,
) -> Result<Operator> {
    let hf = field_hamiltonian(layout, chi)?;
    let mut h = &hf + &layout.matter_op(h0)?;
    let m = layout.n_modes;
    let n = layout.dim();
    let mut coupling = Mat::<C64>::zeros(n, n);
    for mu in 0..m {
        // Σ_ν χ_μν G_ν
        let lev = layout.matter_dim();
        let mut weighted = Mat::<C64>::zeros(lev, lev);
        for (nu, g) in gs.iter().enumerate() {
            weighted += scaled(g.as_ref(), chi[(mu, nu)]);
        }
        let d = layout.space.factors()[mu].dim;
        let ad = local_creation(d);
        let term = layout.space.embed_product(&[(mu, ad.as_ref()), (layout.matter, scaled(weighted.as_ref(), I).as_ref())])?;
        coupling = coupling + &term + term.adjoint();
    }
    h = &h + &Operator::new(layout.space.clone(), coupling)?;
    if with_square {
        h = &h + &layout.matter_op(polarization_square(chi, gs).as_ref())?;
    }
    Ok(h)
}

/// `Σ_μν χ_μν G†_μ G_ν`.
fn polarization_square(chi: MatRef<'_, C64>, gs: &[Mat<C64>]) -> Mat<C64> {
    let lev = gs.first().map_or(0, Mat::nrows);
    let mut out = Mat::<C64>::zeros(lev, lev);
    for (mu, gm) in gs.iter().enumerate() {
        for (nu, gn) in gs.iter().enumerate() {
            out += scaled((gm.adjoint() * gn).as_ref(), chi[(mu, nu)]);
        }
    }
    out
}

/// Explicit multipolar Hamiltonian in terms of the displaced operators
/// `a'_μ = a_μ + iG_μ`. Requires commuting coupling matrices.
pub fn build_multipolar_explicit(ms: &ModeSet, em: &EmitterSpec, cutoffs: &[usize]) -> Result<HamiltonianBundle> {
    build_multipolar_explicit_with(ms, em, cutoffs, &Longitudinal::Off)
}

pub fn build_multipolar_explicit_with(
    ms: &ModeSet,
    em: &EmitterSpec,
    cutoffs: &[usize],
    long: &Longitudinal,
) -> Result<HamiltonianBundle> {
    check_cutoffs(ms, cutoffs)?;
    let cs = couplings(ms, em)?;
    explicit_bundle(ms, em, cs, cutoffs, long, true, "build_multipolar_explicit")
}

fn explicit_bundle(
    ms: &ModeSet,
    em: &EmitterSpec,
    cs: CouplingSet,
    cutoffs: &[usize],
    long: &Longitudinal,
    with_square: bool,
    builder: &'static str,
) -> Result<HamiltonianBundle> {
    if !cs.commuting() {
        return Err(Error::invalid("explicit multipolar form needs mutually commuting coupling matrices"));
    }
    let layout = Layout::new(cutoffs, em.n_levels(), &long.cutoffs())?;
    let mut h = explicit_multipolar(&layout, ms.chi(), em.h0_local().as_ref(), &cs.g, with_square)?;
    if let Some(l) = longitudinal_term(&layout, em, long)? {
        h = &h + &l;
    }
    let warnings = cutoff_warnings(1.0, &cs, cutoffs);
    Ok(HamiltonianBundle {
        h: finish(h, builder)?,
        layout,
        theta: 1.0,
        couplings: cs,
        truncation: if with_square { Truncation::Correct } else { Truncation::Naive },
        builder,
        warnings,
    })
}

/// Largest expansion order accepted by [`build_naive`].
pub const MAX_NAIVE_ORDER: usize = 12;

/// Gauge-violating references. θ = 0: the Coulomb trig functions expanded to
/// `order` in `Φ` (order 1 gives `H_F + (ω0/2)σz + ω0 Φ σy`). θ = 1: the
/// explicit multipolar form without the polarization-squared term.
pub fn build_naive(
    ms: &ModeSet,
    em: &EmitterSpec,
    g: GaugeParam,
    cutoffs: &[usize],
    order: usize,
) -> Result<HamiltonianBundle> {
    build_naive_with(ms, em, g, cutoffs, order, &Longitudinal::Off)
}

pub fn build_naive_with(
    ms: &ModeSet,
    em: &EmitterSpec,
    g: GaugeParam,
    cutoffs: &[usize],
    order: usize,
    long: &Longitudinal,
) -> Result<HamiltonianBundle> {
    check_cutoffs(ms, cutoffs)?;
    let cs = couplings(ms, em)?;
    if g == GaugeParam::MULTIPOLAR {
        return explicit_bundle(ms, em, cs, cutoffs, long, false, "build_naive");
    }
    if g != GaugeParam::COULOMB {
        return Err(Error::invalid("naive truncation is defined for θ = 0 and θ = 1 only"));
    }
    if order == 0 || order > MAX_NAIVE_ORDER {
        return Err(Error::invalid(format!("unsupported naive expansion order {order} (1..={MAX_NAIVE_ORDER})")));
    }
    let eta = cs.eta.clone().ok_or_else(|| Error::invalid("naive Coulomb expansion needs a two-level emitter"))?;
    let omega0 = em.omega0()?;
    let layout = Layout::new(cutoffs, 2, &long.cutoffs())?;
    let phi = photon_quadrature(&layout.photon_space()?, &eta)?;
    let two_phi = phi.scale_real(2.0);
    let dp = layout.photon_dim();
    let mut cos = Mat::<C64>::identity(dp, dp);
    let mut sin = Mat::<C64>::zeros(dp, dp);
    let mut power = Mat::<C64>::identity(dp, dp);
    let mut factorial = 1.0;
    for k in 1..=order {
        power = &power * two_phi.matrix();
        factorial *= k as f64;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let term = scaled(power.as_ref(), C64::new(sign / factorial, 0.0));
        if k % 2 == 0 {
            cos += term;
        } else {
            sin += term;
        }
    }
    let [_, sy, sz] = local_pauli();
    let half = C64::new(0.5 * omega0, 0.0);
    let hf = field_hamiltonian(&layout, ms.chi())?;
    let mut h = &hf + &layout.photon_matter(cos.as_ref(), scaled(sz.as_ref(), half).as_ref())?;
    h = &h + &layout.photon_matter(sin.as_ref(), scaled(sy.as_ref(), half).as_ref())?;
    if let Some(l) = longitudinal_term(&layout, em, long)? {
        h = &h + &l;
    }
    Ok(HamiltonianBundle {
        h: finish(h, "build_naive")?,
        layout,
        theta: 0.0,
        couplings: cs,
        truncation: Truncation::Naive,
        builder: "build_naive",
        warnings: vec![],
    })
}

/// Spatial dependence of the mode profiles about the emitter point:
/// `f_μ(x₀ + r) = f_μ(x₀)·s(r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileShape {
    Constant,
    Cosine { k: [f64; 3] },
    ShiftedCosine { k: [f64; 3], phase: f64 },
    PlaneWave { k: [f64; 3] },
}

impl ProfileShape {
    pub fn factor(&self, r: [f64; 3]) -> C64 {
        let kr = |k: &[f64; 3]| k[0] * r[0] + k[1] * r[1] + k[2] * r[2];
        match self {
            ProfileShape::Constant => ONE,
            ProfileShape::Cosine { k } => C64::new(kr(k).cos(), 0.0),
            ProfileShape::ShiftedCosine { k, phase } => C64::new((kr(k) + phase).cos(), 0.0),
            ProfileShape::PlaneWave { k } => C64::from_polar(1.0, kr(k)),
        }
    }

    /// Profiles of every mode in `ms` about `label`, shaped by `self`.
    pub fn profiles<'a>(&'a self, ms: &'a ModeSet, label: &str) -> Result<impl Fn(usize, [f64; 3]) -> Vec3 + 'a> {
        let base = ms.profile(label)?.to_vec();
        Ok(move |mu: usize, r: [f64; 3]| {
            let s = self.factor(r);
            [base[mu][0] * s, base[mu][1] * s, base[mu][2] * s]
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentQuadrature {
    pub nodes: usize,
    pub tol: f64,
    pub max_nodes: usize,
}

impl Default for SegmentQuadrature {
    fn default() -> Self {
        SegmentQuadrature { nodes: 65, tol: 1e-8, max_nodes: 65 * 64 + 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BdGauge {
    Coulomb,
    Multipolar,
}

/// Segment integrals `D₊ = d·∫₀¹ f*_μ(s r_dip) ds` and
/// `D₋ = d·∫₋₁⁰ f*_μ(s r_dip) ds` for every mode.
pub fn segment_integrals(
    n_modes: usize,
    em: &EmitterSpec,
    profile: &dyn Fn(usize, [f64; 3]) -> Vec3,
    quad: SegmentQuadrature,
) -> Result<Vec<(C64, C64)>> {
    let sp = em.single_particle().ok_or_else(|| Error::invalid("emitter has no single-particle data"))?;
    let d = crate::modes::real_vec3(em.tls_dipole()?);
    let r = sp.r_dip;
    (0..n_modes)
        .map(|mu| {
            let integrand = |s: f64| -> C64 {
                let f = profile(mu, [s * r[0], s * r[1], s * r[2]]);
                dot(&d, &[f[0].conj(), f[1].conj(), f[2].conj()])
            };
            let plus = simpson_adaptive(integrand, 0.0, 1.0, quad.nodes, quad.tol, quad.max_nodes)?;
            let minus = simpson_adaptive(integrand, -1.0, 0.0, quad.nodes, quad.tol, quad.max_nodes)?;
            Ok((plus.value, minus.value))
        })
        .collect()
}

/// Beyond-dipole single-particle Hamiltonians. The truncated position is
/// `r̂ = r_dip σx`, so the line integral of `A` from the origin to `r̂`
/// splits into `G_μ = (α_μ I + β_μ σx)/√(2χ_μμ)` with
/// `α = (D₊ − D₋)/2`, `β = (D₊ + D₋)/2`.
///
/// Coulomb: `H_F + (ω0/2)[cos Φ̂ σz + sin Φ̂ σy]`,
/// `Φ̂ = 2 Σ_μ (β_μ a†_μ + β*_μ a_μ)/√(2χ_μμ)`. Multipolar: the explicit form
/// with these `G_μ`, including the polarization-squared term.
pub fn build_beyond_dipole(
    ms: &ModeSet,
    em: &EmitterSpec,
    profile: &dyn Fn(usize, [f64; 3]) -> Vec3,
    gauge: BdGauge,
    cutoffs: &[usize],
    quad: SegmentQuadrature,
) -> Result<HamiltonianBundle> {
    check_cutoffs(ms, cutoffs)?;
    let ints = segment_integrals(ms.m(), em, profile, quad)?;
    let omega0 = em.omega0()?;
    let [sx, _, _] = local_pauli();
    let mut gs = Vec::with_capacity(ms.m());
    let mut betas = Vec::with_capacity(ms.m());
    for (mu, &(dp, dm)) in ints.iter().enumerate() {
        let s = 1.0 / (2.0 * ms.chi_diag(mu)).sqrt();
        let alpha = (dp - dm) * 0.5 * s;
        let beta = (dp + dm) * 0.5 * s;
        betas.push(beta);
        gs.push(Mat::from_fn(2, 2, |i, j| if i == j { alpha } else { ZERO } + sx[(i, j)] * beta));
    }
    let cs = CouplingSet::from_matrices(gs);
    let layout = Layout::new(cutoffs, 2, &[])?;
    let (h, theta, builder) = match gauge {
        BdGauge::Coulomb => {
            let phi = photon_quadrature(&layout.photon_space()?, &betas)?;
            let hf = field_hamiltonian(&layout, ms.chi())?;
            (&hf + &coulomb_trig(&layout, &phi, omega0, 2.0)?, 0.0, "build_beyond_dipole_coulomb")
        }
        BdGauge::Multipolar => (
            explicit_multipolar(&layout, ms.chi(), em.h0_local().as_ref(), &cs.g, true)?,
            1.0,
            "build_beyond_dipole_multipolar",
        ),
    };
    let warnings = cutoff_warnings(1.0, &cs, cutoffs);
    Ok(HamiltonianBundle {
        h: finish(h, builder)?,
        layout,
        theta,
        couplings: cs,
        truncation: Truncation::Correct,
        builder,
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gauge1D {
    /// Generalized Coulomb.
    Gc,
    /// Generalized multipolar.
    Gmp,
}

/// Placement of an emitter in a 1D dielectric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement1D {
    pub x0: f64,
    pub polarization: [f64; 3],
}

/// Hamiltonians over the lowest `n_modes` normal modes of a 1D dielectric,
/// `χ = diag(ω_μ)` and `f_μ = h_μ ê`. The naive generalized multipolar form
/// sums the polarization-squared term over every mode in `nm` rather than
/// the kept ones, so it differs from the correct one by a matter-only
/// operator.
pub fn build_generalized_1d(
    nm: &NormalModeSet1D,
    em: &EmitterSpec,
    gauge: Gauge1D,
    n_modes: usize,
    placement: Placement1D,
    cutoffs: &[usize],
    truncation: Truncation,
) -> Result<HamiltonianBundle> {
    if placement.x0 < 0.0 || placement.x0 > nm.length {
        return Err(Error::invalid(format!("emitter position {} lies outside [0, {}]", placement.x0, nm.length)));
    }
    let ms = nm.to_mode_set(n_modes, &[(em.position_label(), placement.x0)], placement.polarization)?;
    match (gauge, truncation) {
        (Gauge1D::Gc, Truncation::Correct) => {
            let mut b = build_dipole(&ms, em, GaugeParam::COULOMB, cutoffs)?;
            b.builder = "build_generalized_1d_gc";
            Ok(b)
        }
        (Gauge1D::Gc, Truncation::Naive) => Err(Error::invalid("naive truncation is only defined for the gmp gauge")),
        (Gauge1D::Gmp, Truncation::Correct) => {
            let mut b = build_multipolar_explicit(&ms, em, cutoffs)?;
            b.builder = "build_generalized_1d_gmp";
            Ok(b)
        }
        (Gauge1D::Gmp, Truncation::Naive) => {
            let mut b = build_multipolar_explicit(&ms, em, cutoffs)?;
            let de = em.dipole_dot(&crate::modes::real_vec3(placement.polarization));
            let de2 = &de * &de;
            let mut extra = 0.0;
            for mu in n_modes..nm.len() {
                let h = nm.value_at(mu, placement.x0)?;
                extra += 0.5 * h * h;
            }
            let term = b.layout.matter_op(scaled(de2.as_ref(), C64::new(extra, 0.0)).as_ref())?;
            b.h = finish(&b.h + &term, "build_generalized_1d")?;
            b.truncation = Truncation::Naive;
            b.builder = "build_generalized_1d_gmp";
            Ok(b)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TdGauge {
    Coulomb,
    Multipolar,
}

/// Time-dependent coupling `μ(t)X`. Coulomb:
/// `H_C(t) = H_F + U(t) H₀ U(t)†`, `U = exp(iμX)`. Multipolar:
/// `H_mp(t) = V(t) H_F V(t)† + H₀ + s μ̇ X`, `V = exp(−iμX)`, with
/// `s = ADDITIONAL_TERM_SIGN` unless overridden.
///
/// Everything is evaluated in the eigenbasis of `X`, so applying `H(t)` to a
/// state costs a few dense matrix-vector products.
#[derive(Clone, Debug)]
pub struct TimeDependentHamiltonian {
    pub gauge: TdGauge,
    pub profile: TimeProfile,
    pub layout: Layout,
    pub couplings: CouplingSet,
    x_values: Vec<f64>,
    q: Mat<C64>,
    q_adj: Mat<C64>,
    hf: Operator,
    h0: Operator,
    /// `Q† H_F Q` or `Q† H₀ Q`, whichever gets rotated.
    rotated: Mat<C64>,
    sign: f64,
}

pub fn build_time_dependent(
    ms: &ModeSet,
    em: &EmitterSpec,
    cutoffs: &[usize],
    gauge: TdGauge,
    profile: TimeProfile,
) -> Result<TimeDependentHamiltonian> {
    profile.validate()?;
    check_cutoffs(ms, cutoffs)?;
    let cs = couplings(ms, em)?;
    let layout = Layout::new(cutoffs, em.n_levels(), &[])?;
    let hf = field_hamiltonian(&layout, ms.chi())?;
    let h0 = h0_operator(&layout, em)?;
    let x = generator(&layout, &cs)?;
    let spec = herm_eig(&x)?;
    let q = spec.vectors.matrix().to_owned();
    let target = match gauge {
        TdGauge::Coulomb => h0.matrix(),
        TdGauge::Multipolar => hf.matrix(),
    };
    let rotated = q.adjoint() * target * &q;
    Ok(TimeDependentHamiltonian {
        gauge,
        profile,
        layout,
        couplings: cs,
        x_values: spec.values,
        q_adj: q.adjoint().to_owned(),
        q,
        hf,
        h0,
        rotated,
        sign: ADDITIONAL_TERM_SIGN,
    })
}

impl TimeDependentHamiltonian {
    /// Overrides the sign of the `μ̇ X` term (negative controls only).
    pub fn with_additional_sign(mut self, sign: f64) -> Self {
        self.sign = sign;
        self
    }

    pub fn additional_sign(&self) -> f64 {
        self.sign
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Phase `e^{iσμλ}` per X-eigenvalue with σ = +1 (Coulomb) or −1
    /// (multipolar).
    fn phases(&self, mu: f64) -> Vec<C64> {
        let s = match self.gauge {
            TdGauge::Coulomb => 1.0,
            TdGauge::Multipolar => -1.0,
        };
        self.x_values.iter().map(|&l| C64::from_polar(1.0, s * mu * l)).collect()
    }

    /// `H(t) ψ`.
    pub fn apply(&self, t: f64, psi: &[C64]) -> Vec<C64> {
        let (mu, mu_dot) = self.profile.eval(t);
        let n = self.dim();
        let fixed = match self.gauge {
            TdGauge::Coulomb => &self.hf,
            TdGauge::Multipolar => &self.h0,
        };
        let mut out = fixed.apply(psi);
        let tilde = crate::hilbert::matvec(self.q_adj.as_ref(), psi);
        let ph = self.phases(mu);
        let rotated_in: Vec<C64> = (0..n).map(|k| tilde[k] * ph[k].conj()).collect();
        let mut mid = crate::hilbert::matvec(self.rotated.as_ref(), &rotated_in);
        for k in 0..n {
            mid[k] *= ph[k];
            if self.gauge == TdGauge::Multipolar && mu_dot != 0.0 {
                mid[k] += tilde[k] * (self.sign * mu_dot * self.x_values[k]);
            }
        }
        let back = crate::hilbert::matvec(self.q.as_ref(), &mid);
        for k in 0..n {
            out[k] += back[k];
        }
        out
    }

    /// Dense `H(t)`.
    pub fn matrix_at(&self, t: f64) -> Result<Operator> {
        let (mu, mu_dot) = self.profile.eval(t);
        let n = self.dim();
        let ph = self.phases(mu);
        let mut inner = Mat::from_fn(n, n, |i, j| ph[i] * self.rotated[(i, j)] * ph[j].conj());
        if self.gauge == TdGauge::Multipolar {
            for k in 0..n {
                inner[(k, k)] += C64::new(self.sign * mu_dot * self.x_values[k], 0.0);
            }
        }
        let rotated = &self.q * inner * self.q.adjoint();
        let fixed = match self.gauge {
            TdGauge::Coulomb => &self.hf,
            TdGauge::Multipolar => &self.h0,
        };
        let h = Operator::new(self.layout.space.clone(), rotated)?;
        finish(&h + fixed, "build_time_dependent")
    }

    /// `W(t) = exp(−iμ(t)X)`, mapping Coulomb states to multipolar ones.
    pub fn gauge_unitary(&self, t: f64) -> Result<Operator> {
        let mu = self.profile.mu(t);
        let n = self.dim();
        let scaled_q = Mat::from_fn(n, n, |i, j| self.q[(i, j)] * C64::from_polar(1.0, -mu * self.x_values[j]));
        let w = &scaled_q * self.q.adjoint();
        Operator::new(self.layout.space.clone(), w)?.verify_unitary()
    }

    /// `W(t) ψ` without forming the matrix.
    pub fn apply_gauge_unitary(&self, t: f64, psi: &[C64]) -> Vec<C64> {
        let mu = self.profile.mu(t);
        let mut tilde = crate::hilbert::matvec(self.q_adj.as_ref(), psi);
        for (k, v) in tilde.iter_mut().enumerate() {
            *v *= C64::from_polar(1.0, -mu * self.x_values[k]);
        }
        crate::hilbert::matvec(self.q.as_ref(), &tilde)
    }

    /// Expectation-value observables: `⟨a†_μ a_μ⟩` per mode, then `⟨σz⟩` for a
    /// TLS, then `⟨X⟩`.
    pub fn observables(&self) -> Result<Vec<(String, Operator)>> {
        let mut out = Vec::new();
        for mu in 0..self.layout.n_modes {
            let a = crate::hilbert::ladder(&self.layout.space, mu)?;
            out.push((format!("n_{mu}"), (&a.adjoint() * &a).hermitize(0.0)?));
        }
        if self.layout.matter_dim() == 2 {
            let (_, _, sz) = crate::hilbert::pauli(&self.layout.space, self.layout.matter)?;
            out.push(("sigma_z".to_string(), sz));
        }
        let n = self.dim();
        let x = Mat::from_fn(n, n, |i, j| {
            (0..n).map(|k| self.q[(i, k)] * self.x_values[k] * self.q[(j, k)].conj()).sum::<C64>()
        });
        out.push(("x".to_string(), Operator::new(self.layout.space.clone(), x)?.hermitize(1e-10)?));
        Ok(out)
    }
}

/// `1/√2`, the single-mode coupling for `d = f = x̂`, `χ = 1`.
pub const UNIT_COUPLING: f64 = FRAC_1_SQRT_2;

/// A two-level emitter `d = x̂` at `"emitter"` coupled to one mode of
/// frequency `chi` with real coupling `eta`.
pub fn single_mode_tls(chi: f64, omega0: f64, eta: f64) -> Result<(ModeSet, EmitterSpec)> {
    let f = eta * (2.0 * chi).sqrt();
    let mut profiles = std::collections::BTreeMap::new();
    profiles.insert(crate::matter::DEFAULT_POSITION.to_string(), vec![crate::modes::real_vec3([f, 0.0, 0.0])]);
    Ok((ModeSet::diagonal(&[chi], profiles)?, EmitterSpec::tls(omega0, [1.0, 0.0, 0.0])?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use crate::modes::real_vec3;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Single mode with `χ = chi` and a profile that gives coupling `eta`
    /// for `d = x̂`.
    fn single_mode(chi: f64, eta: f64) -> (ModeSet, EmitterSpec) {
        single_mode_tls(chi, 1.0, eta).unwrap()
    }

    #[test]
    fn coupling_direct_substitution() {
        let mut profiles = BTreeMap::new();
        profiles.insert("emitter".to_string(), vec![real_vec3([1.0, 0.0, 0.0])]);
        let ms = ModeSet::diagonal(&[1.0], profiles).unwrap();
        let em = EmitterSpec::tls(1.0, [1.0, 0.0, 0.0]).unwrap();
        let cs = couplings(&ms, &em).unwrap();
        assert!((cs.eta.as_ref().unwrap()[0] - c(UNIT_COUPLING, 0.0)).norm() < 1e-15);
        let perp = EmitterSpec::tls(1.0, [0.0, 1.0, 0.0]).unwrap();
        assert_eq!(couplings(&ms, &perp).unwrap().eta.unwrap()[0], ZERO);
    }

    #[test]
    fn complex_profile_coupling() {
        let s = FRAC_1_SQRT_2;
        let mut profiles = BTreeMap::new();
        profiles.insert("emitter".to_string(), vec![[c(s, s), ZERO, ZERO]]);
        let ms = ModeSet::diagonal(&[1.0], profiles).unwrap();
        let em = EmitterSpec::tls(1.0, [1.0, 0.0, 0.0]).unwrap();
        let eta = couplings(&ms, &em).unwrap().eta.unwrap()[0];
        assert!((eta - c(0.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn missing_profile_point() {
        let (ms, em) = single_mode(1.0, 0.3);
        let em = em.with_position("elsewhere");
        assert!(matches!(couplings(&ms, &em), Err(Error::MissingProfile(_))));
    }

    #[test]
    fn gauge_param_range() {
        assert!(GaugeParam::new(1.2).is_err());
        assert!(GaugeParam::new(-0.1).is_err());
        assert_eq!(GaugeParam::new(0.25).unwrap().theta(), 0.25);
    }

    #[test]
    fn decoupled_spectrum() {
        let (ms, em) = single_mode(1.0, 0.0);
        let em = EmitterSpec::tls(0.6, [1.0, 0.0, 0.0]).unwrap().with_position(em.position_label());
        for theta in [0.0, 0.4, 1.0] {
            let b = build_dipole(&ms, &em, GaugeParam::new(theta).unwrap(), &[6]).unwrap();
            let mut expected: Vec<f64> = (0..7).flat_map(|n| [n as f64 - 0.3, n as f64 + 0.3]).collect();
            expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let got = b.spectrum().unwrap().values;
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dipole_multipolar_matches_explicit_low_sector() {
        let (ms, em) = single_mode(1.0, 0.5);
        let b = build_dipole(&ms, &em, GaugeParam::MULTIPOLAR, &[40]).unwrap();
        let e = build_tls_multipolar_single(1.0, 1.0, c(0.5, 0.0), 40).unwrap();
        let sb = b.lowest(6).unwrap();
        let se = e.lowest(6).unwrap();
        for (x, y) in sb.iter().zip(&se) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn dipole_coulomb_matches_trig_form() {
        let (ms, em) = single_mode(1.0, 0.3);
        let b = build_dipole(&ms, &em, GaugeParam::COULOMB, &[60]).unwrap();
        let t = build_tls_coulomb_single(1.0, 1.0, c(0.3, 0.0), 60).unwrap();
        // both are U H₀ U† + H_F with the same truncated Φ
        assert!(b.h.max_abs_diff(&t.h) < 1e-10);
        assert!((b.lowest(1).unwrap()[0] - t.lowest(1).unwrap()[0]).abs() < 1e-10);
    }

    #[test]
    fn coulomb_single_limits() {
        let t = build_tls_coulomb_single(1.0, 1.0, ZERO, 5).unwrap();
        let vals = t.spectrum().unwrap().values;
        assert!((vals[0] + 0.5).abs() < 1e-14 && (vals[1] - 0.5).abs() < 1e-14);
        let free = build_tls_coulomb_single(1.0, 0.0, c(0.4, 0.0), 5).unwrap();
        let vals = free.spectrum().unwrap().values;
        for n in 0..6 {
            assert!((vals[2 * n] - n as f64).abs() < 1e-12 && (vals[2 * n + 1] - n as f64).abs() < 1e-12);
        }
        assert!(build_tls_coulomb_single(1.0, 1.0, ZERO, 0).is_err());
    }

    #[test]
    fn multipolar_single_displaced_oscillator() {
        // ω0 = 0: H = χ(a + iησx)†(a + iησx) in each σx sector, eigenvalues nχ
        // up to truncation at the top of the ladder
        let m = build_tls_multipolar_single(1.0, 0.0, c(0.5, 0.0), 40).unwrap();
        let vals = m.spectrum().unwrap().values;
        for n in 0..10 {
            assert!((vals[2 * n] - n as f64).abs() < 1e-10, "level {n}: {}", vals[2 * n]);
            assert!((vals[2 * n + 1] - n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn multipolar_single_cross_builder() {
        let (ms, em) = single_mode(1.0, 0.5);
        let b = build_dipole(&ms, &em, GaugeParam::MULTIPOLAR, &[50]).unwrap();
        let e = build_multipolar_explicit(&ms, &em, &[50]).unwrap();
        let s = build_tls_multipolar_single(1.0, 1.0, c(0.5, 0.0), 50).unwrap();
        assert!(e.h.max_abs_diff(&s.h) < 1e-14);
        for (x, y) in b.lowest(5).unwrap().iter().zip(&s.lowest(5).unwrap()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn naive_reduces_at_zero_coupling() {
        let (ms, em) = single_mode(1.0, 0.0);
        let n = build_naive(&ms, &em, GaugeParam::COULOMB, &[8], 1).unwrap();
        let c0 = build_dipole(&ms, &em, GaugeParam::COULOMB, &[8]).unwrap();
        assert!(n.h.max_abs_diff(&c0.h) < 1e-14);
        let nm = build_naive(&ms, &em, GaugeParam::MULTIPOLAR, &[8], 1).unwrap();
        assert!(nm.h.max_abs_diff(&c0.h) < 1e-14);
        assert_eq!(n.truncation, Truncation::Naive);
    }

    #[test]
    fn naive_order_one_form() {
        let (ms, em) = single_mode(1.0, 0.5);
        let n = build_naive(&ms, &em, GaugeParam::COULOMB, &[10], 1).unwrap();
        let layout = &n.layout;
        let a = crate::hilbert::ladder(&layout.space, 0).unwrap();
        let (_, sy, sz) = crate::hilbert::pauli(&layout.space, 1).unwrap();
        let phi = (&a + &a.adjoint()).scale_real(0.5);
        let oracle = &(&(&a.adjoint() * &a) + &sz.scale_real(0.5)) + &(&phi * &sy);
        assert!(n.h.max_abs_diff(&oracle) < 1e-14);
    }

    #[test]
    fn naive_gap_positive_and_growing() {
        let gap = |eta: f64| {
            let (ms, em) = single_mode(1.0, eta);
            let n = build_naive(&ms, &em, GaugeParam::COULOMB, &[40], 1).unwrap();
            let c0 = build_dipole(&ms, &em, GaugeParam::COULOMB, &[40]).unwrap();
            (n.lowest(1).unwrap()[0] - c0.lowest(1).unwrap()[0]).abs()
        };
        let small = gap(0.05);
        let large = gap(0.5);
        assert!(large > 1e-2);
        assert!(small < large);
    }

    #[test]
    fn naive_rejects_bad_orders_and_gauges() {
        let (ms, em) = single_mode(1.0, 0.2);
        assert!(build_naive(&ms, &em, GaugeParam::COULOMB, &[5], 0).is_err());
        assert!(build_naive(&ms, &em, GaugeParam::COULOMB, &[5], MAX_NAIVE_ORDER + 1).is_err());
        assert!(build_naive(&ms, &em, GaugeParam::new(0.5).unwrap(), &[5], 1).is_err());
    }

    #[test]
    fn naive_high_order_approaches_correct() {
        let (ms, em) = single_mode(1.0, 0.1);
        let correct = build_dipole(&ms, &em, GaugeParam::COULOMB, &[12]).unwrap();
        let n1 = build_naive(&ms, &em, GaugeParam::COULOMB, &[12], 1).unwrap();
        let n9 = build_naive(&ms, &em, GaugeParam::COULOMB, &[12], 9).unwrap();
        assert!(n9.h.max_abs_diff(&correct.h) < n1.h.max_abs_diff(&correct.h));
    }

    fn bd_setup(f0: f64) -> (ModeSet, EmitterSpec) {
        let mut profiles = BTreeMap::new();
        profiles.insert("emitter".to_string(), vec![real_vec3([f0, 0.0, 0.0])]);
        let ms = ModeSet::diagonal(&[1.0], profiles).unwrap();
        let em = EmitterSpec::tls(1.0, [1.0, 0.0, 0.0]).unwrap().with_single_particle(2.0).unwrap();
        (ms, em)
    }

    #[test]
    fn beyond_dipole_constant_profile_reduces() {
        let (ms, em) = bd_setup(0.6);
        let eta = c(0.6 / 2f64.sqrt(), 0.0);
        let shape = ProfileShape::Constant;
        let prof = shape.profiles(&ms, "emitter").unwrap();
        let q = SegmentQuadrature::default();
        let bc = build_beyond_dipole(&ms, &em, &prof, BdGauge::Coulomb, &[20], q).unwrap();
        let tc = build_tls_coulomb_single(1.0, 1.0, eta, 20).unwrap();
        assert!(bc.h.max_abs_diff(&tc.h) <= 1e-12);
        let bm = build_beyond_dipole(&ms, &em, &prof, BdGauge::Multipolar, &[20], q).unwrap();
        let tm = build_tls_multipolar_single(1.0, 1.0, eta, 20).unwrap();
        assert!(bm.h.max_abs_diff(&tm.h) <= 1e-12);
    }

    #[test]
    fn even_profile_has_no_identity_drive() {
        let (ms, em) = bd_setup(0.6);
        let shape = ProfileShape::Cosine { k: [1.3, 0.0, 0.0] };
        let prof = shape.profiles(&ms, "emitter").unwrap();
        let b = build_beyond_dipole(&ms, &em, &prof, BdGauge::Multipolar, &[10], SegmentQuadrature::default()).unwrap();
        let g = &b.couplings.g[0];
        assert!(g[(0, 0)].norm() < 1e-15 && g[(1, 1)].norm() < 1e-15);
        let odd = ProfileShape::ShiftedCosine { k: [1.3, 0.0, 0.0], phase: 0.4 };
        let prof = odd.profiles(&ms, "emitter").unwrap();
        let b = build_beyond_dipole(&ms, &em, &prof, BdGauge::Multipolar, &[10], SegmentQuadrature::default()).unwrap();
        assert!(b.couplings.g[0][(0, 0)].norm() > 1e-3);
    }

    #[test]
    fn cosine_profile_sinc_suppression() {
        let (ms, em) = bd_setup(0.6);
        let r = em.single_particle().unwrap().r_dip[0];
        for kr in [std::f64::consts::PI, std::f64::consts::FRAC_PI_2, 1.0] {
            let shape = ProfileShape::Cosine { k: [kr / r, 0.0, 0.0] };
            let prof = shape.profiles(&ms, "emitter").unwrap();
            let ints = segment_integrals(1, &em, &prof, SegmentQuadrature::default()).unwrap();
            // d·f ∫₀¹ cos(k r s) ds = d·f sin(kr)/(kr)
            let oracle = 0.6 * kr.sin() / kr;
            assert!((ints[0].0 - c(oracle, 0.0)).norm() < 1e-8);
            assert!((ints[0].1 - c(oracle, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn beyond_dipole_requires_single_particle() {
        let (ms, _) = bd_setup(0.6);
        let em = EmitterSpec::tls(1.0, [1.0, 0.0, 0.0]).unwrap();
        let shape = ProfileShape::Constant;
        let prof = shape.profiles(&ms, "emitter").unwrap();
        assert!(build_beyond_dipole(&ms, &em, &prof, BdGauge::Coulomb, &[5], SegmentQuadrature::default()).is_err());
    }

    #[test]
    fn quadrature_failure_is_reported() {
        let (ms, em) = bd_setup(0.6);
        let r = em.single_particle().unwrap().r_dip[0];
        let shape = ProfileShape::Cosine { k: [4000.0 / r, 0.0, 0.0] };
        let prof = shape.profiles(&ms, "emitter").unwrap();
        let q = SegmentQuadrature { nodes: 17, tol: 1e-12, max_nodes: 65 };
        let err = build_beyond_dipole(&ms, &em, &prof, BdGauge::Coulomb, &[5], q).unwrap_err();
        assert!(matches!(err, Error::NonConvergence(_)));
    }

    #[test]
    fn time_dependent_constant_matches_static() {
        let (ms, em) = single_mode(1.0, 0.4);
        let profile = TimeProfile::Constant { value: 1.0 };
        let c_td = build_time_dependent(&ms, &em, &[12], TdGauge::Coulomb, profile.clone()).unwrap();
        let m_td = build_time_dependent(&ms, &em, &[12], TdGauge::Multipolar, profile).unwrap();
        let c_st = build_dipole(&ms, &em, GaugeParam::COULOMB, &[12]).unwrap();
        let m_st = build_dipole(&ms, &em, GaugeParam::MULTIPOLAR, &[12]).unwrap();
        assert!(c_td.matrix_at(3.0).unwrap().max_abs_diff(&c_st.h) < 1e-12);
        assert!(m_td.matrix_at(3.0).unwrap().max_abs_diff(&m_st.h) < 1e-12);
    }

    #[test]
    fn time_dependent_zero_is_decoupled() {
        let (ms, em) = single_mode(1.0, 0.4);
        let td = build_time_dependent(&ms, &em, &[8], TdGauge::Multipolar, TimeProfile::Constant { value: 0.0 }).unwrap();
        let (free_ms, free_em) = single_mode(1.0, 0.0);
        let free = build_dipole(&free_ms, &free_em, GaugeParam::COULOMB, &[8]).unwrap();
        assert!(td.matrix_at(1.0).unwrap().max_abs_diff(&free.h) < 1e-13);
    }

    #[test]
    fn time_dependent_apply_matches_matrix() {
        let (ms, em) = single_mode(1.0, 0.5);
        for gauge in [TdGauge::Coulomb, TdGauge::Multipolar] {
            let td = build_time_dependent(&ms, &em, &[10], gauge, TimeProfile::raised_cosine(20.0)).unwrap();
            let h = td.matrix_at(7.3).unwrap();
            let psi: Vec<C64> = (0..td.dim()).map(|k| c((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())).collect();
            let a = td.apply(7.3, &psi);
            let b = h.apply(&psi);
            let diff = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "{gauge:?}");
        }
    }

    #[test]
    fn longitudinal_hook_is_gauge_neutral() {
        let (ms, em) = single_mode(1.0, 0.3);
        let long = Longitudinal::Custom { modes: vec![LongitudinalMode { omega: 1.5, coupling: [0.2, 0.0, 0.0], cutoff: 3 }] };
        let a = build_dipole_with(&ms, &em, GaugeParam::COULOMB, &[20], &long).unwrap();
        let b = build_dipole_with(&ms, &em, GaugeParam::MULTIPOLAR, &[20], &long).unwrap();
        assert_eq!(a.layout.dim(), 21 * 2 * 4);
        for (x, y) in a.lowest(5).unwrap().iter().zip(&b.lowest(5).unwrap()) {
            assert!((x - y).abs() < 1e-9);
        }
        let json = serde_json::to_string(&Longitudinal::Off).unwrap();
        assert_eq!(json, "\"off\"");
    }
}
