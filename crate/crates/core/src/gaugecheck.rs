//! Gauge-transformation unitaries on the truncated space and checks of
//! spectral and operator equivalence between builders.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{
    build_dipole, build_naive, generator, single_mode_tls, CouplingSet, GaugeParam, HamiltonianBundle, Layout,
};
use crate::hilbert::{FactorKind, HilbertSpec, Operator, SpectralExp};

/// `W = exp(−i(θ_to − θ_from)X)` with the generator built from `couplings`.
/// Maps `H(θ_from)` to `H(θ_to)` exactly on the truncated space.
pub fn gauge_unitary(space: &HilbertSpec, couplings: &CouplingSet, theta_from: f64, theta_to: f64) -> Result<Operator> {
    let layout = Layout::from_space(space)?;
    let x = generator(&layout, couplings)?;
    SpectralExp::new(&x)?.unitary(-(theta_to - theta_from))
}

/// Comparison of two Hamiltonians on the same space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub k: usize,
    /// `|λ_a,n − λ_b,n|` for the `k` lowest levels.
    pub diffs: Vec<f64>,
    pub max_abs_diff: f64,
    /// `max |((W H_a W† − H_b) P_low)_ij|`.
    pub operator_residual: f64,
    pub low_fraction: f64,
    pub cutoffs: Vec<usize>,
    pub tol: f64,
    pub within_tolerance: bool,
    /// Set by [`converged_equivalence`]: the levels of both Hamiltonians
    /// moved by less than `tol/10` on doubling the cutoff.
    pub converged: bool,
}

/// Basis indices where every photon factor sits in the lowest
/// `low_fraction` of its Fock ladder.
pub fn low_sector(space: &HilbertSpec, low_fraction: f64) -> Result<Vec<usize>> {
    if !(low_fraction > 0.0 && low_fraction <= 1.0) {
        return Err(Error::invalid(format!("low_fraction {low_fraction} outside (0, 1]")));
    }
    let limits: Vec<Option<usize>> = space
        .factors()
        .iter()
        .map(|f| match f.kind {
            FactorKind::Photon => Some(((f.dim as f64 * low_fraction).ceil() as usize).max(1)),
            FactorKind::Matter => None,
        })
        .collect();
    Ok((0..space.dim())
        .filter(|&idx| space.digits(idx).iter().zip(&limits).all(|(&d, lim)| lim.is_none_or(|l| d < l)))
        .collect())
}

/// Lowest-`k` eigenvalue comparison plus the operator residual under the
/// gauge unitary from `a.theta` to `b.theta` (built from `a`'s couplings).
pub fn verify_spectral_equivalence(
    a: &HamiltonianBundle,
    b: &HamiltonianBundle,
    k: usize,
    low_fraction: f64,
    tol: f64,
) -> Result<EquivalenceReport> {
    if a.space() != b.space() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", a.space(), b.space())));
    }
    let dim = a.space().dim();
    if k == 0 || k > dim {
        return Err(Error::invalid(format!("cannot compare {k} eigenvalues in a {dim}-dimensional space")));
    }
    let la = a.lowest(k)?;
    let lb = b.lowest(k)?;
    let diffs: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| (x - y).abs()).collect();
    let max_abs_diff = diffs.iter().cloned().fold(0.0, f64::max);
    let w = gauge_unitary(a.space(), &a.couplings, a.theta, b.theta)?;
    let mapped = a.h.conjugate_by(&w);
    let delta = &mapped - &b.h;
    let cols = low_sector(a.space(), low_fraction)?;
    let operator_residual = cols
        .iter()
        .flat_map(|&j| (0..dim).map(move |i| (i, j)))
        .map(|(i, j)| delta.get(i, j).norm())
        .fold(0.0, f64::max);
    Ok(EquivalenceReport {
        k,
        within_tolerance: max_abs_diff < tol,
        diffs,
        max_abs_diff,
        operator_residual,
        low_fraction,
        cutoffs: a.space().fock_cutoffs(),
        tol,
        converged: false,
    })
}

/// Evaluates `build(N)` and `build(2N)`; the report is the one at `N`, marked
/// converged when no compared level of either Hamiltonian moved by
/// `tol/10` or more.
pub fn converged_equivalence(
    build: impl Fn(usize) -> Result<(HamiltonianBundle, HamiltonianBundle)>,
    cutoff: usize,
    k: usize,
    low_fraction: f64,
    tol: f64,
) -> Result<EquivalenceReport> {
    let (a, b) = build(cutoff)?;
    let (a2, b2) = build(2 * cutoff)?;
    let mut report = verify_spectral_equivalence(&a, &b, k, low_fraction, tol)?;
    let shift = level_shift(&a, &a2, k)?.max(level_shift(&b, &b2, k)?);
    report.converged = shift < 0.1 * tol;
    Ok(report)
}

fn level_shift(coarse: &HamiltonianBundle, fine: &HamiltonianBundle, k: usize) -> Result<f64> {
    let c = coarse.lowest(k)?;
    let f = fine.lowest(k)?;
    Ok(c.iter().zip(&f).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// One row of an ambiguity scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityRow {
    pub eta: f64,
    /// `|E₀(naive Coulomb, order 1) − E₀(multipolar)|`.
    pub naive_gap: f64,
    /// `|E₀(θ=0) − E₀(θ=1)|`.
    pub correct_gap: f64,
    pub cutoff: usize,
    /// Both gaps moved by less than `tol/10` on doubling the cutoff.
    pub converged: bool,
}

fn ground_gaps(chi: f64, omega0: f64, eta: f64, cutoff: usize) -> Result<(f64, f64)> {
    let (ms, em) = single_mode_tls(chi, omega0, eta)?;
    let e_c = build_dipole(&ms, &em, GaugeParam::COULOMB, &[cutoff])?.lowest(1)?[0];
    let e_mp = build_dipole(&ms, &em, GaugeParam::MULTIPOLAR, &[cutoff])?.lowest(1)?[0];
    let e_naive = build_naive(&ms, &em, GaugeParam::COULOMB, &[cutoff], 1)?.lowest(1)?[0];
    Ok(((e_naive - e_mp).abs(), (e_c - e_mp).abs()))
}

/// Single-mode two-level scan point at coupling `eta`.
pub fn ambiguity_row(chi: f64, omega0: f64, eta: f64, cutoff: usize, tol: f64) -> Result<AmbiguityRow> {
    let (naive_gap, correct_gap) = ground_gaps(chi, omega0, eta, cutoff)?;
    let (naive2, correct2) = ground_gaps(chi, omega0, eta, 2 * cutoff)?;
    let converged = (naive2 - naive_gap).abs() < 0.1 * tol && (correct2 - correct_gap).abs() < 0.1 * tol;
    Ok(AmbiguityRow { eta, naive_gap, correct_gap, cutoff, converged })
}

pub fn ambiguity_scan(chi: f64, omega0: f64, etas: &[f64], cutoff: usize, tol: f64) -> Result<Vec<AmbiguityRow>> {
    etas.iter().map(|&eta| ambiguity_row(chi, omega0, eta, cutoff, tol)).collect()
}

/// Writes `eta,naive_gap,correct_gap,cutoff,converged` rows.
pub fn write_ambiguity_csv(rows: &[AmbiguityRow], mut out: impl std::io::Write) -> Result<()> {
    writeln!(out, "eta,naive_gap,correct_gap,cutoff,converged")?;
    for r in rows {
        writeln!(out, "{},{:e},{:e},{},{}", r.eta, r.naive_gap, r.correct_gap, r.cutoff, r.converged)?;
    }
    Ok(())
}

/// Largest `|W†W − I|` entry.
pub fn unitarity_defect(w: &Operator) -> f64 {
    w.unitary_deviation()
}

/// `max |(A − B)_ij|` between two unitaries, for composition checks.
pub fn composition_defect(a: &Operator, b: &Operator) -> f64 {
    a.max_abs_diff(b)
}

/// `⟨ψ_b|W|ψ_a⟩` overlaps used to pair eigenstates across gauges.
pub fn mapped_overlap(w: &Operator, psi_a: &[C64], psi_b: &[C64]) -> C64 {
    w.matrix_element(psi_b, psi_a)
}
