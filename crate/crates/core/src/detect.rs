//! Mode-truncated field operators and golden-rule photodetection rates.
//!
//! Rates are reported up to the common density-of-final-states constant.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaugecheck::gauge_unitary;
use crate::hamiltonians::HamiltonianBundle;
use crate::hilbert::{FactorKind, HilbertSpec, Operator, Spectrum};
use crate::modes::{dot, real_vec3, ModeSet, Vec3};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Detector frequencies must match the transition to this absolute
/// tolerance.
pub const MATCHING_TOL: f64 = 1e-6;

/// A weakly coupled two-level detector with dipole `d_d σx^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub omega_d: f64,
    pub d_d: [f64; 3],
    pub r_d: String,
}

impl DetectorSpec {
    pub fn new(omega_d: f64, d_d: [f64; 3], r_d: impl Into<String>) -> Result<Self> {
        let det = DetectorSpec { omega_d, d_d, r_d: r_d.into() };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_d > 0.0) || !self.omega_d.is_finite() {
            return Err(Error::invalid(format!("detector frequency must be positive, got {}", self.omega_d)));
        }
        if self.d_d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// Same detector retuned to `omega_d`.
    pub fn tuned(&self, omega_d: f64) -> Result<Self> {
        DetectorSpec::new(omega_d, self.d_d, self.r_d.clone())
    }
}

/// Cartesian components of a vector-valued operator.
#[derive(Clone, Debug)]
pub struct VectorOperator(pub [Operator; 3]);

impl VectorOperator {
    /// `v·Ô` for a real vector `v`.
    pub fn dot(&self, v: [f64; 3]) -> Operator {
        let [x, y, z] = &self.0;
        &(&x.scale_real(v[0]) + &y.scale_real(v[1])) + &z.scale_real(v[2])
    }
}

fn mode_count(space: &HilbertSpec, m: usize) -> Result<()> {
    let leading = space.factors().iter().take_while(|f| f.kind == FactorKind::Photon).count();
    if leading < m {
        return Err(Error::DimensionMismatch(format!("space has {leading} leading photon factors, mode set has {m}")));
    }
    Ok(())
}

/// `Σ_μ c_μ a_μ + h.c.` for each Cartesian component of `c_μ`.
fn linear_field(space: &HilbertSpec, coeffs: &[Vec3]) -> Result<VectorOperator> {
    mode_count(space, coeffs.len())?;
    let n = space.dim();
    let mut comps: Vec<Operator> = Vec::with_capacity(3);
    for c in 0..3 {
        let mut out = Mat::<C64>::zeros(n, n);
        for (mu, coeff) in coeffs.iter().enumerate() {
            let k = coeff[c];
            if k == ZERO {
                continue;
            }
            let d = space.factors()[mu].dim;
            let local = Mat::from_fn(d, d, |i, j| {
                if j == i + 1 {
                    k * (j as f64).sqrt()
                } else if i == j + 1 {
                    k.conj() * (i as f64).sqrt()
                } else {
                    ZERO
                }
            });
            out += space.embed(mu, local.as_ref())?;
        }
        comps.push(Operator::new(space.clone(), out)?.hermitize(1e-14)?);
    }
    let [x, y, z]: [Operator; 3] = comps.try_into().expect("three components");
    Ok(VectorOperator([x, y, z]))
}

/// `Â⊥(x) = Σ_μ f_μ(x) a_μ / √(2χ_μμ) + h.c.` on the leading photon factors
/// of `space`.
pub fn vector_potential(ms: &ModeSet, space: &HilbertSpec, point: &str) -> Result<VectorOperator> {
    let f = ms.profile(point)?;
    let coeffs: Vec<Vec3> = (0..ms.m())
        .map(|mu| {
            let s = 1.0 / (2.0 * ms.chi_diag(mu)).sqrt();
            [f[mu][0] * s, f[mu][1] * s, f[mu][2] * s]
        })
        .collect();
    linear_field(space, &coeffs)
}

fn e_coefficients(ms: &ModeSet, profiles: &[Vec3]) -> Vec<Vec3> {
    let i = C64::new(0.0, 1.0);
    (0..ms.m())
        .map(|mu| {
            let s = i * (0.5 * ms.chi_diag(mu)).sqrt();
            [profiles[mu][0] * s, profiles[mu][1] * s, profiles[mu][2] * s]
        })
        .collect()
}

/// Correctly truncated `Ê⊥(x) = i Σ_μ √(χ_μμ/2) f'_μ(x) a_μ + h.c.`.
pub fn truncated_e_operator(ms: &ModeSet, space: &HilbertSpec, point: &str) -> Result<VectorOperator> {
    let fp = ms.derived_profile(point)?;
    linear_field(space, &e_coefficients(ms, fp))
}

/// Field with `f` in place of `f'`, the direct truncation of the
/// electric-field expansion.
pub fn naive_e_operator(ms: &ModeSet, space: &HilbertSpec, point: &str) -> Result<VectorOperator> {
    let f = ms.profile(point)?;
    linear_field(space, &e_coefficients(ms, f))
}

/// `χ_λν (N_λ+1) |N_λ⟩⟨N_λ| a_ν` terms, summed with the field prefactors:
/// the part of `−i[H_F, Â⊥]` that comes from the truncated ladders, so that
/// `Ê⊥ + boundary = −i[H_F, Â⊥]` holds on the full truncated space.
pub fn commutator_boundary_term(ms: &ModeSet, space: &HilbertSpec, point: &str) -> Result<VectorOperator> {
    let m = ms.m();
    mode_count(space, m)?;
    let f = ms.profile(point)?;
    let chi = ms.chi();
    let n = space.dim();
    let i = C64::new(0.0, 1.0);
    let mut comps = Vec::with_capacity(3);
    for c in 0..3 {
        let mut out = Mat::<C64>::zeros(n, n);
        for lam in 0..m {
            let dl = space.factors()[lam].dim;
            let top = Mat::from_fn(dl, dl, |r, s| if r == dl - 1 && s == dl - 1 { C64::new(dl as f64, 0.0) } else { ZERO });
            for nu in 0..m {
                if nu == lam || chi[(lam, nu)] == ZERO {
                    continue;
                }
                let dn = space.factors()[nu].dim;
                let a_nu = Mat::from_fn(dn, dn, |r, s| if s == r + 1 { C64::new((s as f64).sqrt(), 0.0) } else { ZERO });
                // −i[χ_λν a†_λ a_ν, Â] contains −i f_λ χ_λν (N+1)|N⟩⟨N|_λ a_ν / √(2χ_λλ)
                let k = -i * f[lam][c] * chi[(lam, nu)] / (2.0 * ms.chi_diag(lam)).sqrt();
                let term = space.embed_product(&[(lam, top.as_ref()), (nu, a_nu.as_ref())])?;
                let scaled = Mat::from_fn(n, n, |r, s| term[(r, s)] * k);
                out = out + &scaled + scaled.adjoint();
            }
        }
        comps.push(Operator::new(space.clone(), out)?);
    }
    let [x, y, z]: [Operator; 3] = comps.try_into().expect("three components");
    Ok(VectorOperator([x, y, z]))
}

/// Field operator seen by the detector in the gauge of `bundle`: the photon
/// operators are displaced to `a_μ + iθG_μ`.
fn displaced_field(bundle: &HamiltonianBundle, field: &VectorOperator, coeffs: &[Vec3], d: [f64; 3]) -> Result<Operator> {
    let base = field.dot(d);
    if bundle.theta == 0.0 {
        return Ok(base);
    }
    let layout = &bundle.layout;
    let lev = layout.matter_dim();
    let dv = real_vec3(d);
    let mut shift = Mat::<C64>::zeros(lev, lev);
    for (mu, g) in bundle.couplings.g.iter().enumerate() {
        // c_μ (iθ G_μ) + h.c.
        let k = dot(&dv, &coeffs[mu]) * C64::new(0.0, bundle.theta);
        shift += Mat::from_fn(lev, lev, |i, j| k * g[(i, j)] + (k * g[(j, i)]).conj());
    }
    Ok(&base + &layout.matter_op(shift.as_ref())?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FieldKind {
    Correct,
    Naive,
}

fn detection_operator(bundle: &HamiltonianBundle, ms: &ModeSet, det: &DetectorSpec, kind: FieldKind) -> Result<Operator> {
    let space = bundle.space();
    let profiles = match kind {
        FieldKind::Correct => ms.derived_profile(&det.r_d)?,
        FieldKind::Naive => ms.profile(&det.r_d)?,
    };
    let coeffs = e_coefficients(ms, profiles);
    let field = linear_field(space, &coeffs)?;
    displaced_field(bundle, &field, &coeffs, det.d_d)
}

fn check_resonance(spec: &Spectrum, det: &DetectorSpec, i: usize, j: usize) -> Result<()> {
    det.validate()?;
    if i >= spec.len() || j >= spec.len() {
        return Err(Error::invalid(format!("eigenstate index out of range ({i}, {j}) for {} levels", spec.len())));
    }
    let transition = spec.values[j] - spec.values[i];
    let diff = (det.omega_d - transition).abs();
    if diff > MATCHING_TOL {
        return Err(Error::FrequencyMismatch { detector: det.omega_d, transition, diff });
    }
    Ok(())
}

fn rate(op: &Operator, spec: &Spectrum, i: usize, j: usize) -> f64 {
    op.matrix_element(&spec.vector(i), &spec.vector(j)).norm_sqr()
}

/// Golden-rule rate for `|j⟩ → |i⟩` eigenstates of `bundle` (ascending
/// order). Coulomb bundles (θ = 0) use `|⟨i|ω_d d_d·Â⊥|j⟩|²`; other gauges
/// use `|⟨i|d_d·Ê⊥|j⟩|²` with the photon operators displaced to
/// `a_μ + iθG_μ`, which at θ = 1 is the multipolar form.
pub fn detection_rate(bundle: &HamiltonianBundle, ms: &ModeSet, det: &DetectorSpec, i: usize, j: usize) -> Result<f64> {
    let spec = bundle.spectrum()?;
    detection_rate_with(bundle, &spec, ms, det, i, j)
}

/// [`detection_rate`] with a precomputed spectrum of `bundle.h`.
pub fn detection_rate_with(
    bundle: &HamiltonianBundle,
    spec: &Spectrum,
    ms: &ModeSet,
    det: &DetectorSpec,
    i: usize,
    j: usize,
) -> Result<f64> {
    check_resonance(spec, det, i, j)?;
    let op = if bundle.theta == 0.0 {
        vector_potential(ms, bundle.space(), &det.r_d)?.dot(det.d_d).scale_real(det.omega_d)
    } else {
        detection_operator(bundle, ms, det, FieldKind::Correct)?
    };
    Ok(rate(&op, spec, i, j))
}

/// Rates with the correctly truncated field and with the naive one, plus
/// `|R_correct − R_naive| / R_correct` (zero when both vanish).
pub fn naive_rate_gap(bundle: &HamiltonianBundle, ms: &ModeSet, det: &DetectorSpec, i: usize, j: usize) -> Result<(f64, f64, f64)> {
    let spec = bundle.spectrum()?;
    check_resonance(&spec, det, i, j)?;
    let correct = rate(&detection_operator(bundle, ms, det, FieldKind::Correct)?, &spec, i, j);
    let naive = rate(&detection_operator(bundle, ms, det, FieldKind::Naive)?, &spec, i, j);
    let gap = if correct == 0.0 && naive == 0.0 { 0.0 } else { (correct - naive).abs() / correct };
    Ok((correct, naive, gap))
}

/// One transition of a cross-gauge rate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub i: usize,
    pub j: usize,
    pub omega_ij: f64,
    pub r_coulomb: f64,
    pub r_multipolar: f64,
    pub rel_diff: f64,
}

/// Minimum `|⟨n_mp|W|n_C⟩|` accepted when pairing eigenstates.
pub const PAIRING_OVERLAP: f64 = 0.999;

/// Pairs each of the `k` lowest Coulomb eigenstates with the multipolar
/// eigenstate of maximal overlap after the gauge map, returning the
/// multipolar index for each Coulomb index.
pub fn pair_eigenstates(
    coulomb: &HamiltonianBundle,
    sc: &Spectrum,
    multipolar: &HamiltonianBundle,
    sm: &Spectrum,
    k: usize,
) -> Result<Vec<usize>> {
    let w = gauge_unitary(coulomb.space(), &coulomb.couplings, coulomb.theta, multipolar.theta)?;
    let window = (2 * k + 4).min(sm.len());
    let mut used = vec![false; window];
    let mut out = Vec::with_capacity(k);
    for n in 0..k {
        let mapped = w.apply(&sc.vector(n));
        let (best, overlap) = (0..window)
            .filter(|&m| !used[m])
            .map(|m| (m, crate::hilbert::inner(&sm.vector(m), &mapped).norm()))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == usize::MAX || overlap < PAIRING_OVERLAP {
            return Err(Error::Invariant(format!(
                "Coulomb eigenstate {n} has no multipolar partner (best overlap {overlap:.6})"
            )));
        }
        used[best] = true;
        out.push(best);
    }
    Ok(out)
}

/// Rates `|j⟩ → |i⟩` in both gauges for each transition, with the detector
/// tuned to the Coulomb transition frequency and multipolar states paired by
/// overlap.
pub fn rate_table(
    coulomb: &HamiltonianBundle,
    multipolar: &HamiltonianBundle,
    ms: &ModeSet,
    det: &DetectorSpec,
    transitions: &[(usize, usize)],
) -> Result<Vec<RateRow>> {
    let sc = coulomb.spectrum()?;
    let sm = multipolar.spectrum()?;
    let k = transitions.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0);
    let pairs = pair_eigenstates(coulomb, &sc, multipolar, &sm, k)?;
    transitions
        .iter()
        .map(|&(i, j)| {
            let omega_ij = sc.values[j] - sc.values[i];
            let tuned = det.tuned(omega_ij)?;
            let r_coulomb = detection_rate_with(coulomb, &sc, ms, &tuned, i, j)?;
            let r_multipolar = detection_rate_with(multipolar, &sm, ms, &tuned, pairs[i], pairs[j])?;
            let rel_diff = if r_coulomb == 0.0 && r_multipolar == 0.0 {
                0.0
            } else {
                (r_coulomb - r_multipolar).abs() / r_coulomb.max(r_multipolar)
            };
            Ok(RateRow { i, j, omega_ij, r_coulomb, r_multipolar, rel_diff })
        })
        .collect()
}

/// The first `count` upward transitions from the ground state whose Coulomb
/// rate exceeds `rel_floor` times the largest rate among the lowest `search`
/// levels; transitions forbidden by parity are skipped. When every rate
/// vanishes the lowest `count` transitions are returned.
pub fn resonant_transitions(
    coulomb: &HamiltonianBundle,
    ms: &ModeSet,
    det: &DetectorSpec,
    count: usize,
    search: usize,
    rel_floor: f64,
) -> Result<Vec<(usize, usize)>> {
    let sc = coulomb.spectrum()?;
    let search = search.min(sc.len());
    let mut rates = Vec::with_capacity(search);
    for j in 1..search {
        let omega = sc.values[j] - sc.values[0];
        if !(omega > MATCHING_TOL) {
            continue;
        }
        let r = detection_rate_with(coulomb, &sc, ms, &det.tuned(omega)?, 0, j)?;
        rates.push((j, r));
    }
    let peak = rates.iter().map(|r| r.1).fold(0.0, f64::max);
    if peak == 0.0 {
        // nothing couples (e.g. d_d = 0): report the lowest transitions
        return Ok(rates.into_iter().take(count).map(|r| (0, r.0)).collect());
    }
    Ok(rates.into_iter().filter(|r| r.1 > rel_floor * peak).take(count).map(|r| (0, r.0)).collect())
}

pub fn write_rate_csv(rows: &[RateRow], mut out: impl std::io::Write) -> Result<()> {
    writeln!(out, "i,j,omega_ij,R_coulomb,R_multipolar,rel_diff")?;
    for r in rows {
        writeln!(out, "{},{},{:.15e},{:.15e},{:.15e},{:e}", r.i, r.j, r.omega_ij, r.r_coulomb, r.r_multipolar, r.rel_diff)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::{build_dipole, single_mode_tls, GaugeParam};
    use std::collections::BTreeMap;

    fn two_mode() -> ModeSet {
        let chi = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => C64::new(1.0, 0.0),
            (1, 1) => C64::new(1.4, 0.0),
            (0, 1) => C64::new(0.2, 0.1),
            _ => C64::new(0.2, -0.1),
        });
        let mut profiles = BTreeMap::new();
        profiles.insert(
            "emitter".to_string(),
            vec![real_vec3([0.8, 0.0, 0.1]), [C64::new(0.3, 0.2), ZERO, C64::new(0.0, 0.4)]],
        );
        profiles.insert("detector".to_string(), vec![real_vec3([0.5, 0.2, 0.0]), real_vec3([-0.4, 0.6, 0.0])]);
        ModeSet::new(chi, profiles).unwrap()
    }

    #[test]
    fn field_matches_heisenberg_derivative_away_from_ladder_top() {
        let ms = two_mode();
        let space = HilbertSpec::new(vec![crate::hilbert::Factor::photon(5), crate::hilbert::Factor::photon(4)]).unwrap();
        let mut h_f = Mat::<C64>::zeros(space.dim(), space.dim());
        for mu in 0..2 {
            for nu in 0..2 {
                let a_mu = crate::hilbert::ladder(&space, mu).unwrap();
                let a_nu = crate::hilbert::ladder(&space, nu).unwrap();
                h_f += (&a_mu.adjoint() * &a_nu).scale(ms.chi()[(mu, nu)]).into_matrix();
            }
        }
        let h_f = Operator::new(space.clone(), h_f).unwrap();
        let a = vector_potential(&ms, &space, "detector").unwrap();
        let e = truncated_e_operator(&ms, &space, "detector").unwrap();
        let b = commutator_boundary_term(&ms, &space, "detector").unwrap();
        for c in 0..3 {
            let deriv = h_f.commutator(&a.0[c]).scale(C64::new(0.0, -1.0));
            let with_boundary = &e.0[c] + &b.0[c];
            assert!(deriv.max_abs_diff(&with_boundary) < 1e-12);
        }
    }

    #[test]
    fn zero_profile_gives_zero_field() {
        let mut profiles = BTreeMap::new();
        profiles.insert("node".to_string(), vec![real_vec3([0.0; 3])]);
        let ms = ModeSet::diagonal(&[1.0], profiles).unwrap();
        let space = HilbertSpec::modes_with_matter(&[4], 2).unwrap();
        let e = truncated_e_operator(&ms, &space, "node").unwrap();
        assert_eq!(e.dot([1.0, 1.0, 1.0]).max_abs(), 0.0);
    }

    #[test]
    fn decoupled_one_photon_rate() {
        let (ms, em) = single_mode_tls(1.3, 0.7, 0.0).unwrap();
        let mut profiles = BTreeMap::new();
        profiles.insert("emitter".to_string(), ms.profile("emitter").unwrap().to_vec());
        profiles.insert("det".to_string(), vec![real_vec3([0.2, 0.5, 0.0])]);
        let ms = ModeSet::diagonal(&[1.3], profiles).unwrap();
        let b = build_dipole(&ms, &em, GaugeParam::COULOMB, &[4]).unwrap();
        // levels: |0,g⟩ = -0.35, |0,e⟩ = 0.35, |1,g⟩ = 0.95
        let spec = b.spectrum().unwrap();
        let (i, j) = (0, 2);
        assert!((spec.values[j] - spec.values[i] - 1.3).abs() < 1e-12);
        let det = DetectorSpec::new(1.3, [1.0, 0.3, -0.2], "det").unwrap();
        let r = detection_rate(&b, &ms, &det, i, j).unwrap();
        let df: f64 = 1.0 * 0.2 + 0.3 * 0.5;
        let oracle = 1.3 * 1.3 * df * df / (2.0 * 1.3);
        assert!((r - oracle).abs() < 1e-12, "{r} vs {oracle}");
        let zero = DetectorSpec::new(1.3, [0.0; 3], "det").unwrap();
        assert_eq!(detection_rate(&b, &ms, &zero, i, j).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_detector_is_rejected() {
        let (ms, em) = single_mode_tls(1.0, 1.0, 0.2).unwrap();
        let b = build_dipole(&ms, &em, GaugeParam::COULOMB, &[6]).unwrap();
        let det = DetectorSpec::new(0.37, [1.0, 0.0, 0.0], "emitter").unwrap();
        assert!(matches!(detection_rate(&b, &ms, &det, 0, 1), Err(Error::FrequencyMismatch { .. })));
        assert!(DetectorSpec::new(-1.0, [1.0, 0.0, 0.0], "emitter").is_err());
    }

    #[test]
    fn diagonal_chi_has_no_naive_gap() {
        let (ms, em) = single_mode_tls(1.0, 1.0, 0.3).unwrap();
        let b = build_dipole(&ms, &em, GaugeParam::COULOMB, &[20]).unwrap();
        let spec = b.spectrum().unwrap();
        let det = DetectorSpec::new(spec.values[1] - spec.values[0], [1.0, 0.0, 0.0], "emitter").unwrap();
        let (rc, rn, gap) = naive_rate_gap(&b, &ms, &det, 0, 1).unwrap();
        assert!(rc > 0.0);
        assert_eq!(rc, rn);
        assert_eq!(gap, 0.0);
    }
}
