//! Schrödinger-equation integration for static and time-dependent
//! Hamiltonians, and the cross-gauge check for time-dependent coupling.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{build_time_dependent, TdGauge, TimeDependentHamiltonian};
use crate::hilbert::{herm_eig, matvec, norm, Operator};
use crate::matter::{EmitterSpec, TimeProfile};
use crate::modes::ModeSet;

/// Norm drift tolerated on any stored state.
pub const NORM_TOL: f64 = 1e-8;

/// An observable recorded along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    /// Photon numbers, `σz` and `X` refer to gauge-dependent operators and
    /// are not paired across gauges.
    pub gauge_relative: bool,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub observables: Vec<Series>,
    /// Accepted integration steps (zero for eigen-propagation).
    pub steps: usize,
}

impl Trajectory {
    pub fn max_norm_error(&self) -> f64 {
        self.states.iter().map(|s| (norm(s) - 1.0).abs()).fold(0.0, f64::max)
    }

    /// CSV with a `t` column and one column per observable.
    pub fn write_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.observables.iter().map(|s| s.label.clone()));
        writeln!(out, "{}", header.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t}")];
            row.extend(self.observables.iter().map(|s| format!("{:.15e}", s.values[k])));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// State dump: `t,index,re,im` rows.
    pub fn write_states_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        writeln!(out, "t,index,re,im")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            for (i, v) in s.iter().enumerate() {
                writeln!(out, "{t},{i},{:.17e},{:.17e}", v.re, v.im)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepControl {
    /// Classic RK4 with steps no longer than `dt`.
    Fixed { dt: f64 },
    /// RK4 with step doubling: a step is accepted when the full-step and
    /// two-half-step results differ by at most `tol·dt`.
    Adaptive { tol: f64, dt_initial: f64, dt_min: f64 },
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::Adaptive { tol: 1e-8, dt_initial: 0.05, dt_min: 1e-7 }
    }
}

fn check_initial(psi0: &[C64], dim: usize, times: &[f64]) -> Result<()> {
    if psi0.len() != dim {
        return Err(Error::DimensionMismatch(format!("state of length {} for dimension {dim}", psi0.len())));
    }
    if (norm(psi0) - 1.0).abs() > NORM_TOL {
        return Err(Error::invalid("initial state is not normalized"));
    }
    if times.is_empty() || times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::invalid("time grid must be non-empty and non-decreasing"));
    }
    Ok(())
}

fn record(observables: &[(String, Operator)], states: &[Vec<C64>]) -> Vec<Series> {
    observables
        .iter()
        .map(|(label, op)| Series {
            label: label.clone(),
            gauge_relative: true,
            values: states.iter().map(|s| op.expectation(s).re).collect(),
        })
        .collect()
}

/// Exact propagation `ψ(t) = Σ_n e^{−iE_n(t−t₀)} ⟨n|ψ0⟩ |n⟩`.
pub fn evolve_static(h: &Operator, psi0: &[C64], times: &[f64], observables: &[(String, Operator)]) -> Result<Trajectory> {
    check_initial(psi0, h.dim(), times)?;
    let spec = herm_eig(h)?;
    let q = spec.vectors.matrix();
    let coeffs = matvec(q.adjoint().to_owned().as_ref(), psi0);
    let t0 = times[0];
    let states: Vec<Vec<C64>> = times
        .iter()
        .map(|&t| {
            let phased: Vec<C64> = coeffs
                .iter()
                .zip(&spec.values)
                .map(|(c, e)| c * C64::from_polar(1.0, -e * (t - t0)))
                .collect();
            matvec(q, &phased)
        })
        .collect();
    finish(times, states, observables, 0)
}

fn finish(times: &[f64], states: Vec<Vec<C64>>, observables: &[(String, Operator)], steps: usize) -> Result<Trajectory> {
    let traj = Trajectory { times: times.to_vec(), observables: record(observables, &states), states, steps };
    let drift = traj.max_norm_error();
    if drift > NORM_TOL {
        return Err(Error::NonConvergence(format!("norm drifted by {drift:e}")));
    }
    Ok(traj)
}

fn axpy(y: &[C64], a: C64, x: &[C64]) -> Vec<C64> {
    y.iter().zip(x).map(|(y, x)| y + a * x).collect()
}

/// One classic RK4 step of `dψ/dt = −iH(t)ψ`.
fn rk4_step(h: &TimeDependentHamiltonian, t: f64, dt: f64, psi: &[C64]) -> Vec<C64> {
    let mi = C64::new(0.0, -1.0);
    let f = |t: f64, y: &[C64]| -> Vec<C64> { h.apply(t, y).into_iter().map(|v| v * mi).collect() };
    let k1 = f(t, psi);
    let k2 = f(t + 0.5 * dt, &axpy(psi, C64::new(0.5 * dt, 0.0), &k1));
    let k3 = f(t + 0.5 * dt, &axpy(psi, C64::new(0.5 * dt, 0.0), &k2));
    let k4 = f(t + dt, &axpy(psi, C64::new(dt, 0.0), &k3));
    (0..psi.len()).map(|i| psi[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (dt / 6.0)).collect()
}

fn diff_norm(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Integration stops: the requested times plus the profile's breakpoints,
/// so that no step straddles a kink in `μ̇`.
fn stops(times: &[f64], breakpoints: &[f64]) -> Vec<f64> {
    let (lo, hi) = (times[0], times[times.len() - 1]);
    let mut all: Vec<f64> = times.to_vec();
    all.extend(breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    all.dedup();
    all
}

/// Integrates `i∂ψ/∂t = H(t)ψ` and stores the state at each requested time.
/// Static profiles are propagated exactly through the eigendecomposition.
pub fn evolve(
    h: &TimeDependentHamiltonian,
    psi0: &[C64],
    times: &[f64],
    control: StepControl,
    observables: &[(String, Operator)],
) -> Result<Trajectory> {
    check_initial(psi0, h.dim(), times)?;
    if h.profile.is_static() {
        return evolve_static(&h.matrix_at(times[0])?, psi0, times, observables);
    }
    let segments = stops(times, &h.profile.breakpoints());
    let mut psi = psi0.to_vec();
    let mut states = vec![psi.clone()];
    let mut next_time = 1;
    let mut steps = 0;
    let mut dt_guess = match control {
        StepControl::Fixed { dt } | StepControl::Adaptive { dt_initial: dt, .. } => dt,
    };
    if !(dt_guess > 0.0) {
        return Err(Error::invalid("time step must be positive"));
    }
    for w in segments.windows(2) {
        let (a, b) = (w[0], w[1]);
        match control {
            StepControl::Fixed { dt } => {
                let n = ((b - a) / dt).ceil().max(1.0) as usize;
                let step = (b - a) / n as f64;
                for k in 0..n {
                    psi = rk4_step(h, a + k as f64 * step, step, &psi);
                }
                steps += n;
            }
            StepControl::Adaptive { tol, dt_min, .. } => {
                let mut t = a;
                while t < b {
                    let dt = dt_guess.min(b - t);
                    let limited = dt < dt_guess;
                    let full = rk4_step(h, t, dt, &psi);
                    let half = rk4_step(h, t, 0.5 * dt, &psi);
                    let two = rk4_step(h, t + 0.5 * dt, 0.5 * dt, &half);
                    let err = diff_norm(&full, &two);
                    let accepted = err <= tol * dt;
                    if accepted {
                        psi = two.iter().zip(&full).map(|(x, y)| x + (x - y) / 15.0).collect();
                        t = if limited { b } else { t + dt };
                        steps += 1;
                    } else if dt <= dt_min {
                        return Err(Error::NonConvergence(format!(
                            "step size fell below {dt_min:e} at t = {t} (error {err:e})"
                        )));
                    }
                    let ratio = if err == 0.0 { 2.0 } else { 0.9 * (tol * dt / err).powf(0.25) };
                    // a step shortened to land on a stop does not shrink the next one
                    if !(accepted && limited) {
                        dt_guess = (dt * ratio.clamp(0.2, 2.0)).max(dt_min);
                    }
                }
            }
        }
        while next_time < times.len() && times[next_time] <= b {
            states.push(psi.clone());
            next_time += 1;
        }
    }
    finish(times, states, observables, steps)
}

#[derive(Clone, Debug)]
pub struct TdEquivalence {
    pub times: Vec<f64>,
    /// `‖ψ_mp(t) − W(t)ψ_C(t)‖` at each time.
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub coulomb: Trajectory,
    pub multipolar: Trajectory,
}

/// Initial Coulomb-gauge state for [`td_gauge_equivalence`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Ground state of `H_C(t₀)`.
    #[default]
    Ground,
    /// `(|0…0, e⟩ + |1,0…, g⟩)/√2` for a two-level emitter.
    Superposition,
}

/// Initial state in the frame of `h` at `t0`. Superpositions are defined
/// in the Coulomb frame and mapped by `W(t0)` for a multipolar `h`.
pub fn prepare_initial(h: &TimeDependentHamiltonian, initial: InitialState, t0: f64) -> Result<Vec<C64>> {
    match initial {
        InitialState::Ground => Ok(herm_eig(&h.matrix_at(t0)?)?.vector(0)),
        InitialState::Superposition => {
            if h.layout.matter_dim() != 2 || h.layout.n_modes == 0 {
                return Err(Error::invalid("superposition initial state needs a two-level emitter and a mode"));
            }
            let space = &h.layout.space;
            let mut digits = vec![0; space.factors().len()];
            let mut psi = vec![C64::new(0.0, 0.0); space.dim()];
            psi[space.basis_index(&digits)?] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            digits[0] = 1;
            digits[h.layout.matter] = 1;
            psi[space.basis_index(&digits)?] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            Ok(match h.gauge {
                TdGauge::Coulomb => psi,
                TdGauge::Multipolar => h.apply_gauge_unitary(t0, &psi),
            })
        }
    }
}

/// Evolves `ψ_C` under `H_C(t)` and `ψ_mp(0) = W(0)ψ_C(0)` under `H_mp(t)`
/// and compares `ψ_mp(t)` with `W(t)ψ_C(t)`. `additional_sign` overrides the
/// sign of the `μ̇X` term.
#[allow(clippy::too_many_arguments)]
pub fn td_gauge_equivalence(
    ms: &ModeSet,
    em: &EmitterSpec,
    cutoffs: &[usize],
    profile: &TimeProfile,
    times: &[f64],
    control: StepControl,
    initial: InitialState,
    additional_sign: Option<f64>,
) -> Result<TdEquivalence> {
    let hc = build_time_dependent(ms, em, cutoffs, TdGauge::Coulomb, profile.clone())?;
    let mut hm = build_time_dependent(ms, em, cutoffs, TdGauge::Multipolar, profile.clone())?;
    if let Some(s) = additional_sign {
        hm = hm.with_additional_sign(s);
    }
    let t0 = *times.first().ok_or_else(|| Error::invalid("empty time grid"))?;
    let psi_c0 = prepare_initial(&hc, initial, t0)?;
    let psi_m0 = hm.apply_gauge_unitary(t0, &psi_c0);
    let obs_c = hc.observables()?;
    let obs_m = hm.observables()?;
    let coulomb = evolve(&hc, &psi_c0, times, control, &obs_c)?;
    let multipolar = evolve(&hm, &psi_m0, times, control, &obs_m)?;
    let deviations: Vec<f64> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| diff_norm(&multipolar.states[k], &hm.apply_gauge_unitary(t, &coulomb.states[k])))
        .collect();
    let max_deviation = deviations.iter().cloned().fold(0.0, f64::max);
    Ok(TdEquivalence { times: times.to_vec(), deviations, max_deviation, coulomb, multipolar })
}

/// `n + 1` equally spaced times on `[t0, t1]`.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n.max(1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::single_mode_tls;
    use crate::hilbert::{ladder, HilbertSpec};

    #[test]
    fn free_oscillator_rotates() {
        let space = HilbertSpec::new(vec![crate::hilbert::Factor::photon(3)]).unwrap();
        let a = ladder(&space, 0).unwrap();
        let h = (&a.adjoint() * &a).scale_real(1.7).hermitize(0.0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi0 = vec![C64::new(s, 0.0), C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        let times = uniform_grid(0.0, 5.0, 11);
        let traj = evolve_static(&h, &psi0, &times, &[]).unwrap();
        for (t, psi) in times.iter().zip(&traj.states) {
            let expect_a = C64::from_polar(0.5, -1.7 * t);
            let got = a.expectation(psi);
            assert!((got - expect_a).norm() < 1e-13);
        }
    }

    #[test]
    fn ramp_conserves_norm_and_energy_after_ramp() {
        let (ms, em) = single_mode_tls(1.0, 1.0, 0.4).unwrap();
        let td = build_time_dependent(&ms, &em, &[10], TdGauge::Coulomb, TimeProfile::raised_cosine(5.0)).unwrap();
        let psi0 = herm_eig(&td.matrix_at(0.0).unwrap()).unwrap().vector(0);
        let times = uniform_grid(0.0, 8.0, 16);
        let h_end = td.matrix_at(8.0).unwrap();
        let obs = vec![("energy".to_string(), h_end)];
        let traj = evolve(&td, &psi0, &times, StepControl::default(), &obs).unwrap();
        assert!(traj.max_norm_error() < 1e-8);
        let e = &traj.observables[0].values;
        // H is constant after the ramp ends at t = 5
        for k in 11..e.len() {
            assert!((e[k] - e[10]).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_unnormalized_state() {
        let (ms, em) = single_mode_tls(1.0, 1.0, 0.4).unwrap();
        let td = build_time_dependent(&ms, &em, &[3], TdGauge::Coulomb, TimeProfile::raised_cosine(5.0)).unwrap();
        let psi = vec![C64::new(1.0, 0.0); td.dim()];
        assert!(evolve(&td, &psi, &[0.0, 1.0], StepControl::default(), &[]).is_err());
    }

    #[test]
    fn static_profile_uses_eigen_propagation() {
        let (ms, em) = single_mode_tls(1.0, 1.0, 0.4).unwrap();
        let td = build_time_dependent(&ms, &em, &[6], TdGauge::Multipolar, TimeProfile::Constant { value: 1.0 }).unwrap();
        let psi0 = herm_eig(&td.matrix_at(0.0).unwrap()).unwrap().vector(3);
        let traj = evolve(&td, &psi0, &[0.0, 2.0], StepControl::default(), &[]).unwrap();
        assert_eq!(traj.steps, 0);
        let overlap = crate::hilbert::inner(&psi0, &traj.states[1]).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_coupling_profile_is_trivially_equivalent() {
        let (ms, em) = single_mode_tls(1.0, 1.0, 0.5).unwrap();
        let r = td_gauge_equivalence(
            &ms,
            &em,
            &[8],
            &TimeProfile::Constant { value: 0.0 },
            &uniform_grid(0.0, 10.0, 10),
            StepControl::default(),
            InitialState::Superposition,
            None,
        )
        .unwrap();
        assert!(r.max_deviation < 1e-10);
    }

    #[test]
    fn trajectory_csv_layout() {
        let space = HilbertSpec::new(vec![crate::hilbert::Factor::photon(1)]).unwrap();
        let h = Operator::identity(&space);
        let obs = vec![("one".to_string(), Operator::identity(&space))];
        let traj = evolve_static(&h, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], &[0.0, 0.5], &obs).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,one");
        assert_eq!(text.lines().count(), 3);
    }
}
