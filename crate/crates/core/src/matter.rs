//! Truncated matter models and time profiles of the coupling.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{local_pauli, Factor, HilbertSpec, Operator};
use crate::modes::Vec3;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Effective single-particle data: a charge `q` whose truncated position
/// operator is `r_dip σx` with `r_dip = d/q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleParticle {
    pub q: f64,
    pub r_dip: [f64; 3],
}

/// An emitter truncated to `N` levels. Levels are stored in basis order; for
/// a two-level system that is `(|e⟩, |g⟩)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "EmitterDoc", into = "EmitterDoc")]
pub struct EmitterSpec {
    levels: Vec<f64>,
    dipole: [Mat<C64>; 3],
    position_label: String,
    single_particle: Option<SingleParticle>,
}

pub const DEFAULT_POSITION: &str = "emitter";

impl EmitterSpec {
    pub fn new(levels: Vec<f64>, dipole: [Mat<C64>; 3], position_label: impl Into<String>) -> Result<Self> {
        let n = levels.len();
        if n == 0 {
            return Err(Error::invalid("emitter needs at least one level"));
        }
        if levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite);
        }
        for (c, d) in dipole.iter().enumerate() {
            if d.nrows() != n || d.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "dipole component {c} is {}x{}, emitter has {n} levels",
                    d.nrows(),
                    d.ncols()
                )));
            }
            let mut dev = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    dev = dev.max((d[(i, j)] - d[(j, i)].conj()).norm());
                }
            }
            if dev >= 1e-12 {
                return Err(Error::NotHermitian(dev));
            }
        }
        Ok(EmitterSpec { levels, dipole, position_label: position_label.into(), single_particle: None })
    }

    /// Two-level emitter with levels `(+ω0/2, −ω0/2)` and `d̂ = d σx`.
    pub fn tls(omega0: f64, d: [f64; 3]) -> Result<Self> {
        if !(omega0 >= 0.0) {
            return Err(Error::invalid(format!("TLS frequency must be non-negative, got {omega0}")));
        }
        let [sx, _, _] = local_pauli();
        let dipole = [0, 1, 2].map(|c| Mat::from_fn(2, 2, |i, j| sx[(i, j)] * d[c]));
        Self::new(vec![0.5 * omega0, -0.5 * omega0], dipole, DEFAULT_POSITION)
    }

    pub fn with_position(mut self, label: impl Into<String>) -> Self {
        self.position_label = label.into();
        self
    }

    /// Attaches the effective single-particle model; `r_dip = d/q` is derived
    /// from the two-level dipole.
    pub fn with_single_particle(mut self, q: f64) -> Result<Self> {
        let d = self.tls_dipole()?;
        if !(q != 0.0 && q.is_finite()) {
            return Err(Error::invalid("single-particle charge must be finite and non-zero"));
        }
        self.single_particle = Some(SingleParticle { q, r_dip: [d[0] / q, d[1] / q, d[2] / q] });
        Ok(self)
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn dipole(&self) -> &[Mat<C64>; 3] {
        &self.dipole
    }

    pub fn position_label(&self) -> &str {
        &self.position_label
    }

    pub fn single_particle(&self) -> Option<&SingleParticle> {
        self.single_particle.as_ref()
    }

    pub fn is_tls(&self) -> bool {
        self.levels.len() == 2
    }

    /// TLS transition frequency `ω_e − ω_g`.
    pub fn omega0(&self) -> Result<f64> {
        if !self.is_tls() {
            return Err(Error::NotTwoLevel { index: 0, dim: self.n_levels() });
        }
        Ok(self.levels[0] - self.levels[1])
    }

    /// Real dipole vector `d` of a two-level emitter of the form `d̂ = d σx`.
    pub fn tls_dipole(&self) -> Result<[f64; 3]> {
        if !self.is_tls() {
            return Err(Error::NotTwoLevel { index: 0, dim: self.n_levels() });
        }
        let mut d = [0.0; 3];
        for c in 0..3 {
            let m = &self.dipole[c];
            let off = m[(0, 1)];
            if m[(0, 0)].norm() > 1e-14 || m[(1, 1)].norm() > 1e-14 || off.im.abs() > 1e-14 {
                return Err(Error::invalid("two-level dipole is not of the form d σx"));
            }
            d[c] = off.re;
        }
        Ok(d)
    }

    /// `Ĥ₀ = Σ_i ω_i |i⟩⟨i|` on the emitter alone.
    pub fn h0_local(&self) -> Mat<C64> {
        let n = self.n_levels();
        Mat::from_fn(n, n, |i, j| if i == j { C64::new(self.levels[i], 0.0) } else { ZERO })
    }

    /// `Σ_c d̂_c v_c` for a complex vector `v`.
    pub fn dipole_dot(&self, v: &Vec3) -> Mat<C64> {
        let n = self.n_levels();
        Mat::from_fn(n, n, |i, j| (0..3).map(|c| self.dipole[c][(i, j)] * v[c]).sum())
    }

    /// Hilbert space of the emitter on its own.
    pub fn space(&self) -> HilbertSpec {
        HilbertSpec::new(vec![Factor::matter(self.n_levels())]).expect("non-empty emitter")
    }
}

#[derive(Serialize, Deserialize)]
struct EmitterDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dipole_x: Option<Vec<Vec<C64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dipole_y: Option<Vec<Vec<C64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dipole_z: Option<Vec<Vec<C64>>>,
    #[serde(default = "default_position")]
    position: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_dip: Option<[f64; 3]>,
}

fn default_position() -> String {
    DEFAULT_POSITION.to_string()
}

fn rows_to_mat(rows: &[Vec<C64>], n: usize, key: &str) -> Result<Mat<C64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!("{key} must be {n}x{n}")));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

impl TryFrom<EmitterDoc> for EmitterSpec {
    type Error = Error;

    fn try_from(doc: EmitterDoc) -> Result<Self> {
        let spec = match (doc.omega0, doc.levels) {
            (Some(_), Some(_)) => return Err(Error::invalid("give either omega0 or levels, not both")),
            (Some(w0), None) => EmitterSpec::tls(w0, doc.d.unwrap_or([0.0; 3]))?,
            (None, Some(levels)) => {
                let n = levels.len();
                let zero = vec![vec![ZERO; n]; n];
                let dx = rows_to_mat(doc.dipole_x.as_deref().unwrap_or(&zero), n, "dipole_x")?;
                let dy = rows_to_mat(doc.dipole_y.as_deref().unwrap_or(&zero), n, "dipole_y")?;
                let dz = rows_to_mat(doc.dipole_z.as_deref().unwrap_or(&zero), n, "dipole_z")?;
                EmitterSpec::new(levels, [dx, dy, dz], DEFAULT_POSITION)?
            }
            (None, None) => return Err(Error::invalid("emitter needs omega0 or levels")),
        };
        let mut spec = spec.with_position(doc.position);
        if let Some(q) = doc.q {
            spec = spec.with_single_particle(q)?;
            if let Some(r) = doc.r_dip {
                let ours = spec.single_particle.unwrap().r_dip;
                if (0..3).any(|c| (ours[c] - r[c]).abs() > 1e-12 * (1.0 + r[c].abs())) {
                    return Err(Error::invalid("r_dip is inconsistent with d/q"));
                }
            }
        } else if doc.r_dip.is_some() {
            return Err(Error::invalid("r_dip given without q"));
        }
        Ok(spec)
    }
}

impl From<EmitterSpec> for EmitterDoc {
    fn from(e: EmitterSpec) -> Self {
        let n = e.n_levels();
        let rows = |m: &Mat<C64>| (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
        EmitterDoc {
            omega0: None,
            d: None,
            levels: Some(e.levels.clone()),
            dipole_x: Some(rows(&e.dipole[0])),
            dipole_y: Some(rows(&e.dipole[1])),
            dipole_z: Some(rows(&e.dipole[2])),
            position: e.position_label.clone(),
            q: e.single_particle.map(|s| s.q),
            r_dip: e.single_particle.map(|s| s.r_dip),
        }
    }
}

/// Even and odd parts of `f` at `±r_dip`: `f(r̂) = even·I + odd·σx`.
pub fn even_odd_parts(f: impl Fn([f64; 3]) -> C64, spec: &EmitterSpec) -> Result<(C64, C64)> {
    let sp = spec
        .single_particle()
        .ok_or_else(|| Error::invalid("emitter has no single-particle data"))?;
    if !spec.is_tls() {
        return Err(Error::NotTwoLevel { index: 0, dim: spec.n_levels() });
    }
    let r = sp.r_dip;
    let plus = f(r);
    let minus = f([-r[0], -r[1], -r[2]]);
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::invalid("function is not finite at ±r_dip"));
    }
    Ok(((plus + minus) * 0.5, (plus - minus) * 0.5))
}

/// `f(r̂)` for the truncated position operator `r̂ = r_dip σx` of a
/// single-particle TLS, as a 2×2 operator on the emitter.
pub fn truncated_position_function(f: impl Fn([f64; 3]) -> C64, spec: &EmitterSpec) -> Result<Operator> {
    let (even, odd) = even_odd_parts(f, spec)?;
    let [sx, _, _] = local_pauli();
    let m = Mat::from_fn(2, 2, |i, j| if i == j { even } else { ZERO } + sx[(i, j)] * odd);
    Operator::new(spec.space(), m)
}

/// Shape of the coupling modulation `μ(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    Constant { value: f64 },
    /// Linear from `from` to `to` over `[0, duration]`, constant outside.
    LinearRamp { duration: f64, from: f64, to: f64 },
    /// `from + (to − from)(1 − cos(πt/T))/2` over `[0, T]`, constant outside.
    RaisedCosine { duration: f64, from: f64, to: f64 },
    /// Cubic Hermite interpolation through `(times, values)` with centred
    /// finite-difference knot slopes; held constant outside the table.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl TimeProfile {
    pub fn raised_cosine(duration: f64) -> Self {
        TimeProfile::RaisedCosine { duration, from: 0.0, to: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("time profile: {msg}")));
        match self {
            TimeProfile::Constant { value } if !value.is_finite() => bad("value must be finite"),
            TimeProfile::LinearRamp { duration, from, to } | TimeProfile::RaisedCosine { duration, from, to } => {
                if !(*duration > 0.0) || !from.is_finite() || !to.is_finite() {
                    bad("ramp needs a positive duration and finite endpoints")
                } else {
                    Ok(())
                }
            }
            TimeProfile::Tabulated { times, values } => {
                if times.len() < 2 || times.len() != values.len() {
                    bad("tabulated profile needs at least two (time, value) pairs")
                } else if times.windows(2).any(|w| !(w[0] < w[1])) {
                    bad("tabulated times must be strictly ascending")
                } else if values.iter().any(|v| !v.is_finite()) {
                    bad("tabulated values must be finite")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// `(μ(t), μ̇(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            TimeProfile::Constant { value } => (*value, 0.0),
            TimeProfile::LinearRamp { duration, from, to } => {
                if t <= 0.0 {
                    (*from, 0.0)
                } else if t >= *duration {
                    (*to, 0.0)
                } else {
                    let rate = (to - from) / duration;
                    (from + rate * t, rate)
                }
            }
            TimeProfile::RaisedCosine { duration, from, to } => {
                if t <= 0.0 {
                    (*from, 0.0)
                } else if t >= *duration {
                    (*to, 0.0)
                } else {
                    let w = std::f64::consts::PI / duration;
                    let span = to - from;
                    (from + span * 0.5 * (1.0 - (w * t).cos()), span * 0.5 * w * (w * t).sin())
                }
            }
            TimeProfile::Tabulated { times, values } => hermite_eval(times, values, t),
        }
    }

    pub fn mu(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    pub fn mu_dot(&self, t: f64) -> f64 {
        self.eval(t).1
    }

    /// True when μ never changes.
    pub fn is_static(&self) -> bool {
        match self {
            TimeProfile::Constant { .. } => true,
            TimeProfile::LinearRamp { from, to, .. } | TimeProfile::RaisedCosine { from, to, .. } => from == to,
            TimeProfile::Tabulated { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// Times where μ̇ may be discontinuous; integrators should not step over
    /// them.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            TimeProfile::Constant { .. } => vec![],
            TimeProfile::LinearRamp { duration, .. } | TimeProfile::RaisedCosine { duration, .. } => vec![0.0, *duration],
            TimeProfile::Tabulated { times, .. } => vec![times[0], times[times.len() - 1]],
        }
    }
}

fn knot_slope(times: &[f64], values: &[f64], k: usize) -> f64 {
    let n = times.len();
    if k == 0 {
        (values[1] - values[0]) / (times[1] - times[0])
    } else if k == n - 1 {
        (values[n - 1] - values[n - 2]) / (times[n - 1] - times[n - 2])
    } else {
        (values[k + 1] - values[k - 1]) / (times[k + 1] - times[k - 1])
    }
}

fn hermite_eval(times: &[f64], values: &[f64], t: f64) -> (f64, f64) {
    let n = times.len();
    if t <= times[0] {
        return (values[0], 0.0);
    }
    if t >= times[n - 1] {
        return (values[n - 1], 0.0);
    }
    let k = times.partition_point(|&x| x <= t) - 1;
    let h = times[k + 1] - times[k];
    let s = (t - times[k]) / h;
    let (y0, y1) = (values[k], values[k + 1]);
    let (m0, m1) = (knot_slope(times, values, k) * h, knot_slope(times, values, k + 1) * h);
    let s2 = s * s;
    let s3 = s2 * s;
    let val = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1;
    let der = (6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * y1 + (3.0 * s2 - 2.0 * s) * m1;
    (val, der / h)
}
