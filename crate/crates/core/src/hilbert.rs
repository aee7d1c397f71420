//! Dense operator algebra over tensor-product Hilbert spaces.
//!
//! A [`HilbertSpec`] is an ordered list of tensor factors (truncated photon
//! modes and finite matter spaces). Basis states are ordered lexicographically
//! with the *last* factor varying fastest, so `|n_1, n_2, m⟩` maps to
//! `(n_1 * d_2 + n_2) * d_m + m`. Fock factors are ordered `|0⟩, …, |N⟩` and
//! two-level matter factors put `|e⟩` before `|g⟩`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for the Hermitian and unitary flags.
pub const FLAG_TOL: f64 = 1e-12;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Photon,
    Matter,
}

/// One tensor factor. Photon factors have `dim = fock_cutoff + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Factor {
    pub kind: FactorKind,
    pub dim: usize,
}

impl Factor {
    pub fn photon(fock_cutoff: usize) -> Self {
        Factor { kind: FactorKind::Photon, dim: fock_cutoff + 1 }
    }

    pub fn matter(levels: usize) -> Self {
        Factor { kind: FactorKind::Matter, dim: levels }
    }

    pub fn fock_cutoff(&self) -> Option<usize> {
        match self.kind {
            FactorKind::Photon => Some(self.dim - 1),
            FactorKind::Matter => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpec {
    factors: Vec<Factor>,
}

impl HilbertSpec {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("a Hilbert space needs at least one factor"));
        }
        if let Some(i) = factors.iter().position(|f| f.dim == 0) {
            return Err(Error::invalid(format!("factor {i} has dimension 0")));
        }
        Ok(HilbertSpec { factors })
    }

    /// Photon modes (in order) followed by a single matter factor.
    pub fn modes_with_matter(fock_cutoffs: &[usize], levels: usize) -> Result<Self> {
        let mut factors: Vec<Factor> = fock_cutoffs.iter().map(|&n| Factor::photon(n)).collect();
        factors.push(Factor::matter(levels));
        Self::new(factors)
    }

    /// The photon factors of `self` on their own, in order.
    pub fn photon_subspace(&self) -> Result<Self> {
        Self::new(
            self.factors
                .iter()
                .copied()
                .filter(|f| f.kind == FactorKind::Photon)
                .collect(),
        )
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn photon_indices(&self) -> Vec<usize> {
        self.indices_of(FactorKind::Photon)
    }

    pub fn matter_indices(&self) -> Vec<usize> {
        self.indices_of(FactorKind::Matter)
    }

    fn indices_of(&self, kind: FactorKind) -> Vec<usize> {
        self.factors
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    /// Fock cutoffs of the photon factors, in order.
    pub fn fock_cutoffs(&self) -> Vec<usize> {
        self.factors.iter().filter_map(|f| f.fock_cutoff()).collect()
    }

    fn factor(&self, index: usize) -> Result<&Factor> {
        self.factors
            .get(index)
            .ok_or(Error::FactorOutOfRange { index, len: self.factors.len() })
    }

    /// Product of the dimensions strictly after factor `index`.
    fn stride(&self, index: usize) -> usize {
        self.factors[index + 1..].iter().map(|f| f.dim).product()
    }

    /// Flat basis index of a product state.
    pub fn basis_index(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.factors.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} digits for {} factors",
                digits.len(),
                self.factors.len()
            )));
        }
        let mut idx = 0;
        for (d, f) in digits.iter().zip(&self.factors) {
            if *d >= f.dim {
                return Err(Error::invalid(format!("digit {d} outside factor of dimension {}", f.dim)));
            }
            idx = idx * f.dim + d;
        }
        Ok(idx)
    }

    /// Inverse of [`basis_index`](Self::basis_index).
    pub fn digits(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.factors.len()];
        for (slot, f) in out.iter_mut().zip(&self.factors).rev() {
            *slot = idx % f.dim;
            idx /= f.dim;
        }
        out
    }

    /// Embeds a local operator acting on factor `index` as `I ⊗ … ⊗ op ⊗ … ⊗ I`.
    pub fn embed(&self, index: usize, local: MatRef<'_, C64>) -> Result<Mat<C64>> {
        let d = self.factor(index)?.dim;
        if local.nrows() != d || local.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "local operator is {}x{}, factor {index} has dimension {d}",
                local.nrows(),
                local.ncols()
            )));
        }
        let n = self.dim();
        let after = self.stride(index);
        let before = n / (d * after);
        let mut out = Mat::<C64>::zeros(n, n);
        for q in 0..d {
            for p in 0..d {
                let v = local[(p, q)];
                if v == ZERO {
                    continue;
                }
                for b in 0..before {
                    let base = b * d * after;
                    for a in 0..after {
                        out[(base + p * after + a, base + q * after + a)] = v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Embeds a product of local operators on distinct factors,
    /// `A ⊗ B ⊗ …` padded with identities.
    pub fn embed_product(&self, locals: &[(usize, MatRef<'_, C64>)]) -> Result<Mat<C64>> {
        for (k, &(idx, m)) in locals.iter().enumerate() {
            let d = self.factor(idx)?.dim;
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "local operator is {}x{}, factor {idx} has dimension {d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if locals[..k].iter().any(|&(j, _)| j == idx) {
                return Err(Error::invalid(format!("factor {idx} appears twice in a product")));
            }
        }
        let n = self.dim();
        let mut out = Mat::<C64>::zeros(n, n);
        let mut terms: Vec<(Vec<usize>, C64)> = Vec::new();
        let mut next: Vec<(Vec<usize>, C64)> = Vec::new();
        for col in 0..n {
            terms.clear();
            terms.push((self.digits(col), ONE));
            for &(f, m) in locals {
                next.clear();
                for (d, amp) in &terms {
                    for r in 0..m.nrows() {
                        let v = m[(r, d[f])];
                        if v != ZERO {
                            let mut nd = d.clone();
                            nd[f] = r;
                            next.push((nd, *amp * v));
                        }
                    }
                }
                std::mem::swap(&mut terms, &mut next);
            }
            for (d, amp) in &terms {
                let row = d.iter().zip(&self.factors).fold(0, |acc, (x, f)| acc * f.dim + x);
                out[(row, col)] += *amp;
            }
        }
        Ok(out)
    }
}

impl fmt::Display for HilbertSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|fac| match fac.kind {
                FactorKind::Photon => format!("fock({})", fac.dim - 1),
                FactorKind::Matter => format!("matter({})", fac.dim),
            })
            .collect();
        write!(f, "{}", parts.join(" ⊗ "))
    }
}

/// Dense complex operator bound to a [`HilbertSpec`].
///
/// The `hermitian` and `unitary` flags are only ever set after the property
/// has been checked numerically at [`FLAG_TOL`].
#[derive(Clone, Debug)]
pub struct Operator {
    matrix: Mat<C64>,
    space: HilbertSpec,
    hermitian: bool,
    unitary: bool,
}

impl Operator {
    pub fn new(space: HilbertSpec, matrix: Mat<C64>) -> Result<Self> {
        let n = space.dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, space {space} has dimension {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Operator { matrix, space, hermitian: false, unitary: false })
    }

    pub fn zeros(space: &HilbertSpec) -> Self {
        let n = space.dim();
        Operator { matrix: Mat::zeros(n, n), space: space.clone(), hermitian: true, unitary: false }
    }

    pub fn identity(space: &HilbertSpec) -> Self {
        let n = space.dim();
        Operator { matrix: Mat::identity(n, n), space: space.clone(), hermitian: true, unitary: true }
    }

    /// Embeds `local` on factor `index` of `space`.
    pub fn embedded(space: &HilbertSpec, index: usize, local: MatRef<'_, C64>) -> Result<Self> {
        Operator::new(space.clone(), space.embed(index, local)?)
    }

    pub fn matrix(&self) -> MatRef<'_, C64> {
        self.matrix.as_ref()
    }

    pub fn into_matrix(self) -> Mat<C64> {
        self.matrix
    }

    pub fn space(&self) -> &HilbertSpec {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    /// `max |M - M†|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut dev = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                dev = dev.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// `max |M†M - I|`.
    pub fn unitary_deviation(&self) -> f64 {
        let prod = self.matrix.adjoint() * &self.matrix;
        max_abs_diff_identity(prod.as_ref())
    }

    pub fn verify_hermitian(mut self) -> Result<Self> {
        let dev = self.hermitian_deviation();
        if dev < FLAG_TOL {
            self.hermitian = true;
            Ok(self)
        } else {
            Err(Error::NotHermitian(dev))
        }
    }

    pub fn verify_unitary(mut self) -> Result<Self> {
        let dev = self.unitary_deviation();
        if dev < FLAG_TOL {
            self.unitary = true;
            Ok(self)
        } else {
            Err(Error::NotUnitary(dev))
        }
    }

    /// Replaces `M` by `(M + M†)/2` if `|M - M†|_max <= tol`, and sets the
    /// Hermitian flag. The result is Hermitian bit-for-bit.
    pub fn hermitize(mut self, tol: f64) -> Result<Self> {
        let dev = self.hermitian_deviation();
        if !(dev <= tol) {
            return Err(Error::NotHermitian(dev));
        }
        let n = self.dim();
        for j in 0..n {
            for i in 0..j {
                let avg = (self.matrix[(i, j)] + self.matrix[(j, i)].conj()) * 0.5;
                self.matrix[(i, j)] = avg;
                self.matrix[(j, i)] = avg.conj();
            }
            let d = self.matrix[(j, j)].re;
            self.matrix[(j, j)] = C64::new(d, 0.0);
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn adjoint(&self) -> Self {
        Operator {
            matrix: self.matrix.adjoint().to_owned(),
            space: self.space.clone(),
            hermitian: self.hermitian,
            unitary: self.unitary,
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        let matrix = Mat::from_fn(self.dim(), self.dim(), |i, j| self.matrix[(i, j)] * factor);
        let hermitian = self.hermitian && factor.im == 0.0;
        Operator { matrix, space: self.space.clone(), hermitian, unitary: false }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(C64::new(factor, 0.0))
    }

    /// `[self, other] = self·other - other·self`.
    pub fn commutator(&self, other: &Operator) -> Self {
        &(self * other) - &(other * self)
    }

    /// `U · self · U†`.
    pub fn conjugate_by(&self, u: &Operator) -> Self {
        assert_eq!(self.space, u.space, "space mismatch in conjugate_by");
        let matrix = &u.matrix * &self.matrix * u.matrix.adjoint();
        Operator { matrix, space: self.space.clone(), hermitian: false, unitary: false }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        matvec(self.matrix.as_ref(), v)
    }

    /// `⟨bra| self |ket⟩`.
    pub fn matrix_element(&self, bra: &[C64], ket: &[C64]) -> C64 {
        let hv = self.apply(ket);
        inner(bra, &hv)
    }

    pub fn expectation(&self, v: &[C64]) -> C64 {
        self.matrix_element(v, v)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(self.matrix.as_ref())
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in max_abs_diff");
        let n = self.dim();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                m = m.max((self.matrix[(i, j)] - other.matrix[(i, j)]).norm());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|i| self.matrix[(i, j)].is_finite()))
    }

    /// Column `k` as a state vector.
    pub fn column(&self, k: usize) -> Vec<C64> {
        (0..self.dim()).map(|i| self.matrix[(i, k)]).collect()
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "space mismatch in operator addition");
        Operator {
            matrix: &self.matrix + &rhs.matrix,
            space: self.space.clone(),
            hermitian: false,
            unitary: false,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "space mismatch in operator subtraction");
        Operator {
            matrix: &self.matrix - &rhs.matrix,
            space: self.space.clone(),
            hermitian: false,
            unitary: false,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "space mismatch in operator product");
        Operator {
            matrix: &self.matrix * &rhs.matrix,
            space: self.space.clone(),
            hermitian: false,
            unitary: false,
        }
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_real(-1.0)
    }
}

/// Annihilation operator of the photon factor `mode_index`, embedded in the
/// full space: `⟨n-1|a|n⟩ = √n`.
pub fn ladder(space: &HilbertSpec, mode_index: usize) -> Result<Operator> {
    let factor = space.factor(mode_index)?;
    if factor.kind != FactorKind::Photon {
        return Err(Error::WrongFactorKind { index: mode_index, expected: "photon" });
    }
    let d = factor.dim;
    let local = Mat::from_fn(d, d, |i, j| if j == i + 1 { C64::new((j as f64).sqrt(), 0.0) } else { ZERO });
    Operator::embedded(space, mode_index, local.as_ref())
}

/// Local Pauli matrices in the `(|e⟩, |g⟩)` ordering.
pub fn local_pauli() -> [Mat<C64>; 3] {
    let i = C64::new(0.0, 1.0);
    let sx = Mat::from_fn(2, 2, |r, c| if r != c { ONE } else { ZERO });
    // σy = i|g⟩⟨e| - i|e⟩⟨g|
    let sy = Mat::from_fn(2, 2, |r, c| match (r, c) {
        (0, 1) => -i,
        (1, 0) => i,
        _ => ZERO,
    });
    let sz = Mat::from_fn(2, 2, |r, c| match (r, c) {
        (0, 0) => ONE,
        (1, 1) => -ONE,
        _ => ZERO,
    });
    [sx, sy, sz]
}

/// `(σx, σy, σz)` of the two-level matter factor `matter_index`.
pub fn pauli(space: &HilbertSpec, matter_index: usize) -> Result<(Operator, Operator, Operator)> {
    let factor = space.factor(matter_index)?;
    if factor.kind != FactorKind::Matter {
        return Err(Error::WrongFactorKind { index: matter_index, expected: "matter" });
    }
    if factor.dim != 2 {
        return Err(Error::NotTwoLevel { index: matter_index, dim: factor.dim });
    }
    let [sx, sy, sz] = local_pauli();
    let flag = |m: Mat<C64>| -> Result<Operator> {
        let mut op = Operator::embedded(space, matter_index, m.as_ref())?;
        op.hermitian = true;
        op.unitary = true;
        Ok(op)
    };
    Ok((flag(sx)?, flag(sy)?, flag(sz)?))
}

/// Eigendecomposition of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the eigenvectors.
    pub vectors: Operator,
}

impl Spectrum {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `max |M V - V diag(λ)|`.
    pub fn residual(&self, op: &Operator) -> f64 {
        let mv = op.matrix() * self.vectors.matrix();
        let n = self.len();
        let mut res = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let r = mv[(i, j)] - self.vectors.matrix[(i, j)] * self.values[j];
                res = res.max(r.norm());
            }
        }
        res
    }

    /// `V f(Λ) V†` for a complex-valued spectral function.
    pub fn apply_function(&self, f: impl Fn(f64) -> C64) -> Operator {
        let v = self.vectors.matrix();
        let n = self.len();
        let fd: Vec<C64> = self.values.iter().map(|&l| f(l)).collect();
        let vf = Mat::from_fn(n, n, |i, j| v[(i, j)] * fd[j]);
        let matrix = &vf * v.adjoint();
        Operator { matrix, space: self.vectors.space.clone(), hermitian: false, unitary: false }
    }
}

const DEGENERACY_TOL: f64 = 1e-10;

/// Eigendecomposition of a Hermitian operator with ascending eigenvalues.
///
/// Eigenvectors within numerically degenerate clusters are re-orthonormalised
/// by modified Gram–Schmidt in solver order, and each vector's phase is fixed
/// so that its largest-modulus component is real and positive.
pub fn herm_eig(op: &Operator) -> Result<Spectrum> {
    if !op.is_hermitian() {
        let dev = op.hermitian_deviation();
        if dev >= FLAG_TOL {
            return Err(Error::NotHermitian(dev));
        }
    }
    if !op.is_finite() {
        return Err(Error::NonFinite);
    }
    let evd = op
        .matrix
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let n = op.dim();
    let s = evd.S();
    let values: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    let mut u = evd.U().to_owned();

    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (values[end] - values[end - 1]).abs() < DEGENERACY_TOL * scale {
            end += 1;
        }
        if end - start > 1 {
            gram_schmidt_columns(&mut u, start, end);
        }
        start = end;
    }
    for k in 0..n {
        fix_phase(&mut u, k);
    }

    let mut vectors = Operator::new(op.space.clone(), u)?;
    let udev = vectors.unitary_deviation();
    if udev > 1e-10 {
        return Err(Error::Eigen(format!("eigenvector matrix unitarity deviation {udev:e}")));
    }
    vectors.unitary = udev < FLAG_TOL;
    Ok(Spectrum { values, vectors })
}

fn gram_schmidt_columns(u: &mut Mat<C64>, start: usize, end: usize) {
    let n = u.nrows();
    for k in start..end {
        for p in start..k {
            let mut proj = ZERO;
            for i in 0..n {
                proj += u[(i, p)].conj() * u[(i, k)];
            }
            for i in 0..n {
                let up = u[(i, p)];
                u[(i, k)] -= proj * up;
            }
        }
        let norm = (0..n).map(|i| u[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            u[(i, k)] /= norm;
        }
    }
}

fn fix_phase(u: &mut Mat<C64>, k: usize) {
    let n = u.nrows();
    let mut best = 0;
    let mut best_mod = -1.0;
    for i in 0..n {
        let m = u[(i, k)].norm();
        if m > best_mod + 1e-12 {
            best_mod = m;
            best = i;
        }
    }
    if best_mod <= 0.0 {
        return;
    }
    let phase = u[(best, k)].conj() / best_mod;
    for i in 0..n {
        u[(i, k)] *= phase;
    }
    u[(best, k)] = C64::new(u[(best, k)].re, 0.0);
}

/// Precomputed spectral data of a Hermitian generator `G`, giving
/// `exp(i t G)` for any real `t` as an exactly-flagged unitary.
#[derive(Clone, Debug)]
pub struct SpectralExp {
    spectrum: Spectrum,
}

impl SpectralExp {
    pub fn new(generator: &Operator) -> Result<Self> {
        Ok(SpectralExp { spectrum: herm_eig(generator)? })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// `exp(i t G)`.
    pub fn unitary(&self, t: f64) -> Result<Operator> {
        let u = self.spectrum.apply_function(|l| C64::from_polar(1.0, t * l));
        u.verify_unitary()
    }
}

/// Matrix exponential.
///
/// Hermitian and anti-Hermitian inputs go through the eigendecomposition (the
/// anti-Hermitian case returns a unitary-flagged operator); anything else uses
/// scaling and squaring with a degree-13 Padé approximant.
pub fn matrix_exp(op: &Operator) -> Result<Operator> {
    if !op.is_finite() {
        return Err(Error::NonFinite);
    }
    if op.is_hermitian() || op.hermitian_deviation() < FLAG_TOL {
        let herm = op.clone().hermitize(FLAG_TOL)?;
        let spec = herm_eig(&herm)?;
        let out = spec.apply_function(|l| C64::new(l.exp(), 0.0));
        let tol = 1e-9 * max_abs(out.matrix()).max(1.0);
        return out.hermitize(tol);
    }
    let anti = anti_hermitian_deviation(op.matrix());
    if anti < FLAG_TOL {
        // M = iH with H = -iM Hermitian.
        let h = op.scale(C64::new(0.0, -1.0)).hermitize(FLAG_TOL)?;
        return SpectralExp::new(&h)?.unitary(1.0);
    }
    let matrix = pade_exp(op.matrix())?;
    Operator::new(op.space.clone(), matrix)
}

fn anti_hermitian_deviation(m: MatRef<'_, C64>) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((m[(i, j)] + m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn one_norm(m: MatRef<'_, C64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_exp(a: MatRef<'_, C64>) -> Result<Mat<C64>> {
    const THETA13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(squarings);
    let a = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale);
    let ident = Mat::<C64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| -> Mat<C64> {
        Mat::from_fn(n, n, |i, j| {
            a6[(i, j)] * c6 + a4[(i, j)] * c4 + a2[(i, j)] * c2 + ident[(i, j)] * c0
        })
    };
    let u_inner = &a6 * lin(B[13], B[11], B[9], 0.0) + lin(B[7], B[5], B[3], B[1]);
    let u = &a * &u_inner;
    let v = &a6 * lin(B[12], B[10], B[8], 0.0) + lin(B[6], B[4], B[2], B[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..squarings {
        r = &r * &r;
    }
    if (0..n).any(|j| (0..n).any(|i| !r[(i, j)].is_finite())) {
        return Err(Error::NonFinite);
    }
    Ok(r)
}

pub(crate) fn max_abs(m: MatRef<'_, C64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}

fn max_abs_diff_identity(m: MatRef<'_, C64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let target = if i == j { ONE } else { ZERO };
            out = out.max((m[(i, j)] - target).norm());
        }
    }
    out
}

pub fn matvec(m: MatRef<'_, C64>, v: &[C64]) -> Vec<C64> {
    assert_eq!(m.ncols(), v.len(), "matvec dimension mismatch");
    let mut out = vec![ZERO; m.nrows()];
    for j in 0..m.ncols() {
        let vj = v[j];
        if vj == ZERO {
            continue;
        }
        let col = m.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * vj;
        }
    }
    out
}

/// `⟨a|b⟩`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}
