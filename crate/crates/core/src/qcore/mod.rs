//! Dense complex vectors and operators at small dimension.
//!
//! Everything here is row-major and owned. Dimensions stay small (a few
//! thousand at most), so no attempt is made at blocking or SIMD; clarity
//! wins over speed.

mod eigh;
mod povm;

pub use eigh::{eigh, Eigh};
pub use povm::{orthogonality_check, validate_povm, Povm, PovmReport};

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Numerical tolerances shared by every module.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub state_norm: f64,
    pub hermitian: f64,
    pub unitary: f64,
    pub psd: f64,
    pub completeness: f64,
    pub commute: f64,
    pub prior_norm: f64,
    pub prob_clip: f64,
}

pub const TOL: Tolerances = Tolerances {
    state_norm: 1e-12,
    hermitian: 1e-12,
    unitary: 1e-10,
    psd: 1e-10,
    completeness: 1e-10,
    commute: 1e-10,
    prior_norm: 1e-8,
    prob_clip: 1e-12,
};

/// Largest Hilbert-space dimension any constructor will build.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// A dense complex column vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVec(Vec<C64>);

impl CVec {
    pub fn new(entries: Vec<C64>) -> Self {
        CVec(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        CVec(vec![ZERO; dim])
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[k] = ONE;
        v
    }

    pub fn from_real(entries: &[f64]) -> Self {
        CVec(entries.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// ⟨self|other⟩, antilinear in `self`.
    pub fn inner(&self, other: &CVec) -> C64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&self, s: C64) -> CVec {
        CVec(self.0.iter().map(|z| z * s).collect())
    }

    pub fn normalized(&self) -> Result<CVec> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NotNormalized(n));
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }

    /// Removes the components along each (orthonormal) vector in `basis`.
    pub fn orthogonalize_against(&mut self, basis: &[CVec]) {
        for b in basis {
            let c = b.inner(self);
            for (x, y) in self.0.iter_mut().zip(&b.0) {
                *x -= c * y;
            }
        }
    }

    pub fn kron(&self, other: &CVec) -> CVec {
        let mut out = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.0 {
            for b in &other.0 {
                out.push(a * b);
            }
        }
        CVec(out)
    }

    pub fn max_abs_diff(&self, other: &CVec) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for CVec {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CVec {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

/// A unit-norm [`CVec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureState(CVec);

impl PureState {
    pub fn new(v: CVec) -> Result<Self> {
        let n = v.norm();
        if (n - 1.0).abs() > TOL.state_norm {
            return Err(Error::NotNormalized(n));
        }
        Ok(PureState(v))
    }

    /// Normalizes `v` first; fails only for zero or non-finite input.
    pub fn from_unnormalized(v: CVec) -> Result<Self> {
        Ok(PureState(v.normalized()?))
    }

    pub fn vector(&self) -> &CVec {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn density(&self) -> COp {
        COp::outer(&self.0, &self.0)
    }
}

/// A dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct COp {
    dim: usize,
    data: Vec<C64>,
}

impl COp {
    pub fn zeros(dim: usize) -> Self {
        COp {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        COp { dim, data }
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
        }
        Ok(COp {
            dim,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    /// Builds a matrix from separate real and imaginary row-major parts.
    pub fn from_real_imag(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::DimensionMismatch {
                expected: re.len(),
                found: im.len(),
            });
        }
        let rows: Vec<Vec<C64>> = re
            .iter()
            .zip(im)
            .map(|(r, i)| {
                if r.len() != i.len() {
                    return Err(Error::DimensionMismatch {
                        expected: r.len(),
                        found: i.len(),
                    });
                }
                Ok(r.iter().zip(i).map(|(&a, &b)| C64::new(a, b)).collect())
            })
            .collect::<Result<_>>()?;
        Self::from_rows(&rows)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    pub fn diag_complex(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// |a⟩⟨b|
    pub fn outer(a: &CVec, b: &CVec) -> Self {
        let dim = a.dim();
        debug_assert_eq!(dim, b.dim());
        COp::from_fn(dim, |i, j| a[i] * b[j].conj())
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[CVec]) -> Result<Self> {
        let dim = cols.len();
        for c in cols {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.dim(),
                });
            }
        }
        Ok(COp::from_fn(dim, |i, j| cols[j][i]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn column(&self, j: usize) -> CVec {
        CVec((0..self.dim).map(|i| self[(i, j)]).collect())
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn adjoint(&self) -> COp {
        COp::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> COp {
        COp {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> COp {
        self.scale(C64::new(s, 0.0))
    }

    pub fn apply(&self, v: &CVec) -> CVec {
        debug_assert_eq!(self.dim, v.dim());
        CVec(
            (0..self.dim)
                .map(|i| self.row(i).iter().zip(v.as_slice()).map(|(a, b)| a * b).sum())
                .collect(),
        )
    }

    /// A† v without forming the adjoint.
    pub fn apply_adjoint(&self, v: &CVec) -> CVec {
        debug_assert_eq!(self.dim, v.dim());
        let mut out = vec![ZERO; self.dim];
        for i in 0..self.dim {
            let vi = v[i];
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * vi;
            }
        }
        CVec(out)
    }

    /// ⟨a|A|b⟩
    pub fn sandwich(&self, a: &CVec, b: &CVec) -> C64 {
        a.inner(&self.apply(b))
    }

    /// AB − BA
    pub fn commutator(&self, other: &COp) -> COp {
        &(self * other) - &(other * self)
    }

    pub fn kron(&self, other: &COp) -> COp {
        let (da, db) = (self.dim, other.dim);
        let dim = da * db;
        let mut data = vec![ZERO; dim * dim];
        for i1 in 0..da {
            for j1 in 0..da {
                let a = self[(i1, j1)];
                if a == ZERO {
                    continue;
                }
                for i2 in 0..db {
                    let row = (i1 * db + i2) * dim + j1 * db;
                    for j2 in 0..db {
                        data[row + j2] = a * other[(i2, j2)];
                    }
                }
            }
        }
        COp { dim, data }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        let gram = &self.adjoint() * self;
        match eigh(&gram) {
            Ok(e) => e.values.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
            Err(_) => f64::NAN,
        }
    }

    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn unitary_defect(&self) -> f64 {
        (&(&self.adjoint() * self) - &COp::identity(self.dim)).max_abs()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_defect() < TOL.hermitian * self.max_abs().max(1.0)
    }

    pub fn checked_hermitian(self) -> Result<Self> {
        let d = self.hermitian_defect();
        if d >= TOL.hermitian * self.max_abs().max(1.0) {
            return Err(Error::NotHermitian(d));
        }
        Ok(self)
    }

    pub fn checked_unitary(self) -> Result<Self> {
        let d = self.unitary_defect();
        if d >= TOL.unitary {
            return Err(Error::NotUnitary(d));
        }
        Ok(self)
    }

    pub fn max_abs_diff(&self, other: &COp) -> f64 {
        (self - other).max_abs()
    }

    /// exp(−i t H) for Hermitian H.
    pub fn expi_hermitian(&self, t: f64) -> Result<COp> {
        let e = eigh(self)?;
        let phases: Vec<C64> = e
            .values
            .iter()
            .map(|&l| C64::from_polar(1.0, -t * l))
            .collect();
        Ok(e.reassemble(&phases))
    }
}

impl Index<(usize, usize)> for COp {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for COp {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &COp {
    type Output = COp;
    fn mul(self, rhs: &COp) -> COp {
        let n = self.dim;
        debug_assert_eq!(n, rhs.dim);
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            let out = &mut data[i * n..(i + 1) * n];
            for (k, a) in self.row(i).iter().enumerate() {
                if *a == ZERO {
                    continue;
                }
                for (o, b) in out.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        COp { dim: n, data }
    }
}

impl Add for &COp {
    type Output = COp;
    fn add(self, rhs: &COp) -> COp {
        COp {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &COp {
    type Output = COp;
    fn sub(self, rhs: &COp) -> COp {
        COp {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Kronecker product for vectors and operators.
pub trait Kron: Sized {
    fn dimension(&self) -> usize;
    fn kron_with(&self, other: &Self) -> Self;
}

impl Kron for CVec {
    fn dimension(&self) -> usize {
        self.dim()
    }
    fn kron_with(&self, other: &Self) -> Self {
        self.kron(other)
    }
}

impl Kron for COp {
    fn dimension(&self) -> usize {
        self.dim()
    }
    fn kron_with(&self, other: &Self) -> Self {
        self.kron(other)
    }
}

/// Kronecker product of `a` and `b`, refusing results above [`DEFAULT_DIM_CAP`].
pub fn tensor<T: Kron>(a: &T, b: &T) -> Result<T> {
    tensor_capped(a, b, DEFAULT_DIM_CAP)
}

pub fn tensor_capped<T: Kron>(a: &T, b: &T, cap: usize) -> Result<T> {
    let dim = a
        .dimension()
        .checked_mul(b.dimension())
        .ok_or(Error::DimensionCap { dim: usize::MAX, cap })?;
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    Ok(a.kron_with(b))
}

/// `a ⊗ a ⊗ … ⊗ a` (`n` factors).
pub fn tensor_power<T: Kron + Clone>(a: &T, n: usize) -> Result<T> {
    if n == 0 {
        return Err(Error::InvalidArgument("tensor power needs n ≥ 1".into()));
    }
    check_dim(a.dimension(), n)?;
    let mut out = a.clone();
    for _ in 1..n {
        out = out.kron_with(a);
    }
    Ok(out)
}

/// d^n, or a cap error.
pub fn check_dim(d: usize, n: usize) -> Result<usize> {
    let mut dim: usize = 1;
    for _ in 0..n {
        dim = dim.saturating_mul(d);
        if dim > DEFAULT_DIM_CAP {
            return Err(Error::DimensionCap {
                dim,
                cap: DEFAULT_DIM_CAP,
            });
        }
    }
    Ok(dim)
}

/// (|0…0⟩ + e^{−i·phase}|1…1⟩)/√2 on `n` probes of dimension `d`, with |0⟩ the
/// ground level (index 0) and |1⟩ the highest level (index d − 1).
pub fn ghz_state(n: usize, d: usize, phase: f64) -> Result<PureState> {
    if n == 0 || d < 2 {
        return Err(Error::InvalidArgument(format!(
            "GHZ state needs n ≥ 1 and d ≥ 2 (got n = {n}, d = {d})"
        )));
    }
    let dim = check_dim(d, n)?;
    let top: usize = (0..n).fold(0, |acc, _| acc * d + (d - 1));
    let mut v = CVec::zeros(dim);
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    v[0] = C64::new(amp, 0.0);
    v[top] = C64::from_polar(amp, -phase);
    PureState::new(v)
}

/// Extends an orthonormal set to an orthonormal basis of C^dim.
///
/// At every step the standard basis vector with the largest residual is
/// taken, which keeps the Gram–Schmidt step well conditioned.
pub fn orthonormal_completion(vectors: &[CVec], dim: usize) -> Vec<CVec> {
    let mut basis: Vec<CVec> = vectors.to_vec();
    let mut added = Vec::new();
    while basis.len() < dim {
        let mut best: Option<(f64, CVec)> = None;
        for k in 0..dim {
            let mut e = CVec::basis(dim, k);
            e.orthogonalize_against(&basis);
            e.orthogonalize_against(&basis);
            let n = e.norm();
            if best.as_ref().is_none_or(|(b, _)| n > *b + 1e-12) {
                best = Some((n, e));
            }
        }
        let (n, e) = best.expect("dim > 0");
        let v = e.scale(C64::new(1.0 / n, 0.0));
        basis.push(v.clone());
        added.push(v);
    }
    added
}

/// Unitary polar factor A (A†A)^{−1/2} of a full-rank matrix.
pub fn polar_unitary(a: &COp) -> Result<COp> {
    let gram = &a.adjoint() * a;
    let e = eigh(&gram)?;
    if e.values[0] <= 0.0 {
        return Err(Error::Numeric("polar factor of a singular matrix".into()));
    }
    let inv_sqrt: Vec<C64> = e
        .values
        .iter()
        .map(|&l| C64::new(1.0 / l.sqrt(), 0.0))
        .collect();
    Ok(a * &e.reassemble(&inv_sqrt))
}

fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Haar-distributed unitary via Gram–Schmidt on a complex Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> COp {
    let mut cols: Vec<CVec> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v = CVec::new((0..dim).map(|_| gaussian_c64(rng)).collect());
        v.orthogonalize_against(&cols);
        v.orthogonalize_against(&cols);
        let n = v.norm();
        if n > 1e-8 {
            cols.push(v.scale(C64::new(1.0 / n, 0.0)));
        }
    }
    COp::from_columns(&cols).expect("square by construction")
}

/// Haar-distributed pure state.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> PureState {
    loop {
        let v = CVec::new((0..dim).map(|_| gaussian_c64(rng)).collect());
        if let Ok(s) = PureState::from_unnormalized(v) {
            return s;
        }
    }
}

/// Hermitian matrix with i.i.d. Gaussian entries (GUE up to scale).
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> COp {
    let g = COp::from_fn(dim, |_, _| gaussian_c64(rng));
    (&g + &g.adjoint()).scale_real(0.5)
}

/// Random density matrix of full rank (Ginibre ensemble).
pub fn random_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> COp {
    let g = COp::from_fn(dim, |_, _| gaussian_c64(rng));
    let rho = &g * &g.adjoint();
    let tr = rho.trace().re;
    rho.scale_real(1.0 / tr)
}

/// Pauli X = |0⟩⟨1| + |1⟩⟨0|.
pub fn pauli_x() -> COp {
    COp::from_fn(2, |i, j| if i != j { ONE } else { ZERO })
}

/// Pauli Y = i(−|0⟩⟨1| + |1⟩⟨0|).
pub fn pauli_y() -> COp {
    COp::from_fn(2, |i, j| match (i, j) {
        (0, 1) => -I,
        (1, 0) => I,
        _ => ZERO,
    })
}
