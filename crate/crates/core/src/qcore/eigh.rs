//! Hermitian eigendecomposition by cyclic complex Jacobi rotations.
//!
//! Each rotation first removes the phase of the pivot a_pq with a diagonal
//! unitary, then applies the classical real Jacobi rotation. Sweeps run
//! until the off-diagonal Frobenius mass is below 1e-15 of the total.

use super::{COp, C64, TOL, ZERO};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues in ascending order and the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: COp,
}

impl Eigh {
    /// V · diag(f) · V†
    pub fn reassemble(&self, f: &[C64]) -> COp {
        let n = self.vectors.dim();
        let v = &self.vectors;
        COp::from_fn(n, |i, j| {
            (0..n).map(|k| v[(i, k)] * f[k] * v[(j, k)].conj()).sum()
        })
    }
}

pub fn eigh(a: &COp) -> Result<Eigh> {
    let n = a.dim();
    let scale = a.max_abs().max(1.0);
    let defect = a.hermitian_defect();
    if defect >= TOL.hermitian * scale {
        return Err(Error::NotHermitian(defect));
    }

    let mut m = (a + &a.adjoint()).scale_real(0.5);
    let mut v = COp::identity(n);

    let total = m.frobenius();
    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal(&m) <= 1e-15 * total {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal(&m) > 1e-12 * total {
        return Err(Error::Numeric("Jacobi eigensolver did not converge".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.total_cmp(&m[(j, j)].re));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let mut vectors = COp::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        let phase = pivot_phase(&v, src);
        for i in 0..n {
            vectors[(i, col)] = v[(i, src)] * phase;
        }
    }
    Ok(Eigh { values, vectors })
}

fn off_diagonal(m: &COp) -> f64 {
    let n = m.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn rotate(m: &mut COp, v: &mut COp, p: usize, q: usize) {
    let n = m.dim();
    let apq = m[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    if r < 1e-300 || r <= f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        m[(p, q)] = ZERO;
        m[(q, p)] = ZERO;
        return;
    }
    let e = apq / r; // e^{iα}
    let tau = (aqq - app) / (2.0 * r);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // J = diag(1, e^{-iα}) · G on the (p, q) plane
    let j_pp = C64::new(c, 0.0);
    let j_pq = C64::new(s, 0.0);
    let j_qp = -e.conj() * s;
    let j_qq = e.conj() * c;

    for k in 0..n {
        let (akp, akq) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = akp * j_pp + akq * j_qp;
        m[(k, q)] = akp * j_pq + akq * j_qq;
    }
    for k in 0..n {
        let (apk, aqk) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = j_pp.conj() * apk + j_qp.conj() * aqk;
        m[(q, k)] = j_pq.conj() * apk + j_qq.conj() * aqk;
    }
    m[(p, q)] = ZERO;
    m[(q, p)] = ZERO;
    m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
    m[(q, q)] = C64::new(m[(q, q)].re, 0.0);

    for k in 0..n {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = vkp * j_pp + vkq * j_qp;
        v[(k, q)] = vkp * j_pq + vkq * j_qq;
    }
}

/// Phase that makes the largest-modulus entry of column `col` real positive
/// (first such entry on ties).
fn pivot_phase(v: &COp, col: usize) -> C64 {
    let n = v.dim();
    let max = (0..n).map(|i| v[(i, col)].norm()).fold(0.0, f64::max);
    let pivot = (0..n)
        .find(|&i| v[(i, col)].norm() >= max - 1e-12)
        .unwrap_or(0);
    let z = v[(pivot, col)];
    if z.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        z.conj() / z.norm()
    }
}
