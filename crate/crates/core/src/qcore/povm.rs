use serde::Serialize;

use super::{eigh, COp, CVec, C64, TOL};
use crate::error::{Error, Result};

/// A positive operator-valued measure: positive elements summing to 1.
#[derive(Debug, Clone)]
pub struct Povm {
    elements: Vec<COp>,
    /// (λ_m, unit u_m) when known by construction
    parts: Option<(Vec<f64>, Vec<CVec>)>,
}

/// Defects of a candidate measurement; produced without failing.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PovmReport {
    pub outcome_count: usize,
    /// max(0, −smallest eigenvalue over all elements)
    pub positivity_defect: f64,
    /// ‖Σ π_m − 1‖∞
    pub completeness_defect: f64,
    pub rank_one: bool,
    /// max_{m,m'} ‖π_m π_m' − δ_{mm'} π_m‖ (spectral norm)
    pub orthogonality_defect: f64,
    /// Hilbert–Schmidt linear independence of the elements; stands in for
    /// indecomposability, which is not certified.
    pub linearly_independent: bool,
}

impl PovmReport {
    pub fn is_valid(&self) -> bool {
        self.positivity_defect <= TOL.psd && self.completeness_defect < TOL.completeness
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonality_defect < 1e-10
    }
}

impl PartialEq for Povm {
    fn eq(&self, other: &Self) -> bool {
        self.elements == other.elements
    }
}

impl Povm {
    pub fn new(elements: Vec<COp>) -> Result<Self> {
        check_shapes(&elements)?;
        for (m, e) in elements.iter().enumerate() {
            let d = e.hermitian_defect();
            if d >= TOL.hermitian * e.max_abs().max(1.0) {
                return Err(Error::InvalidPovm(format!(
                    "element {m} is not Hermitian (defect {d:e})"
                )));
            }
        }
        let mut min_eig = f64::INFINITY;
        for e in &elements {
            min_eig = min_eig.min(eigh(e)?.values[0]);
        }
        if min_eig < -TOL.psd {
            return Err(Error::InvalidPovm(format!("negative eigenvalue {min_eig:e}")));
        }
        check_completeness(&elements)?;
        Ok(Povm {
            elements,
            parts: None,
        })
    }

    /// {λ_m |u_m⟩⟨u_m|}; each `u_m` is normalized before use. A zero
    /// weight gives a zero element (an outcome that never occurs).
    pub fn from_rank_one(weights: &[f64], vectors: &[CVec]) -> Result<Self> {
        if weights.len() != vectors.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                found: vectors.len(),
            });
        }
        let mut units = Vec::with_capacity(vectors.len());
        let mut elements = Vec::with_capacity(vectors.len());
        for (&w, v) in weights.iter().zip(vectors) {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidPovm(format!("rank-one weight {w} is negative")));
            }
            let u = if w > 0.0 {
                v.normalized()?
            } else {
                v.normalized().unwrap_or_else(|_| CVec::zeros(v.dim()))
            };
            elements.push(COp::outer(&u, &u).scale_real(w));
            units.push(u);
        }
        check_shapes(&elements)?;
        check_completeness(&elements)?;
        Ok(Povm {
            elements,
            parts: Some((weights.to_vec(), units)),
        })
    }

    /// Projective measurement onto the columns of a unitary.
    pub fn from_basis(u: &COp) -> Result<Self> {
        let cols: Vec<CVec> = (0..u.dim()).map(|j| u.column(j)).collect();
        Self::from_rank_one(&vec![1.0; cols.len()], &cols)
    }

    pub fn computational(dim: usize) -> Self {
        let basis: Vec<CVec> = (0..dim).map(|k| CVec::basis(dim, k)).collect();
        Povm {
            elements: basis.iter().map(|e| COp::outer(e, e)).collect(),
            parts: Some((vec![1.0; dim], basis)),
        }
    }

    pub fn elements(&self) -> &[COp] {
        &self.elements
    }

    pub fn outcome_count(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    /// Decomposes every element as λ_m|u_m⟩⟨u_m| (λ_m = 0 for a zero
    /// element), or `None` when some element has rank above one.
    pub fn rank_one_parts(&self) -> Option<(Vec<f64>, Vec<CVec>)> {
        if let Some(p) = &self.parts {
            return Some(p.clone());
        }
        let mut weights = Vec::with_capacity(self.elements.len());
        let mut vectors = Vec::with_capacity(self.elements.len());
        for e in &self.elements {
            let dec = eigh(e).ok()?;
            let n = dec.values.len();
            let top = dec.values[n - 1];
            let rest = dec.values[..n - 1]
                .iter()
                .fold(0.0f64, |a, &b| a.max(b.abs()));
            if rest > 1e-10 {
                return None;
            }
            if !(top > 1e-10) {
                weights.push(0.0);
                vectors.push(dec.vectors.column(n - 1));
                continue;
            }
            weights.push(top);
            vectors.push(dec.vectors.column(n - 1));
        }
        Some((weights, vectors))
    }

    /// Merges outcomes through `label`: the element for new outcome k is
    /// the sum of all π_m with label(m) = k.
    pub fn relabel(&self, label: &[usize]) -> Result<Self> {
        if label.len() != self.elements.len() {
            return Err(Error::DimensionMismatch {
                expected: self.elements.len(),
                found: label.len(),
            });
        }
        let count = label.iter().max().map_or(0, |&k| k + 1);
        let mut out = vec![COp::zeros(self.dim()); count];
        for (e, &k) in self.elements.iter().zip(label) {
            out[k] = &out[k] + e;
        }
        Ok(Povm {
            elements: out,
            parts: None,
        })
    }

    /// Element-wise mixture λ·self + (1 − λ)·other, padding the shorter
    /// outcome list with zero elements.
    pub fn mix(&self, other: &Povm, lambda: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let count = self.outcome_count().max(other.outcome_count());
        let zero = COp::zeros(self.dim());
        let elements = (0..count)
            .map(|m| {
                let a = self.elements.get(m).unwrap_or(&zero);
                let b = other.elements.get(m).unwrap_or(&zero);
                &a.scale_real(lambda) + &b.scale_real(1.0 - lambda)
            })
            .collect();
        Ok(Povm {
            elements,
            parts: None,
        })
    }

    /// Full defect report, using the rank-one form when it is known.
    pub fn report(&self) -> PovmReport {
        match &self.parts {
            None => validate_povm(&self.elements),
            Some((w, u)) => {
                let dim = self.dim();
                let sum = self.elements.iter().fold(COp::zeros(dim), |acc, e| &acc + e);
                PovmReport {
                    outcome_count: w.len(),
                    positivity_defect: 0.0,
                    completeness_defect: sum.max_abs_diff(&COp::identity(dim)),
                    rank_one: w.iter().all(|&x| x > 1e-10),
                    orthogonality_defect: rank_one_orthogonality(w, u),
                    linearly_independent: gram_independent(w.len(), |i, j| {
                        w[i] * w[j] * u[i].inner(&u[j]).norm_sqr()
                    }),
                }
            }
        }
    }
}

fn check_completeness(elements: &[COp]) -> Result<()> {
    let dim = elements[0].dim();
    let sum = elements.iter().fold(COp::zeros(dim), |acc, e| &acc + e);
    let defect = sum.max_abs_diff(&COp::identity(dim));
    if defect >= TOL.completeness {
        return Err(Error::InvalidPovm(format!(
            "elements do not sum to identity (defect {defect:e})"
        )));
    }
    Ok(())
}

/// ‖π_a π_b‖ = λ_a λ_b |⟨u_a|u_b⟩| and ‖π_a² − π_a‖ = |λ_a² − λ_a|.
fn rank_one_orthogonality(w: &[f64], u: &[CVec]) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..w.len() {
        worst = worst.max((w[a] * w[a] - w[a]).abs());
        for b in a + 1..w.len() {
            worst = worst.max(w[a] * w[b] * u[a].inner(&u[b]).norm());
        }
    }
    worst
}

fn check_shapes(elements: &[COp]) -> Result<()> {
    let first = elements
        .first()
        .ok_or_else(|| Error::InvalidPovm("no elements".into()))?;
    for e in elements {
        if e.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                found: e.dim(),
            });
        }
    }
    Ok(())
}

/// Report-only validation of a list of candidate POVM elements.
pub fn validate_povm(elements: &[COp]) -> PovmReport {
    if check_shapes(elements).is_err() {
        return PovmReport {
            outcome_count: elements.len(),
            positivity_defect: f64::INFINITY,
            completeness_defect: f64::INFINITY,
            rank_one: false,
            orthogonality_defect: f64::INFINITY,
            linearly_independent: false,
        };
    }
    let dim = elements[0].dim();
    let mut min_eig = f64::INFINITY;
    let mut rank_one = true;
    let mut sum = COp::zeros(dim);
    for e in elements {
        sum = &sum + e;
        match eigh(e) {
            Ok(dec) => {
                min_eig = min_eig.min(dec.values[0]);
                let nonzero = dec.values.iter().filter(|v| v.abs() > 1e-10).count();
                rank_one &= nonzero == 1;
            }
            Err(_) => {
                min_eig = f64::NEG_INFINITY;
                rank_one = false;
            }
        }
    }
    PovmReport {
        outcome_count: elements.len(),
        positivity_defect: (-min_eig).max(0.0),
        completeness_defect: sum.max_abs_diff(&COp::identity(dim)),
        rank_one,
        orthogonality_defect: orthogonality_defect(elements),
        linearly_independent: linearly_independent(elements),
    }
}

/// max_{m,m'} ‖π_m π_m' − δ_{mm'} π_m‖, spectral norm.
pub fn orthogonality_check(povm: &Povm) -> f64 {
    match &povm.parts {
        Some((w, u)) => rank_one_orthogonality(w, u),
        None => orthogonality_defect(povm.elements()),
    }
}

fn orthogonality_defect(elements: &[COp]) -> f64 {
    let mut worst: f64 = 0.0;
    for (m, a) in elements.iter().enumerate() {
        for (k, b) in elements.iter().enumerate().skip(m) {
            let mut prod = a * b;
            if m == k {
                prod = &prod - a;
            }
            worst = worst.max(prod.spectral_norm());
        }
    }
    worst
}

fn linearly_independent(elements: &[COp]) -> bool {
    gram_independent(elements.len(), |i, j| (&elements[i] * &elements[j]).trace().re)
}

fn gram_independent(n: usize, entry: impl Fn(usize, usize) -> f64) -> bool {
    let gram = COp::from_fn(n, |i, j| C64::new(entry(i, j), 0.0));
    let gram = (&gram + &gram.adjoint()).scale_real(0.5);
    match eigh(&gram) {
        Ok(e) => {
            let top = e.values[n - 1];
            top > 0.0 && e.values[0] > 1e-10 * top
        }
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    pub(crate) fn trine() -> Povm {
        let vecs: Vec<CVec> = (0..3)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 3.0;
                CVec::from_real(&[(a / 2.0).cos(), (a / 2.0).sin()])
            })
            .collect();
        Povm::from_rank_one(&[2.0 / 3.0; 3], &vecs).unwrap()
    }

    #[test]
    fn projective_basis_report() {
        let p = Povm::computational(4);
        let r = validate_povm(p.elements());
        assert!(r.positivity_defect < 1e-12);
        assert!(r.completeness_defect < 1e-12);
        assert!(r.rank_one);
        assert!(r.orthogonality_defect < 1e-12);
        assert!(r.is_orthogonal());
        assert!(r.linearly_independent);
    }

    #[test]
    fn trine_is_complete_rank_one_not_orthogonal() {
        // Σ_k ⅔|u_k⟩⟨u_k| with Bloch angles 0, 120°, 240°: direct 2×2 sum is 1
        let t = trine();
        let r = validate_povm(t.elements());
        assert!(r.completeness_defect < 1e-12);
        assert!(r.rank_one);
        assert!(!r.is_orthogonal());
        // |⟨u0|u1⟩| = cos(60°) = 1/2 ⇒ (4/9)·(1/2) = 2/9; diagonal term λ(1−λ) = 2/9 as well
        assert!((orthogonality_check(&t) - 2.0 / 9.0).abs() < 1e-12);
        // dense path agrees with the rank-one shortcut
        let dense = Povm::new(t.elements().to_vec()).unwrap();
        assert!((orthogonality_check(&dense) - 2.0 / 9.0).abs() < 1e-12);
        let fast = t.report();
        assert!((fast.orthogonality_defect - r.orthogonality_defect).abs() < 1e-12);
        assert_eq!(fast.linearly_independent, r.linearly_independent);
    }

    #[test]
    fn half_identity_pair_is_not_rank_one() {
        let half = COp::identity(2).scale_real(0.5);
        let r = validate_povm(&[half.clone(), half]);
        assert!(r.completeness_defect < 1e-12);
        assert!(!r.rank_one);
        assert!(!r.linearly_independent);
    }

    #[test]
    fn invalid_elements_rejected() {
        let mut bad = COp::identity(2);
        bad[(0, 0)] = C64::new(-0.5, 0.0);
        let mut good = COp::zeros(2);
        good[(0, 0)] = C64::new(1.5, 0.0);
        assert!(Povm::new(vec![bad.clone(), good]).is_err());
        assert!(Povm::new(vec![COp::identity(2).scale_real(0.5)]).is_err());
        let r = validate_povm(&[bad]);
        assert!(r.positivity_defect > 0.4);
    }

    #[test]
    fn rank_one_parts_round_trip() {
        let t = trine();
        let (w, v) = t.rank_one_parts().unwrap();
        let rebuilt = Povm::from_rank_one(&w, &v).unwrap();
        for (a, b) in rebuilt.elements().iter().zip(t.elements()) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
    }

    #[test]
    fn relabel_and_mix_stay_complete() {
        let t = trine();
        let merged = t.relabel(&[0, 1, 1]).unwrap();
        assert_eq!(merged.outcome_count(), 2);
        assert!(validate_povm(merged.elements()).is_valid());
        let mixed = t.mix(&Povm::computational(2), 0.3).unwrap();
        assert_eq!(mixed.outcome_count(), 3);
        assert!(validate_povm(mixed.elements()).is_valid());
    }
}
