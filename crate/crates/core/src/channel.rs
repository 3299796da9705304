//! Parameter-imprinting channels U_φ = exp(−i Σ_i φ_i H_i).
//!
//! Multi-parameter channels must have pairwise commuting generators; the
//! imprinting unitary is then unambiguous. A common eigenbasis is computed
//! once at construction and every U_φ is assembled from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{check_dim, eigh, tensor_power, COp, CVec, C64, TOL};

/// Parameter values φ (radians per inverse energy unit of the generators).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVec(Vec<f64>);

impl ParamVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameter vector must be non-empty and finite: {values:?}"
            )));
        }
        Ok(ParamVec(values))
    }

    pub fn scalar(phi: f64) -> Self {
        ParamVec(vec![phi])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// First component; convenient for single-parameter channels.
    pub fn first(&self) -> f64 {
        self.0[0]
    }
}

/// Hermitian generators plus their common eigenbasis.
#[derive(Debug, Clone)]
pub struct ParamChannel {
    generators: Vec<COp>,
    probe_dim: usize,
    /// Columns are a common eigenbasis; `None` when generators do not commute.
    basis: Option<COp>,
    /// levels[i][k] = eigenvalue of generator i on basis column k
    levels: Vec<Vec<f64>>,
}

impl ParamChannel {
    pub fn new(generators: Vec<COp>) -> Result<Self> {
        let first = generators
            .first()
            .ok_or_else(|| Error::InvalidArgument("channel needs at least one generator".into()))?;
        let d = first.dim();
        if d == 0 {
            return Err(Error::InvalidArgument("probe dimension must be ≥ 1".into()));
        }
        for g in &generators {
            if g.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: g.dim(),
                });
            }
            let defect = g.hermitian_defect();
            if defect >= TOL.hermitian * g.max_abs().max(1.0) {
                return Err(Error::NotHermitian(defect));
            }
        }
        let commuting = generators.iter().enumerate().all(|(i, a)| {
            generators[i + 1..].iter().all(|b| {
                let scale = a.max_abs().max(b.max_abs()).max(1.0);
                a.commutator(b).max_abs() < TOL.commute * scale * scale
            })
        });
        let (basis, levels) = if commuting {
            let basis = common_eigenbasis(&generators)?;
            let levels = generators
                .iter()
                .map(|g| {
                    let rotated = &(&basis.adjoint() * g) * &basis;
                    (0..d).map(|k| rotated[(k, k)].re).collect()
                })
                .collect();
            (Some(basis), levels)
        } else {
            (None, Vec::new())
        };
        Ok(ParamChannel {
            generators,
            probe_dim: d,
            basis,
            levels,
        })
    }

    /// Single-generator channel.
    pub fn single(h: COp) -> Result<Self> {
        Self::new(vec![h])
    }

    /// H = diag(0, 1) on a qubit.
    pub fn qubit_phase() -> Self {
        Self::single(COp::diag(&[0.0, 1.0])).expect("diagonal generator")
    }

    /// Equally spaced levels 2πk, k = 0…d−1.
    pub fn equal_ladder(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument("equal ladder needs d ≥ 2".into()));
        }
        let levels: Vec<f64> = (0..d)
            .map(|k| 2.0 * std::f64::consts::PI * k as f64)
            .collect();
        Self::single(COp::diag(&levels))
    }

    /// H = 0: the parameter leaves no trace.
    pub fn identity(d: usize) -> Result<Self> {
        Self::single(COp::zeros(d))
    }

    pub fn generators(&self) -> &[COp] {
        &self.generators
    }

    pub fn param_count(&self) -> usize {
        self.generators.len()
    }

    pub fn probe_dim(&self) -> usize {
        self.probe_dim
    }

    pub fn is_commuting(&self) -> bool {
        self.basis.is_some()
    }

    fn require_commuting(&self) -> Result<(&COp, &[Vec<f64>])> {
        match &self.basis {
            Some(b) => Ok((b, &self.levels)),
            None => Err(Error::Unsupported(
                "non-commuting multi-parameter generators".into(),
            )),
        }
    }

    fn check_params(&self, phi: &ParamVec) -> Result<()> {
        if phi.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                found: phi.len(),
            });
        }
        Ok(())
    }

    /// e^{−i Σ_i φ_i λ_i(k)} for each common eigenvector k.
    pub fn phases(&self, phi: &ParamVec) -> Result<Vec<C64>> {
        self.check_params(phi)?;
        let (_, levels) = self.require_commuting()?;
        Ok((0..self.probe_dim)
            .map(|k| {
                let angle: f64 = levels
                    .iter()
                    .zip(phi.values())
                    .map(|(l, p)| l[k] * p)
                    .sum();
                C64::from_polar(1.0, -angle)
            })
            .collect())
    }

    /// exp(−i Σ φ_i H_i).
    pub fn unitary_at(&self, phi: &ParamVec) -> Result<COp> {
        let phases = self.phases(phi)?;
        let (basis, _) = self.require_commuting()?;
        let n = self.probe_dim;
        Ok(COp::from_fn(n, |i, j| {
            (0..n)
                .map(|k| basis[(i, k)] * phases[k] * basis[(j, k)].conj())
                .sum()
        }))
    }

    /// U_φ^{⊗N}.
    pub fn parallel_unitary(&self, phi: &ParamVec, probes: usize) -> Result<COp> {
        check_dim(self.probe_dim, probes)?;
        tensor_power(&self.unitary_at(phi)?, probes)
    }

    /// Cached N-probe view used by the evaluation loops.
    pub fn parallel(&self, probes: usize) -> Result<ProbeChannel> {
        if probes == 0 {
            return Err(Error::InvalidArgument("probe count must be ≥ 1".into()));
        }
        let dim = check_dim(self.probe_dim, probes)?;
        let (basis, levels) = self.require_commuting()?;
        let d = self.probe_dim;
        let total_levels = levels
            .iter()
            .map(|l| {
                (0..dim)
                    .map(|idx| {
                        let mut rest = idx;
                        let mut sum = 0.0;
                        for _ in 0..probes {
                            sum += l[rest % d];
                            rest /= d;
                        }
                        sum
                    })
                    .collect()
            })
            .collect();
        Ok(ProbeChannel {
            channel: self.clone(),
            probes,
            dim,
            basis: basis.clone(),
            total_levels,
        })
    }

    /// Width of the spectrum of the (single) generator.
    pub fn spectrum_width(&self) -> Result<f64> {
        if self.param_count() != 1 {
            return Err(Error::Unsupported(
                "spectrum width is defined for single-parameter channels".into(),
            ));
        }
        spectrum_width(&self.generators[0])
    }
}

/// λ_max − λ_min of a Hermitian operator.
pub fn spectrum_width(h: &COp) -> Result<f64> {
    let e = eigh(h)?;
    Ok(e.values[e.values.len() - 1] - e.values[0])
}

/// Jointly diagonalizes commuting Hermitian operators: each generator is
/// diagonalized inside the degenerate blocks left by the previous ones.
fn common_eigenbasis(generators: &[COp]) -> Result<COp> {
    let d = generators[0].dim();
    let mut blocks: Vec<Vec<CVec>> = vec![(0..d).map(|k| CVec::basis(d, k)).collect()];
    for g in generators {
        let scale = g.max_abs().max(1.0);
        let mut next = Vec::new();
        for block in blocks {
            let k = block.len();
            let restricted = COp::from_fn(k, |a, b| g.sandwich(&block[a], &block[b]));
            let restricted = (&restricted + &restricted.adjoint()).scale_real(0.5);
            let e = eigh(&restricted)?;
            let rotated: Vec<CVec> = (0..k)
                .map(|c| {
                    let mut v = CVec::zeros(d);
                    for (a, b) in block.iter().enumerate() {
                        let w = e.vectors[(a, c)];
                        for i in 0..d {
                            v[i] += w * b[i];
                        }
                    }
                    v
                })
                .collect();
            let mut start = 0;
            for c in 1..=k {
                if c == k || (e.values[c] - e.values[c - 1]).abs() > 1e-9 * scale {
                    next.push(rotated[start..c].to_vec());
                    start = c;
                }
            }
        }
        blocks = next;
    }
    let cols: Vec<CVec> = blocks.into_iter().flatten().collect();
    COp::from_columns(&cols)
}

/// N copies of a [`ParamChannel`] acting in parallel, with the product
/// eigenbasis and summed eigenvalues cached.
#[derive(Debug, Clone)]
pub struct ProbeChannel {
    channel: ParamChannel,
    probes: usize,
    dim: usize,
    basis: COp,
    total_levels: Vec<Vec<f64>>,
}

impl ProbeChannel {
    pub fn channel(&self) -> &ParamChannel {
        &self.channel
    }

    pub fn probes(&self) -> usize {
        self.probes
    }

    /// d^N
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_count(&self) -> usize {
        self.channel.param_count()
    }

    fn phases(&self, phi: &ParamVec, sign: f64) -> Result<Vec<C64>> {
        self.channel.check_params(phi)?;
        Ok((0..self.dim)
            .map(|k| {
                let angle: f64 = self
                    .total_levels
                    .iter()
                    .zip(phi.values())
                    .map(|(l, p)| l[k] * p)
                    .sum();
                C64::from_polar(1.0, -sign * angle)
            })
            .collect())
    }

    fn propagate(&self, v: &CVec, phi: &ParamVec, sign: f64) -> Result<CVec> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.dim(),
            });
        }
        let phases = self.phases(phi, sign)?;
        let mut x = kron_power_apply(&self.basis, self.probes, v, true);
        for (xi, p) in x.as_mut_slice().iter_mut().zip(&phases) {
            *xi *= p;
        }
        Ok(kron_power_apply(&self.basis, self.probes, &x, false))
    }

    /// U_φ^{⊗N} v
    pub fn evolve(&self, v: &CVec, phi: &ParamVec) -> Result<CVec> {
        self.propagate(v, phi, 1.0)
    }

    /// (U_φ^{⊗N})† v
    pub fn evolve_adjoint(&self, v: &CVec, phi: &ParamVec) -> Result<CVec> {
        self.propagate(v, phi, -1.0)
    }

    /// Dense U_φ^{⊗N}.
    pub fn unitary(&self, phi: &ParamVec) -> Result<COp> {
        self.channel.parallel_unitary(phi, self.probes)
    }

    /// U ρ U†
    pub fn evolve_density(&self, rho: &COp, phi: &ParamVec) -> Result<COp> {
        let u = self.unitary(phi)?;
        Ok(&(&u * rho) * &u.adjoint())
    }
}

/// Applies V^{⊗n} (or its adjoint) to a vector, one tensor factor at a time.
fn kron_power_apply(v: &COp, n: usize, x: &CVec, adjoint: bool) -> CVec {
    let d = v.dim();
    let mut cur = x.clone().into_inner();
    let mut buf = vec![C64::new(0.0, 0.0); cur.len()];
    let total = cur.len();
    for pos in 0..n {
        let stride = d.pow((n - 1 - pos) as u32);
        let block = stride * d;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                for i in 0..d {
                    let mut acc = C64::new(0.0, 0.0);
                    for j in 0..d {
                        let m = if adjoint { v[(j, i)].conj() } else { v[(i, j)] };
                        acc += m * cur[outer + j * stride + inner];
                    }
                    buf[outer + i * stride + inner] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut buf);
    }
    CVec::new(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{pauli_x, random_hermitian, random_state, random_unitary, I};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn zero_phase_is_identity() {
        let ch = ParamChannel::single(pauli_x()).unwrap();
        let u = ch.unitary_at(&ParamVec::scalar(0.0)).unwrap();
        assert!(u.max_abs_diff(&COp::identity(2)) < 1e-15);
    }

    #[test]
    fn diagonal_exponential() {
        let u = ParamChannel::qubit_phase()
            .unitary_at(&ParamVec::scalar(PI))
            .unwrap();
        assert!(u.max_abs_diff(&COp::diag(&[1.0, -1.0])) < 1e-15);
    }

    #[test]
    fn pauli_x_quarter_turn() {
        // 2×2 series: cos(π/2)·1 − i sin(π/2)·X = −iX
        let ch = ParamChannel::single(pauli_x()).unwrap();
        let u = ch.unitary_at(&ParamVec::scalar(FRAC_PI_2)).unwrap();
        assert!(u.max_abs_diff(&pauli_x().scale(-I)) < 1e-14);
    }

    #[test]
    fn parallel_examples() {
        let ch = ParamChannel::qubit_phase();
        let phi = ParamVec::scalar(FRAC_PI_2);
        let u1 = ch.parallel_unitary(&phi, 1).unwrap();
        assert!(u1.max_abs_diff(&ch.unitary_at(&phi).unwrap()) < 1e-15);
        // hand tensor: diag(1, −i) ⊗ diag(1, −i)
        let u2 = ch.parallel_unitary(&phi, 2).unwrap();
        let expect = COp::diag_complex(&[
            C64::new(1.0, 0.0),
            -I,
            -I,
            C64::new(-1.0, 0.0),
        ]);
        assert!(u2.max_abs_diff(&expect) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(2, &mut rng);
        let ch = ParamChannel::single(h).unwrap();
        let u3 = ch.parallel_unitary(&ParamVec::scalar(0.83), 3).unwrap();
        assert!(u3.unitary_defect() < 1e-9);
    }

    #[test]
    fn width_examples() {
        assert_eq!(spectrum_width(&COp::diag(&[0.0, 1.0])).unwrap(), 1.0);
        assert!((spectrum_width(&pauli_x()).unwrap() - 2.0).abs() < 1e-14);
        for d in 2..6 {
            let w = ParamChannel::equal_ladder(d).unwrap().spectrum_width().unwrap();
            assert!((w - 2.0 * PI * (d as f64 - 1.0)).abs() < 1e-12);
        }
        let mut bad = COp::zeros(2);
        bad[(0, 1)] = C64::new(1.0, 0.0);
        assert!(spectrum_width(&bad).is_err());
    }

    #[test]
    fn non_commuting_generators_rejected() {
        let ch = ParamChannel::new(vec![pauli_x(), COp::diag(&[1.0, -1.0])]).unwrap();
        assert!(!ch.is_commuting());
        let err = ch.unitary_at(&ParamVec::new(vec![0.1, 0.2]).unwrap());
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn commuting_two_parameter_channel() {
        // rotate two commuting diagonals with degeneracies into a random frame
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_unitary(4, &mut rng);
        let rot = |d: &[f64]| {
            let m = &(&u * &COp::diag(d)) * &u.adjoint();
            (&m + &m.adjoint()).scale_real(0.5)
        };
        let h1 = rot(&[0.0, 0.0, 1.0, 1.0]);
        let h2 = rot(&[0.0, 2.0, 0.0, 2.0]);
        let ch = ParamChannel::new(vec![h1.clone(), h2.clone()]).unwrap();
        assert!(ch.is_commuting());
        let phi = ParamVec::new(vec![0.4, -1.1]).unwrap();
        let got = ch.unitary_at(&phi).unwrap();
        let sum = &h1.scale_real(0.4) + &h2.scale_real(-1.1);
        let expect = sum.expi_hermitian(1.0).unwrap();
        assert!(got.max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn cached_probe_channel_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = ParamChannel::single(random_hermitian(3, &mut rng)).unwrap();
        let pc = ch.parallel(3).unwrap();
        let psi = random_state(27, &mut rng);
        let phi = ParamVec::scalar(1.37);
        let dense = ch.parallel_unitary(&phi, 3).unwrap();
        let a = pc.evolve(psi.vector(), &phi).unwrap();
        assert!(a.max_abs_diff(&dense.apply(psi.vector())) < 1e-12);
        let b = pc.evolve_adjoint(psi.vector(), &phi).unwrap();
        assert!(b.max_abs_diff(&dense.apply_adjoint(psi.vector())) < 1e-12);
    }

    #[test]
    fn dimension_cap_enforced() {
        let ch = ParamChannel::qubit_phase();
        assert!(matches!(ch.parallel(13), Err(Error::DimensionCap { .. })));
    }

    fn swap_probes(d: usize, n: usize, a: usize, b: usize) -> COp {
        let dim = d.pow(n as u32);
        COp::from_fn(dim, |i, j| {
            let mut digits: Vec<usize> = (0..n).map(|p| (j / d.pow((n - 1 - p) as u32)) % d).collect();
            digits.swap(a, b);
            let target = digits.iter().fold(0, |acc, &x| acc * d + x);
            if target == i {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    proptest! {
        #[test]
        fn group_law(seed in any::<u64>(), p1 in -5.0f64..5.0, p2 in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = ParamChannel::single(random_hermitian(3, &mut rng)).unwrap();
            let a = ch.unitary_at(&ParamVec::scalar(p1)).unwrap();
            let b = ch.unitary_at(&ParamVec::scalar(p2)).unwrap();
            let ab = ch.unitary_at(&ParamVec::scalar(p1 + p2)).unwrap();
            prop_assert!((&a * &b).max_abs_diff(&ab) < 1e-9);
        }

        #[test]
        fn width_shift_invariant(seed in any::<u64>(), c in -10.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hermitian(4, &mut rng);
            let shifted = &h + &COp::identity(4).scale_real(c);
            let w0 = spectrum_width(&h).unwrap();
            let w1 = spectrum_width(&shifted).unwrap();
            prop_assert!((w0 - w1).abs() < 1e-10 * w0.max(1.0) + 1e-9);
        }

        #[test]
        fn parallel_commutes_with_probe_swaps(seed in any::<u64>(), n in 2usize..=3, phi in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = ParamChannel::single(random_hermitian(2, &mut rng)).unwrap();
            let u = ch.parallel_unitary(&ParamVec::scalar(phi), n).unwrap();
            let s = swap_probes(2, n, 0, n - 1);
            prop_assert!((&s * &u).max_abs_diff(&(&u * &s)) < 1e-9);
        }
    }
}
