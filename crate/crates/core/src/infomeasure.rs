//! Priors, quadrature rules, outcome probabilities and the mutual
//! information between outcomes and parameters. Everything is in nats.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ParamChannel, ParamVec, ProbeChannel};
use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, neg_xlogx, pairwise_sum};
use crate::qcore::{COp, Povm, PureState, TOL};

/// Hard limit on the number of quadrature nodes.
pub const NODE_CAP: usize = 1 << 22;
/// Minimum Gauss–Legendre nodes per period of the fastest oscillation.
pub const MIN_NODES_PER_PERIOD: usize = 16;
/// Default resolution; 16 nodes per period leaves ~1e-6 error near the
/// logarithmic kinks where an outcome probability touches zero.
pub const DEFAULT_NODES_PER_PERIOD: usize = 64;
const PANEL_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorKind {
    Uniform { a: f64, b: f64 },
    /// Piecewise-linear density through (nodes, values); values are
    /// rescaled so the trapezoid integral is exactly 1.
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
    Discrete { points: Vec<Vec<f64>>, masses: Vec<f64> },
}

/// Probability law q_φ over the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    kind: PriorKind,
}

impl Prior {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidPrior(format!("uniform bounds need a < b, got [{a}, {b}]")));
        }
        Ok(Prior {
            kind: PriorKind::Uniform { a, b },
        })
    }

    pub fn tabulated(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != values.len() {
            return Err(Error::InvalidPrior(
                "tabulated density needs ≥ 2 nodes and one value per node".into(),
            ));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPrior("tabulation nodes must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidPrior("density values must be finite and ≥ 0".into()));
        }
        let area: f64 = nodes
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum();
        if !(area > 0.0) {
            return Err(Error::InvalidPrior("density integrates to zero".into()));
        }
        let values = values.iter().map(|v| v / area).collect();
        Ok(Prior {
            kind: PriorKind::Tabulated { nodes, values },
        })
    }

    pub fn discrete(points: Vec<ParamVec>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != masses.len() {
            return Err(Error::InvalidPrior(
                "discrete prior needs one mass per point".into(),
            ));
        }
        let n = points[0].len();
        if points.iter().any(|p| p.len() != n) {
            return Err(Error::InvalidPrior("points have inconsistent dimension".into()));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidPrior("masses must be finite and ≥ 0".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > TOL.prior_norm {
            return Err(Error::InvalidPrior(format!("masses sum to {total}, not 1")));
        }
        Ok(Prior {
            kind: PriorKind::Discrete {
                points: points.into_iter().map(|p| p.values().to_vec()).collect(),
                masses,
            },
        })
    }

    pub fn kind(&self) -> &PriorKind {
        &self.kind
    }

    pub fn param_count(&self) -> usize {
        match &self.kind {
            PriorKind::Discrete { points, .. } => points[0].len(),
            _ => 1,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, PriorKind::Discrete { .. })
    }

    /// Support interval of a continuous prior.
    pub fn support(&self) -> Option<(f64, f64)> {
        match &self.kind {
            PriorKind::Uniform { a, b } => Some((*a, *b)),
            PriorKind::Tabulated { nodes, .. } => Some((nodes[0], nodes[nodes.len() - 1])),
            PriorKind::Discrete { .. } => None,
        }
    }

    /// Density of a continuous prior at φ (zero outside the support).
    pub fn density(&self, phi: f64) -> f64 {
        match &self.kind {
            PriorKind::Uniform { a, b } => {
                if phi >= *a && phi <= *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            PriorKind::Tabulated { nodes, values } => {
                if phi < nodes[0] || phi > nodes[nodes.len() - 1] {
                    return 0.0;
                }
                let j = nodes.partition_point(|&x| x <= phi).clamp(1, nodes.len() - 1);
                let t = (phi - nodes[j - 1]) / (nodes[j] - nodes[j - 1]);
                values[j - 1] + t * (values[j] - values[j - 1])
            }
            PriorKind::Discrete { .. } => 0.0,
        }
    }

    /// One draw from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVec {
        match &self.kind {
            PriorKind::Uniform { a, b } => ParamVec::scalar(a + (b - a) * rng.random::<f64>()),
            PriorKind::Tabulated { nodes, values } => {
                let top = values.iter().cloned().fold(0.0, f64::max);
                let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
                loop {
                    let x = lo + (hi - lo) * rng.random::<f64>();
                    if rng.random::<f64>() * top <= self.density(x) {
                        return ParamVec::scalar(x);
                    }
                }
            }
            PriorKind::Discrete { points, masses } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (p, m) in points.iter().zip(masses) {
                    acc += m;
                    if u < acc {
                        return ParamVec::new(p.clone()).expect("validated point");
                    }
                }
                ParamVec::new(points[points.len() - 1].clone()).expect("validated point")
            }
        }
    }
}

/// Integration rule against a prior: ∫ f q dφ ≈ Σ_k w_k q_k f(φ_k).
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    nodes: Vec<ParamVec>,
    weights: Vec<f64>,
    density: Vec<f64>,
}

impl Quadrature {
    pub fn nodes(&self) -> &[ParamVec] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Prior density (or mass) at each node.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// μ_k = w_k q_k, rescaled to sum to exactly 1.
    pub fn masses(&self) -> Vec<f64> {
        let raw: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.density)
            .map(|(w, q)| w * q)
            .collect();
        let total = pairwise_sum(&raw);
        raw.iter().map(|m| m / total).collect()
    }

    /// Σ_k w_k q_k
    pub fn normalization(&self) -> f64 {
        let raw: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.density)
            .map(|(w, q)| w * q)
            .collect();
        pairwise_sum(&raw)
    }

    /// Σ_k w_k f(φ_k) (plain integral, no prior weighting).
    pub fn integrate(&self, f: impl Fn(&ParamVec) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .collect();
        pairwise_sum(&terms)
    }
}

/// Composite Gauss–Legendre rule for a prior.
///
/// `resolution` is the requested nodes per period (raised to at least 16);
/// `scale` is the angular frequency of the fastest oscillation in the
/// integrand, so one period spans 2π/scale in φ.
pub fn build_quadrature(prior: &Prior, resolution: usize, scale: f64) -> Result<Quadrature> {
    let per_period = resolution.max(MIN_NODES_PER_PERIOD);
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::InvalidArgument(format!("oscillation scale must be ≥ 0, got {scale}")));
    }
    let panels_for = |len: f64| -> Result<usize> {
        let periods = len * scale / (2.0 * std::f64::consts::PI);
        let want = (periods * per_period as f64 / PANEL_ORDER as f64).ceil();
        if want * PANEL_ORDER as f64 > NODE_CAP as f64 {
            return Err(Error::ResourceLimit(format!(
                "quadrature would need {} nodes (cap {NODE_CAP})",
                want * PANEL_ORDER as f64
            )));
        }
        Ok((want as usize).max(per_period.div_ceil(PANEL_ORDER)).max(1))
    };

    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut push_interval = |lo: f64, hi: f64, panels: usize| {
        let h = (hi - lo) / panels as f64;
        for p in 0..panels {
            let left = lo + h * p as f64;
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(left + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
    };

    match prior.kind() {
        PriorKind::Discrete { points, masses } => {
            return Ok(Quadrature {
                nodes: points
                    .iter()
                    .map(|p| ParamVec::new(p.clone()))
                    .collect::<Result<_>>()?,
                weights: vec![1.0; points.len()],
                density: masses.clone(),
            });
        }
        PriorKind::Uniform { a, b } => {
            let panels = panels_for(b - a)?;
            push_interval(*a, *b, panels);
        }
        PriorKind::Tabulated { nodes: tn, .. } => {
            let mut total = 0usize;
            for w in tn.windows(2) {
                let panels = panels_for(w[1] - w[0])?;
                total += panels * PANEL_ORDER;
                if total > NODE_CAP {
                    return Err(Error::ResourceLimit(format!(
                        "quadrature would exceed {NODE_CAP} nodes"
                    )));
                }
                push_interval(w[0], w[1], panels);
            }
        }
    }
    let density = nodes.iter().map(|&x| prior.density(x)).collect();
    let quad = Quadrature {
        nodes: nodes.into_iter().map(ParamVec::scalar).collect(),
        weights,
        density,
    };
    let norm = quad.normalization();
    if (norm - 1.0).abs() > TOL.prior_norm {
        return Err(Error::InvalidPrior(format!(
            "quadrature normalization is {norm}, not 1"
        )));
    }
    Ok(quad)
}

/// −∫ q ln q (continuous) or −Σ q ln q (discrete).
pub fn prior_entropy(prior: &Prior, quad: &Quadrature) -> f64 {
    match prior.kind() {
        PriorKind::Uniform { a, b } => (b - a).ln(),
        PriorKind::Discrete { masses, .. } => {
            let terms: Vec<f64> = masses.iter().map(|&m| neg_xlogx(m)).collect();
            pairwise_sum(&terms)
        }
        PriorKind::Tabulated { .. } => {
            let terms: Vec<f64> = quad
                .weights()
                .iter()
                .zip(quad.density())
                .map(|(w, &q)| w * neg_xlogx(q))
                .collect();
            pairwise_sum(&terms)
        }
    }
}

/// Initial probe state; mixed states are accepted by the evaluators.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Pure(PureState),
    Mixed(COp),
}

impl InitialState {
    pub fn dim(&self) -> usize {
        match self {
            InitialState::Pure(s) => s.dim(),
            InitialState::Mixed(r) => r.dim(),
        }
    }

    pub fn density(&self) -> COp {
        match self {
            InitialState::Pure(s) => s.density(),
            InitialState::Mixed(r) => r.clone(),
        }
    }

    /// Validated density matrix.
    pub fn mixed(rho: COp) -> Result<Self> {
        let rho = rho.checked_hermitian()?;
        let tr = rho.trace().re;
        if (tr - 1.0).abs() > TOL.state_norm.max(1e-10) {
            return Err(Error::NotNormalized(tr));
        }
        let e = crate::qcore::eigh(&rho)?;
        if e.values[0] < -TOL.psd {
            return Err(Error::InvalidArgument(format!(
                "density matrix has negative eigenvalue {}",
                e.values[0]
            )));
        }
        Ok(InitialState::Mixed(rho))
    }
}

impl From<PureState> for InitialState {
    fn from(s: PureState) -> Self {
        InitialState::Pure(s)
    }
}

/// Initial state plus measurement on the N-probe space.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub initial: InitialState,
    pub povm: Povm,
}

impl Strategy {
    pub fn new(initial: impl Into<InitialState>, povm: Povm) -> Result<Self> {
        let initial = initial.into();
        if initial.dim() != povm.dim() {
            return Err(Error::DimensionMismatch {
                expected: povm.dim(),
                found: initial.dim(),
            });
        }
        Ok(Strategy { initial, povm })
    }

    pub fn dim(&self) -> usize {
        self.povm.dim()
    }
}

fn check_strategy(strategy: &Strategy, probe: &ProbeChannel) -> Result<()> {
    if strategy.dim() != probe.dim() {
        return Err(Error::DimensionMismatch {
            expected: probe.dim(),
            found: strategy.dim(),
        });
    }
    Ok(())
}

fn clip_probabilities(mut p: Vec<f64>) -> Result<Vec<f64>> {
    for x in p.iter_mut() {
        if *x < -TOL.prob_clip {
            return Err(Error::Numeric(format!("outcome probability {x} is negative")));
        }
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > TOL.completeness {
        return Err(Error::Numeric(format!("outcome probabilities sum to {total}")));
    }
    Ok(p)
}

/// p(m|φ) on a cached N-probe channel.
pub fn cond_prob_probe(strategy: &Strategy, probe: &ProbeChannel, phi: &ParamVec) -> Result<Vec<f64>> {
    check_strategy(strategy, probe)?;
    let raw: Vec<f64> = match &strategy.initial {
        InitialState::Pure(psi) => {
            let v = probe.evolve(psi.vector(), phi)?;
            strategy
                .povm
                .elements()
                .iter()
                .map(|e| e.sandwich(&v, &v).re)
                .collect()
        }
        InitialState::Mixed(rho) => {
            let r = probe.evolve_density(rho, phi)?;
            strategy
                .povm
                .elements()
                .iter()
                .map(|e| (e * &r).trace().re)
                .collect()
        }
    };
    clip_probabilities(raw)
}

/// p(m|φ) = tr(π_m U_φ^{⊗N} ρ₀ U_φ^{⊗N}†).
pub fn cond_prob(strategy: &Strategy, ch: &ParamChannel, phi: &ParamVec, probes: usize) -> Result<Vec<f64>> {
    cond_prob_probe(strategy, &ch.parallel(probes)?, phi)
}

/// Table of p(m|φ_k) over all quadrature nodes (row per node).
pub fn cond_table(strategy: &Strategy, probe: &ProbeChannel, quad: &Quadrature) -> Result<Vec<Vec<f64>>> {
    check_strategy(strategy, probe)?;
    quad.nodes()
        .par_iter()
        .map(|phi| cond_prob_probe(strategy, probe, phi))
        .collect()
}

/// p_m = Σ_k μ_k p(m|φ_k)
pub fn marginal_from_table(mu: &[f64], table: &[Vec<f64>]) -> Vec<f64> {
    let outcomes = table.first().map_or(0, |r| r.len());
    (0..outcomes)
        .map(|m| {
            let terms: Vec<f64> = mu.iter().zip(table).map(|(w, row)| w * row[m]).collect();
            pairwise_sum(&terms)
        })
        .collect()
}

/// Σ_k μ_k Σ_m p(m|k) ln[p(m|k)/p_m] for a precomputed table.
pub fn mi_from_table(mu: &[f64], table: &[Vec<f64>]) -> f64 {
    let marginal = marginal_from_table(mu, table);
    let terms: Vec<f64> = mu
        .par_iter()
        .zip(table.par_iter())
        .map(|(w, row)| {
            let inner: f64 = row
                .iter()
                .zip(&marginal)
                .filter(|(p, pm)| **p > 0.0 && **pm > 0.0)
                .map(|(p, pm)| p * (p / pm).ln())
                .sum();
            w * inner
        })
        .collect();
    pairwise_sum(&terms)
}

fn check_prior(prior: &Prior, ch: &ParamChannel, quad: &Quadrature) -> Result<()> {
    if prior.param_count() != ch.param_count() {
        return Err(Error::DimensionMismatch {
            expected: ch.param_count(),
            found: prior.param_count(),
        });
    }
    let norm = quad.normalization();
    if (norm - 1.0).abs() > TOL.prior_norm {
        return Err(Error::InvalidPrior(format!("quadrature normalization is {norm}")));
    }
    Ok(())
}

/// p_m averaged over the prior.
pub fn marginal_prob(
    strategy: &Strategy,
    ch: &ParamChannel,
    prior: &Prior,
    quad: &Quadrature,
    probes: usize,
) -> Result<Vec<f64>> {
    check_prior(prior, ch, quad)?;
    let probe = ch.parallel(probes)?;
    let table = cond_table(strategy, &probe, quad)?;
    Ok(marginal_from_table(&quad.masses(), &table))
}

/// H(m:φ) in nats.
pub fn mutual_information(
    strategy: &Strategy,
    ch: &ParamChannel,
    prior: &Prior,
    quad: &Quadrature,
    probes: usize,
) -> Result<f64> {
    check_prior(prior, ch, quad)?;
    let probe = ch.parallel(probes)?;
    mutual_information_probe(strategy, &probe, quad)
}

/// H(m:φ) on a cached N-probe channel.
pub fn mutual_information_probe(strategy: &Strategy, probe: &ProbeChannel, quad: &Quadrature) -> Result<f64> {
    let table = cond_table(strategy, probe, quad)?;
    Ok(mi_from_table(&quad.masses(), &table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Strategy;
    use crate::qcore::{random_density, random_hermitian, random_state, random_unitary, CVec};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

    fn plus() -> PureState {
        PureState::new(CVec::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2])).unwrap()
    }

    fn x_basis() -> Povm {
        let h = FRAC_1_SQRT_2;
        Povm::from_rank_one(
            &[1.0, 1.0],
            &[CVec::from_real(&[h, h]), CVec::from_real(&[h, -h])],
        )
        .unwrap()
    }

    fn ramsey() -> Strategy {
        Strategy::new(plus(), x_basis()).unwrap()
    }

    #[test]
    fn identity_channel_is_deterministic() {
        let s = Strategy::new(PureState::new(CVec::basis(3, 0)).unwrap(), Povm::computational(3)).unwrap();
        let ch = ParamChannel::identity(3).unwrap();
        let p = cond_prob(&s, &ch, &ParamVec::scalar(0.7), 1).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let prior = Prior::uniform(0.0, 2.0 * PI).unwrap();
        let q = build_quadrature(&prior, 16, 1.0).unwrap();
        assert_eq!(mutual_information(&s, &ch, &prior, &q, 1).unwrap(), 0.0);
    }

    #[test]
    fn ramsey_half_turn() {
        // ψ_φ = (|0⟩ + e^{−iφ}|1⟩)/√2, P(+) = (1 + cos φ)/2 = 1/2 at φ = π/2
        let p = cond_prob(&ramsey(), &ParamChannel::qubit_phase(), &ParamVec::scalar(PI / 2.0), 1).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ramsey_uniform_marginal() {
        let prior = Prior::uniform(0.0, 2.0 * PI).unwrap();
        let q = build_quadrature(&prior, 16, 2.0).unwrap();
        let pm = marginal_prob(&ramsey(), &ParamChannel::qubit_phase(), &prior, &q, 1).unwrap();
        assert!((pm[0] - 0.5).abs() < 1e-12 && (pm[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn discrete_prior_marginal_is_conditional() {
        let phi0 = 0.37;
        let prior = Prior::discrete(vec![ParamVec::scalar(phi0)], vec![1.0]).unwrap();
        let q = build_quadrature(&prior, 16, 1.0).unwrap();
        let ch = ParamChannel::qubit_phase();
        let pm = marginal_prob(&ramsey(), &ch, &prior, &q, 1).unwrap();
        let pc = cond_prob(&ramsey(), &ch, &ParamVec::scalar(phi0), 1).unwrap();
        assert_eq!(pm, pc);
    }

    #[test]
    fn perfectly_distinguishing_is_ln2() {
        let prior = Prior::discrete(
            vec![ParamVec::scalar(0.0), ParamVec::scalar(PI)],
            vec![0.5, 0.5],
        )
        .unwrap();
        let q = build_quadrature(&prior, 16, 1.0).unwrap();
        let mi = mutual_information(&ramsey(), &ParamChannel::qubit_phase(), &prior, &q, 1).unwrap();
        assert!((mi - LN_2).abs() < 1e-14);
    }

    #[test]
    fn ramsey_uniform_matches_refined_reference() {
        let ch = ParamChannel::qubit_phase();
        let prior = Prior::uniform(0.0, 2.0 * PI).unwrap();
        let q = build_quadrature(&prior, DEFAULT_NODES_PER_PERIOD, 2.0).unwrap();
        let mi = mutual_information(&ramsey(), &ch, &prior, &q, 1).unwrap();
        let fine = build_quadrature(&prior, 1 << 16, 1.0).unwrap();
        assert!(fine.len() >= 1 << 16);
        let reference = mutual_information(&ramsey(), &ch, &prior, &fine, 1).unwrap();
        assert!((mi - reference).abs() < 1e-6, "{mi} vs {reference}");
        // independent closed form: ln 2 − (1/2π)∫ h₂((1+cos φ)/2) dφ = 1 − ln 2
        assert!((reference - (1.0 - LN_2)).abs() < 1e-6);
    }

    #[test]
    fn prior_entropy_examples() {
        let p = Prior::uniform(0.0, 2.0 * PI).unwrap();
        let q = build_quadrature(&p, 16, 1.0).unwrap();
        assert!((prior_entropy(&p, &q) - (2.0 * PI).ln()).abs() < 1e-12);
        let p = Prior::uniform(0.0, 1.0).unwrap();
        assert_eq!(prior_entropy(&p, &build_quadrature(&p, 16, 1.0).unwrap()), 0.0);
        let pts = (0..4).map(|k| ParamVec::scalar(k as f64)).collect();
        let p = Prior::discrete(pts, vec![0.25; 4]).unwrap();
        let q = build_quadrature(&p, 16, 1.0).unwrap();
        assert!((prior_entropy(&p, &q) - 4f64.ln()).abs() < 1e-14);
        // tabulated flat density on [0, 1] reproduces the uniform value
        let p = Prior::tabulated(vec![0.0, 0.5, 1.0], vec![3.0, 3.0, 3.0]).unwrap();
        let q = build_quadrature(&p, 16, 1.0).unwrap();
        assert!(prior_entropy(&p, &q).abs() < 1e-12);
    }

    #[test]
    fn quadrature_examples() {
        let prior = Prior::uniform(0.0, 2.0 * PI).unwrap();
        let q = build_quadrature(&prior, 2, 1.0).unwrap();
        assert!(q.len() >= 16);
        let got = q.integrate(|x| (x.first() / 2.0).sin().powi(2));
        assert!((got - PI).abs() < 1e-10, "{got}");
        assert!((q.weights().iter().sum::<f64>() - 2.0 * PI).abs() < 1e-12);
        let q8 = build_quadrature(&prior, 2, 8.0).unwrap();
        assert!(q8.len() >= 128);
        assert_eq!(q8, build_quadrature(&prior, 2, 8.0).unwrap());
        assert!(matches!(
            build_quadrature(&prior, 1 << 20, 64.0),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn tabulated_prior_normalized() {
        let p = Prior::tabulated(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 1.0]).unwrap();
        let q = build_quadrature(&p, 16, 3.0).unwrap();
        assert!((q.normalization() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = p.sample(&mut rng).first();
            assert!((0.0..=3.0).contains(&x));
        }
    }

    #[test]
    fn invalid_priors_rejected() {
        assert!(Prior::uniform(1.0, 1.0).is_err());
        assert!(Prior::discrete(vec![ParamVec::scalar(0.0)], vec![0.5]).is_err());
        assert!(Prior::tabulated(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    // small random instance: qubit probes, random generator and prior window
    fn random_setup(rng: &mut ChaCha8Rng, probes: usize) -> (ProbeChannel, Quadrature) {
        let ch = ParamChannel::single(random_hermitian(2, rng)).unwrap();
        let prior = Prior::uniform(0.0, 2.0).unwrap();
        let w = ch.spectrum_width().unwrap();
        let quad = build_quadrature(&prior, 16, (probes as f64 + 1.0) * w).unwrap();
        (ch.parallel(probes).unwrap(), quad)
    }

    fn random_povm(rng: &mut ChaCha8Rng, dim: usize, outcomes: usize) -> Povm {
        // rank-one elements from the columns of an isometry dim → outcomes
        let u = random_unitary(outcomes, rng);
        let vecs: Vec<CVec> = (0..outcomes)
            .map(|m| CVec::new((0..dim).map(|i| u[(m, i)].conj()).collect()))
            .collect();
        let w: Vec<f64> = vecs.iter().map(|v| v.norm_sqr()).collect();
        Povm::from_rank_one(&w, &vecs).unwrap()
    }

    #[test]
    fn nonnegative_on_random_strategies() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let (probe, quad) = random_setup(&mut rng, 2);
            let s = Strategy::new(random_state(4, &mut rng), random_povm(&mut rng, 4, 6)).unwrap();
            let mi = mutual_information_probe(&s, &probe, &quad).unwrap();
            assert!(mi >= -1e-9 && mi <= 6f64.ln() + 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn convex_in_initial_state(seed in any::<u64>(), lambda in 0.01f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (probe, quad) = random_setup(&mut rng, 1);
            let povm = random_povm(&mut rng, 2, 3);
            let r1 = random_density(2, &mut rng);
            let r2 = random_density(2, &mut rng);
            let mix = &r1.scale_real(lambda) + &r2.scale_real(1.0 - lambda);
            let mi = |r: COp| {
                let s = Strategy::new(InitialState::mixed(r).unwrap(), povm.clone()).unwrap();
                mutual_information_probe(&s, &probe, &quad).unwrap()
            };
            let lhs = mi(mix);
            let rhs = lambda * mi(r1) + (1.0 - lambda) * mi(r2);
            prop_assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
        }

        #[test]
        fn convex_in_povm(seed in any::<u64>(), lambda in 0.01f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (probe, quad) = random_setup(&mut rng, 2);
            let psi = random_state(4, &mut rng);
            let a = random_povm(&mut rng, 4, 4);
            let b = random_povm(&mut rng, 4, 6);
            let mi = |p: &Povm| {
                let s = Strategy::new(psi.clone(), p.clone()).unwrap();
                mutual_information_probe(&s, &probe, &quad).unwrap()
            };
            let lhs = mi(&a.mix(&b, lambda).unwrap());
            let rhs = lambda * mi(&a) + (1.0 - lambda) * mi(&b);
            prop_assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
        }

        #[test]
        fn relabeling_never_increases_information(seed in any::<u64>(), label in proptest::collection::vec(0usize..3, 5)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (probe, quad) = random_setup(&mut rng, 2);
            let psi = random_state(4, &mut rng);
            let povm = random_povm(&mut rng, 4, 5);
            let coarse = povm.relabel(&label).unwrap();
            let fine = mutual_information_probe(&Strategy::new(psi.clone(), povm).unwrap(), &probe, &quad).unwrap();
            let merged = mutual_information_probe(&Strategy::new(psi, coarse).unwrap(), &probe, &quad).unwrap();
            prop_assert!(merged <= fine + 1e-9, "{merged} > {fine}");
        }
    }
}
