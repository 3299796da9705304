//! Quantum-classical parallel (QCP) strategy.
//!
//! N = 2^L − 1 probes split into L GHZ groups; group ℓ holds 2^{L−1−ℓ}
//! probes and yields one parity bit m_ℓ, measured with a feed-forward angle
//! built from the earlier bits. The outcome m = Σ m_ℓ 2^ℓ ∈ [0, N] follows
//! a Fejér kernel around Wφ(N+1)/2π.
//!
//! Only the ground and highest probe levels are ever populated, so a probe
//! of any dimension enters only through its spectrum width W.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{LN_2, PI};

use crate::channel::ParamChannel;
use crate::error::{Error, Result};
use crate::infomeasure::{build_quadrature, Prior, PriorKind, Quadrature, Strategy, DEFAULT_NODES_PER_PERIOD};
use crate::numeric::{neg_xlogx, pairwise_sum, stream_rng};
use crate::qcore::{check_dim, eigh, COp, CVec, Povm, PureState, C64};

/// Largest supported group count (distribution arrays of length 2^L).
pub const MAX_GROUPS: usize = 20;
const SHOT_CHUNK: u64 = 1 << 16;
const NODE_BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcpConfig {
    /// group count L
    pub groups: usize,
    /// spectrum width W
    pub width: f64,
    pub prior: Prior,
}

impl QcpConfig {
    pub fn new(groups: usize, width: f64, prior: Prior) -> Result<Self> {
        if groups == 0 || groups > MAX_GROUPS {
            return Err(Error::InvalidArgument(format!(
                "group count L must lie in 1..={MAX_GROUPS}, got {groups}"
            )));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidArgument(format!("spectrum width must be > 0, got {width}")));
        }
        if prior.param_count() != 1 {
            return Err(Error::InvalidPrior("QCP needs a single-parameter prior".into()));
        }
        Ok(QcpConfig {
            groups,
            width,
            prior,
        })
    }

    /// N = 2^L − 1
    pub fn probes(&self) -> usize {
        (1usize << self.groups) - 1
    }

    /// K = N + 1 = 2^L
    pub fn outcomes(&self) -> usize {
        1usize << self.groups
    }

    /// 2^{L−1−ℓ}
    pub fn group_size(&self, l: usize) -> usize {
        1usize << (self.groups - 1 - l)
    }
}

/// β_ℓ = 2π Σ_{j<ℓ} m_j 2^j / 2^L, in [0, 2π).
pub fn feedback_angle(l: usize, bits: &[u8], groups: usize) -> f64 {
    let prefix: u64 = bits[..l]
        .iter()
        .enumerate()
        .map(|(j, &b)| u64::from(b & 1) << j)
        .sum();
    2.0 * PI * prefix as f64 / (1u64 << groups) as f64
}

/// P(m_ℓ = 1) = [1 − cos(n(Wφ − β))]/2 with n = 2^{L−1−ℓ}.
pub fn group_bit_prob(l: usize, phi: f64, beta: f64, groups: usize, width: f64) -> f64 {
    let n = (1u64 << (groups - 1 - l)) as f64;
    (0.5 * (1.0 - (n * (width * phi - beta)).cos())).clamp(0.0, 1.0)
}

/// Outcome law from the adaptive chain, enumerated depth first.
pub fn qcp_dist_adaptive(cfg: &QcpConfig, phi: f64) -> Vec<f64> {
    let mut out = vec![0.0; cfg.outcomes()];
    let mut bits = vec![0u8; cfg.groups];
    descend(cfg, phi, 0, 1.0, &mut bits, &mut out);
    out
}

fn descend(cfg: &QcpConfig, phi: f64, l: usize, weight: f64, bits: &mut [u8], out: &mut [f64]) {
    if l == cfg.groups {
        let m: usize = bits.iter().enumerate().map(|(j, &b)| (b as usize) << j).sum();
        out[m] = weight;
        return;
    }
    let beta = feedback_angle(l, bits, cfg.groups);
    let p1 = group_bit_prob(l, phi, beta, cfg.groups, cfg.width);
    for (bit, p) in [(0u8, 1.0 - p1), (1u8, p1)] {
        bits[l] = bit;
        descend(cfg, phi, l + 1, weight * p, bits, out);
    }
}

/// sin y / y with a series near 0.
fn sinc(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        let y2 = y * y;
        1.0 - y2 / 6.0 + y2 * y2 / 120.0
    } else {
        y.sin() / y
    }
}

/// sin²(Kθ/2) / (K² sin²(θ/2)), continuous at θ ∈ 2πℤ.
pub fn fejer(k: usize, theta: f64) -> f64 {
    let kf = k as f64;
    // wrap to (−π, π]
    let mut d = theta.rem_euclid(2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    }
    let x = 0.5 * d;
    let s = x.sin();
    if s.abs() < 1e-8 {
        let r = sinc(kf * x) / sinc(x);
        r * r
    } else {
        let r = (kf * x).sin() / (kf * s);
        r * r
    }
}

/// Closed-form outcome law p(m|φ) = Fejér kernel at θ_m = Wφ − 2πm/(N+1).
pub fn qcp_dist_closed(cfg: &QcpConfig, phi: f64) -> Vec<f64> {
    let k = cfg.outcomes();
    let wphi = cfg.width * phi;
    (0..k)
        .map(|m| fejer(k, wphi - 2.0 * PI * m as f64 / k as f64))
        .collect()
}

/// One adaptive run, bit by bit.
pub fn qcp_shot<R: Rng + ?Sized>(cfg: &QcpConfig, phi: f64, rng: &mut R) -> usize {
    let mut bits = vec![0u8; cfg.groups];
    for l in 0..cfg.groups {
        let beta = feedback_angle(l, &bits, cfg.groups);
        let p1 = group_bit_prob(l, phi, beta, cfg.groups, cfg.width);
        bits[l] = u8::from(rng.random::<f64>() < p1);
    }
    bits.iter().enumerate().map(|(j, &b)| (b as usize) << j).sum()
}

/// Outcome counts over `shots` runs. Shots are split into fixed chunks,
/// chunk c drawing from stream c of the seed.
pub fn qcp_sample(cfg: &QcpConfig, phi: f64, shots: u64, seed: u64) -> Result<Vec<u64>> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be ≥ 1".into()));
    }
    let chunks = shots.div_ceil(SHOT_CHUNK);
    let partial: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let n = SHOT_CHUNK.min(shots - c * SHOT_CHUNK);
            let mut counts = vec![0u64; cfg.outcomes()];
            for _ in 0..n {
                counts[qcp_shot(cfg, phi, &mut rng)] += 1;
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; cfg.outcomes()];
    for p in partial {
        for (t, c) in total.iter_mut().zip(p) {
            *t += c;
        }
    }
    Ok(total)
}

/// How the mutual information was integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MiMethod {
    /// uniform prior over whole periods of Wφ: p_m = 1/(N+1), one kernel period
    Symmetry,
    /// quadrature over the full prior
    Generic,
}

#[derive(Debug, Clone, Serialize)]
pub struct QcpInformation {
    pub groups: usize,
    pub probes: usize,
    pub width: f64,
    pub mi_nats: f64,
    pub mi_bits: f64,
    /// ln N
    pub ln_n: f64,
    /// ln N − MI (nats)
    pub gap_nats: f64,
    /// log₂ N − MI (bits)
    pub gap_bits: f64,
    pub method: MiMethod,
    pub nodes: usize,
}

/// H(m:φ) in nats at the default resolution.
pub fn qcp_mutual_information(cfg: &QcpConfig) -> Result<f64> {
    Ok(qcp_information(cfg, DEFAULT_NODES_PER_PERIOD)?.mi_nats)
}

/// Number of whole periods 2π/W covered by a uniform prior, if integral.
fn whole_periods(cfg: &QcpConfig) -> Option<(f64, f64)> {
    match cfg.prior.kind() {
        PriorKind::Uniform { a, b } => {
            let periods = (b - a) * cfg.width / (2.0 * PI);
            let r = periods.round();
            (r >= 1.0 && (periods - r).abs() < 1e-9 * r).then_some((*a, r))
        }
        _ => None,
    }
}

/// Mutual information with both unit conventions.
pub fn qcp_information(cfg: &QcpConfig, resolution: usize) -> Result<QcpInformation> {
    let k = cfg.outcomes();
    let (mi, method, nodes) = match whole_periods(cfg) {
        Some((start, _)) => {
            // H(p(·|φ)) is periodic with P = 2π/(WK); p_m = 1/K exactly
            let period = 2.0 * PI / (cfg.width * k as f64);
            let window = Prior::uniform(start, start + period)?;
            let quad = build_quadrature(&window, resolution, cfg.width * k as f64)?;
            let mu = quad.masses();
            let ent: Vec<f64> = quad
                .nodes()
                .par_iter()
                .zip(mu.par_iter())
                .map(|(phi, w)| {
                    let h: Vec<f64> = qcp_dist_closed(cfg, phi.first())
                        .into_iter()
                        .map(neg_xlogx)
                        .collect();
                    w * pairwise_sum(&h)
                })
                .collect();
            ((k as f64).ln() - pairwise_sum(&ent), MiMethod::Symmetry, quad.len())
        }
        None => {
            let quad = build_quadrature(&cfg.prior, resolution, cfg.width * k as f64)?;
            (mi_streaming(cfg, &quad), MiMethod::Generic, quad.len())
        }
    };
    let n = cfg.probes() as f64;
    let ln_n = n.ln();
    Ok(QcpInformation {
        groups: cfg.groups,
        probes: cfg.probes(),
        width: cfg.width,
        mi_nats: mi,
        mi_bits: mi / LN_2,
        ln_n,
        gap_nats: ln_n - mi,
        gap_bits: n.log2() - mi / LN_2,
        method,
        nodes,
    })
}

/// Generic two-pass MI without materializing the node × outcome table.
fn mi_streaming(cfg: &QcpConfig, quad: &Quadrature) -> f64 {
    let k = cfg.outcomes();
    let mu = quad.masses();
    let nodes = quad.nodes();
    let blocks: Vec<(usize, usize)> = (0..nodes.len())
        .step_by(NODE_BLOCK)
        .map(|s| (s, (s + NODE_BLOCK).min(nodes.len())))
        .collect();
    let partial: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|&(s, e)| {
            let mut acc = vec![0.0; k];
            for i in s..e {
                for (a, p) in acc.iter_mut().zip(qcp_dist_closed(cfg, nodes[i].first())) {
                    *a += mu[i] * p;
                }
            }
            acc
        })
        .collect();
    let marginal: Vec<f64> = (0..k)
        .map(|m| pairwise_sum(&partial.iter().map(|p| p[m]).collect::<Vec<_>>()))
        .collect();
    let terms: Vec<f64> = nodes
        .par_iter()
        .zip(mu.par_iter())
        .map(|(phi, w)| {
            let inner: Vec<f64> = qcp_dist_closed(cfg, phi.first())
                .into_iter()
                .zip(&marginal)
                .map(|(p, &pm)| if p > 0.0 && pm > 0.0 { p * (p / pm).ln() } else { 0.0 })
                .collect();
            w * pairwise_sum(&inner)
        })
        .collect();
    pairwise_sum(&terms)
}

/// Single GHZ group on the full d^n probe space of `ch`: GHZ over the lowest
/// and highest eigenvectors of the generator, read out by the parity of
/// per-probe Â(β) measurements. A third outcome collects the inert levels
/// so the POVM is complete; it never fires.
pub fn group_strategy(ch: &ParamChannel, n: usize, beta: f64) -> Result<Strategy> {
    if ch.param_count() != 1 {
        return Err(Error::Unsupported("group strategy needs a single generator".into()));
    }
    let d = ch.probe_dim();
    if d < 2 || n == 0 {
        return Err(Error::InvalidArgument("group strategy needs d ≥ 2 and n ≥ 1".into()));
    }
    let dim = check_dim(d, n)?;
    let e = eigh(&ch.generators()[0])?;
    let g = e.vectors.column(0);
    let top = e.vectors.column(d - 1);

    let product = |vs: &[&CVec]| -> CVec {
        vs.iter()
            .skip(1)
            .fold(vs[0].clone(), |acc, v| acc.kron(v))
    };
    let all_g = product(&vec![&g; n]);
    let all_e = product(&vec![&top; n]);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = CVec::zeros(dim);
    for i in 0..dim {
        psi[i] = (all_g[i] + all_e[i]) * h;
    }
    let psi = PureState::new(psi)?;

    // Â eigenvectors (|g⟩ ± e^{−iβ}|e⟩)/√2 with eigenvalues ±1
    let phase = C64::from_polar(1.0, -beta);
    let plus = CVec::new((0..d).map(|i| (g[i] + phase * top[i]) * h).collect());
    let minus = CVec::new((0..d).map(|i| (g[i] - phase * top[i]) * h).collect());
    let mut even = COp::zeros(dim);
    let mut odd = COp::zeros(dim);
    for mask in 0u64..(1u64 << n) {
        let vs: Vec<&CVec> = (0..n)
            .map(|j| if mask >> j & 1 == 1 { &minus } else { &plus })
            .collect();
        let v = product(&vs);
        let proj = COp::outer(&v, &v);
        if mask.count_ones() % 2 == 0 {
            even = &even + &proj;
        } else {
            odd = &odd + &proj;
        }
    }
    let leak = &(&COp::identity(dim) - &even) - &odd;
    let leak = (&leak + &leak.adjoint()).scale_real(0.5);
    Strategy::new(psi, Povm::new(vec![even, odd, leak])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ParamVec;
    use crate::infomeasure::mutual_information;
    use crate::qcore::{ghz_state, tensor_power};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(l: usize) -> QcpConfig {
        QcpConfig::new(l, 1.0, Prior::uniform(0.0, 2.0 * PI).unwrap()).unwrap()
    }

    #[test]
    fn feedback_examples() {
        assert_eq!(feedback_angle(0, &[], 3), 0.0);
        assert!((feedback_angle(1, &[1], 2) - PI / 2.0).abs() < 1e-15);
        assert!((feedback_angle(2, &[1, 1], 3) - 3.0 * PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn bit_prob_examples() {
        assert_eq!(group_bit_prob(0, 0.0, 0.0, 3, 1.0), 0.0);
        assert!((group_bit_prob(0, PI, 0.0, 1, 1.0) - 1.0).abs() < 1e-15);
    }

    // exhaustive per-probe readout of a GHZ group held as a 2^n state vector
    fn brute_parity(n: usize, phi: f64, beta: f64, width: f64) -> f64 {
        let ghz = ghz_state(n, 2, 0.0).unwrap();
        let u = tensor_power(&COp::diag(&[0.0, width]).expi_hermitian(phi).unwrap(), n).unwrap();
        let v = u.apply(ghz.vector());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let ph = C64::from_polar(h, -beta);
        let plus = CVec::new(vec![C64::new(h, 0.0), ph]);
        let minus = CVec::new(vec![C64::new(h, 0.0), -ph]);
        let mut odd = 0.0;
        for mask in 0u32..(1 << n) {
            let basis = (0..n)
                .map(|j| if mask >> j & 1 == 1 { minus.clone() } else { plus.clone() })
                .reduce(|a, b| a.kron(&b))
                .unwrap();
            if mask.count_ones() % 2 == 1 {
                odd += basis.inner(&v).norm_sqr();
            }
        }
        odd
    }

    #[test]
    fn bit_prob_matches_state_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let phi = rng.random::<f64>() * 2.0 * PI;
            let beta = rng.random::<f64>() * 2.0 * PI;
            // n = 4 probes is group 0 of L = 3
            let got = group_bit_prob(0, phi, beta, 3, 1.3);
            let want = brute_parity(4, phi, beta, 1.3);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn single_group_ramsey() {
        let c = cfg(1);
        let p = qcp_dist_adaptive(&c, PI / 2.0);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        for phi in [0.1, 1.0, 2.5] {
            let p = qcp_dist_adaptive(&c, phi);
            assert!((p[0] - (phi / 2.0).cos().powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn representable_phase_is_certain() {
        for l in 1..=6 {
            let c = cfg(l);
            let k = c.outcomes();
            for m in [0, 1, k / 2, k - 1] {
                let phi = 2.0 * PI * m as f64 / k as f64;
                let a = qcp_dist_adaptive(&c, phi);
                let b = qcp_dist_closed(&c, phi);
                assert!((a[m] - 1.0).abs() < 1e-12 && (b[m] - 1.0).abs() < 1e-12);
                let counts = qcp_sample(&c, phi, 1000, 9).unwrap();
                assert_eq!(counts[m], 1000);
            }
        }
    }

    #[test]
    fn adaptive_equals_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for l in 1..=8 {
            let c = cfg(l);
            for _ in 0..100 {
                let phi = rng.random::<f64>() * 2.0 * PI;
                let a = qcp_dist_adaptive(&c, phi);
                let b = qcp_dist_closed(&c, phi);
                let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-10, "L = {l}, φ = {phi}: {diff}");
                assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let c = cfg(2);
        let a = qcp_dist_adaptive(&c, 0.3);
        let b = qcp_dist_closed(&c, 0.3);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn fejer_limit_and_normalization() {
        assert_eq!(fejer(64, 0.0), 1.0);
        assert!((fejer(64, 2.0 * PI) - 1.0).abs() < 1e-12);
        assert!((fejer(64, 1e-10) - 1.0).abs() < 1e-12);
        let c = cfg(6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s: f64 = qcp_dist_closed(&c, rng.random::<f64>() * 10.0).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = cfg(3);
        assert_eq!(qcp_sample(&c, 0.77, 5000, 4).unwrap(), qcp_sample(&c, 0.77, 5000, 4).unwrap());
        assert_ne!(qcp_sample(&c, 0.77, 5000, 4).unwrap(), qcp_sample(&c, 0.77, 5000, 5).unwrap());
    }

    #[test]
    fn one_group_information() {
        // independent value: ln 2 − (1/2π)∫ h(cos²(φ/2)) dφ = 1 − ln 2
        let info = qcp_information(&cfg(1), DEFAULT_NODES_PER_PERIOD).unwrap();
        assert_eq!(info.method, MiMethod::Symmetry);
        assert!((info.mi_nats - (1.0 - LN_2)).abs() < 1e-7, "{}", info.mi_nats);
        // generic evaluator on the explicit one-probe simulation
        let ch = ParamChannel::qubit_phase();
        let s = group_strategy(&ch, 1, 0.0).unwrap();
        let prior = Prior::uniform(0.0, 2.0 * PI).unwrap();
        let quad = build_quadrature(&prior, DEFAULT_NODES_PER_PERIOD, 2.0).unwrap();
        let generic = mutual_information(&s, &ch, &prior, &quad, 1).unwrap();
        assert!((generic - info.mi_nats).abs() < 1e-7);
    }

    #[test]
    fn point_mass_has_no_information() {
        let prior = Prior::discrete(vec![ParamVec::scalar(0.4)], vec![1.0]).unwrap();
        let c = QcpConfig::new(4, 1.0, prior).unwrap();
        assert!(qcp_mutual_information(&c).unwrap().abs() < 1e-15);
    }

    #[test]
    fn generic_route_agrees_with_symmetry() {
        let c = cfg(4);
        let sym = qcp_information(&c, DEFAULT_NODES_PER_PERIOD).unwrap();
        // same law, forced through the full-prior quadrature
        let gen = mi_streaming(&c, &build_quadrature(&c.prior, 64, 16.0).unwrap());
        assert!((sym.mi_nats - gen).abs() < 1e-7, "{} vs {gen}", sym.mi_nats);
    }

    #[test]
    fn refinement_changes_little() {
        for l in 1..=6 {
            let c = cfg(l);
            let a = qcp_information(&c, DEFAULT_NODES_PER_PERIOD).unwrap().mi_nats;
            let b = qcp_information(&c, 2 * DEFAULT_NODES_PER_PERIOD).unwrap().mi_nats;
            assert!((a - b).abs() < 1e-6, "L = {l}: {a} vs {b}");
        }
    }

    #[test]
    fn information_increases_with_groups() {
        let mi: Vec<f64> = (1..=10).map(|l| qcp_mutual_information(&cfg(l)).unwrap()).collect();
        assert!(mi.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn group_strategy_matches_two_level_law() {
        let ch = ParamChannel::equal_ladder(3).unwrap();
        let w = ch.spectrum_width().unwrap();
        let s = group_strategy(&ch, 2, 0.4).unwrap();
        let probe = ch.parallel(2).unwrap();
        for phi in [0.0, 0.05, 0.31] {
            let p = crate::infomeasure::cond_prob_probe(&s, &probe, &ParamVec::scalar(phi)).unwrap();
            let want = 0.5 * (1.0 - (2.0 * (w * phi - 0.4)).cos());
            assert!((p[1] - want).abs() < 1e-12);
            assert!(p[2].abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn covariance(l in 1usize..=7, phi in -10.0f64..10.0, w in 0.2f64..3.0) {
            let c = QcpConfig::new(l, w, Prior::uniform(0.0, 1.0).unwrap()).unwrap();
            let k = c.outcomes();
            let a = qcp_dist_closed(&c, phi);
            let b = qcp_dist_closed(&c, phi + 2.0 * PI / (w * k as f64));
            for m in 0..k {
                prop_assert!((b[(m + 1) % k] - a[m]).abs() < 1e-12);
            }
        }
    }
}
