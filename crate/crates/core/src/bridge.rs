//! Repeated estimation and the link between estimator spread and mutual
//! information: Gaussian conditional entropy of averaged estimates,
//! upper bounds on the information, histogram MI estimates and scaling fits.
//!
//! Averages are taken linearly, so experiments must use prior windows
//! narrow enough that estimates never wrap around 2π/W.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::channel::{ParamVec, ProbeChannel};
use crate::error::{Error, Result};
use crate::infomeasure::{cond_prob_probe, Prior, Quadrature, Strategy};
use crate::numeric::{linear_fit, neg_xlogx, pairwise_sum, stream_rng};
use crate::qcp::{qcp_shot, QcpConfig};

/// Offset separating prior-draw streams from estimate streams.
const PRIOR_STREAM_BASE: u64 = 1 << 62;

/// Where single estimates come from.
#[derive(Debug, Clone)]
pub enum EstimatorSource {
    /// QCP outcomes, circular mean of 2πm/(N+1) over s shots, divided by W
    /// and unwrapped around the centre of the prior window.
    Qcp(QcpConfig),
    /// Generic strategy, maximum likelihood over a grid of candidate phases.
    Likelihood {
        strategy: Strategy,
        probe: ProbeChannel,
        grid: Vec<f64>,
    },
    /// φ_true plus Gaussian noise of std `sigma`/√s per estimate.
    Gaussian { sigma: f64 },
}

impl EstimatorSource {
    pub fn likelihood(strategy: Strategy, probe: ProbeChannel, quad: &Quadrature) -> Self {
        EstimatorSource::Likelihood {
            strategy,
            probe,
            grid: quad.nodes().iter().map(ParamVec::first).collect(),
        }
    }
}

/// r estimates of one φ_true and their summary statistics.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorRun {
    pub phi_true: f64,
    pub s: usize,
    pub r: usize,
    pub estimates: Vec<f64>,
    /// φ̃_est, the average of the r estimates
    pub average: f64,
    /// sample standard deviation of single estimates
    pub delta: f64,
    /// Δφ/√r
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub s: usize,
    pub r: usize,
    pub seed: u64,
    /// accept prior windows wider than π/W (estimates may wrap)
    pub allow_wide_window: bool,
}

fn wrap_pi(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

fn qcp_window(cfg: &QcpConfig, allow_wide: bool) -> Result<f64> {
    let (a, b) = cfg
        .prior
        .support()
        .ok_or_else(|| Error::InvalidPrior("QCP estimation needs a continuous prior window".into()))?;
    if b - a > PI / cfg.width && !allow_wide {
        return Err(Error::InvalidArgument(format!(
            "prior window width {} exceeds π/W = {}; estimates may wrap (set the wide-window flag to override)",
            b - a,
            PI / cfg.width
        )));
    }
    Ok(0.5 * (a + b))
}

fn single_estimate<R: Rng + ?Sized>(source: &EstimatorSource, phi: f64, s: usize, centre: f64, rng: &mut R) -> Result<f64> {
    match source {
        EstimatorSource::Qcp(cfg) => {
            let k = cfg.outcomes() as f64;
            let (mut sx, mut sy) = (0.0, 0.0);
            for _ in 0..s {
                let theta = 2.0 * PI * qcp_shot(cfg, phi, rng) as f64 / k;
                sx += theta.cos();
                sy += theta.sin();
            }
            let angle = sy.atan2(sx);
            Ok(centre + wrap_pi(angle - cfg.width * centre) / cfg.width)
        }
        EstimatorSource::Likelihood { strategy, probe, grid } => {
            let p = cond_prob_probe(strategy, probe, &ParamVec::scalar(phi))?;
            let mut counts = vec![0usize; p.len()];
            for _ in 0..s {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = p.len() - 1;
                for (m, q) in p.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        pick = m;
                        break;
                    }
                }
                counts[pick] += 1;
            }
            let mut best = (f64::NEG_INFINITY, grid[0]);
            for &g in grid {
                let pg = cond_prob_probe(strategy, probe, &ParamVec::scalar(g))?;
                let ll: f64 = counts
                    .iter()
                    .zip(&pg)
                    .filter(|(c, _)| **c > 0)
                    .map(|(&c, &q)| if q > 0.0 { c as f64 * q.ln() } else { f64::NEG_INFINITY })
                    .sum();
                if ll > best.0 {
                    best = (ll, g);
                }
            }
            Ok(best.1)
        }
        EstimatorSource::Gaussian { sigma } => {
            let z: f64 = rng.sample(StandardNormal);
            Ok(phi + sigma / (s as f64).sqrt() * z)
        }
    }
}

fn check_sim(source: &EstimatorSource, opts: &SimOptions) -> Result<f64> {
    if opts.s == 0 || opts.r == 0 {
        return Err(Error::InvalidArgument("s and r must be ≥ 1".into()));
    }
    match source {
        EstimatorSource::Qcp(cfg) => qcp_window(cfg, opts.allow_wide_window),
        EstimatorSource::Gaussian { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
            Err(Error::InvalidArgument(format!("Gaussian sigma must be ≥ 0, got {sigma}")))
        }
        _ => Ok(0.0),
    }
}

fn run_from(phi_true: f64, s: usize, estimates: Vec<f64>) -> EstimatorRun {
    let r = estimates.len();
    let average = pairwise_sum(&estimates) / r as f64;
    let delta = if r > 1 {
        let dev: Vec<f64> = estimates.iter().map(|x| (x - average).powi(2)).collect();
        (pairwise_sum(&dev) / (r - 1) as f64).sqrt()
    } else {
        0.0
    };
    EstimatorRun {
        phi_true,
        s,
        r,
        estimates,
        average,
        delta,
        sigma: delta / (r as f64).sqrt(),
    }
}

fn estimates_for(source: &EstimatorSource, phi: f64, opts: &SimOptions, centre: f64, first_stream: u64) -> Result<Vec<f64>> {
    (0..opts.r)
        .map(|j| {
            let mut rng = stream_rng(opts.seed, first_stream + j as u64);
            single_estimate(source, phi, opts.s, centre, &mut rng)
        })
        .collect()
}

/// r independent estimates of `phi_true`, estimate j drawing from stream j.
pub fn simulate_estimates(source: &EstimatorSource, phi_true: f64, opts: &SimOptions) -> Result<EstimatorRun> {
    let centre = check_sim(source, opts)?;
    let est: Vec<f64> = (0..opts.r)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(opts.seed, j as u64);
            single_estimate(source, phi_true, opts.s, centre, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(run_from(phi_true, opts.s, est))
}

/// `trials` runs with φ_true drawn from the prior. Trial t draws φ_true from
/// stream PRIOR_STREAM_BASE + t and its estimates from streams t·r + j.
pub fn simulate_trials(source: &EstimatorSource, prior: &Prior, trials: usize, opts: &SimOptions) -> Result<Vec<EstimatorRun>> {
    let centre = check_sim(source, opts)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be ≥ 1".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut prng = stream_rng(opts.seed, PRIOR_STREAM_BASE + t as u64);
            let phi = prior.sample(&mut prng).first();
            let est = estimates_for(source, phi, opts, centre, (t * opts.r) as u64)?;
            Ok(run_from(phi, opts.s, est))
        })
        .collect()
}

/// ½ ln(2πe/r) + Σ_k μ_k ln Δφ(φ_k)
pub fn gaussian_conditional_entropy(r: usize, deltas: &[f64], quad: &Quadrature) -> Result<f64> {
    if r == 0 {
        return Err(Error::InvalidArgument("r must be ≥ 1".into()));
    }
    if deltas.len() != quad.len() {
        return Err(Error::DimensionMismatch {
            expected: quad.len(),
            found: deltas.len(),
        });
    }
    if let Some(bad) = deltas.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::InvalidArgument(format!("Δφ must be > 0, got {bad}")));
    }
    let terms: Vec<f64> = quad
        .masses()
        .iter()
        .zip(deltas)
        .map(|(m, d)| m * d.ln())
        .collect();
    Ok(0.5 * (2.0 * PI * E / r as f64).ln() + pairwise_sum(&terms))
}

/// Same quantity with φ drawn from the prior instead of placed on nodes:
/// ½ ln(2πe/r) + mean ln Δφ.
pub fn gaussian_conditional_entropy_sampled(r: usize, deltas: &[f64]) -> Result<f64> {
    if r == 0 || deltas.is_empty() {
        return Err(Error::InvalidArgument("need r ≥ 1 and at least one Δφ".into()));
    }
    if let Some(bad) = deltas.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::InvalidArgument(format!("Δφ must be > 0, got {bad}")));
    }
    let logs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    Ok(0.5 * (2.0 * PI * E / r as f64).ln() + pairwise_sum(&logs) / deltas.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BoundMode {
    /// ln(√(s^{1+ε}) W N^α) + H(φ)
    Asymptotic { epsilon: f64 },
    /// ln(√(rs) W N^α) + H(φ)
    Repeated { r: f64 },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundArgs {
    pub s: f64,
    pub width: f64,
    pub probes: f64,
    pub alpha: f64,
    pub prior_entropy: f64,
    pub mode: BoundMode,
}

/// Upper bound on the information carried by the averaged estimate.
pub fn mi_upper_bound(args: &BoundArgs) -> Result<f64> {
    let positive = [args.s, args.width, args.probes, args.alpha];
    if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidArgument(format!("bound arguments must be > 0: {args:?}")));
    }
    let half_log_data = match args.mode {
        BoundMode::Asymptotic { epsilon } => 0.5 * (1.0 + epsilon) * args.s.ln(),
        BoundMode::Repeated { r } => {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!("r must be > 0, got {r}")));
            }
            0.5 * (r * args.s).ln()
        }
    };
    Ok(half_log_data + args.width.ln() + args.alpha * args.probes.ln() + args.prior_entropy)
}

/// Plug-in differential entropy −Σ (c/n) ln(c/(n h)) on bins of width h.
pub fn histogram_entropy(samples: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) || samples.is_empty() {
        return Err(Error::InvalidArgument("histogram needs samples and a bin width > 0".into()));
    }
    let mut bins: BTreeMap<i64, u64> = BTreeMap::new();
    for &x in samples {
        *bins.entry((x / h).floor() as i64).or_default() += 1;
    }
    let n = samples.len() as f64;
    let terms: Vec<f64> = bins.values().map(|&c| neg_xlogx(c as f64 / n)).collect();
    Ok(pairwise_sum(&terms) + h.ln())
}

fn discrete_entropy<K: Ord>(bins: &BTreeMap<K, u64>, n: f64) -> f64 {
    let terms: Vec<f64> = bins.values().map(|&c| neg_xlogx(c as f64 / n)).collect();
    pairwise_sum(&terms)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EmpiricalMi {
    pub mi: f64,
    /// |estimate(h) − estimate(2h)|, a bin-sensitivity gauge
    pub spread: f64,
    pub bin_width: f64,
    pub samples: usize,
}

fn joint_plugin(pairs: &[(f64, f64)], h: f64) -> f64 {
    let n = pairs.len() as f64;
    let mut bx: BTreeMap<i64, u64> = BTreeMap::new();
    let mut by: BTreeMap<i64, u64> = BTreeMap::new();
    let mut bxy: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    for &(x, y) in pairs {
        let (i, j) = ((x / h).floor() as i64, (y / h).floor() as i64);
        *bx.entry(i).or_default() += 1;
        *by.entry(j).or_default() += 1;
        *bxy.entry((i, j)).or_default() += 1;
    }
    discrete_entropy(&bx, n) + discrete_entropy(&by, n) - discrete_entropy(&bxy, n)
}

fn degenerate(pairs: &[(f64, f64)]) -> bool {
    let (x0, y0) = pairs[0];
    pairs.iter().all(|&(x, _)| x == x0) || pairs.iter().all(|&(_, y)| y == y0)
}

/// Plug-in MI of (φ, φ̃_est) pairs on a square grid of bin width h.
pub fn empirical_mi(pairs: &[(f64, f64)], bin_width: f64) -> Result<EmpiricalMi> {
    if pairs.is_empty() || !(bin_width > 0.0) {
        return Err(Error::InvalidArgument("empirical MI needs pairs and a bin width > 0".into()));
    }
    if degenerate(pairs) {
        warn!("empirical MI on degenerate samples; returning 0");
        return Ok(EmpiricalMi {
            mi: 0.0,
            spread: 0.0,
            bin_width,
            samples: pairs.len(),
        });
    }
    let mi = joint_plugin(pairs, bin_width);
    let coarse = joint_plugin(pairs, 2.0 * bin_width);
    Ok(EmpiricalMi {
        mi,
        spread: (mi - coarse).abs(),
        bin_width,
        samples: pairs.len(),
    })
}

/// MI estimate H(φ̃) − H(φ̃ − φ) for estimators whose error law does not
/// depend on φ (true for QCP by covariance, up to window edges). The two
/// entropies are histogrammed separately: `h_marginal` for φ̃ and
/// `h_noise` for φ̃ − φ.
pub fn empirical_mi_shift(pairs: &[(f64, f64)], h_marginal: f64, h_noise: f64) -> Result<EmpiricalMi> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empirical MI needs pairs".into()));
    }
    if degenerate(pairs) {
        warn!("empirical MI on degenerate samples; returning 0");
        return Ok(EmpiricalMi {
            mi: 0.0,
            spread: 0.0,
            bin_width: h_noise,
            samples: pairs.len(),
        });
    }
    let est: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let noise: Vec<f64> = pairs.iter().map(|p| p.1 - p.0).collect();
    let at = |scale: f64| -> Result<f64> {
        Ok(histogram_entropy(&est, h_marginal * scale)? - histogram_entropy(&noise, h_noise * scale)?)
    };
    let mi = at(1.0)?;
    Ok(EmpiricalMi {
        mi,
        spread: (mi - at(2.0)?).abs(),
        bin_width: h_noise,
        samples: pairs.len(),
    })
}

/// min σ / 4, skipping σ that vanish to roundoff (≤ 1e-9 · max σ). QCP
/// trials near a representable phase repeat one estimate r times.
pub fn default_bin_width(sigmas: &[f64]) -> Option<f64> {
    let top = sigmas.iter().cloned().fold(0.0f64, f64::max);
    let m = sigmas
        .iter()
        .cloned()
        .filter(|s| *s > 1e-9 * top)
        .fold(f64::INFINITY, f64::min);
    m.is_finite().then_some(m / 4.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingModel {
    /// ln Δφ = c − α ln N
    Deviation,
    /// MI = c + α ln N
    Information,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit {
    pub model: ScalingModel,
    pub alpha: f64,
    pub constant: f64,
    pub residuals: Vec<f64>,
    pub points: Vec<(f64, f64)>,
}

/// Least squares on (ln N, ln Δφ) or (ln N, MI).
pub fn fit_scaling(points: &[(f64, f64)], model: ScalingModel) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument("scaling fit needs ≥ 3 points".into()));
    }
    if points.iter().any(|(n, _)| !(*n > 0.0)) {
        return Err(Error::InvalidArgument("N must be > 0".into()));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), (n, _)| (a.min(*n), b.max(*n)));
    if hi < 10.0 * lo {
        return Err(Error::InvalidArgument("N values must span at least one decade".into()));
    }
    let x: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let y: Vec<f64> = match model {
        ScalingModel::Deviation => {
            if points.iter().any(|(_, d)| !(*d > 0.0)) {
                return Err(Error::InvalidArgument("Δφ must be > 0".into()));
            }
            points.iter().map(|(_, d)| d.ln()).collect()
        }
        ScalingModel::Information => points.iter().map(|(_, m)| *m).collect(),
    };
    let (a, b, residuals) = linear_fit(&x, &y);
    let alpha = match model {
        ScalingModel::Deviation => -b,
        ScalingModel::Information => b,
    };
    Ok(ScalingFit {
        model,
        alpha,
        constant: a,
        residuals,
        points: points.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    /// 3 × empirical spread
    pub margin: f64,
    /// rhs − lhs
    pub slack: f64,
    pub satisfied: bool,
}

/// Compares an empirical MI with the upper bound.
pub fn bound_check(empirical: &EmpiricalMi, args: &BoundArgs) -> Result<BoundReport> {
    let rhs = mi_upper_bound(args)?;
    let margin = 3.0 * empirical.spread;
    Ok(BoundReport {
        lhs: empirical.mi,
        rhs,
        margin,
        slack: rhs - empirical.mi,
        satisfied: empirical.mi <= rhs + margin,
    })
}

/// Kolmogorov–Smirnov distance between standardized samples and N(0, 1).
pub fn ks_distance_normal(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("KS test needs ≥ 2 samples".into()));
    }
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    let var = pairwise_sum(&samples.iter().map(|x| (x - mean).powi(2)).collect::<Vec<_>>()) / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::InvalidArgument("KS test on constant samples".into()));
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    Ok(z.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = normal.cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    }))
}
