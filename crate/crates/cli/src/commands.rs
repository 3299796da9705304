//! Subcommand bodies: resolve options, compute, emit.

use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use qmetro::bridge::{
    bound_check, default_bin_width, empirical_mi_shift, fit_scaling, gaussian_conditional_entropy_sampled,
    histogram_entropy, ks_distance_normal, simulate_trials, BoundArgs, BoundMode, BoundReport, EstimatorSource,
    ScalingModel, SimOptions,
};
use qmetro::extraction::{optimize_strategy, povm_residual_probe, state_residual_probe, OptimizeOptions};
use qmetro::infomeasure::{
    build_quadrature, cond_table, marginal_from_table, mi_from_table, prior_entropy, PriorKind, Quadrature,
    DEFAULT_NODES_PER_PERIOD,
};
use qmetro::qcore::CVec;
use qmetro::qcp::{qcp_dist_adaptive, qcp_dist_closed, qcp_information, qcp_sample, QcpConfig, MAX_GROUPS};
use serde::{Deserialize, Serialize};

use crate::config::{
    at_least, build_prior, config_err, full_period, parse_range, positive, require, ChannelSpec, DenseVector,
    PriorSpec, StrategySpec,
};
use crate::emit::{ext_f64, to_json, Envelope, Format, Writer};
use crate::{row, BridgeOpts, CliError, MiEvalOpts, OptimizeOpts, QcpMode, QcpOpts, ScalingMode, ScalingOpts};

pub struct Ctx {
    pub format: Format,
    /// set when wall time goes into the envelope
    pub wall: Option<Instant>,
}

fn finish<C: Serialize, P: Serialize>(name: &str, config: C, payload: P, ctx: &Ctx, out: &mut Writer) -> Result<(), CliError> {
    if !ctx.format.json() {
        return Ok(());
    }
    let mut env = Envelope::new(name, config, payload);
    env.wall_time_s = ctx.wall.map(|t| t.elapsed().as_secs_f64());
    out.text(&format!("{}.json", name.replace('-', "_")), &to_json(&env)?)
}

fn resolution(v: Option<usize>) -> Result<usize, CliError> {
    at_least(v.unwrap_or(DEFAULT_NODES_PER_PERIOD), 1, "resolution")
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b))
}

fn dense(v: &CVec) -> DenseVector {
    DenseVector {
        real: v.as_slice().iter().map(|c| c.re).collect(),
        imag: Some(v.as_slice().iter().map(|c| c.im).collect()),
    }
}

fn phi_header(params: usize) -> Vec<String> {
    if params == 1 {
        vec!["phi_rad".into()]
    } else {
        (0..params).map(|i| format!("phi{i}_rad")).collect()
    }
}

fn window(text: &str, key: &str) -> Result<(f64, f64), CliError> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| config_err(key, format!("malformed window `{text}`, expected a:b")))?;
    let p = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| config_err(key, format!("`{t}` is not a number")))
    };
    let (a, b) = (p(a)?, p(b)?);
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(config_err(key, format!("window needs a < b, got {a}:{b}")));
    }
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEvalPayload {
    pub mi_nats: f64,
    pub mi_bits: f64,
    pub prior_entropy_nats: f64,
    pub nodes: usize,
    pub probe_dim: usize,
    pub outcomes: usize,
    /// p(m)
    pub marginal: Vec<f64>,
    /// stationarity residuals; absent unless the POVM is rank one
    pub residuals: Option<Residuals>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// max over (m, m') of the POVM condition
    #[serde(with = "ext_f64")]
    pub povm: f64,
    /// max over the orthogonal complement of the state condition
    #[serde(with = "ext_f64")]
    pub state: f64,
}

pub fn mi_eval(o: MiEvalOpts, name: &str, ctx: &Ctx, out: &mut Writer) -> Result<(), CliError> {
    let channel = require(&o.channel, "channel")?.resolve()?;
    let ch = channel.build()?;
    let prior_kind = require(&o.prior, "prior")?.resolve("prior")?;
    let prior = build_prior(&prior_kind, "prior")?;
    if prior.param_count() != ch.param_count() {
        return Err(config_err("prior", format!("{} parameters, channel has {}", prior.param_count(), ch.param_count())));
    }
    let probes = at_least(o.probes.unwrap_or(1), 1, "N")?;
    let spec = o.strategy.clone().unwrap_or(StrategySpec::Name("ghz:0".into())).resolve()?;
    let strategy = spec.build(&ch, probes, o.seed)?;
    let res = resolution(o.resolution)?;
    let probe = ch.parallel(probes)?;
    if strategy.dim() != probe.dim() {
        return Err(config_err("strategy", format!("dimension {} but the probes span {}", strategy.dim(), probe.dim())));
    }
    let quad = build_quadrature(&prior, res, scale(probes, &ch)?)?;
    let table = cond_table(&strategy, &probe, &quad)?;
    let mu = quad.masses();
    let mi = mi_from_table(&mu, &table);
    let payload = MiEvalPayload {
        mi_nats: mi,
        mi_bits: mi / LN_2,
        prior_entropy_nats: prior_entropy(&prior, &quad),
        nodes: quad.len(),
        probe_dim: probe.dim(),
        outcomes: strategy.povm.outcome_count(),
        marginal: marginal_from_table(&mu, &table),
        residuals: match povm_residual_probe(&strategy, &probe, &quad) {
            Ok(r) => Some(Residuals {
                povm: max_of(&r.concat()),
                state: max_of(&state_residual_probe(&strategy, &probe, &quad)?),
            }),
            Err(qmetro::Error::Unsupported(_)) => None,
            Err(e) => return Err(e.into()),
        },
    };
    if ctx.format.csv() {
        let mut header = phi_header(ch.param_count());
        header.extend((0..payload.outcomes).map(|m| format!("p{m}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = quad.nodes().iter().zip(&table).map(|(phi, p)| {
            phi.values().iter().chain(p).map(f64::to_string).collect()
        });
        out.table("cond_prob.csv", &header, rows)?;
    }
    let echo = MiEvalOpts {
        channel: Some(channel),
        prior: Some(PriorSpec::Table(prior_kind)),
        probes: Some(probes),
        strategy: Some(spec),
        seed: o.seed,
        resolution: Some(res),
    };
    finish(name, echo, payload, ctx, out)
}

/// Fastest phase oscillation N·W, at least 1.
fn scale(probes: usize, ch: &qmetro::channel::ParamChannel) -> Result<f64, CliError> {
    let w = if ch.param_count() == 1 { ch.spectrum_width()? } else { 1.0 };
    Ok((probes as f64 * w).max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizePayload {
    pub mi_nats: f64,
    pub mi_bits: f64,
    #[serde(with = "ext_f64")]
    pub povm_residual: f64,
    #[serde(with = "ext_f64")]
    pub state_residual: f64,
    pub gradient_norm: f64,
    pub orthogonality_defect: f64,
    /// stands in for indecomposability, which is not certified
    pub linearly_independent: bool,
    pub converged: bool,
    pub iterations: usize,
    pub best_restart: usize,
    pub probe_dim: usize,
    pub outcomes: usize,
    pub state: DenseVector,
    pub povm_weights: Vec<f64>,
    pub povm_vectors: Vec<DenseVector>,
}

pub fn optimize(o: OptimizeOpts, name: &str, ctx: &Ctx, out: &mut Writer) -> Result<(), CliError> {
    let channel = require(&o.channel, "channel")?.resolve()?;
    let ch = channel.build()?;
    let prior_kind = require(&o.prior, "prior")?.resolve("prior")?;
    let prior = build_prior(&prior_kind, "prior")?;
    if prior.param_count() != ch.param_count() {
        return Err(config_err("prior", format!("{} parameters, channel has {}", prior.param_count(), ch.param_count())));
    }
    let probes = at_least(o.probes.unwrap_or(1), 1, "N")?;
    let dim = qmetro::qcore::check_dim(ch.probe_dim(), probes).map_err(|e| config_err("N", e))?;
    let outcomes = at_least(o.outcomes.unwrap_or(dim), dim, "M")?;
    let seed = require(&o.seed, "seed")?;
    let defaults = OptimizeOptions::default();
    let opts = OptimizeOptions {
        restarts: o.restarts.unwrap_or(defaults.restarts),
        max_iters: o.max_iters.unwrap_or(defaults.max_iters),
        tol: o.tol.unwrap_or(defaults.tol),
        seed,
        ..defaults
    };
    opts.validate().map_err(|e| config_err("restarts/tol/max-iters", e))?;
    let res = resolution(o.resolution)?;
    let quad = build_quadrature(&prior, res, scale(probes, &ch)?)?;
    let rep = optimize_strategy(&ch, &prior, &quad, probes, outcomes, &opts)?;
    let (weights, vectors) = rep
        .strategy
        .povm
        .rank_one_parts()
        .ok_or_else(|| CliError::Runtime("optimized POVM lost its rank-one form".into()))?;
    let payload = OptimizePayload {
        mi_nats: rep.mi,
        mi_bits: rep.mi / LN_2,
        povm_residual: rep.povm_residual,
        state_residual: rep.state_residual,
        gradient_norm: rep.gradient_norm,
        orthogonality_defect: rep.orthogonality_defect,
        linearly_independent: rep.linearly_independent,
        converged: rep.converged,
        iterations: rep.iterations,
        best_restart: rep.best_restart,
        probe_dim: rep.probe_dim,
        outcomes: rep.outcomes,
        state: dense(&rep.params.state()),
        povm_weights: weights,
        povm_vectors: vectors.iter().map(dense).collect(),
    };
    if ctx.format.csv() {
        let rows = rep.restarts.iter().map(|r| row![r.restart, r.mi, r.iterations]);
        out.table("restarts.csv", &["restart", "MI_nats", "iterations"], rows)?;
    }
    let echo = OptimizeOpts {
        channel: Some(channel),
        prior: Some(PriorSpec::Table(prior_kind)),
        probes: Some(probes),
        outcomes: Some(outcomes),
        restarts: Some(opts.restarts),
        seed: Some(seed),
        tol: Some(opts.tol),
        max_iters: Some(opts.max_iters),
        resolution: Some(res),
    };
    finish(name, echo, payload, ctx, out)
}

fn qcp_setup(groups: Option<usize>, width: Option<f64>, prior: &Option<PriorSpec>, l_key: &str) -> Result<(usize, f64, PriorKind), CliError> {
    let l = require(&groups, l_key)?;
    if !(1..=MAX_GROUPS).contains(&l) {
        return Err(config_err(l_key, format!("must lie in 1..={MAX_GROUPS}, got {l}")));
    }
    let w = positive(width.unwrap_or(1.0), "W")?;
    let kind = match prior {
        Some(p) => p.clone().resolve("prior")?,
        None => full_period(w),
    };
    Ok((l, w, kind))
}

fn qcp_config(l: usize, w: f64, kind: &PriorKind) -> Result<QcpConfig, CliError> {
    let prior = build_prior(kind, "prior")?;
    QcpConfig::new(l, w, prior).map_err(|e| config_err("prior", e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcpPayload {
    pub groups: usize,
    pub probes: usize,
    pub width: f64,
    pub mi_nats: f64,
    pub mi_bits: f64,
    pub ln_n: f64,
    /// ln N − MI
    pub gap_nats: f64,
    /// log₂ N − MI in bits
    pub gap_bits: f64,
    /// symmetry or generic
    pub method: String,
    pub nodes: usize,
    pub mode: QcpMode,
    pub phi_rad: Vec<f64>,
    /// total-variation distance of each tabulated law from the closed form
    pub tv_vs_closed: Vec<f64>,
}

pub fn qcp(o: QcpOpts, name: &str, ctx: &Ctx, out: &mut Writer) -> Result<(), CliError> {
    let (l, w, kind) = qcp_setup(o.groups, o.width, &o.prior, "L")?;
    let cfg = qcp_config(l, w, &kind)?;
    let mode = o.mode.unwrap_or(QcpMode::Closed);
    let res = resolution(o.resolution)?;
    let grid = at_least(o.grid.unwrap_or(5), 1, "grid")?;
    let (shots, seed) = if mode == QcpMode::Sample {
        (Some(o.shots.unwrap_or(100_000).max(1)), Some(require(&o.seed, "seed")?))
    } else {
        (o.shots, o.seed)
    };
    let phis: Vec<f64> = match &o.phi {
        Some(list) => list
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| config_err("phi", format!("`{t}` is not a number"))))
            .collect::<Result<_, _>>()?,
        None => match &kind {
            PriorKind::Discrete { points, .. } => points.iter().map(|p| p[0]).collect(),
            _ => {
                let (a, b) = cfg.prior.support().unwrap_or((0.0, 2.0 * PI / w));
                (0..grid).map(|i| a + (i as f64 + 0.5) * (b - a) / grid as f64).collect()
            }
        },
    };
    let info = qcp_information(&cfg, res)?;
    let k = cfg.outcomes();
    let mut tv = Vec::with_capacity(phis.len());
    let mut rows = Vec::new();
    for (i, &phi) in phis.iter().enumerate() {
        let closed = qcp_dist_closed(&cfg, phi);
        let (p, counts) = match mode {
            QcpMode::Closed => (closed.clone(), None),
            QcpMode::Adaptive => (qcp_dist_adaptive(&cfg, phi), None),
            QcpMode::Sample => {
                let n = shots.unwrap_or(1);
                // one stream family per tabulated phase
                let sub = seed.unwrap_or(0).wrapping_add(i as u64);
                let c = qcp_sample(&cfg, phi, n, sub)?;
                (c.iter().map(|&x| x as f64 / n as f64).collect::<Vec<_>>(), Some(c))
            }
        };
        tv.push(0.5 * p.iter().zip(&closed).map(|(a, b)| (a - b).abs()).sum::<f64>());
        if ctx.format.csv() {
            for m in 0..k {
                let theta = 2.0 * PI * m as f64 / k as f64;
                let mut r = row![phi, m, theta, p[m]];
                if let Some(c) = &counts {
                    r.push(c[m].to_string());
                }
                rows.push(r);
            }
        }
    }
    if ctx.format.csv() {
        let mut header = vec!["phi_rad", "m", "theta_rad", "p"];
        if mode == QcpMode::Sample {
            header.push("count");
        }
        out.table("distribution.csv", &header, rows)?;
    }
    let payload = QcpPayload {
        groups: info.groups,
        probes: info.probes,
        width: info.width,
        mi_nats: info.mi_nats,
        mi_bits: info.mi_bits,
        ln_n: info.ln_n,
        gap_nats: info.gap_nats,
        gap_bits: info.gap_bits,
        method: format!("{:?}", info.method).to_lowercase(),
        nodes: info.nodes,
        mode,
        phi_rad: phis.clone(),
        tv_vs_closed: tv,
    };
    let echo = QcpOpts {
        groups: Some(l),
        width: Some(w),
        prior: Some(PriorSpec::Table(kind)),
        mode: Some(mode),
        shots,
        seed,
        phi: o.phi.clone(),
        grid: Some(grid),
        resolution: Some(res),
    };
    finish(name, echo, payload, ctx, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOut {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub slack: f64,
    pub satisfied: bool,
}

impl From<BoundReport> for BoundOut {
    fn from(b: BoundReport) -> Self {
        BoundOut {
            lhs: b.lhs,
            rhs: b.rhs,
            margin: b.margin,
            slack: b.slack,
            satisfied: b.satisfied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgePayload {
    /// qcp-circular-mean or maximum-likelihood
    pub estimator: String,
    pub trials: usize,
    pub s: usize,
    pub r: usize,
    pub probes: usize,
    pub width: f64,
    pub delta_mean_rad: f64,
    pub sigma_mean_rad: f64,
    /// ½ ln(2πe/r) + E ln Δφ over non-degenerate trials
    pub gaussian_conditional_entropy_nats: Option<f64>,
    /// histogram entropy of φ̃_est − φ
    pub histogram_conditional_entropy_nats: f64,
    pub prior_entropy_nats: f64,
    pub empirical_mi_nats: f64,
    pub empirical_mi_spread: f64,
    pub bin_width_noise_rad: f64,
    pub bin_width_marginal_rad: f64,
    pub bound_repeated: BoundOut,
    pub bound_asymptotic: BoundOut,
    /// trials whose r estimates coincide (σ = 0 to roundoff)
    pub degenerate_trials: usize,
    /// KS distance of (φ̃_est − φ)/σ over non-degenerate trials from N(0, 1)
    pub ks_distance: Option<f64>,
}

pub fn bridge(o: BridgeOpts, name: &str, ctx: &Ctx, out: &mut Writer) -> Result<(), CliError> {
    let spec = o
        .strategy
        .clone()
        .unwrap_or(StrategySpec::Name("qcp".into()));
    let is_qcp = spec == StrategySpec::Name("qcp".into());
    let s = at_least(o.s.unwrap_or(32), 1, "s")?;
    let r = at_least(o.r.unwrap_or(64), 1, "r")?;
    let trials = at_least(o.trials.unwrap_or(1000), 2, "trials")?;
    let seed = require(&o.seed, "seed")?;
    let persist = o.persist_samples.unwrap_or(false);
    let allow_wide = o.allow_wide_window.unwrap_or(false);
    let epsilon = o.epsilon.unwrap_or(0.0);
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(config_err("epsilon", format!("must be ≥ 0, got {epsilon}")));
    }
    let alpha = positive(o.alpha.unwrap_or(1.0), "alpha")?;
    if let Some(h) = o.bin_width {
        positive(h, "bin-width")?;
    }
    let res = resolution(o.resolution)?;
    let mut echo = o.clone();

    let (source, probes, width, win) = if is_qcp {
        let (l, w, _) = qcp_setup(Some(o.groups.unwrap_or(6)), o.width, &None, "L")?;
        let win_text = o
            .prior_window
            .clone()
            .unwrap_or_else(|| format!("0.2:{}", 0.2 + PI / (2.0 * w)));
        let win = window(&win_text, "prior-window")?;
        if win.1 - win.0 > PI / w && !allow_wide {
            return Err(config_err(
                "prior-window",
                format!("width {} exceeds π/W = {}; set allow-wide-window to override", win.1 - win.0, PI / w),
            ));
        }
        let cfg = qcp_config(l, w, &PriorKind::Uniform { a: win.0, b: win.1 })?;
        echo.groups = Some(l);
        echo.width = Some(w);
        echo.prior_window = Some(win_text);
        (EstimatorSource::Qcp(cfg.clone()), cfg.probes(), w, win)
    } else {
        let channel: ChannelSpec = require(&o.channel, "channel")?.resolve()?;
        let ch = channel.build()?;
        if ch.param_count() != 1 {
            return Err(config_err("channel", "the bridge handles one parameter"));
        }
        let probes = at_least(o.probes.unwrap_or(1), 1, "N")?;
        let spec = spec.clone().resolve()?;
        let strategy = spec.build(&ch, probes, Some(seed))?;
        let probe = ch.parallel(probes)?;
        if strategy.dim() != probe.dim() {
            return Err(config_err("strategy", format!("dimension {} but the probes span {}", strategy.dim(), probe.dim())));
        }
        let win_text = require(&o.prior_window, "prior-window")?;
        let win = window(&win_text, "prior-window")?;
        let w = ch.spectrum_width()?;
        let grid_prior = build_prior(&PriorKind::Uniform { a: win.0, b: win.1 }, "prior-window")?;
        let quad: Quadrature = build_quadrature(&grid_prior, res, scale(probes, &ch)?)?;
        echo.channel = Some(channel);
        echo.probes = Some(probes);
        echo.strategy = Some(spec);
        (EstimatorSource::likelihood(strategy, probe, &quad), probes, w, win)
    };
    echo.strategy = echo.strategy.or(Some(StrategySpec::Name("qcp".into())));
    echo.s = Some(s);
    echo.r = Some(r);
    echo.trials = Some(trials);
    echo.persist_samples = Some(persist);
    echo.allow_wide_window = Some(allow_wide);
    echo.epsilon = Some(epsilon);
    echo.alpha = Some(alpha);
    echo.resolution = Some(res);

    let prior = build_prior(&PriorKind::Uniform { a: win.0, b: win.1 }, "prior-window")?;
    let sim = SimOptions {
        s,
        r,
        seed,
        allow_wide_window: allow_wide,
    };
    let runs = simulate_trials(&source, &prior, trials, &sim)?;
    let pairs: Vec<(f64, f64)> = runs.iter().map(|x| (x.phi_true, x.average)).collect();
    let sigmas: Vec<f64> = runs.iter().map(|x| x.sigma).collect();
    let deltas: Vec<f64> = runs.iter().map(|x| x.delta).collect();
    let h_noise = match o.bin_width {
        Some(h) => h,
        None => default_bin_width(&sigmas)
            .ok_or_else(|| CliError::Runtime("every trial has σ = 0; set bin-width".into()))?,
    };
    let h_marg = (win.1 - win.0) / (trials as f64).sqrt().ceil();
    let emp = empirical_mi_shift(&pairs, h_marg, h_noise)?;
    let noise: Vec<f64> = pairs.iter().map(|p| p.1 - p.0).collect();
    let top = sigmas.iter().cloned().fold(0.0f64, f64::max);
    let live: Vec<&qmetro::bridge::EstimatorRun> = runs.iter().filter(|x| x.sigma > 1e-9 * top).collect();
    let live_deltas: Vec<f64> = live.iter().map(|x| x.delta).collect();
    let z: Vec<f64> = live.iter().map(|x| (x.average - x.phi_true) / x.sigma).collect();
    let h_prior = (win.1 - win.0).ln();
    let bound = |mode| BoundArgs {
        s: s as f64,
        width,
        probes: probes as f64,
        alpha,
        prior_entropy: h_prior,
        mode,
    };
    let payload = BridgePayload {
        estimator: if is_qcp { "qcp-circular-mean" } else { "maximum-likelihood" }.into(),
        trials,
        s,
        r,
        probes,
        width,
        delta_mean_rad: deltas.iter().sum::<f64>() / trials as f64,
        sigma_mean_rad: sigmas.iter().sum::<f64>() / trials as f64,
        gaussian_conditional_entropy_nats: gaussian_conditional_entropy_sampled(r, &live_deltas).ok(),
        histogram_conditional_entropy_nats: histogram_entropy(&noise, h_noise)?,
        prior_entropy_nats: h_prior,
        empirical_mi_nats: emp.mi,
        empirical_mi_spread: emp.spread,
        bin_width_noise_rad: h_noise,
        bin_width_marginal_rad: h_marg,
        bound_repeated: bound_check(&emp, &bound(BoundMode::Repeated { r: r as f64 }))?.into(),
        bound_asymptotic: bound_check(&emp, &bound(BoundMode::Asymptotic { epsilon }))?.into(),
        degenerate_trials: trials - live.len(),
        ks_distance: ks_distance_normal(&z).ok(),
    };
    if ctx.format.csv() {
        let rows = runs
            .iter()
            .enumerate()
            .map(|(t, x)| row![t, x.phi_true, x.average, x.delta, x.sigma]);
        out.table("trials.csv", &["trial", "phi_true_rad", "phi_avg_rad", "delta_rad", "sigma_rad"], rows)?;
        if persist {
            let rows = runs.iter().enumerate().flat_map(|(t, x)| {
                x.estimates
                    .iter()
                    .enumerate()
                    .map(move |(j, e)| row![t, j, x.phi_true, e])
            });
            out.table("samples.csv", &["trial", "index", "phi_true_rad", "phi_est_rad"], rows)?;
        }
    }
    finish(name, echo, payload, ctx, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub groups: usize,
    pub probes: usize,
    pub ln_n: f64,
    /// MI in nats, or Δφ in radians
    pub value: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPayload {
    pub mode: ScalingMode,
    /// slope of MI vs ln N, or −slope of ln Δφ vs ln N
    pub alpha: f64,
    pub constant: f64,
    pub points: Vec<ScalingPoint>,
}

pub fn scaling(o: ScalingOpts, name: &str, ctx: &Ctx, out: &mut Writer) -> Result<(), CliError> {
    let range_text = o.l_range.clone().unwrap_or_else(|| "6:10".into());
    let (lo, hi) = parse_range(&range_text, "L-range")?;
    if lo < 1 || hi > MAX_GROUPS {
        return Err(config_err("L-range", format!("L must lie in 1..={MAX_GROUPS}")));
    }
    let mode = o.mode.unwrap_or(ScalingMode::Mi);
    let w = positive(o.width.unwrap_or(1.0), "W")?;
    let res = resolution(o.resolution)?;
    let mut echo = ScalingOpts {
        l_range: Some(range_text),
        mode: Some(mode),
        width: Some(w),
        resolution: Some(res),
        ..Default::default()
    };
    let mut values = Vec::new();
    match mode {
        ScalingMode::Mi => {
            let kind = match &o.prior {
                Some(p) => p.clone().resolve("prior")?,
                None => full_period(w),
            };
            for l in lo..=hi {
                let info = qcp_information(&qcp_config(l, w, &kind)?, res)?;
                values.push((l, info.probes, info.mi_nats));
            }
            echo.prior = Some(PriorSpec::Table(kind));
        }
        ScalingMode::Variance => {
            let s = at_least(o.s.unwrap_or(32), 1, "s")?;
            let r = at_least(o.r.unwrap_or(16), 2, "r")?;
            let trials = at_least(o.trials.unwrap_or(32), 1, "trials")?;
            let seed = require(&o.seed, "seed")?;
            let win_text = o
                .prior_window
                .clone()
                .unwrap_or_else(|| format!("0.2:{}", 0.2 + PI / (2.0 * w)));
            let win = window(&win_text, "prior-window")?;
            if win.1 - win.0 > PI / w {
                return Err(config_err("prior-window", format!("width exceeds π/W = {}", PI / w)));
            }
            let kind = PriorKind::Uniform { a: win.0, b: win.1 };
            let sim = SimOptions {
                s,
                r,
                seed,
                allow_wide_window: false,
            };
            for l in lo..=hi {
                let cfg = qcp_config(l, w, &kind)?;
                let runs = simulate_trials(&EstimatorSource::Qcp(cfg.clone()), &cfg.prior, trials, &sim)?;
                let ms = runs.iter().map(|x| x.delta * x.delta).sum::<f64>() / trials as f64;
                values.push((l, cfg.probes(), ms.sqrt()));
            }
            echo.s = Some(s);
            echo.r = Some(r);
            echo.trials = Some(trials);
            echo.prior_window = Some(win_text);
            echo.seed = Some(seed);
        }
    }
    let model = match mode {
        ScalingMode::Mi => ScalingModel::Information,
        ScalingMode::Variance => ScalingModel::Deviation,
    };
    let pts: Vec<(f64, f64)> = values.iter().map(|&(_, n, v)| (n as f64, v)).collect();
    let fit = fit_scaling(&pts, model).map_err(|e| config_err("L-range", e))?;
    let points: Vec<ScalingPoint> = values
        .iter()
        .zip(&fit.residuals)
        .map(|(&(l, n, v), &res)| ScalingPoint {
            groups: l,
            probes: n,
            ln_n: (n as f64).ln(),
            value: v,
            residual: res,
        })
        .collect();
    if ctx.format.csv() {
        let header: &[&str] = match mode {
            ScalingMode::Mi => &["N", "MI_nats", "lnN", "residual"],
            ScalingMode::Variance => &["N", "delta_rad", "lnN", "residual"],
        };
        let rows = points.iter().map(|p| row![p.probes, p.value, p.ln_n, p.residual]);
        out.table("scaling.csv", header, rows)?;
    }
    let payload = ScalingPayload {
        mode,
        alpha: fit.alpha,
        constant: fit.constant,
        points,
    };
    finish(name, echo, payload, ctx, out)
}
