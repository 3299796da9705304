//! Config files, flag merging and spec parsing.
//!
//! Every key of a config file has a flag of the same name; flags win.
//! The resolved config is echoed into the result envelope in the same
//! schema, with file references replaced by their contents.

use std::f64::consts::PI;
use std::path::Path;

use qmetro::channel::ParamChannel;
use qmetro::channel::ParamVec;
use qmetro::infomeasure::{InitialState, Prior, PriorKind, Strategy};
use qmetro::qcore::{COp, CVec, Povm, PureState, C64};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn config_err(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config {
        key: key.to_string(),
        message: msg.to_string(),
    }
}

/// Reads a TOML file into `T`, rejecting unknown keys.
pub fn load_toml<T: DeserializeOwned>(path: &Path, key: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(key, format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_err(key, format!("{}: {}", path.display(), e.message())))
}

/// Dense matrix as real and imaginary parts, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseMatrix {
    pub real: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imag: Option<Vec<Vec<f64>>>,
}

impl DenseMatrix {
    fn to_op(&self, key: &str) -> Result<COp, CliError> {
        let im = match &self.imag {
            Some(im) => im.clone(),
            None => self.real.iter().map(|r| vec![0.0; r.len()]).collect(),
        };
        COp::from_real_imag(&self.real, &im).map_err(|e| config_err(key, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseVector {
    pub real: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imag: Option<Vec<f64>>,
}

/// Channel given by name (preset or file path) or inline generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Name(String),
    Dense { generators: Vec<DenseMatrix> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelFile {
    generators: Vec<DenseMatrix>,
}

fn preset_arg(s: &str, name: &str) -> Option<String> {
    let rest = s.strip_prefix(name)?;
    if let Some(inner) = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        return Some(inner.to_string());
    }
    rest.strip_prefix(':').map(str::to_string)
}

impl ChannelSpec {
    /// Replaces a file reference by its generators.
    pub fn resolve(self) -> Result<ChannelSpec, CliError> {
        match self {
            ChannelSpec::Name(s) if !is_preset(&s) => {
                let f: ChannelFile = load_toml(Path::new(&s), "channel")?;
                Ok(ChannelSpec::Dense { generators: f.generators })
            }
            other => Ok(other),
        }
    }

    pub fn build(&self) -> Result<ParamChannel, CliError> {
        let key = "channel";
        match self {
            ChannelSpec::Name(s) => {
                if s == "qubit-phase" {
                    return Ok(ParamChannel::qubit_phase());
                }
                let dim = |arg: String| -> Result<usize, CliError> {
                    arg.trim()
                        .parse::<usize>()
                        .map_err(|_| config_err(key, format!("bad dimension in preset `{s}`")))
                };
                if let Some(d) = preset_arg(s, "equal-ladder") {
                    return ParamChannel::equal_ladder(dim(d)?).map_err(|e| config_err(key, e));
                }
                if let Some(d) = preset_arg(s, "identity") {
                    return ParamChannel::identity(dim(d)?).map_err(|e| config_err(key, e));
                }
                Err(config_err(key, format!("unknown channel `{s}`")))
            }
            ChannelSpec::Dense { generators } => {
                let ops = generators
                    .iter()
                    .map(|g| g.to_op(key))
                    .collect::<Result<Vec<_>, _>>()?;
                ParamChannel::new(ops).map_err(|e| config_err(key, e))
            }
        }
    }
}

fn is_preset(s: &str) -> bool {
    s == "qubit-phase" || preset_arg(s, "equal-ladder").is_some() || preset_arg(s, "identity").is_some()
}

/// Prior as compact text ("uniform:a:b", "discrete:φ1,φ2:w1,w2"), file path,
/// or inline table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    Text(String),
    Table(PriorKind),
}

fn floats(list: &str, key: &str) -> Result<Vec<f64>, CliError> {
    list.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| config_err(key, format!("`{t}` is not a number")))
        })
        .collect()
}

impl PriorSpec {
    /// Parses text forms into a table.
    pub fn resolve(self, key: &str) -> Result<PriorKind, CliError> {
        match self {
            PriorSpec::Table(k) => Ok(k),
            PriorSpec::Text(s) => {
                let parts: Vec<&str> = s.split(':').collect();
                match parts.as_slice() {
                    ["uniform", a, b] => {
                        let v = floats(&format!("{a},{b}"), key)?;
                        Ok(PriorKind::Uniform { a: v[0], b: v[1] })
                    }
                    ["discrete", pts, ms] => Ok(PriorKind::Discrete {
                        points: floats(pts, key)?.into_iter().map(|p| vec![p]).collect(),
                        masses: floats(ms, key)?,
                    }),
                    ["uniform", ..] | ["discrete", ..] => Err(config_err(key, format!("malformed prior `{s}`"))),
                    _ => {
                        #[derive(Deserialize)]
                        #[serde(deny_unknown_fields)]
                        struct PriorFile {
                            prior: PriorKind,
                        }
                        let f: PriorFile = load_toml(Path::new(&s), key)?;
                        Ok(f.prior)
                    }
                }
            }
        }
    }
}

pub fn build_prior(kind: &PriorKind, key: &str) -> Result<Prior, CliError> {
    let p = match kind.clone() {
        PriorKind::Uniform { a, b } => Prior::uniform(a, b),
        PriorKind::Tabulated { nodes, values } => Prior::tabulated(nodes, values),
        PriorKind::Discrete { points, masses } => {
            let pts = points
                .into_iter()
                .map(ParamVec::new)
                .collect::<qmetro::Result<Vec<_>>>()
                .map_err(|e| config_err(key, e))?;
            Prior::discrete(pts, masses)
        }
    };
    p.map_err(|e| config_err(key, e))
}

/// Strategy by name ("ghz:β", "random:M") or explicit state and POVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrategySpec {
    Name(String),
    Explicit { state: DenseVector, povm: Vec<DenseMatrix> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyFile {
    state: DenseVector,
    povm: Vec<DenseMatrix>,
}

impl StrategySpec {
    pub fn resolve(self) -> Result<StrategySpec, CliError> {
        match self {
            StrategySpec::Name(s) if !s.starts_with("ghz:") && !s.starts_with("random:") => {
                let f: StrategyFile = load_toml(Path::new(&s), "strategy")?;
                Ok(StrategySpec::Explicit {
                    state: f.state,
                    povm: f.povm,
                })
            }
            other => Ok(other),
        }
    }

    /// `seed` feeds the random form; `probes` and `ch` the GHZ form.
    pub fn build(&self, ch: &ParamChannel, probes: usize, seed: Option<u64>) -> Result<Strategy, CliError> {
        let key = "strategy";
        match self {
            StrategySpec::Name(s) => {
                if let Some(beta) = s.strip_prefix("ghz:") {
                    let beta = floats(beta, key)?[0];
                    return qmetro::qcp::group_strategy(ch, probes, beta).map_err(|e| config_err(key, e));
                }
                let m = s
                    .strip_prefix("random:")
                    .and_then(|m| m.parse::<usize>().ok())
                    .ok_or_else(|| config_err(key, format!("malformed strategy `{s}`")))?;
                let seed = seed.ok_or_else(|| config_err("seed", "a random strategy needs --seed"))?;
                let dim = qmetro::qcore::check_dim(ch.probe_dim(), probes).map_err(|e| config_err("N", e))?;
                let mut rng = qmetro::numeric::stream_rng(seed, 0);
                qmetro::extraction::StrategyParams::random(dim, m, &mut rng)
                    .and_then(|p| p.to_strategy())
                    .map_err(|e| config_err(key, e))
            }
            StrategySpec::Explicit { state, povm } => {
                let im = state.imag.clone().unwrap_or_else(|| vec![0.0; state.real.len()]);
                if im.len() != state.real.len() {
                    return Err(config_err(key, "state real and imag parts differ in length"));
                }
                let v = CVec::new(state.real.iter().zip(&im).map(|(r, i)| C64::new(*r, *i)).collect());
                let psi = PureState::new(v).map_err(|e| config_err(key, e))?;
                let elems = povm.iter().map(|m| m.to_op(key)).collect::<Result<Vec<_>, _>>()?;
                let povm = Povm::new(elems).map_err(|e| config_err(key, e))?;
                Strategy::new(InitialState::from(psi), povm).map_err(|e| config_err(key, e))
            }
        }
    }
}

/// Parses "a:b" (inclusive integer range), also accepting "a..b".
pub fn parse_range(s: &str, key: &str) -> Result<(usize, usize), CliError> {
    let (a, b) = s
        .split_once("..")
        .or_else(|| s.split_once(':'))
        .ok_or_else(|| config_err(key, format!("malformed range `{s}`, expected a:b")))?;
    let p = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| config_err(key, format!("`{t}` is not a non-negative integer")))
    };
    let (a, b) = (p(a)?, p(b)?);
    if a > b {
        return Err(config_err(key, format!("empty range {a}:{b}")));
    }
    Ok((a, b))
}

/// Default QCP prior: one full period of Wφ.
pub fn full_period(width: f64) -> PriorKind {
    PriorKind::Uniform { a: 0.0, b: 2.0 * PI / width }
}

pub fn require<T: Clone>(v: &Option<T>, key: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| config_err(key, "required but not set"))
}

pub fn positive(v: f64, key: &str) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(config_err(key, format!("must be a positive finite number, got {v}")))
    }
}

pub fn at_least(v: usize, min: usize, key: &str) -> Result<usize, CliError> {
    if v >= min {
        Ok(v)
    } else {
        Err(config_err(key, format!("must be ≥ {min}, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for (s, d) in [("qubit-phase", 2), ("equal-ladder(3)", 3), ("equal-ladder:4", 4), ("identity:2", 2)] {
            assert_eq!(ChannelSpec::Name(s.into()).build().unwrap().probe_dim(), d);
        }
        assert!(ChannelSpec::Name("equal-ladder(x)".into()).build().is_err());
    }

    #[test]
    fn priors_parse() {
        let k = PriorSpec::Text("uniform:0:1.5".into()).resolve("prior").unwrap();
        assert_eq!(k, PriorKind::Uniform { a: 0.0, b: 1.5 });
        let k = PriorSpec::Text("discrete:0,3.14:0.5,0.5".into()).resolve("prior").unwrap();
        assert!(build_prior(&k, "prior").unwrap().is_discrete());
        let bad = PriorSpec::Text("uniform:2:1".into()).resolve("prior").unwrap();
        match build_prior(&bad, "prior") {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "prior"),
            other => panic!("{other:?}"),
        }
        assert!(PriorSpec::Text("uniform:1".into()).resolve("prior").is_err());
    }

    #[test]
    fn ranges_parse() {
        assert_eq!(parse_range("6:10", "L-range").unwrap(), (6, 10));
        assert_eq!(parse_range("6..10", "L-range").unwrap(), (6, 10));
        assert!(parse_range("10:6", "L-range").is_err());
    }
}
