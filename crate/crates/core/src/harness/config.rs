use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::adequa::ExplorationSchedule;
use crate::baselines::{CounterexampleConfig, Exp3Config};
use crate::mapping::PhiConfig;
use crate::model::SystemParams;

pub const DEFAULT_RECORD_STRIDE: u64 = 100;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: cannot read: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: malformed document: {message}")]
    Malformed { origin: String, message: String },
    #[error("{origin}: {path} = {value} is outside [0, 1]")]
    RateOutOfRange { origin: String, path: String, value: f64 },
    #[error("{origin}: {path}: unknown preset {name:?}")]
    UnknownPreset { origin: String, path: String, name: String },
    #[error("{origin}: {path}: inconsistent lengths: {detail}")]
    InconsistentLengths { origin: String, path: String, detail: String },
    #[error("{origin}: {path}: unknown policy {name:?}")]
    UnknownPolicy { origin: String, path: String, name: String },
    #[error("{origin}: {path}: {detail}")]
    InvalidValue { origin: String, path: String, detail: String },
}

/// Named instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    /// `N = K = 4`, `lambda_i = 5/16`, `mu = (1, 3/16, 3/16, 3/16)`.
    HardFig2,
    /// `lambda_i = 0.55 - 0.1 i`, `mu_i = 2.1 lambda_i`.
    EasyFig3,
    Counterexample(CounterexampleConfig),
    /// `2n` queues and servers, `lambda_i = 1/(2n)`, `mu_k = 1/n - 1/(4n^2)`.
    Prop1 { n: usize },
}

impl Preset {
    pub fn parse(name: &str) -> Option<Self> {
        let name = name.trim();
        match name {
            "hard-fig2" => return Some(Self::HardFig2),
            "easy-fig3" => return Some(Self::EasyFig3),
            _ => {}
        }
        let (head, args) = split_call(name)?;
        match head {
            "counterexample" => {
                let [n, d, alpha] = args.as_slice() else { return None };
                let cfg = CounterexampleConfig::new(n.parse().ok()?, d.parse().ok()?, alpha.parse().ok()?).ok()?;
                Some(Self::Counterexample(cfg))
            }
            "prop1" => {
                let [n] = args.as_slice() else { return None };
                let n: usize = n.parse().ok()?;
                (n >= 1).then_some(Self::Prop1 { n })
            }
            _ => None,
        }
    }

    pub fn params(&self) -> SystemParams {
        match *self {
            Self::HardFig2 => {
                let n = 4.0;
                SystemParams::new(vec![(n + 1.0) / (n * n); 4], vec![1.0, 3.0 / 16.0, 3.0 / 16.0, 3.0 / 16.0])
            }
            Self::EasyFig3 => {
                let lambda: Vec<f64> = (1..=4).map(|i| 0.55 - 0.1 * i as f64).collect();
                let mu = lambda.iter().map(|l| 2.1 * l).collect();
                SystemParams::new(lambda, mu)
            }
            Self::Counterexample(cfg) => return cfg.params(),
            Self::Prop1 { n } => {
                let nf = n as f64;
                SystemParams::new(vec![1.0 / (2.0 * nf); 2 * n], vec![1.0 / nf - 1.0 / (4.0 * nf * nf); 2 * n])
            }
        }
        .expect("preset rates lie in [0, 1]")
    }
}

/// `name(a, b, c)` into `("name", ["a", "b", "c"])`.
fn split_call(s: &str) -> Option<(&str, Vec<&str>)> {
    let open = s.find('(')?;
    let inner = s[open + 1..].strip_suffix(')')?;
    let args = if inner.trim().is_empty() { Vec::new() } else { inner.split(',').map(str::trim).collect() };
    Some((s[..open].trim(), args))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Adequa,
    Exp3,
    Centralized,
    Counterexample,
    Fixed(Vec<f64>),
}

impl PolicySpec {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "adequa" => Some(Self::Adequa),
            "exp3" => Some(Self::Exp3),
            "centralized" => Some(Self::Centralized),
            "counterexample" => Some(Self::Counterexample),
            other => {
                let (head, args) = split_call(other)?;
                if head != "fixed" {
                    return None;
                }
                args.iter().map(|a| a.parse().ok()).collect::<Option<Vec<f64>>>().map(Self::Fixed)
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Adequa => "adequa",
            Self::Exp3 => "exp3",
            Self::Centralized => "centralized",
            Self::Counterexample => "counterexample",
            Self::Fixed(_) => "fixed",
        }
    }

    /// Policies that coordinate all queues at once.
    pub fn is_joint(&self) -> bool {
        matches!(self, Self::Centralized | Self::Counterexample)
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub params: SystemParams,
    pub preset: Option<Preset>,
    /// One entry per queue.
    pub policies: Vec<PolicySpec>,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub schedule: ExplorationSchedule,
    pub phi: PhiConfig,
    pub exp3: Exp3Config,
    pub record_stride: u64,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config on `params` with every queue following `policy`.
    pub fn new(params: SystemParams, policy: PolicySpec, horizon: u64, seeds: Vec<u64>) -> Self {
        let schedule = ExplorationSchedule::practical(params.n_queues(), params.n_servers());
        Self {
            policies: vec![policy; params.n_queues()],
            params,
            preset: None,
            horizon,
            seeds,
            schedule,
            phi: PhiConfig::default(),
            exp3: Exp3Config::default(),
            record_stride: DEFAULT_RECORD_STRIDE,
            output: None,
        }
    }

    pub fn from_preset(preset: Preset, policy: PolicySpec, horizon: u64, seeds: Vec<u64>) -> Self {
        Self { preset: Some(preset), ..Self::new(preset.params(), policy, horizon, seeds) }
    }

    pub fn counterexample(&self) -> Option<CounterexampleConfig> {
        match self.preset {
            Some(Preset::Counterexample(cfg)) => Some(cfg),
            _ => None,
        }
    }

    /// Parses a JSON document; `origin` names it in errors.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_json::from_str(text)
            .map_err(|e| ConfigError::Malformed { origin: origin.to_string(), message: e.to_string() })?;
        raw.resolve(origin)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    ExperimentConfig::from_json(&text, &path.display().to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    preset: Option<String>,
    lambda: Option<Vec<f64>>,
    mu: Option<Vec<f64>>,
}

fn default_stride() -> u64 {
    DEFAULT_RECORD_STRIDE
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    instance: RawInstance,
    policies: Vec<String>,
    horizon: u64,
    seeds: Vec<u64>,
    schedule: Option<ExplorationSchedule>,
    #[serde(default)]
    phi: PhiConfig,
    #[serde(default)]
    exp3: Exp3Config,
    #[serde(default = "default_stride")]
    record_stride: u64,
    output: Option<PathBuf>,
}

impl RawConfig {
    fn resolve(self, origin: &str) -> Result<ExperimentConfig, ConfigError> {
        let o = || origin.to_string();
        let invalid = |path: &str, detail: String| ConfigError::InvalidValue { origin: o(), path: path.into(), detail };

        let (params, preset) = match (self.instance.preset, self.instance.lambda, self.instance.mu) {
            (Some(name), None, None) => {
                let preset = Preset::parse(&name).ok_or_else(|| ConfigError::UnknownPreset {
                    origin: o(),
                    path: "instance.preset".into(),
                    name: name.clone(),
                })?;
                (preset.params(), Some(preset))
            }
            (None, Some(lambda), Some(mu)) => {
                for (what, values) in [("lambda", &lambda), ("mu", &mu)] {
                    if let Some((i, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                        return Err(ConfigError::RateOutOfRange { origin: o(), path: format!("instance.{what}[{i}]"), value });
                    }
                }
                if lambda.is_empty() {
                    return Err(ConfigError::InconsistentLengths {
                        origin: o(),
                        path: "instance.lambda".into(),
                        detail: "no queues".into(),
                    });
                }
                let params = SystemParams::new(lambda, mu).map_err(|e| invalid("instance", e.to_string()))?;
                (params, None)
            }
            _ => {
                return Err(invalid("instance", "give either `preset` or both `lambda` and `mu`".into()));
            }
        };
        let n = params.n_queues();
        let k = params.n_servers();

        let mut policies = Vec::with_capacity(self.policies.len());
        for (i, name) in self.policies.iter().enumerate() {
            let spec = PolicySpec::parse(name).ok_or_else(|| ConfigError::UnknownPolicy {
                origin: o(),
                path: format!("policies[{i}]"),
                name: name.clone(),
            })?;
            if let PolicySpec::Fixed(p) = &spec {
                if p.len() != k {
                    return Err(ConfigError::InconsistentLengths {
                        origin: o(),
                        path: format!("policies[{i}]"),
                        detail: format!("fixed distribution has {} entries for {k} servers", p.len()),
                    });
                }
                if p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(invalid(&format!("policies[{i}]"), "fixed distribution must be non-negative and sum to 1".into()));
                }
            }
            policies.push(spec);
        }
        let policies = match policies.len() {
            1 => vec![policies[0].clone(); n],
            len if len == n => policies,
            len => {
                return Err(ConfigError::InconsistentLengths {
                    origin: o(),
                    path: "policies".into(),
                    detail: format!("{len} policies for {n} queues"),
                })
            }
        };
        if policies.iter().any(PolicySpec::is_joint) && policies.iter().any(|p| *p != policies[0]) {
            return Err(invalid("policies", "joint policies (centralized, counterexample) cannot be mixed".into()));
        }
        if policies[0] == PolicySpec::Counterexample && !matches!(preset, Some(Preset::Counterexample(_))) {
            return Err(invalid("policies", "the counterexample policy needs a counterexample(N,d,alpha) preset".into()));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required".into()));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride", "must be positive".into()));
        }
        let schedule = self.schedule.unwrap_or_else(|| ExplorationSchedule::practical(n, k));
        if !(schedule.x > 0.0) || !(0.0..1.0).contains(&schedule.alpha) {
            return Err(invalid("schedule", "need x > 0 and alpha in [0, 1)".into()));
        }
        if !(self.phi.target_gap > 0.0) || self.phi.max_outer_iters == 0 {
            return Err(invalid("phi", "need target_gap > 0 and max_outer_iters > 0".into()));
        }
        Ok(ExperimentConfig {
            params,
            preset,
            policies,
            horizon: self.horizon,
            seeds: self.seeds,
            schedule,
            phi: self.phi,
            exp3: self.exp3,
            record_stride: self.record_stride,
            output: self.output,
        })
    }
}
