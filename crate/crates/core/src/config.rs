//! Experiment configuration.
//!
//! TOML is the primary format; JSON is accepted when the text starts with
//! `{`. Model fields left out fall back to [`ModelSpec::simple`] defaults.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{ScalarDist, VecDist};
use crate::metrics::{ConcentrationCase, TestFn};
use crate::spec::{InitialLaw, LabelMode, ModelSpec, SignalLaw, Violation};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Meanfield,
    #[default]
    Error,
    Chaos,
    Stationary,
    Concentration,
    Tree,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Meanfield => "meanfield",
            ExperimentKind::Error => "error",
            ExperimentKind::Chaos => "chaos",
            ExperimentKind::Stationary => "stationary",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::Tree => "tree",
        };
        f.write_str(s)
    }
}

/// Edge-density schedule `n ↦ θ_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ThetaRule {
    /// `θ = x`.
    Const(f64),
    /// `θ = x log n`.
    Log(f64),
    /// `θ = x log log n`.
    LogLog(f64),
    /// `θ = n^a`.
    Pow(f64),
    /// `θ = x n`.
    Linear(f64),
}

impl ThetaRule {
    pub fn theta(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            ThetaRule::Const(x) => x,
            ThetaRule::Log(x) => x * nf.ln(),
            ThetaRule::LogLog(x) => x * nf.ln().ln(),
            ThetaRule::Pow(a) => nf.powf(a),
            ThetaRule::Linear(x) => x * nf,
        }
    }
}

impl FromStr for ThetaRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = s
            .split_once(':')
            .ok_or_else(|| format!("expected `rule:value`, got `{s}`"))?;
        let x: f64 = arg.trim().parse().map_err(|_| format!("bad number `{arg}` in theta rule"))?;
        if !x.is_finite() {
            return Err(format!("theta rule parameter must be finite, got {x}"));
        }
        match name.trim() {
            "const" => Ok(ThetaRule::Const(x)),
            "log" => Ok(ThetaRule::Log(x)),
            "loglog" => Ok(ThetaRule::LogLog(x)),
            "pow" => Ok(ThetaRule::Pow(x)),
            "linear" => Ok(ThetaRule::Linear(x)),
            other => Err(format!("unknown theta rule `{other}` (const, log, loglog, pow, linear)")),
        }
    }
}

impl TryFrom<String> for ThetaRule {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<ThetaRule> for String {
    fn from(r: ThetaRule) -> String {
        r.to_string()
    }
}

impl fmt::Display for ThetaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaRule::Const(x) => write!(f, "const:{x}"),
            ThetaRule::Log(x) => write!(f, "log:{x}"),
            ThetaRule::LogLog(x) => write!(f, "loglog:{x}"),
            ThetaRule::Pow(x) => write!(f, "pow:{x}"),
            ThetaRule::Linear(x) => write!(f, "linear:{x}"),
        }
    }
}

/// One law shared by every community, or one per community.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerCommunity<T> {
    Each(Vec<T>),
    Same(T),
}

impl<T: Clone> PerCommunity<T> {
    fn expand(self, k: usize) -> Vec<T> {
        match self {
            PerCommunity::Each(v) => v,
            PerCommunity::Same(x) => vec![x; k],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightTable {
    Table(Vec<Vec<ScalarDist>>),
    Same(ScalarDist),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RawInitial {
    Dist { per_community: PerCommunity<VecDist> },
    Beliefs,
}

/// Model section as written; everything but `pi` and `kappa` is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub pi: Vec<f64>,
    pub kappa: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beliefs: Option<PerCommunity<VecDist>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signals: Option<PerCommunity<SignalLaw>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<RawInitial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_mode: Option<LabelMode>,
}

impl RawModel {
    pub fn resolve(self) -> ModelSpec {
        let base = ModelSpec::simple(self.pi, self.kappa, self.ell.unwrap_or(1), self.c.unwrap_or(0.3), self.d.unwrap_or(0.2));
        let k = base.k;
        ModelSpec {
            h: self.h.unwrap_or(base.h),
            weights: match self.weights {
                Some(WeightTable::Table(t)) => t,
                Some(WeightTable::Same(w)) => vec![vec![w; k]; k],
                None => base.weights,
            },
            beliefs: self.beliefs.map_or(base.beliefs, |b| b.expand(k)),
            signals: self.signals.map_or(base.signals, |s| s.expand(k)),
            initial: match self.initial {
                Some(RawInitial::Dist { per_community }) => InitialLaw::Dist { per_community: per_community.expand(k) },
                Some(RawInitial::Beliefs) => InitialLaw::Beliefs,
                None => base.initial,
            },
            label_mode: self.label_mode.unwrap_or_default(),
            ..base
        }
    }

    /// Fully explicit form of a spec.
    pub fn from_spec(spec: &ModelSpec) -> Self {
        RawModel {
            pi: spec.pi.clone(),
            kappa: spec.kappa.clone(),
            ell: Some(spec.ell),
            c: Some(spec.c),
            d: Some(spec.d),
            h: Some(spec.h),
            weights: Some(WeightTable::Table(spec.weights.clone())),
            beliefs: Some(PerCommunity::Each(spec.beliefs.clone())),
            signals: Some(PerCommunity::Each(spec.signals.clone())),
            initial: Some(match &spec.initial {
                InitialLaw::Dist { per_community } => RawInitial::Dist { per_community: PerCommunity::Each(per_community.clone()) },
                InitialLaw::Beliefs => RawInitial::Beliefs,
            }),
            label_mode: Some(spec.label_mode),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosConfig {
    pub k: usize,
    /// Community of each vertex in a tuple.
    pub communities: Vec<usize>,
    /// Test function ids, see [`TestFn`].
    pub functions: Vec<String>,
    #[serde(default = "one")]
    pub tuples: usize,
    #[serde(default = "default_limit_reps")]
    pub limit_reps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    #[serde(default = "default_limit_reps")]
    pub draws: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub replications: usize,
    #[serde(flatten)]
    pub case: ConcentrationCase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    /// Largest generation `s` for the `a_s` estimates.
    pub depth: usize,
    pub replications: usize,
    /// Mark law per type.
    pub marks: PerCommunity<ScalarDist>,
    #[serde(default = "default_budget")]
    pub budget: f64,
    /// Graphs per `n` for the neighbourhood diagnostic (0 skips it).
    #[serde(default)]
    pub diagnostic_graphs: usize,
    #[serde(default = "two")]
    pub diagnostic_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Vertices whose trajectories are written.
    #[serde(default)]
    pub vertices: Vec<usize>,
    #[serde(default)]
    pub dump_graph: bool,
}

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn default_limit_reps() -> usize {
    2000
}
fn default_budget() -> f64 {
    crate::gwtree::DEFAULT_NODE_BUDGET
}
fn default_inner() -> usize {
    20
}
fn default_outer() -> usize {
    5
}
fn default_tol() -> f64 {
    1e-4
}
fn default_out() -> String {
    "out".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    kind: ExperimentKind,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    threads: usize,
    #[serde(default = "default_out")]
    out: String,
    #[serde(default)]
    n_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta_rule: Option<ThetaRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k_max: Option<usize>,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_inner")]
    inner: usize,
    #[serde(default = "default_outer")]
    outer: usize,
    #[serde(default)]
    estimate_weights: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chaos: Option<ChaosConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stationary: Option<StationaryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    concentration: Option<ConcentrationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tree: Option<TreeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    simulate: Option<SimulateConfig>,
    model: RawModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub out: String,
    pub model: ModelSpec,
    pub n_grid: Vec<usize>,
    pub theta_rule: ThetaRule,
    /// Horizon for trajectories and error curves; when absent, the smallest
    /// `k` with `(1−d)^k < 0.01`.
    pub k_max: Option<usize>,
    /// Burn-in and truncation tolerance for the stationary comparison.
    pub tol: f64,
    pub inner: usize,
    pub outer: usize,
    pub estimate_weights: bool,
    pub chaos: Option<ChaosConfig>,
    pub stationary: Option<StationaryConfig>,
    pub concentration: Option<ConcentrationConfig>,
    pub tree: Option<TreeConfig>,
    pub simulate: Option<SimulateConfig>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot serialize config: {0}")]
    Serialize(String),
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        let missing_rule = raw.theta_rule.is_none() && raw.kind != ExperimentKind::Concentration;
        let cfg = ExperimentConfig {
            kind: raw.kind,
            seed: raw.seed,
            threads: raw.threads,
            out: raw.out,
            model: raw.model.resolve(),
            n_grid: raw.n_grid,
            // only the concentration check runs without a grid
            theta_rule: raw.theta_rule.unwrap_or(ThetaRule::Const(1.0)),
            k_max: raw.k_max,
            tol: raw.tol,
            inner: raw.inner,
            outer: raw.outer,
            estimate_weights: raw.estimate_weights,
            chaos: raw.chaos,
            stationary: raw.stationary,
            concentration: raw.concentration,
            tree: raw.tree,
            simulate: raw.simulate,
        };
        let mut v = cfg.violations();
        if missing_rule {
            v.push(Violation { path: "theta_rule".into(), message: "required for this experiment kind".into() });
        }
        if v.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    fn raw(&self) -> RawConfig {
        RawConfig {
            kind: self.kind,
            seed: self.seed,
            threads: self.threads,
            out: self.out.clone(),
            n_grid: self.n_grid.clone(),
            theta_rule: Some(self.theta_rule),
            k_max: self.k_max,
            tol: self.tol,
            inner: self.inner,
            outer: self.outer,
            estimate_weights: self.estimate_weights,
            chaos: self.chaos.clone(),
            stationary: self.stationary.clone(),
            concentration: self.concentration.clone(),
            tree: self.tree.clone(),
            simulate: self.simulate.clone(),
            model: RawModel::from_spec(&self.model),
        }
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(&self.raw()).map_err(|e| ConfigError::Serialize(e.to_string()))
    }

    /// Canonical JSON form, used for hashing.
    pub fn to_json(&self) -> Result<String, ConfigError> {
        serde_json::to_string(&self.raw()).map_err(|e| ConfigError::Serialize(e.to_string()))
    }

    pub fn k_max(&self) -> usize {
        self.k_max.unwrap_or_else(|| crate::metrics::contraction_horizon(self.model.d, 0.01))
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.n_grid.iter().map(|&n| self.theta_rule.theta(n)).collect()
    }

    pub fn test_functions(&self) -> Result<Vec<TestFn>, crate::metrics::MetricsError> {
        self.chaos.as_ref().map_or(Ok(vec![]), |c| c.functions.iter().map(|f| f.parse()).collect())
    }

    /// Every violation, model ones prefixed with `model.`.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out: Vec<Violation> = self
            .model
            .violations()
            .into_iter()
            .map(|v| Violation { path: format!("model.{}", v.path), message: v.message })
            .collect();
        let mut push = |path: &str, message: String| out.push(Violation { path: path.into(), message });
        let k = self.model.k;
        let needs_grid = !matches!(self.kind, ExperimentKind::Concentration);
        if needs_grid && self.n_grid.is_empty() {
            push("n_grid", "must list at least one n".into());
        }
        for (j, &n) in self.n_grid.iter().enumerate() {
            if n == 0 {
                push(&format!("n_grid[{j}]"), "n must be positive".into());
                continue;
            }
            let theta = self.theta_rule.theta(n);
            if !(theta > 0.0) || !theta.is_finite() {
                push("theta_rule", format!("{} gives theta = {theta} at n = {n}", self.theta_rule));
            }
        }
        if self.inner == 0 {
            push("inner", "replication count must be positive".into());
        }
        if self.outer == 0 {
            push("outer", "outer label draws must be positive".into());
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            push("tol", format!("must lie in (0, 1), got {}", self.tol));
        }
        match self.kind {
            ExperimentKind::Chaos => match &self.chaos {
                None => push("chaos", "section required for chaos experiments".into()),
                Some(c) => {
                    if c.communities.is_empty() {
                        push("chaos.communities", "must name at least one community".into());
                    }
                    if let Some(r) = c.communities.iter().find(|&&r| r >= k) {
                        push("chaos.communities", format!("community {r} out of range for K = {k}"));
                    }
                    if c.functions.is_empty() {
                        push("chaos.functions", "must list at least one function".into());
                    }
                    for (j, f) in c.functions.iter().enumerate() {
                        match f.parse::<TestFn>() {
                            Err(e) => push(&format!("chaos.functions[{j}]"), e.to_string()),
                            Ok(t) => {
                                if t.max_time() > c.k {
                                    push(&format!("chaos.functions[{j}]"), format!("reads time {} beyond k = {}", t.max_time(), c.k));
                                }
                                if t.max_topic() >= self.model.ell {
                                    push(&format!("chaos.functions[{j}]"), format!("reads topic {} but ell = {}", t.max_topic(), self.model.ell));
                                }
                            }
                        }
                    }
                    if c.tuples == 0 {
                        push("chaos.tuples", "must be positive".into());
                    }
                    if c.limit_reps == 0 {
                        push("chaos.limit_reps", "must be positive".into());
                    }
                }
            },
            ExperimentKind::Concentration => match &self.concentration {
                None => push("concentration", "section required for concentration experiments".into()),
                Some(c) => {
                    if let Err(e) = c.case.validate() {
                        push("concentration", e);
                    }
                    if c.replications == 0 {
                        push("concentration.replications", "must be positive".into());
                    }
                }
            },
            ExperimentKind::Tree => match &self.tree {
                None => push("tree", "section required for tree experiments".into()),
                Some(t) => {
                    if t.replications == 0 {
                        push("tree.replications", "must be positive".into());
                    }
                    if t.depth == 0 {
                        push("tree.depth", "must be at least 1".into());
                    }
                    if let PerCommunity::Each(m) = &t.marks {
                        if m.len() != k {
                            push("tree.marks", format!("expected {k} laws, got {}", m.len()));
                        }
                    }
                    if !(t.budget > 0.0) {
                        push("tree.budget", "must be positive".into());
                    }
                }
            },
            ExperimentKind::Stationary => {
                if self.stationary.as_ref().is_some_and(|s| s.draws == 0) {
                    push("stationary.draws", "must be positive".into());
                }
            }
            ExperimentKind::Simulate => {
                if let Some(s) = &self.simulate {
                    for &v in &s.vertices {
                        if let Some(&n) = self.n_grid.iter().find(|&&n| v >= n) {
                            push("simulate.vertices", format!("vertex {v} out of range for n = {n}"));
                        }
                    }
                }
            }
            _ => {}
        }
        out
    }
}
