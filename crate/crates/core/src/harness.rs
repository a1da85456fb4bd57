//! Runs a configured experiment over its `(n, θ)` grid and writes CSV
//! results, a JSON summary and a run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, PerCommunity};
use crate::dynamics::{simulate, DynamicsError};
use crate::exec::{with_threads, Exec};
use crate::graph::{normalize_weights, sample_graph, sample_labels, GraphError};
use crate::gwtree::{estimate_a, non_tree_fraction, TreeError, TreeParams};
use crate::meanfield::{build_breve_m, MeanFieldModel, ModelReport, WeightMoments};
use crate::metrics::{
    chaos_experiment, concentration_check, error_experiment, stationarity_experiment, ChaosSettings, ErrorCurve,
    ErrorSettings, MetricsError, Point, StationaritySettings,
};
use crate::rng::{derive_seed, Purpose};
use crate::stats::fit_log_log;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub package: &'static str,
    pub version: &'static str,
    pub kind: String,
    pub seed: u64,
    pub threads: usize,
    pub parallel: bool,
    /// SHA-256 of the canonical JSON form of the config.
    pub config_hash: String,
    pub wall_time_secs: f64,
    pub timestamp_unix: u64,
    pub outputs: Vec<String>,
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.into(), source })?;
        Ok(Output { dir: dir.into(), files: vec![] })
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        let err = |source| HarnessError::Csv { path: path.clone(), source };
        let mut w = csv::Writer::from_path(&path).map_err(err)?;
        for r in rows {
            w.serialize(r).map_err(err)?;
        }
        w.flush().map_err(|source| HarnessError::Io { path: path.clone(), source })?;
        self.files.push(name.into());
        Ok(())
    }

    fn records(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        let err = |source| HarnessError::Csv { path: path.clone(), source };
        let mut w = csv::Writer::from_path(&path).map_err(err)?;
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|source| HarnessError::Io { path: path.clone(), source })?;
        self.files.push(name.into());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
        fs::write(&path, text).map_err(|source| HarnessError::Io { path, source })?;
        self.files.push(name.into());
        Ok(())
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        fs::write(&path, data).map_err(|source| HarnessError::Io { path, source })?;
        self.files.push(name.into());
        Ok(())
    }
}

fn points(cfg: &ExperimentConfig) -> Vec<Point> {
    cfg.n_grid.iter().map(|&n| Point { n, theta: cfg.theta_rule.theta(n) }).collect()
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String, ConfigError> {
    let digest = Sha256::digest(cfg.to_json()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs `cfg` on a pool of `cfg.threads` workers and writes into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest, HarnessError> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations).into());
    }
    let start = Instant::now();
    let mut out = Output::new(out_dir)?;
    with_threads(cfg.threads, || dispatch(cfg, &mut out))?;
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind: cfg.kind.to_string(),
        seed: cfg.seed,
        threads: cfg.threads,
        parallel: Exec::Parallel.is_parallel(),
        config_hash: config_hash(cfg)?,
        wall_time_secs: start.elapsed().as_secs_f64(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        outputs: out.files.clone(),
    };
    out.json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn dispatch(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), HarnessError> {
    let exec = Exec::Parallel;
    match cfg.kind {
        ExperimentKind::Simulate => run_simulate(cfg, out, exec),
        ExperimentKind::Meanfield => run_meanfield(cfg, out),
        ExperimentKind::Error => run_error(cfg, out, exec),
        ExperimentKind::Chaos => run_chaos(cfg, out, exec),
        ExperimentKind::Stationary => run_stationary(cfg, out, exec),
        ExperimentKind::Concentration => run_concentration(cfg, out, exec),
        ExperimentKind::Tree => run_tree(cfg, out, exec),
    }
}

fn run_simulate(cfg: &ExperimentConfig, out: &mut Output, exec: Exec) -> Result<(), HarnessError> {
    let spec = &cfg.model;
    let k_max = cfg.k_max();
    let sim_cfg = cfg.simulate.clone().unwrap_or(crate::config::SimulateConfig { vertices: vec![], dump_graph: false });
    let mut csv_buf = Vec::new();
    for (j, p) in points(cfg).into_iter().enumerate() {
        let labels = Arc::new(sample_labels(spec, p.n, derive_seed(cfg.seed, Purpose::Outer, &[p.n as u64, 0]))?);
        let selection: Vec<usize> = if sim_cfg.vertices.is_empty() {
            (0..p.n.min(10)).collect()
        } else {
            sim_cfg.vertices.clone()
        };
        for rep in 0..cfg.inner {
            let seed = derive_seed(cfg.seed, Purpose::Replication, &[p.n as u64, 0, rep as u64]);
            let graph = sample_graph(spec, labels.clone(), p.theta, seed, exec)?;
            let cm = normalize_weights(&graph);
            let sim = simulate(spec, &graph, &cm, k_max, seed, &selection, false, exec)?;
            let mut part = Vec::new();
            sim.record
                .write_csv(&mut part, j * cfg.inner + rep, j == 0 && rep == 0)
                .map_err(|source| HarnessError::Csv { path: out.dir.join("trajectory.csv"), source })?;
            csv_buf.extend(part);
            if sim_cfg.dump_graph {
                let mut dump = Vec::new();
                graph.write_dump(&mut dump).map_err(|source| HarnessError::Io { path: out.dir.clone(), source })?;
                out.bytes(&format!("graph_n{}_rep{rep}.txt", p.n), &dump)?;
            }
        }
    }
    out.bytes("trajectory.csv", &csv_buf)
}

fn run_meanfield(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), HarnessError> {
    let spec = &cfg.model;
    let mut reports: Vec<ModelReport> = vec![];
    for p in points(cfg) {
        let labels = sample_labels(spec, p.n, derive_seed(cfg.seed, Purpose::Outer, &[p.n as u64, 0]))?;
        reports.push(MeanFieldModel::new(spec, &labels, p.theta, WeightMoments::analytic(spec)).report());
    }
    out.json("meanfield.json", &reports)
}

#[derive(Serialize)]
struct ErrorOuterRow {
    n: usize,
    theta: f64,
    outer: usize,
    k: usize,
    inf: f64,
    inf_stderr: f64,
    l1: f64,
    l1_stderr: f64,
    l1_vertex_max: f64,
    reps: usize,
    e_n: f64,
    dense_ok: bool,
    limsup_ok: bool,
}

#[derive(Serialize)]
struct ErrorSummaryJson {
    k_max: usize,
    /// Fit of `log sup_k error` against `log √(log n / θ)`.
    inf_slope: Option<f64>,
    inf_intercept: Option<f64>,
    l1_slope: Option<f64>,
    inf_decreasing: bool,
    l1_decreasing: bool,
}

fn decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Slope fits and monotonicity of the sup-over-`k` errors across the grid.
pub fn error_summary(curve: &ErrorCurve) -> (Option<f64>, Option<f64>, Option<f64>, bool, bool) {
    let x: Vec<f64> = curve.summaries.iter().map(|s| ((s.n as f64).ln() / s.theta).sqrt()).collect();
    let inf: Vec<f64> = curve.summaries.iter().map(|s| s.sup_inf.mean).collect();
    let l1: Vec<f64> = curve.summaries.iter().map(|s| s.sup_l1.mean).collect();
    let fi = fit_log_log(&x, &inf);
    let fl = fit_log_log(&x, &l1);
    (fi.map(|f| f.slope), fi.map(|f| f.intercept), fl.map(|f| f.slope), decreasing(&inf), decreasing(&l1))
}

fn run_error(cfg: &ExperimentConfig, out: &mut Output, exec: Exec) -> Result<(), HarnessError> {
    let k_max = cfg.k_max();
    let settings = ErrorSettings {
        k_max,
        inner: cfg.inner,
        outer: cfg.outer,
        seed: cfg.seed,
        estimate_weights: cfg.estimate_weights,
    };
    let curve = error_experiment(&cfg.model, &points(cfg), &settings, exec)?;
    out.csv("error_curve.csv", &curve.rows())?;
    let outer: Vec<ErrorOuterRow> = curve
        .points
        .iter()
        .map(|p| ErrorOuterRow {
            n: p.n,
            theta: p.theta,
            outer: p.outer,
            k: p.k,
            inf: p.inf.mean,
            inf_stderr: p.inf.stderr,
            l1: p.l1.mean,
            l1_stderr: p.l1.stderr,
            l1_vertex_max: p.l1_vertex_max,
            reps: p.inf.reps,
            e_n: p.e_n,
            dense_ok: p.dense_ok,
            limsup_ok: p.limsup_ok,
        })
        .collect();
    out.csv("error_outer.csv", &outer)?;
    let (inf_slope, inf_intercept, l1_slope, inf_decreasing, l1_decreasing) = error_summary(&curve);
    out.json(
        "summary.json",
        &ErrorSummaryJson { k_max, inf_slope, inf_intercept, l1_slope, inf_decreasing, l1_decreasing },
    )
}

fn run_chaos(cfg: &ExperimentConfig, out: &mut Output, exec: Exec) -> Result<(), HarnessError> {
    let c = cfg.chaos.as_ref().expect("validated");
    let settings = ChaosSettings {
        k: c.k,
        communities: c.communities.clone(),
        functions: cfg.test_functions()?,
        inner: cfg.inner,
        outer: cfg.outer,
        tuples: c.tuples,
        limit_reps: c.limit_reps,
        seed: cfg.seed,
    };
    let header = [
        "n", "theta", "k", "statement", "function", "communities", "estimate", "estimate_stderr", "limit",
        "limit_stderr", "gap", "gap_stderr", "coupled_gap", "coupled_gap_stderr",
    ];
    let mut rows = vec![];
    for p in points(cfg) {
        let rep = chaos_experiment(&cfg.model, p, &settings, exec)?;
        for f in &rep.factorization {
            rows.push(vec![
                f.n.to_string(),
                f.theta.to_string(),
                f.k.to_string(),
                "product".into(),
                f.function.clone(),
                f.communities.clone(),
                f.joint.mean.to_string(),
                f.joint.stderr.to_string(),
                f.limit_product.to_string(),
                f.limit_product_se.to_string(),
                f.naive_gap.to_string(),
                f.naive_gap_se.to_string(),
                f.coupled_gap.mean.to_string(),
                f.coupled_gap.stderr.to_string(),
            ]);
        }
        for e in &rep.empirical {
            rows.push(vec![
                e.n.to_string(),
                e.theta.to_string(),
                e.k.to_string(),
                "empirical".into(),
                e.function.clone(),
                e.community.to_string(),
                e.empirical.mean.to_string(),
                e.empirical.stderr.to_string(),
                e.limit.mean.to_string(),
                e.limit.stderr.to_string(),
                e.gap.to_string(),
                e.gap_se.to_string(),
                String::new(),
                String::new(),
            ]);
        }
    }
    out.records("chaos.csv", &header, &rows)
}

fn run_stationary(cfg: &ExperimentConfig, out: &mut Output, exec: Exec) -> Result<(), HarnessError> {
    let settings = StationaritySettings {
        tol: cfg.tol,
        inner: cfg.inner,
        outer: cfg.outer,
        draws: cfg.stationary.as_ref().map_or(2000, |s| s.draws),
        seed: cfg.seed,
    };
    let mut rows = vec![];
    for p in points(cfg) {
        rows.extend(stationarity_experiment(&cfg.model, p, &settings, exec)?);
    }
    out.csv("stationarity.csv", &rows)
}

fn run_concentration(cfg: &ExperimentConfig, out: &mut Output, exec: Exec) -> Result<(), HarnessError> {
    let c = cfg.concentration.as_ref().expect("validated");
    let rows = concentration_check(&c.case, c.replications, cfg.seed, exec)?;
    out.csv("concentration.csv", &rows)
}

#[derive(Serialize)]
struct TreeScalingRow {
    n: usize,
    theta: f64,
    root: usize,
    s: usize,
    estimate: f64,
    stderr: f64,
    reps: usize,
}

#[derive(Serialize)]
struct TreeDiagnosticRow {
    n: usize,
    theta: f64,
    depth: usize,
    vertex_count_checked: usize,
    non_tree_fraction: f64,
}

fn run_tree(cfg: &ExperimentConfig, out: &mut Output, exec: Exec) -> Result<(), HarnessError> {
    let t = cfg.tree.as_ref().expect("validated");
    let spec = &cfg.model;
    let laws = match &t.marks {
        PerCommunity::Each(m) => m.clone(),
        PerCommunity::Same(m) => vec![m.clone(); spec.k],
    };
    let moments = WeightMoments::analytic(spec);
    let mut scaling = vec![];
    let mut diag = vec![];
    for p in points(cfg) {
        let labels = Arc::new(sample_labels(spec, p.n, derive_seed(cfg.seed, Purpose::Outer, &[p.n as u64, 0]))?);
        let pi_hat = labels.shares();
        let params = TreeParams::new(spec, &pi_hat, p.theta);
        let m_breve = build_breve_m(&pi_hat, &spec.kappa, &moments.beta);
        for root in 0..spec.k {
            let seed = derive_seed(cfg.seed, Purpose::Tree, &[p.n as u64]);
            let est = estimate_a(&params, root, t.depth, &laws, &m_breve, t.replications, seed, t.budget, exec)?;
            for (s, e) in est.iter().enumerate() {
                scaling.push(TreeScalingRow {
                    n: p.n,
                    theta: p.theta,
                    root,
                    s: s + 1,
                    estimate: e.mean,
                    stderr: e.stderr,
                    reps: e.reps,
                });
            }
        }
        if t.diagnostic_graphs > 0 {
            let fractions = exec.try_map(t.diagnostic_graphs, |g| -> Result<f64, HarnessError> {
                let seed = derive_seed(cfg.seed, Purpose::Diagnostic, &[p.n as u64, g as u64]);
                let graph = sample_graph(spec, labels.clone(), p.theta, seed, Exec::Sequential)?;
                Ok(non_tree_fraction(&graph, t.diagnostic_depth, Exec::Sequential))
            })?;
            diag.push(TreeDiagnosticRow {
                n: p.n,
                theta: p.theta,
                depth: t.diagnostic_depth,
                vertex_count_checked: p.n * t.diagnostic_graphs,
                non_tree_fraction: fractions.iter().sum::<f64>() / fractions.len() as f64,
            });
        }
    }
    out.csv("tree_scaling.csv", &scaling)?;
    if !diag.is_empty() {
        out.csv("tree_diagnostic.csv", &diag)?;
    }
    Ok(())
}
