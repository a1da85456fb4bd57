//! Error norms, propagation-of-chaos statistics, limit-exchange gaps and
//! Monte Carlo checks of the concentration bounds.

use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::dist::ScalarDist;
use crate::dynamics::{sample_initial, sample_signal_frame, step, DynamicsError, OpinionState};
use crate::exec::Exec;
use crate::graph::{normalize_weights, sample_graph, sample_labels, GraphError, Labels};
use crate::linalg::Mat;
use crate::meanfield::{
    Flavor, MeanFieldError, MeanFieldModel, MeanFieldTracker, PathSampler, StationarySampler, WeightMoments,
};
use crate::rng::{derive_seed, stream, Purpose};
use crate::spec::ModelSpec;
use crate::stats::Estimate;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    Shape(usize, usize, usize, usize),
    #[error("replication budget must be positive")]
    NoReplications,
    #[error("unknown test function `{0}`")]
    UnknownFunction(String),
    #[error("community {community} has too few members ({have}) for the requested vertex tuples")]
    TooFewMembers { community: usize, have: usize },
    #[error("invalid concentration case: {0}")]
    BadCase(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
}

/// `max_i Σ_t |a_it − b_it|`, the ∞-operator norm of `a − b`.
pub fn matrix_inf_distance(a: &Mat, b: &Mat) -> Result<f64, MetricsError> {
    Ok(row_l1_distances(a, b)?.into_iter().fold(0.0, f64::max))
}

pub fn row_l1_distances(a: &Mat, b: &Mat) -> Result<Vec<f64>, MetricsError> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(MetricsError::Shape(a.rows, a.cols, b.rows, b.cols));
    }
    Ok((0..a.rows)
        .map(|i| a.row(i).iter().zip(b.row(i)).map(|(x, y)| (x - y).abs()).sum())
        .collect())
}

/// Smallest `k` with `(1−d)^k < frac`.
pub fn contraction_horizon(d: f64, frac: f64) -> usize {
    let mut k = 0;
    let mut x = 1.0;
    while x >= frac {
        x *= 1.0 - d;
        k += 1;
    }
    k
}

/// One experiment point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Point {
    pub n: usize,
    pub theta: f64,
}

#[derive(Clone, Debug)]
pub struct ErrorSettings {
    pub k_max: usize,
    pub inner: usize,
    pub outer: usize,
    pub seed: u64,
    /// Plug-in weight moments from each realized graph.
    pub estimate_weights: bool,
}

/// Conditional (given one label draw) error estimates at one `(n, θ, k)`.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorPoint {
    pub n: usize,
    pub theta: f64,
    pub outer: usize,
    pub k: usize,
    /// `𝔼ₙ‖R(k) − 𝓡(k)‖_∞`.
    pub inf: Estimate,
    /// `max_i 𝔼ₙ‖R_i(k) − 𝓡_i(k)‖₁`, estimated by the largest
    /// community average (vertices of one community are exchangeable given
    /// the labels).
    pub l1: Estimate,
    /// Largest per-vertex mean over replications; biased upward for few
    /// replications.
    pub l1_vertex_max: f64,
    pub e_n: f64,
    pub dense_ok: bool,
    pub limsup_ok: bool,
}

/// Row of `error_curve.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorRow {
    pub n: usize,
    pub theta: f64,
    pub k: usize,
    pub norm_type: String,
    pub estimate: f64,
    pub stderr: f64,
    pub reps: usize,
    pub dense_ok: bool,
}

/// Estimates over all label draws for one `(n, θ)`.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub theta: f64,
    pub k_max: usize,
    /// Per-`k` estimates averaged over label draws.
    pub inf: Vec<Estimate>,
    pub l1: Vec<Estimate>,
    /// `max_{k ≤ k_max}` of the per-`k` estimates.
    pub sup_inf: Estimate,
    pub sup_l1: Estimate,
    /// The same supremum per label draw.
    pub sup_inf_by_outer: Vec<f64>,
    pub sup_l1_by_outer: Vec<f64>,
    pub dense_ok: bool,
    pub limsup_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorCurve {
    pub points: Vec<ErrorPoint>,
    pub summaries: Vec<ErrorSummary>,
}

impl ErrorCurve {
    pub fn rows(&self) -> Vec<ErrorRow> {
        let mut out = Vec::new();
        for s in &self.summaries {
            let reps = s.inf.first().map_or(0, |e| e.reps);
            for (norm, per_k, sup) in [("inf", &s.inf, &s.sup_inf), ("l1", &s.l1, &s.sup_l1)] {
                for (k, e) in per_k.iter().enumerate() {
                    out.push(ErrorRow {
                        n: s.n,
                        theta: s.theta,
                        k,
                        norm_type: norm.to_string(),
                        estimate: e.mean,
                        stderr: e.stderr,
                        reps,
                        dense_ok: s.dense_ok,
                    });
                }
                out.push(ErrorRow {
                    n: s.n,
                    theta: s.theta,
                    k: s.k_max,
                    norm_type: format!("{norm}_sup"),
                    estimate: sup.mean,
                    stderr: sup.stderr,
                    reps,
                    dense_ok: s.dense_ok,
                });
            }
        }
        out
    }
}

fn sup_of(per_k: &[Estimate]) -> Estimate {
    per_k.iter().copied().fold(Estimate::default(), |a, b| if b.mean > a.mean { b } else { a })
}

/// Averages conditional estimates over label draws; the standard error
/// combines the conditional ones.
fn pool(parts: &[Estimate]) -> Estimate {
    let m = parts.len() as f64;
    Estimate {
        mean: parts.iter().map(|e| e.mean).sum::<f64>() / m,
        stderr: parts.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt() / m,
        reps: parts.iter().map(|e| e.reps).sum(),
    }
}

fn model_for(spec: &ModelSpec, labels: &Labels, theta: f64) -> MeanFieldModel {
    MeanFieldModel::new(spec, labels, theta, WeightMoments::analytic(spec))
}

fn outer_seed(seed: u64, n: usize, outer: usize) -> u64 {
    derive_seed(seed, Purpose::Outer, &[n as u64, outer as u64])
}

fn rep_seed(seed: u64, n: usize, outer: usize, rep: usize) -> u64 {
    derive_seed(seed, Purpose::Replication, &[n as u64, outer as u64, rep as u64])
}

struct RepErrors {
    inf: Vec<f64>,
    /// `[k][r]` community averages of row ℓ₁ errors.
    by_community: Vec<Vec<f64>>,
    /// `[k][i]`.
    by_vertex: Vec<Vec<f64>>,
}

/// Coupled graph and mean-field runs sharing `R(0)` and every `W_i(k)`.
///
/// For each point, `outer` label vectors are drawn and `inner` graphs with
/// their signals are replicated under each.
pub fn error_experiment(
    spec: &ModelSpec,
    points: &[Point],
    settings: &ErrorSettings,
    exec: Exec,
) -> Result<ErrorCurve, MetricsError> {
    if settings.inner == 0 || settings.outer == 0 {
        return Err(MetricsError::NoReplications);
    }
    let k_max = settings.k_max;
    let mut curve = ErrorCurve { points: vec![], summaries: vec![] };
    for &Point { n, theta } in points {
        let mut inf_parts: Vec<Vec<Estimate>> = vec![vec![]; k_max + 1];
        let mut l1_parts: Vec<Vec<Estimate>> = vec![vec![]; k_max + 1];
        let (mut sup_inf_by_outer, mut sup_l1_by_outer) = (vec![], vec![]);
        let (mut dense_ok, mut limsup_ok) = (true, true);
        for outer in 0..settings.outer {
            let labels = Arc::new(sample_labels(spec, n, outer_seed(settings.seed, n, outer))?);
            let base = model_for(spec, &labels, theta);
            let drift = base.drift(Flavor::MeanField, k_max);
            let reps = exec.try_map(settings.inner, |rep| -> Result<RepErrors, MetricsError> {
                let seed = rep_seed(settings.seed, n, outer, rep);
                let graph = sample_graph(spec, labels.clone(), theta, seed, Exec::Sequential)?;
                let estimated;
                let drift = if settings.estimate_weights {
                    let m = MeanFieldModel::new(spec, &labels, theta, WeightMoments::estimated(spec, &graph));
                    estimated = m.drift(Flavor::MeanField, k_max);
                    &estimated
                } else {
                    &drift
                };
                let cm = normalize_weights(&graph);
                let r0 = sample_initial(spec, &graph, seed, Exec::Sequential);
                let mut state = OpinionState { r: r0.clone(), k: 0 };
                let mut tracker = MeanFieldTracker::new(&r0, spec.c, spec.d);
                let mut out = RepErrors { inf: vec![], by_community: vec![], by_vertex: vec![] };
                for k in 0..=k_max {
                    if k > 0 {
                        let frame = sample_signal_frame(spec, &graph, &cm.no_in_neighbors, k, seed, Exec::Sequential);
                        state = step(&state, &cm, &frame, spec.c, spec.d, Exec::Sequential)?;
                        tracker.advance(&frame.w, Exec::Sequential);
                    }
                    let mf = tracker.state(&labels.of, drift)?;
                    let rows = row_l1_distances(&state.r, &mf)?;
                    out.inf.push(rows.iter().copied().fold(0.0, f64::max));
                    let mut avg = vec![0.0; spec.k];
                    for (i, x) in rows.iter().enumerate() {
                        avg[labels.of[i]] += x;
                    }
                    for (r, a) in avg.iter_mut().enumerate() {
                        *a /= labels.census[r].max(1) as f64;
                    }
                    out.by_community.push(avg);
                    out.by_vertex.push(rows);
                }
                Ok(out)
            })?;
            let mut sup_inf = 0.0_f64;
            let mut sup_l1 = 0.0_f64;
            for k in 0..=k_max {
                let inf = Estimate::from_samples(&reps.iter().map(|r| r.inf[k]).collect::<Vec<_>>());
                let l1 = (0..spec.k)
                    .filter(|&r| labels.census[r] > 0)
                    .map(|r| Estimate::from_samples(&reps.iter().map(|x| x.by_community[k][r]).collect::<Vec<_>>()))
                    .fold(Estimate::default(), |a, b| if b.mean > a.mean { b } else { a });
                let l1_vertex_max = (0..n)
                    .map(|i| reps.iter().map(|x| x.by_vertex[k][i]).sum::<f64>() / reps.len() as f64)
                    .fold(0.0, f64::max);
                sup_inf = sup_inf.max(inf.mean);
                sup_l1 = sup_l1.max(l1.mean);
                inf_parts[k].push(inf);
                l1_parts[k].push(l1);
                curve.points.push(ErrorPoint {
                    n,
                    theta,
                    outer,
                    k,
                    inf,
                    l1,
                    l1_vertex_max,
                    e_n: base.stats.e_n,
                    dense_ok: base.stats.dense_threshold_ok,
                    limsup_ok: base.stats.limsup_ok,
                });
            }
            sup_inf_by_outer.push(sup_inf);
            sup_l1_by_outer.push(sup_l1);
            dense_ok &= base.stats.dense_threshold_ok;
            limsup_ok &= base.stats.limsup_ok;
        }
        let inf: Vec<Estimate> = inf_parts.iter().map(|p| pool(p)).collect();
        let l1: Vec<Estimate> = l1_parts.iter().map(|p| pool(p)).collect();
        curve.summaries.push(ErrorSummary {
            n,
            theta,
            k_max,
            sup_inf: sup_of(&inf),
            sup_l1: sup_of(&l1),
            inf,
            l1,
            sup_inf_by_outer,
            sup_l1_by_outer,
            dense_ok,
            limsup_ok,
        });
    }
    Ok(curve)
}

/// Bounded test functions of a trajectory matrix `V` (`ℓ × (k+1)`).
#[derive(Clone, Debug, PartialEq)]
pub enum TestFn {
    /// `f ≡ 1`.
    One,
    /// `V[topic, time]`.
    Coord { topic: usize, time: usize },
    /// `V[t1, k1] · V[t2, k2]`.
    Product { a: (usize, usize), b: (usize, usize) },
    /// `clip(Σ_j coef_j V[topic, time]^j, −1, 1)`.
    Poly { topic: usize, time: usize, coef: Vec<f64> },
}

impl TestFn {
    pub fn eval(&self, v: &Mat) -> f64 {
        match self {
            TestFn::One => 1.0,
            TestFn::Coord { topic, time } => v.get(*topic, *time),
            TestFn::Product { a, b } => v.get(a.0, a.1) * v.get(b.0, b.1),
            TestFn::Poly { topic, time, coef } => {
                let x = v.get(*topic, *time);
                coef.iter().rev().fold(0.0, |acc, c| acc * x + c).clamp(-1.0, 1.0)
            }
        }
    }

    /// `sup |f|`.
    pub fn bound(&self) -> f64 {
        1.0
    }

    /// Largest time index the function reads.
    pub fn max_time(&self) -> usize {
        match self {
            TestFn::One => 0,
            TestFn::Coord { time, .. } | TestFn::Poly { time, .. } => *time,
            TestFn::Product { a, b } => a.1.max(b.1),
        }
    }

    pub fn max_topic(&self) -> usize {
        match self {
            TestFn::One => 0,
            TestFn::Coord { topic, .. } | TestFn::Poly { topic, .. } => *topic,
            TestFn::Product { a, b } => a.0.max(b.0),
        }
    }
}

impl FromStr for TestFn {
    type Err = MetricsError;

    /// `one`, `coord:TOPIC:TIME`, `prod:T1:K1:T2:K2`, `poly:TOPIC:TIME:a0,a1,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MetricsError::UnknownFunction(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let idx = |i: usize| parts.get(i).and_then(|p| p.parse::<usize>().ok()).ok_or_else(bad);
        match parts[0] {
            "one" if parts.len() == 1 => Ok(TestFn::One),
            "coord" if parts.len() == 3 => Ok(TestFn::Coord { topic: idx(1)?, time: idx(2)? }),
            "prod" if parts.len() == 5 => Ok(TestFn::Product { a: (idx(1)?, idx(2)?), b: (idx(3)?, idx(4)?) }),
            "poly" if parts.len() == 4 => {
                let coef = parts[3]
                    .split(',')
                    .map(|c| c.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(TestFn::Poly { topic: idx(1)?, time: idx(2)?, coef })
            }
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for TestFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestFn::One => write!(f, "one"),
            TestFn::Coord { topic, time } => write!(f, "coord:{topic}:{time}"),
            TestFn::Product { a, b } => write!(f, "prod:{}:{}:{}:{}", a.0, a.1, b.0, b.1),
            TestFn::Poly { topic, time, coef } => {
                let c: Vec<String> = coef.iter().map(|x| x.to_string()).collect();
                write!(f, "poly:{topic}:{time}:{}", c.join(","))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChaosSettings {
    pub k: usize,
    /// Community of each vertex in a tuple.
    pub communities: Vec<usize>,
    pub functions: Vec<TestFn>,
    pub inner: usize,
    pub outer: usize,
    /// Disjoint vertex tuples averaged per replication; all tuples have the
    /// same conditional law given the labels.
    pub tuples: usize,
    /// Independent mean-field paths per community for the limit side.
    pub limit_reps: usize,
    pub seed: u64,
}

/// Product factorization for one test function.
#[derive(Clone, Debug, Serialize)]
pub struct FactorRow {
    pub n: usize,
    pub theta: f64,
    pub k: usize,
    pub function: String,
    pub communities: String,
    /// `𝔼ₙ[Π_j f(V_{k,i_j})]`.
    pub joint: Estimate,
    /// `Π_j E[f(𝒱_k) | r_j]`.
    pub limit_product: f64,
    pub limit_product_se: f64,
    /// `joint − limit_product`.
    pub naive_gap: f64,
    pub naive_gap_se: f64,
    /// Mean of `Π f(V_{k,i_j}) − Π f(𝓡_{k,i_j})` over coupled runs; the
    /// coupled mean-field coordinates are independent, so this has the same
    /// expectation as `naive_gap` with far less noise.
    pub coupled_gap: Estimate,
}

/// Empirical-measure functional for one function and community.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalRow {
    pub n: usize,
    pub theta: f64,
    pub k: usize,
    pub function: String,
    pub community: usize,
    /// `(1/n) Σ_i f(V_{k,i}) 1(J_i = r)`.
    pub empirical: Estimate,
    /// `π_r E[f(𝒱_k) | r]`.
    pub limit: Estimate,
    pub gap: f64,
    pub gap_se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChaosReport {
    pub factorization: Vec<FactorRow>,
    pub empirical: Vec<EmpiricalRow>,
}

/// Per replication: tuple products, coupled differences, and per-community
/// empirical sums for each test function.
type ChaosRep = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

fn tuple_vertices(labels: &Labels, communities: &[usize], tuples: usize) -> Result<Vec<Vec<usize>>, MetricsError> {
    let mut cursor = vec![0usize; labels.k];
    let mut out = vec![];
    for _ in 0..tuples {
        let mut t = vec![];
        for &r in communities {
            let members = &labels.members[r];
            let v = *members
                .get(cursor[r])
                .ok_or(MetricsError::TooFewMembers { community: r, have: members.len() })?;
            cursor[r] += 1;
            t.push(v as usize);
        }
        out.push(t);
    }
    Ok(out)
}

/// Estimates both sides of the product factorization and the
/// empirical-measure functionals at time `k`.
pub fn chaos_experiment(
    spec: &ModelSpec,
    point: Point,
    settings: &ChaosSettings,
    exec: Exec,
) -> Result<ChaosReport, MetricsError> {
    if settings.inner == 0 || settings.outer == 0 || settings.tuples == 0 || settings.limit_reps == 0 {
        return Err(MetricsError::NoReplications);
    }
    let Point { n, theta } = point;
    let (k, nf) = (settings.k, settings.functions.len());
    let mut joint = vec![vec![]; nf];
    let mut coupled = vec![vec![]; nf];
    let mut empirical = vec![vec![vec![]; spec.k]; nf];
    let mut limit_means = vec![vec![vec![]; spec.k]; nf];
    for outer in 0..settings.outer {
        let labels = Arc::new(sample_labels(spec, n, outer_seed(settings.seed, n, outer))?);
        let model = model_for(spec, &labels, theta);
        let drift = model.drift(Flavor::MeanField, k);
        let tuples = tuple_vertices(&labels, &settings.communities, settings.tuples)?;
        let reps = exec.try_map(settings.inner, |rep| -> Result<ChaosRep, MetricsError> {
            let seed = rep_seed(settings.seed, n, outer, rep);
            let graph = sample_graph(spec, labels.clone(), theta, seed, Exec::Sequential)?;
            let cm = normalize_weights(&graph);
            let r0 = sample_initial(spec, &graph, seed, Exec::Sequential);
            let mut state = OpinionState { r: r0.clone(), k: 0 };
            let mut tracker = MeanFieldTracker::new(&r0, spec.c, spec.d);
            // paths[i] is ℓ × (k+1) for the graph and the mean-field run
            let mut paths = vec![Mat::zeros(spec.ell, k + 1); n];
            let mut mf_paths = vec![Mat::zeros(spec.ell, k + 1); n];
            for time in 0..=k {
                if time > 0 {
                    let frame = sample_signal_frame(spec, &graph, &cm.no_in_neighbors, time, seed, Exec::Sequential);
                    state = step(&state, &cm, &frame, spec.c, spec.d, Exec::Sequential)?;
                    tracker.advance(&frame.w, Exec::Sequential);
                }
                let mf = tracker.state(&labels.of, &drift)?;
                for i in 0..n {
                    for t in 0..spec.ell {
                        paths[i].set(t, time, state.r.get(i, t));
                        mf_paths[i].set(t, time, mf.get(i, t));
                    }
                }
            }
            let mut j = vec![0.0; nf];
            let mut c = vec![0.0; nf];
            let mut e = vec![vec![0.0; spec.k]; nf];
            for (fi, f) in settings.functions.iter().enumerate() {
                for t in &tuples {
                    let a: f64 = t.iter().map(|&i| f.eval(&paths[i])).product();
                    let b: f64 = t.iter().map(|&i| f.eval(&mf_paths[i])).product();
                    j[fi] += a / tuples.len() as f64;
                    c[fi] += (a - b) / tuples.len() as f64;
                }
                for i in 0..n {
                    e[fi][labels.of[i]] += f.eval(&paths[i]) / n as f64;
                }
            }
            Ok((j, c, e))
        })?;
        for (j, c, e) in reps {
            for fi in 0..nf {
                joint[fi].push(j[fi]);
                coupled[fi].push(c[fi]);
                for r in 0..spec.k {
                    empirical[fi][r].push(e[fi][r]);
                }
            }
        }
        // limit side: independent mean-field paths
        let sampler = PathSampler::new(&model, Flavor::MeanField, k);
        for r in 0..spec.k {
            let draws = exec.try_map(settings.limit_reps, |rep| {
                let mut rng = stream(settings.seed, Purpose::Stationary, &[1, n as u64, outer as u64, r as u64, rep as u64]);
                sampler.sample(spec, r, &mut rng)
            })?;
            for (fi, f) in settings.functions.iter().enumerate() {
                let vals: Vec<f64> = draws.iter().map(|p| f.eval(p)).collect();
                limit_means[fi][r].push(Estimate::from_samples(&vals));
            }
        }
    }
    let mut report = ChaosReport { factorization: vec![], empirical: vec![] };
    let comm_label = settings.communities.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("|");
    for (fi, f) in settings.functions.iter().enumerate() {
        let lim: Vec<Estimate> = (0..spec.k).map(|r| pool(&limit_means[fi][r])).collect();
        let mut prod = 1.0;
        let mut rel_var = 0.0;
        for &r in &settings.communities {
            prod *= lim[r].mean;
        }
        // delta method for the product of independent means
        for (pos, &r) in settings.communities.iter().enumerate() {
            let others: f64 = settings.communities.iter().enumerate().filter(|(q, _)| *q != pos).map(|(_, &s)| lim[s].mean).product();
            rel_var += (others * lim[r].stderr).powi(2);
        }
        let joint_e = Estimate::from_samples(&joint[fi]);
        let prod_se = rel_var.sqrt();
        report.factorization.push(FactorRow {
            n,
            theta,
            k,
            function: f.to_string(),
            communities: comm_label.clone(),
            joint: joint_e,
            limit_product: prod,
            limit_product_se: prod_se,
            naive_gap: joint_e.mean - prod,
            naive_gap_se: joint_e.stderr.hypot(prod_se),
            coupled_gap: Estimate::from_samples(&coupled[fi]),
        });
        for r in 0..spec.k {
            let emp = Estimate::from_samples(&empirical[fi][r]);
            let limit = Estimate { mean: spec.pi[r] * lim[r].mean, stderr: spec.pi[r] * lim[r].stderr, reps: lim[r].reps };
            report.empirical.push(EmpiricalRow {
                n,
                theta,
                k,
                function: f.to_string(),
                community: r,
                empirical: emp,
                limit,
                gap: emp.mean - limit.mean,
                gap_se: emp.combined_stderr(&limit),
            });
        }
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct StationaritySettings {
    /// Burn-in: `k_long` is the smallest `k` with `(1−d)^k < tol`; also the
    /// truncation tolerance of the stationary sampler.
    pub tol: f64,
    pub inner: usize,
    pub outer: usize,
    /// Stationary draws per community and label draw.
    pub draws: usize,
    pub seed: u64,
}

/// Row of `stationarity.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct StationarityRow {
    pub n: usize,
    pub theta: f64,
    pub k_long: usize,
    pub community: usize,
    pub topic: usize,
    pub moment: usize,
    pub empirical: f64,
    pub empirical_se: f64,
    pub stationary: f64,
    pub stationary_se: f64,
    pub gap: f64,
    pub combined_se: f64,
}

/// Per-community first and second moments of `R(k_long)` against draws of
/// the stationary law.
pub fn stationarity_experiment(
    spec: &ModelSpec,
    point: Point,
    settings: &StationaritySettings,
    exec: Exec,
) -> Result<Vec<StationarityRow>, MetricsError> {
    if settings.inner == 0 || settings.outer == 0 || settings.draws == 0 {
        return Err(MetricsError::NoReplications);
    }
    let Point { n, theta } = point;
    let (kk, ell) = (spec.k, spec.ell);
    let k_long = contraction_horizon(spec.d, settings.tol);
    // [moment][r][topic] samples
    let mut emp = vec![vec![vec![vec![]; ell]; kk]; 2];
    let mut stat = vec![vec![vec![]; ell]; kk];
    for outer in 0..settings.outer {
        let labels = Arc::new(sample_labels(spec, n, outer_seed(settings.seed, n, outer))?);
        let model = model_for(spec, &labels, theta);
        let reps = exec.try_map(settings.inner, |rep| -> Result<Vec<Vec<Vec<f64>>>, MetricsError> {
            let seed = rep_seed(settings.seed, n, outer, rep);
            let graph = sample_graph(spec, labels.clone(), theta, seed, Exec::Sequential)?;
            let cm = normalize_weights(&graph);
            let mut state = OpinionState { r: sample_initial(spec, &graph, seed, Exec::Sequential), k: 0 };
            for time in 1..=k_long {
                let frame = sample_signal_frame(spec, &graph, &cm.no_in_neighbors, time, seed, Exec::Sequential);
                state = step(&state, &cm, &frame, spec.c, spec.d, Exec::Sequential)?;
            }
            let mut m = vec![vec![vec![0.0; ell]; kk]; 2];
            for i in 0..n {
                let r = labels.of[i];
                let w = 1.0 / labels.census[r] as f64;
                for t in 0..ell {
                    let x = state.r.get(i, t);
                    m[0][r][t] += w * x;
                    m[1][r][t] += w * x * x;
                }
            }
            Ok(m)
        })?;
        for m in reps {
            for mo in 0..2 {
                for r in 0..kk {
                    if labels.census[r] > 0 {
                        for t in 0..ell {
                            emp[mo][r][t].push(m[mo][r][t]);
                        }
                    }
                }
            }
        }
        let sampler = StationarySampler::new(&model, Flavor::MeanField, settings.tol)?;
        for r in 0..kk {
            let draws = exec.map(settings.draws, |rep| {
                let mut rng = stream(settings.seed, Purpose::Stationary, &[2, n as u64, outer as u64, r as u64, rep as u64]);
                sampler.sample(spec, r, &mut rng)
            });
            for x in draws {
                for t in 0..ell {
                    stat[r][t].push(x[t]);
                }
            }
        }
    }
    let mut rows = vec![];
    for r in 0..kk {
        for t in 0..ell {
            for mo in 0..2 {
                if emp[mo][r][t].is_empty() {
                    continue;
                }
                let e = Estimate::from_samples(&emp[mo][r][t]);
                let xs: Vec<f64> = stat[r][t].iter().map(|x| if mo == 0 { *x } else { x * x }).collect();
                let s = Estimate::from_samples(&xs);
                rows.push(StationarityRow {
                    n,
                    theta,
                    k_long,
                    community: r,
                    topic: t,
                    moment: mo + 1,
                    empirical: e.mean,
                    empirical_se: e.stderr,
                    stationary: s.mean,
                    stationary_se: s.stderr,
                    gap: e.mean - s.mean,
                    combined_se: e.combined_stderr(&s),
                });
            }
        }
    }
    Ok(rows)
}

/// Law of an offspring count; both satisfy `E[e^{sN}] ≤ e^{E[N](e^s − 1)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CountLaw {
    Poisson { mean: f64 },
    Binomial { trials: u64, p: f64 },
}

impl CountLaw {
    pub fn mean(&self) -> f64 {
        match self {
            CountLaw::Poisson { mean } => *mean,
            CountLaw::Binomial { trials, p } => *trials as f64 * p,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            CountLaw::Poisson { mean } if !(*mean >= 0.0 && mean.is_finite()) => Err(format!("poisson mean {mean} must be finite and nonnegative")),
            CountLaw::Binomial { p, .. } if !(0.0..=1.0).contains(p) => Err(format!("binomial p {p} outside [0, 1]")),
            _ => Ok(()),
        }
    }
}

enum CountSampler {
    Zero,
    Poisson(Poisson<f64>),
    Binomial(Binomial),
}

impl CountSampler {
    fn new(law: &CountLaw) -> Result<Self, MetricsError> {
        law.validate().map_err(MetricsError::BadCase)?;
        Ok(match law {
            CountLaw::Poisson { mean } if *mean == 0.0 => CountSampler::Zero,
            CountLaw::Poisson { mean } => CountSampler::Poisson(Poisson::new(*mean).map_err(|e| MetricsError::BadCase(e.to_string()))?),
            CountLaw::Binomial { trials, p } => CountSampler::Binomial(Binomial::new(*trials, *p).map_err(|e| MetricsError::BadCase(e.to_string()))?),
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            CountSampler::Zero => 0,
            CountSampler::Poisson(p) => p.sample(rng) as u64,
            CountSampler::Binomial(b) => b.sample(rng),
        }
    }
}

/// Random sums `S_r = Σ_{i ≤ N_r} B_i^{(r)}` and `S̃_r = Σ_{i ≤ N_r} X_i^{(r)} B_i^{(r)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCase {
    pub counts: Vec<CountLaw>,
    /// Weight law per type, on `[0, h]`.
    pub weights: Vec<ScalarDist>,
    /// Mark law per type, on `[-1, 1]`.
    pub marks: Vec<ScalarDist>,
    pub h: f64,
    pub eps: Vec<f64>,
}

impl ConcentrationCase {
    pub fn validate(&self) -> Result<(), String> {
        let k = self.counts.len();
        if k == 0 || self.weights.len() != k || self.marks.len() != k {
            return Err(format!(
                "counts, weights and marks need one entry per type (got {}, {}, {})",
                k,
                self.weights.len(),
                self.marks.len()
            ));
        }
        for c in &self.counts {
            c.validate()?;
        }
        for w in &self.weights {
            w.validate()?;
            w.check_support(0.0, self.h)?;
        }
        for x in &self.marks {
            x.validate()?;
            x.check_support(-1.0, 1.0)?;
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0)) {
            return Err(format!("eps values must be positive, got {e}"));
        }
        Ok(())
    }

    /// `(μ, ν)` for the ratio statement: `Σ E[N_r] E[B]` and `Σ E[N_r] E[B²]`.
    pub fn ratio_moments(&self) -> (f64, f64) {
        let mu = self.counts.iter().zip(&self.weights).map(|(n, b)| n.mean() * b.mean()).sum();
        let nu = self.counts.iter().zip(&self.weights).map(|(n, b)| n.mean() * b.second_moment()).sum();
        (mu, nu)
    }

    /// `(μ, ν)` for the sum statement with `Y = X B`.
    pub fn signed_moments(&self) -> (f64, f64) {
        let mut mu = 0.0;
        let mut nu = 0.0;
        for r in 0..self.counts.len() {
            let en = self.counts[r].mean();
            mu += en * self.marks[r].abs_mean() * self.weights[r].mean();
            nu += en * self.marks[r].second_moment() * self.weights[r].second_moment();
        }
        (mu, nu)
    }
}

/// `exp(−x²/(2ν) + H x³/(2ν²))`.
pub fn sum_bound(x: f64, nu: f64, h: f64) -> f64 {
    if nu <= 0.0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    (-(x * x) / (2.0 * nu) + h * x.powi(3) / (2.0 * nu * nu)).exp()
}

/// `4 exp(−(ε/2)² μ²/(2ν) + H (ε/2)³ μ³/(2ν²))`.
pub fn ratio_bound(eps: f64, mu: f64, nu: f64, h: f64) -> f64 {
    4.0 * sum_bound(0.5 * eps * mu, nu, h)
}

/// Row of `concentration.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationRow {
    /// `ratio`, `sum_weight` (`Y = B`) or `sum_signed` (`Y = X B`).
    pub statement: String,
    pub eps: f64,
    pub replications: usize,
    pub empirical: f64,
    /// `√(b(1−b)/R)` at the bound value `b`.
    pub stderr: f64,
    pub bound: f64,
    /// `bound ≤ 1`.
    pub informative: bool,
    /// `empirical ≤ bound + 3 stderr`, vacuous when not informative.
    pub pass: bool,
}

/// Empirical exceedance frequencies against the analytic bounds.
pub fn concentration_check(
    case: &ConcentrationCase,
    replications: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<ConcentrationRow>, MetricsError> {
    case.validate().map_err(MetricsError::BadCase)?;
    if replications == 0 {
        return Err(MetricsError::NoReplications);
    }
    let samplers = case.counts.iter().map(CountSampler::new).collect::<Result<Vec<_>, _>>()?;
    let (mu, nu) = case.ratio_moments();
    let (mu_y, nu_y) = case.signed_moments();
    let es: f64 = mu;
    let es_tilde: f64 = (0..case.counts.len())
        .map(|r| case.counts[r].mean() * case.weights[r].mean() * case.marks[r].mean())
        .sum();
    let target = if es > 0.0 { es_tilde / es } else { 0.0 };
    // (ratio deviation, S − E S, S̃ − E S̃) per replication
    let devs = exec.map(replications, |rep| {
        let mut rng = stream(seed, Purpose::Concentration, &[rep as u64]);
        let (mut s, mut st) = (0.0, 0.0);
        for r in 0..samplers.len() {
            let count = samplers[r].sample(&mut rng);
            for _ in 0..count {
                let b = case.weights[r].sample(&mut rng);
                let x = case.marks[r].sample(&mut rng);
                s += b;
                st += x * b;
            }
        }
        // an empty sum has ratio 0, matching the zero row convention
        let ratio = if s > 0.0 { st / s } else { 0.0 };
        ((ratio - target).abs(), s - es, st - es_tilde)
    });
    let reps = replications as f64;
    let mut rows = vec![];
    for &eps in &case.eps {
        let candidates = [
            ("ratio", devs.iter().filter(|d| d.0 > eps).count(), ratio_bound(eps, mu, nu, case.h)),
            ("sum_weight", devs.iter().filter(|d| d.1 > eps * mu).count(), sum_bound(eps * mu, nu, case.h)),
            ("sum_signed", devs.iter().filter(|d| d.2 > eps * mu_y).count(), sum_bound(eps * mu_y, nu_y, case.h)),
        ];
        for (statement, hits, bound) in candidates {
            let empirical = hits as f64 / reps;
            let b = bound.clamp(0.0, 1.0);
            let stderr = (b * (1.0 - b) / reps).sqrt();
            let informative = bound <= 1.0;
            rows.push(ConcentrationRow {
                statement: statement.to_string(),
                eps,
                replications,
                empirical,
                stderr,
                bound,
                informative,
                pass: !informative || empirical <= bound + 3.0 * stderr,
            });
        }
    }
    Ok(rows)
}
