//! The synchronous opinion recursion
//! `R(k+1) = c·C·R(k) + W(k+1) + (1−c−d)·R(k)` and its closed form.

use std::io::Write;

use statrs::function::factorial::ln_binomial;

use crate::exec::Exec;
use crate::graph::{GraphSample, RowStochasticMatrix};
use crate::linalg::Mat;
use crate::rng::{stream, Purpose};
use crate::spec::{InitialLaw, ModelSpec};

/// Slack allowed on the `[-1, 1]` range check; accumulated rounding only.
pub const RANGE_SLACK: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("coefficient a(s={s}, t={t}) requires s <= t")]
    BadCoefficientIndex { s: usize, t: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("opinion of vertex {vertex} on topic {topic} left [-1, 1]: {value}")]
    OutOfRange { vertex: usize, topic: usize, value: f64 },
    #[error("closed form needs {needed} retained signal frames, got {got}")]
    MissingHistory { needed: usize, got: usize },
}

/// `a(s, t) = C(t, s) (1−c−d)^(t−s) c^s`.
pub fn coefficient(s: usize, t: usize, c: f64, d: f64) -> Result<f64, DynamicsError> {
    if s > t {
        return Err(DynamicsError::BadCoefficientIndex { s, t });
    }
    let keep = 1.0 - c - d;
    if t <= 60 {
        let mut binom = 1.0_f64;
        let small = s.min(t - s);
        for i in 0..small {
            binom = binom * (t - i) as f64 / (i + 1) as f64;
        }
        return Ok(binom.round() * keep.powi((t - s) as i32) * c.powi(s as i32));
    }
    if (t > s && keep == 0.0) || (s > 0 && c == 0.0) {
        return Ok(0.0);
    }
    let mut log = ln_binomial(t as u64, s as u64);
    if t > s {
        log += (t - s) as f64 * keep.ln();
    }
    if s > 0 {
        log += s as f64 * c.ln();
    }
    Ok(log.exp())
}

/// Table of `a(s, t)` for `0 <= s <= t <= t_max`.
#[derive(Clone, Debug)]
pub struct Coefficients {
    rows: Vec<Vec<f64>>,
}

impl Coefficients {
    pub fn new(t_max: usize, c: f64, d: f64) -> Self {
        let rows = (0..=t_max)
            .map(|t| (0..=t).map(|s| coefficient(s, t, c, d).expect("s <= t")).collect())
            .collect();
        Coefficients { rows }
    }

    #[inline]
    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.rows[t][s]
    }

    pub fn t_max(&self) -> usize {
        self.rows.len() - 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpinionState {
    pub r: Mat,
    pub k: usize,
}

/// External signals at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalFrame {
    pub w: Mat,
    /// Underlying media draws.
    pub z: Mat,
}

/// Draws `Z_i(k) ~ ν(A_i)` and assembles `W_i(k) = d Z_i + c q_i 1(d_i⁻ = 0)`.
///
/// Vertex `i` uses stream `(Signals, [i, k])` under `seed`, so frames can be
/// regenerated independently of each other.
pub fn sample_signal_frame(
    spec: &ModelSpec,
    graph: &GraphSample,
    no_in_neighbors: &[bool],
    k: usize,
    seed: u64,
    exec: Exec,
) -> SignalFrame {
    let n = graph.n();
    let ell = spec.ell;
    let mut zw = vec![0.0; n * 2 * ell];
    exec.for_each_row_mut(&mut zw, 2 * ell, |i, row| {
        let (z, w) = row.split_at_mut(ell);
        let mut rng = stream(seed, Purpose::Signals, &[i as u64, k as u64]);
        signal_draw(spec, graph.labels.of[i], graph.beliefs.row(i), no_in_neighbors[i], &mut rng, z, w);
    });
    let mut z = Mat::zeros(n, ell);
    let mut w = Mat::zeros(n, ell);
    for i in 0..n {
        z.row_mut(i).copy_from_slice(&zw[i * 2 * ell..i * 2 * ell + ell]);
        w.row_mut(i).copy_from_slice(&zw[i * 2 * ell + ell..(i + 1) * 2 * ell]);
    }
    SignalFrame { w, z }
}

/// One vertex's media draw `z` and external signal `w`.
#[inline]
pub fn signal_draw<R: rand::Rng + ?Sized>(
    spec: &ModelSpec,
    community: usize,
    belief: &[f64],
    no_in_neighbors: bool,
    rng: &mut R,
    z: &mut [f64],
    w: &mut [f64],
) {
    let law = &spec.signals[community];
    law.media.sample_into(rng, z);
    let lambda = law.belief_weight;
    for t in 0..z.len() {
        if lambda > 0.0 {
            z[t] = lambda * belief[t] + (1.0 - lambda) * z[t];
        }
        w[t] = spec.d * z[t];
        if no_in_neighbors {
            w[t] += spec.c * belief[t];
        }
    }
}

/// Draws `R(0)`: vertex `i` uses stream `(Initial, [i])` under `seed`.
pub fn sample_initial(spec: &ModelSpec, graph: &GraphSample, seed: u64, exec: Exec) -> Mat {
    let mut r = Mat::zeros(graph.n(), spec.ell);
    match &spec.initial {
        InitialLaw::Beliefs => r.data.copy_from_slice(&graph.beliefs.data),
        InitialLaw::Dist { per_community } => {
            exec.for_each_row_mut(&mut r.data, spec.ell, |i, row| {
                let mut rng = stream(seed, Purpose::Initial, &[i as u64]);
                per_community[graph.labels.of[i]].sample_into(&mut rng, row);
            });
        }
    }
    r
}

/// Checks every entry of `m` against `[-1, 1]` with [`RANGE_SLACK`].
pub fn check_range(m: &Mat) -> Result<(), DynamicsError> {
    match m.data.iter().position(|v| !(v.abs() <= 1.0 + RANGE_SLACK)) {
        None => Ok(()),
        Some(p) => Err(DynamicsError::OutOfRange {
            vertex: p / m.cols.max(1),
            topic: p % m.cols.max(1),
            value: m.data[p],
        }),
    }
}

/// One synchronous update.
pub fn step(
    state: &OpinionState,
    c_mat: &RowStochasticMatrix,
    frame: &SignalFrame,
    c: f64,
    d: f64,
    exec: Exec,
) -> Result<OpinionState, DynamicsError> {
    let r = &state.r;
    if c_mat.n != r.rows || frame.w.rows != r.rows || frame.w.cols != r.cols {
        return Err(DynamicsError::Dimension(format!(
            "state {}x{}, matrix {}x{}, signals {}x{}",
            r.rows, r.cols, c_mat.n, c_mat.n, frame.w.rows, frame.w.cols
        )));
    }
    let keep = 1.0 - c - d;
    let mut next = Mat::zeros(r.rows, r.cols);
    exec.for_each_row_mut(&mut next.data, r.cols, |i, row| {
        c_mat.gather_row(i, r, row);
        let own = r.row(i);
        let w = frame.w.row(i);
        for t in 0..row.len() {
            row[t] = c * row[t] + w[t] + keep * own[t];
        }
    });
    check_range(&next)?;
    Ok(OpinionState { r: next, k: state.k + 1 })
}

/// Per-vertex opinion paths: `paths[v]` is `ell × (k+1)` with column `t`
/// holding the opinion of `selection[v]` at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub selection: Vec<usize>,
    pub communities: Vec<usize>,
    pub paths: Vec<Mat>,
}

impl TrajectoryRecord {
    fn new(selection: &[usize], graph: &GraphSample, ell: usize, k_max: usize) -> Self {
        TrajectoryRecord {
            selection: selection.to_vec(),
            communities: selection.iter().map(|&i| graph.labels.of[i]).collect(),
            paths: selection.iter().map(|_| Mat::zeros(ell, k_max + 1)).collect(),
        }
    }

    fn record(&mut self, state: &OpinionState) {
        for (v, &i) in self.selection.iter().enumerate() {
            for (t, x) in state.r.row(i).iter().enumerate() {
                self.paths[v].set(t, state.k, *x);
            }
        }
    }

    /// CSV rows `replication, vertex, community, time, topic, value`.
    pub fn write_csv<W: Write>(&self, out: W, replication: usize, header: bool) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        if header {
            w.write_record(["replication", "vertex", "community", "time", "topic", "value"])?;
        }
        for (v, path) in self.paths.iter().enumerate() {
            for time in 0..path.cols {
                for topic in 0..path.rows {
                    w.serialize((
                        replication,
                        self.selection[v],
                        self.communities[v],
                        time,
                        topic,
                        path.get(topic, time),
                    ))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub initial: Mat,
    pub final_state: OpinionState,
    pub record: TrajectoryRecord,
    /// `W(1) … W(k_max)` when retention was requested.
    pub history: Option<Vec<Mat>>,
}

/// Iterates [`step`] `k_max` times from a fresh `R(0)`.
///
/// Initial opinions use stream `(Initial, ·)` and signals `(Signals, ·)`
/// under `seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    spec: &ModelSpec,
    graph: &GraphSample,
    c_mat: &RowStochasticMatrix,
    k_max: usize,
    seed: u64,
    selection: &[usize],
    retain_history: bool,
    exec: Exec,
) -> Result<Simulation, DynamicsError> {
    let initial = sample_initial(spec, graph, seed, exec);
    check_range(&initial)?;
    let mut record = TrajectoryRecord::new(selection, graph, spec.ell, k_max);
    let mut state = OpinionState { r: initial.clone(), k: 0 };
    record.record(&state);
    let mut history = retain_history.then(Vec::new);
    for k in 1..=k_max {
        let frame = sample_signal_frame(spec, graph, &c_mat.no_in_neighbors, k, seed, exec);
        state = step(&state, c_mat, &frame, spec.c, spec.d, exec)?;
        record.record(&state);
        if let Some(h) = history.as_mut() {
            h.push(frame.w);
        }
    }
    Ok(Simulation { initial, final_state: state, record, history })
}

/// Closed-form state
/// `R(k) = Σ_{t<k} Σ_{s≤t} a(s,t) C^s W(k−t) + Σ_{s≤k} a(s,k) C^s R(0)`.
///
/// `history[j]` must hold `W(j+1)`.
pub fn closed_form_state(
    c_mat: &RowStochasticMatrix,
    history: &[Mat],
    r0: &Mat,
    c: f64,
    d: f64,
    k: usize,
    exec: Exec,
) -> Result<Mat, DynamicsError> {
    if history.len() < k {
        return Err(DynamicsError::MissingHistory { needed: k, got: history.len() });
    }
    let a = Coefficients::new(k, c, d);
    let mut acc = Mat::zeros(r0.rows, r0.cols);
    let add_series = |x0: &Mat, t: usize, acc: &mut Mat| {
        let mut x = x0.clone();
        acc.axpy(a.get(0, t), &x);
        for s in 1..=t {
            x = c_mat.apply(&x, exec);
            acc.axpy(a.get(s, t), &x);
        }
    };
    for t in 0..k {
        add_series(&history[k - t - 1], t, &mut acc);
    }
    add_series(r0, k, &mut acc);
    Ok(acc)
}
