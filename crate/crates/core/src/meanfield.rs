//! Averaged `K × K` dynamics: the mean-field process, the intermediate
//! process built on finite-`n` shares, and draws of the stationary limit.

use rand::Rng;
use serde::Serialize;

use crate::dynamics::{signal_draw, Coefficients, RANGE_SLACK};
use crate::exec::Exec;
use crate::graph::{GraphSample, Labels};
use crate::linalg::Mat;
use crate::rng::{stream, Purpose, SimRng};
use crate::spec::{InitialLaw, ModelSpec};

#[derive(Debug, thiserror::Error)]
pub enum MeanFieldError {
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("mean-field value for vertex {vertex} on topic {topic} left [-1, 1]: {value}")]
    OutOfRange { vertex: usize, topic: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// `m_rs = π_s β_rs κ(s,r) / Σ_t π_t β_rt κ(t,r)`; zero rows stay zero.
///
/// Pass the empirical shares to obtain the finite-`n` matrix.
pub fn build_m(pi: &[f64], kappa: &[Vec<f64>], beta: &Mat) -> Mat {
    let k = pi.len();
    let mut m = Mat::zeros(k, k);
    for r in 0..k {
        let mut total = 0.0;
        for s in 0..k {
            let x = pi[s] * beta.get(r, s) * kappa[s][r];
            m.set(r, s, x);
            total += x;
        }
        for s in 0..k {
            let x = if total > 0.0 { m.get(r, s) / total } else { 0.0 };
            m.set(r, s, x);
        }
    }
    m
}

pub fn build_breve_m(pi_hat: &[f64], kappa: &[Vec<f64>], beta: &Mat) -> Mat {
    build_m(pi_hat, kappa, beta)
}

/// First and second moments of the edge weights per community pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightMoments {
    pub beta: Mat,
    pub v: Mat,
}

impl WeightMoments {
    pub fn analytic(spec: &ModelSpec) -> Self {
        let mut beta = Mat::zeros(spec.k, spec.k);
        let mut v = Mat::zeros(spec.k, spec.k);
        for r in 0..spec.k {
            for s in 0..spec.k {
                beta.set(r, s, spec.weights[r][s].mean());
                v.set(r, s, spec.weights[r][s].second_moment());
            }
        }
        WeightMoments { beta, v }
    }

    /// Plug-in moments from the realized weights; pairs without edges keep
    /// their analytic values.
    pub fn estimated(spec: &ModelSpec, graph: &GraphSample) -> Self {
        let k = spec.k;
        let mut sum = vec![0.0; k * k];
        let mut sq = vec![0.0; k * k];
        let mut count = vec![0usize; k * k];
        for i in 0..graph.n() {
            let r = graph.labels.of[i];
            for (&j, &b) in graph.in_neighbors(i).iter().zip(graph.in_weights(i)) {
                let idx = r * k + graph.labels.of[j as usize];
                sum[idx] += b;
                sq[idx] += b * b;
                count[idx] += 1;
            }
        }
        let mut out = Self::analytic(spec);
        for idx in 0..k * k {
            if count[idx] > 0 {
                out.beta.data[idx] = sum[idx] / count[idx] as f64;
                out.v.data[idx] = sq[idx] / count[idx] as f64;
            }
        }
        out
    }
}

/// `P(d_i⁻ = 0 | J_i = r) = Π_s (1 − p_sr)^(n_s − 1(s = r))` given the census.
pub fn isolation_probabilities(spec: &ModelSpec, census: &[usize], theta: f64) -> Vec<f64> {
    let n: usize = census.iter().sum();
    (0..spec.k)
        .map(|r| {
            let mut log_p = 0.0;
            for s in 0..spec.k {
                let others = census[s] - usize::from(s == r && census[s] > 0);
                if others == 0 {
                    continue;
                }
                let p = spec.edge_probability(s, r, theta, n);
                if p >= 1.0 {
                    return 0.0;
                }
                log_p += others as f64 * (-p).ln_1p();
            }
            log_p.exp()
        })
        .collect()
}

/// `(W̄, R̄)`: conditional means of the signal and initial opinion per
/// community, with the exact finite-`n` isolation probability.
pub fn mean_matrices(spec: &ModelSpec, isolation: &[f64]) -> (Mat, Mat) {
    let ell = spec.ell;
    let mut w_bar = Mat::zeros(spec.k, ell);
    let r_bar = Mat::from_rows(&spec.initial_means());
    for r in 0..spec.k {
        let q = spec.beliefs[r].mean(ell);
        let xi = spec.signals[r].media.mean(ell);
        let lambda = spec.signals[r].belief_weight;
        for t in 0..ell {
            let z = lambda * q[t] + (1.0 - lambda) * xi[t];
            w_bar.set(r, t, spec.d * z + spec.c * q[t] * isolation[r]);
        }
    }
    (w_bar, r_bar)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeStats {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    /// Absent when no row of `M` is nonzero.
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub e_n: f64,
    /// `(6 H Λ)² Δ log n`.
    pub dense_threshold: Option<f64>,
    pub dense_threshold_ok: bool,
    /// `max κ θ / n ≤ 1`, i.e. the clipping in the edge law is inactive.
    pub limsup_ok: bool,
}

pub fn e_n(pi: &[f64], pi_hat: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for r in 0..pi.len() {
        for s in 0..pi.len() {
            let num = (pi_hat[s] * pi[r] - pi[s] * pi_hat[r]).abs();
            if num > 0.0 {
                worst = worst.max(num / (pi_hat[r] * pi[s]));
            }
        }
    }
    worst
}

pub fn regime_stats(
    spec: &ModelSpec,
    moments: &WeightMoments,
    pi_hat: &[f64],
    n: usize,
    theta: f64,
) -> RegimeStats {
    let k = spec.k;
    let m = build_m(&spec.pi, &spec.kappa, &moments.beta);
    let mut mu = vec![0.0; k];
    let mut nu = vec![0.0; k];
    for r in 0..k {
        for s in 0..k {
            mu[r] += moments.beta.get(r, s) * pi_hat[s] * spec.kappa[s][r];
            nu[r] += moments.v.get(r, s) * pi_hat[s] * spec.kappa[s][r];
        }
    }
    let active: Vec<usize> = (0..k).filter(|&r| m.row(r).iter().any(|&x| x > 0.0)).collect();
    let (delta, lambda) = if active.is_empty() {
        (None, None)
    } else {
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::INFINITY };
        let delta = active.iter().map(|&r| ratio(nu[r], mu[r] * mu[r])).fold(0.0, f64::max);
        let lambda = active.iter().map(|&r| ratio(mu[r], nu[r])).fold(0.0, f64::max);
        (Some(delta), Some(lambda))
    };
    let dense_threshold = match (delta, lambda) {
        (Some(dl), Some(lm)) => Some((6.0 * spec.h * lm).powi(2) * dl * (n as f64).ln()),
        _ => None,
    };
    RegimeStats {
        mu,
        nu,
        delta,
        lambda,
        e_n: e_n(&spec.pi, pi_hat),
        dense_threshold,
        dense_threshold_ok: dense_threshold.is_some_and(|t| theta >= t),
        limsup_ok: spec.max_edge_intensity(theta, n) <= 1.0,
    }
}

/// Which averaged matrix drives the deterministic part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// Limit shares `π`.
    MeanField,
    /// Finite-`n` shares; the intermediate process.
    Intermediate,
}

#[derive(Clone, Debug)]
pub struct MeanFieldModel {
    pub k: usize,
    pub ell: usize,
    pub c: f64,
    pub d: f64,
    pub n: usize,
    pub theta: f64,
    pub pi_hat: Vec<f64>,
    pub m: Mat,
    pub m_breve: Mat,
    pub moments: WeightMoments,
    pub isolation: Vec<f64>,
    pub w_bar: Mat,
    pub r_bar: Mat,
    pub nonzero_rows: Vec<usize>,
    pub stats: RegimeStats,
}

impl MeanFieldModel {
    pub fn new(spec: &ModelSpec, labels: &Labels, theta: f64, moments: WeightMoments) -> Self {
        let pi_hat = labels.shares();
        let n = labels.n();
        let m = build_m(&spec.pi, &spec.kappa, &moments.beta);
        let m_breve = build_breve_m(&pi_hat, &spec.kappa, &moments.beta);
        let isolation = isolation_probabilities(spec, &labels.census, theta);
        let (w_bar, r_bar) = mean_matrices(spec, &isolation);
        let nonzero_rows = (0..spec.k).filter(|&r| m.row(r).iter().any(|&x| x > 0.0)).collect();
        let stats = regime_stats(spec, &moments, &pi_hat, n, theta);
        MeanFieldModel {
            k: spec.k,
            ell: spec.ell,
            c: spec.c,
            d: spec.d,
            n,
            theta,
            pi_hat,
            m,
            m_breve,
            moments,
            isolation,
            w_bar,
            r_bar,
            nonzero_rows,
            stats,
        }
    }

    pub fn matrix(&self, flavor: Flavor) -> &Mat {
        match flavor {
            Flavor::MeanField => &self.m,
            Flavor::Intermediate => &self.m_breve,
        }
    }

    /// Deterministic part `D(k)` for `k = 0..=k_max`, each `K × ℓ`:
    /// `D(k) = Σ_{t=1}^{k-1} Σ_{s=1}^{t} a(s,t) M^s W̄ + Σ_{s=1}^{k} a(s,k) M^s R̄`.
    pub fn drift(&self, flavor: Flavor, k_max: usize) -> Vec<Mat> {
        drift_table(self.matrix(flavor), &self.w_bar, &self.r_bar, self.c, self.d, k_max)
    }

    pub fn report(&self) -> ModelReport {
        ModelReport {
            n: self.n,
            theta: self.theta,
            pi_hat: self.pi_hat.clone(),
            m: self.m.to_rows(),
            m_breve: self.m_breve.to_rows(),
            beta: self.moments.beta.to_rows(),
            v: self.moments.v.to_rows(),
            isolation: self.isolation.clone(),
            w_bar: self.w_bar.to_rows(),
            r_bar: self.r_bar.to_rows(),
            nonzero_rows: self.nonzero_rows.clone(),
            stats: self.stats.clone(),
        }
    }
}

/// JSON model report.
#[derive(Clone, Debug, Serialize)]
pub struct ModelReport {
    pub n: usize,
    pub theta: f64,
    pub pi_hat: Vec<f64>,
    pub m: Vec<Vec<f64>>,
    pub m_breve: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub isolation: Vec<f64>,
    pub w_bar: Vec<Vec<f64>>,
    pub r_bar: Vec<Vec<f64>>,
    pub nonzero_rows: Vec<usize>,
    pub stats: RegimeStats,
}

pub fn drift_table(m: &Mat, w_bar: &Mat, r_bar: &Mat, c: f64, d: f64, k_max: usize) -> Vec<Mat> {
    let a = Coefficients::new(k_max, c, d);
    let (k, ell) = (w_bar.rows, w_bar.cols);
    // mw[s] = M^s W̄, mr[s] = M^s R̄
    let mut mw = vec![w_bar.clone()];
    let mut mr = vec![r_bar.clone()];
    for s in 1..=k_max {
        mw.push(m.matmul(&mw[s - 1]));
        mr.push(m.matmul(&mr[s - 1]));
    }
    let mut out = Vec::with_capacity(k_max + 1);
    let mut signal_part = Mat::zeros(k, ell);
    for kk in 0..=k_max {
        let mut dk = signal_part.clone();
        for s in 1..=kk {
            dk.axpy(a.get(s, kk), &mr[s]);
        }
        out.push(dk);
        // Σ_{t=1}^{kk} S_t feeds D(kk + 1)
        if kk >= 1 {
            for s in 1..=kk {
                signal_part.axpy(a.get(s, kk), &mw[s]);
            }
        }
    }
    out
}

/// One vertex's path `𝓡_i(0..=k_max)` as an `ℓ × (k_max+1)` matrix.
///
/// `signals[j]` is the vertex's own `W_i(j+1)`; `drift` comes from
/// [`MeanFieldModel::drift`], so the same routine gives the intermediate
/// process when built from the finite-`n` matrix.
pub fn meanfield_trajectory(
    r: usize,
    signals: &[Vec<f64>],
    drift: &[Mat],
    r0: &[f64],
    c: f64,
    d: f64,
    k_max: usize,
) -> Result<Mat, MeanFieldError> {
    if signals.len() < k_max || drift.len() <= k_max {
        return Err(MeanFieldError::Dimension(format!(
            "need {k_max} signals and {} drift tables, got {} and {}",
            k_max + 1,
            signals.len(),
            drift.len()
        )));
    }
    let ell = r0.len();
    let keep = 1.0 - c - d;
    let mut out = Mat::zeros(ell, k_max + 1);
    for k in 0..=k_max {
        for topic in 0..ell {
            let mut x = drift[k].get(r, topic) + keep.powi(k as i32) * r0[topic];
            for t in 0..k {
                x += keep.powi(t as i32) * signals[k - t - 1][topic];
            }
            if !(x.abs() <= 1.0 + RANGE_SLACK) {
                return Err(MeanFieldError::OutOfRange { vertex: r, topic, value: x });
            }
            out.set(topic, k, x);
        }
    }
    Ok(out)
}

/// Same as [`meanfield_trajectory`] driven by the finite-`n` matrix.
pub fn intermediate_trajectory(
    model: &MeanFieldModel,
    r: usize,
    signals: &[Vec<f64>],
    r0: &[f64],
    k_max: usize,
) -> Result<Mat, MeanFieldError> {
    let drift = model.drift(Flavor::Intermediate, k_max);
    meanfield_trajectory(r, signals, &drift, r0, model.c, model.d, k_max)
}

/// Streams the mean-field process for all vertices alongside a graph run.
///
/// Keeps `U(k) = (1−c−d) U(k−1) + W(k)` with `U(0) = R(0)`, so that
/// `𝓡_i(k) = U_i(k) + D(k)_{J_i}`.
#[derive(Clone, Debug)]
pub struct MeanFieldTracker {
    pub u: Mat,
    pub k: usize,
    keep: f64,
}

impl MeanFieldTracker {
    pub fn new(r0: &Mat, c: f64, d: f64) -> Self {
        MeanFieldTracker { u: r0.clone(), k: 0, keep: 1.0 - c - d }
    }

    pub fn advance(&mut self, w: &Mat, exec: Exec) {
        let keep = self.keep;
        exec.for_each_row_mut(&mut self.u.data, w.cols, |i, row| {
            for (x, y) in row.iter_mut().zip(w.row(i)) {
                *x = keep * *x + y;
            }
        });
        self.k += 1;
    }

    /// `𝓡(k)` for the current `k`; errors when an entry leaves `[-1, 1]`.
    pub fn state(&self, labels: &[usize], drift: &[Mat]) -> Result<Mat, MeanFieldError> {
        let dk = &drift[self.k];
        let mut out = self.u.clone();
        for (i, &r) in labels.iter().enumerate() {
            for (t, x) in out.row_mut(i).iter_mut().enumerate() {
                *x += dk.get(r, t);
                if !(x.abs() <= 1.0 + RANGE_SLACK) {
                    return Err(MeanFieldError::OutOfRange { vertex: i, topic: t, value: *x });
                }
            }
        }
        Ok(out)
    }
}

/// Truncation horizon `T = ⌈log(tol·d/ℓ) / log(1−d)⌉`, so the discarded
/// tail `ℓ (1−d)^(T+1) / d` is below `tol`.
pub fn stationary_horizon(tol: f64, d: f64, ell: usize) -> Result<usize, MeanFieldError> {
    if !(tol > 0.0) {
        return Err(MeanFieldError::BadTolerance(tol));
    }
    if d >= 1.0 {
        return Ok(0);
    }
    let t = ((tol * d / ell as f64).ln() / (1.0 - d).ln()).ceil();
    Ok(if t > 0.0 { t as usize } else { 0 })
}

/// Draws from the stationary law of a typical vertex's opinion.
#[derive(Clone, Debug)]
pub struct StationarySampler {
    pub horizon: usize,
    /// `Σ_{t=1}^{T} Σ_{s=1}^{t} a(s,t) (M^s W̄)`, one row per community.
    pub drift: Mat,
    isolation: Vec<f64>,
    keep: f64,
}

impl StationarySampler {
    pub fn new(model: &MeanFieldModel, flavor: Flavor, tol: f64) -> Result<Self, MeanFieldError> {
        let horizon = stationary_horizon(tol, model.d, model.ell)?;
        let a = Coefficients::new(horizon, model.c, model.d);
        let m = model.matrix(flavor);
        let mut mw = model.w_bar.clone();
        let mut powers = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            mw = m.matmul(&mw);
            powers.push(mw.clone());
        }
        let mut drift = Mat::zeros(model.k, model.ell);
        for t in 1..=horizon {
            for s in 1..=t {
                drift.axpy(a.get(s, t), &powers[s - 1]);
            }
        }
        Ok(StationarySampler {
            horizon,
            drift,
            isolation: model.isolation.clone(),
            keep: 1.0 - model.c - model.d,
        })
    }

    /// One draw for community `r`: the vertex's belief and isolation are
    /// fixed, then `W(0..=T)` are drawn i.i.d.
    pub fn sample<R: Rng + ?Sized>(&self, spec: &ModelSpec, r: usize, rng: &mut R) -> Vec<f64> {
        let ell = spec.ell;
        let mut q = vec![0.0; ell];
        spec.beliefs[r].sample_into(rng, &mut q);
        let isolated = self.isolation[r] > 0.0 && rng.random::<f64>() < self.isolation[r];
        let mut z = vec![0.0; ell];
        let mut w = vec![0.0; ell];
        let mut out = self.drift.row(r).to_vec();
        let mut factor = 1.0;
        for _ in 0..=self.horizon {
            signal_draw(spec, r, &q, isolated, rng, &mut z, &mut w);
            for (o, x) in out.iter_mut().zip(&w) {
                *o += factor * x;
            }
            factor *= self.keep;
        }
        out
    }
}

/// Independent draws of a typical vertex's mean-field path
/// `𝓡(0..=k_max)`; the vertex's belief, isolation indicator and initial
/// opinion are drawn first, then its signals.
#[derive(Clone, Debug)]
pub struct PathSampler {
    pub k_max: usize,
    drift: Vec<Mat>,
    isolation: Vec<f64>,
    keep: f64,
}

impl PathSampler {
    pub fn new(model: &MeanFieldModel, flavor: Flavor, k_max: usize) -> Self {
        PathSampler {
            k_max,
            drift: model.drift(flavor, k_max),
            isolation: model.isolation.clone(),
            keep: 1.0 - model.c - model.d,
        }
    }

    /// `ℓ × (k_max+1)` path for community `r`.
    pub fn sample<R: Rng + ?Sized>(&self, spec: &ModelSpec, r: usize, rng: &mut R) -> Result<Mat, MeanFieldError> {
        let ell = spec.ell;
        let mut q = vec![0.0; ell];
        spec.beliefs[r].sample_into(rng, &mut q);
        let isolated = self.isolation[r] > 0.0 && rng.random::<f64>() < self.isolation[r];
        let mut u = match &spec.initial {
            InitialLaw::Beliefs => q.clone(),
            InitialLaw::Dist { per_community } => {
                let mut x = vec![0.0; ell];
                per_community[r].sample_into(rng, &mut x);
                x
            }
        };
        let (mut z, mut w) = (vec![0.0; ell], vec![0.0; ell]);
        let mut out = Mat::zeros(ell, self.k_max + 1);
        for k in 0..=self.k_max {
            if k > 0 {
                signal_draw(spec, r, &q, isolated, rng, &mut z, &mut w);
                for (x, y) in u.iter_mut().zip(&w) {
                    *x = self.keep * *x + y;
                }
            }
            for t in 0..ell {
                let x = u[t] + self.drift[k].get(r, t);
                if !(x.abs() <= 1.0 + RANGE_SLACK) {
                    return Err(MeanFieldError::OutOfRange { vertex: r, topic: t, value: x });
                }
                out.set(t, k, x);
            }
        }
        Ok(out)
    }
}

/// A single stationary draw for community `r` from stream `(Stationary, [r])`.
pub fn sample_stationary(
    r: usize,
    spec: &ModelSpec,
    model: &MeanFieldModel,
    tol: f64,
    seed: u64,
) -> Result<Vec<f64>, MeanFieldError> {
    let sampler = StationarySampler::new(model, Flavor::MeanField, tol)?;
    let mut rng: SimRng = stream(seed, Purpose::Stationary, &[r as u64]);
    Ok(sampler.sample(spec, r, &mut rng))
}
