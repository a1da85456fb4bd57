//! Directed stochastic block model sampling and the row-normalized
//! influence matrix.
//!
//! An edge `j → i` means vertex `i` listens to `j`. Graphs are stored as
//! in-adjacency lists because the opinion update is a gather over each
//! vertex's in-neighbours.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::exec::Exec;
use crate::linalg::Mat;
use crate::rng::{stream, Purpose};
use crate::spec::{LabelMode, ModelSpec};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("vertex count must be at least 1")]
    EmptyPopulation,
    #[error("label {label} at vertex {vertex} is out of range for {k} communities")]
    LabelOutOfRange { vertex: usize, label: usize, k: usize },
    #[error("density parameter must be positive, got {0}")]
    BadTheta(f64),
    #[error("malformed graph dump at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Community labels of a population, with the per-community census.
#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    pub k: usize,
    pub of: Vec<usize>,
    pub census: Vec<usize>,
    /// Vertex ids per community, ascending.
    pub members: Vec<Vec<u32>>,
}

impl Labels {
    pub fn from_vec(of: Vec<usize>, k: usize) -> Result<Self, GraphError> {
        if of.is_empty() {
            return Err(GraphError::EmptyPopulation);
        }
        let mut census = vec![0; k];
        let mut members = vec![Vec::new(); k];
        for (i, &r) in of.iter().enumerate() {
            if r >= k {
                return Err(GraphError::LabelOutOfRange { vertex: i, label: r, k });
            }
            census[r] += 1;
            members[r].push(i as u32);
        }
        Ok(Labels { k, of, census, members })
    }

    pub fn n(&self) -> usize {
        self.of.len()
    }

    /// Empirical shares `π_r^(n) = census_r / n`.
    pub fn shares(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.census.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Exact census divided by `n`.
pub fn empirical_shares(labels: &[usize], k: usize) -> Result<Vec<f64>, GraphError> {
    Ok(Labels::from_vec(labels.to_vec(), k)?.shares())
}

/// Draws community labels for `n` vertices according to the spec's label mode.
pub fn sample_labels(spec: &ModelSpec, n: usize, seed: u64) -> Result<Labels, GraphError> {
    if n == 0 {
        return Err(GraphError::EmptyPopulation);
    }
    let mut rng = stream(seed, Purpose::Labels, &[n as u64]);
    let of = match spec.label_mode {
        LabelMode::Iid => {
            let cdf: Vec<f64> = spec
                .pi
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            (0..n)
                .map(|_| {
                    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
                    cdf.iter().position(|&c| u < c).unwrap_or(spec.k - 1)
                })
                .collect()
        }
        LabelMode::Fixed => {
            let exact: Vec<f64> = spec.pi.iter().map(|p| p * n as f64).collect();
            let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
            let mut order: Vec<usize> = (0..spec.k).collect();
            order.sort_by(|&a, &b| {
                let fa = exact[a] - exact[a].floor();
                let fb = exact[b] - exact[b].floor();
                fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
            });
            let mut missing = n - counts.iter().sum::<usize>();
            for &r in order.iter().cycle() {
                if missing == 0 {
                    break;
                }
                counts[r] += 1;
                missing -= 1;
            }
            let mut of: Vec<usize> = counts
                .iter()
                .enumerate()
                .flat_map(|(r, &c)| std::iter::repeat_n(r, c))
                .collect();
            of.shuffle(&mut rng);
            of
        }
    };
    Labels::from_vec(of, spec.k)
}

/// One realized graph with vertex attributes.
#[derive(Clone, Debug)]
pub struct GraphSample {
    pub labels: Arc<Labels>,
    pub theta: f64,
    pub ell: usize,
    /// CSR offsets into `sources` / `weights`, length `n + 1`.
    pub offsets: Vec<usize>,
    /// In-neighbours `j` of each vertex `i` (edges `j → i`), ascending.
    pub sources: Vec<u32>,
    /// Unnormalized weight `B_ij` for the matching entry of `sources`.
    pub weights: Vec<f64>,
    /// Internal beliefs, `n × ell`.
    pub beliefs: Mat,
}

impl GraphSample {
    pub fn n(&self) -> usize {
        self.labels.n()
    }

    pub fn in_neighbors(&self, i: usize) -> &[u32] {
        &self.sources[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn in_weights(&self, i: usize) -> &[f64] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn edge_count(&self) -> usize {
        self.sources.len()
    }

    pub fn mean_in_degree(&self) -> f64 {
        self.edge_count() as f64 / self.n() as f64
    }

    /// Writes the text dump: header `n K`, then one `i J_i Q_i1 … Q_iℓ`
    /// line per vertex, then one `i j B_ij` line per edge `j → i`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {}", self.n(), self.labels.k)?;
        let mut line = String::new();
        for i in 0..self.n() {
            line.clear();
            write!(line, "{} {}", i, self.labels.of[i]).unwrap();
            for q in self.beliefs.row(i) {
                write!(line, " {q}").unwrap();
            }
            writeln!(out, "{line}")?;
        }
        for i in 0..self.n() {
            for (j, b) in self.in_neighbors(i).iter().zip(self.in_weights(i)) {
                writeln!(out, "{i} {j} {b}")?;
            }
        }
        Ok(())
    }

    /// Parses a dump written by [`GraphSample::write_dump`]. `ell` is inferred
    /// from the vertex lines; `theta` is not part of the format and is set to
    /// `f64::NAN`.
    pub fn read_dump<R: BufRead>(input: R) -> Result<Self, GraphError> {
        let mut lines = input.lines().enumerate();
        let parse_err = |line: usize, reason: &str| GraphError::Parse { line: line + 1, reason: reason.into() };
        let (l0, header) = lines.next().ok_or_else(|| parse_err(0, "missing header"))?;
        let header = header?;
        let mut it = header.split_whitespace();
        let n: usize = it.next().and_then(|x| x.parse().ok()).ok_or_else(|| parse_err(l0, "bad n"))?;
        let k: usize = it.next().and_then(|x| x.parse().ok()).ok_or_else(|| parse_err(l0, "bad K"))?;
        let mut of = Vec::with_capacity(n);
        let mut belief_rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for expect in 0..n {
            let (ln, line) = lines.next().ok_or_else(|| parse_err(expect + 1, "missing vertex line"))?;
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 2 || fields[0].parse::<usize>().ok() != Some(expect) {
                return Err(parse_err(ln, "expected vertex line"));
            }
            of.push(fields[1].parse().map_err(|_| parse_err(ln, "bad community"))?);
            let q: Result<Vec<f64>, _> = fields[2..].iter().map(|x| x.parse::<f64>()).collect();
            belief_rows.push(q.map_err(|_| parse_err(ln, "bad belief"))?);
        }
        let ell = belief_rows.first().map_or(0, Vec::len);
        if belief_rows.iter().any(|r| r.len() != ell) {
            return Err(parse_err(1, "inconsistent belief dimension"));
        }
        let mut edges: Vec<(usize, u32, f64)> = Vec::new();
        for (ln, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err(ln, "expected `i j B_ij`"));
            }
            let i: usize = f[0].parse().map_err(|_| parse_err(ln, "bad i"))?;
            let j: u32 = f[1].parse().map_err(|_| parse_err(ln, "bad j"))?;
            let b: f64 = f[2].parse().map_err(|_| parse_err(ln, "bad weight"))?;
            if i >= n || j as usize >= n || i == j as usize {
                return Err(parse_err(ln, "edge endpoint out of range or self-loop"));
            }
            edges.push((i, j, b));
        }
        edges.sort_by_key(|e| (e.0, e.1));
        let mut offsets = vec![0usize; n + 1];
        for e in &edges {
            offsets[e.0 + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Ok(GraphSample {
            labels: Arc::new(Labels::from_vec(of, k)?),
            theta: f64::NAN,
            ell,
            offsets,
            sources: edges.iter().map(|e| e.1).collect(),
            weights: edges.iter().map(|e| e.2).collect(),
            beliefs: Mat { rows: n, cols: ell, data: belief_rows.concat() },
        })
    }
}

// Per-pair Bernoulli draws above this edge probability, geometric skipping below.
const DENSE_PAIR_PROBABILITY: f64 = 0.25;

/// Samples edges, weights and beliefs given the labels.
///
/// Vertex `i`'s in-edges and weights come from stream `(Edges, [i])` and its
/// belief from `(Beliefs, [i])`, both under `seed`.
pub fn sample_graph(
    spec: &ModelSpec,
    labels: Arc<Labels>,
    theta: f64,
    seed: u64,
    exec: Exec,
) -> Result<GraphSample, GraphError> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(GraphError::BadTheta(theta));
    }
    let n = labels.n();
    let ell = spec.ell;
    let rows: Vec<(Vec<u32>, Vec<f64>)> = exec.map(n, |i| {
        let r = labels.of[i];
        let mut rng = stream(seed, Purpose::Edges, &[i as u64]);
        let mut pairs: Vec<(u32, f64)> = Vec::new();
        for s in 0..spec.k {
            let p = spec.edge_probability(s, r, theta, n);
            if p <= 0.0 {
                continue;
            }
            let pool = &labels.members[s];
            let law = &spec.weights[r][s];
            let mut take = |j: u32, rng: &mut crate::rng::SimRng| {
                if j as usize != i {
                    pairs.push((j, law.sample(rng)));
                }
            };
            if p >= 1.0 {
                for &j in pool {
                    take(j, &mut rng);
                }
            } else if p >= DENSE_PAIR_PROBABILITY {
                for &j in pool {
                    if rng.random::<f64>() < p {
                        take(j, &mut rng);
                    }
                }
            } else {
                // gap ~ Geometric(p) on {0, 1, ...}
                let log_q = (-p).ln_1p();
                let mut pos: usize = 0;
                loop {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let gap = (u.ln() / log_q).floor();
                    if gap >= (pool.len() - pos) as f64 {
                        break;
                    }
                    pos += gap as usize;
                    take(pool[pos], &mut rng);
                    pos += 1;
                    if pos >= pool.len() {
                        break;
                    }
                }
            }
        }
        pairs.sort_unstable_by_key(|p| p.0);
        pairs.into_iter().unzip()
    });
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let total: usize = rows.iter().map(|r| r.0.len()).sum();
    let mut sources = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for (s, w) in rows {
        sources.extend_from_slice(&s);
        weights.extend_from_slice(&w);
        offsets.push(sources.len());
    }
    let mut beliefs = Mat::zeros(n, ell);
    exec.for_each_row_mut(&mut beliefs.data, ell, |i, row| {
        let mut rng = stream(seed, Purpose::Beliefs, &[i as u64]);
        spec.beliefs[labels.of[i]].sample_into(&mut rng, row);
    });
    Ok(GraphSample { labels, theta, ell, offsets, sources, weights, beliefs })
}

#[derive(Clone, Debug)]
pub enum Storage {
    Sparse { offsets: Vec<usize>, cols: Vec<u32>, vals: Vec<f64> },
    Dense { vals: Vec<f64> },
}

/// Row-normalized influence matrix `C`. Each row sums to 1, or is entirely
/// zero when the vertex has no in-neighbours or all its in-weights vanish.
#[derive(Clone, Debug)]
pub struct RowStochasticMatrix {
    pub n: usize,
    pub storage: Storage,
    /// `d_i^- = 0`.
    pub no_in_neighbors: Vec<bool>,
}

impl RowStochasticMatrix {
    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense { .. })
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        match &self.storage {
            Storage::Sparse { offsets, vals, .. } => vals[offsets[i]..offsets[i + 1]].iter().sum(),
            Storage::Dense { vals } => vals[i * self.n..(i + 1) * self.n].iter().sum(),
        }
    }

    /// `out_i = Σ_j C_ij x_j` for a single row, `x` being `n × ell`.
    #[inline]
    pub fn gather_row(&self, i: usize, x: &Mat, out: &mut [f64]) {
        out.fill(0.0);
        let ell = x.cols;
        match &self.storage {
            Storage::Sparse { offsets, cols, vals } => {
                for e in offsets[i]..offsets[i + 1] {
                    let w = vals[e];
                    let src = &x.data[cols[e] as usize * ell..(cols[e] as usize + 1) * ell];
                    for (o, v) in out.iter_mut().zip(src) {
                        *o += w * v;
                    }
                }
            }
            Storage::Dense { vals } => {
                let row = &vals[i * self.n..(i + 1) * self.n];
                for (j, &w) in row.iter().enumerate() {
                    if w != 0.0 {
                        let src = &x.data[j * ell..(j + 1) * ell];
                        for (o, v) in out.iter_mut().zip(src) {
                            *o += w * v;
                        }
                    }
                }
            }
        }
    }

    /// `C · x`.
    pub fn apply(&self, x: &Mat, exec: Exec) -> Mat {
        assert_eq!(x.rows, self.n, "dimension mismatch");
        let mut out = Mat::zeros(self.n, x.cols);
        exec.for_each_row_mut(&mut out.data, x.cols, |i, row| self.gather_row(i, x, row));
        out
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.n, self.n);
        match &self.storage {
            Storage::Sparse { offsets, cols, vals } => {
                for i in 0..self.n {
                    for e in offsets[i]..offsets[i + 1] {
                        m.set(i, cols[e] as usize, vals[e]);
                    }
                }
            }
            Storage::Dense { vals } => m.data.copy_from_slice(vals),
        }
        m
    }
}

/// Normalizes the in-weights of every vertex.
pub fn normalize_weights(graph: &GraphSample) -> RowStochasticMatrix {
    let n = graph.n();
    let no_in_neighbors: Vec<bool> = (0..n).map(|i| graph.in_degree(i) == 0).collect();
    let mut vals = graph.weights.clone();
    for i in 0..n {
        let row = &mut vals[graph.offsets[i]..graph.offsets[i + 1]];
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|w| *w /= total);
        } else {
            row.fill(0.0);
        }
    }
    let storage = if graph.mean_in_degree() > n as f64 / 4.0 {
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            for e in graph.offsets[i]..graph.offsets[i + 1] {
                dense[i * n + graph.sources[e] as usize] = vals[e];
            }
        }
        Storage::Dense { vals: dense }
    } else {
        Storage::Sparse { offsets: graph.offsets.clone(), cols: graph.sources.clone(), vals }
    };
    RowStochasticMatrix { n, storage, no_in_neighbors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ScalarDist;

    fn hand_graph(rows: &[Vec<(u32, f64)>]) -> GraphSample {
        let n = rows.len();
        let mut offsets = vec![0];
        let mut sources = Vec::new();
        let mut weights = Vec::new();
        for r in rows {
            for &(j, b) in r {
                sources.push(j);
                weights.push(b);
            }
            offsets.push(sources.len());
        }
        GraphSample {
            labels: Arc::new(Labels::from_vec(vec![0; n], 1).unwrap()),
            theta: 1.0,
            ell: 1,
            offsets,
            sources,
            weights,
            beliefs: Mat::zeros(n, 1),
        }
    }

    #[test]
    fn single_community_labels() {
        let spec = ModelSpec::simple(vec![1.0], vec![vec![1.0]], 1, 0.3, 0.2);
        let l = sample_labels(&spec, 5, 1).unwrap();
        assert_eq!(l.of, vec![0; 5]);
        assert_eq!(l.shares(), vec![1.0]);
    }

    #[test]
    fn degenerate_share_vector() {
        // π = (1, 0) is rejected by spec validation but the sampler itself honours it.
        let mut spec = ModelSpec::simple(vec![0.5, 0.5], vec![vec![1.0; 2]; 2], 1, 0.3, 0.2);
        spec.pi = vec![1.0, 0.0];
        let l = sample_labels(&spec, 10, 4).unwrap();
        assert!(l.of.iter().all(|&r| r == 0));
        spec.label_mode = LabelMode::Fixed;
        let l = sample_labels(&spec, 10, 4).unwrap();
        assert_eq!(l.census, vec![10, 0]);
    }

    #[test]
    fn zero_population_rejected() {
        let spec = ModelSpec::simple(vec![1.0], vec![vec![1.0]], 1, 0.3, 0.2);
        assert!(matches!(sample_labels(&spec, 0, 1), Err(GraphError::EmptyPopulation)));
        assert!(empirical_shares(&[], 1).is_err());
    }

    #[test]
    fn fixed_composition_is_exact() {
        let mut spec = ModelSpec::simple(vec![0.3, 0.7], vec![vec![1.0; 2]; 2], 1, 0.3, 0.2);
        spec.label_mode = LabelMode::Fixed;
        let l = sample_labels(&spec, 101, 9).unwrap();
        assert_eq!(l.census, vec![30, 71]);
    }

    #[test]
    fn empty_kernel_gives_no_edges() {
        let spec = ModelSpec::simple(vec![0.5, 0.5], vec![vec![0.0; 2]; 2], 1, 0.3, 0.2);
        let l = Arc::new(sample_labels(&spec, 50, 1).unwrap());
        let g = sample_graph(&spec, l, 10.0, 2, Exec::Sequential).unwrap();
        assert_eq!(g.edge_count(), 0);
        let c = normalize_weights(&g);
        assert!(c.no_in_neighbors.iter().all(|&b| b));
        assert!((0..50).all(|i| c.row_sum(i) == 0.0));
    }

    #[test]
    fn clipped_kernel_gives_complete_graph() {
        let n = 40;
        let theta = 4.0;
        let spec = ModelSpec::simple(vec![0.5, 0.5], vec![vec![n as f64 / theta; 2]; 2], 1, 0.3, 0.2);
        let l = Arc::new(sample_labels(&spec, n, 1).unwrap());
        let g = sample_graph(&spec, l, theta, 2, Exec::Sequential).unwrap();
        assert_eq!(g.edge_count(), n * (n - 1));
        for i in 0..n {
            assert!(!g.in_neighbors(i).contains(&(i as u32)));
        }
        let c = normalize_weights(&g);
        assert!(c.is_dense());
        for i in 0..n {
            assert!((c.row_sum(i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_cases() {
        let g = hand_graph(&[vec![(1, 1.0), (2, 1.0), (3, 2.0)], vec![(0, 0.7)], vec![], vec![(0, 0.0)]]);
        let c = normalize_weights(&g).to_dense();
        assert_eq!(c.row(0), &[0.0, 0.25, 0.25, 0.5]);
        assert_eq!(c.get(1, 0), 1.0);
        assert_eq!(c.row(2), &[0.0; 4]);
        assert_eq!(c.row(3), &[0.0; 4]);
        let m = normalize_weights(&g);
        assert_eq!(m.no_in_neighbors, vec![false, false, true, false]);
    }

    #[test]
    fn same_seed_same_graph_any_strategy() {
        let spec = ModelSpec::simple(vec![0.4, 0.6], vec![vec![2.0, 1.0], vec![0.5, 3.0]], 2, 0.3, 0.2)
            .with_weights(ScalarDist::uniform(0.0, 1.0));
        let l = Arc::new(sample_labels(&spec, 300, 5).unwrap());
        let a = sample_graph(&spec, l.clone(), 12.0, 11, Exec::Sequential).unwrap();
        let b = sample_graph(&spec, l, 12.0, 11, Exec::Parallel).unwrap();
        assert_eq!(a.sources, b.sources);
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.beliefs, b.beliefs);
    }

    #[test]
    fn dump_round_trip() {
        let spec = ModelSpec::simple(vec![0.5, 0.5], vec![vec![1.0, 2.0], vec![2.0, 1.0]], 2, 0.3, 0.2)
            .with_weights(ScalarDist::uniform(0.0, 1.0));
        let l = Arc::new(sample_labels(&spec, 30, 5).unwrap());
        let g = sample_graph(&spec, l, 6.0, 3, Exec::Sequential).unwrap();
        let mut buf = Vec::new();
        g.write_dump(&mut buf).unwrap();
        let h = GraphSample::read_dump(&buf[..]).unwrap();
        assert_eq!(g.labels.of, h.labels.of);
        assert_eq!(g.offsets, h.offsets);
        assert_eq!(g.sources, h.sources);
        assert_eq!(g.weights, h.weights);
        assert_eq!(g.beliefs, h.beliefs);
    }

    #[test]
    fn dump_rejects_self_loops() {
        let text = "2 1\n0 0 0.5\n1 0 0.1\n1 1 0.3\n";
        assert!(GraphSample::read_dump(text.as_bytes()).is_err());
    }
}
