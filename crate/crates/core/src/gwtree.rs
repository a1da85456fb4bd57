//! Marked `K`-type Galton–Watson trees, their normalized path weights and a
//! tree-likeness check for graph in-neighbourhoods.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::dist::ScalarDist;
use crate::exec::Exec;
use crate::graph::GraphSample;
use crate::linalg::Mat;
use crate::rng::{stream, Purpose, SimRng};
use crate::spec::ModelSpec;
use crate::stats::Estimate;

pub const DEFAULT_NODE_BUDGET: f64 = 1e6;

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("expected tree size {expected:.3e} exceeds the node budget {budget:.3e}")]
    BudgetExceeded { expected: f64, budget: f64 },
    #[error("generation {s} requested from a tree of depth {depth}")]
    TooShallow { s: usize, depth: usize },
    #[error("marks have {got} rows, generation has {want} nodes")]
    MarkShape { got: usize, want: usize },
    #[error("replications must be positive")]
    NoReplications,
}

/// Offspring means and edge-weight laws.
#[derive(Clone, Debug)]
pub struct TreeParams {
    pub k: usize,
    /// `q[s][r] = κ(s, r) π_s θ`: mean number of type-`s` children of a
    /// type-`r` node.
    pub q: Vec<Vec<f64>>,
    /// `weights[r][s]`: law of the weight a type-`r` parent puts on a type-`s`
    /// child.
    pub weights: Vec<Vec<ScalarDist>>,
    poisson: Vec<Vec<Option<Poisson<f64>>>>,
}

impl TreeParams {
    pub fn new(spec: &ModelSpec, pi_hat: &[f64], theta: f64) -> Self {
        let k = spec.k;
        let q: Vec<Vec<f64>> = (0..k)
            .map(|s| (0..k).map(|r| spec.kappa[s][r] * pi_hat[s] * theta).collect())
            .collect();
        Self::from_q(q, spec.weights.clone())
    }

    pub fn from_q(q: Vec<Vec<f64>>, weights: Vec<Vec<ScalarDist>>) -> Self {
        let poisson = q
            .iter()
            .map(|row| row.iter().map(|&m| (m > 0.0).then(|| Poisson::new(m).expect("finite mean"))).collect())
            .collect();
        TreeParams { k: q.len(), q, weights, poisson }
    }

    /// Expected number of nodes in generations `0..=depth` below a root of
    /// type `root`.
    pub fn expected_size(&self, root: usize, depth: usize) -> f64 {
        let mut gen = vec![0.0; self.k];
        gen[root] = 1.0;
        let mut total = 1.0;
        for _ in 0..depth {
            let next: Vec<f64> = (0..self.k).map(|s| (0..self.k).map(|r| self.q[s][r] * gen[r]).sum()).collect();
            total += next.iter().sum::<f64>();
            gen = next;
        }
        total
    }

    fn check_budget(&self, root: usize, depth: usize, budget: f64) -> Result<(), TreeError> {
        let expected = self.expected_size(root, depth);
        if expected > budget {
            return Err(TreeError::BudgetExceeded { expected, budget });
        }
        Ok(())
    }

    /// Per-type offspring counts of one node.
    fn counts<R: Rng + ?Sized>(&self, parent: usize, rng: &mut R, counts: &mut [u32]) {
        for (s, c) in counts.iter_mut().enumerate() {
            *c = match &self.poisson[s][parent] {
                Some(p) => p.sample(rng) as u32,
                None => 0,
            };
        }
    }

    /// Offspring of one node: per-type counts, then the child types in
    /// uniformly random order with their raw weights.
    fn offspring<R: Rng + ?Sized>(&self, parent: usize, rng: &mut R, counts: &mut [u32], kids: &mut Vec<(usize, f64)>) {
        self.counts(parent, rng, counts);
        self.arrange(parent, rng, counts, kids);
    }

    fn arrange<R: Rng + ?Sized>(&self, parent: usize, rng: &mut R, counts: &[u32], kids: &mut Vec<(usize, f64)>) {
        kids.clear();
        for (s, &n) in counts.iter().enumerate() {
            kids.extend(std::iter::repeat_n((s, 0.0), n as usize));
        }
        if counts.iter().filter(|&&c| c > 0).count() > 1 {
            kids.shuffle(rng);
        }
        for kid in kids.iter_mut() {
            kid.1 = self.weights[parent][kid.0].sample(rng);
        }
    }
}

/// One generation, stored in Ulam–Harris order: node `v` is child number
/// `ordinal[v]` (0-based) of node `parent[v]` in the previous generation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Generation {
    pub types: Vec<usize>,
    pub parent: Vec<u32>,
    pub ordinal: Vec<u32>,
    /// Raw weight on the edge from the parent.
    pub b_hat: Vec<f64>,
    /// Normalized weight `Ĉ`.
    pub c_hat: Vec<f64>,
    /// Path weight `Π`.
    pub pi: Vec<f64>,
    /// `K` offspring counts per node; empty for the deepest generation.
    pub offspring: Vec<u32>,
}

impl Generation {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct GWTree {
    pub k: usize,
    pub depth: usize,
    pub generations: Vec<Generation>,
}

impl GWTree {
    /// Ulam–Harris label of node `v` in generation `g` (1-based ordinals).
    pub fn label(&self, g: usize, mut v: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(g);
        for level in (1..=g).rev() {
            let gen = &self.generations[level];
            out.push(gen.ordinal[v] + 1);
            v = gen.parent[v] as usize;
        }
        out.reverse();
        out
    }

    pub fn size(&self) -> usize {
        self.generations.iter().map(Generation::len).sum()
    }

    /// `Σ_{|i|=s} Π_i`.
    pub fn generation_mass(&self, s: usize) -> f64 {
        self.generations.get(s).map_or(0.0, |g| g.pi.iter().sum())
    }
}

/// Builds generation `g+1` from generation `g`, recording the offspring
/// counts on `parents`.
fn grow<R: Rng + ?Sized>(params: &TreeParams, parents: &mut Generation, rng: &mut R) -> Generation {
    let k = params.k;
    let mut next = Generation::default();
    parents.offspring = vec![0; parents.len() * k];
    let mut kids = Vec::new();
    for v in 0..parents.len() {
        let counts = &mut parents.offspring[v * k..(v + 1) * k];
        params.offspring(parents.types[v], rng, counts, &mut kids);
        let total: f64 = kids.iter().map(|x| x.1).sum();
        for (o, &(s, b)) in kids.iter().enumerate() {
            let c = if total > 0.0 { b / total } else { 0.0 };
            next.types.push(s);
            next.parent.push(v as u32);
            next.ordinal.push(o as u32);
            next.b_hat.push(b);
            next.c_hat.push(c);
            next.pi.push(parents.pi[v] * c);
        }
    }
    next
}

fn root(r: usize) -> Generation {
    Generation { types: vec![r], parent: vec![0], ordinal: vec![0], b_hat: vec![0.0], c_hat: vec![1.0], pi: vec![1.0], offspring: vec![] }
}

/// Samples a tree of the given depth below a root of type `root_type`.
pub fn sample_tree<R: Rng + ?Sized>(
    params: &TreeParams,
    root_type: usize,
    depth: usize,
    budget: f64,
    rng: &mut R,
) -> Result<GWTree, TreeError> {
    params.check_budget(root_type, depth, budget)?;
    let mut generations = vec![root(root_type)];
    for g in 0..depth {
        let next = grow(params, &mut generations[g], rng);
        generations.push(next);
    }
    Ok(GWTree { k: params.k, depth, generations })
}

/// Draws one scalar mark per node of generation `s` from the law of its type.
pub fn sample_marks<R: Rng + ?Sized>(tree: &GWTree, s: usize, laws: &[ScalarDist], rng: &mut R) -> Vec<f64> {
    tree.generations[s].types.iter().map(|&t| laws[t].sample(rng)).collect()
}

/// `Σ_{|i|=s} Π_i X̂_i` per topic; `marks` has one row per node of generation `s`.
pub fn weighted_generation_sum(tree: &GWTree, s: usize, marks: &Mat) -> Result<Vec<f64>, TreeError> {
    if s > tree.depth {
        return Err(TreeError::TooShallow { s, depth: tree.depth });
    }
    let gen = &tree.generations[s];
    if marks.rows != gen.len() {
        return Err(TreeError::MarkShape { got: marks.rows, want: gen.len() });
    }
    let mut out = vec![0.0; marks.cols];
    for (v, p) in gen.pi.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(marks.row(v)) {
            *o += p * x;
        }
    }
    Ok(out)
}

/// Per-type marks expanded to generation `s`.
pub fn marks_by_type(tree: &GWTree, s: usize, x: &Mat) -> Mat {
    let gen = &tree.generations[s];
    let mut out = Mat::zeros(gen.len(), x.cols);
    for (v, &t) in gen.types.iter().enumerate() {
        out.row_mut(v).copy_from_slice(x.row(t));
    }
    out
}

/// Tree structure for replication `rep` uses stream `(Tree, [root, rep])`;
/// the marks of generation `s` use `(TreeValues, [root, rep, s])`.
fn tree_rng(seed: u64, root: usize, rep: usize) -> SimRng {
    stream(seed, Purpose::Tree, &[root as u64, rep as u64])
}

fn mark_rng(seed: u64, root: usize, rep: usize, s: usize) -> SimRng {
    stream(seed, Purpose::TreeValues, &[root as u64, rep as u64, s as u64])
}

/// `Σ_{|i|=s} Π_i X̂_i` for `s = 1..=s_max` on one tree, keeping only one
/// generation in memory and never storing the deepest one.
///
/// Draws the same random numbers as [`sample_tree`] followed by
/// [`sample_marks`] on the matching streams; results agree up to rounding.
pub fn streamed_generation_sums(
    params: &TreeParams,
    root_type: usize,
    s_max: usize,
    laws: &[ScalarDist],
    seed: u64,
    rep: usize,
) -> Vec<f64> {
    let mut rng = tree_rng(seed, root_type, rep);
    let mut types = vec![root_type];
    let mut pis = vec![1.0];
    let mut sums = Vec::with_capacity(s_max);
    let mut counts = vec![0u32; params.k];
    let mut kids = Vec::new();
    for s in 1..=s_max {
        let mut marks = mark_rng(seed, root_type, rep, s);
        let last = s == s_max;
        let mut next_types = Vec::new();
        let mut next_pis = Vec::new();
        let mut sum = 0.0;
        for (&t, &p) in types.iter().zip(&pis) {
            params.counts(t, &mut rng, &mut counts);
            let mut present = counts.iter().enumerate().filter(|x| *x.1 > 0);
            if let (true, Some((child, &n)), None) = (last, present.next(), present.next()) {
                // deepest generation with a single child type: no shuffle
                // needed, accumulate Σ b·x and Σ b directly
                let (w_law, x_law) = (&params.weights[t][child], &laws[child]);
                let (mut bw, mut bx) = (0.0, 0.0);
                if let ScalarDist::Point { value } = w_law {
                    for _ in 0..n {
                        bx += x_law.sample(&mut marks);
                    }
                    bw = n as f64 * value;
                    bx *= value;
                } else {
                    for _ in 0..n {
                        let b = w_law.sample(&mut rng);
                        bw += b;
                        bx += b * x_law.sample(&mut marks);
                    }
                }
                if bw > 0.0 {
                    sum += p * (bx / bw);
                }
                continue;
            }
            params.arrange(t, &mut rng, &counts, &mut kids);
            let total: f64 = kids.iter().map(|x| x.1).sum();
            for &(child, b) in &kids {
                let pi = if total > 0.0 { p * (b / total) } else { 0.0 };
                sum += pi * laws[child].sample(&mut marks);
                if !last {
                    next_types.push(child);
                    next_pis.push(pi);
                }
            }
        }
        sums.push(sum);
        types = next_types;
        pis = next_pis;
    }
    sums
}

/// Monte Carlo estimates of `a_s(r) = E|Σ_{|i|=s} Π_i X̂_i − (M̆^s x)_r|`
/// for `s = 1..=s_max` from the same trees; `x` is the vector of mark means.
#[allow(clippy::too_many_arguments)]
pub fn estimate_a(
    params: &TreeParams,
    root_type: usize,
    s_max: usize,
    laws: &[ScalarDist],
    m_breve: &Mat,
    replications: usize,
    seed: u64,
    budget: f64,
    exec: Exec,
) -> Result<Vec<Estimate>, TreeError> {
    if replications == 0 {
        return Err(TreeError::NoReplications);
    }
    params.check_budget(root_type, s_max.saturating_sub(1), budget)?;
    let x = Mat::from_rows(&laws.iter().map(|l| vec![l.mean()]).collect::<Vec<_>>());
    let mut targets = Vec::with_capacity(s_max);
    let mut mx = x;
    for _ in 0..s_max {
        mx = m_breve.matmul(&mx);
        targets.push(mx.get(root_type, 0));
    }
    let sums = exec.map(replications, |rep| streamed_generation_sums(params, root_type, s_max, laws, seed, rep));
    Ok((0..s_max)
        .map(|s| {
            let dev: Vec<f64> = sums.iter().map(|v| (v[s] - targets[s]).abs()).collect();
            Estimate::from_samples(&dev)
        })
        .collect())
}

/// Single-`s` form of [`estimate_a`].
#[allow(clippy::too_many_arguments)]
pub fn estimate_a_s(
    params: &TreeParams,
    root_type: usize,
    s: usize,
    laws: &[ScalarDist],
    m_breve: &Mat,
    replications: usize,
    seed: u64,
    exec: Exec,
) -> Result<Estimate, TreeError> {
    if s == 0 {
        let x = laws[root_type].mean();
        let dev: Vec<f64> = (0..replications)
            .map(|rep| (laws[root_type].sample(&mut mark_rng(seed, root_type, rep, 0)) - x).abs())
            .collect();
        return Ok(Estimate::from_samples(&dev));
    }
    let all = estimate_a(params, root_type, s, laws, m_breve, replications, seed, DEFAULT_NODE_BUDGET, exec)?;
    Ok(all[s - 1])
}

/// Materialized counterpart of the sums used by [`estimate_a`].
pub fn materialized_generation_sums(
    params: &TreeParams,
    root_type: usize,
    s_max: usize,
    laws: &[ScalarDist],
    seed: u64,
    rep: usize,
    budget: f64,
) -> Result<Vec<f64>, TreeError> {
    // the deepest generation's offspring are never drawn
    let tree = sample_tree(params, root_type, s_max, budget, &mut tree_rng(seed, root_type, rep))?;
    (1..=s_max)
        .map(|s| {
            let marks = sample_marks(&tree, s, laws, &mut mark_rng(seed, root_type, rep, s));
            let m = Mat { rows: marks.len(), cols: 1, data: marks };
            weighted_generation_sum(&tree, s, &m).map(|v| v[0])
        })
        .collect()
}

/// Depth-by-depth exploration of a vertex's in-neighbourhood.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeighborhoodDiagnostic {
    pub vertex: usize,
    /// `is_tree[g]`: no vertex reached twice within generations `0..=g`.
    pub is_tree: Vec<bool>,
    /// Community census of each generation, while it is still a tree.
    pub census: Vec<Vec<usize>>,
    /// In-degrees of each generation's vertices, while it is still a tree.
    pub in_degrees: Vec<Vec<usize>>,
}

impl NeighborhoodDiagnostic {
    pub fn tree_to_depth(&self) -> bool {
        self.is_tree.last().copied().unwrap_or(true)
    }
}

pub fn neighborhood_diagnostic(graph: &GraphSample, vertex: usize, depth: usize) -> NeighborhoodDiagnostic {
    let k = graph.labels.k;
    let mut seen = HashSet::from([vertex as u32]);
    let mut frontier = vec![vertex as u32];
    let mut out = NeighborhoodDiagnostic { vertex, is_tree: vec![true], census: vec![], in_degrees: vec![] };
    let mut census = vec![0; k];
    census[graph.labels.of[vertex]] += 1;
    out.census.push(census);
    out.in_degrees.push(vec![graph.in_degree(vertex)]);
    let mut tree = true;
    for _ in 0..depth {
        let mut next = Vec::new();
        if tree {
            'scan: for &v in &frontier {
                for &j in graph.in_neighbors(v as usize) {
                    if !seen.insert(j) {
                        tree = false;
                        break 'scan;
                    }
                    next.push(j);
                }
            }
        }
        out.is_tree.push(tree);
        if tree {
            let mut census = vec![0; k];
            for &j in &next {
                census[graph.labels.of[j as usize]] += 1;
            }
            out.census.push(census);
            out.in_degrees.push(next.iter().map(|&j| graph.in_degree(j as usize)).collect());
        }
        frontier = next;
    }
    out
}

/// Share of vertices whose depth-`depth` in-neighbourhood is not a tree.
pub fn non_tree_fraction(graph: &GraphSample, depth: usize, exec: Exec) -> f64 {
    let n = graph.n();
    if n == 0 {
        return 0.0;
    }
    let bad = exec.map(n, |i| !neighborhood_diagnostic(graph, i, depth).tree_to_depth());
    bad.iter().filter(|&&b| b).count() as f64 / n as f64
}
