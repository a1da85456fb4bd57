//! Population-level model parameters.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::dist::{ScalarDist, VecDist};

/// How community labels are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// i.i.d. draws from `pi`.
    #[default]
    Iid,
    /// Exactly `floor(n * pi_r)` vertices per community, remainder assigned
    /// by largest fractional part, then randomly permuted.
    Fixed,
}

/// Media-signal law for one community: `Z = λ q + (1 - λ) ξ` with
/// `ξ ~ media` independent of everything else and `q` the vertex's
/// internal belief.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalLaw {
    pub media: VecDist,
    #[serde(default)]
    pub belief_weight: f64,
}

impl SignalLaw {
    pub fn media(media: VecDist) -> Self {
        SignalLaw { media, belief_weight: 0.0 }
    }
}

/// Law of the initial opinion matrix. Rows are identically distributed
/// within each community.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    /// Per-community coordinate law.
    Dist { per_community: Vec<VecDist> },
    /// `R_i(0) = q_i`.
    Beliefs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub k: usize,
    pub pi: Vec<f64>,
    /// `kappa[r][s] = κ(r, s)`; an edge `i → j` has probability
    /// `κ(J_i, J_j) θ / n ∧ 1`.
    pub kappa: Vec<Vec<f64>>,
    pub ell: usize,
    pub c: f64,
    pub d: f64,
    /// Weight cap: every `B_ij ∈ [0, h]`.
    pub h: f64,
    /// `weights[r][s]` is the law `G_{r,s}` of the weight vertex `i` (community
    /// `r`) puts on in-neighbour `j` (community `s`).
    pub weights: Vec<Vec<ScalarDist>>,
    pub beliefs: Vec<VecDist>,
    pub signals: Vec<SignalLaw>,
    pub initial: InitialLaw,
    #[serde(default)]
    pub label_mode: LabelMode,
}

/// One invariant violation, tagged with the key path it concerns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid model specification: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct SpecError(pub Vec<Violation>);

const PI_TOL: f64 = 1e-9;

impl ModelSpec {
    /// A spec with unit weights, uniform beliefs, uniform media signals and
    /// uniform initial opinions on `[-1, 1]`.
    pub fn simple(pi: Vec<f64>, kappa: Vec<Vec<f64>>, ell: usize, c: f64, d: f64) -> Self {
        let k = pi.len();
        let unif = VecDist::iid(ScalarDist::uniform(-1.0, 1.0));
        ModelSpec {
            k,
            pi,
            kappa,
            ell,
            c,
            d,
            h: 1.0,
            weights: vec![vec![ScalarDist::point(1.0); k]; k],
            beliefs: vec![unif.clone(); k],
            signals: vec![SignalLaw::media(unif.clone()); k],
            initial: InitialLaw::Dist { per_community: vec![unif; k] },
            label_mode: LabelMode::Iid,
        }
    }

    /// Sets every weight law to `w`.
    pub fn with_weights(mut self, w: ScalarDist) -> Self {
        self.weights = vec![vec![w; self.k]; self.k];
        self
    }

    pub fn with_signals(mut self, media: VecDist) -> Self {
        self.signals = vec![SignalLaw::media(media); self.k];
        self
    }

    pub fn validated(self) -> Result<Self, SpecError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(SpecError(v))
        }
    }

    /// Every invariant violation, in a stable order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |path: String, message: String| out.push(Violation { path, message });
        let k = self.k;
        if k == 0 {
            push("k".into(), "community count must be at least 1".into());
        }
        if self.pi.len() != k {
            push("pi".into(), format!("expected {k} entries, got {}", self.pi.len()));
        } else {
            let sum: f64 = self.pi.iter().sum();
            if (sum - 1.0).abs() > PI_TOL {
                push("pi".into(), format!("entries must sum to 1, got {sum}"));
            }
            for (r, p) in self.pi.iter().enumerate() {
                if !(*p > 0.0) || !p.is_finite() {
                    push(format!("pi[{r}]"), format!("must be positive, got {p}"));
                }
            }
        }
        if self.kappa.len() != k || self.kappa.iter().any(|row| row.len() != k) {
            push("kappa".into(), format!("must be a {k}x{k} matrix"));
        } else {
            for (r, row) in self.kappa.iter().enumerate() {
                for (s, x) in row.iter().enumerate() {
                    if !(*x >= 0.0) || !x.is_finite() {
                        push(format!("kappa[{r}][{s}]"), format!("must be nonnegative, got {x}"));
                    }
                }
            }
        }
        if self.ell == 0 {
            push("ell".into(), "topic count must be at least 1".into());
        }
        if !(self.d > 0.0) || self.d > 1.0 {
            push("d".into(), format!("must lie in (0, 1], got {}", self.d));
        }
        if !(self.c >= 0.0) {
            push("c".into(), format!("must be nonnegative, got {}", self.c));
        }
        if self.c + self.d > 1.0 + 1e-12 {
            push("c".into(), format!("c + d must not exceed 1, got {}", self.c + self.d));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            push("h".into(), format!("weight cap must be positive, got {}", self.h));
        }
        if self.weights.len() != k || self.weights.iter().any(|row| row.len() != k) {
            push("weights".into(), format!("must be a {k}x{k} table of laws"));
        } else {
            for (r, row) in self.weights.iter().enumerate() {
                for (s, g) in row.iter().enumerate() {
                    if let Err(e) = g.check_support(0.0, self.h) {
                        push(format!("weights[{r}][{s}]"), e);
                    }
                }
            }
        }
        if self.beliefs.len() != k {
            push("beliefs".into(), format!("expected {k} laws, got {}", self.beliefs.len()));
        } else {
            for (r, f) in self.beliefs.iter().enumerate() {
                if let Err(e) = f.check(self.ell, -1.0, 1.0) {
                    push(format!("beliefs[{r}]"), e);
                }
            }
        }
        if self.signals.len() != k {
            push("signals".into(), format!("expected {k} laws, got {}", self.signals.len()));
        } else {
            for (r, s) in self.signals.iter().enumerate() {
                if let Err(e) = s.media.check(self.ell, -1.0, 1.0) {
                    push(format!("signals[{r}].media"), e);
                }
                if !(0.0..=1.0).contains(&s.belief_weight) {
                    push(
                        format!("signals[{r}].belief_weight"),
                        format!("must lie in [0, 1], got {}", s.belief_weight),
                    );
                }
            }
        }
        if let InitialLaw::Dist { per_community } = &self.initial {
            if per_community.len() != k {
                push(
                    "initial.per_community".into(),
                    format!("expected {k} laws, got {}", per_community.len()),
                );
            } else {
                for (r, f) in per_community.iter().enumerate() {
                    if let Err(e) = f.check(self.ell, -1.0, 1.0) {
                        push(format!("initial.per_community[{r}]"), e);
                    }
                }
            }
        }
        out
    }

    /// Edge probability for `source → target` given their communities.
    #[inline]
    pub fn edge_probability(&self, source: usize, target: usize, theta: f64, n: usize) -> f64 {
        (self.kappa[source][target] * theta / n as f64).min(1.0)
    }

    /// `max κ(r,s) θ / n`; above 1 the clipping in the edge law is active.
    pub fn max_edge_intensity(&self, theta: f64, n: usize) -> f64 {
        self.kappa
            .iter()
            .flatten()
            .fold(0.0_f64, |m, x| m.max(x * theta / n as f64))
    }

    /// Expected initial opinion per community.
    pub fn initial_means(&self) -> Vec<Vec<f64>> {
        match &self.initial {
            InitialLaw::Dist { per_community } => {
                per_community.iter().map(|f| f.mean(self.ell)).collect()
            }
            InitialLaw::Beliefs => self.beliefs.iter().map(|f| f.mean(self.ell)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_spec_is_valid() {
        let s = ModelSpec::simple(vec![0.5, 0.5], vec![vec![2.0, 1.0], vec![1.0, 2.0]], 2, 0.3, 0.2);
        assert!(s.violations().is_empty());
    }

    #[test]
    fn reports_every_violation_with_paths() {
        let mut s = ModelSpec::simple(vec![0.6, 0.6], vec![vec![1.0, -1.0], vec![1.0, 1.0]], 1, 0.9, 0.2);
        s.weights[1][0] = ScalarDist::uniform(0.0, 3.0);
        let paths: Vec<String> = s.violations().into_iter().map(|v| v.path).collect();
        assert!(paths.contains(&"pi".to_string()));
        assert!(paths.contains(&"kappa[0][1]".to_string()));
        assert!(paths.contains(&"c".to_string()));
        assert!(paths.contains(&"weights[1][0]".to_string()));
    }

    #[test]
    fn d_must_be_positive() {
        let s = ModelSpec::simple(vec![1.0], vec![vec![1.0]], 1, 0.5, 0.0);
        assert!(s.validated().is_err());
    }
}
