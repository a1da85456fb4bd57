//! Closed family of distribution descriptors used for edge weights,
//! internal beliefs, media signals and initial opinions.
//!
//! Every member has a closed-form mean and second moment, which the
//! mean-field construction relies on.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

/// A law on a bounded interval of the real line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarDist {
    Point { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `lo + (hi - lo) * Beta(alpha, beta)`.
    Beta { alpha: f64, beta: f64, lo: f64, hi: f64 },
    Mixture { weights: Vec<f64>, components: Vec<ScalarDist> },
}

impl ScalarDist {
    pub fn point(value: f64) -> Self {
        ScalarDist::Point { value }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        ScalarDist::Uniform { lo, hi }
    }

    /// Equal-weight mixture of point masses at `-1` and `1`.
    pub fn rademacher() -> Self {
        ScalarDist::Mixture {
            weights: vec![0.5, 0.5],
            components: vec![ScalarDist::point(-1.0), ScalarDist::point(1.0)],
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ScalarDist::Point { value } => *value,
            ScalarDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            ScalarDist::Beta { alpha, beta, lo, hi } => lo + (hi - lo) * alpha / (alpha + beta),
            ScalarDist::Mixture { weights, components } => {
                let total: f64 = weights.iter().sum();
                weights
                    .iter()
                    .zip(components)
                    .map(|(w, c)| w / total * c.mean())
                    .sum()
            }
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            ScalarDist::Point { value } => value * value,
            ScalarDist::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
            ScalarDist::Beta { alpha, beta, lo, hi } => {
                let s = alpha + beta;
                let m1 = alpha / s;
                let m2 = alpha * (alpha + 1.0) / (s * (s + 1.0));
                let w = hi - lo;
                lo * lo + 2.0 * lo * w * m1 + w * w * m2
            }
            ScalarDist::Mixture { weights, components } => {
                let total: f64 = weights.iter().sum();
                weights
                    .iter()
                    .zip(components)
                    .map(|(w, c)| w / total * c.second_moment())
                    .sum()
            }
        }
    }

    /// `E|X|`.
    pub fn abs_mean(&self) -> f64 {
        let (lo, hi) = self.support();
        if lo >= 0.0 {
            return self.mean();
        }
        if hi <= 0.0 {
            return -self.mean();
        }
        match self {
            ScalarDist::Point { value } => value.abs(),
            ScalarDist::Uniform { lo, hi } => (lo * lo + hi * hi) / (2.0 * (hi - lo)),
            ScalarDist::Beta { alpha, beta, lo, hi } => {
                // E|X| = ∫_0^hi P(X > u) du + ∫_0^-lo P(X < -u) du
                let law = statrs::distribution::Beta::new(*alpha, *beta).expect("validated beta parameters");
                let cdf = |x: f64| statrs::distribution::ContinuousCDF::cdf(&law, ((x - lo) / (hi - lo)).clamp(0.0, 1.0));
                simpson(|u| 1.0 - cdf(u), 0.0, *hi, 2000) + simpson(|u| cdf(-u), 0.0, -lo, 2000)
            }
            ScalarDist::Mixture { weights, components } => {
                let total: f64 = weights.iter().sum();
                weights.iter().zip(components).map(|(w, c)| w / total * c.abs_mean()).sum()
            }
        }
    }

    /// Smallest closed interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            ScalarDist::Point { value } => (*value, *value),
            ScalarDist::Uniform { lo, hi } | ScalarDist::Beta { lo, hi, .. } => (*lo, *hi),
            ScalarDist::Mixture { weights, components } => components
                .iter()
                .zip(weights)
                .filter(|(_, &w)| w > 0.0)
                .map(|(c, _)| c.support())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (lo, hi)| {
                    (a.min(lo), b.max(hi))
                }),
        }
    }

    /// `true` when the law puts no mass outside `{value}`.
    pub fn is_degenerate(&self) -> bool {
        let (lo, hi) = self.support();
        lo == hi
    }

    /// Checks internal consistency; returns a human-readable reason on failure.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            ScalarDist::Point { value } if !value.is_finite() => {
                Err("point mass must be finite".into())
            }
            ScalarDist::Point { .. } => Ok(()),
            ScalarDist::Uniform { lo, hi } => {
                if lo.is_finite() && hi.is_finite() && lo <= hi {
                    Ok(())
                } else {
                    Err(format!("uniform bounds must satisfy lo <= hi, got [{lo}, {hi}]"))
                }
            }
            ScalarDist::Beta { alpha, beta, lo, hi } => {
                if !(*alpha > 0.0 && *beta > 0.0) {
                    Err(format!("beta shape parameters must be positive, got ({alpha}, {beta})"))
                } else if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    Err(format!("beta scale must satisfy lo < hi, got [{lo}, {hi}]"))
                } else {
                    Ok(())
                }
            }
            ScalarDist::Mixture { weights, components } => {
                if weights.is_empty() || weights.len() != components.len() {
                    return Err("mixture needs one weight per component".into());
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return Err("mixture weights must be nonnegative".into());
                }
                if weights.iter().sum::<f64>() <= 0.0 {
                    return Err("mixture weights must not all be zero".into());
                }
                components.iter().try_for_each(|c| c.validate())
            }
        }
    }

    /// Checks that the support lies inside `[lo, hi]`.
    pub fn check_support(&self, lo: f64, hi: f64) -> Result<(), String> {
        self.validate()?;
        let (a, b) = self.support();
        if a < lo || b > hi {
            Err(format!("support [{a}, {b}] is not contained in [{lo}, {hi}]"))
        } else {
            Ok(())
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ScalarDist::Point { value } => *value,
            ScalarDist::Uniform { lo, hi } => {
                if lo == hi {
                    *lo
                } else {
                    lo + (hi - lo) * rng.random::<f64>()
                }
            }
            ScalarDist::Beta { alpha, beta, lo, hi } => {
                let b = Beta::new(*alpha, *beta).expect("validated beta parameters");
                lo + (hi - lo) * b.sample(rng)
            }
            ScalarDist::Mixture { weights, components } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (w, c) in weights.iter().zip(components) {
                    if u < *w {
                        return c.sample(rng);
                    }
                    u -= w;
                }
                // rounding: fall through to the last positive-weight component
                let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
                components[last].sample(rng)
            }
        }
    }
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// A law on `[lo, hi]^ell` with independent coordinates. A single entry is
/// broadcast to every topic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VecDist(pub Vec<ScalarDist>);

impl VecDist {
    pub fn iid(d: ScalarDist) -> Self {
        VecDist(vec![d])
    }

    pub fn component(&self, topic: usize) -> &ScalarDist {
        if self.0.len() == 1 {
            &self.0[0]
        } else {
            &self.0[topic]
        }
    }

    pub fn mean(&self, ell: usize) -> Vec<f64> {
        (0..ell).map(|t| self.component(t).mean()).collect()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (t, o) in out.iter_mut().enumerate() {
            *o = self.component(t).sample(rng);
        }
    }

    pub fn check(&self, ell: usize, lo: f64, hi: f64) -> Result<(), String> {
        if self.0.len() != 1 && self.0.len() != ell {
            return Err(format!(
                "expected 1 or {ell} coordinate laws, got {}",
                self.0.len()
            ));
        }
        self.0
            .iter()
            .enumerate()
            .try_for_each(|(t, d)| d.check_support(lo, hi).map_err(|e| format!("topic {t}: {e}")))
    }
}
