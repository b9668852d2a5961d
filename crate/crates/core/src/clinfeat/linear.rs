//! Primal linear SVM with hinge loss, trained by stochastic subgradient
//! descent with averaged iterates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LinearSvmConfig {
    fn default() -> Self {
        LinearSvmConfig {
            c: 1.0,
            epochs: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    /// Objective of the kept averaged iterate after each epoch.
    pub objective_history: Vec<f64>,
}

/// `(λ/2)‖w‖² + (1/n) Σ max(0, 1 − yᵢ(w·xᵢ + b))` with `λ = 1/(C n)`, i.e. the
/// usual `½‖w‖² + C Σ hinge` divided by `C n`.
pub fn primal_objective(w: &[f64], b: f64, x: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
    let n = x.len() as f64;
    let lambda = 1.0 / (c * n);
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (1.0 - yi * (dot(w, xi) + b)).max(0.0))
        .sum();
    reg + hinge / n
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_labels(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} samples vs {} labels", x.len(), y.len())));
    }
    let d = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != d) || d == 0 {
        return Err(Error::Shape("samples must share a non-zero dimension".into()));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Training("labels must be +1 or -1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::Training("training data has a single class".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite training feature".into()));
    }
    Ok(d)
}

/// Exact minimizer over `b` of `Σ max(0, 1 − yᵢ(sᵢ + b))` for fixed scores
/// `sᵢ = w·xᵢ`. The loss is convex and piecewise linear with kinks at
/// `yᵢ − sᵢ`; on a flat minimum the midpoint is returned.
pub fn optimal_bias(scores: &[f64], y: &[f64]) -> f64 {
    let loss = |b: f64| -> f64 { scores.iter().zip(y).map(|(s, yi)| (1.0 - yi * (s + b)).max(0.0)).sum() };
    let kinks: Vec<f64> = scores.iter().zip(y).map(|(s, yi)| yi - s).collect();
    let mut best = f64::INFINITY;
    let (mut lo, mut hi) = (0.0, 0.0);
    for &k in &kinks {
        let v = loss(k);
        if v < best - 1e-12 {
            best = v;
            lo = k;
            hi = k;
        } else if (v - best).abs() <= 1e-12 {
            lo = f64::min(lo, k);
            hi = f64::max(hi, k);
        }
    }
    0.5 * (lo + hi)
}

impl LinearSvm {
    /// Stochastic subgradient steps `η_t = 1/(λ t)` on `w` over a seeded
    /// permutation per epoch, with projection onto the ball `‖w‖ ≤ √(2/λ)`
    /// that contains the optimum. The unregularized bias is set exactly
    /// after every epoch. Each epoch the running average of the `w` iterates,
    /// paired with its exact bias, is scored; the best-scoring average is
    /// kept, so the logged objective never increases.
    pub fn train(x: &[Vec<f64>], y: &[f64], cfg: &LinearSvmConfig) -> Result<Self> {
        let d = check_labels(x, y)?;
        if !(cfg.c.is_finite() && cfg.c > 0.0) || cfg.epochs == 0 {
            return Err(Error::Config("linear SVM needs C > 0 and at least one epoch".into()));
        }
        let n = x.len();
        let lambda = 1.0 / (cfg.c * n as f64);
        let radius = (2.0 / lambda).sqrt();
        let scores = |w: &[f64]| -> Vec<f64> { x.iter().map(|xi| dot(w, xi)).collect() };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut w = vec![0.0; d];
        let mut b = optimal_bias(&scores(&w), y);
        let mut w_avg = vec![0.0; d];
        let mut best_w = w.clone();
        let mut best_b = b;
        let mut best = primal_objective(&best_w, best_b, x, y, cfg.c);
        let mut history = Vec::with_capacity(cfg.epochs);
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0usize;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let violated = y[i] * (dot(&w, &x[i]) + b) < 1.0;
                let shrink = 1.0 - eta * lambda;
                for v in &mut w {
                    *v *= shrink;
                }
                if violated {
                    for (v, xi) in w.iter_mut().zip(&x[i]) {
                        *v += eta * y[i] * xi;
                    }
                }
                let norm = dot(&w, &w).sqrt();
                if norm > radius {
                    for v in &mut w {
                        *v *= radius / norm;
                    }
                }
                let k = 1.0 / t as f64;
                for (a, v) in w_avg.iter_mut().zip(&w) {
                    *a += (v - *a) * k;
                }
            }
            b = optimal_bias(&scores(&w), y);
            let b_avg = optimal_bias(&scores(&w_avg), y);
            let obj = primal_objective(&w_avg, b_avg, x, y, cfg.c);
            if obj < best {
                best = obj;
                best_w.clone_from(&w_avg);
                best_b = b_avg;
            }
            history.push(best);
        }
        if best_w.iter().any(|v| !v.is_finite()) || !best_b.is_finite() {
            return Err(Error::Numeric("linear SVM diverged".into()));
        }
        Ok(LinearSvm {
            w: best_w,
            b: best_b,
            c: cfg.c,
            objective_history: history,
        })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }
}

/// Indices with `|wᵢ| ≥ τ·max|w|`. Never empty: when nothing qualifies
/// (only possible for τ > 1) the largest-magnitude weight is kept, the
/// lowest index winning ties.
pub fn select_features(w: &[f64], tau: f64) -> Vec<usize> {
    let max = w.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let sel: Vec<usize> = (0..w.len()).filter(|&i| w[i].abs() >= tau * max).collect();
    if !sel.is_empty() || w.is_empty() {
        return sel;
    }
    let best = (0..w.len())
        .max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()).then(b.cmp(&a)))
        .expect("non-empty weights");
    vec![best]
}
