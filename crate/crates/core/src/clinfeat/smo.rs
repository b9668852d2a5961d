//! Soft-margin kernel SVM solved in the dual by sequential minimal
//! optimization with second-order working-set selection.

use serde::{Deserialize, Serialize};

use crate::clinfeat::kernel::{kernel_registry, Kernel, KernelParams};
use crate::clinfeat::linear::check_labels;
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSvmConfig {
    pub kernel: String,
    pub c: f64,
    /// Kernel width; `None` uses [`crate::clinfeat::kernel::default_gamma`].
    pub gamma: Option<f64>,
    /// Stopping threshold on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for KernelSvmConfig {
    fn default() -> Self {
        KernelSvmConfig {
            kernel: "rbf".into(),
            c: 1.0,
            gamma: None,
            tolerance: 1e-4,
            max_iterations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSvm {
    pub kernel: String,
    pub gamma: f64,
    pub c: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `αᵢ yᵢ` per support vector.
    pub dual_coef: Vec<f64>,
    pub b: f64,
    /// Full `α` over the training set, kept for diagnostics.
    pub alpha: Vec<f64>,
    pub iterations: usize,
}

impl KernelSvm {
    pub fn train(x: &[Vec<f64>], y: &[f64], cfg: &KernelSvmConfig) -> Result<Self> {
        check_labels(x, y)?;
        if !(cfg.c.is_finite() && cfg.c > 0.0) {
            return Err(Error::Config(format!("SVM C must be positive, got {}", cfg.c)));
        }
        let gamma = match cfg.gamma {
            Some(g) if g.is_finite() && g > 0.0 => g,
            Some(g) => return Err(Error::Config(format!("SVM gamma must be positive, got {g}"))),
            None => crate::clinfeat::kernel::default_gamma(x),
        };
        let kernel = kernel_registry().create(&cfg.kernel, &KernelParams { gamma })?;
        let n = x.len();
        let c = cfg.c;
        let q: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| y[i] * y[j] * kernel.eval(&x[i], &x[j])).collect())
            .collect();
        let mut alpha = vec![0.0; n];
        let mut g = vec![-1.0; n];
        let mut iterations = 0;
        loop {
            let Some((i, j)) = select_working_set(&q, y, &alpha, &g, c, cfg.tolerance) else {
                break;
            };
            if iterations >= cfg.max_iterations {
                return Err(Error::Numeric(format!("SMO did not converge in {} iterations", cfg.max_iterations)));
            }
            iterations += 1;
            let (old_i, old_j) = (alpha[i], alpha[j]);
            update_pair(&q, y, &mut alpha, &g, c, i, j);
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += q[k][i] * di + q[k][j] * dj;
            }
        }
        let b = -rho(y, &alpha, &g, c);
        let mut support_vectors = Vec::new();
        let mut dual_coef = Vec::new();
        for i in 0..n {
            if alpha[i] > 0.0 {
                support_vectors.push(x[i].clone());
                dual_coef.push(alpha[i] * y[i]);
            }
        }
        Ok(KernelSvm {
            kernel: cfg.kernel.clone(),
            gamma,
            c,
            support_vectors,
            dual_coef,
            b,
            alpha,
            iterations,
        })
    }

    fn kernel(&self) -> Result<Box<dyn Kernel>> {
        kernel_registry().create(&self.kernel, &KernelParams { gamma: self.gamma })
    }

    /// `Σ αᵢ yᵢ k(xᵢ, x) + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        let k = self.kernel()?;
        Ok(self.decision_with(k.as_ref(), x))
    }

    pub fn decision_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let k = self.kernel()?;
        Ok(xs.iter().map(|x| self.decision_with(k.as_ref(), x)).collect())
    }

    fn decision_with(&self, k: &dyn Kernel, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, a)| a * k.eval(sv, x))
            .sum::<f64>()
            + self.b
    }
}

/// Dual objective `Σαᵢ − ½ ΣΣ αᵢαⱼ yᵢyⱼ k(xᵢ,xⱼ)`.
pub fn dual_objective(alpha: &[f64], y: &[f64], gram: &[Vec<f64>]) -> f64 {
    let mut quad = 0.0;
    for i in 0..alpha.len() {
        for j in 0..alpha.len() {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * gram[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Maximal violating `i`, then `j` maximizing the second-order decrease.
/// `None` once the violation gap is below `tol`.
fn select_working_set(q: &[Vec<f64>], y: &[f64], alpha: &[f64], g: &[f64], c: f64, tol: f64) -> Option<(usize, usize)> {
    let n = y.len();
    let mut gmax = f64::NEG_INFINITY;
    let mut i_sel = None;
    for t in 0..n {
        if in_up(y[t], alpha[t], c) {
            let v = -y[t] * g[t];
            if v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
    }
    let i = i_sel?;
    let mut gmin = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut j_sel = None;
    for t in 0..n {
        if in_low(y[t], alpha[t], c) {
            let v = -y[t] * g[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let mut a = q[i][i] + q[t][t] - 2.0 * y[i] * y[t] * q[i][t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj <= best {
                    best = obj;
                    j_sel = Some(t);
                }
            }
        }
    }
    if gmax - gmin < tol {
        return None;
    }
    j_sel.map(|j| (i, j))
}

/// Analytic two-variable update keeping `0 ≤ α ≤ C` and `Σ αᵢyᵢ` fixed.
fn update_pair(q: &[Vec<f64>], y: &[f64], alpha: &mut [f64], g: &[f64], c: f64, i: usize, j: usize) {
    let qij = q[i][j];
    if y[i] != y[j] {
        let mut quad = q[i][i] + q[j][j] + 2.0 * qij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (-g[i] - g[j]) / quad;
        let diff = alpha[i] - alpha[j];
        alpha[i] += delta;
        alpha[j] += delta;
        if diff > 0.0 {
            if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = -diff;
        }
        if diff > 0.0 {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            }
        } else if alpha[j] > c {
            alpha[j] = c;
            alpha[i] = c + diff;
        }
    } else {
        let mut quad = q[i][i] + q[j][j] - 2.0 * qij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (g[i] - g[j]) / quad;
        let sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if sum > c {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            }
        } else if alpha[j] < 0.0 {
            alpha[j] = 0.0;
            alpha[i] = sum;
        }
        if sum > c {
            if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = sum;
        }
    }
}

/// Offset `ρ` with decision `f(x) = Σ αⱼyⱼk(xⱼ,x) − ρ`: the mean of `yᵢGᵢ` over
/// free vectors, else the midpoint of the feasible interval.
fn rho(y: &[f64], alpha: &[f64], g: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for i in 0..y.len() {
        let yg = y[i] * g[i];
        if alpha[i] >= c {
            if y[i] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[i] <= 0.0 {
            if y[i] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
