use serde::{Deserialize, Serialize};

use crate::clinfeat::linear::dot;
use crate::registry::Registry;

pub trait Kernel: Send + Sync {
    fn name(&self) -> &'static str;
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;
}

pub struct LinearKernel;

/// `exp(−γ‖a − b‖²)`.
pub struct RbfKernel {
    pub gamma: f64,
}

impl Kernel for LinearKernel {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, b)
    }
}

impl Kernel for RbfKernel {
    fn name(&self) -> &'static str {
        "rbf"
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-self.gamma * d2).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub gamma: f64,
}

pub fn kernel_registry() -> Registry<dyn Kernel, KernelParams> {
    let mut r: Registry<dyn Kernel, KernelParams> = Registry::new("kernel");
    r.register("linear", |_| Box::new(LinearKernel)).expect("fresh registry");
    r.register("rbf", |p| Box::new(RbfKernel { gamma: p.gamma })).expect("fresh registry");
    r
}

/// `1 / (d · Var)` with the variance over every entry of the sample matrix;
/// 1.0 when the entries are constant.
pub fn default_gamma(x: &[Vec<f64>]) -> f64 {
    let vals: Vec<f64> = x.iter().flatten().copied().collect();
    let d = x.first().map_or(1, Vec::len).max(1);
    if vals.is_empty() {
        return 1.0;
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0
    }
}
