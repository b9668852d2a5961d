//! 3D overlap, distance and volume metrics, per-case reports and summaries.

mod distance;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::volcore::StructureMask;

pub use distance::squared_edt;
pub use report::{evaluate_case, reports_to_csv, summarize, summary_to_csv, CaseReport, MetricSummary, StdKind, StructureScores, StructureSummary, SummaryReport};

/// A named structure evaluated as the union of some label codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureDef {
    pub name: String,
    pub labels: Vec<u8>,
}

impl StructureDef {
    pub fn new(name: &str, labels: &[u8]) -> Self {
        StructureDef {
            name: name.to_string(),
            labels: labels.to_vec(),
        }
    }
}

/// LV cavity {1}, myocardium {2,3,4}, infarction {3}, no-reflow {4}.
pub fn default_structures() -> Vec<StructureDef> {
    vec![
        StructureDef::new("lv_cavity", &[1]),
        StructureDef::new("myocardium", &[2, 3, 4]),
        StructureDef::new("infarction", &[3]),
        StructureDef::new("no_reflow", &[4]),
    ]
}

fn check_grid(a: &StructureMask, b: &StructureMask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("mask grids differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    let (sa, sb) = (a.spacing(), b.spacing());
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-6 * x.abs().max(y.abs());
    if !(close(sa.dz, sb.dz) && close(sa.dy, sb.dy) && close(sa.dx, sb.dx)) {
        return Err(Error::Shape(format!("mask spacings differ: {sa:?} vs {sb:?}")));
    }
    Ok(())
}

/// `2|A∩B| / (|A|+|B|)` over the whole stack; 1.0 when both are empty.
pub fn dice3d(a: &StructureMask, b: &StructureMask) -> Result<f64> {
    check_grid(a, b)?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        na += usize::from(x);
        nb += usize::from(y);
        inter += usize::from(x && y);
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

fn directed_max(from: &StructureMask, to_edt: &[f64]) -> f64 {
    from.bits()
        .iter()
        .zip(to_edt)
        .filter(|(&b, _)| b)
        .map(|(_, &d)| d)
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance in mm between voxel-centre sets; `None` when
/// either mask is empty.
pub fn hausdorff3d_mm(a: &StructureMask, b: &StructureMask) -> Result<Option<f64>> {
    check_grid(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Ok(None);
    }
    let da = squared_edt(a.bits(), a.dims(), a.spacing());
    let db = squared_edt(b.bits(), b.dims(), b.spacing());
    Ok(Some(directed_max(a, &db).max(directed_max(b, &da)).sqrt()))
}

/// `| |A| − |G| | / |G|`; `None` when the ground truth is empty.
pub fn rvd(pred: &StructureMask, truth: &StructureMask) -> Result<Option<f64>> {
    check_grid(pred, truth)?;
    let g = truth.count();
    if g == 0 {
        return Ok(None);
    }
    Ok(Some((pred.count() as f64 - g as f64).abs() / g as f64))
}

/// Fraction of positions where `preds` and `truths` agree.
pub fn accuracy<L: PartialEq>(preds: &[L], truths: &[L]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!("{} predictions vs {} truths", preds.len(), truths.len())));
    }
    if preds.is_empty() {
        return Err(Error::InvalidValue("accuracy of an empty list".into()));
    }
    let ok = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(ok as f64 / preds.len() as f64)
}

/// A per-structure metric comparing a prediction with the ground truth.
pub trait Metric: Send + Sync {
    /// Column name in reports.
    fn name(&self) -> &'static str;

    /// `None` marks a degenerate, undefined case.
    fn evaluate(&self, pred: &StructureMask, truth: &StructureMask) -> Result<Option<f64>>;
}

pub struct Dice;
pub struct Hausdorff;
pub struct RelativeVolumeDifference;

impl Metric for Dice {
    fn name(&self) -> &'static str {
        "dsc"
    }

    fn evaluate(&self, pred: &StructureMask, truth: &StructureMask) -> Result<Option<f64>> {
        dice3d(pred, truth).map(Some)
    }
}

impl Metric for Hausdorff {
    fn name(&self) -> &'static str {
        "hd_mm"
    }

    fn evaluate(&self, pred: &StructureMask, truth: &StructureMask) -> Result<Option<f64>> {
        hausdorff3d_mm(pred, truth)
    }
}

impl Metric for RelativeVolumeDifference {
    fn name(&self) -> &'static str {
        "rvd"
    }

    fn evaluate(&self, pred: &StructureMask, truth: &StructureMask) -> Result<Option<f64>> {
        rvd(pred, truth)
    }
}

/// Metrics available by name: `dsc`, `hd`, `rvd`.
pub fn metric_registry() -> Registry<dyn Metric> {
    let mut r: Registry<dyn Metric> = Registry::new("metric");
    r.register("dsc", |_| Box::new(Dice)).expect("fresh registry");
    r.register("hd", |_| Box::new(Hausdorff)).expect("fresh registry");
    r.register("rvd", |_| Box::new(RelativeVolumeDifference)).expect("fresh registry");
    r
}

pub const DEFAULT_METRICS: [&str; 3] = ["dsc", "hd", "rvd"];

pub fn create_metrics(names: &[String]) -> Result<Vec<Box<dyn Metric>>> {
    let r = metric_registry();
    names.iter().map(|n| r.create(n, &())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volcore::{Dims, Spacing};

    fn mask(dims: (usize, usize, usize), spacing: Spacing, on: &[(usize, usize, usize)]) -> StructureMask {
        let d = Dims::new(dims.0, dims.1, dims.2).unwrap();
        let mut bits = vec![false; d.len()];
        for &(z, y, x) in on {
            bits[d.index(z, y, x)] = true;
        }
        StructureMask::new(d, spacing, bits).unwrap()
    }

    #[test]
    fn dice_examples() {
        let u = Spacing::unit();
        let a: Vec<_> = (0..8).map(|i| (0, 0, i)).collect();
        let b: Vec<_> = (4..12).map(|i| (0, 0, i)).collect();
        let (ma, mb) = (mask((1, 1, 12), u, &a), mask((1, 1, 12), u, &b));
        assert_eq!(dice3d(&ma, &mb).unwrap(), 0.5);
        assert_eq!(dice3d(&ma, &ma).unwrap(), 1.0);
        let c: Vec<_> = (8..12).map(|i| (0, 0, i)).collect();
        assert_eq!(dice3d(&ma, &mask((1, 1, 12), u, &c)).unwrap(), 0.0);
        let e = mask((1, 1, 12), u, &[]);
        assert_eq!(dice3d(&e, &e).unwrap(), 1.0);
        assert!(dice3d(&e, &mask((1, 12, 1), u, &[])).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let u = Spacing::unit();
        let a = mask((1, 8, 8), u, &[(0, 0, 0)]);
        let b = mask((1, 8, 8), u, &[(0, 3, 4)]);
        assert_eq!(hausdorff3d_mm(&a, &b).unwrap(), Some(5.0));
        assert_eq!(hausdorff3d_mm(&a, &a).unwrap(), Some(0.0));
        let s = Spacing::new(1.0, 2.0, 1.0).unwrap();
        let a = mask((1, 8, 8), s, &[(0, 0, 0)]);
        let b = mask((1, 8, 8), s, &[(0, 3, 4)]);
        let hd = hausdorff3d_mm(&a, &b).unwrap().unwrap();
        assert!((hd - 52f64.sqrt()).abs() < 1e-12);
        assert_eq!(hausdorff3d_mm(&a, &mask((1, 8, 8), s, &[])).unwrap(), None);
        assert!(hausdorff3d_mm(&a, &mask((1, 8, 8), u, &[(0, 0, 0)])).is_err());
    }

    #[test]
    fn rvd_examples() {
        let u = Spacing::unit();
        let on = |n: usize| -> Vec<_> { (0..n).map(|i| (0, i / 20, i % 20)).collect() };
        let g = mask((1, 20, 20), u, &on(100));
        assert_eq!(rvd(&mask((1, 20, 20), u, &on(120)), &g).unwrap(), Some(0.2));
        assert_eq!(rvd(&g, &g).unwrap(), Some(0.0));
        assert_eq!(rvd(&mask((1, 20, 20), u, &[]), &g).unwrap(), Some(1.0));
        assert_eq!(rvd(&g, &mask((1, 20, 20), u, &[])).unwrap(), None);
    }

    #[test]
    fn accuracy_examples() {
        let t = vec![1; 15];
        let mut p = t.clone();
        assert_eq!(accuracy(&p, &t).unwrap(), 1.0);
        p[3] = 0;
        assert!((accuracy(&p, &t).unwrap() - 0.9333).abs() < 5e-5);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert!(accuracy::<u8>(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 1]).is_err());
    }

    #[test]
    fn registry_names() {
        assert_eq!(metric_registry().names(), ["dsc", "hd", "rvd"]);
        assert!(metric_registry().create("assd", &()).is_err());
    }
}
