use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STD_EPSILON: f64 = 1e-12;

/// Median imputation followed by z-scoring, fit on training records only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub median: Vec<f64>,
    pub mean: Vec<f64>,
    /// Population std of the imputed training values; 1.0 for constant features.
    pub std: Vec<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl Standardizer {
    pub fn fit(rows: &[&[Option<f64>]]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Training(format!("standardizer needs at least 2 records, got {}", rows.len())));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("clinical records differ in length".into()));
        }
        let mut med = Vec::with_capacity(d);
        let mut mean = Vec::with_capacity(d);
        let mut std = Vec::with_capacity(d);
        for j in 0..d {
            let m = median(rows.iter().filter_map(|r| r[j]).collect());
            let col: Vec<f64> = rows.iter().map(|r| r[j].unwrap_or(m)).collect();
            let mu = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / col.len() as f64;
            let sd = var.sqrt();
            med.push(m);
            mean.push(mu);
            std.push(if sd > STD_EPSILON { sd } else { 1.0 });
        }
        Ok(Standardizer { median: med, mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn impute(&self, row: &[Option<f64>]) -> Result<Vec<f64>> {
        self.check(row.len())?;
        Ok(row.iter().zip(&self.median).map(|(v, m)| v.unwrap_or(*m)).collect())
    }

    pub fn transform(&self, row: &[Option<f64>]) -> Result<Vec<f64>> {
        let x = self.impute(row)?;
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    fn check(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::Shape(format!("record has {d} features, standardizer {}", self.dim())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_constant_guard_and_median_imputation() {
        let rows = [
            vec![Some(50.0), Some(1.0)],
            vec![Some(70.0), Some(1.0)],
            vec![None, Some(1.0)],
            vec![Some(60.0), Some(1.0)],
            vec![Some(90.0), Some(1.0)],
        ];
        let refs: Vec<&[Option<f64>]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Standardizer::fit(&refs).unwrap();
        // median of {50, 60, 70, 90}
        assert_eq!(s.median[0], 65.0);
        assert_eq!(s.impute(&rows[2]).unwrap()[0], 65.0);
        let t: Vec<Vec<f64>> = rows.iter().map(|r| s.transform(r).unwrap()).collect();
        let mean0: f64 = t.iter().map(|r| r[0]).sum::<f64>() / 5.0;
        assert!(mean0.abs() < 1e-6);
        assert!(t.iter().all(|r| r[1] == 0.0));
        assert!(Standardizer::fit(&refs[..1]).is_err());
        assert!(s.transform(&[Some(1.0)]).is_err());
    }
}
