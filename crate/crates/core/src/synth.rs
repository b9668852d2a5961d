//! Synthetic short-axis phantoms: an LV cavity disk inside a myocardial ring,
//! optionally with a transmural infarct sector and a no-reflow core, on a
//! noisy background. Used by tests, benchmarks and the `synth` command.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volcore::{CaseClass, Dims, Label, LabelMap, Spacing, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub slices: usize,
    pub height: usize,
    pub width: usize,
    pub spacing: [f64; 3],
    /// Cavity radius as a fraction of the smaller in-plane side.
    pub cavity_radius: f64,
    /// Wall thickness as a fraction of the smaller in-plane side.
    pub wall_thickness: f64,
    pub infarct: bool,
    pub no_reflow: bool,
    /// Random centre shift in pixels and relative radius jitter.
    pub jitter: bool,
    pub noise_std: f32,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            slices: 4,
            height: 32,
            width: 32,
            spacing: [10.0, 1.5, 1.5],
            cavity_radius: 0.16,
            wall_thickness: 0.12,
            infarct: false,
            no_reflow: false,
            jitter: true,
            noise_std: 0.05,
        }
    }
}

fn intensity(label: u8) -> f32 {
    match label {
        0 => 0.1,
        1 => 0.7,
        2 => 0.25,
        3 => 1.0,
        _ => 0.35,
    }
}

/// Deterministic phantom for `seed`.
pub fn phantom(cfg: &PhantomConfig, case_id: &str, seed: u64) -> Result<(Volume, LabelMap)> {
    if cfg.no_reflow && !cfg.infarct {
        return Err(Error::Config("no-reflow requires an infarct".into()));
    }
    let dims = Dims::new(cfg.slices, cfg.height, cfg.width)?;
    let spacing = Spacing::new(cfg.spacing[0], cfg.spacing[1], cfg.spacing[2])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = cfg.height.min(cfg.width) as f64;
    let (mut cy, mut cx) = (cfg.height as f64 / 2.0, cfg.width as f64 / 2.0);
    let mut scale = 1.0;
    if cfg.jitter {
        cy += rng.gen_range(-1.5..1.5);
        cx += rng.gen_range(-1.5..1.5);
        scale = rng.gen_range(0.9..1.1);
    }
    let start = rng.gen_range(0.0..2.0 * PI);
    let span = PI / 2.0;

    let mut labels = Vec::with_capacity(dims.len());
    for s in 0..cfg.slices {
        // Slight apical narrowing along the stack.
        let taper = 1.0 - 0.25 * s as f64 / cfg.slices.max(1) as f64;
        let rc = cfg.cavity_radius * side * scale * taper;
        let ro = rc + cfg.wall_thickness * side * scale;
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                let r = (dy * dy + dx * dx).sqrt();
                let l = if r < rc {
                    Label::LvCavity
                } else if r < ro {
                    let a = (dy.atan2(dx) - start).rem_euclid(2.0 * PI);
                    if cfg.infarct && a < span {
                        let core = a > span / 3.0 && a < 2.0 * span / 3.0 && r < (rc + ro) / 2.0;
                        if cfg.no_reflow && core {
                            Label::NoReflow
                        } else {
                            Label::Infarction
                        }
                    } else {
                        Label::Myocardium
                    }
                } else {
                    Label::Background
                };
                labels.push(l.code());
            }
        }
    }
    let noise = Normal::new(0.0, f64::from(cfg.noise_std.max(0.0))).map_err(|e| Error::Config(e.to_string()))?;
    let data = labels
        .iter()
        .map(|&l| intensity(l) + noise.sample(&mut rng) as f32)
        .collect();
    Ok((
        Volume::new(dims, spacing, data, case_id)?,
        LabelMap::new(dims, spacing, labels)?,
    ))
}

/// Clinical key/value pairs in the layout of the per-case text files, with
/// troponin, ejection fraction, NT-proBNP, Killip class and ST elevation
/// shifted by class so that the classes overlap but are mostly separable.
pub fn clinical_pairs(class: CaseClass, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sick = class == CaseClass::Pathological;
    let mut yes_no = |p: f64| if rng.gen_bool(p) { "1" } else { "0" }.to_string();
    let sex = yes_no(0.75);
    let overweight = yes_no(0.4);
    let hta = yes_no(if sick { 0.45 } else { 0.35 });
    let diabetes = yes_no(0.2);
    let familial = yes_no(0.25);
    let st = yes_no(if sick { 0.8 } else { 0.3 });
    let tobacco = yes_no(0.4);
    let age = Normal::<f64>::new(if sick { 60.0 } else { 56.0 }, 11.0).expect("valid normal");
    let troponin = Normal::<f64>::new(if sick { 3.0 } else { 0.5 }, 1.2).expect("valid normal");
    let ef = Normal::<f64>::new(if sick { 50.0 } else { 60.0 }, 8.0).expect("valid normal");
    let bnp = Normal::<f64>::new(if sick { 6.5 } else { 5.0 }, 1.1).expect("valid normal");
    let killip = if sick && rng.gen_bool(0.3) { rng.gen_range(2..=4) } else { 1 };
    let sex = if sex == "1" { "M" } else { "F" }.to_string();
    vec![
        ("Sex".into(), sex),
        ("Age".into(), format!("{:.0}", age.sample(&mut rng).clamp(25.0, 95.0))),
        ("Tobacco".into(), tobacco),
        ("Overweight".into(), overweight),
        ("Arterial hypertension".into(), hta),
        ("Diabetes".into(), diabetes),
        ("Familial history of coronary artery disease".into(), familial),
        ("ECG (ST +)".into(), st),
        ("Troponin".into(), format!("{:.2}", troponin.sample(&mut rng).exp())),
        ("Killip max".into(), killip.to_string()),
        ("FEVG".into(), format!("{:.0}", ef.sample(&mut rng).clamp(15.0, 80.0))),
        ("NTProBNP".into(), format!("{:.0}", bnp.sample(&mut rng).exp())),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_nested() {
        let cfg = PhantomConfig {
            infarct: true,
            no_reflow: true,
            ..PhantomConfig::default()
        };
        let (v1, l1) = phantom(&cfg, "a", 3).unwrap();
        let (v2, l2) = phantom(&cfg, "a", 3).unwrap();
        assert_eq!(v1.data(), v2.data());
        assert_eq!(l1.labels(), l2.labels());
        let h = l1.label_histogram();
        for code in 0..=4u8 {
            assert!(h.get(&code).copied().unwrap_or(0) > 0, "label {code} missing");
        }
    }

    #[test]
    fn clinical_pairs_encode_fully() {
        let schema = crate::clinfeat::ClinicalSchema::default();
        for (class, seed) in [(CaseClass::Pathological, 1), (CaseClass::Normal, 2)] {
            let raw = crate::dataio::RawClinicalRecord::from_pairs(clinical_pairs(class, seed)).unwrap();
            let rec = schema.encode("c", &raw, Some(class)).unwrap();
            assert!(rec.features.iter().all(Option::is_some), "{rec:?}");
        }
        assert_eq!(clinical_pairs(CaseClass::Normal, 5), clinical_pairs(CaseClass::Normal, 5));
    }

    #[test]
    fn normal_case_has_no_pathology() {
        let (_, l) = phantom(&PhantomConfig::default(), "n", 1).unwrap();
        assert!(l.labels().iter().all(|&c| c <= 2));
    }
}
