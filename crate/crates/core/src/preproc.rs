//! Per-case resize and intensity normalization ahead of the networks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volcore::{Dims, LabelMap, Spacing, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocConfig {
    pub target_h: usize,
    pub target_w: usize,
    pub epsilon_std: f64,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        PreprocConfig {
            target_h: 256,
            target_w: 256,
            epsilon_std: 1e-8,
        }
    }
}

impl PreprocConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("target_h", self.target_h), ("target_w", self.target_w)] {
            if v < 8 || v % 2 != 0 {
                return Err(Error::Config(format!("preproc.{name} must be even and >= 8, got {v}")));
            }
        }
        if !(self.epsilon_std > 0.0 && self.epsilon_std.is_finite()) {
            return Err(Error::Config(format!(
                "preproc.epsilon_std must be positive, got {}",
                self.epsilon_std
            )));
        }
        Ok(())
    }
}

fn rescaled_spacing(sp: Spacing, from: Dims, h: usize, w: usize) -> Spacing {
    Spacing {
        dz: sp.dz,
        dy: sp.dy * from.height as f64 / h as f64,
        dx: sp.dx * from.width as f64 / w as f64,
    }
}

/// Half-pixel source coordinate, clamped to the valid range.
fn source_coord(dst: usize, scale: f64, len_in: usize) -> f64 {
    ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len_in - 1) as f64)
}

pub fn bilinear_slice(src: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    if h == out_h && w == out_w {
        return src.to_vec();
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let xs: Vec<(usize, usize, f64)> = (0..out_w)
        .map(|x| {
            let fx = source_coord(x, sx, w);
            let x0 = fx.floor() as usize;
            (x0, (x0 + 1).min(w - 1), fx - x0 as f64)
        })
        .collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let fy = source_coord(y, sy, h);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        let (r0, r1) = (&src[y0 * w..(y0 + 1) * w], &src[y1 * w..(y1 + 1) * w]);
        for &(x0, x1, tx) in &xs {
            let top = r0[x0] as f64 * (1.0 - tx) + r0[x1] as f64 * tx;
            let bottom = r1[x0] as f64 * (1.0 - tx) + r1[x1] as f64 * tx;
            out.push((top * (1.0 - ty) + bottom * ty) as f32);
        }
    }
    out
}

pub fn nearest_slice<T: Copy>(src: &[T], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<T> {
    if h == out_h && w == out_w {
        return src.to_vec();
    }
    let pick = |dst: usize, len_in: usize, len_out: usize| {
        let f = (dst as f64 + 0.5) * len_in as f64 / len_out as f64;
        (f.floor() as usize).min(len_in - 1)
    };
    let xs: Vec<usize> = (0..out_w).map(|x| pick(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let row = &src[pick(y, h, out_h) * w..];
        out.extend(xs.iter().map(|&x| row[x]));
    }
    out
}

pub fn resize_volume_to(v: &Volume, out_h: usize, out_w: usize) -> Result<Volume> {
    let d = v.dims();
    let mut data = Vec::with_capacity(d.slices * out_h * out_w);
    for s in 0..d.slices {
        data.extend(bilinear_slice(v.slice(s), d.height, d.width, out_h, out_w));
    }
    Volume::new(
        Dims::new(d.slices, out_h, out_w)?,
        rescaled_spacing(v.spacing(), d, out_h, out_w),
        data,
        v.case_id(),
    )
}

pub fn resize_labels_to(lm: &LabelMap, out_h: usize, out_w: usize) -> Result<LabelMap> {
    let d = lm.dims();
    let mut labels = Vec::with_capacity(d.slices * out_h * out_w);
    for s in 0..d.slices {
        labels.extend(nearest_slice(lm.slice(s), d.height, d.width, out_h, out_w));
    }
    LabelMap::new(
        Dims::new(d.slices, out_h, out_w)?,
        rescaled_spacing(lm.spacing(), d, out_h, out_w),
        labels,
    )
}

/// Bilinear, half-pixel centres, each slice independently.
pub fn resize_volume(v: &Volume, cfg: &PreprocConfig) -> Result<Volume> {
    resize_volume_to(v, cfg.target_h, cfg.target_w)
}

/// Nearest neighbour, so the label domain is preserved.
pub fn resize_labels(lm: &LabelMap, cfg: &PreprocConfig) -> Result<LabelMap> {
    resize_labels_to(lm, cfg.target_h, cfg.target_w)
}

/// Zero mean and unit (population) standard deviation over the whole case.
pub fn normalize_intensity(v: &Volume, cfg: &PreprocConfig) -> Result<Volume> {
    let n = v.data().len() as f64;
    let mean = v.data().iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.data().iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt().max(cfg.epsilon_std);
    let data = v.data().iter().map(|&x| ((x as f64 - mean) / denom) as f32).collect();
    Volume::new(v.dims(), v.spacing(), data, v.case_id())
}

/// Resize followed by normalization.
pub fn preprocess_volume(v: &Volume, cfg: &PreprocConfig) -> Result<Volume> {
    normalize_intensity(&resize_volume(v, cfg)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vol(s: usize, h: usize, w: usize, data: Vec<f32>) -> Volume {
        Volume::new(Dims::new(s, h, w).unwrap(), Spacing::new(8.0, 1.5, 1.25).unwrap(), data, "case").unwrap()
    }

    fn stats(data: &[f32]) -> (f64, f64) {
        let n = data.len() as f64;
        let m = data.iter().map(|&x| x as f64).sum::<f64>() / n;
        let v = data.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    }

    #[test]
    fn identity_resize_is_exact() {
        let data: Vec<f32> = (0..256 * 256).map(|i| ((i * 7919) % 1000) as f32 * 0.37).collect();
        let v = vol(1, 256, 256, data);
        let r = resize_volume(&v, &PreprocConfig::default()).unwrap();
        assert_eq!(r.data(), v.data());
        assert_eq!(r.spacing(), v.spacing());
    }

    #[test]
    fn two_by_two_to_four_by_four() {
        // The input is the linear ramp f(y, x) = 2y + x, which bilinear
        // interpolation reproduces exactly at clamped half-pixel coordinates
        // {0, 0.25, 0.75, 1}.
        let v = vol(1, 2, 2, vec![0.0, 1.0, 2.0, 3.0]);
        let r = resize_volume_to(&v, 4, 4).unwrap();
        let expected = [
            0.0, 0.25, 0.75, 1.0, //
            0.5, 0.75, 1.25, 1.5, //
            1.5, 1.75, 2.25, 2.5, //
            2.0, 2.25, 2.75, 3.0,
        ];
        assert_eq!(r.data(), &expected);
        assert_eq!(r.spacing().dy, 0.75);
        assert_eq!(r.spacing().dx, 0.625);
        assert_eq!(r.spacing().dz, 8.0);
    }

    #[test]
    fn nearest_up_then_down() {
        let labels = vec![0, 1, 2, 3, 4, 0];
        let lm = LabelMap::new(Dims::new(1, 2, 3).unwrap(), Spacing::unit(), labels.clone()).unwrap();
        let up = resize_labels_to(&lm, 6, 9).unwrap();
        assert_eq!(up.get(0, 5, 8), 0);
        assert_eq!(up.get(0, 0, 3), 1);
        let down = resize_labels_to(&up, 2, 3).unwrap();
        assert_eq!(down.labels(), labels.as_slice());
        assert_eq!(down.spacing(), Spacing::unit());
        let same = resize_labels_to(&lm, 2, 3).unwrap();
        assert_eq!(same.labels(), lm.labels());
    }

    #[test]
    fn two_valued_volume_normalizes_to_unit_pair() {
        let v = vol(1, 2, 2, vec![0.0, 2.0, 0.0, 2.0]);
        let n = normalize_intensity(&v, &PreprocConfig::default()).unwrap();
        assert_eq!(n.data(), &[-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn constant_volume_maps_to_zero() {
        let v = vol(2, 3, 3, vec![4.5; 18]);
        let n = normalize_intensity(&v, &PreprocConfig::default()).unwrap();
        assert!(n.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(PreprocConfig::default().validate().is_ok());
        let bad = PreprocConfig { target_h: 7, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PreprocConfig { target_w: 30, target_h: 6, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PreprocConfig { epsilon_std: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn normalized_statistics(data in proptest::collection::vec(-500.0f32..500.0, 2..200)) {
            let n = data.len();
            prop_assume!(stats(&data).1 > 1e-2);
            let out = normalize_intensity(&vol(1, 1, n, data), &PreprocConfig::default()).unwrap();
            let (m, s) = stats(out.data());
            prop_assert!(m.abs() < 1e-5);
            prop_assert!((s - 1.0).abs() < 1e-4);
            let again = normalize_intensity(&out, &PreprocConfig::default()).unwrap();
            for (a, b) in again.data().iter().zip(out.data()) {
                prop_assert!((a - b).abs() < 1e-4);
            }
        }

        #[test]
        fn constant_stays_constant(c in -100.0f32..100.0, h in 1usize..7, w in 1usize..7, oh in 1usize..12, ow in 1usize..12) {
            let r = resize_volume_to(&vol(1, h, w, vec![c; h * w]), oh, ow).unwrap();
            prop_assert!(r.data().iter().all(|&x| (x - c).abs() <= 1e-5 * c.abs().max(1.0)));
        }

        #[test]
        fn nearest_never_invents_labels(labels in proptest::collection::vec(prop_oneof![Just(0u8), Just(2u8), Just(4u8)], 12), oh in 1usize..16, ow in 1usize..16) {
            let lm = LabelMap::new(Dims::new(1, 3, 4).unwrap(), Spacing::unit(), labels.clone()).unwrap();
            let r = resize_labels_to(&lm, oh, ow).unwrap();
            prop_assert!(r.labels().iter().all(|l| labels.contains(l)));
        }

        #[test]
        fn preprocess_keeps_slices_and_id(s in 1usize..4, h in 2usize..20, w in 2usize..20, seed in 0u32..1000) {
            let data: Vec<f32> = (0..s * h * w).map(|i| ((i as u32).wrapping_mul(2654435761).wrapping_add(seed) % 97) as f32).collect();
            let cfg = PreprocConfig { target_h: 16, target_w: 24, ..Default::default() };
            let out = preprocess_volume(&vol(s, h, w, data), &cfg).unwrap();
            prop_assert_eq!(out.dims(), Dims::new(s, 16, 24).unwrap());
            prop_assert_eq!(out.case_id(), "case");
        }
    }
}
