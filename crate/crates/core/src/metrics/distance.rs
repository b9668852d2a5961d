//! Exact squared Euclidean distance transform on an anisotropic grid,
//! one separable lower-envelope pass per axis.

use crate::volcore::{Dims, Spacing};

/// Squared distance in mm² from every voxel centre to the nearest set voxel.
/// All entries are infinite when the set is empty.
pub fn squared_edt(bits: &[bool], dims: Dims, spacing: Spacing) -> Vec<f64> {
    let mut d: Vec<f64> = bits.iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    let (s, h, w) = (dims.slices, dims.height, dims.width);
    let mut f = Vec::new();
    let mut out = Vec::new();
    // x axis
    for z in 0..s {
        for y in 0..h {
            let base = (z * h + y) * w;
            f.clear();
            f.extend_from_slice(&d[base..base + w]);
            envelope_1d(&f, spacing.dx, &mut out);
            d[base..base + w].copy_from_slice(&out);
        }
    }
    // y axis
    for z in 0..s {
        for x in 0..w {
            f.clear();
            f.extend((0..h).map(|y| d[(z * h + y) * w + x]));
            envelope_1d(&f, spacing.dy, &mut out);
            for (y, &v) in out.iter().enumerate() {
                d[(z * h + y) * w + x] = v;
            }
        }
    }
    // z axis
    for y in 0..h {
        for x in 0..w {
            f.clear();
            f.extend((0..s).map(|z| d[(z * h + y) * w + x]));
            envelope_1d(&f, spacing.dz, &mut out);
            for (z, &v) in out.iter().enumerate() {
                d[(z * h + y) * w + x] = v;
            }
        }
    }
    d
}

/// `out[p] = min_q (step·(p−q))² + f[q]`, skipping infinite samples.
fn envelope_1d(f: &[f64], step: f64, out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    let s2 = step * step;
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    let intersect = |q: usize, p: usize| {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + s2 * qf * qf) - (f[p] + s2 * pf * pf)) / (2.0 * s2 * (qf - pf))
    };
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        while let Some(&last) = v.last() {
            let x = intersect(q, last);
            if x <= z[v.len() - 1] {
                v.pop();
                z.pop();
            } else {
                z.push(x);
                break;
            }
        }
        if v.is_empty() {
            z.clear();
            z.push(f64::NEG_INFINITY);
        }
        v.push(q);
    }
    if v.is_empty() {
        return;
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while z[k + 1] < p as f64 {
            k += 1;
        }
        let q = v[k];
        let dp = p as f64 - q as f64;
        *o = s2 * dp * dp + f[q];
    }
}
