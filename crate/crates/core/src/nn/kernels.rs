//! Dense numeric kernels behind the tape operations.

use crate::nn::real::{lit, matmul, Real};
use crate::nn::tensor::Tensor;

/// Unfolds one `(Cin, H, W)` sample into `(Cin*k*k, H*W)` patch columns.
fn im2col<T: Real>(x: &[T], cin: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..cin {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                let dst = &mut cols[row..row + hw];
                let oy = ky as isize - pad;
                let ox = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + oy;
                    let drow = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        drow.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let srow = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (xx, d) in drow.iter_mut().enumerate() {
                        let sx = xx as isize + ox;
                        *d = if sx < 0 || sx >= w as isize { T::zero() } else { srow[sx as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch columns back into an image.
fn col2im<T: Real>(cols: &[T], cin: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..cin {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                let src = &cols[row..row + hw];
                let oy = ky as isize - pad;
                let ox = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + oy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let prow = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for xx in 0..w {
                        let sx = xx as isize + ox;
                        if sx >= 0 && sx < w as isize {
                            prow[sx as usize] += src[y * w + xx];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(x: &Tensor<T>, wt: &Tensor<T>, b: &Tensor<T>, k: usize) -> Tensor<T> {
    let (n, cin, h, w) = x.dims4().expect("rank 4");
    let cout = wt.shape()[0];
    let hw = h * w;
    let kk = cin * k * k;
    let mut y = vec![T::zero(); n * cout * hw];
    let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); kk * hw] };
    for i in 0..n {
        let xi = &x.data()[i * cin * hw..(i + 1) * cin * hw];
        let yi = &mut y[i * cout * hw..(i + 1) * cout * hw];
        for (co, plane) in yi.chunks_mut(hw).enumerate() {
            plane.iter_mut().for_each(|v| *v = b.data()[co]);
        }
        let patches: &[T] = if k == 1 {
            xi
        } else {
            im2col(xi, cin, h, w, k, &mut cols);
            &cols
        };
        matmul(false, false, cout, kk, hw, T::one(), wt.data(), patches, T::one(), yi);
    }
    Tensor::new(vec![n, cout, h, w], y).expect("conv output")
}

/// Returns `(dx, dw, db)`; `dx` only when requested.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    wt: &Tensor<T>,
    dy: &[T],
    k: usize,
    want_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let (n, cin, h, w) = x.dims4().expect("rank 4");
    let cout = wt.shape()[0];
    let hw = h * w;
    let kk = cin * k * k;
    let mut dw = vec![T::zero(); cout * kk];
    let mut db = vec![T::zero(); cout];
    let mut dx = want_dx.then(|| vec![T::zero(); n * cin * hw]);
    let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); kk * hw] };
    let mut dcols = if want_dx && k != 1 { vec![T::zero(); kk * hw] } else { Vec::new() };
    for i in 0..n {
        let xi = &x.data()[i * cin * hw..(i + 1) * cin * hw];
        let dyi = &dy[i * cout * hw..(i + 1) * cout * hw];
        for (co, plane) in dyi.chunks(hw).enumerate() {
            db[co] += plane.iter().copied().sum::<T>();
        }
        let patches: &[T] = if k == 1 {
            xi
        } else {
            im2col(xi, cin, h, w, k, &mut cols);
            &cols
        };
        matmul(false, true, cout, hw, kk, T::one(), dyi, patches, T::one(), &mut dw);
        if let Some(dx) = dx.as_mut() {
            let dxi = &mut dx[i * cin * hw..(i + 1) * cin * hw];
            if k == 1 {
                matmul(true, false, kk, cout, hw, T::one(), wt.data(), dyi, T::zero(), dxi);
            } else {
                matmul(true, false, kk, cout, hw, T::one(), wt.data(), dyi, T::zero(), &mut dcols);
                col2im(&dcols, cin, h, w, k, dxi);
            }
        }
    }
    (dx, dw, db)
}

/// Per-channel mean and biased variance over `(N, H, W)`.
pub fn channel_moments<T: Real>(x: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let (n, c, h, w) = x.dims4().expect("rank 4");
    let hw = h * w;
    let m: T = lit((n * hw) as f64);
    let mut mean = vec![T::zero(); c];
    for i in 0..n {
        for (ch, mu) in mean.iter_mut().enumerate() {
            let off = (i * c + ch) * hw;
            *mu += x.data()[off..off + hw].iter().copied().sum::<T>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![T::zero(); c];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            let mu = mean[ch];
            var[ch] += x.data()[off..off + hw].iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    (mean, var)
}

/// `y = gamma * (x - mean) * inv_std + beta`; also returns the normalized `x`.
pub fn affine_normalize<T: Real>(
    x: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
    gamma: &[T],
    beta: &[T],
) -> (Tensor<T>, Vec<T>) {
    let (n, c, h, w) = x.dims4().expect("rank 4");
    let hw = h * w;
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            for p in off..off + hw {
                let z = (x.data()[p] - mean[ch]) * inv_std[ch];
                xhat[p] = z;
                y[p] = gamma[ch] * z + beta[ch];
            }
        }
    }
    (Tensor::new(x.shape().to_vec(), y).expect("same shape"), xhat)
}

pub fn batch_norm_train_backward<T: Real>(
    shape: &[usize],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    dy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (n, c, hw) = (shape[0], shape[1], shape[2] * shape[3]);
    let m: T = lit((n * hw) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            for p in off..off + hw {
                dgamma[ch] += dy[p] * xhat[p];
                dbeta[ch] += dy[p];
            }
        }
    }
    // dx = gamma * inv_std / m * (m dy - sum dy - xhat * sum(dy xhat))
    let mut dx = vec![T::zero(); dy.len()];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            let s = gamma[ch] * inv_std[ch] / m;
            for p in off..off + hw {
                dx[p] = s * (m * dy[p] - dbeta[ch] - xhat[p] * dgamma[ch]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

pub fn up_conv2_forward<T: Real>(x: &Tensor<T>, wt: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, cin, h, w) = x.dims4().expect("rank 4");
    let cout = wt.shape()[1];
    let hw = h * w;
    let (oh, ow) = (2 * h, 2 * w);
    let mut y = vec![T::zero(); n * cout * oh * ow];
    let mut blocks = vec![T::zero(); cout * 4 * hw];
    for i in 0..n {
        let xi = &x.data()[i * cin * hw..(i + 1) * cin * hw];
        // rows of `blocks` are (co, a, b) taps, columns input pixels
        matmul(true, false, cout * 4, cin, hw, T::one(), wt.data(), xi, T::zero(), &mut blocks);
        let yi = &mut y[i * cout * oh * ow..(i + 1) * cout * oh * ow];
        for co in 0..cout {
            let bias = b.data()[co];
            for tap in 0..4 {
                let (a, bb) = (tap / 2, tap % 2);
                let src = &blocks[(co * 4 + tap) * hw..(co * 4 + tap + 1) * hw];
                for r in 0..h {
                    for c in 0..w {
                        yi[(co * oh + 2 * r + a) * ow + 2 * c + bb] = src[r * w + c] + bias;
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, cout, oh, ow], y).expect("upconv output")
}

pub fn up_conv2_backward<T: Real>(
    x: &Tensor<T>,
    wt: &Tensor<T>,
    dy: &[T],
    want_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let (n, cin, h, w) = x.dims4().expect("rank 4");
    let cout = wt.shape()[1];
    let hw = h * w;
    let (oh, ow) = (2 * h, 2 * w);
    let mut dw = vec![T::zero(); cin * cout * 4];
    let mut db = vec![T::zero(); cout];
    let mut dx = want_dx.then(|| vec![T::zero(); n * cin * hw]);
    let mut dblocks = vec![T::zero(); cout * 4 * hw];
    for i in 0..n {
        let dyi = &dy[i * cout * oh * ow..(i + 1) * cout * oh * ow];
        for co in 0..cout {
            db[co] += dyi[co * oh * ow..(co + 1) * oh * ow].iter().copied().sum::<T>();
            for tap in 0..4 {
                let (a, bb) = (tap / 2, tap % 2);
                let dst = &mut dblocks[(co * 4 + tap) * hw..(co * 4 + tap + 1) * hw];
                for r in 0..h {
                    for c in 0..w {
                        dst[r * w + c] = dyi[(co * oh + 2 * r + a) * ow + 2 * c + bb];
                    }
                }
            }
        }
        let xi = &x.data()[i * cin * hw..(i + 1) * cin * hw];
        matmul(false, true, cin, hw, cout * 4, T::one(), xi, &dblocks, T::one(), &mut dw);
        if let Some(dx) = dx.as_mut() {
            let dxi = &mut dx[i * cin * hw..(i + 1) * cin * hw];
            matmul(false, false, cin, cout * 4, hw, T::one(), wt.data(), &dblocks, T::zero(), dxi);
        }
    }
    (dx, dw, db)
}

#[derive(Debug, Clone, Copy)]
pub struct ClassSums<T> {
    pub inter: T,
    pub pred: T,
    pub truth: T,
}

/// Per-class `sum(p g)`, `sum p`, `sum g` over batch and pixels.
pub fn class_sums<T: Real>(p: &Tensor<T>, g: &Tensor<T>) -> Vec<ClassSums<T>> {
    let (n, c, h, w) = p.dims4().expect("rank 4");
    let hw = h * w;
    let mut out = vec![
        ClassSums {
            inter: T::zero(),
            pred: T::zero(),
            truth: T::zero(),
        };
        c
    ];
    for i in 0..n {
        for (ch, s) in out.iter_mut().enumerate() {
            let off = (i * c + ch) * hw;
            for k in off..off + hw {
                let (pv, gv) = (p.data()[k], g.data()[k]);
                s.inter += pv * gv;
                s.pred += pv;
                s.truth += gv;
            }
        }
    }
    out
}
