//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and enough cached
//! state to run its vector-Jacobian product. Parameters enter the tape as
//! borrowed leaves, so building a graph never copies weights.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::nn::kernels;
use crate::nn::real::{lit, Real};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, k: usize },
    Dense { x: Var, w: Var, b: Var },
    Elu { x: Var },
    Relu { x: Var },
    Sigmoid { x: Var },
    BatchNormTrain { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    BatchNormInfer { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    GlobalAvgPool { x: Var },
    ScaleChannels { x: Var, g: Var },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    UpConv2 { x: Var, w: Var, b: Var },
    Concat { a: Var, b: Var },
    Softmax { x: Var },
    Dice { p: Var, target: Vec<T>, smooth: T, first_class: usize },
    CrossEntropy { p: Var, target: Vec<T>, clamp: T },
    Add { a: Var, b: Var },
    Scale { x: Var, c: T },
    Dot { x: Var, weights: Vec<T> },
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads[v.0].take()
    }
}

/// Batch statistics observed by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

pub struct Tape<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf borrowed from a parameter store.
    pub fn param(&mut self, t: &'a Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Owned leaf; `requires_grad` decides whether backward reaches it.
    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// `k x k` cross-correlation, stride 1, zero padding `k / 2`, plus bias.
    /// Weights are `(Cout, Cin, k, k)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        let (_, cin, _, _) = xt.dims4()?;
        let (cout, wcin, kh, kw) = wt.dims4()?;
        if wcin != cin || kh != kw || kh % 2 == 0 || bt.shape() != [cout] {
            return Err(Error::Shape(format!(
                "conv2d: input {:?}, weight {:?}, bias {:?}",
                xt.shape(),
                wt.shape(),
                bt.shape()
            )));
        }
        let y = kernels::conv2d_forward(xt, wt, bt, kh);
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(y, Op::Conv2d { x, w, b, k: kh }, rg))
    }

    /// `x (N, Cin) -> x W^T + b` with `W (Cout, Cin)`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        let (n, cin) = xt.dims2()?;
        let (cout, wcin) = wt.dims2()?;
        if wcin != cin || bt.shape() != [cout] {
            return Err(Error::Shape(format!(
                "dense: input {:?}, weight {:?}, bias {:?}",
                xt.shape(),
                wt.shape(),
                bt.shape()
            )));
        }
        let mut y = vec![T::zero(); n * cout];
        for i in 0..n {
            let xi = &xt.data()[i * cin..(i + 1) * cin];
            for o in 0..cout {
                let wo = &wt.data()[o * cin..(o + 1) * cin];
                y[i * cout + o] = bt.data()[o] + xi.iter().zip(wo).map(|(&a, &b)| a * b).sum::<T>();
            }
        }
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(Tensor::new(vec![n, cout], y)?, Op::Dense { x, w, b }, rg))
    }

    /// ELU with alpha = 1.
    pub fn elu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| if v > T::zero() { v } else { v.exp_m1() });
        let rg = self.rg(&[x]);
        self.push(y, Op::Elu { x }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v.max(T::zero()));
        let rg = self.rg(&[x]);
        self.push(y, Op::Relu { x }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        let rg = self.rg(&[x]);
        self.push(y, Op::Sigmoid { x }, rg)
    }

    /// Normalizes each channel over `(N, H, W)` with the batch statistics.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, BatchStats<T>)> {
        let (xt, gt, bt) = (self.value(x), self.value(gamma), self.value(beta));
        let (_, c, _, _) = xt.dims4()?;
        if gt.shape() != [c] || bt.shape() != [c] {
            return Err(Error::Shape(format!("batch_norm: {} channels vs params {:?}", c, gt.shape())));
        }
        let (mean, var) = kernels::channel_moments(xt);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (y, xhat) = kernels::affine_normalize(xt, &mean, &inv_std, gt.data(), bt.data());
        let rg = self.rg(&[x, gamma, beta]);
        let v = self.push(y, Op::BatchNormTrain { x, gamma, beta, xhat, inv_std }, rg);
        Ok((v, BatchStats { mean, var }))
    }

    /// Normalizes with fixed running statistics.
    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
        eps: T,
    ) -> Result<Var> {
        let (xt, gt, bt) = (self.value(x), self.value(gamma), self.value(beta));
        let (_, c, _, _) = xt.dims4()?;
        if gt.shape() != [c] || bt.shape() != [c] || running_mean.len() != c || running_var.len() != c {
            return Err(Error::Shape(format!("batch_norm: {} channels vs params {:?}", c, gt.shape())));
        }
        let inv_std: Vec<T> = running_var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (y, xhat) = kernels::affine_normalize(xt, running_mean, &inv_std, gt.data(), bt.data());
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(y, Op::BatchNormInfer { x, gamma, beta, xhat, inv_std }, rg))
    }

    /// `(N, C, H, W) -> (N, C)` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        let (n, c, h, w) = xt.dims4()?;
        let hw = h * w;
        let denom: T = lit(hw as f64);
        let y: Vec<T> = xt.data().chunks(hw).map(|ch| ch.iter().copied().sum::<T>() / denom).collect();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(vec![n, c], y)?, Op::GlobalAvgPool { x }, rg))
    }

    /// Multiplies every channel plane of `x (N, C, H, W)` by `g (N, C)`.
    pub fn scale_channels(&mut self, x: Var, g: Var) -> Result<Var> {
        let (xt, gt) = (self.value(x), self.value(g));
        let (n, c, h, w) = xt.dims4()?;
        if gt.shape() != [n, c] {
            return Err(Error::Shape(format!("scale_channels: {:?} vs gates {:?}", xt.shape(), gt.shape())));
        }
        let hw = h * w;
        let mut y = xt.data().to_vec();
        for (plane, &s) in y.chunks_mut(hw).zip(gt.data()) {
            plane.iter_mut().for_each(|v| *v *= s);
        }
        let rg = self.rg(&[x, g]);
        Ok(self.push(Tensor::new(vec![n, c, h, w], y)?, Op::ScaleChannels { x, g }, rg))
    }

    /// 2x2 max pooling with stride 2. Gradients go to the first maximal
    /// element of each window in row-major order.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        let (n, c, h, w) = xt.dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("max_pool2 needs even spatial dims, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut y = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        let d = xt.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let cands = [
                        base + 2 * i * w + 2 * j,
                        base + 2 * i * w + 2 * j + 1,
                        base + (2 * i + 1) * w + 2 * j,
                        base + (2 * i + 1) * w + 2 * j + 1,
                    ];
                    let mut best = cands[0];
                    for &idx in &cands[1..] {
                        if d[idx] > d[best] {
                            best = idx;
                        }
                    }
                    y.push(d[best]);
                    argmax.push(best);
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(vec![n, c, oh, ow], y)?, Op::MaxPool2 { x, argmax }, rg))
    }

    /// 2x2 transposed convolution with stride 2. Weights are `(Cin, Cout, 2, 2)`.
    pub fn up_conv2(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        let (_, cin, _, _) = xt.dims4()?;
        let (wcin, cout, kh, kw) = wt.dims4()?;
        if wcin != cin || kh != 2 || kw != 2 || bt.shape() != [cout] {
            return Err(Error::Shape(format!(
                "up_conv2: input {:?}, weight {:?}, bias {:?}",
                xt.shape(),
                wt.shape(),
                bt.shape()
            )));
        }
        let y = kernels::up_conv2_forward(xt, wt, bt);
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(y, Op::UpConv2 { x, w, b }, rg))
    }

    /// Stacks `a` then `b` along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a), self.value(b));
        let (n, ca, h, w) = at.dims4()?;
        let (nb, cb, hb, wb) = bt.dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::Shape(format!("concat: {:?} vs {:?}", at.shape(), bt.shape())));
        }
        let (sa, sb) = (ca * h * w, cb * h * w);
        let mut y = Vec::with_capacity(n * (sa + sb));
        for i in 0..n {
            y.extend_from_slice(&at.data()[i * sa..(i + 1) * sa]);
            y.extend_from_slice(&bt.data()[i * sb..(i + 1) * sb]);
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![n, ca + cb, h, w], y)?, Op::Concat { a, b }, rg))
    }

    /// Per-pixel softmax over channels.
    pub fn softmax_channels(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        let (n, c, h, w) = xt.dims4()?;
        let hw = h * w;
        let mut y = xt.data().to_vec();
        for i in 0..n {
            let s = &mut y[i * c * hw..(i + 1) * c * hw];
            for p in 0..hw {
                let mut m = T::neg_infinity();
                for ch in 0..c {
                    m = m.max(s[ch * hw + p]);
                }
                let mut z = T::zero();
                for ch in 0..c {
                    let e = (s[ch * hw + p] - m).exp();
                    s[ch * hw + p] = e;
                    z += e;
                }
                for ch in 0..c {
                    s[ch * hw + p] /= z;
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(vec![n, c, h, w], y)?, Op::Softmax { x }, rg))
    }

    /// `1 - mean_c (2 sum(p g) + s) / (sum p + sum g + s)` over classes
    /// `first_class..C`, sums taken over batch and pixels.
    pub fn dice_loss(&mut self, p: Var, target: &Tensor<T>, smooth: T, include_background: bool) -> Result<Var> {
        let pt = self.value(p);
        same_shape(pt, target, "dice_loss")?;
        let (_, c, _, _) = pt.dims4()?;
        let first_class = usize::from(!include_background);
        if first_class >= c {
            return Err(Error::Shape("dice_loss: no classes to average".into()));
        }
        let sums = kernels::class_sums(pt, target);
        let mut acc = T::zero();
        for s in &sums[first_class..] {
            acc += (lit::<T>(2.0) * s.inter + smooth) / (s.pred + s.truth + smooth);
        }
        let loss = T::one() - acc / lit((c - first_class) as f64);
        let rg = self.rg(&[p]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Dice {
                p,
                target: target.data().to_vec(),
                smooth,
                first_class,
            },
            rg,
        ))
    }

    /// Mean over pixels of `-sum_c g log(max(p, clamp))`.
    pub fn cross_entropy(&mut self, p: Var, target: &Tensor<T>, clamp: T) -> Result<Var> {
        let pt = self.value(p);
        same_shape(pt, target, "cross_entropy")?;
        let (n, c, h, w) = pt.dims4()?;
        let _ = c;
        let pixels: T = lit((n * h * w) as f64);
        let total: T = pt
            .data()
            .iter()
            .zip(target.data())
            .filter(|(_, &g)| g != T::zero())
            .map(|(&p, &g)| g * p.max(clamp).ln())
            .sum();
        let rg = self.rg(&[p]);
        Ok(self.push(
            Tensor::scalar(-total / pixels),
            Op::CrossEntropy {
                p,
                target: target.data().to_vec(),
                clamp,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a), self.value(b));
        same_shape(at, bt, "add")?;
        let y: Vec<T> = at.data().iter().zip(bt.data()).map(|(&x, &y)| x + y).collect();
        let shape = at.shape().to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(shape, y)?, Op::Add { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let y = self.value(x).map(|v| v * c);
        let rg = self.rg(&[x]);
        self.push(y, Op::Scale { x, c }, rg)
    }

    /// Scalar `sum_i x_i w_i` with constant weights.
    pub fn dot_const(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        let xt = self.value(x);
        if xt.len() != weights.len() {
            return Err(Error::Shape(format!("dot: {} values vs {} weights", xt.len(), weights.len())));
        }
        let s = xt.data().iter().zip(&weights).map(|(&a, &b)| a * b).sum();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::Dot { x, weights }, rg))
    }

    /// Propagates `d out / d out = 1` back through the tape.
    pub fn backward(&self, out: Var) -> Gradients<T> {
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(vec![T::one(); self.nodes[out.0].value.len()]);
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.backprop_node(node, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        Gradients { grads }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node<'a, T>, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        let acc = |grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>| match &mut grads[v.0] {
            Some(existing) => existing.iter_mut().zip(g).for_each(|(e, x)| *e += x),
            slot => *slot = Some(g),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, k } => {
                let (dx, dw, db) = kernels::conv2d_backward(self.value(*x), self.value(*w), dy, *k, self.wants(*x));
                if let Some(dx) = dx {
                    acc(grads, *x, dx);
                }
                if self.wants(*w) {
                    acc(grads, *w, dw);
                }
                if self.wants(*b) {
                    acc(grads, *b, db);
                }
            }
            Op::Dense { x, w, b } => {
                let (xt, wt) = (self.value(*x), self.value(*w));
                let (n, cin) = xt.dims2().expect("checked");
                let cout = wt.shape()[0];
                let mut dx = vec![T::zero(); n * cin];
                let mut dw = vec![T::zero(); cout * cin];
                let mut db = vec![T::zero(); cout];
                for i in 0..n {
                    for o in 0..cout {
                        let g = dy[i * cout + o];
                        db[o] += g;
                        for j in 0..cin {
                            dw[o * cin + j] += g * xt.data()[i * cin + j];
                            dx[i * cin + j] += g * wt.data()[o * cin + j];
                        }
                    }
                }
                acc(grads, *x, dx);
                acc(grads, *w, dw);
                acc(grads, *b, db);
            }
            Op::Elu { x } => {
                let xs = self.value(*x).data();
                let g = xs
                    .iter()
                    .zip(dy)
                    .map(|(&v, &d)| if v > T::zero() { d } else { d * v.exp() })
                    .collect();
                acc(grads, *x, g);
            }
            Op::Relu { x } => {
                let xs = self.value(*x).data();
                let g = xs
                    .iter()
                    .zip(dy)
                    .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                    .collect();
                acc(grads, *x, g);
            }
            Op::Sigmoid { x } => {
                let ys = node.value.data();
                let g = ys.iter().zip(dy).map(|(&s, &d)| d * s * (T::one() - s)).collect();
                acc(grads, *x, g);
            }
            Op::BatchNormTrain { x, gamma, beta, xhat, inv_std } => {
                let shape = self.value(*x).shape();
                let (dx, dg, db) = kernels::batch_norm_train_backward(shape, xhat, inv_std, self.value(*gamma).data(), dy);
                acc(grads, *x, dx);
                acc(grads, *gamma, dg);
                acc(grads, *beta, db);
            }
            Op::BatchNormInfer { x, gamma, beta, xhat, inv_std } => {
                let shape = self.value(*x).shape();
                let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
                let hw = h * w;
                let gam = self.value(*gamma).data();
                let mut dx = vec![T::zero(); dy.len()];
                let mut dg = vec![T::zero(); c];
                let mut db = vec![T::zero(); c];
                for i in 0..n {
                    for ch in 0..c {
                        let off = (i * c + ch) * hw;
                        let s = gam[ch] * inv_std[ch];
                        for p in off..off + hw {
                            dx[p] = dy[p] * s;
                            dg[ch] += dy[p] * xhat[p];
                            db[ch] += dy[p];
                        }
                    }
                }
                acc(grads, *x, dx);
                acc(grads, *gamma, dg);
                acc(grads, *beta, db);
            }
            Op::GlobalAvgPool { x } => {
                let xt = self.value(*x);
                let (_, _, h, w) = xt.dims4().expect("checked");
                let hw = h * w;
                let inv: T = T::one() / lit(hw as f64);
                let mut g = Vec::with_capacity(xt.len());
                for &d in dy {
                    g.extend(std::iter::repeat(d * inv).take(hw));
                }
                acc(grads, *x, g);
            }
            Op::ScaleChannels { x, g } => {
                let (xt, gt) = (self.value(*x), self.value(*g));
                let (_, _, h, w) = xt.dims4().expect("checked");
                let hw = h * w;
                let mut dx = dy.to_vec();
                let mut dg = vec![T::zero(); gt.len()];
                for (plane, (&s, dgs)) in gt.data().iter().zip(dg.iter_mut()).enumerate() {
                    let r = plane * hw..(plane + 1) * hw;
                    dx[r.clone()].iter_mut().for_each(|v| *v *= s);
                    *dgs = dy[r.clone()].iter().zip(&xt.data()[r]).map(|(&a, &b)| a * b).sum();
                }
                acc(grads, *x, dx);
                acc(grads, *g, dg);
            }
            Op::MaxPool2 { x, argmax } => {
                let mut g = vec![T::zero(); self.value(*x).len()];
                for (&idx, &d) in argmax.iter().zip(dy) {
                    g[idx] += d;
                }
                acc(grads, *x, g);
            }
            Op::UpConv2 { x, w, b } => {
                let (dx, dw, db) = kernels::up_conv2_backward(self.value(*x), self.value(*w), dy, self.wants(*x));
                if let Some(dx) = dx {
                    acc(grads, *x, dx);
                }
                acc(grads, *w, dw);
                acc(grads, *b, db);
            }
            Op::Concat { a, b } => {
                let (n, ca, h, w) = self.value(*a).dims4().expect("checked");
                let cb = self.value(*b).shape()[1];
                let (sa, sb) = (ca * h * w, cb * h * w);
                let mut ga = Vec::with_capacity(n * sa);
                let mut gb = Vec::with_capacity(n * sb);
                for i in 0..n {
                    let off = i * (sa + sb);
                    ga.extend_from_slice(&dy[off..off + sa]);
                    gb.extend_from_slice(&dy[off + sa..off + sa + sb]);
                }
                if self.wants(*a) {
                    acc(grads, *a, ga);
                }
                if self.wants(*b) {
                    acc(grads, *b, gb);
                }
            }
            Op::Softmax { x } => {
                let yt = &node.value;
                let (n, c, h, w) = yt.dims4().expect("checked");
                let hw = h * w;
                let ys = yt.data();
                let mut g = vec![T::zero(); ys.len()];
                for i in 0..n {
                    let base = i * c * hw;
                    for p in 0..hw {
                        let mut dotp = T::zero();
                        for ch in 0..c {
                            let k = base + ch * hw + p;
                            dotp += dy[k] * ys[k];
                        }
                        for ch in 0..c {
                            let k = base + ch * hw + p;
                            g[k] = ys[k] * (dy[k] - dotp);
                        }
                    }
                }
                acc(grads, *x, g);
            }
            Op::Dice { p, target, smooth, first_class } => {
                let pt = self.value(*p);
                let (n, c, h, w) = pt.dims4().expect("checked");
                let hw = h * w;
                let tgt = Tensor::new(pt.shape().to_vec(), target.clone()).expect("checked");
                let sums = kernels::class_sums(pt, &tgt);
                let classes: T = lit((c - first_class) as f64);
                let two: T = lit(2.0);
                let mut g = vec![T::zero(); pt.len()];
                let scale = dy[0];
                for ch in *first_class..c {
                    let s = &sums[ch];
                    let den = s.pred + s.truth + *smooth;
                    let num = two * s.inter + *smooth;
                    for i in 0..n {
                        let off = (i * c + ch) * hw;
                        for k in off..off + hw {
                            let dd = (two * target[k] * den - num) / (den * den);
                            g[k] = -scale * dd / classes;
                        }
                    }
                }
                acc(grads, *p, g);
            }
            Op::CrossEntropy { p, target, clamp } => {
                let pt = self.value(*p);
                let (n, _, h, w) = pt.dims4().expect("checked");
                let pixels: T = lit((n * h * w) as f64);
                let scale = dy[0];
                let g = pt
                    .data()
                    .iter()
                    .zip(target)
                    .map(|(&pv, &gv)| {
                        if gv != T::zero() && pv > *clamp {
                            -scale * gv / (pv * pixels)
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                acc(grads, *p, g);
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    acc(grads, *a, dy.to_vec());
                }
                if self.wants(*b) {
                    acc(grads, *b, dy.to_vec());
                }
            }
            Op::Scale { x, c } => acc(grads, *x, dy.iter().map(|&d| d * *c).collect()),
            Op::Dot { x, weights } => acc(grads, *x, weights.iter().map(|&w| w * dy[0]).collect()),
        }
    }
}
