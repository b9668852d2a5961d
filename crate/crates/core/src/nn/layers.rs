//! Parameter storage, layer descriptors and the forward context that binds
//! them to a tape.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::init::he_init_with;
use crate::nn::real::{lit, Real};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
pub const SE_REDUCTION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replaces values from `(name, tensor)` pairs, requiring identical
    /// names and shapes.
    pub fn load_named(&mut self, named: &[(String, Tensor<T>)]) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let (_, t) = named
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.shape() != self.tensors[i].shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    self.tensors[i].shape()
                )));
            }
            self.tensors[i] = t.clone();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
}

impl Conv2d {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, k: usize, rng: &mut R) -> Self {
        let w = store.add(format!("{name}.weight"), he_init_with(&[cout, cin, k, k], cin * k * k, rng));
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Conv2d { w, b }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        let w = store.add(format!("{name}.weight"), he_init_with(&[cout, cin], cin, rng));
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Dense { w, b }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UpConv2 {
    pub w: ParamId,
    pub b: ParamId,
}

impl UpConv2 {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        // each output pixel sees exactly one tap per input channel
        let w = store.add(format!("{name}.weight"), he_init_with(&[cin, cout, 2, 2], cin, rng));
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        UpConv2 { w, b }
    }
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(c: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); c],
            var: vec![T::one(); c],
        }
    }

    pub fn update(&mut self, batch_mean: &[T], batch_var: &[T], momentum: T) {
        let keep = momentum;
        let take = T::one() - momentum;
        for (r, &b) in self.mean.iter_mut().zip(batch_mean) {
            *r = keep * *r + take * b;
        }
        for (r, &b) in self.var.iter_mut().zip(batch_var) {
            *r = keep * *r + take * b;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    /// Index into the model's running-statistics list.
    pub stats: usize,
}

impl BatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, stats: &mut Vec<RunningStats<T>>, name: &str, c: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[c], T::one()));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[c]));
        stats.push(RunningStats::new(c));
        BatchNorm {
            gamma,
            beta,
            stats: stats.len() - 1,
        }
    }
}

pub fn se_hidden_width(c: usize) -> usize {
    (c / SE_REDUCTION).max(2)
}

/// Squeeze-and-excitation: global pool, FC + ReLU, FC + sigmoid, channel gate.
#[derive(Debug, Clone, Copy)]
pub struct SqueezeExcite {
    pub squeeze: Dense,
    pub excite: Dense,
}

impl SqueezeExcite {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, c: usize, rng: &mut R) -> Self {
        let hidden = se_hidden_width(c);
        SqueezeExcite {
            squeeze: Dense::new(store, &format!("{name}.fc1"), c, hidden, rng),
            excite: Dense::new(store, &format!("{name}.fc2"), hidden, c, rng),
        }
    }
}

/// Binds a parameter store to a tape for one forward pass. Each parameter
/// enters the tape once, so its gradient is accumulated in a single slot.
pub struct Forward<'t, 'a, T: Real> {
    pub tape: &'t mut Tape<'a, T>,
    params: &'a ParamStore<T>,
    bound: Vec<Option<Var>>,
    pub mode: Mode,
    /// Batch statistics observed in training mode, keyed by stats index.
    pub observed: Vec<(usize, Vec<T>, Vec<T>)>,
    running: &'a [RunningStats<T>],
}

impl<'t, 'a, T: Real> Forward<'t, 'a, T> {
    pub fn new(tape: &'t mut Tape<'a, T>, params: &'a ParamStore<T>, running: &'a [RunningStats<T>], mode: Mode) -> Self {
        Forward {
            tape,
            params,
            bound: vec![None; params.len()],
            mode,
            observed: Vec::new(),
            running,
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.param(self.params.get(id));
        self.bound[id.0] = Some(v);
        v
    }

    /// Tape variable bound to each parameter, if it was used.
    pub fn bindings(&self) -> &[Option<Var>] {
        &self.bound
    }

    pub fn conv(&mut self, x: Var, l: &Conv2d) -> Result<Var> {
        let (w, b) = (self.param(l.w), self.param(l.b));
        self.tape.conv2d(x, w, b)
    }

    pub fn dense(&mut self, x: Var, l: &Dense) -> Result<Var> {
        let (w, b) = (self.param(l.w), self.param(l.b));
        self.tape.dense(x, w, b)
    }

    pub fn up_conv(&mut self, x: Var, l: &UpConv2) -> Result<Var> {
        let (w, b) = (self.param(l.w), self.param(l.b));
        self.tape.up_conv2(x, w, b)
    }

    pub fn batch_norm(&mut self, x: Var, l: &BatchNorm) -> Result<Var> {
        let (g, b) = (self.param(l.gamma), self.param(l.beta));
        let eps = lit(BN_EPS);
        match self.mode {
            Mode::Train => {
                let (y, stats) = self.tape.batch_norm_train(x, g, b, eps)?;
                self.observed.push((l.stats, stats.mean, stats.var));
                Ok(y)
            }
            Mode::Infer => {
                let rs = &self.running[l.stats];
                self.tape.batch_norm_infer(x, g, b, &rs.mean, &rs.var, eps)
            }
        }
    }

    pub fn squeeze_excite(&mut self, x: Var, l: &SqueezeExcite) -> Result<Var> {
        let pooled = self.tape.global_avg_pool(x)?;
        let h = self.dense(pooled, &l.squeeze)?;
        let h = self.tape.relu(h);
        let gates = self.dense(h, &l.excite)?;
        let gates = self.tape.sigmoid(gates);
        self.tape.scale_channels(x, gates)
    }
}
