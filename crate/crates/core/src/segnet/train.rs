use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::adam::{AdamConfig, AdamState};
use crate::nn::layers::{Mode, RunningStats, BN_MOMENTUM};
use crate::nn::loss::{loss_registry, LossConfig, SegmentationLoss};
use crate::nn::real::lit;
use crate::nn::tape::Tape;
use crate::nn::tensor::Tensor;
use crate::segnet::model::{SegModel, SegRole};
use crate::volcore::{LabelMap, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub lr: f64,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Training loss, looked up in the loss registry.
    pub loss: String,
    pub loss_config: LossConfig,
    /// Random horizontal and vertical flips of training slices.
    pub augment_flips: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 500,
            lr: 1e-3,
            early_stop_patience: 200,
            batch_size: 8,
            seed: 0,
            loss: "combined".into(),
            loss_config: LossConfig::default(),
            augment_flips: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.early_stop_patience > self.max_epochs {
            return Err(Error::Config(format!(
                "early_stop_patience {} exceeds max_epochs {}",
                self.early_stop_patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// A preprocessed case: image and ground-truth labels on the same grid.
#[derive(Debug, Clone)]
pub struct TrainCase {
    pub image: Volume,
    pub labels: LabelMap,
}

impl TrainCase {
    pub fn new(image: Volume, labels: LabelMap) -> Result<Self> {
        if image.dims() != labels.dims() {
            return Err(Error::Shape(format!(
                "case `{}`: image {:?} vs labels {:?}",
                image.case_id(),
                image.dims(),
                labels.dims()
            )));
        }
        Ok(TrainCase { image, labels })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for r in &self.epochs {
            writeln!(s, "{},{},{}", r.epoch, r.train_loss, r.val_loss).expect("string write");
        }
        s
    }
}

/// One 2D training sample.
struct Slice<'c> {
    image: &'c [f32],
    labels: &'c [u8],
}

struct SliceSet<'c> {
    h: usize,
    w: usize,
    slices: Vec<Slice<'c>>,
}

impl<'c> SliceSet<'c> {
    fn from_cases(cases: &'c [TrainCase], size: usize) -> Result<Self> {
        let mut slices = Vec::new();
        for c in cases {
            let d = c.image.dims();
            if d.height != size || d.width != size {
                return Err(Error::Shape(format!(
                    "case `{}` is {}x{}, network expects {size}x{size}",
                    c.image.case_id(),
                    d.height,
                    d.width
                )));
            }
            for s in 0..d.slices {
                slices.push(Slice {
                    image: c.image.slice(s),
                    labels: c.labels.slice(s),
                });
            }
        }
        Ok(SliceSet { h: size, w: size, slices })
    }

    /// Input `(N,1,H,W)` and one-hot target `(N,K,H,W)` for the given slices.
    fn batch(&self, idx: &[usize], role: SegRole, flips: Option<&[(bool, bool)]>) -> (Tensor<f32>, Tensor<f32>) {
        let (h, w) = (self.h, self.w);
        let hw = h * w;
        let k = role.num_classes();
        let n = idx.len();
        let mut x = vec![0f32; n * hw];
        let mut t = vec![0f32; n * k * hw];
        for (b, &i) in idx.iter().enumerate() {
            let s = &self.slices[i];
            let (fy, fx) = flips.map_or((false, false), |f| f[b]);
            for y in 0..h {
                let sy = if fy { h - 1 - y } else { y };
                for xx in 0..w {
                    let sx = if fx { w - 1 - xx } else { xx };
                    let src = sy * w + sx;
                    let dst = y * w + xx;
                    x[b * hw + dst] = s.image[src];
                    let c = role.class_of_label(s.labels[src]);
                    t[(b * k + c) * hw + dst] = 1.0;
                }
            }
        }
        (
            Tensor::new(vec![n, 1, h, w], x).expect("batch shape"),
            Tensor::new(vec![n, k, h, w], t).expect("target shape"),
        )
    }
}

type StepOutput = (f64, Vec<Option<Vec<f32>>>, Vec<(usize, Vec<f32>, Vec<f32>)>);

fn train_step(model: &SegModel, loss: &dyn SegmentationLoss<f32>, x: Tensor<f32>, target: &Tensor<f32>) -> Result<StepOutput> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x, false);
    let out = model.net.forward(&mut tape, xv, Mode::Train)?;
    let l = loss.apply(&mut tape, out.probs, target)?;
    let value = f64::from(tape.value(l).item());
    if !value.is_finite() {
        return Err(Error::Numeric(format!("training loss became {value}")));
    }
    let mut grads = tape.backward(l);
    let g = out.bindings.iter().map(|b| b.and_then(|v| grads.take(v))).collect();
    Ok((value, g, out.observed))
}

/// Mean loss over a slice set in inference mode, weighted by batch size.
fn evaluate(model: &SegModel, loss: &dyn SegmentationLoss<f32>, set: &SliceSet<'_>, batch_size: usize) -> Result<f64> {
    let order: Vec<usize> = (0..set.slices.len()).collect();
    let mut total = 0.0;
    for chunk in order.chunks(batch_size) {
        let (x, target) = set.batch(chunk, model.role, None);
        let mut tape = Tape::new();
        let xv = tape.leaf(x, false);
        let out = model.net.forward(&mut tape, xv, Mode::Infer)?;
        let l = loss.apply(&mut tape, out.probs, &target)?;
        total += f64::from(tape.value(l).item()) * chunk.len() as f64;
    }
    let v = total / set.slices.len() as f64;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("validation loss became {v}")));
    }
    Ok(v)
}

/// Validation combined loss of `model` on `cases`, batched as in training.
pub fn monitor_loss(model: &SegModel, cases: &[TrainCase], cfg: &TrainConfig) -> Result<f64> {
    let set = SliceSet::from_cases(cases, model.spec().input_size)?;
    if set.slices.is_empty() {
        return Err(Error::Config("no slices to evaluate".into()));
    }
    let monitor = loss_registry::<f32>().create("combined", &cfg.loss_config)?;
    evaluate(model, monitor.as_ref(), &set, cfg.batch_size.max(1))
}

/// Trains on 2D slices of the training cases with Adam and early stopping on
/// the validation combined loss. When `val` is empty the training cases are
/// used for monitoring. The returned model carries the parameters and
/// running statistics of the best epoch.
pub fn train(model: &mut SegModel, train: &[TrainCase], val: &[TrainCase], cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let size = model.spec().input_size;
    let train_set = SliceSet::from_cases(train, size)?;
    if train_set.slices.is_empty() {
        return Err(Error::Config("training set has no slices".into()));
    }
    let val_set = if val.is_empty() {
        SliceSet::from_cases(train, size)?
    } else {
        SliceSet::from_cases(val, size)?
    };
    let registry = loss_registry::<f32>();
    let loss = registry.create(&cfg.loss, &cfg.loss_config)?;
    let monitor = registry.create("combined", &cfg.loss_config)?;

    let mut adam = AdamState::new(
        &model.net.params,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let momentum: f32 = lit(BN_MOMENTUM);
    let patience = cfg.early_stop_patience.max(1);

    let mut best: Option<(f64, usize, crate::nn::layers::ParamStore<f32>, Vec<RunningStats<f32>>)> = None;
    let mut epochs = Vec::new();
    let mut wait = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.slices.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let flips: Option<Vec<(bool, bool)>> =
                cfg.augment_flips.then(|| chunk.iter().map(|_| (rng.gen(), rng.gen())).collect());
            let (x, target) = train_set.batch(chunk, model.role, flips.as_deref());
            let (value, grads, observed) = train_step(model, loss.as_ref(), x, &target)?;
            total += value * chunk.len() as f64;
            for (i, mean, var) in observed {
                model.net.running[i].update(&mean, &var, momentum);
            }
            adam.step(&mut model.net.params, &grads)?;
        }
        let train_loss = total / train_set.slices.len() as f64;
        let val_loss = evaluate(model, monitor.as_ref(), &val_set, cfg.batch_size)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let improved = best.as_ref().map_or(true, |(b, ..)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, model.net.params.clone(), model.net.running.clone()));
            wait = 0;
        } else {
            wait += 1;
            if wait >= patience {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }

    let (best_val_loss, best_epoch, params, running) = best.expect("at least one epoch ran");
    model.net.params = params;
    model.net.running = running;
    Ok(History {
        epochs,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}
