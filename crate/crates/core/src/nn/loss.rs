//! Segmentation losses over softmax probabilities and one-hot targets.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::real::{lit, Real};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;
use crate::registry::Registry;

pub const DICE_SMOOTH: f64 = 1.0;
pub const CE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub dice_smooth: f64,
    pub dice_include_background: bool,
    pub ce_clamp: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            dice_smooth: DICE_SMOOTH,
            dice_include_background: true,
            ce_clamp: CE_CLAMP,
        }
    }
}

pub trait SegmentationLoss<T: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Appends the scalar loss for `probs` against `target` to the tape.
    fn apply(&self, tape: &mut Tape<'_, T>, probs: Var, target: &Tensor<T>) -> Result<Var>;
}

pub struct DiceLoss {
    pub smooth: f64,
    pub include_background: bool,
}

impl<T: Real> SegmentationLoss<T> for DiceLoss {
    fn name(&self) -> &'static str {
        "dice"
    }

    fn apply(&self, tape: &mut Tape<'_, T>, probs: Var, target: &Tensor<T>) -> Result<Var> {
        tape.dice_loss(probs, target, lit(self.smooth), self.include_background)
    }
}

pub struct CrossEntropyLoss {
    pub clamp: f64,
}

impl<T: Real> SegmentationLoss<T> for CrossEntropyLoss {
    fn name(&self) -> &'static str {
        "cross-entropy"
    }

    fn apply(&self, tape: &mut Tape<'_, T>, probs: Var, target: &Tensor<T>) -> Result<Var> {
        tape.cross_entropy(probs, target, lit(self.clamp))
    }
}

/// Arithmetic mean of the Dice and cross-entropy losses.
pub struct CombinedLoss {
    pub dice: DiceLoss,
    pub ce: CrossEntropyLoss,
}

impl<T: Real> SegmentationLoss<T> for CombinedLoss {
    fn name(&self) -> &'static str {
        "combined"
    }

    fn apply(&self, tape: &mut Tape<'_, T>, probs: Var, target: &Tensor<T>) -> Result<Var> {
        let d = SegmentationLoss::<T>::apply(&self.dice, tape, probs, target)?;
        let c = SegmentationLoss::<T>::apply(&self.ce, tape, probs, target)?;
        let sum = tape.add(d, c)?;
        Ok(tape.scale(sum, lit(0.5)))
    }
}

pub fn loss_registry<T: Real>() -> Registry<dyn SegmentationLoss<T>, LossConfig> {
    let mut r: Registry<dyn SegmentationLoss<T>, LossConfig> = Registry::new("loss");
    r.register("dice", |c: &LossConfig| {
        Box::new(DiceLoss {
            smooth: c.dice_smooth,
            include_background: c.dice_include_background,
        })
    })
    .expect("fresh registry");
    r.register("cross-entropy", |c: &LossConfig| Box::new(CrossEntropyLoss { clamp: c.ce_clamp }))
        .expect("fresh registry");
    r.register("combined", |c: &LossConfig| {
        Box::new(CombinedLoss {
            dice: DiceLoss {
                smooth: c.dice_smooth,
                include_background: c.dice_include_background,
            },
            ce: CrossEntropyLoss { clamp: c.ce_clamp },
        })
    })
    .expect("fresh registry");
    r
}
