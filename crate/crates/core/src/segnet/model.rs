use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::adam::AdamState;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::layers::{Mode, RunningStats};
use crate::nn::tape::Tape;
use crate::nn::tensor::Tensor;
use crate::segnet::unet::{UNet, UNetSpec};
use crate::volcore::{Dims, LabelMap, Volume};

/// Which of the two segmentation networks a model is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegRole {
    /// Background, LV cavity, myocardium.
    Anatomical,
    /// Background, normal myocardium, infarction, no-reflow.
    Pathological,
}

impl SegRole {
    pub fn num_classes(self) -> usize {
        match self {
            SegRole::Anatomical => 3,
            SegRole::Pathological => 4,
        }
    }

    /// Network class for a ground-truth label code. The anatomical network
    /// sees pathology as myocardium; the pathological network sees the LV
    /// cavity as background.
    pub fn class_of_label(self, label: u8) -> usize {
        match (self, label) {
            (SegRole::Anatomical, 0) => 0,
            (SegRole::Anatomical, 1) => 1,
            (SegRole::Anatomical, _) => 2,
            (SegRole::Pathological, 0 | 1) => 0,
            (SegRole::Pathological, 2) => 1,
            (SegRole::Pathological, 3) => 2,
            (SegRole::Pathological, _) => 3,
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            SegRole::Anatomical => &["background", "lv_cavity", "myocardium"],
            SegRole::Pathological => &["background", "normal_myocardium", "infarction", "no_reflow"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SegRole::Anatomical => "anatomical",
            SegRole::Pathological => "pathological",
        }
    }
}

impl fmt::Display for SegRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anatomical" => Ok(SegRole::Anatomical),
            "pathological" => Ok(SegRole::Pathological),
            other => Err(Error::Config(format!("unknown network role `{other}`"))),
        }
    }
}

/// Class-index map in a network's own class space; the voxel grid reuses
/// [`LabelMap`] storage since both spaces fit in `0..=4`.
pub type ClassMap = LabelMap;

#[derive(Debug, Clone)]
pub struct SegModel {
    pub role: SegRole,
    pub net: UNet<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    format: String,
    role: SegRole,
    spec: UNetSpec,
}

const META_FORMAT: &str = "mieval-segmodel-1";

impl SegModel {
    pub fn build(role: SegRole, spec: UNetSpec, seed: u64) -> Result<Self> {
        if spec.num_classes != role.num_classes() {
            return Err(Error::Config(format!(
                "{role} network needs {} classes, spec has {}",
                role.num_classes(),
                spec.num_classes
            )));
        }
        Ok(SegModel {
            role,
            net: UNet::new(spec, seed)?,
        })
    }

    pub fn spec(&self) -> &UNetSpec {
        self.net.spec()
    }

    /// Softmax probabilities for a batch of slices `(N, 1, H, W)`.
    pub fn probabilities(&self, batch: Tensor<f32>) -> Result<Tensor<f32>> {
        let mut tape = Tape::new();
        let x = tape.leaf(batch, false);
        let out = self.net.forward(&mut tape, x, Mode::Infer)?;
        Ok(tape.value(out.probs).clone())
    }

    /// Per-slice argmax, stacked back into a 3D class map. Ties go to the
    /// lower class index.
    pub fn predict_case(&self, v: &Volume) -> Result<ClassMap> {
        let d = v.dims();
        let hw = d.slice_len();
        let k = self.role.num_classes();
        let mut classes = Vec::with_capacity(d.len());
        const CHUNK: usize = 8;
        let mut s = 0;
        while s < d.slices {
            let n = CHUNK.min(d.slices - s);
            let data = v.data()[s * hw..(s + n) * hw].to_vec();
            let probs = self.probabilities(Tensor::new(vec![n, 1, d.height, d.width], data)?)?;
            classes.extend(argmax_channels(probs.data(), n, k, hw));
            s += n;
        }
        LabelMap::new(Dims::new(d.slices, d.height, d.width)?, v.spacing(), classes)
    }

    pub fn to_checkpoint(&self, optimizer: Option<AdamState<f32>>) -> Checkpoint<f32> {
        let meta = ModelMeta {
            format: META_FORMAT.into(),
            role: self.role,
            spec: *self.spec(),
        };
        let mut tensors: Vec<(String, Tensor<f32>)> = self
            .net
            .params
            .names()
            .iter()
            .cloned()
            .zip(self.net.params.tensors().iter().cloned())
            .collect();
        for (i, rs) in self.net.running.iter().enumerate() {
            let c = rs.mean.len();
            tensors.push((format!("running.{i}.mean"), Tensor::new(vec![c], rs.mean.clone()).expect("c >= 1")));
            tensors.push((format!("running.{i}.var"), Tensor::new(vec![c], rs.var.clone()).expect("c >= 1")));
        }
        Checkpoint {
            metadata: serde_json::to_string(&meta).expect("serializable"),
            tensors,
            optimizer,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint<f32>) -> Result<Self> {
        let meta: ModelMeta = serde_json::from_str(&ck.metadata)?;
        if meta.format != META_FORMAT {
            return Err(Error::Checkpoint(format!("unknown model format `{}`", meta.format)));
        }
        let mut model = SegModel::build(meta.role, meta.spec, 0)?;
        model.net.params.load_named(&ck.tensors)?;
        let running: Vec<RunningStats<f32>> = (0..model.net.running.len())
            .map(|i| {
                let find = |suffix: &str| {
                    let name = format!("running.{i}.{suffix}");
                    ck.tensors
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, t)| t.data().to_vec())
                        .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
                };
                Ok(RunningStats {
                    mean: find("mean")?,
                    var: find("var")?,
                })
            })
            .collect::<Result<_>>()?;
        for (have, want) in running.iter().zip(&model.net.running) {
            if have.mean.len() != want.mean.len() || have.var.len() != want.var.len() {
                return Err(Error::Checkpoint("running statistics have the wrong width".into()));
            }
        }
        model.net.running = running;
        Ok(model)
    }
}

/// Argmax over channels of `(N, K, HW)` probabilities, first maximum wins.
pub fn argmax_channels(probs: &[f32], n: usize, k: usize, hw: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n * hw);
    for i in 0..n {
        let base = i * k * hw;
        for p in 0..hw {
            let mut best = 0;
            for c in 1..k {
                if probs[base + c * hw + p] > probs[base + best * hw + p] {
                    best = c;
                }
            }
            out.push(best as u8);
        }
    }
    out
}
