//! Encoder-decoder network: per stage two `conv3x3 -> ELU -> BN -> SE`
//! blocks, 2x2 max pooling between encoder stages, 2x2 up-convolution plus
//! skip concatenation in the decoder, and a 1x1 convolution with softmax.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{BatchNorm, Conv2d, Forward, Mode, ParamStore, RunningStats, SqueezeExcite, UpConv2};
use crate::nn::real::Real;
use crate::nn::tape::Var;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetSpec {
    pub in_channels: usize,
    pub base_features: usize,
    /// Number of down-sampling stages.
    pub depth: usize,
    pub num_classes: usize,
    pub input_size: usize,
}

impl Default for UNetSpec {
    fn default() -> Self {
        UNetSpec {
            in_channels: 1,
            base_features: 32,
            depth: 4,
            num_classes: 3,
            input_size: 256,
        }
    }
}

impl UNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_features == 0 {
            return Err(Error::Config("network channels must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!("num_classes must be >= 2, got {}", self.num_classes)));
        }
        let stride = 1usize << self.depth;
        if self.input_size == 0 || self.input_size % stride != 0 {
            return Err(Error::Config(format!(
                "input size {} is not divisible by 2^depth = {stride}",
                self.input_size
            )));
        }
        Ok(())
    }

    /// Feature width at encoder level `level` (0 = full resolution).
    pub fn features(&self, level: usize) -> usize {
        self.base_features << level
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    conv: Conv2d,
    bn: BatchNorm,
    se: SqueezeExcite,
}

impl Block {
    fn new<T: Real>(
        store: &mut ParamStore<T>,
        stats: &mut Vec<RunningStats<T>>,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Block {
            conv: Conv2d::new(store, &format!("{name}.conv"), cin, cout, 3, rng),
            bn: BatchNorm::new(store, stats, &format!("{name}.bn"), cout),
            se: SqueezeExcite::new(store, &format!("{name}.se"), cout, rng),
        }
    }

    fn forward<T: Real>(&self, f: &mut Forward<'_, '_, T>, x: Var) -> Result<Var> {
        let y = f.conv(x, &self.conv)?;
        let y = f.tape.elu(y);
        let y = f.batch_norm(y, &self.bn)?;
        f.squeeze_excite(y, &self.se)
    }
}

#[derive(Debug, Clone, Copy)]
struct Stage {
    first: Block,
    second: Block,
}

impl Stage {
    fn new<T: Real>(
        store: &mut ParamStore<T>,
        stats: &mut Vec<RunningStats<T>>,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Stage {
            first: Block::new(store, stats, &format!("{name}.block0"), cin, cout, rng),
            second: Block::new(store, stats, &format!("{name}.block1"), cout, cout, rng),
        }
    }

    fn forward<T: Real>(&self, f: &mut Forward<'_, '_, T>, x: Var) -> Result<Var> {
        let y = self.first.forward(f, x)?;
        self.second.forward(f, y)
    }
}

#[derive(Debug, Clone)]
pub struct UNet<T> {
    spec: UNetSpec,
    pub params: ParamStore<T>,
    pub running: Vec<RunningStats<T>>,
    encoder: Vec<Stage>,
    ups: Vec<UpConv2>,
    decoder: Vec<Stage>,
    head: Conv2d,
}

/// Output of one forward pass.
pub struct ForwardOutput<T> {
    pub probs: Var,
    /// Per batch-norm layer `(stats index, batch mean, batch var)` in train mode.
    pub observed: Vec<(usize, Vec<T>, Vec<T>)>,
    pub bindings: Vec<Option<Var>>,
}

impl<T: Real> UNet<T> {
    pub fn new(spec: UNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut running = Vec::new();
        let mut encoder = Vec::with_capacity(spec.depth + 1);
        let mut cin = spec.in_channels;
        for level in 0..=spec.depth {
            let cout = spec.features(level);
            encoder.push(Stage::new(&mut params, &mut running, &format!("enc{level}"), cin, cout, &mut rng));
            cin = cout;
        }
        let mut ups = Vec::with_capacity(spec.depth);
        let mut decoder = Vec::with_capacity(spec.depth);
        for level in (0..spec.depth).rev() {
            let (wide, narrow) = (spec.features(level + 1), spec.features(level));
            ups.push(UpConv2::new(&mut params, &format!("up{level}"), wide, narrow, &mut rng));
            decoder.push(Stage::new(&mut params, &mut running, &format!("dec{level}"), 2 * narrow, narrow, &mut rng));
        }
        let head = Conv2d::new(&mut params, "head", spec.base_features, spec.num_classes, 1, &mut rng);
        Ok(UNet {
            spec,
            params,
            running,
            encoder,
            ups,
            decoder,
            head,
        })
    }

    pub fn spec(&self) -> &UNetSpec {
        &self.spec
    }

    pub fn head(&self) -> &Conv2d {
        &self.head
    }

    /// Softmax probabilities `(N, classes, H, W)` for input `x (N, 1, H, W)`.
    pub fn forward<'a>(&'a self, tape: &mut crate::nn::tape::Tape<'a, T>, x: Var, mode: Mode) -> Result<ForwardOutput<T>> {
        let (_, c, h, w) = tape.value(x).dims4()?;
        let stride = 1usize << self.spec.depth;
        if c != self.spec.in_channels || h % stride != 0 || w % stride != 0 {
            return Err(Error::Shape(format!(
                "network input {:?} incompatible with {} channel(s) and depth {}",
                tape.value(x).shape(),
                self.spec.in_channels,
                self.spec.depth
            )));
        }
        let mut f = Forward::new(tape, &self.params, &self.running, mode);
        let mut skips = Vec::with_capacity(self.spec.depth);
        let mut y = x;
        for (level, stage) in self.encoder.iter().enumerate() {
            y = stage.forward(&mut f, y)?;
            if level < self.spec.depth {
                skips.push(y);
                y = f.tape.max_pool2(y)?;
            }
        }
        for (up, stage) in self.ups.iter().zip(&self.decoder) {
            let skip = skips.pop().expect("one skip per level");
            let u = f.up_conv(y, up)?;
            let cat = f.tape.concat_channels(u, skip)?;
            y = stage.forward(&mut f, cat)?;
        }
        let logits = f.conv(y, &self.head)?;
        let probs = f.tape.softmax_channels(logits)?;
        Ok(ForwardOutput {
            probs,
            observed: std::mem::take(&mut f.observed),
            bindings: f.bindings().to_vec(),
        })
    }
}
