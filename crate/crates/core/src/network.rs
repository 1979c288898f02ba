//! The full skeleton-extraction network: coordinate injection, a four-stage
//! residual-squeezed encoder, a bottleneck, a four-stage decoder with skip
//! connections, spatially gated side heads at every decoder stage, and a
//! dilated fusion head. Five sigmoid maps come out, all at input resolution.
//!
//! Ablation flags reduce the same code path to the baselines: without side
//! layers the decoder ends in a single 1x1 head ("vanilla decoder"), and
//! without coordinate channels the input stays single-channel.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coord::append_coords;
use crate::error::Error;
use crate::mask::Mask;
use crate::nn::act::sigmoid;
use crate::nn::conv::Conv2d;
use crate::nn::pool::MaxPool2x2;
use crate::nn::resize::{bilinear_resize, bilinear_resize_back};
use crate::nn::rs::RsBlock;
use crate::nn::{gate::SpatialGate, ParamVisitor, StateVisitor};
use crate::tensor::Tensor;
use crate::{to64, Scalar};

/// Architecture and initialization knobs. Encoder stage widths are
/// `base_channels * {1, 2, 4, 8}` with a `base * 16` bottleneck; the decoder
/// mirrors them back down to `base`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_size: (usize, usize),
    pub base_channels: usize,
    pub se_ratio: usize,
    pub dilation_rate: usize,
    pub coord_enabled: bool,
    pub coord_normalize: bool,
    pub side_layers_enabled: bool,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_size: (256, 256),
            base_channels: 16,
            se_ratio: 8,
            dilation_rate: 2,
            coord_enabled: true,
            coord_normalize: true,
            side_layers_enabled: true,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    /// Four 2x2 poolings need both input dims divisible by 16.
    pub fn validate(&self) -> Result<(), Error> {
        let (h, w) = self.input_size;
        if h < 16 || w < 16 || h % 16 != 0 || w % 16 != 0 {
            return Err(Error::Config(format!(
                "input size {h}x{w} must be at least 16 and divisible by 16"
            )));
        }
        if self.base_channels < 4 {
            return Err(Error::Config("base_channels must be at least 4".to_string()));
        }
        if self.se_ratio < 1 {
            return Err(Error::Config("se_ratio must be at least 1".to_string()));
        }
        if self.dilation_rate < 1 {
            return Err(Error::Config("dilation_rate must be at least 1".to_string()));
        }
        Ok(())
    }

    fn input_channels(&self) -> usize {
        if self.coord_enabled {
            3
        } else {
            1
        }
    }

    /// (in, out) channel pairs for the four encoder stages.
    fn encoder_channels(&self) -> [(usize, usize); 4] {
        let b = self.base_channels;
        [(self.input_channels(), b), (b, 2 * b), (2 * b, 4 * b), (4 * b, 8 * b)]
    }

    /// (upsampled, skip, out) channel triples for the four decoder stages.
    fn decoder_channels(&self) -> [(usize, usize, usize); 4] {
        let b = self.base_channels;
        [
            (16 * b, 8 * b, 8 * b),
            (8 * b, 4 * b, 4 * b),
            (4 * b, 2 * b, 2 * b),
            (2 * b, b, b),
        ]
    }

    /// Channel width feeding side head `si` (0-based; side 1 sits at the
    /// decoder stage closest to full resolution).
    fn side_channels(&self, si: usize) -> usize {
        let (_, _, out) = self.decoder_channels()[3 - si];
        out
    }
}

/// Pre-sigmoid head outputs at input resolution; `side` is empty for the
/// vanilla decoder. Ordered side1..side4 (finest decoder stage first).
#[derive(Debug, Clone)]
pub struct LogitSet<T> {
    pub side: Vec<Tensor<T>>,
    pub fused: Tensor<T>,
}

/// Per-image sigmoid probability maps, `side` ordered side1..side4.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub side: Vec<Mask>,
    pub fused: Mask,
}

impl<T: Scalar> LogitSet<T> {
    /// Sigmoid every head and split the batch into per-image map sets.
    pub fn probabilities(&self) -> Vec<PredictionSet> {
        (0..self.fused.n())
            .map(|item| PredictionSet {
                side: self.side.iter().map(|t| plane_to_prob_mask(t, item)).collect(),
                fused: plane_to_prob_mask(&self.fused, item),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// One named parameter or state array lifted out of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEntry<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<T>,
}

/// Complete snapshot of a model's learnable parameters and batch-norm
/// running statistics, keyed by canonical names.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    pub params: Vec<StateEntry<T>>,
    pub state: Vec<StateEntry<T>>,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: NetworkConfig,
    pub mode: Mode,
    enc: Vec<RsBlock<T>>,
    pools: Vec<MaxPool2x2>,
    bottleneck: RsBlock<T>,
    dec: Vec<RsBlock<T>>,
    gates: Vec<SpatialGate<T>>,
    side_out: Vec<Conv2d<T>>,
    fusion: Option<Conv2d<T>>,
    head: Option<Conv2d<T>>,
}

/// Closed-form learnable parameter count for a config; matches the
/// instantiated model exactly (batch-norm running stats are not learnable
/// and are excluded).
pub fn parameter_count(config: &NetworkConfig) -> usize {
    let r = config.se_ratio;
    let mut n = 0;
    for (ci, co) in config.encoder_channels() {
        n += RsBlock::<f32>::param_count(ci, co, r);
    }
    let b = config.base_channels;
    n += RsBlock::<f32>::param_count(8 * b, 16 * b, r);
    for (cu, cs, co) in config.decoder_channels() {
        n += RsBlock::<f32>::param_count(cu + cs, co, r);
    }
    if config.side_layers_enabled {
        for si in 0..4 {
            let c = config.side_channels(si);
            n += SpatialGate::<f32>::param_count(c);
            n += Conv2d::<f32>::param_count(c, 1, 1);
        }
        n += Conv2d::<f32>::param_count(4, 1, 3);
    } else {
        n += Conv2d::<f32>::param_count(b, 1, 1);
    }
    n
}

impl<T: Scalar> Model<T> {
    /// Instantiate all blocks with weights drawn from `config.seed`, in a
    /// fixed construction order (encoder, bottleneck, decoder, heads).
    pub fn build(config: NetworkConfig) -> Result<Self, Error> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let r = config.se_ratio;

        let enc: Vec<RsBlock<T>> = config
            .encoder_channels()
            .iter()
            .map(|&(ci, co)| RsBlock::new(ci, co, r, &mut rng))
            .collect();
        let b = config.base_channels;
        let bottleneck = RsBlock::new(8 * b, 16 * b, r, &mut rng);
        let dec: Vec<RsBlock<T>> = config
            .decoder_channels()
            .iter()
            .map(|&(cu, cs, co)| RsBlock::new(cu + cs, co, r, &mut rng))
            .collect();

        let mut gates = Vec::new();
        let mut side_out = Vec::new();
        let mut fusion = None;
        let mut head = None;
        if config.side_layers_enabled {
            for si in 0..4 {
                let c = config.side_channels(si);
                gates.push(SpatialGate::new(c, &mut rng));
                side_out.push(Conv2d::new(c, 1, 1, 0, 1, &mut rng));
            }
            fusion = Some(Conv2d::new(4, 1, 3, config.dilation_rate, config.dilation_rate, &mut rng));
        } else {
            head = Some(Conv2d::new(b, 1, 1, 0, 1, &mut rng));
        }

        Ok(Model {
            config,
            mode: Mode::Inference,
            enc,
            pools: vec![MaxPool2x2::new(); 4],
            bottleneck,
            dec,
            gates,
            side_out,
            fusion,
            head,
        })
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<(), Error> {
        let (_, c, h, w) = batch.shape();
        let (eh, ew) = self.config.input_size;
        if c != 1 || h != eh || w != ew {
            return Err(Error::Shape(format!(
                "batch is ({c},{h},{w}) per item, model expects (1,{eh},{ew})"
            )));
        }
        Ok(())
    }

    /// Spatial dims of decoder stage `i` outputs (stage 3 is full
    /// resolution).
    fn stage_dims(&self, i: usize) -> (usize, usize) {
        let (h, w) = self.config.input_size;
        (h >> (3 - i), w >> (3 - i))
    }

    /// Shared forward pass. Emits pre-sigmoid logits for every head; caching
    /// for the backward pass happens only when `train` is set.
    pub fn forward_logits(&mut self, batch: &Tensor<T>, train: bool) -> Result<LogitSet<T>, Error> {
        self.check_batch(batch)?;
        self.mode = if train { Mode::Training } else { Mode::Inference };
        let (_, _, h, w) = batch.shape();

        let mut t = if self.config.coord_enabled {
            append_coords(batch, self.config.coord_normalize)
        } else {
            batch.clone()
        };
        let mut skips = Vec::with_capacity(4);
        for i in 0..4 {
            t = self.enc[i].forward(&t, train);
            skips.push(t.clone());
            t = self.pools[i].forward(&t, train);
        }
        t = self.bottleneck.forward(&t, train);

        let mut dec_outs: Vec<Tensor<T>> = Vec::with_capacity(4);
        for i in 0..4 {
            let skip = &skips[3 - i];
            let up = bilinear_resize(&t, skip.h(), skip.w());
            let cat = Tensor::concat_channels(&[&up, skip])?;
            t = self.dec[i].forward(&cat, train);
            dec_outs.push(t.clone());
        }

        let logits = if self.config.side_layers_enabled {
            let mut side = Vec::with_capacity(4);
            for si in 0..4 {
                let stage = 3 - si;
                let gated = self.gates[si].forward(&dec_outs[stage], train);
                let logit = self.side_out[si].forward(&gated, train);
                side.push(bilinear_resize(&logit, h, w));
            }
            let cat = Tensor::concat_channels(&[&side[0], &side[1], &side[2], &side[3]])?;
            let fused = self.fusion.as_mut().expect("side-layer model has fusion").forward(&cat, train);
            LogitSet { side, fused }
        } else {
            let fused = self.head.as_mut().expect("vanilla model has head").forward(&dec_outs[3], train);
            LogitSet { side: Vec::new(), fused }
        };

        for t in logits.side.iter().chain(core::iter::once(&logits.fused)) {
            if !t.all_finite() {
                return Err(Error::Numerical("non-finite head activation".to_string()));
            }
        }
        Ok(logits)
    }

    /// Backward from per-head logit gradients. Fills every block's parameter
    /// gradients; input gradients are discarded. Requires a preceding
    /// `forward_logits(.., train=true)`.
    pub fn backward(&mut self, d_side: &[Tensor<T>], d_fused: &Tensor<T>) {
        let dec_ch = self.config.decoder_channels();
        // stage-indexed gradient of each decoder output
        let mut ddec: [Option<Tensor<T>>; 4] = [None, None, None, None];

        if self.config.side_layers_enabled {
            assert_eq!(d_side.len(), 4, "side-layer model takes four side gradients");
            let dcat = self.fusion.as_mut().expect("fusion present").backward(d_fused);
            for (si, dside) in d_side.iter().enumerate() {
                let mut dfull = dcat.channels(si, 1);
                for (o, &v) in dfull.data_mut().iter_mut().zip(dside.data()) {
                    *o = *o + v;
                }
                let stage = 3 - si;
                let (sh, sw) = self.stage_dims(stage);
                let dlogit = bilinear_resize_back(&dfull, sh, sw);
                let dgated = self.side_out[si].backward(&dlogit);
                ddec[stage] = Some(self.gates[si].backward(&dgated));
            }
        } else {
            assert!(d_side.is_empty(), "vanilla model takes no side gradients");
            ddec[3] = Some(self.head.as_mut().expect("head present").backward(d_fused));
        }

        // decoder chain, finest stage first
        let mut denc_skip: [Option<Tensor<T>>; 4] = [None, None, None, None];
        let mut dprev: Option<Tensor<T>> = None;
        for i in (0..4).rev() {
            let mut d_i = match ddec[i].take() {
                Some(d) => d,
                None => {
                    let (sh, sw) = self.stage_dims(i);
                    Tensor::zeros(d_fused.n(), dec_ch[i].2, sh, sw)
                }
            };
            if let Some(dn) = dprev.take() {
                for (o, &v) in d_i.data_mut().iter_mut().zip(dn.data()) {
                    *o = *o + v;
                }
            }
            let dcat = self.dec[i].backward(&d_i);
            let (cu, _, _) = dec_ch[i];
            let dup = dcat.channels(0, cu);
            denc_skip[3 - i] = Some(dcat.channels(cu, dcat.c() - cu));
            let (ph, pw) = if i == 0 {
                let (h, w) = self.config.input_size;
                (h >> 4, w >> 4)
            } else {
                self.stage_dims(i - 1)
            };
            dprev = Some(bilinear_resize_back(&dup, ph, pw));
        }

        // bottleneck, then the encoder chain backwards
        let mut dcur = self.bottleneck.backward(&dprev.expect("decoder ran"));
        for i in (0..4).rev() {
            let mut dpre = self.pools[i].backward(&dcur);
            if let Some(ds) = denc_skip[i].take() {
                for (o, &v) in dpre.data_mut().iter_mut().zip(ds.data()) {
                    *o = *o + v;
                }
            }
            dcur = self.enc[i].backward(&dpre);
        }
    }

    /// Inference on a batch of input masks; one `PredictionSet` of sigmoid
    /// probability maps per input.
    pub fn predict(&mut self, inputs: &[&Mask]) -> Result<Vec<PredictionSet>, Error> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset("predict on zero inputs".to_string()));
        }
        let batch = batch_from_masks::<T>(inputs, self.config.input_size)?;
        let logits = self.forward_logits(&batch, false)?;
        Ok(logits.probabilities())
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        for (i, e) in self.enc.iter_mut().enumerate() {
            e.visit_params(&format!("enc{}", i + 1), f);
        }
        self.bottleneck.visit_params("bottleneck", f);
        for (i, d) in self.dec.iter_mut().enumerate() {
            d.visit_params(&format!("dec{}", i + 1), f);
        }
        for si in 0..self.gates.len() {
            self.gates[si].visit_params(&format!("side{}.gate", si + 1), f);
            self.side_out[si].visit_params(&format!("side{}.out", si + 1), f);
        }
        if let Some(fu) = &mut self.fusion {
            fu.visit_params("fusion", f);
        }
        if let Some(h) = &mut self.head {
            h.visit_params("head", f);
        }
    }

    pub fn visit_state(&mut self, f: &mut StateVisitor<'_, T>) {
        for (i, e) in self.enc.iter_mut().enumerate() {
            e.visit_state(&format!("enc{}", i + 1), f);
        }
        self.bottleneck.visit_state("bottleneck", f);
        for (i, d) in self.dec.iter_mut().enumerate() {
            d.visit_state(&format!("dec{}", i + 1), f);
        }
    }

    /// Snapshot parameters and running statistics under canonical names.
    pub fn state(&mut self) -> ModelState<T> {
        let mut params = Vec::new();
        self.visit_params(&mut |name, dims, vals, _| {
            params.push(StateEntry { name: name.to_string(), dims: dims.to_vec(), values: vals.to_vec() });
        });
        let mut state = Vec::new();
        self.visit_state(&mut |name, dims, vals| {
            state.push(StateEntry { name: name.to_string(), dims: dims.to_vec(), values: vals.to_vec() });
        });
        ModelState { params, state }
    }

    /// Restore a snapshot. Every model array must be present with matching
    /// dims, and nothing extra may remain.
    pub fn load_state(&mut self, snapshot: &ModelState<T>) -> Result<(), Error> {
        fn apply<T: Scalar>(
            expected: &mut Vec<(String, Vec<usize>)>,
            entries: &[StateEntry<T>],
            name: &str,
            dims: &[usize],
            vals: &mut [T],
        ) -> Result<(), Error> {
            expected.push((name.to_string(), dims.to_vec()));
            let entry = entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::Config(format!("snapshot is missing array {name}")))?;
            if entry.dims != dims || entry.values.len() != vals.len() {
                return Err(Error::Config(format!("snapshot array {name} has mismatched dims")));
            }
            vals.copy_from_slice(&entry.values);
            Ok(())
        }

        let mut err = None;
        let mut seen = Vec::new();
        self.visit_params(&mut |name, dims, vals, _| {
            if err.is_none() {
                err = apply(&mut seen, &snapshot.params, name, dims, vals).err();
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if seen.len() != snapshot.params.len() {
            return Err(Error::Config(format!(
                "snapshot carries {} parameter arrays, model has {}",
                snapshot.params.len(),
                seen.len()
            )));
        }
        let mut seen_state = Vec::new();
        self.visit_state(&mut |name, dims, vals| {
            if err.is_none() {
                err = apply(&mut seen_state, &snapshot.state, name, dims, vals).err();
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if seen_state.len() != snapshot.state.len() {
            return Err(Error::Config(format!(
                "snapshot carries {} state arrays, model has {}",
                snapshot.state.len(),
                seen_state.len()
            )));
        }
        Ok(())
    }
}

/// Stack single-channel masks into a (N,1,H,W) batch tensor.
pub fn batch_from_masks<T: Scalar>(masks: &[&Mask], expect: (usize, usize)) -> Result<Tensor<T>, Error> {
    let (h, w) = expect;
    let mut out = Tensor::zeros(masks.len(), 1, h, w);
    for (i, m) in masks.iter().enumerate() {
        if m.h != h || m.w != w {
            return Err(Error::Shape(format!(
                "input {i} is {}x{}, model expects {h}x{w}",
                m.h, m.w
            )));
        }
        for (o, &v) in out.plane_mut(i, 0).iter_mut().zip(&m.pixels) {
            *o = crate::s(v as f64);
        }
    }
    Ok(out)
}

fn plane_to_prob_mask<T: Scalar>(logits: &Tensor<T>, item: usize) -> Mask {
    let (_, _, h, w) = logits.shape();
    let pixels = logits.plane(item, 0).iter().map(|&v| to64(sigmoid(v)) as f32).collect();
    Mask::from_pixels(h, w, pixels).expect("plane has h*w pixels")
}
