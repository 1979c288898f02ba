//! Training loop: Adam over shuffled mini-batches, per-epoch validation,
//! plateau-driven learning-rate decay, early stopping, and best-epoch
//! snapshotting. Training runs in f32; an f64 mode exists for the
//! finite-difference gradient check.

use alloc::collections::BTreeSet;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::loss::{combined_loss, combined_loss_grad_logit, multi_head_loss, LossConfig};
use crate::mask::{Mask, Pair};
use crate::metrics::{binarize, f1_score};
use crate::network::{batch_from_masks, Model, ModelState};
use crate::nn::act::sigmoid;
use crate::optim::Adam;
use crate::tensor::Tensor;
use crate::{s, to64, Scalar};

/// Absolute validation-loss improvement below this counts as a plateau.
pub const MIN_DELTA: f64 = 1e-4;

/// Threshold used for the per-epoch validation F1 columns.
const VAL_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.001,
            plateau_patience: 10,
            plateau_factor: 0.1,
            batch_size: 4,
            max_epochs: 500,
            early_stop_patience: 20,
            seed: 0,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    // `!(x > 0)` also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Config("initial learning rate must be positive".to_string()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Config("plateau factor must lie in (0, 1)".to_string()));
        }
        if self.batch_size < 1 || self.max_epochs < 1 {
            return Err(Error::Config("batch size and max epochs must be at least 1".to_string()));
        }
        if self.plateau_patience < 1 || self.early_stop_patience < 1 {
            return Err(Error::Config("patience values must be at least 1".to_string()));
        }
        self.loss.validate()
    }
}

/// One row of the training history. Side F1 columns are NaN for a model
/// without side layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub f1_side: [f64; 4],
    pub f1_fused: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch whose validation loss was best; 0 if none completed.
    pub best_epoch: usize,
}

/// Successful run: the best-epoch snapshot (also loaded back into the
/// model) plus the full history.
#[derive(Debug, Clone)]
pub struct TrainResult<T> {
    pub best: ModelState<T>,
    pub history: TrainHistory,
}

/// Aborted run, keeping whatever history had accumulated.
#[derive(Debug, Clone)]
pub struct TrainFailure {
    pub error: Error,
    pub history: TrainHistory,
}

fn check_dims(model_size: (usize, usize), pairs: &[Pair]) -> Result<(), Error> {
    let (h, w) = model_size;
    for p in pairs {
        if p.shape.h != h || p.shape.w != w {
            return Err(Error::PairShape {
                id: p.id.clone(),
                detail: alloc::format!("is {}x{}, model expects {h}x{w}", p.shape.h, p.shape.w),
            });
        }
    }
    Ok(())
}

/// Forward + backward over one mini-batch; fills parameter gradients of the
/// batch-mean multi-head loss and returns the summed per-item loss.
fn train_batch<T: Scalar>(model: &mut Model<T>, refs: &[&Pair], loss_cfg: &LossConfig) -> Result<f64, Error> {
    let inputs: Vec<&Mask> = refs.iter().map(|p| &p.shape).collect();
    let x = batch_from_masks::<T>(&inputs, model.config.input_size)?;
    let logits = model.forward_logits(&x, true)?;

    let probs_side: Vec<Tensor<T>> = logits.side.iter().map(|t| t.map(sigmoid)).collect();
    let probs_fused = logits.fused.map(sigmoid);
    let mut d_side: Vec<Tensor<T>> = logits
        .side
        .iter()
        .map(|t| {
            let (n, c, h, w) = t.shape();
            Tensor::zeros(n, c, h, w)
        })
        .collect();
    let (n, c, h, w) = logits.fused.shape();
    let mut d_fused = Tensor::zeros(n, c, h, w);

    let inv_b = 1.0 / refs.len() as f64;
    let mut loss_sum = 0.0;
    for (bi, pair) in refs.iter().enumerate() {
        let y: Vec<T> = pair.skeleton.pixels.iter().map(|&v| s(v as f64)).collect();
        let mut item = 0.0;
        for hd in 0..probs_side.len() {
            let weight = loss_cfg.head_weights[hd];
            let p = probs_side[hd].plane(bi, 0);
            item += weight * to64(combined_loss(&y, p, loss_cfg)?);
            let g = combined_loss_grad_logit(&y, p, loss_cfg)?;
            let k: T = s(weight * inv_b);
            for (o, gv) in d_side[hd].plane_mut(bi, 0).iter_mut().zip(g) {
                *o = k * gv;
            }
        }
        let weight = loss_cfg.head_weights[4];
        let p = probs_fused.plane(bi, 0);
        item += weight * to64(combined_loss(&y, p, loss_cfg)?);
        let g = combined_loss_grad_logit(&y, p, loss_cfg)?;
        let k: T = s(weight * inv_b);
        for (o, gv) in d_fused.plane_mut(bi, 0).iter_mut().zip(g) {
            *o = k * gv;
        }
        if !item.is_finite() {
            return Err(Error::Numerical("non-finite training loss".to_string()));
        }
        loss_sum += item;
    }
    model.backward(&d_side, &d_fused);
    Ok(loss_sum)
}

/// Mean validation loss plus per-head mean F1 at threshold 0.5.
fn validation_pass<T: Scalar>(
    model: &mut Model<T>,
    val_set: &[Pair],
    loss_cfg: &LossConfig,
    batch_size: usize,
) -> Result<(f64, [f64; 4], f64), Error> {
    let mut loss_sum = 0.0;
    let mut f1_sum = [0.0f64; 5];
    let mut sides_present = true;
    for chunk in val_set.chunks(batch_size.max(1)) {
        let inputs: Vec<&Mask> = chunk.iter().map(|p| &p.shape).collect();
        let x = batch_from_masks::<T>(&inputs, model.config.input_size)?;
        let logits = model.forward_logits(&x, false)?;
        for (ps, pair) in logits.probabilities().iter().zip(chunk) {
            loss_sum += multi_head_loss(ps, &pair.skeleton, loss_cfg)?;
            sides_present &= ps.side.len() == 4;
            for (i, sm) in ps.side.iter().enumerate() {
                f1_sum[i] += f1_score(&binarize(sm, VAL_THRESHOLD), &pair.skeleton)?;
            }
            f1_sum[4] += f1_score(&binarize(&ps.fused, VAL_THRESHOLD), &pair.skeleton)?;
        }
    }
    let n = val_set.len() as f64;
    let f1_side = if sides_present {
        [f1_sum[0] / n, f1_sum[1] / n, f1_sum[2] / n, f1_sum[3] / n]
    } else {
        [f64::NAN; 4]
    };
    Ok((loss_sum / n, f1_side, f1_sum[4] / n))
}

/// Full training run. Shuffles per epoch (seed-deterministic), keeps the
/// last partial batch, decays the learning rate by `plateau_factor` each
/// `plateau_patience` epochs without validation improvement, stops early
/// after `early_stop_patience` stale epochs, and leaves the model at the
/// best-validation-loss parameters.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    train_set: &[Pair],
    val_set: &[Pair],
    cfg: &TrainConfig,
) -> Result<TrainResult<T>, TrainFailure> {
    let mut history = TrainHistory::default();
    macro_rules! fail {
        ($e:expr) => {
            return Err(TrainFailure { error: $e, history })
        };
    }
    if let Err(e) = cfg.validate() {
        fail!(e);
    }
    if train_set.is_empty() || val_set.is_empty() {
        fail!(Error::EmptyDataset("training needs non-empty train and validation sets".to_string()));
    }
    if let Err(e) = check_dims(model.config.input_size, train_set).and_then(|_| check_dims(model.config.input_size, val_set)) {
        fail!(e);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam: Adam<T> = Adam::new(cfg.lr0);
    let mut lr = cfg.lr0;
    let mut best_val = f64::INFINITY;
    let mut best_state: Option<ModelState<T>> = None;
    let mut best_epoch = 0usize;
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Pair> = chunk.iter().map(|&i| &train_set[i]).collect();
            match train_batch(model, &refs, &cfg.loss) {
                Ok(sum) => {
                    loss_sum += sum;
                    adam.lr = lr;
                    adam.step(model);
                }
                Err(e) => fail!(e),
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, f1_side, f1_fused) = match validation_pass(model, val_set, &cfg.loss, cfg.batch_size) {
            Ok(v) => v,
            Err(e) => fail!(e),
        };
        if !val_loss.is_finite() {
            fail!(Error::Numerical("non-finite validation loss".to_string()));
        }
        history.records.push(EpochRecord { epoch, train_loss, val_loss, lr, f1_side, f1_fused });

        if val_loss < best_val - MIN_DELTA {
            best_val = val_loss;
            best_epoch = epoch;
            best_state = Some(model.state());
            stale = 0;
        } else {
            stale += 1;
            if stale % cfg.plateau_patience == 0 {
                lr *= cfg.plateau_factor;
            }
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }

    history.best_epoch = best_epoch;
    let best = best_state.expect("first epoch always improves on +inf");
    model.load_state(&best).expect("snapshot came from this model");
    Ok(TrainResult { best, history })
}

/// Memorization harness: `steps` Adam updates on one fixed batch of at most
/// 4 pairs. Returns the inference-mode multi-head loss after the last
/// update (`steps = 0` returns the untouched initial loss).
pub fn overfit_single_batch<T: Scalar>(
    model: &mut Model<T>,
    batch: &[Pair],
    steps: usize,
    cfg: &TrainConfig,
) -> Result<f64, Error> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyDataset("overfit batch is empty".to_string()));
    }
    if batch.len() > 4 {
        return Err(Error::Config("overfit batch is limited to 4 pairs".to_string()));
    }
    check_dims(model.config.input_size, batch)?;

    let refs: Vec<&Pair> = batch.iter().collect();
    let mut adam: Adam<T> = Adam::new(cfg.lr0);
    for _ in 0..steps {
        train_batch(model, &refs, &cfg.loss)?;
        adam.step(model);
    }

    let inputs: Vec<&Mask> = batch.iter().map(|p| &p.shape).collect();
    let x = batch_from_masks::<T>(&inputs, model.config.input_size)?;
    let logits = model.forward_logits(&x, false)?;
    let mut sum = 0.0;
    for (ps, pair) in logits.probabilities().iter().zip(batch) {
        sum += multi_head_loss(ps, &pair.skeleton, &cfg.loss)?;
    }
    Ok(sum / batch.len() as f64)
}

/// Train-mode multi-head loss of a single pair, in double precision.
fn loss_once(model: &mut Model<f64>, pair: &Pair, cfg: &LossConfig) -> Result<f64, Error> {
    let inputs = [&pair.shape];
    let x = batch_from_masks::<f64>(&inputs, model.config.input_size)?;
    let logits = model.forward_logits(&x, true)?;
    let y: Vec<f64> = pair.skeleton.pixels.iter().map(|&v| v as f64).collect();
    let mut sum = 0.0;
    for (hd, t) in logits.side.iter().enumerate() {
        let p = t.map(sigmoid);
        sum += cfg.head_weights[hd] * combined_loss(&y, p.plane(0, 0), cfg)?;
    }
    let p = logits.fused.map(sigmoid);
    sum += cfg.head_weights[4] * combined_loss(&y, p.plane(0, 0), cfg)?;
    Ok(sum)
}

fn nudge_param(model: &mut Model<f64>, flat: usize, delta: f64) {
    let mut off = 0usize;
    let mut hit = false;
    model.visit_params(&mut |_, _, vals, _| {
        if !hit && flat < off + vals.len() {
            vals[flat - off] += delta;
            hit = true;
        }
        off += vals.len();
    });
    assert!(hit, "flat parameter index out of range");
}

/// Compare analytic gradients against central finite differences on
/// `n_params` randomly sampled parameters of a double-precision model.
/// Returns the maximum relative error; coordinates where both gradients are
/// below 1e-10 in magnitude count as agreeing.
pub fn gradient_check(model: &mut Model<f64>, pair: &Pair, n_params: usize, fd_step: f64) -> Result<f64, Error> {
    let loss_cfg = LossConfig::default();
    let refs = [pair];
    train_batch(model, &refs, &loss_cfg)?;
    let mut grads: Vec<f64> = Vec::new();
    model.visit_params(&mut |_, _, _, g| grads.extend_from_slice(g));

    let total = grads.len();
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x5eed_c0de);
    let mut picked: BTreeSet<usize> = BTreeSet::new();
    while picked.len() < n_params.min(total) {
        picked.insert(rng.gen_range(0..total));
    }

    let mut max_rel = 0.0f64;
    for &idx in &picked {
        let analytic = grads[idx];
        nudge_param(model, idx, fd_step);
        let plus = loss_once(model, pair, &loss_cfg)?;
        nudge_param(model, idx, -2.0 * fd_step);
        let minus = loss_once(model, pair, &loss_cfg)?;
        nudge_param(model, idx, fd_step);
        let fd = (plus - minus) / (2.0 * fd_step);
        if analytic.abs() < 1e-10 && fd.abs() < 1e-10 {
            continue;
        }
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
