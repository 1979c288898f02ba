//! Pixel-exact evaluation: thresholding, confusion counts, F1 per head,
//! the side1/fused weighted ensemble, and whole-dataset reports.
//!
//! Default aggregation is per-image F1 averaged over images; global
//! confusion pooling is available behind a flag for comparison. Matching is
//! exact-pixel with no spatial tolerance.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::Error;
use crate::mask::{Mask, Pair};
use crate::network::{Model, PredictionSet};
use crate::Scalar;

/// Pixel = 1 iff probability >= threshold (boundary counts as positive).
pub fn binarize(p: &Mask, threshold: f32) -> Mask {
    let pixels = p.pixels.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect();
    Mask::from_pixels(p.h, p.w, pixels).expect("same length")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl Confusion {
    pub fn add(&mut self, other: &Confusion) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
        self.true_neg += other.true_neg;
    }

    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// Precision, recall, F1 with the 0-on-empty-denominator convention.
    pub fn rates(&self) -> (f64, f64, f64) {
        let tp = self.true_pos as f64;
        let p_den = self.true_pos + self.false_pos;
        let r_den = self.true_pos + self.false_neg;
        let precision = if p_den == 0 { 0.0 } else { tp / p_den as f64 };
        let recall = if r_den == 0 { 0.0 } else { tp / r_den as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        (precision, recall, f1)
    }
}

/// Count pixel agreement between two binary maps (>= 0.5 is positive).
pub fn confusion(pred: &Mask, gt: &Mask) -> Result<Confusion, Error> {
    if !pred.same_dims(gt) {
        return Err(Error::Shape(format!(
            "confusion over {}x{} prediction and {}x{} ground truth",
            pred.h, pred.w, gt.h, gt.w
        )));
    }
    let mut c = Confusion::default();
    for (&pv, &gv) in pred.pixels.iter().zip(&gt.pixels) {
        match (pv >= 0.5, gv >= 0.5) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

pub fn f1_score(pred: &Mask, gt: &Mask) -> Result<f64, Error> {
    Ok(confusion(pred, gt)?.rates().2)
}

/// Convex blend `w * side1 + (1 - w) * fused`, computed so that identical
/// inputs and the w = 0 / w = 1 endpoints come out bit-exact.
pub fn ensemble(side1: &Mask, fused: &Mask, w: f64) -> Result<Mask, Error> {
    if !side1.same_dims(fused) {
        return Err(Error::Shape("ensemble inputs differ in size".to_string()));
    }
    if w <= 0.0 {
        return Ok(fused.clone());
    }
    if w >= 1.0 {
        return Ok(side1.clone());
    }
    let wf = w as f32;
    let pixels = side1
        .pixels
        .iter()
        .zip(&fused.pixels)
        .map(|(&s, &f)| f + wf * (s - f))
        .collect();
    Ok(Mask::from_pixels(side1.h, side1.w, pixels).expect("same length"))
}

fn side1_or_fused(p: &PredictionSet) -> &Mask {
    p.side.first().unwrap_or(&p.fused)
}

/// Exhaustive grid search for the ensemble weight maximizing mean F1 over a
/// validation set. Grid is {0, step, 2*step, ...} up to and including 1;
/// ties break toward the smaller weight.
pub fn search_ensemble_weight(
    preds: &[PredictionSet],
    gts: &[&Mask],
    grid_step: f64,
    threshold: f32,
) -> Result<(f64, f64), Error> {
    if preds.is_empty() || preds.len() != gts.len() {
        return Err(Error::EmptyDataset(format!(
            "ensemble search over {} predictions and {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::Config(format!("grid step {grid_step} outside (0, 1]")));
    }
    let mut grid = Vec::new();
    let mut k = 0u32;
    loop {
        let w = k as f64 * grid_step;
        if w >= 1.0 - 1e-9 {
            break;
        }
        grid.push(w);
        k += 1;
    }
    grid.push(1.0);

    let mut best = (0.0, f64::NEG_INFINITY);
    for &w in &grid {
        let mut sum = 0.0;
        for (p, gt) in preds.iter().zip(gts) {
            let blended = ensemble(side1_or_fused(p), &p.fused, w)?;
            sum += f1_score(&binarize(&blended, threshold), gt)?;
        }
        let mean = sum / preds.len() as f64;
        if mean > best.1 {
            best = (w, mean);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HeadMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-head precision/recall/F1 over a dataset. Heads are the four side
/// outputs, the fused output, and the side1/fused ensemble. Side entries are
/// NaN for a model built without side layers (its ensemble equals fused).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub side: [HeadMetrics; 4],
    pub fused: HeadMetrics,
    pub ensembled: HeadMetrics,
    pub n_images: usize,
    pub threshold: f32,
    pub ensemble_weight: f64,
}

#[derive(Default)]
struct HeadAccum {
    sums: (f64, f64, f64),
    pooled: Confusion,
}

impl HeadAccum {
    fn push(&mut self, c: Confusion) {
        let (p, r, f) = c.rates();
        self.sums.0 += p;
        self.sums.1 += r;
        self.sums.2 += f;
        self.pooled.add(&c);
    }

    fn finish(&self, n: usize, global_pool: bool) -> HeadMetrics {
        if global_pool {
            let (precision, recall, f1) = self.pooled.rates();
            HeadMetrics { precision, recall, f1 }
        } else {
            HeadMetrics {
                precision: self.sums.0 / n as f64,
                recall: self.sums.1 / n as f64,
                f1: self.sums.2 / n as f64,
            }
        }
    }
}

/// Evaluate every pair and aggregate per-image metrics (the default
/// reporting convention).
pub fn evaluate_dataset<T: Scalar>(
    model: &mut Model<T>,
    pairs: &[Pair],
    threshold: f32,
    ensemble_weight: f64,
) -> Result<MetricsReport, Error> {
    evaluate_dataset_with(model, pairs, threshold, ensemble_weight, false)
}

/// As `evaluate_dataset`, with globally pooled confusion counts instead of
/// per-image averaging when `global_pool` is set.
pub fn evaluate_dataset_with<T: Scalar>(
    model: &mut Model<T>,
    pairs: &[Pair],
    threshold: f32,
    ensemble_weight: f64,
    global_pool: bool,
) -> Result<MetricsReport, Error> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("evaluation over zero pairs".to_string()));
    }
    let mut side_acc: [HeadAccum; 4] = Default::default();
    let mut fused_acc = HeadAccum::default();
    let mut ens_acc = HeadAccum::default();
    let mut has_sides = true;

    for chunk in pairs.chunks(8) {
        let inputs: Vec<&Mask> = chunk.iter().map(|p| &p.shape).collect();
        let preds = model.predict(&inputs)?;
        for (pred, pair) in preds.iter().zip(chunk) {
            has_sides &= pred.side.len() == 4;
            for (si, sm) in pred.side.iter().enumerate() {
                side_acc[si].push(confusion(&binarize(sm, threshold), &pair.skeleton)?);
            }
            fused_acc.push(confusion(&binarize(&pred.fused, threshold), &pair.skeleton)?);
            let blended = ensemble(side1_or_fused(pred), &pred.fused, ensemble_weight)?;
            ens_acc.push(confusion(&binarize(&blended, threshold), &pair.skeleton)?);
        }
    }

    let n = pairs.len();
    let nan = HeadMetrics { precision: f64::NAN, recall: f64::NAN, f1: f64::NAN };
    Ok(MetricsReport {
        side: if has_sides {
            [
                side_acc[0].finish(n, global_pool),
                side_acc[1].finish(n, global_pool),
                side_acc[2].finish(n, global_pool),
                side_acc[3].finish(n, global_pool),
            ]
        } else {
            [nan; 4]
        },
        fused: fused_acc.finish(n, global_pool),
        ensembled: ens_acc.finish(n, global_pool),
        n_images: n,
        threshold,
        ensemble_weight,
    })
}
