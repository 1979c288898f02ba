//! Training objective: binary cross-entropy plus Dice loss, evaluated per
//! supervised head and combined with per-head weights.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::mask::Mask;
use crate::network::PredictionSet;
use crate::{s, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

/// Knobs of the combined objective. `epsilon` keeps the Dice denominator
/// away from zero, `clip_delta` keeps the BCE logs finite, `head_weights`
/// scale the five heads in order side1..side4, fused. `dice_enabled` exists
/// for the cross-entropy-only ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub epsilon: f64,
    pub clip_delta: f64,
    pub bce_reduction: Reduction,
    pub head_weights: [f64; 5],
    pub dice_enabled: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            epsilon: 1.0,
            clip_delta: 1e-7,
            bce_reduction: Reduction::Mean,
            head_weights: [1.0; 5],
            dice_enabled: true,
        }
    }
}

impl LossConfig {
    // `!(x > 0)` also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(String::from("loss.epsilon must be > 0")));
        }
        if !(self.clip_delta > 0.0 && self.clip_delta < 0.5) {
            return Err(Error::Config(String::from("loss.clip_delta must be in (0, 0.5)")));
        }
        if self.head_weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config(String::from("loss.head_weights must be >= 0")));
        }
        if self.head_weights.iter().all(|&w| w == 0.0) {
            return Err(Error::Config(String::from("loss.head_weights must not all be zero")));
        }
        Ok(())
    }
}

fn check_lengths<T>(y: &[T], p: &[T]) -> Result<(), Error> {
    if y.len() != p.len() {
        return Err(Error::Shape(alloc::format!(
            "target has {} elements but prediction has {}",
            y.len(),
            p.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Shape(String::from("loss over zero pixels")));
    }
    Ok(())
}

/// `-sum(y log p + (1 - y) log(1 - p))` with `p` clipped into
/// `[clip_delta, 1 - clip_delta]`; divided by the pixel count under mean
/// reduction.
pub fn bce<T: Scalar>(y: &[T], p: &[T], cfg: &LossConfig) -> Result<T, Error> {
    check_lengths(y, p)?;
    let lo = s::<T>(cfg.clip_delta);
    let hi = T::one() - lo;
    let mut acc = T::zero();
    for (&yi, &pi) in y.iter().zip(p) {
        let pc = pi.max(lo).min(hi);
        acc = acc - (yi * pc.ln() + (T::one() - yi) * (T::one() - pc).ln());
    }
    Ok(match cfg.bce_reduction {
        Reduction::Sum => acc,
        Reduction::Mean => acc / s::<T>(y.len() as f64),
    })
}

/// `1 - (2 sum(y p) + eps) / (sum y + sum p + eps)`; zero exactly when
/// `p == y` for binary `y`, and zero for the all-empty pair thanks to `eps`.
pub fn dice_loss<T: Scalar>(y: &[T], p: &[T], epsilon: f64) -> Result<T, Error> {
    check_lengths(y, p)?;
    let eps = s::<T>(epsilon);
    let mut inter = T::zero();
    let mut sum_y = T::zero();
    let mut sum_p = T::zero();
    for (&yi, &pi) in y.iter().zip(p) {
        inter = inter + yi * pi;
        sum_y = sum_y + yi;
        sum_p = sum_p + pi;
    }
    let two = s::<T>(2.0);
    Ok(T::one() - (two * inter + eps) / (sum_y + sum_p + eps))
}

/// BCE plus Dice (Dice dropped when disabled in the config).
pub fn combined_loss<T: Scalar>(y: &[T], p: &[T], cfg: &LossConfig) -> Result<T, Error> {
    let b = bce(y, p, cfg)?;
    if cfg.dice_enabled {
        Ok(b + dice_loss(y, p, cfg.epsilon)?)
    } else {
        Ok(b)
    }
}

/// Analytic gradient of `combined_loss` w.r.t. each `p_i`. The BCE term is
/// `-y/p + (1-y)/(1-p)` (scaled by 1/k under mean reduction) and vanishes
/// where clipping flattens the loss.
pub fn combined_loss_grad<T: Scalar>(y: &[T], p: &[T], cfg: &LossConfig) -> Result<Vec<T>, Error> {
    check_lengths(y, p)?;
    let lo = s::<T>(cfg.clip_delta);
    let hi = T::one() - lo;
    let scale = match cfg.bce_reduction {
        Reduction::Sum => T::one(),
        Reduction::Mean => T::one() / s::<T>(y.len() as f64),
    };
    let mut grad: Vec<T> = y
        .iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            if pi < lo || pi > hi {
                T::zero()
            } else {
                scale * (-yi / pi + (T::one() - yi) / (T::one() - pi))
            }
        })
        .collect();
    if cfg.dice_enabled {
        let eps = s::<T>(cfg.epsilon);
        let mut inter = T::zero();
        let mut sum_y = T::zero();
        let mut sum_p = T::zero();
        for (&yi, &pi) in y.iter().zip(p) {
            inter = inter + yi * pi;
            sum_y = sum_y + yi;
            sum_p = sum_p + pi;
        }
        let two = s::<T>(2.0);
        let num = two * inter + eps;
        let den = sum_y + sum_p + eps;
        for (g, &yi) in grad.iter_mut().zip(y) {
            *g = *g + (num - two * yi * den) / (den * den);
        }
    }
    Ok(grad)
}

/// Gradient of `combined_loss` w.r.t. the pre-sigmoid logit of each pixel,
/// given `p = sigmoid(logit)`. For unclipped pixels the BCE part collapses
/// to the usual `p - y`.
pub fn combined_loss_grad_logit<T: Scalar>(y: &[T], p: &[T], cfg: &LossConfig) -> Result<Vec<T>, Error> {
    let mut grad = combined_loss_grad(y, p, cfg)?;
    for (g, &pi) in grad.iter_mut().zip(p) {
        *g = *g * pi * (T::one() - pi);
    }
    Ok(grad)
}

fn mask_values(m: &Mask) -> Vec<f64> {
    m.pixels.iter().map(|&v| v as f64).collect()
}

/// Weighted sum of `combined_loss` over the available heads. Heads are
/// weighted in order side1..side4, fused; a model without side layers
/// contributes only the fused term.
pub fn multi_head_loss(preds: &PredictionSet, y: &Mask, cfg: &LossConfig) -> Result<f64, Error> {
    let yv = mask_values(y);
    let mut total = 0.0;
    for (i, side) in preds.side.iter().enumerate() {
        if !side.same_dims(y) {
            return Err(Error::Shape(alloc::format!("side{} head dims differ from target", i + 1)));
        }
        total += cfg.head_weights[i] * combined_loss(&yv, &mask_values(side), cfg)?;
    }
    if !preds.fused.same_dims(y) {
        return Err(Error::Shape(String::from("fused head dims differ from target")));
    }
    total += cfg.head_weights[4] * combined_loss(&yv, &mask_values(&preds.fused), cfg)?;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rel_err, rng};
    use proptest::prelude::*;
    use rand::Rng;

    fn sum_cfg() -> LossConfig {
        LossConfig { bce_reduction: Reduction::Sum, ..LossConfig::default() }
    }

    #[test]
    fn bce_matches_hand_computed_examples() {
        let l = bce(&[1.0, 0.0], &[0.5, 0.5], &sum_cfg()).unwrap();
        assert!((l - 2.0 * f64::ln(2.0)).abs() < 1e-12);

        // p = 0 clips to 1e-7 instead of exploding
        let l = bce(&[1.0], &[0.0], &sum_cfg()).unwrap();
        assert!((l - (-f64::ln(1e-7))).abs() < 1e-12);
        assert!((l - 16.11809565095832).abs() < 1e-12);
    }

    #[test]
    fn bce_of_perfect_binary_prediction_is_residual_clip_cost() {
        let y = [1.0, 0.0, 1.0, 1.0];
        let l = bce(&y, &y, &sum_cfg()).unwrap();
        let per_pixel = -f64::ln_1p(-1e-7);
        assert!((l - 4.0 * per_pixel).abs() < 1e-15);
        assert!(l < 1e-6);
        let lm = bce(&y, &y, &LossConfig::default()).unwrap();
        assert!((lm - per_pixel).abs() < 1e-15);
    }

    #[test]
    fn bce_mean_divides_by_pixel_count() {
        let y: [f64; 4] = [1.0, 0.0, 0.0, 1.0];
        let p = [0.7, 0.2, 0.4, 0.9];
        let sum = bce(&y, &p, &sum_cfg()).unwrap();
        let mean = bce(&y, &p, &LossConfig::default()).unwrap();
        assert!((mean - sum / 4.0).abs() < 1e-15);
    }

    #[test]
    fn dice_matches_hand_computed_example() {
        let l: f64 = dice_loss(&[1.0, 0.0, 1.0], &[0.5, 0.5, 1.0], 1.0).unwrap();
        assert!((l - 0.2).abs() < 1e-12);
    }

    #[test]
    fn dice_of_identical_binary_maps_is_exactly_zero() {
        let mut r = rng(101);
        for _ in 0..100 {
            let y: alloc::vec::Vec<f64> =
                (0..64).map(|_| if r.gen_bool(0.3) { 1.0 } else { 0.0 }).collect();
            assert_eq!(dice_loss(&y, &y, 1.0).unwrap(), 0.0);
            assert_eq!(dice_loss(&y, &y, 0.5).unwrap(), 0.0);
        }
    }

    #[test]
    fn dice_of_empty_maps_is_zero_thanks_to_epsilon() {
        let z = [0.0; 16];
        assert_eq!(dice_loss(&z, &z, 1.0).unwrap(), 0.0);
        assert_eq!(dice_loss(&z, &z, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn combined_matches_sum_of_parts_on_worked_example() {
        let l = combined_loss(&[1.0, 0.0], &[0.5, 0.5], &sum_cfg()).unwrap();
        let expect = 2.0 * f64::ln(2.0) + (1.0 - 2.0 / 3.0);
        assert!((l - expect).abs() < 1e-12);
        assert!((l - 1.7196276944532239f64).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_and_empty_inputs_are_rejected() {
        assert!(matches!(bce(&[1.0], &[0.5, 0.5], &sum_cfg()), Err(Error::Shape(_))));
        assert!(matches!(dice_loss::<f64>(&[], &[], 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_vectors() {
        let mut r = rng(103);
        for &(reduction, dice) in &[
            (Reduction::Sum, true),
            (Reduction::Mean, true),
            (Reduction::Mean, false),
        ] {
            let cfg = LossConfig { bce_reduction: reduction, dice_enabled: dice, ..LossConfig::default() };
            let y: alloc::vec::Vec<f64> =
                (0..100).map(|_| if r.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
            let mut p: alloc::vec::Vec<f64> = (0..100).map(|_| r.gen_range(0.05..0.95)).collect();
            let grad = combined_loss_grad(&y, &p, &cfg).unwrap();
            let h = 1e-6;
            let mut max_err: f64 = 0.0;
            for i in 0..p.len() {
                let orig = p[i];
                p[i] = orig + h;
                let lp = combined_loss(&y, &p, &cfg).unwrap();
                p[i] = orig - h;
                let lm = combined_loss(&y, &p, &cfg).unwrap();
                p[i] = orig;
                max_err = max_err.max(rel_err(grad[i], (lp - lm) / (2.0 * h)));
            }
            assert!(max_err < 1e-5, "max rel err {max_err}");
        }
    }

    #[test]
    fn logit_gradient_collapses_to_p_minus_y_for_sum_bce() {
        let cfg = LossConfig { bce_reduction: Reduction::Sum, dice_enabled: false, ..LossConfig::default() };
        let y: [f64; 3] = [1.0, 0.0, 1.0];
        let p = [0.3, 0.6, 0.9];
        let g = combined_loss_grad_logit(&y, &p, &cfg).unwrap();
        for i in 0..3 {
            assert!((g[i] - (p[i] - y[i])).abs() < 1e-12);
        }
    }

    fn mask_of(vals: &[f32], h: usize, w: usize) -> Mask {
        Mask::from_pixels(h, w, vals.to_vec()).unwrap()
    }

    #[test]
    fn multi_head_weights_select_heads() {
        let y = mask_of(&[1.0, 0.0, 1.0, 0.0], 2, 2);
        let good = mask_of(&[1.0, 0.0, 1.0, 0.0], 2, 2);
        let bad = mask_of(&[0.1, 0.9, 0.2, 0.8], 2, 2);
        let preds = PredictionSet {
            side: alloc::vec![bad.clone(), bad.clone(), bad.clone(), bad.clone()],
            fused: good.clone(),
        };
        let fused_only = LossConfig { head_weights: [0.0, 0.0, 0.0, 0.0, 1.0], ..LossConfig::default() };
        let l = multi_head_loss(&preds, &y, &fused_only).unwrap();
        let yv: alloc::vec::Vec<f64> = y.pixels.iter().map(|&v| v as f64).collect();
        let gv: alloc::vec::Vec<f64> = good.pixels.iter().map(|&v| v as f64).collect();
        let direct = combined_loss(&yv, &gv, &fused_only).unwrap();
        assert!((l - direct).abs() < 1e-12);

        // degrading one head under default weights strictly increases the total
        let all_good = PredictionSet {
            side: alloc::vec![good.clone(), good.clone(), good.clone(), good.clone()],
            fused: good.clone(),
        };
        let one_bad = PredictionSet {
            side: alloc::vec![good.clone(), bad.clone(), good.clone(), good.clone()],
            fused: good,
        };
        let cfg = LossConfig::default();
        assert!(
            multi_head_loss(&one_bad, &y, &cfg).unwrap() > multi_head_loss(&all_good, &y, &cfg).unwrap()
        );
    }

    #[test]
    fn multi_head_without_side_layers_uses_fused_term_only() {
        let y = mask_of(&[1.0, 0.0, 0.0, 0.0], 2, 2);
        let fused = mask_of(&[0.8, 0.1, 0.2, 0.1], 2, 2);
        let preds = PredictionSet { side: alloc::vec::Vec::new(), fused: fused.clone() };
        let l = multi_head_loss(&preds, &y, &LossConfig::default()).unwrap();
        let yv: alloc::vec::Vec<f64> = y.pixels.iter().map(|&v| v as f64).collect();
        let fv: alloc::vec::Vec<f64> = fused.pixels.iter().map(|&v| v as f64).collect();
        let direct = combined_loss(&yv, &fv, &LossConfig::default()).unwrap();
        assert!((l - direct).abs() < 1e-12);
    }

    #[test]
    fn config_validation_rejects_out_of_range_values() {
        let cfg = LossConfig { epsilon: 0.0, ..LossConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = LossConfig { clip_delta: 0.5, ..LossConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = LossConfig { head_weights: [0.0; 5], ..LossConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(LossConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn dice_stays_in_unit_interval(
            pairs in proptest::collection::vec((0u8..2, 0.0f64..=1.0), 1..80),
            eps in 1e-3f64..2.0,
        ) {
            let y: alloc::vec::Vec<f64> = pairs.iter().map(|&(b, _)| b as f64).collect();
            let p: alloc::vec::Vec<f64> = pairs.iter().map(|&(_, v)| v).collect();
            let d = dice_loss(&y, &p, eps).unwrap();
            prop_assert!((0.0..1.0).contains(&d));
        }

        #[test]
        fn dice_is_symmetric_for_binary_maps(bits in proptest::collection::vec((0u8..2, 0u8..2), 1..80)) {
            let a: alloc::vec::Vec<f64> = bits.iter().map(|&(x, _)| x as f64).collect();
            let b: alloc::vec::Vec<f64> = bits.iter().map(|&(_, x)| x as f64).collect();
            let ab = dice_loss(&a, &b, 1.0).unwrap();
            let ba = dice_loss(&b, &a, 1.0).unwrap();
            prop_assert!((ab - ba).abs() < 1e-15);
        }

        #[test]
        fn combined_dominates_dice(
            pairs in proptest::collection::vec((0u8..2, 0.001f64..=0.999), 1..60),
        ) {
            let y: alloc::vec::Vec<f64> = pairs.iter().map(|&(b, _)| b as f64).collect();
            let p: alloc::vec::Vec<f64> = pairs.iter().map(|&(_, v)| v).collect();
            let cfg = LossConfig::default();
            let c = combined_loss(&y, &p, &cfg).unwrap();
            let d = dice_loss(&y, &p, cfg.epsilon).unwrap();
            prop_assert!(c >= d);
        }
    }
}
