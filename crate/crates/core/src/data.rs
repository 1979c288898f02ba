//! Dataset handling that has to be deterministic: the object-wise
//! stratified split and rotation augmentation. File IO lives outside this
//! crate; everything here works on in-memory pairs.

use num_traits::Float;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::mask::{Mask, Pair};

/// Train/validation id lists from an object-wise stratified split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub seed: u64,
}

/// Split per object class: within each class, floor(ratio * n) images go to
/// train (at least 1); the rest validate. Classes with a single image go to
/// train only. Classes are processed in sorted name order with ids sorted
/// before the seeded shuffle, so a seed pins the exact split.
pub fn split_by_object(pairs: &[Pair], ratio: f64, seed: u64) -> Result<DatasetSplit, Error> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("split over zero pairs".to_string()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in pairs {
        by_class.entry(&p.class).or_default().push(&p.id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit { train: Vec::new(), validation: Vec::new(), seed };
    for ids in by_class.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let n = ids.len();
        let take = (Float::floor(ratio * n as f64) as usize).max(1).min(n);
        for (i, id) in ids.iter().enumerate() {
            if i < take {
                split.train.push(String::from(*id));
            } else {
                split.validation.push(String::from(*id));
            }
        }
    }
    Ok(split)
}

/// Clone pairs into (train, validation) lists according to a split; ids the
/// split does not mention are dropped.
pub fn partition(pairs: &[Pair], split: &DatasetSplit) -> (Vec<Pair>, Vec<Pair>) {
    let train_ids: BTreeSet<&str> = split.train.iter().map(String::as_str).collect();
    let val_ids: BTreeSet<&str> = split.validation.iter().map(String::as_str).collect();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for p in pairs {
        if train_ids.contains(p.id.as_str()) {
            train.push(p.clone());
        } else if val_ids.contains(p.id.as_str()) {
            val.push(p.clone());
        }
    }
    (train, val)
}

/// Rotate a mask around the image center by `degrees`, nearest-neighbor
/// sampled (inverse mapping, rounding half away from zero). Pixels mapping
/// outside the frame read as 0; the result is re-binarized at 0.5.
pub fn rotate_mask(m: &Mask, degrees: f64) -> Mask {
    let theta = Float::to_radians(degrees);
    let (sin, cos) = Float::sin_cos(theta);
    let cy = (m.h as f64 - 1.0) / 2.0;
    let cx = (m.w as f64 - 1.0) / 2.0;
    let mut out = Mask::zeros(m.h, m.w);
    for y in 0..m.h {
        let dy = y as f64 - cy;
        for x in 0..m.w {
            let dx = x as f64 - cx;
            let sx = cx + cos * dx + sin * dy;
            let sy = cy - sin * dx + cos * dy;
            let rx = Float::round(sx);
            let ry = Float::round(sy);
            if rx >= 0.0 && ry >= 0.0 && (rx as usize) < m.w && (ry as usize) < m.h {
                let v = m.get(ry as usize, rx as usize);
                out.set(y, x, if v >= 0.5 { 1.0 } else { 0.0 });
            }
        }
    }
    out
}

/// Pad a training set to exactly `target_count` pairs by rotating existing
/// ones by uniform angles in [-45, +45] degrees (shape and skeleton share
/// the angle). Originals come first, untouched. The augmentation quota
/// round-robins over classes from fewest original images to most (name
/// breaks ties), cycling inside each class in input order. New ids are
/// `<class>-aug<k>` with a per-class counter.
pub fn augment_rotations(train: &[Pair], target_count: usize, seed: u64) -> Result<Vec<Pair>, Error> {
    if target_count < train.len() {
        return Err(Error::InvalidTarget { target: target_count, available: train.len() });
    }
    let mut out: Vec<Pair> = train.to_vec();
    let needed = target_count - train.len();
    if needed == 0 {
        return Ok(out);
    }

    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in train.iter().enumerate() {
        by_class.entry(&p.class).or_default().push(i);
    }
    // fewest-first priority, fixed for the whole run
    let mut classes: Vec<(usize, &str)> = by_class.iter().map(|(c, v)| (v.len(), *c)).collect();
    classes.sort_unstable();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    let mut produced = 0;
    'fill: loop {
        for &(_, class) in &classes {
            if produced == needed {
                break 'fill;
            }
            let members = &by_class[class];
            let k = *counters.get(class).unwrap_or(&0);
            let src = &train[members[k % members.len()]];
            let angle = rng.gen_range(-45.0..=45.0);
            let pair = Pair::new(
                format!("{class}-aug{k}"),
                String::from(class),
                rotate_mask(&src.shape, angle),
                rotate_mask(&src.skeleton, angle),
            )?;
            out.push(pair);
            counters.insert(class, k + 1);
            produced += 1;
        }
    }
    Ok(out)
}
