//! Synthetic shape/skeleton corpus for tests and demos: elongated bars,
//! eccentric ellipses, and L-shapes with ground-truth skeletons obtained by
//! morphological thinning. The geometry is deliberately elongated: thinning
//! a compact blob collapses to a few pixels, while these shapes keep spines
//! comparable to the image side, so the skeletons are learnable targets.
//! No external data needed.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mask::{Mask, Pair};

const CLASSES: [&str; 3] = ["rect", "ellipse", "lshape"];

/// Iterative two-pass thinning to a 1-pixel-wide skeleton. Border handling
/// treats out-of-frame neighbors as background.
pub fn thin(mask: &Mask) -> Mask {
    let (h, w) = (mask.h, mask.w);
    let mut grid: Vec<bool> = mask.pixels.iter().map(|&v| v >= 0.5).collect();
    let at = |g: &[bool], y: i64, x: i64| -> bool {
        y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && g[y as usize * w + x as usize]
    };
    let mut changed = true;
    while changed {
        changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    if !at(&grid, y, x) {
                        continue;
                    }
                    // neighbors clockwise from north: p2..p9
                    let p = [
                        at(&grid, y - 1, x),
                        at(&grid, y - 1, x + 1),
                        at(&grid, y, x + 1),
                        at(&grid, y + 1, x + 1),
                        at(&grid, y + 1, x),
                        at(&grid, y + 1, x - 1),
                        at(&grid, y, x - 1),
                        at(&grid, y - 1, x - 1),
                    ];
                    let b: usize = p.iter().map(|&v| v as usize).sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    // 0->1 transitions around the ring
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    let (c1, c2) = if pass == 0 {
                        (p[0] && p[2] && p[4], p[2] && p[4] && p[6])
                    } else {
                        (p[0] && p[2] && p[6], p[0] && p[4] && p[6])
                    };
                    if !c1 && !c2 {
                        remove.push((y as usize, x as usize));
                    }
                }
            }
            if !remove.is_empty() {
                changed = true;
                for (y, x) in remove {
                    grid[y * w + x] = false;
                }
            }
        }
    }
    let mut out = Mask::zeros(h, w);
    for (i, &v) in grid.iter().enumerate() {
        if v {
            out.pixels[i] = 1.0;
        }
    }
    out
}

/// Thinning with a guarantee: a non-empty shape never yields an empty
/// skeleton (degenerate cases keep the centroid pixel).
pub fn skeletonize(shape: &Mask) -> Mask {
    let skel = thin(shape);
    if skel.foreground() > 0 || shape.foreground() == 0 {
        return skel;
    }
    let mut sum_y = 0usize;
    let mut sum_x = 0usize;
    let mut n = 0usize;
    for y in 0..shape.h {
        for x in 0..shape.w {
            if shape.get(y, x) >= 0.5 {
                sum_y += y;
                sum_x += x;
                n += 1;
            }
        }
    }
    let mut out = Mask::zeros(shape.h, shape.w);
    out.set(sum_y / n, sum_x / n, 1.0);
    out
}

fn fill_rect(m: &mut Mask, y0: usize, x0: usize, y1: usize, x1: usize) {
    for y in y0..y1 {
        for x in x0..x1 {
            m.set(y, x, 1.0);
        }
    }
}

fn gen_shape(class: &str, size: usize, rng: &mut ChaCha8Rng) -> Mask {
    let mut m = Mask::zeros(size, size);
    let margin = (size / 16).max(1);
    // half-extent along the long axis; 2*(long_hi + margin) < size keeps
    // every center range below nonempty
    let long_lo = size / 3;
    let long_hi = 2 * size / 5;
    let short_lo = (size / 16).max(2);
    match class {
        "rect" => {
            // thin bar, horizontal or vertical; thins to a near-axial line
            let long = rng.gen_range(long_lo..=long_hi);
            let short = rng.gen_range(short_lo..=(size / 10).max(short_lo));
            let (hh, hw) = if rng.gen_bool(0.5) { (short, long) } else { (long, short) };
            let cy = rng.gen_range(margin + hh..size - margin - hh);
            let cx = rng.gen_range(margin + hw..size - margin - hw);
            fill_rect(&mut m, cy - hh, cx - hw, cy + hh, cx + hw);
        }
        "ellipse" => {
            // eccentric and freely rotated; thins to its major-axis curve
            let ai = rng.gen_range(long_lo..=long_hi);
            let a = ai as f64;
            let b = rng.gen_range(short_lo..=(size / 8).max(short_lo)) as f64;
            let cy = rng.gen_range(margin + ai..size - margin - ai);
            let cx = rng.gen_range(margin + ai..size - margin - ai);
            let theta = rng.gen_range(0.0..core::f64::consts::PI);
            let (sin, cos) = Float::sin_cos(theta);
            for y in 0..size {
                for x in 0..size {
                    let dy = y as f64 - cy as f64;
                    let dx = x as f64 - cx as f64;
                    let u = (dy * cos + dx * sin) / a;
                    let v = (dx * cos - dy * sin) / b;
                    if u * u + v * v <= 1.0 {
                        m.set(y, x, 1.0);
                    }
                }
            }
        }
        _ => {
            // two overlapping bars forming an L
            let arm = rng.gen_range(size / 6..=size / 3);
            let thick = (size / 12).max(3);
            let y0 = rng.gen_range(margin..size / 2);
            let x0 = rng.gen_range(margin..size / 2);
            fill_rect(&mut m, y0, x0, (y0 + 2 * arm).min(size - margin), x0 + thick);
            fill_rect(&mut m, (y0 + 2 * arm - thick).min(size - margin - thick), x0, (y0 + 2 * arm).min(size - margin), (x0 + arm).min(size - margin));
        }
    }
    m
}

/// Deterministic synthetic corpus of `count` pairs at `size` x `size`,
/// cycling through the three shape classes. Ids follow the
/// `<class>-<index>` naming used by the loaders.
pub fn generate(count: usize, size: usize, seed: u64) -> Vec<Pair> {
    assert!(size >= 16, "synthetic shapes need at least 16x16");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let class = CLASSES[i % CLASSES.len()];
        let shape = gen_shape(class, size, &mut rng);
        let skeleton = skeletonize(&shape);
        let pair = Pair::new(format!("{class}-{}", i / CLASSES.len()), class.into(), shape, skeleton)
            .expect("generated masks share dimensions");
        out.push(pair);
    }
    out
}
