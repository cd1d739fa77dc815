//! "Fragile bars": four classes on small square images where a quarter
//! turn swaps the meaning of two classes and leaves the other two intact.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::augment::Image;
use crate::error::{invalid, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragileClass {
    VerticalBar = 0,
    HorizontalBar = 1,
    Cross = 2,
    Blob = 3,
}

/// Classes whose semantics a quarter turn destroys.
pub const FRAGILE_CLASSES: [usize; 2] = [0, 1];
/// Classes invariant under a quarter turn.
pub const ROBUST_CLASSES: [usize; 2] = [2, 3];

/// Range of admissible bar positions. Symmetric about the centre, so the
/// quarter-turn image of a bar is another admissible bar.
fn bar_positions(size: usize) -> (usize, usize) {
    (size / 4, size - 1 - size / 4)
}

/// Largest centre offset of a cross or blob along either axis. Offsets are
/// drawn from a symmetric square, which a quarter turn maps onto itself.
fn max_offset(size: usize) -> i64 {
    (size / 4) as i64
}

/// Noise-free pattern of `class`. `pos` is the bar column (class 0) or row
/// (class 1); `offset` is the `(dy, dx)` centre shift of the cross (class 2)
/// or blob (class 3). Unused arguments are ignored.
pub fn bar_image(class: usize, pos: usize, offset: (i64, i64), size: usize) -> Image {
    let mut img = Image::filled(size, size, 1, 0.0);
    let c = (size as f64 - 1.0) / 2.0;
    let r = size as f64 / 4.0 + 0.5;
    let (oy, ox) = offset;
    for y in 0..size {
        for x in 0..size {
            let (yi, xi) = (y as i64 - oy, x as i64 - ox);
            let on = match class {
                0 => x == pos,
                1 => y == pos,
                2 => xi == yi || xi + yi == size as i64 - 1,
                _ => {
                    let (dy, dx) = (yi as f64 - c, xi as f64 - c);
                    dy * dy + dx * dx <= r * r
                }
            };
            if on {
                img.set(y, x, 0, 1.0);
            }
        }
    }
    img
}

/// `n` balanced samples (class `i % 4`) of `size×size` single-channel images
/// with Gaussian pixel noise of standard deviation `noise`.
pub fn gen_fragile_bars(n: usize, size: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if size < 6 {
        return Err(invalid(format!("image size {size} must be at least 6")));
    }
    if n == 0 || !n.is_multiple_of(4) {
        return Err(invalid(format!(
            "sample count {n} must be a positive multiple of 4"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(invalid(format!("noise {noise} must be non-negative")));
    }
    let mut rng = rng::seeded(seed);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let (lo, hi) = bar_positions(size);
    let j = max_offset(size);
    let mut images = Vec::with_capacity(n);
    let mut classes = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 4;
        let pos = rng.random_range(lo..=hi);
        let offset = (rng.random_range(-j..=j), rng.random_range(-j..=j));
        let mut img = bar_image(class, pos, offset, size);
        if noise > 0.0 {
            for p in &mut img.pixels {
                *p = (*p + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        images.push(img);
        classes.push(class);
    }
    let mut ds = Dataset::new(images, classes, 4)?;
    ds.fragile_ids = (0..n as u64)
        .filter(|&id| FRAGILE_CLASSES.contains(&ds.classes[id as usize]))
        .collect();
    Ok(ds)
}
