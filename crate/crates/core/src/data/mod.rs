//! Datasets: a synthetic generator built to expose augmentation damage,
//! the IDX container format, and seeded batching.

mod fragile;
mod idx;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::augment::{Image, LabeledBatch};
use crate::error::{invalid, Result};
use crate::rng;

pub use fragile::{bar_image, gen_fragile_bars, FragileClass, FRAGILE_CLASSES, ROBUST_CLASSES};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels, write_idx,
    IdxHeader, IMAGE_MAGIC, LABEL_MAGIC,
};

/// Images with hard class labels. Sample `i` has id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub classes: Vec<usize>,
    pub num_classes: usize,
    /// Ground-truth fragile samples (synthetic data only).
    pub fragile_ids: BTreeSet<u64>,
}

impl Dataset {
    pub fn new(images: Vec<Image>, classes: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.len() != classes.len() {
            return Err(invalid("image and label counts differ"));
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= num_classes) {
            return Err(invalid(format!(
                "class {c} out of range for {num_classes} classes"
            )));
        }
        if let Some(first) = images.first() {
            if images.iter().any(|im| !im.same_shape(first)) {
                return Err(invalid("images differ in shape"));
            }
        }
        Ok(Self {
            images,
            classes,
            num_classes,
            fragile_ids: BTreeSet::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> {
        0..self.images.len() as u64
    }

    pub fn input_width(&self) -> usize {
        self.images.first().map_or(0, |im| im.pixels.len())
    }

    pub fn one_hot(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.num_classes];
        v[self.classes[i]] = 1.0;
        v
    }

    /// Batch of the given sample indices, in that order.
    pub fn batch(&self, indices: &[usize]) -> LabeledBatch {
        LabeledBatch {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.one_hot(i)).collect(),
            ids: indices.iter().map(|&i| i as u64).collect(),
        }
    }

    pub fn full_batch(&self) -> LabeledBatch {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch(&all)
    }

    pub fn is_fragile(&self, id: u64) -> bool {
        self.fragile_ids.contains(&id)
    }
}

/// Index permutation for one epoch, keyed by `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, (1 << 32) + epoch);
    order.shuffle(&mut rng);
    order
}

/// Splits a seeded permutation into full batches of `b`; the trailing
/// partial batch is dropped.
pub fn batches(dataset: &Dataset, b: usize, seed: u64, epoch: u64) -> Result<Vec<LabeledBatch>> {
    if b == 0 || b > dataset.len() {
        return Err(invalid(format!(
            "batch size {b} must be in 1..={}",
            dataset.len()
        )));
    }
    let order = epoch_order(dataset.len(), seed, epoch);
    Ok(order
        .chunks_exact(b)
        .map(|chunk| dataset.batch(chunk))
        .collect())
}
