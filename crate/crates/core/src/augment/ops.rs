use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::batch::{Image, LabeledBatch, SelectionMask};
use crate::error::{invalid, Error, Result};

/// Grey level written into erased regions.
pub const FILL_VALUE: f64 = 0.5;

/// Magnitudes for the random-compose transform family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformMagnitudes {
    /// Maximum translation in pixels along each axis.
    pub shift: usize,
    /// Side of the square erased region.
    pub erase: usize,
}

impl Default for TransformMagnitudes {
    fn default() -> Self {
        Self { shift: 2, erase: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AugTag {
    Mixup,
    CutMix,
    Cutout,
    RandTransform,
}

impl AugTag {
    pub const ALL: [AugTag; 4] = [
        AugTag::Mixup,
        AugTag::CutMix,
        AugTag::Cutout,
        AugTag::RandTransform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugTag::Mixup => "mixup",
            AugTag::CutMix => "cutmix",
            AugTag::Cutout => "cutout",
            AugTag::RandTransform => "randtransform",
        }
    }
}

impl fmt::Display for AugTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AugTag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| invalid(format!("unknown augmentation op {s:?}")))
    }
}

/// A data-augmentation operation with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugOp {
    Mixup { alpha: f64 },
    CutMix { alpha: f64 },
    Cutout { hole: usize },
    RandTransform(TransformMagnitudes),
}

impl AugOp {
    pub fn tag(&self) -> AugTag {
        match self {
            AugOp::Mixup { .. } => AugTag::Mixup,
            AugOp::CutMix { .. } => AugTag::CutMix,
            AugOp::Cutout { .. } => AugTag::Cutout,
            AugOp::RandTransform(_) => AugTag::RandTransform,
        }
    }

    /// Checks parameters against an image shape `(h, w)`.
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        match *self {
            AugOp::Mixup { alpha } | AugOp::CutMix { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(invalid(format!("alpha must be positive, got {alpha}")));
                }
            }
            AugOp::Cutout { hole } => {
                if hole == 0 || hole > height.min(width) {
                    return Err(invalid(format!(
                        "cutout hole {hole} outside 1..={}",
                        height.min(width)
                    )));
                }
            }
            AugOp::RandTransform(m) => {
                if height != width {
                    return Err(invalid("rotate90 needs square images"));
                }
                if m.shift > width / 2 {
                    return Err(invalid(format!(
                        "shift {} exceeds half width {}",
                        m.shift,
                        width / 2
                    )));
                }
                if m.erase == 0 || m.erase > height.min(width) {
                    return Err(invalid(format!("erase size {} out of range", m.erase)));
                }
            }
        }
        Ok(())
    }
}

/// Half-open, already-clipped rectangle `[y0, y1) × [x0, x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub y0: usize,
    pub y1: usize,
    pub x0: usize,
    pub x1: usize,
}

impl Region {
    /// Box of size `h×w` whose top-left is `center - size/2`, clipped to the image.
    pub fn centered(cy: usize, cx: usize, h: usize, w: usize, height: usize, width: usize) -> Self {
        let clip = |start: i64, len: usize, bound: usize| {
            let lo = start.clamp(0, bound as i64) as usize;
            let hi = (start + len as i64).clamp(0, bound as i64) as usize;
            (lo, hi)
        };
        let (y0, y1) = clip(cy as i64 - (h / 2) as i64, h, height);
        let (x0, x1) = clip(cx as i64 - (w / 2) as i64, w, width);
        Self { y0, y1, x0, x1 }
    }

    pub fn area(&self) -> usize {
        (self.y1 - self.y0) * (self.x1 - self.x0)
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.y0..self.y1).contains(&y) && (self.x0..self.x1).contains(&x)
    }
}

/// One label-preserving geometric or erasing transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    HFlip,
    /// Quarter turn counter-clockwise.
    Rotate90,
    Translate {
        dy: i64,
        dx: i64,
    },
    Erase(Region),
}

/// The random outcome for one sample, fixed before any mask is applied.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleDraw {
    Mix { partner: usize, lambda: f64 },
    Paste { partner: usize, region: Region },
    Erase(Region),
    Compose(Vec<Transform>),
}

/// Augmentation outcomes for every sample of a batch.
///
/// Drawing the plan once and applying it under different masks lets the
/// selectively and fully augmented batches share identical randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct AugPlan {
    pub draws: Vec<SampleDraw>,
}

impl SampleDraw {
    pub fn draw<R: Rng + ?Sized>(
        op: &AugOp,
        batch_len: usize,
        height: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        op.validate(height, width)?;
        Ok(match *op {
            AugOp::Mixup { alpha } => {
                let partner = rng.random_range(0..batch_len);
                let lambda = beta(alpha, rng)?;
                SampleDraw::Mix { partner, lambda }
            }
            AugOp::CutMix { alpha } => {
                let partner = rng.random_range(0..batch_len);
                let lambda = beta(alpha, rng)?;
                let r = (1.0 - lambda).sqrt();
                let cut_h = (height as f64 * r).floor() as usize;
                let cut_w = (width as f64 * r).floor() as usize;
                let cy = rng.random_range(0..height);
                let cx = rng.random_range(0..width);
                SampleDraw::Paste {
                    partner,
                    region: Region::centered(cy, cx, cut_h, cut_w, height, width),
                }
            }
            AugOp::Cutout { hole } => {
                let cy = rng.random_range(0..height);
                let cx = rng.random_range(0..width);
                SampleDraw::Erase(Region::centered(cy, cx, hole, hole, height, width))
            }
            AugOp::RandTransform(m) => {
                let mut ts = Vec::with_capacity(2);
                for _ in 0..2 {
                    ts.push(match rng.random_range(0..4u8) {
                        0 => Transform::HFlip,
                        1 => Transform::Rotate90,
                        2 => {
                            let s = m.shift as i64;
                            Transform::Translate {
                                dy: rng.random_range(-s..=s),
                                dx: rng.random_range(-s..=s),
                            }
                        }
                        _ => {
                            let cy = rng.random_range(0..height);
                            let cx = rng.random_range(0..width);
                            Transform::Erase(Region::centered(
                                cy, cx, m.erase, m.erase, height, width,
                            ))
                        }
                    });
                }
                SampleDraw::Compose(ts)
            }
        })
    }
}

fn beta<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    let dist = Beta::new(alpha, alpha).map_err(|e| invalid(format!("beta({alpha}): {e}")))?;
    Ok(dist.sample(rng))
}

impl AugPlan {
    /// Draws one outcome per sample with the same operation.
    pub fn draw<R: Rng + ?Sized>(op: &AugOp, batch: &LabeledBatch, rng: &mut R) -> Result<Self> {
        let ops = vec![*op; batch.len()];
        Self::draw_per_sample(&ops, batch, rng)
    }

    /// Draws sample `i`'s outcome with `ops[i]`.
    pub fn draw_per_sample<R: Rng + ?Sized>(
        ops: &[AugOp],
        batch: &LabeledBatch,
        rng: &mut R,
    ) -> Result<Self> {
        let (h, w, _) = batch
            .image_shape()
            .ok_or_else(|| invalid("cannot augment an empty batch"))?;
        if ops.len() != batch.len() {
            return Err(invalid("one op per sample required"));
        }
        let draws = ops
            .iter()
            .map(|op| SampleDraw::draw(op, batch.len(), h, w, rng))
            .collect::<Result<_>>()?;
        Ok(Self { draws })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Applies `plan` to the samples selected by `mask`. Partners for mixing
/// are always read from the original batch; unselected samples are copied
/// through untouched.
pub fn apply_plan(
    batch: &LabeledBatch,
    mask: &SelectionMask,
    plan: &AugPlan,
) -> Result<LabeledBatch> {
    if batch.is_empty() {
        return Err(invalid("cannot augment an empty batch"));
    }
    if mask.len() != batch.len() || plan.len() != batch.len() {
        return Err(invalid(format!(
            "batch of {} with mask of {} and plan of {}",
            batch.len(),
            mask.len(),
            plan.len()
        )));
    }
    let mut out = batch.clone();
    for i in mask.selected() {
        let (image, label) = apply_draw(batch, i, &plan.draws[i])?;
        out.images[i] = image;
        out.labels[i] = label;
    }
    Ok(out)
}

fn apply_draw(batch: &LabeledBatch, i: usize, draw: &SampleDraw) -> Result<(Image, Vec<f64>)> {
    let x = &batch.images[i];
    let y = &batch.labels[i];
    let partner_check = |j: usize| {
        if j >= batch.len() {
            Err(invalid(format!(
                "partner {j} outside batch of {}",
                batch.len()
            )))
        } else {
            Ok(j)
        }
    };
    Ok(match draw {
        SampleDraw::Mix { partner, lambda } => {
            let j = partner_check(*partner)?;
            (
                mix_images(x, &batch.images[j], *lambda),
                mix_labels(y, &batch.labels[j], *lambda),
            )
        }
        SampleDraw::Paste { partner, region } => {
            let j = partner_check(*partner)?;
            let (img, lam) = paste_region(x, &batch.images[j], region);
            (img, mix_labels(y, &batch.labels[j], lam))
        }
        SampleDraw::Erase(region) => (erase(x, region), y.clone()),
        SampleDraw::Compose(ts) => {
            let mut img = x.clone();
            for t in ts {
                img = apply_transform(&img, t)?;
            }
            (img, y.clone())
        }
    })
}

/// `λ·a + (1−λ)·b` per pixel.
pub fn mix_images(a: &Image, b: &Image, lambda: f64) -> Image {
    let pixels = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&p, &q)| (lambda * p + (1.0 - lambda) * q).clamp(0.0, 1.0))
        .collect();
    Image {
        pixels,
        ..a.clone()
    }
}

pub fn mix_labels(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| (lambda * p + (1.0 - lambda) * q).clamp(0.0, 1.0))
        .collect()
}

/// Copies `region` of `donor` into `base`; returns the image and the
/// effective label weight `1 − area/(H·W)` kept by `base`.
pub fn paste_region(base: &Image, donor: &Image, region: &Region) -> (Image, f64) {
    let mut out = base.clone();
    for y in region.y0..region.y1 {
        for x in region.x0..region.x1 {
            for c in 0..base.channels {
                let k = base.index(y, x, c);
                out.pixels[k] = donor.pixels[k];
            }
        }
    }
    let lam = 1.0 - region.area() as f64 / (base.height * base.width) as f64;
    (out, lam)
}

pub fn erase(base: &Image, region: &Region) -> Image {
    let mut out = base.clone();
    for y in region.y0..region.y1 {
        for x in region.x0..region.x1 {
            for c in 0..base.channels {
                let k = base.index(y, x, c);
                out.pixels[k] = FILL_VALUE;
            }
        }
    }
    out
}

pub fn apply_transform(img: &Image, t: &Transform) -> Result<Image> {
    let (h, w) = (img.height, img.width);
    let mut out = img.clone();
    match *t {
        Transform::HFlip => {
            for y in 0..h {
                for x in 0..w {
                    for c in 0..img.channels {
                        out.pixels[img.index(y, x, c)] = img.at(y, w - 1 - x, c);
                    }
                }
            }
        }
        Transform::Rotate90 => {
            if h != w {
                return Err(invalid("rotate90 needs square images"));
            }
            for y in 0..h {
                for x in 0..w {
                    for c in 0..img.channels {
                        out.pixels[img.index(y, x, c)] = img.at(x, w - 1 - y, c);
                    }
                }
            }
        }
        Transform::Translate { dy, dx } => {
            for y in 0..h {
                for x in 0..w {
                    let sy = y as i64 - dy;
                    let sx = x as i64 - dx;
                    let inside = (0..h as i64).contains(&sy) && (0..w as i64).contains(&sx);
                    for c in 0..img.channels {
                        out.pixels[img.index(y, x, c)] = if inside {
                            img.at(sy as usize, sx as usize, c)
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
        Transform::Erase(region) => return Ok(erase(img, &region)),
    }
    Ok(out)
}

/// Result of [`apply_selected`]: the augmented batch plus the id partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveBatch {
    pub batch: LabeledBatch,
    pub augmented_ids: Vec<u64>,
    pub original_ids: Vec<u64>,
}

/// Augments the masked samples with `op`, keeping batch order.
pub fn apply_selected<R: Rng + ?Sized>(
    batch: &LabeledBatch,
    mask: &SelectionMask,
    op: &AugOp,
    rng: &mut R,
) -> Result<SelectiveBatch> {
    if mask.len() != batch.len() {
        return Err(invalid("mask length differs from batch"));
    }
    let plan = AugPlan::draw(op, batch, rng)?;
    let out = apply_plan(batch, mask, &plan)?;
    let (mut aug, mut ori) = (Vec::new(), Vec::new());
    for (i, &id) in batch.ids.iter().enumerate() {
        if mask.is_selected(i) {
            aug.push(id);
        } else {
            ori.push(id);
        }
    }
    Ok(SelectiveBatch {
        batch: out,
        augmented_ids: aug,
        original_ids: ori,
    })
}

pub fn mixup<R: Rng + ?Sized>(
    batch: &LabeledBatch,
    mask: &SelectionMask,
    alpha: f64,
    rng: &mut R,
) -> Result<LabeledBatch> {
    apply_selected(batch, mask, &AugOp::Mixup { alpha }, rng).map(|s| s.batch)
}

pub fn cutmix<R: Rng + ?Sized>(
    batch: &LabeledBatch,
    mask: &SelectionMask,
    alpha: f64,
    rng: &mut R,
) -> Result<LabeledBatch> {
    apply_selected(batch, mask, &AugOp::CutMix { alpha }, rng).map(|s| s.batch)
}

pub fn cutout<R: Rng + ?Sized>(
    batch: &LabeledBatch,
    mask: &SelectionMask,
    hole: usize,
    rng: &mut R,
) -> Result<LabeledBatch> {
    apply_selected(batch, mask, &AugOp::Cutout { hole }, rng).map(|s| s.batch)
}

pub fn rand_transform<R: Rng + ?Sized>(
    batch: &LabeledBatch,
    mask: &SelectionMask,
    magnitudes: TransformMagnitudes,
    rng: &mut R,
) -> Result<LabeledBatch> {
    apply_selected(batch, mask, &AugOp::RandTransform(magnitudes), rng).map(|s| s.batch)
}
