use rand::Rng;

use crate::augment::{apply_plan, AugOp, AugPlan, LabeledBatch, SelectionMask};
use crate::error::Result;
use crate::tensorcore::{loss, Mlp};

/// Mean batch losses on the original, selectively augmented and fully
/// augmented batches, and the reward they define.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardRecord {
    pub loss_original: f64,
    pub loss_selected: f64,
    pub loss_full: f64,
    pub reward: f64,
}

impl RewardRecord {
    pub fn from_losses(loss_original: f64, loss_selected: f64, loss_full: f64) -> Self {
        Self {
            loss_original,
            loss_selected,
            loss_full,
            reward: (loss_original - loss_selected) + (loss_full - loss_selected),
        }
    }

    /// Expected reward of a uniformly random size-`k` selection from a
    /// batch of `b` under the same augmentation draws. Per-sample losses
    /// add up, so this is `(loss_full − loss_original)(1 − 2k/b)`.
    pub fn random_selection_reward(&self, k: usize, b: usize) -> f64 {
        (self.loss_full - self.loss_original) * (1.0 - 2.0 * k as f64 / b as f64)
    }
}

/// The selectively and fully augmented batches behind a reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardOutcome {
    pub record: RewardRecord,
    pub selected: LabeledBatch,
    pub full: LabeledBatch,
}

fn mean_loss(target: &Mlp, batch: &LabeledBatch) -> Result<f64> {
    Ok(loss(target, &batch.image_tensor(), &batch.label_tensor())?.0)
}

/// Scores already-built batches. The target is only read.
pub fn reward_from_batches(
    target: &Mlp,
    original: &LabeledBatch,
    selected: &LabeledBatch,
    full: &LabeledBatch,
) -> Result<RewardRecord> {
    Ok(RewardRecord::from_losses(
        mean_loss(target, original)?,
        mean_loss(target, selected)?,
        mean_loss(target, full)?,
    ))
}

/// Reward of `mask` when `selected_plan` augments the selected samples and
/// `full_plan` augments every sample of the fully augmented batch.
pub fn reward_with_plans(
    target: &Mlp,
    batch: &LabeledBatch,
    mask: &SelectionMask,
    selected_plan: &AugPlan,
    full_plan: &AugPlan,
) -> Result<RewardOutcome> {
    let selected = apply_plan(batch, mask, selected_plan)?;
    let full = apply_plan(batch, &SelectionMask::all(batch.len()), full_plan)?;
    let record = reward_from_batches(target, batch, &selected, &full)?;
    Ok(RewardOutcome {
        record,
        selected,
        full,
    })
}

pub fn reward_with_plan(
    target: &Mlp,
    batch: &LabeledBatch,
    mask: &SelectionMask,
    plan: &AugPlan,
) -> Result<RewardOutcome> {
    reward_with_plans(target, batch, mask, plan, plan)
}

/// Draws one augmentation plan from `rng` and scores `mask` under it.
pub fn compute_reward<R: Rng + ?Sized>(
    target: &Mlp,
    batch: &LabeledBatch,
    mask: &SelectionMask,
    op: &AugOp,
    rng: &mut R,
) -> Result<RewardRecord> {
    let plan = AugPlan::draw(op, batch, rng)?;
    Ok(reward_with_plan(target, batch, mask, &plan)?.record)
}
