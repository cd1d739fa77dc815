use crate::augment::{AugOp, TransformMagnitudes};
use crate::error::{invalid, Result};
use crate::policy::ActMode;
use crate::tensorcore::{OptimKind, OptimState};

use super::strategy::Strategy;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Ratio-pool interval count; the pool is `{0, 1/n, …, 1}`.
    pub intervals: usize,
    /// Augmentation used for every sample of the fully augmented batch, and
    /// for selected samples unless the operation policy overrides it.
    pub da_op: AugOp,
    /// Operations available to the operation policy.
    pub op_pool: Vec<AugOp>,
    pub strategy: Strategy,
    pub parent_lr: f64,
    pub child_lr: f64,
    pub policy_weight_decay: f64,
    pub target_optim: OptimKind,
    pub target_lr: f64,
    pub target_weight_decay: f64,
    pub target_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    /// Discount factor. Episodes are a single batch, so it never enters an
    /// update; kept for the record.
    pub gamma: f64,
    pub loss_ema_decay: f64,
    /// Policies update on iterations divisible by this.
    pub policy_update_every: u64,
    pub parent_mode: ActMode,
    pub child_mode: ActMode,
    /// Child and operation policies learn from the reward minus the
    /// expected reward of a random selection of the same size. The parent
    /// always sees the raw reward, since that baseline depends on its action.
    pub selection_baseline: bool,
    pub pretrain_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 30,
            intervals: 10,
            da_op: AugOp::RandTransform(TransformMagnitudes::default()),
            op_pool: default_op_pool(),
            strategy: Strategy::SelectAugment,
            parent_lr: 1e-5,
            child_lr: 1e-3,
            policy_weight_decay: 5e-4,
            target_optim: OptimKind::Sgd,
            target_lr: 0.1,
            target_weight_decay: 5e-4,
            target_hidden: vec![64, 32],
            policy_hidden: vec![64, 32],
            gamma: 1.0,
            loss_ema_decay: 0.9,
            policy_update_every: 1,
            parent_mode: ActMode::Sample,
            child_mode: ActMode::Sample,
            selection_baseline: true,
            pretrain_epochs: 0,
            seed: 0,
        }
    }
}

/// Mixup, CutMix, Cutout and the random-compose family.
pub fn default_op_pool() -> Vec<AugOp> {
    vec![
        AugOp::Mixup { alpha: 1.0 },
        AugOp::CutMix { alpha: 1.0 },
        AugOp::Cutout { hole: 4 },
        AugOp::RandTransform(TransformMagnitudes::default()),
    ]
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if self.intervals == 0 {
            return Err(invalid("ratio pool needs at least one interval"));
        }
        for (name, lr) in [
            ("parent", self.parent_lr),
            ("child", self.child_lr),
            ("target", self.target_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(invalid(format!(
                    "{name} learning rate must be positive, got {lr}"
                )));
            }
        }
        if self.policy_weight_decay < 0.0 || self.target_weight_decay < 0.0 {
            return Err(invalid("weight decay must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.loss_ema_decay) {
            return Err(invalid("loss average decay must be in [0, 1)"));
        }
        if self.policy_update_every == 0 {
            return Err(invalid("policy update cadence must be at least 1"));
        }
        if self.strategy == Strategy::SelectAugmentPlus && self.op_pool.is_empty() {
            return Err(invalid("operation pool is empty"));
        }
        if self.target_hidden.is_empty() {
            return Err(invalid(
                "target needs at least one hidden layer for features",
            ));
        }
        self.strategy.validate()
    }

    pub fn parent_opt(&self) -> OptimState {
        OptimState::adam(self.parent_lr, self.policy_weight_decay)
    }

    pub fn child_opt(&self) -> OptimState {
        OptimState::adam(self.child_lr, self.policy_weight_decay)
    }

    pub fn target_opt(&self) -> OptimState {
        OptimState::new(self.target_optim, self.target_lr, self.target_weight_decay)
    }
}
