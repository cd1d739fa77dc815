//! Run configuration: a flat JSON document, validated before any compute.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use selectaugment::augment::{AugOp, AugTag, TransformMagnitudes};
use selectaugment::data::{gen_fragile_bars, load_idx, Dataset};
use selectaugment::hrl::{Strategy, TrainConfig};
use selectaugment::oracle::MAX_PROBE_BATCH;
use selectaugment::policy::ActMode;
use selectaugment::tensorcore::OptimKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub intervals: usize,
    pub strategy: String,
    pub da_op: String,
    pub op_pool: Vec<String>,
    pub mixup_alpha: f64,
    pub cutmix_alpha: f64,
    pub cutout_hole: usize,
    pub shift: usize,
    pub erase: usize,
    pub parent_lr: f64,
    pub child_lr: f64,
    pub policy_weight_decay: f64,
    /// `sgd` or `adam`.
    pub target_optim: String,
    pub target_lr: f64,
    pub target_weight_decay: f64,
    pub target_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub gamma: f64,
    pub loss_ema_decay: f64,
    pub policy_update_every: u64,
    pub parent_mode: String,
    pub child_mode: String,
    pub selection_baseline: bool,
    pub pretrain_epochs: usize,
    /// Hidden widths of the pre-training proxy target. The last width must
    /// match the target's feature width.
    pub proxy_hidden: Vec<usize>,
    /// Policies file written by `pretrain`, used to initialize `train`.
    pub policy_init: Option<PathBuf>,
    pub seed: u64,

    /// `fragile_bars` or `idx`.
    pub dataset: String,
    pub train_size: usize,
    pub test_size: usize,
    pub image_size: usize,
    pub noise: f64,
    /// Seed of the synthetic data; defaults to `seed`. The training set uses
    /// `2 * s`, the test set `2 * s + 1`.
    pub data_seed: Option<u64>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,

    pub out: PathBuf,
    pub plots: bool,
    /// Fill `wall_ms` with elapsed time. Off by default so metrics files are
    /// byte-reproducible.
    pub record_wall_time: bool,
    /// Write a checkpoint every this many epochs; 0 writes only the final one.
    pub checkpoint_every: usize,

    pub sweep_intervals: Vec<usize>,
    pub shift_bins: usize,

    pub oracle_batch: usize,
    pub oracle_k: usize,
    pub oracle_updates: usize,
    pub oracle_seeds: usize,
    pub oracle_min_gap: f64,
    /// Candidate batches scanned for one whose best-vs-second gap clears
    /// `oracle_min_gap`.
    pub oracle_candidates: usize,
    pub oracle_target_epochs: usize,
    pub oracle_match_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let m = TransformMagnitudes::default();
        Self {
            batch_size: t.batch_size,
            epochs: t.epochs,
            intervals: t.intervals,
            strategy: t.strategy.to_string(),
            da_op: "randtransform".into(),
            op_pool: AugTag::ALL.iter().map(|t| t.name().to_string()).collect(),
            mixup_alpha: 1.0,
            cutmix_alpha: 1.0,
            cutout_hole: 4,
            shift: m.shift,
            erase: m.erase,
            parent_lr: t.parent_lr,
            child_lr: t.child_lr,
            policy_weight_decay: t.policy_weight_decay,
            target_optim: "sgd".into(),
            target_lr: t.target_lr,
            target_weight_decay: t.target_weight_decay,
            target_hidden: t.target_hidden.clone(),
            policy_hidden: t.policy_hidden.clone(),
            gamma: t.gamma,
            loss_ema_decay: t.loss_ema_decay,
            policy_update_every: t.policy_update_every,
            parent_mode: t.parent_mode.to_string(),
            child_mode: t.child_mode.to_string(),
            selection_baseline: t.selection_baseline,
            pretrain_epochs: 10,
            proxy_hidden: vec![16, *t.target_hidden.last().expect("default hidden")],
            policy_init: None,
            seed: t.seed,
            dataset: "fragile_bars".into(),
            train_size: 2048,
            test_size: 1024,
            image_size: 8,
            noise: 0.05,
            data_seed: None,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            out: PathBuf::from("out"),
            plots: true,
            record_wall_time: false,
            checkpoint_every: 0,
            sweep_intervals: vec![1, 5, 10, 20],
            shift_bins: 20,
            oracle_batch: 8,
            oracle_k: 4,
            oracle_updates: 2000,
            oracle_seeds: 20,
            oracle_min_gap: 0.1,
            oracle_candidates: 200,
            oracle_target_epochs: 2,
            oracle_match_threshold: 0.8,
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strategy: Option<String>,
    pub da_op: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("parsing config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(s) = &o.strategy {
            self.strategy = s.clone();
        }
        if let Some(op) = &o.da_op {
            self.da_op = op.clone();
        }
    }

    pub fn op(&self, name: &str) -> Result<AugOp> {
        let tag: AugTag = name.parse()?;
        Ok(match tag {
            AugTag::Mixup => AugOp::Mixup {
                alpha: self.mixup_alpha,
            },
            AugTag::CutMix => AugOp::CutMix {
                alpha: self.cutmix_alpha,
            },
            AugTag::Cutout => AugOp::Cutout {
                hole: self.cutout_hole,
            },
            AugTag::RandTransform => AugOp::RandTransform(TransformMagnitudes {
                shift: self.shift,
                erase: self.erase,
            }),
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let target_optim = match self.target_optim.as_str() {
            "sgd" => OptimKind::Sgd,
            "adam" => OptimKind::Adam,
            other => bail!("unknown optimizer {other:?}"),
        };
        let cfg = TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            intervals: self.intervals,
            da_op: self.op(&self.da_op)?,
            op_pool: self
                .op_pool
                .iter()
                .map(|n| self.op(n))
                .collect::<Result<_>>()?,
            strategy: self.strategy.parse::<Strategy>()?,
            parent_lr: self.parent_lr,
            child_lr: self.child_lr,
            policy_weight_decay: self.policy_weight_decay,
            target_optim,
            target_lr: self.target_lr,
            target_weight_decay: self.target_weight_decay,
            target_hidden: self.target_hidden.clone(),
            policy_hidden: self.policy_hidden.clone(),
            gamma: self.gamma,
            loss_ema_decay: self.loss_ema_decay,
            policy_update_every: self.policy_update_every,
            parent_mode: self.parent_mode.parse::<ActMode>()?,
            child_mode: self.child_mode.parse::<ActMode>()?,
            selection_baseline: self.selection_baseline,
            pretrain_epochs: self.pretrain_epochs,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        let t = self.train_config()?;
        match self.dataset.as_str() {
            "fragile_bars" => {
                ensure!(self.image_size >= 4, "image size must be at least 4");
                ensure!((0.0..=1.0).contains(&self.noise), "noise must be in [0, 1]");
                ensure!(
                    self.train_size >= self.batch_size,
                    "train size {} is smaller than the batch size {}",
                    self.train_size,
                    self.batch_size
                );
                ensure!(self.test_size > 0, "test size must be positive");
                for op in std::iter::once(&t.da_op).chain(&t.op_pool) {
                    op.validate(self.image_size, self.image_size)?;
                }
            }
            "idx" => {
                for (name, p) in [
                    ("train_images", &self.train_images),
                    ("train_labels", &self.train_labels),
                    ("test_images", &self.test_images),
                    ("test_labels", &self.test_labels),
                ] {
                    ensure!(p.is_some(), "idx dataset needs {name}");
                }
            }
            other => bail!("unknown dataset {other:?}"),
        }
        ensure!(
            self.proxy_hidden.last() == self.target_hidden.last(),
            "proxy feature width must match the target's"
        );
        ensure!(
            self.sweep_intervals.iter().all(|&n| n >= 1),
            "sweep intervals must be at least 1"
        );
        ensure!(self.shift_bins >= 1, "histogram needs at least one bin");
        ensure!(
            self.oracle_batch <= MAX_PROBE_BATCH,
            "oracle batch {} exceeds the cap of {MAX_PROBE_BATCH}",
            self.oracle_batch
        );
        ensure!(
            self.oracle_k <= self.oracle_batch,
            "oracle k exceeds the oracle batch"
        );
        ensure!(self.oracle_seeds >= 1, "oracle needs at least one seed");
        Ok(())
    }

    /// Training and test sets.
    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        match self.dataset.as_str() {
            "fragile_bars" => {
                let s = self.data_seed.unwrap_or(self.seed);
                let train = gen_fragile_bars(
                    self.train_size,
                    self.image_size,
                    self.noise,
                    s.wrapping_mul(2),
                )?;
                let test = gen_fragile_bars(
                    self.test_size,
                    self.image_size,
                    self.noise,
                    s.wrapping_mul(2).wrapping_add(1),
                )?;
                Ok((train, test))
            }
            "idx" => {
                let path = |p: &Option<PathBuf>| p.clone().expect("validated");
                let train = load_idx(path(&self.train_images), path(&self.train_labels))?;
                let test = load_idx(path(&self.test_images), path(&self.test_labels))?;
                ensure!(
                    train.num_classes == test.num_classes,
                    "train and test sets disagree on the class count"
                );
                Ok((train, test))
            }
            other => bail!("unknown dataset {other:?}"),
        }
    }
}
