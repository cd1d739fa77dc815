use crate::augment::{apply_plan, AugPlan, LabeledBatch, SampleDraw, SelectionMask};
use crate::data::{batches, Dataset};
use crate::error::{invalid, Result};
use crate::policy::{
    child_act, encode_parent_state, label_confidence, parent_act, probabilities, ActMode,
    ChildState, ParentState, PolicyNets, PolicyShape, RatioPool,
};
use crate::rng::{self, RunRngs};
use crate::tensorcore::{
    apply_update, argmax, loss, loss_and_grad, softmax_cross_entropy, Mlp, OptimState,
};

use super::a2c::A2cLosses;
use super::config::TrainConfig;
use super::heads::{
    a2c_update_child, a2c_update_parent, online_act, online_update, op_policy_act, op_policy_update,
};
use super::reward::{reward_with_plans, RewardRecord};
use super::strategy::{select_mask_for_strategy, Strategy};

/// One training iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub epoch: u64,
    pub iteration: u64,
    pub strategy: Strategy,
    /// Pool ratio for hierarchical strategies, realized `K / b` otherwise.
    pub ratio: f64,
    pub ratio_index: Option<usize>,
    pub k: usize,
    pub reward: Option<RewardRecord>,
    /// Target loss on the trained batch after its optimizer step.
    pub target_loss: f64,
    pub ids: Vec<u64>,
    pub classes: Vec<usize>,
    /// Child scores (or Bernoulli probabilities) for learned strategies.
    pub scores: Option<Vec<f64>>,
    pub mask: SelectionMask,
    /// `(sample index, op index)` choices of the operation policy.
    pub ops: Option<Vec<(usize, usize)>>,
    pub parent_losses: Option<A2cLosses>,
    pub child_losses: Option<A2cLosses>,
}

impl StepLog {
    pub fn selected_ids(&self) -> Vec<u64> {
        self.mask
            .selected()
            .into_iter()
            .map(|i| self.ids[i])
            .collect()
    }

    pub fn per_class_selected(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for i in self.mask.selected() {
            counts[self.classes[i]] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub epoch: u64,
    pub accuracy: f64,
    pub mean_loss: f64,
}

/// Mean loss and accuracy of `target` on a dataset.
pub fn evaluate(target: &Mlp, data: &Dataset, epoch: u64) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(invalid("cannot evaluate on an empty dataset"));
    }
    let batch = data.full_batch();
    let out = target.forward(&batch.image_tensor())?;
    let (per, _) = softmax_cross_entropy(&out.logits, &batch.label_tensor())?;
    let correct = (0..data.len())
        .filter(|&i| argmax(out.logits.row(i)) == data.classes[i])
        .count();
    Ok(EvalResult {
        epoch,
        accuracy: correct as f64 / data.len() as f64,
        mean_loss: per.iter().sum::<f64>() / per.len() as f64,
    })
}

/// Complete mutable state of a run; restoring every field resumes it
/// exactly.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub pool: RatioPool,
    pub target: Mlp,
    pub target_opt: OptimState,
    pub policies: PolicyNets,
    pub rngs: RunRngs,
    pub loss_ema: Option<f64>,
    pub iteration: u64,
    /// Next epoch to run.
    pub epoch: u64,
    pub steps_per_epoch: u64,
    pub num_classes: usize,
}

fn target_widths(config: &TrainConfig, input: usize, classes: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(&config.target_hidden);
    w.push(classes);
    w
}

impl Trainer {
    /// Fresh target and policies initialized from the run seed.
    pub fn new(config: TrainConfig, train: &Dataset) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(invalid("training set is empty"));
        }
        let mut init = rng::stream(config.seed, 0);
        let target = Mlp::new(
            &target_widths(&config, train.input_width(), train.num_classes),
            &mut init,
        );
        let shape = PolicyShape {
            num_classes: train.num_classes,
            feature_width: target.feature_width(),
            ratio_actions: config.intervals + 1,
            op_actions: config.op_pool.len(),
            hidden: config.policy_hidden.clone(),
            parent_opt: config.parent_opt(),
            child_opt: config.child_opt(),
        };
        let policies = PolicyNets::new(&shape, &mut init);
        Self::from_parts(config, train, target, policies)
    }

    pub fn from_parts(
        config: TrainConfig,
        train: &Dataset,
        target: Mlp,
        policies: PolicyNets,
    ) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(invalid("training set is empty"));
        }
        if config.batch_size > train.len() {
            return Err(invalid(format!(
                "batch size {} exceeds {} training samples",
                config.batch_size,
                train.len()
            )));
        }
        if target.input_width() != train.input_width() || target.output_width() != train.num_classes
        {
            return Err(invalid("target shape does not match the dataset"));
        }
        if policies.child.actor.input_width() != target.feature_width() {
            return Err(invalid(format!(
                "policies expect {}-wide features, target provides {}",
                policies.child.actor.input_width(),
                target.feature_width()
            )));
        }
        Ok(Self {
            pool: RatioPool::with_intervals(config.intervals)?,
            target_opt: config.target_opt(),
            rngs: RunRngs::new(config.seed),
            steps_per_epoch: (train.len() / config.batch_size) as u64,
            num_classes: train.num_classes,
            loss_ema: None,
            iteration: 0,
            epoch: 0,
            config,
            target,
            policies,
        })
    }

    pub fn total_iters(&self) -> u64 {
        self.steps_per_epoch * self.config.epochs as u64
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.epochs as u64
    }

    /// Selected-sample plan for the operation policy: the base plan, with
    /// each selected sample whose chosen op differs from the base op
    /// redrawn under its own op.
    fn override_plan(
        &mut self,
        batch: &LabeledBatch,
        base: &AugPlan,
        choices: &[(usize, usize)],
    ) -> Result<AugPlan> {
        let (h, w, _) = batch.image_shape().expect("non-empty batch");
        let mut plan = base.clone();
        for &(i, op) in choices {
            let op = self.config.op_pool[op];
            if op != self.config.da_op {
                plan.draws[i] = SampleDraw::draw(&op, batch.len(), h, w, &mut self.rngs.augment)?;
            }
        }
        Ok(plan)
    }

    /// Parent and child observations of `batch` under the current target.
    pub fn policy_states(&self, batch: &LabeledBatch) -> Result<(ParentState, ChildState)> {
        let fwd = self.target.forward(&batch.image_tensor())?;
        let probs = probabilities(&fwd.logits);
        let (p_true, margins) = label_confidence(&probs, &batch.hard_labels())?;
        let ema = match self.loss_ema {
            Some(v) => v,
            None => {
                let per = softmax_cross_entropy(&fwd.logits, &batch.label_tensor())?.0;
                per.iter().sum::<f64>() / batch.len() as f64
            }
        };
        let parent = encode_parent_state(
            batch,
            &p_true,
            &margins,
            self.iteration,
            self.total_iters(),
            ema,
        )?;
        Ok((
            parent,
            ChildState {
                features: fwd.features,
            },
        ))
    }

    pub fn train_step(&mut self, batch: &LabeledBatch) -> Result<StepLog> {
        let b = batch.len();
        let strategy = self.config.strategy;
        let plan = AugPlan::draw(&self.config.da_op, batch, &mut self.rngs.augment)?;
        let update = self
            .iteration
            .is_multiple_of(self.config.policy_update_every);

        let mut log = StepLog {
            epoch: self.epoch,
            iteration: self.iteration,
            strategy,
            ratio: 0.0,
            ratio_index: None,
            k: 0,
            reward: None,
            target_loss: 0.0,
            ids: batch.ids.clone(),
            classes: batch.hard_labels(),
            scores: None,
            mask: SelectionMask::none(b),
            ops: None,
            parent_losses: None,
            child_losses: None,
        };

        let trained = if strategy.is_learned() {
            let (parent_state, child_state) = self.policy_states(batch)?;
            if strategy.is_hierarchical() {
                let parent = parent_act(
                    &parent_state,
                    &self.pool,
                    &self.policies.parent,
                    self.config.parent_mode,
                    &mut self.rngs.policy,
                )?;
                let k = self.pool.k_for(parent.index, b);
                let child = child_act(
                    &child_state,
                    k,
                    &self.policies.child,
                    self.config.child_mode,
                    &mut self.rngs.policy,
                )?;
                let (selected_plan, op_decision) = if strategy == Strategy::SelectAugmentPlus {
                    let d = op_policy_act(
                        &child_state,
                        &child.mask,
                        &self.policies.op,
                        ActMode::Sample,
                        &mut self.rngs.policy,
                    )?;
                    (self.override_plan(batch, &plan, &d.choices)?, Some(d))
                } else {
                    (plan.clone(), None)
                };
                let outcome =
                    reward_with_plans(&self.target, batch, &child.mask, &selected_plan, &plan)?;
                let r = outcome.record.reward;
                if update {
                    log.parent_losses = Some(a2c_update_parent(
                        &parent,
                        &parent_state,
                        r,
                        &mut self.policies.parent,
                    )?);
                    let rc = if self.config.selection_baseline {
                        r - outcome.record.random_selection_reward(k, b)
                    } else {
                        r
                    };
                    log.child_losses = Some(a2c_update_child(
                        &child,
                        &child_state,
                        rc,
                        &mut self.policies.child,
                    )?);
                    if let Some(d) = &op_decision {
                        op_policy_update(d, &child_state, rc, &mut self.policies.op)?;
                    }
                }
                log.ratio = parent.ratio;
                log.ratio_index = Some(parent.index);
                log.k = k;
                log.scores = Some(child.scores);
                log.mask = child.mask;
                log.ops = op_decision.map(|d| d.choices);
                log.reward = Some(outcome.record);
                outcome.selected
            } else {
                let d = online_act(
                    &child_state,
                    &self.policies.online,
                    ActMode::Sample,
                    &mut self.rngs.policy,
                )?;
                let outcome = reward_with_plans(&self.target, batch, &d.mask, &plan, &plan)?;
                if update {
                    log.child_losses = Some(online_update(
                        &d,
                        &child_state,
                        outcome.record.reward,
                        &mut self.policies.online,
                    )?);
                }
                log.k = d.mask.k();
                log.ratio = log.k as f64 / b as f64;
                log.scores = Some(d.probs);
                log.mask = d.mask;
                log.reward = Some(outcome.record);
                outcome.selected
            }
        } else {
            let mask = select_mask_for_strategy(
                strategy,
                b,
                self.iteration,
                self.total_iters(),
                &mut self.rngs.selection,
            )?;
            let out = apply_plan(batch, &mask, &plan)?;
            log.k = mask.k();
            log.ratio = log.k as f64 / b as f64;
            log.mask = mask;
            out
        };

        let x = trained.image_tensor();
        let y = trained.label_tensor();
        let lg = loss_and_grad(&self.target, &x, &y)?;
        apply_update(&mut self.target, &lg.grads, &mut self.target_opt)?;
        log.target_loss = loss(&self.target, &x, &y)?.0;
        let decay = self.config.loss_ema_decay;
        self.loss_ema = Some(match self.loss_ema {
            Some(prev) => decay * prev + (1.0 - decay) * lg.mean_loss,
            None => lg.mean_loss,
        });
        self.iteration += 1;
        Ok(log)
    }

    /// Trains one epoch over seeded batches and advances the epoch counter.
    pub fn run_epoch(&mut self, train: &Dataset) -> Result<Vec<StepLog>> {
        let epoch_batches = batches(train, self.config.batch_size, self.config.seed, self.epoch)?;
        let logs = epoch_batches
            .iter()
            .map(|b| self.train_step(b))
            .collect::<Result<Vec<_>>>()?;
        self.epoch += 1;
        Ok(logs)
    }

    pub fn evaluate(&self, test: &Dataset) -> Result<EvalResult> {
        evaluate(&self.target, test, self.epoch.saturating_sub(1))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub target: Mlp,
    pub policies: PolicyNets,
    pub history: Vec<StepLog>,
    pub evals: Vec<EvalResult>,
}

/// Runs the remaining epochs of `trainer`, evaluating after each.
pub fn run_to_end(
    trainer: &mut Trainer,
    train: &Dataset,
    test: &Dataset,
) -> Result<(Vec<StepLog>, Vec<EvalResult>)> {
    let mut history = Vec::new();
    let mut evals = Vec::new();
    while !trainer.is_finished() {
        history.extend(trainer.run_epoch(train)?);
        evals.push(trainer.evaluate(test)?);
    }
    Ok((history, evals))
}

pub fn train_loop(config: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), train)?;
    let (history, evals) = run_to_end(&mut trainer, train, test)?;
    Ok(TrainOutcome {
        target: trainer.target,
        policies: trainer.policies,
        history,
        evals,
    })
}

/// Trains `policies` jointly with a proxy target for
/// `config.pretrain_epochs` epochs and returns them; the proxy is dropped.
pub fn pretrain_policy(
    proxy: Mlp,
    train: &Dataset,
    config: &TrainConfig,
    policies: PolicyNets,
) -> Result<PolicyNets> {
    if config.pretrain_epochs == 0 {
        return Ok(policies);
    }
    let cfg = TrainConfig {
        epochs: config.pretrain_epochs,
        ..config.clone()
    };
    if !cfg.strategy.is_learned() {
        return Err(invalid(format!(
            "strategy {} has no policy to pre-train",
            cfg.strategy
        )));
    }
    let mut trainer = Trainer::from_parts(cfg, train, proxy, policies)?;
    while !trainer.is_finished() {
        trainer.run_epoch(train)?;
    }
    Ok(trainer.policies)
}
