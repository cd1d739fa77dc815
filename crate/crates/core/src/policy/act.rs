use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::ratio::RatioPool;
use super::state::{ChildState, ParentState};
use crate::augment::SelectionMask;
use crate::error::{invalid, Error, Result};
use crate::tensorcore::{argmax, log_softmax, softmax, Mlp, OptimState, Tensor};

/// Whether an actor samples from its distribution or takes the mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

impl fmt::Display for ActMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActMode::Sample => "sample",
            ActMode::Greedy => "greedy",
        })
    }
}

impl FromStr for ActMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(ActMode::Sample),
            "greedy" => Ok(ActMode::Greedy),
            _ => Err(invalid(format!("unknown action mode `{s}`"))),
        }
    }
}

/// An actor, its critic and their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_opt: OptimState,
    pub critic_opt: OptimState,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        actions: usize,
        opt: &OptimState,
        rng: &mut R,
    ) -> Self {
        Self::with_critic_input(input, input, hidden, actions, opt, rng)
    }

    pub fn with_critic_input<R: Rng + ?Sized>(
        input: usize,
        critic_input: usize,
        hidden: &[usize],
        actions: usize,
        opt: &OptimState,
        rng: &mut R,
    ) -> Self {
        let widths = |from: usize, out: usize| {
            let mut w = vec![from];
            w.extend_from_slice(hidden);
            w.push(out);
            w
        };
        Self {
            actor: Mlp::new(&widths(input, actions), rng),
            critic: Mlp::new(&widths(critic_input, 1), rng),
            actor_opt: opt.clone(),
            critic_opt: opt.clone(),
        }
    }

    /// Critic output for a single observation row.
    pub fn value(&self, observation: &Tensor) -> Result<f64> {
        Ok(self.critic.forward(observation)?.logits.get(0, 0))
    }
}

/// Every policy network used by the selection strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNets {
    /// Batch state to ratio index.
    pub parent: ActorCritic,
    /// Per-sample features to a selection score.
    pub child: ActorCritic,
    /// Per-sample features to a distribution over augmentation operations.
    pub op: ActorCritic,
    /// Per-sample features to an independent Bernoulli selection logit.
    pub online: ActorCritic,
}

/// Optimizer and width settings for [`PolicyNets::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyShape {
    pub num_classes: usize,
    pub feature_width: usize,
    pub ratio_actions: usize,
    pub op_actions: usize,
    pub hidden: Vec<usize>,
    pub parent_opt: OptimState,
    pub child_opt: OptimState,
}

impl PolicyNets {
    pub fn new<R: Rng + ?Sized>(shape: &PolicyShape, rng: &mut R) -> Self {
        let h = &shape.hidden;
        let d = shape.feature_width;
        Self {
            parent: ActorCritic::new(
                ParentState::dim(shape.num_classes),
                h,
                shape.ratio_actions,
                &shape.parent_opt,
                rng,
            ),
            child: ActorCritic::with_critic_input(d, d + 1, h, 1, &shape.child_opt, rng),
            op: ActorCritic::with_critic_input(
                d,
                d + 1,
                h,
                shape.op_actions.max(1),
                &shape.child_opt,
                rng,
            ),
            online: ActorCritic::new(d, h, 1, &shape.child_opt, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParentDecision {
    pub index: usize,
    pub ratio: f64,
    pub logprob: f64,
    pub value: f64,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChildDecision {
    pub scores: Vec<f64>,
    /// Full-batch softmax of `scores`.
    pub probs: Vec<f64>,
    pub mask: SelectionMask,
    /// Selected indices in the order they were chosen.
    pub order: Vec<usize>,
    /// `Σ_{i selected} log softmax(scores)_i`.
    pub logprob: f64,
    pub value: f64,
}

/// Joint outcome of one hierarchical selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDecision {
    pub parent_state: ParentState,
    pub child_state: ChildState,
    pub parent: ParentDecision,
    pub child: ChildDecision,
}

impl SelectionDecision {
    pub fn k(&self) -> usize {
        self.child.mask.k()
    }
}

/// Draws an index from a categorical distribution by inverse CDF.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub fn parent_act<R: Rng + ?Sized>(
    state: &ParentState,
    pool: &RatioPool,
    nets: &ActorCritic,
    mode: ActMode,
    rng: &mut R,
) -> Result<ParentDecision> {
    if nets.actor.output_width() != pool.len() {
        return Err(invalid(format!(
            "parent actor has {} outputs for a pool of {}",
            nets.actor.output_width(),
            pool.len()
        )));
    }
    let obs = state.to_tensor();
    let logits = nets.actor.forward(&obs)?.logits;
    let logits = logits.row(0);
    let probs = softmax(logits);
    let index = match mode {
        ActMode::Greedy => argmax(&probs),
        ActMode::Sample => sample_categorical(&probs, rng),
    };
    Ok(ParentDecision {
        index,
        ratio: pool.ratio(index),
        logprob: log_softmax(logits)[index],
        value: nets.value(&obs)?,
        probs,
    })
}

/// Indices of the `k` largest scores, ties broken toward the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// `k` indices drawn without replacement, each draw proportional to the
/// remaining probability mass.
pub fn sample_without_replacement<R: Rng + ?Sized>(
    probs: &[f64],
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut weights = probs.to_vec();
    let mut order = Vec::with_capacity(k);
    for _ in 0..k.min(probs.len()) {
        let i = if weights.iter().all(|&w| w <= 0.0) {
            // Remaining mass underflowed: fall back to the first free slot.
            (0..weights.len())
                .find(|i| !order.contains(i))
                .expect("free slot")
        } else {
            sample_categorical(&weights, rng)
        };
        weights[i] = 0.0;
        order.push(i);
    }
    order
}

/// Mean-pooled features.
pub fn pooled_features(state: &ChildState) -> Tensor {
    state.features.mean_rows()
}

/// Mean-pooled features followed by the selected fraction `k / b`. The
/// child acts after the parent, so the parent's choice is part of the
/// state its critic values.
pub fn child_critic_input(state: &ChildState, k: usize) -> Tensor {
    let b = state.features.rows().max(1);
    pooled_features(state).with_appended_columns(&[k as f64 / b as f64])
}

pub fn child_act<R: Rng + ?Sized>(
    state: &ChildState,
    k: usize,
    nets: &ActorCritic,
    mode: ActMode,
    rng: &mut R,
) -> Result<ChildDecision> {
    let b = state.features.rows();
    if k > b {
        return Err(invalid(format!("cannot select {k} of {b} samples")));
    }
    if nets.actor.output_width() != 1 {
        return Err(invalid("child actor must emit one score per sample"));
    }
    let scores = nets.actor.forward(&state.features)?.logits.into_data();
    let probs = softmax(&scores);
    let log_probs = log_softmax(&scores);
    let order = match mode {
        ActMode::Greedy => top_k(&scores, k),
        ActMode::Sample => sample_without_replacement(&probs, k, rng),
    };
    let logprob = order.iter().map(|&i| log_probs[i]).sum();
    Ok(ChildDecision {
        mask: SelectionMask::from_indices(b, &order),
        value: nets.value(&child_critic_input(state, k))?,
        scores,
        probs,
        order,
        logprob,
    })
}
