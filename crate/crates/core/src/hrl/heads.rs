//! Policy updates for the parent and child, plus the operation policy and
//! the independent-Bernoulli baseline head.

use rand::Rng;

use super::a2c::{
    a2c_step, bernoulli_objective, categorical_objective, sigmoid, topk_objective, A2cLosses,
};
use crate::augment::SelectionMask;
use crate::error::{invalid, Result};
use crate::policy::{
    child_critic_input, pooled_features, sample_categorical, ActMode, ActorCritic, ChildDecision,
    ChildState, ParentDecision, ParentState,
};
use crate::tensorcore::{argmax, log_softmax, softmax, Tensor};

pub fn a2c_update_parent(
    decision: &ParentDecision,
    state: &ParentState,
    reward: f64,
    nets: &mut ActorCritic,
) -> Result<A2cLosses> {
    let obs = state.to_tensor();
    let choice = [(0, decision.index)];
    a2c_step(nets, &obs, reward, |actor, a| {
        categorical_objective(actor, &obs, &choice, a)
    })
}

pub fn a2c_update_child(
    decision: &ChildDecision,
    state: &ChildState,
    reward: f64,
    nets: &mut ActorCritic,
) -> Result<A2cLosses> {
    let critic_obs = child_critic_input(state, decision.order.len());
    a2c_step(nets, &critic_obs, reward, |actor, a| {
        topk_objective(actor, &state.features, &decision.order, a)
    })
}

/// Per-sample operation choices for the selected samples.
#[derive(Debug, Clone, PartialEq)]
pub struct OpPolicyDecision {
    /// `(sample index, op index)` for each selected sample, in index order.
    pub choices: Vec<(usize, usize)>,
    pub logprobs: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
    pub value: f64,
}

impl OpPolicyDecision {
    pub fn op_for(&self, sample: usize) -> Option<usize> {
        self.choices.iter().find(|c| c.0 == sample).map(|c| c.1)
    }
}

pub fn op_policy_act<R: Rng + ?Sized>(
    state: &ChildState,
    mask: &SelectionMask,
    nets: &ActorCritic,
    mode: ActMode,
    rng: &mut R,
) -> Result<OpPolicyDecision> {
    if nets.actor.output_width() == 0 {
        return Err(invalid("operation pool is empty"));
    }
    if mask.len() != state.features.rows() {
        return Err(invalid("mask length differs from batch"));
    }
    let logits = nets.actor.forward(&state.features)?.logits;
    let mut choices = Vec::with_capacity(mask.k());
    let mut logprobs = Vec::with_capacity(mask.k());
    let mut probs = Vec::with_capacity(mask.k());
    for i in mask.selected() {
        let z = logits.row(i);
        let p = softmax(z);
        let op = match mode {
            ActMode::Greedy => argmax(&p),
            ActMode::Sample => sample_categorical(&p, rng),
        };
        choices.push((i, op));
        logprobs.push(log_softmax(z)[op]);
        probs.push(p);
    }
    Ok(OpPolicyDecision {
        choices,
        logprobs,
        probs,
        value: nets.value(&child_critic_input(state, mask.k()))?,
    })
}

pub fn op_policy_update(
    decision: &OpPolicyDecision,
    state: &ChildState,
    reward: f64,
    nets: &mut ActorCritic,
) -> Result<A2cLosses> {
    let critic_obs = child_critic_input(state, decision.choices.len());
    a2c_step(nets, &critic_obs, reward, |actor, a| {
        categorical_objective(actor, &state.features, &decision.choices, a)
    })
}

/// Acts, scores the chosen ops with `reward_of`, and updates the op policy.
pub fn operation_policy_act_and_update<R: Rng + ?Sized>(
    state: &ChildState,
    mask: &SelectionMask,
    nets: &mut ActorCritic,
    mode: ActMode,
    rng: &mut R,
    reward_of: impl FnOnce(&OpPolicyDecision) -> Result<f64>,
) -> Result<(OpPolicyDecision, A2cLosses)> {
    let decision = op_policy_act(state, mask, nets, mode, rng)?;
    let reward = reward_of(&decision)?;
    let losses = op_policy_update(&decision, state, reward, nets)?;
    Ok((decision, losses))
}

/// Independent per-sample selections from a sigmoid head.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineDecision {
    pub probs: Vec<f64>,
    pub mask: SelectionMask,
    pub value: f64,
}

pub fn online_act<R: Rng + ?Sized>(
    state: &ChildState,
    nets: &ActorCritic,
    mode: ActMode,
    rng: &mut R,
) -> Result<OnlineDecision> {
    if nets.actor.output_width() != 1 {
        return Err(invalid("bernoulli head must emit one logit per sample"));
    }
    let logits = nets.actor.forward(&state.features)?.logits.into_data();
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let bits = probs
        .iter()
        .map(|&p| match mode {
            ActMode::Greedy => p > 0.5,
            ActMode::Sample => rng.random::<f64>() < p,
        })
        .collect();
    Ok(OnlineDecision {
        probs,
        mask: SelectionMask::new(bits),
        value: nets.value(&pooled_features(state))?,
    })
}

pub fn online_update(
    decision: &OnlineDecision,
    state: &ChildState,
    reward: f64,
    nets: &mut ActorCritic,
) -> Result<A2cLosses> {
    let critic_obs = pooled_features(state);
    a2c_step(nets, &critic_obs, reward, |actor, a| {
        bernoulli_objective(actor, &state.features, decision.mask.bits(), a)
    })
}

/// Features as a tensor row block, for tests and tools that build states
/// by hand.
pub fn child_state(features: Tensor) -> ChildState {
    ChildState { features }
}
