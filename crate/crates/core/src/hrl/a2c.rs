//! Advantage actor-critic objectives and single-step updates.
//!
//! Each episode is one batch, so the return is the immediate reward and
//! the advantage is `reward − V(s)`. The advantage is a constant in every
//! actor gradient.

use crate::error::{invalid, Result};
use crate::policy::ActorCritic;
use crate::tensorcore::{apply_update, log_softmax, softmax, Gradients, Mlp, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2cLosses {
    pub actor: f64,
    pub critic: f64,
    pub advantage: f64,
}

/// Objective value and parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub loss: f64,
    pub grads: Gradients,
}

/// `(r − V(obs))²` for a single-row observation. Returns the objective and
/// the advantage `r − V(obs)`.
pub fn critic_objective(critic: &Mlp, obs: &Tensor, ret: f64) -> Result<(Objective, f64)> {
    if obs.rows() != 1 || critic.output_width() != 1 {
        return Err(invalid(
            "critic takes one observation row and emits one value",
        ));
    }
    let trace = critic.trace(obs)?;
    let advantage = ret - trace.output().get(0, 0);
    let d_out = Tensor::matrix(1, 1, vec![-2.0 * advantage])?;
    let grads = critic.backward(&trace, &d_out)?;
    Ok((
        Objective {
            loss: advantage * advantage,
            grads,
        },
        advantage,
    ))
}

/// `−A · Σ log softmax(actor(obs)_row)[action]` over `(row, action)` pairs,
/// each row a separate categorical distribution.
pub fn categorical_objective(
    actor: &Mlp,
    obs: &Tensor,
    choices: &[(usize, usize)],
    advantage: f64,
) -> Result<Objective> {
    let trace = actor.trace(obs)?;
    let logits = trace.output();
    let mut d = Tensor::zeros(logits.shape().to_vec());
    let mut logprob = 0.0;
    for &(row, action) in choices {
        if row >= logits.rows() || action >= logits.cols() {
            return Err(invalid(format!("choice ({row}, {action}) out of range")));
        }
        let z = logits.row(row);
        logprob += log_softmax(z)[action];
        let p = softmax(z);
        for (j, (g, pj)) in d.row_mut(row).iter_mut().zip(&p).enumerate() {
            let onehot = if j == action { 1.0 } else { 0.0 };
            *g -= advantage * (onehot - pj);
        }
    }
    let grads = actor.backward(&trace, &d)?;
    Ok(Objective {
        loss: -advantage * logprob,
        grads,
    })
}

/// `−A · Σ_{i∈selected} log softmax(scores)_i`, the softmax taken across
/// the whole batch of one-column scores.
pub fn topk_objective(
    actor: &Mlp,
    features: &Tensor,
    selected: &[usize],
    advantage: f64,
) -> Result<Objective> {
    if actor.output_width() != 1 {
        return Err(invalid("top-k actor must emit one score per sample"));
    }
    let trace = actor.trace(features)?;
    let scores = trace.output().data();
    let b = scores.len();
    if selected.iter().any(|&i| i >= b) {
        return Err(invalid("selected index out of range"));
    }
    let logp = log_softmax(scores);
    let p = softmax(scores);
    let k = selected.len() as f64;
    let mut d = vec![0.0; b];
    for (dj, pj) in d.iter_mut().zip(&p) {
        *dj = advantage * k * pj;
    }
    let mut logprob = 0.0;
    for &i in selected {
        d[i] -= advantage;
        logprob += logp[i];
    }
    let grads = actor.backward(&trace, &Tensor::matrix(b, 1, d)?)?;
    Ok(Objective {
        loss: -advantage * logprob,
        grads,
    })
}

fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `−A · Σ_i [m_i log σ(s_i) + (1 − m_i) log(1 − σ(s_i))]` for independent
/// per-sample Bernoulli decisions.
pub fn bernoulli_objective(
    actor: &Mlp,
    features: &Tensor,
    mask: &[bool],
    advantage: f64,
) -> Result<Objective> {
    if actor.output_width() != 1 {
        return Err(invalid("bernoulli actor must emit one logit per sample"));
    }
    let trace = actor.trace(features)?;
    let logits = trace.output().data();
    if mask.len() != logits.len() {
        return Err(invalid("mask length differs from batch"));
    }
    let mut logprob = 0.0;
    let mut d = Vec::with_capacity(logits.len());
    for (&z, &m) in logits.iter().zip(mask) {
        let m = if m { 1.0 } else { 0.0 };
        logprob += if m > 0.0 {
            log_sigmoid(z)
        } else {
            log_sigmoid(-z)
        };
        d.push(-advantage * (m - sigmoid(z)));
    }
    let grads = actor.backward(&trace, &Tensor::matrix(logits.len(), 1, d)?)?;
    Ok(Objective {
        loss: -advantage * logprob,
        grads,
    })
}

/// Critic step, then actor step with the pre-update advantage.
pub(crate) fn a2c_step(
    nets: &mut ActorCritic,
    critic_obs: &Tensor,
    reward: f64,
    actor_objective: impl FnOnce(&Mlp, f64) -> Result<Objective>,
) -> Result<A2cLosses> {
    let (critic, advantage) = critic_objective(&nets.critic, critic_obs, reward)?;
    let actor = actor_objective(&nets.actor, advantage)?;
    apply_update(&mut nets.critic, &critic.grads, &mut nets.critic_opt)?;
    apply_update(&mut nets.actor, &actor.grads, &mut nets.actor_opt)?;
    Ok(A2cLosses {
        actor: actor.loss,
        critic: critic.loss,
        advantage,
    })
}
