//! Reward, actor-critic updates and the joint training loop.

mod a2c;
mod config;
mod heads;
mod reward;
mod strategy;
mod train;

pub use a2c::{
    bernoulli_objective, categorical_objective, critic_objective, sigmoid, topk_objective,
    A2cLosses, Objective,
};
pub use config::{default_op_pool, TrainConfig};
pub use heads::{
    a2c_update_child, a2c_update_parent, child_state, online_act, online_update, op_policy_act,
    op_policy_update, operation_policy_act_and_update, OnlineDecision, OpPolicyDecision,
};
pub use reward::{
    compute_reward, reward_from_batches, reward_with_plan, reward_with_plans, RewardOutcome,
    RewardRecord,
};
pub use strategy::{select_mask_for_strategy, Strategy};
pub use train::{
    evaluate, pretrain_policy, run_to_end, train_loop, EvalResult, StepLog, TrainOutcome, Trainer,
};
