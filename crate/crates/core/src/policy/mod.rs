//! Two-level selection policy: a parent picks how many samples to augment,
//! a child picks which ones.

mod act;
mod ratio;
mod state;

pub use act::{
    child_act, child_critic_input, parent_act, pooled_features, sample_categorical,
    sample_without_replacement, top_k, ActMode, ActorCritic, ChildDecision, ParentDecision,
    PolicyNets, PolicyShape, SelectionDecision,
};
pub use ratio::{action_space_size, binomial, ActionSpace, RatioPool};
pub use state::{encode_parent_state, label_confidence, probabilities, ChildState, ParentState};
