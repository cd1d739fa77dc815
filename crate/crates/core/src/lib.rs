//! Hierarchical reinforcement-learning sample selection for data
//! augmentation.
//!
//! A batch-level *parent* policy picks an augmentation ratio from a discrete
//! pool; an instance-level *child* policy scores every sample and the top-K
//! scored samples are augmented. Both are trained with advantage
//! actor-critic against a loss-difference reward while the target
//! classifier trains on the selectively augmented batch.

pub mod augment;
pub mod data;
pub mod error;
pub mod hrl;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod tensorcore;

pub use error::{Error, Result};
