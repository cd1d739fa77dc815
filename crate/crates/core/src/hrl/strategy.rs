use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::augment::SelectionMask;
use crate::error::{invalid, Error, Result};

/// How each batch's augmentation mask is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Parent ratio, then child top-K.
    SelectAugment,
    /// As `SelectAugment`, with a per-sample operation policy on top.
    SelectAugmentPlus,
    All,
    /// Per-sample Bernoulli with a probability drawn uniformly each step.
    Random,
    /// Per-sample Bernoulli with a constant probability.
    Fixed(f64),
    /// Per-sample Bernoulli with probability `step / total_steps`.
    Linearly,
    /// Independent per-sample Bernoulli policy trained with the same reward.
    OnlineRl,
    None,
}

impl Strategy {
    /// Strategies driven by learned policies and scored by the reward.
    pub fn is_learned(self) -> bool {
        matches!(
            self,
            Strategy::SelectAugment | Strategy::SelectAugmentPlus | Strategy::OnlineRl
        )
    }

    /// Strategies that use the hierarchical parent/child pipeline.
    pub fn is_hierarchical(self) -> bool {
        matches!(self, Strategy::SelectAugment | Strategy::SelectAugmentPlus)
    }

    pub fn validate(self) -> Result<()> {
        if let Strategy::Fixed(p) = self {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("fixed probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::SelectAugment => f.write_str("selectaugment"),
            Strategy::SelectAugmentPlus => f.write_str("selectaugment_plus"),
            Strategy::All => f.write_str("all"),
            Strategy::Random => f.write_str("random"),
            Strategy::Fixed(p) => write!(f, "fixed({p})"),
            Strategy::Linearly => f.write_str("linearly"),
            Strategy::OnlineRl => f.write_str("onlinerl"),
            Strategy::None => f.write_str("none"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Accepts the display names; `fixed` takes its probability as
    /// `fixed(p)` or `fixed:p`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let fixed_arg = s
            .strip_prefix("fixed(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("fixed:"));
        if let Some(arg) = fixed_arg {
            let p: f64 = arg
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad fixed probability in {s:?}")))?;
            let st = Strategy::Fixed(p);
            st.validate()?;
            return Ok(st);
        }
        Ok(match s {
            "selectaugment" => Strategy::SelectAugment,
            "selectaugment_plus" => Strategy::SelectAugmentPlus,
            "all" => Strategy::All,
            "random" => Strategy::Random,
            "linearly" => Strategy::Linearly,
            "onlinerl" => Strategy::OnlineRl,
            "none" => Strategy::None,
            _ => return Err(invalid(format!("unknown strategy {s:?}"))),
        })
    }
}

fn bernoulli<R: Rng + ?Sized>(b: usize, p: f64, rng: &mut R) -> SelectionMask {
    SelectionMask::new((0..b).map(|_| rng.random::<f64>() < p).collect())
}

/// Mask for a strategy that needs no policy networks. `step` counts from
/// zero. Learned strategies are rejected: they act through the trainer.
pub fn select_mask_for_strategy<R: Rng + ?Sized>(
    strategy: Strategy,
    b: usize,
    step: u64,
    total_steps: u64,
    rng: &mut R,
) -> Result<SelectionMask> {
    strategy.validate()?;
    Ok(match strategy {
        Strategy::All => SelectionMask::all(b),
        Strategy::None => SelectionMask::none(b),
        Strategy::Fixed(p) => bernoulli(b, p, rng),
        Strategy::Random => {
            let p = rng.random::<f64>();
            bernoulli(b, p, rng)
        }
        Strategy::Linearly => {
            let p = if total_steps == 0 {
                0.0
            } else {
                (step as f64 / total_steps as f64).min(1.0)
            };
            bernoulli(b, p, rng)
        }
        learned => {
            return Err(invalid(format!(
                "strategy {learned} selects through its policy networks"
            )))
        }
    })
}
