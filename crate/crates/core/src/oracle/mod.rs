//! Brute-force ground truth for tiny batches: every size-K selection, its
//! exact reward under one fixed augmentation draw, and a probe that checks
//! whether a freshly trained child policy finds the best one.

use std::io::Write;

use crate::augment::{AugOp, AugPlan, LabeledBatch, SelectionMask};
use crate::error::{invalid, Result};
use crate::hrl::{a2c_update_child, child_state, reward_with_plan, RewardRecord};
use crate::policy::{child_act, ActMode, ActorCritic};
use crate::rng;
use crate::tensorcore::{Mlp, OptimState};

/// Largest batch the enumeration accepts.
pub const MAX_ENUMERATION_BATCH: usize = 24;

/// Largest batch the convergence probe accepts.
pub const MAX_PROBE_BATCH: usize = 12;

/// All size-`k` selections of a batch of `b`, in lexicographic order of
/// their sorted index lists, so `{0, …, k−1}` comes first.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetEnumeration {
    pub b: usize,
    pub k: usize,
    pub masks: Vec<SelectionMask>,
}

pub fn enumerate_selections(b: usize, k: usize) -> Result<SubsetEnumeration> {
    if b > MAX_ENUMERATION_BATCH {
        return Err(invalid(format!(
            "enumeration is capped at b = {MAX_ENUMERATION_BATCH}, got {b}"
        )));
    }
    if k > b {
        return Err(invalid(format!("cannot select {k} of {b} samples")));
    }
    let mut masks = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        masks.push(SelectionMask::from_indices(b, &idx));
        // Advance the rightmost index that still has room.
        let Some(pos) = (0..k).rev().find(|&i| idx[i] < b - k + i) else {
            break;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(SubsetEnumeration { b, k, masks })
}

/// One scored selection.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub mask: SelectionMask,
    pub record: RewardRecord,
}

/// Exhaustive reward table for one `(target, batch, op, K, seed)` instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BestSubset {
    pub best: SelectionMask,
    pub best_reward: f64,
    /// Entries in enumeration order.
    pub table: Vec<TableEntry>,
}

impl BestSubset {
    /// Reward of `mask`, if it has the table's size.
    pub fn reward_of(&self, mask: &SelectionMask) -> Option<f64> {
        self.table
            .iter()
            .find(|e| &e.mask == mask)
            .map(|e| e.record.reward)
    }

    /// Best reward minus the runner-up's; infinite for a one-entry table.
    pub fn gap(&self) -> f64 {
        let mut rewards: Vec<f64> = self.table.iter().map(|e| e.record.reward).collect();
        rewards.sort_by(|a, b| b.total_cmp(a));
        match rewards.as_slice() {
            [first, second, ..] => first - second,
            _ => f64::INFINITY,
        }
    }

    /// Writes `mask,reward,loss_original,loss_selected,loss_full` rows, the
    /// mask as a bit string with sample 0 first.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "mask,reward,loss_original,loss_selected,loss_full")?;
        for e in &self.table {
            let r = &e.record;
            writeln!(
                out,
                "{},{},{},{},{}",
                e.mask.to_bit_string(),
                r.reward,
                r.loss_original,
                r.loss_selected,
                r.loss_full
            )?;
        }
        Ok(())
    }
}

/// Scores every size-`k` mask under the single augmentation plan drawn
/// from `rng::seeded(seed)`. This is the plan `compute_reward` draws with
/// the same seed, so table entries agree with it bitwise.
pub fn best_subset(
    target: &Mlp,
    batch: &LabeledBatch,
    op: &AugOp,
    k: usize,
    seed: u64,
) -> Result<BestSubset> {
    let masks = enumerate_selections(batch.len(), k)?.masks;
    let plan = AugPlan::draw(op, batch, &mut rng::seeded(seed))?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(masks.len().div_ceil(256))
        .max(1);
    let chunk = masks.len().div_ceil(workers);
    let scored: Vec<Result<Vec<TableEntry>>> = std::thread::scope(|s| {
        let handles: Vec<_> = masks
            .chunks(chunk)
            .map(|part| {
                let plan = &plan;
                s.spawn(move || {
                    part.iter()
                        .map(|m| {
                            Ok(TableEntry {
                                record: reward_with_plan(target, batch, m, plan)?.record,
                                mask: m.clone(),
                            })
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("oracle worker panicked"))
            .collect()
    });
    let mut table = Vec::with_capacity(masks.len());
    for part in scored {
        table.extend(part?);
    }
    // Strict comparison keeps the earliest maximum.
    let mut best = 0;
    for (i, e) in table.iter().enumerate() {
        if e.record.reward > table[best].record.reward {
            best = i;
        }
    }
    Ok(BestSubset {
        best: table[best].mask.clone(),
        best_reward: table[best].record.reward,
        table,
    })
}

/// Child network and training settings for [`policy_convergence_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub hidden: Vec<usize>,
    pub opt: OptimState,
    /// Selection mode while training; the final mask is always greedy.
    pub train_mode: ActMode,
    /// Seed of the augmentation draw shared with [`best_subset`].
    pub plan_seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            opt: OptimState::adam(1e-3, 5e-4),
            train_mode: ActMode::Sample,
            plan_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub oracle: BestSubset,
    /// Final greedy mask for each seed, in seed order.
    pub final_masks: Vec<SelectionMask>,
    pub match_fraction: f64,
}

/// Trains a fresh child per seed for `updates` steps on the frozen target's
/// features of `batch`, then compares its greedy mask with the oracle.
pub fn policy_convergence_probe(
    target: &Mlp,
    batch: &LabeledBatch,
    op: &AugOp,
    k: usize,
    updates: usize,
    seeds: &[u64],
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    if batch.len() > MAX_PROBE_BATCH {
        return Err(invalid(format!(
            "probe is capped at b = {MAX_PROBE_BATCH}, got {}",
            batch.len()
        )));
    }
    if seeds.is_empty() {
        return Err(invalid("probe needs at least one seed"));
    }
    let oracle = best_subset(target, batch, op, k, config.plan_seed)?;
    let plan = AugPlan::draw(op, batch, &mut rng::seeded(config.plan_seed))?;
    let state = child_state(target.forward(&batch.image_tensor())?.features);
    let width = state.features.cols();
    let mut final_masks = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut init = rng::stream(seed, 0);
        let mut nets = ActorCritic::with_critic_input(
            width,
            width + 1,
            &config.hidden,
            1,
            &config.opt,
            &mut init,
        );
        let mut act_rng = rng::stream(seed, 1);
        for _ in 0..updates {
            let decision = child_act(&state, k, &nets, config.train_mode, &mut act_rng)?;
            let reward = reward_with_plan(target, batch, &decision.mask, &plan)?
                .record
                .reward;
            a2c_update_child(&decision, &state, reward, &mut nets)?;
        }
        let last = child_act(&state, k, &nets, ActMode::Greedy, &mut act_rng)?;
        final_masks.push(last.mask);
    }
    let hits = final_masks.iter().filter(|m| **m == oracle.best).count();
    Ok(ProbeReport {
        match_fraction: hits as f64 / seeds.len() as f64,
        oracle,
        final_masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{SampleDraw, Transform};
    use crate::data::{gen_fragile_bars, Dataset};
    use crate::hrl::{compute_reward, Strategy, TrainConfig, Trainer};
    use crate::policy::binomial;
    use crate::tensorcore::Dense;
    use num_traits::ToPrimitive;
    use rand::seq::index::sample;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn trained_target(seed: u64) -> (Mlp, Dataset) {
        let data = gen_fragile_bars(512, 8, 0.05, seed).unwrap();
        let cfg = TrainConfig {
            strategy: Strategy::None,
            batch_size: 64,
            epochs: 3,
            seed,
            ..Default::default()
        };
        let mut t = Trainer::new(cfg, &data).unwrap();
        while !t.is_finished() {
            t.run_epoch(&data).unwrap();
        }
        (t.target, data)
    }

    fn random_batch(data: &Dataset, b: usize, seed: u64) -> LabeledBatch {
        let idx = sample(&mut rng::seeded(seed), data.len(), b).into_vec();
        data.batch(&idx)
    }

    #[test]
    fn enumeration_small_cases() {
        let e = enumerate_selections(4, 2).unwrap();
        let bits: Vec<String> = e.masks.iter().map(|m| m.to_bit_string()).collect();
        assert_eq!(bits, ["1100", "1010", "1001", "0110", "0101", "0011"]);
        assert_eq!(
            enumerate_selections(5, 0).unwrap().masks,
            [SelectionMask::none(5)]
        );
        assert_eq!(
            enumerate_selections(5, 5).unwrap().masks,
            [SelectionMask::all(5)]
        );
        assert!(enumerate_selections(25, 1).is_err());
        assert!(enumerate_selections(4, 5).is_err());
    }

    #[test]
    fn enumeration_counts_follow_pascal() {
        // Row-by-row Pascal triangle, independent of the big-integer code.
        let mut row = vec![1u64];
        for b in 0..=16usize {
            for (k, &expect) in row.iter().enumerate() {
                let e = enumerate_selections(b, k).unwrap();
                assert_eq!(e.masks.len() as u64, expect, "C({b},{k})");
                assert_eq!(binomial(b, k).to_u64().unwrap(), expect);
                assert!(e.masks.iter().all(|m| m.k() == k));
                let mut sorted = e.masks.clone();
                sorted.dedup();
                assert_eq!(sorted.len(), e.masks.len());
            }
            let mut next = vec![1u64; row.len() + 1];
            for i in 1..row.len() {
                next[i] = row[i - 1] + row[i];
            }
            row = next;
        }
    }

    #[test]
    fn empty_selection_scores_full_minus_original() {
        let (target, data) = trained_target(1);
        let batch = random_batch(&data, 6, 3);
        let op = AugOp::Cutout { hole: 3 };
        let o = best_subset(&target, &batch, &op, 0, 4).unwrap();
        assert_eq!(o.table.len(), 1);
        let r = o.table[0].record;
        assert_eq!(o.best, SelectionMask::none(6));
        assert_eq!(o.best_reward, r.loss_full - r.loss_original);
    }

    #[test]
    fn table_agrees_with_pipeline_and_argmax() {
        let (target, data) = trained_target(2);
        let ops = crate::hrl::default_op_pool();
        for inst in 0..50u64 {
            let b = 4 + (inst as usize % 5);
            let k = inst as usize % (b + 1);
            let op = ops[inst as usize % ops.len()];
            let batch = random_batch(&data, b, 100 + inst);
            let o = best_subset(&target, &batch, &op, k, inst).unwrap();
            for e in &o.table {
                assert!(o.best_reward >= e.record.reward);
            }
            let first_best = o
                .table
                .iter()
                .find(|e| e.record.reward == o.best_reward)
                .unwrap();
            assert_eq!(first_best.mask, o.best);
            for e in o.table.iter().step_by(3) {
                let r =
                    compute_reward(&target, &batch, &e.mask, &op, &mut rng::seeded(inst)).unwrap();
                assert_eq!(r, e.record);
            }
        }
    }

    #[test]
    fn table_mean_is_the_random_selection_reward() {
        let (target, data) = trained_target(3);
        let op = AugOp::RandTransform(Default::default());
        for k in 0..=8 {
            let batch = random_batch(&data, 8, 40 + k as u64);
            let o = best_subset(&target, &batch, &op, k, 7).unwrap();
            let mean = o.table.iter().map(|e| e.record.reward).sum::<f64>() / o.table.len() as f64;
            let expect = o.table[0].record.random_selection_reward(k, 8);
            assert!((mean - expect).abs() < 1e-12, "k={k}: {mean} vs {expect}");
        }
    }

    fn flips(draw: &SampleDraw) -> bool {
        match draw {
            SampleDraw::Compose(ts) => {
                ts.iter().filter(|t| **t == Transform::Rotate90).count() % 2 == 1
            }
            _ => false,
        }
    }

    #[test]
    fn best_mask_leaves_the_flipped_bar_alone() {
        let (target, data) = trained_target(4);
        let op = AugOp::RandTransform(Default::default());
        let vertical = (0..data.len()).find(|&i| data.classes[i] == 0).unwrap();
        let robust: Vec<usize> = (0..data.len()).filter(|&i| data.classes[i] >= 2).collect();
        let mut crafted = 0;
        let mut seed = 0u64;
        while crafted < 10 {
            seed += 1;
            let mut idx = vec![vertical];
            idx.extend(robust.iter().cycle().skip(seed as usize * 5).take(5));
            let batch = data.batch(&idx);
            let plan = AugPlan::draw(&op, &batch, &mut rng::seeded(seed)).unwrap();
            if !flips(&plan.draws[0]) || plan.draws[1..].iter().any(flips) {
                continue;
            }
            crafted += 1;
            let o = best_subset(&target, &batch, &op, 3, seed).unwrap();
            assert!(!o.best.is_selected(0), "seed {seed}: {:?}", o.best);
        }
    }

    #[test]
    fn dominated_samples_are_never_in_the_best_mask() {
        let (target, data) = trained_target(5);
        let op = AugOp::CutMix { alpha: 1.0 };
        for inst in 0..20u64 {
            let batch = random_batch(&data, 7, 500 + inst);
            let o = best_subset(&target, &batch, &op, 3, inst).unwrap();
            let bits = |m: &SelectionMask| m.bits().to_vec();
            for i in 0..7 {
                // i is dominated when swapping it for any unselected sample
                // lowers the selected-batch loss, in every subset holding i.
                let dominated = o.table.iter().filter(|e| e.mask.is_selected(i)).all(|e| {
                    (0..7).filter(|&j| !e.mask.is_selected(j)).all(|j| {
                        let mut swapped = bits(&e.mask);
                        swapped[i] = false;
                        swapped[j] = true;
                        e.record.reward < o.reward_of(&SelectionMask::new(swapped)).unwrap()
                    })
                });
                if dominated {
                    assert!(!o.best.is_selected(i));
                }
            }
        }
    }

    /// Random hidden stack with a zero output layer: per-sample features
    /// differ, but every loss is `ln C`, so every reward is zero.
    fn flat_loss_target(seed: u64) -> Mlp {
        let mut net = Mlp::new(&[64, 16, 4], &mut rng::seeded(seed));
        let last: &mut Dense = net.layers.last_mut().unwrap();
        last.weight = crate::tensorcore::Tensor::zeros(vec![16, 4]);
        net
    }

    #[test]
    fn constant_rewards_leave_masks_uniform() {
        let data = gen_fragile_bars(256, 8, 0.05, 6).unwrap();
        let op = AugOp::Mixup { alpha: 1.0 };
        let enumeration = enumerate_selections(6, 3).unwrap();
        let mut counts = vec![0usize; enumeration.masks.len()];
        let trials = 400u64;
        let config = ProbeConfig {
            hidden: vec![16],
            ..Default::default()
        };
        for t in 0..trials {
            let target = flat_loss_target(t);
            let batch = random_batch(&data, 6, t);
            let o = best_subset(&target, &batch, &op, 3, t).unwrap();
            assert!(o.table.iter().all(|e| e.record.reward.abs() < 1e-12));
            let r = policy_convergence_probe(&target, &batch, &op, 3, 30, &[t], &config).unwrap();
            let cell = enumeration
                .masks
                .iter()
                .position(|m| *m == r.final_masks[0])
                .unwrap();
            counts[cell] += 1;
        }
        let expect = trials as f64 / counts.len() as f64;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        let chi = ChiSquared::new((counts.len() - 1) as f64).unwrap();
        let p = 1.0 - chi.cdf(stat);
        assert!(p > 0.01, "chi2 {stat}, p {p}, counts {counts:?}");
    }

    #[test]
    fn untrained_match_rate_is_chance() {
        let data = gen_fragile_bars(256, 8, 0.05, 7).unwrap();
        let op = AugOp::RandTransform(Default::default());
        let trials = 400u64;
        let config = ProbeConfig {
            hidden: vec![16],
            ..Default::default()
        };
        let mut hits = 0.0;
        for t in 0..trials {
            let target = Mlp::new(&[64, 16, 4], &mut rng::seeded(1000 + t));
            let batch = random_batch(&data, 6, 2000 + t);
            let r = policy_convergence_probe(&target, &batch, &op, 3, 0, &[t], &config).unwrap();
            hits += r.match_fraction;
        }
        let rate = hits / trials as f64;
        // 1 / C(6, 3) = 0.05; three standard errors at 400 trials is 0.033.
        assert!((rate - 0.05).abs() < 0.033, "{rate}");
    }

    #[test]
    fn probe_rejects_large_batches() {
        let data = gen_fragile_bars(64, 8, 0.05, 8).unwrap();
        let target = Mlp::new(&[64, 8, 4], &mut rng::seeded(0));
        let batch = random_batch(&data, 13, 0);
        let op = AugOp::Cutout { hole: 2 };
        let err = policy_convergence_probe(&target, &batch, &op, 2, 1, &[0], &Default::default());
        assert!(err.is_err());
    }

    #[test]
    fn table_csv_has_one_row_per_mask() {
        let data = gen_fragile_bars(64, 8, 0.05, 9).unwrap();
        let target = Mlp::new(&[64, 8, 4], &mut rng::seeded(0));
        let batch = random_batch(&data, 5, 0);
        let o = best_subset(&target, &batch, &AugOp::Cutout { hole: 2 }, 2, 0).unwrap();
        let mut out = Vec::new();
        o.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 11);
        assert!(lines[1].starts_with("11000,"));
    }
}
