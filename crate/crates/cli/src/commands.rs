//! Subcommands. Each writes its artifacts under `config.out`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use selectaugment::augment::{apply_plan, AugPlan, LabeledBatch, SelectionMask};
use selectaugment::data::{batches, Dataset};
use selectaugment::hrl::{
    compute_reward, pretrain_policy, run_to_end, train_loop, EvalResult, Strategy, TrainConfig,
    Trainer,
};
use selectaugment::oracle::{best_subset, enumerate_selections, policy_convergence_probe};
use selectaugment::oracle::{BestSubset, ProbeConfig};
use selectaugment::policy::{binomial, child_act, parent_act, ActMode};
use selectaugment::rng;
use selectaugment::tensorcore::{Mlp, Tensor};

use crate::checkpoint::{self, RunState};
use crate::config::RunConfig;
use crate::metrics::{selection_rows, CsvSink, MetricsRow};
use crate::svg::{step_series, Chart, Series};

/// Stream for initializing the pre-training proxy target.
const PROXY_STREAM: u64 = 4;
/// Stream for the augmentation draws of the distribution-shift probe.
const SHIFT_STREAM: u64 = 5;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output dir {}", dir.display()))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub evals: Vec<EvalResult>,
    pub steps: usize,
    pub mean_ratio: f64,
}

fn load_initial_policies(cfg: &RunConfig, trainer: Trainer, train: &Dataset) -> Result<Trainer> {
    let Some(path) = &cfg.policy_init else {
        return Ok(trainer);
    };
    let (_, policies) = checkpoint::decode_policies(&checkpoint::read(path)?)?;
    Ok(Trainer::from_parts(
        trainer.config,
        train,
        trainer.target,
        policies,
    )?)
}

/// Trains per `cfg`, or continues the run in `resume`, writing
/// `metrics.csv`, `selections.csv`, checkpoints and `ratio_over_time.svg`.
pub fn cmd_train(cfg: &RunConfig, resume: Option<RunState>) -> Result<TrainSummary> {
    cfg.validate()?;
    let tc = cfg.train_config()?;
    let (train, test) = cfg.datasets()?;
    prepare_out(&cfg.out)?;
    let mut trainer = match resume {
        Some(state) => state.into_trainer(tc, &train)?,
        None => load_initial_policies(cfg, Trainer::new(tc, &train)?, &train)?,
    };
    let strategy = trainer.config.strategy.to_string();
    let mut metrics = CsvSink::new(create(&cfg.out, "metrics.csv")?);
    let mut selections = CsvSink::new(create(&cfg.out, "selections.csv")?);
    let start = Instant::now();
    let wall = || {
        if cfg.record_wall_time {
            start.elapsed().as_millis() as u64
        } else {
            0
        }
    };
    let mut ratios = Vec::new();
    let mut evals = Vec::new();
    while !trainer.is_finished() {
        let epoch_batches = batches(
            &train,
            trainer.config.batch_size,
            trainer.config.seed,
            trainer.epoch,
        )?;
        for batch in &epoch_batches {
            let log = trainer.train_step(batch)?;
            metrics.push(&MetricsRow::step(&log, wall()))?;
            for row in selection_rows(&log) {
                selections.push(&row)?;
            }
            ratios.push((log.iteration as f64, log.ratio));
        }
        trainer.epoch += 1;
        let eval = trainer.evaluate(&test)?;
        metrics.push(&MetricsRow::eval(
            &eval,
            trainer.iteration,
            &strategy,
            wall(),
        ))?;
        evals.push(eval);
        if cfg.checkpoint_every > 0 && trainer.epoch % cfg.checkpoint_every as u64 == 0 {
            let bytes = checkpoint::encode_run(cfg, &RunState::capture(&trainer));
            write_file(
                &cfg.out,
                &format!("checkpoint_epoch{}.bin", trainer.epoch),
                &bytes,
            )?;
        }
    }
    metrics.finish()?;
    selections.finish()?;
    let bytes = checkpoint::encode_run(cfg, &RunState::capture(&trainer));
    write_file(&cfg.out, "checkpoint.bin", &bytes)?;
    if cfg.plots {
        let chart = Chart {
            title: format!("Chosen augmentation ratio ({strategy})"),
            x_label: "iteration".into(),
            y_label: "ratio".into(),
            series: vec![Series {
                name: strategy.clone(),
                points: ratios.clone(),
            }],
        };
        write_file(&cfg.out, "ratio_over_time.svg", chart.render().as_bytes())?;
    }
    let mean_ratio = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().map(|p| p.1).sum::<f64>() / ratios.len() as f64
    };
    Ok(TrainSummary {
        evals,
        steps: ratios.len(),
        mean_ratio,
    })
}

/// Pre-trains the policies against a small proxy target and writes
/// `policies.bin`, usable as `policy_init` for `train`.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let tc = cfg.train_config()?;
    let (train, _) = cfg.datasets()?;
    prepare_out(&cfg.out)?;
    let initial = Trainer::new(tc.clone(), &train)?.policies;
    let mut widths = vec![train.input_width()];
    widths.extend_from_slice(&cfg.proxy_hidden);
    widths.push(train.num_classes);
    let proxy = Mlp::new(&widths, &mut rng::stream(cfg.seed, PROXY_STREAM));
    let policies = pretrain_policy(proxy, &train, &tc, initial)?;
    write_file(
        &cfg.out,
        "policies.bin",
        &checkpoint::encode_policies(cfg, &policies),
    )?;
    Ok(cfg.out.join("policies.bin"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub intervals: usize,
    pub final_test_accuracy: f64,
    pub final_test_loss: f64,
    pub mean_ratio: f64,
}

/// One full run per interval count, in parallel, merged in input order
/// into `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, intervals: &[usize]) -> Result<Vec<SweepRow>> {
    ensure!(!intervals.is_empty(), "no interval numbers given");
    ensure!(
        intervals.iter().all(|&n| n >= 1),
        "interval numbers must be at least 1"
    );
    cfg.validate()?;
    let base = cfg.train_config()?;
    let (train, test) = cfg.datasets()?;
    prepare_out(&cfg.out)?;
    let results: Vec<Result<SweepRow>> = std::thread::scope(|s| {
        let handles: Vec<_> = intervals
            .iter()
            .map(|&n| {
                let tc = TrainConfig {
                    intervals: n,
                    ..base.clone()
                };
                let (train, test) = (&train, &test);
                s.spawn(move || -> Result<SweepRow> {
                    let out = train_loop(&tc, train, test)?;
                    let last = out.evals.last().context("run had no epochs")?;
                    let steps = out.history.len().max(1) as f64;
                    Ok(SweepRow {
                        intervals: n,
                        final_test_accuracy: last.accuracy,
                        final_test_loss: last.mean_loss,
                        mean_ratio: out.history.iter().map(|l| l.ratio).sum::<f64>() / steps,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut sink = CsvSink::new(create(&cfg.out, "sweep.csv")?);
    for r in &rows {
        sink.push(r)?;
    }
    sink.finish()?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftRow {
    pub sample_id: u64,
    pub class: usize,
    pub original: f64,
    pub full: f64,
    pub selected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub original: usize,
    pub full: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSummary {
    pub rows: Vec<ShiftRow>,
    pub mean_original: f64,
    pub mean_full: f64,
    pub mean_selected: f64,
    /// Fraction of samples the trained policies chose to augment.
    pub selected_fraction: f64,
}

fn class_centroids(features: &Tensor, classes: &[usize], num_classes: usize) -> Vec<Vec<f64>> {
    let w = features.cols();
    let mut sums = vec![vec![0.0; w]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (i, &c) in classes.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(features.row(i)) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            for v in s.iter_mut() {
                *v /= n as f64;
            }
        }
    }
    sums
}

fn distances(features: &Tensor, classes: &[usize], centroids: &[Vec<f64>]) -> Vec<f64> {
    classes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            features
                .row(i)
                .iter()
                .zip(&centroids[c])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let i = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[i] += 1;
    }
    counts
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Trains a hierarchical run, then measures how far original, fully
/// augmented and policy-selected training samples sit from their class
/// centroid in the trained target's feature space.
pub fn cmd_demo_shift(cfg: &RunConfig) -> Result<ShiftSummary> {
    cfg.validate()?;
    let tc = cfg.train_config()?;
    ensure!(
        tc.strategy.is_hierarchical(),
        "demo-shift needs a hierarchical strategy, got {}",
        tc.strategy
    );
    let (train, test) = cfg.datasets()?;
    prepare_out(&cfg.out)?;
    let mut trainer = load_initial_policies(cfg, Trainer::new(tc.clone(), &train)?, &train)?;
    run_to_end(&mut trainer, &train, &test)?;

    let order: Vec<usize> = (0..train.len()).collect();
    let mut plan_rng = rng::stream(cfg.seed, SHIFT_STREAM);
    let features = |b: &LabeledBatch| -> Result<Tensor> {
        Ok(trainer.target.forward(&b.image_tensor())?.features)
    };
    let mut feats = [Vec::new(), Vec::new(), Vec::new()];
    let mut picked = 0usize;
    for chunk in order.chunks(tc.batch_size) {
        let batch = train.batch(chunk);
        let (ps, cs) = trainer.policy_states(&batch)?;
        let parent = parent_act(
            &ps,
            &trainer.pool,
            &trainer.policies.parent,
            ActMode::Greedy,
            &mut plan_rng,
        )?;
        let k = trainer.pool.k_for(parent.index, batch.len());
        let child = child_act(
            &cs,
            k,
            &trainer.policies.child,
            ActMode::Greedy,
            &mut plan_rng,
        )?;
        picked += child.mask.k();
        let plan = AugPlan::draw(&tc.da_op, &batch, &mut plan_rng)?;
        let full = apply_plan(&batch, &SelectionMask::all(batch.len()), &plan)?;
        let selected = apply_plan(&batch, &child.mask, &plan)?;
        for (dst, b) in feats.iter_mut().zip([&batch, &full, &selected]) {
            dst.extend_from_slice(features(b)?.data());
        }
    }
    let width = trainer.target.feature_width();
    let [f_orig, f_full, f_sel] =
        feats.map(|d| Tensor::matrix(train.len(), width, d).expect("feature rows"));
    let centroids = class_centroids(&f_orig, &train.classes, train.num_classes);
    let d_orig = distances(&f_orig, &train.classes, &centroids);
    let d_full = distances(&f_full, &train.classes, &centroids);
    let d_sel = distances(&f_sel, &train.classes, &centroids);

    let rows: Vec<ShiftRow> = (0..train.len())
        .map(|i| ShiftRow {
            sample_id: i as u64,
            class: train.classes[i],
            original: d_orig[i],
            full: d_full[i],
            selected: d_sel[i],
        })
        .collect();
    let mut sink = CsvSink::new(create(&cfg.out, "shift.csv")?);
    for r in &rows {
        sink.push(r)?;
    }
    sink.finish()?;

    let hi = d_orig
        .iter()
        .chain(&d_full)
        .chain(&d_sel)
        .copied()
        .fold(0.0, f64::max);
    let bins = cfg.shift_bins;
    let edges: Vec<f64> = (0..=bins).map(|i| hi * i as f64 / bins as f64).collect();
    let counts = [&d_orig, &d_full, &d_sel].map(|d| histogram(d, 0.0, hi, bins));
    let mut sink = CsvSink::new(create(&cfg.out, "shift_hist.csv")?);
    for i in 0..bins {
        sink.push(&HistRow {
            bin_lo: edges[i],
            bin_hi: edges[i + 1],
            original: counts[0][i],
            full: counts[1][i],
            selected: counts[2][i],
        })?;
    }
    sink.finish()?;
    if cfg.plots {
        let chart = Chart {
            title: "Distance to class centroid".into(),
            x_label: "distance".into(),
            y_label: "samples".into(),
            series: vec![
                step_series("original", &edges, &counts[0]),
                step_series("fully augmented", &edges, &counts[1]),
                step_series("selected", &edges, &counts[2]),
            ],
        };
        write_file(&cfg.out, "shift_hist.svg", chart.render().as_bytes())?;
    }
    Ok(ShiftSummary {
        mean_original: mean(&d_orig),
        mean_full: mean(&d_full),
        mean_selected: mean(&d_sel),
        selected_fraction: picked as f64 / train.len() as f64,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSummary {
    pub checks: Vec<CheckRow>,
    /// Candidate index of the probed batch, if one cleared the gap.
    pub instance: Option<u64>,
}

impl OracleSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, passed: bool, value: f64, detail: String) -> CheckRow {
    CheckRow {
        check: name.into(),
        passed,
        value,
        detail,
    }
}

fn oracle_target(cfg: &RunConfig, tc: &TrainConfig, train: &Dataset) -> Result<Mlp> {
    let frozen = TrainConfig {
        strategy: Strategy::None,
        epochs: cfg.oracle_target_epochs,
        batch_size: 64.min(train.len()),
        ..tc.clone()
    };
    let mut t = Trainer::new(frozen, train)?;
    while !t.is_finished() {
        t.run_epoch(train)?;
    }
    Ok(t.target)
}

fn candidate_batch(train: &Dataset, b: usize, inst: u64) -> LabeledBatch {
    let n = train.len() as u64;
    let idx: Vec<usize> = (0..b as u64)
        .map(|i| ((inst * b as u64 + i) * 37 % n) as usize)
        .collect();
    train.batch(&idx)
}

/// Pipeline agreement, oracle sanity and policy convergence on a frozen
/// target. Writes `oracle_report.csv` and the probed reward table.
pub fn cmd_oracle_test(cfg: &RunConfig) -> Result<OracleSummary> {
    cfg.validate()?;
    let tc = cfg.train_config()?;
    let (train, _) = cfg.datasets()?;
    ensure!(
        train.len() >= cfg.oracle_batch,
        "training set smaller than the oracle batch"
    );
    prepare_out(&cfg.out)?;
    let (b, k, op) = (cfg.oracle_batch, cfg.oracle_k, tc.da_op);
    let target = oracle_target(cfg, &tc, &train)?;
    let mut checks = Vec::new();

    let en = enumerate_selections(b, k)?;
    let expected = binomial(b, k);
    let mut bits: Vec<String> = en.masks.iter().map(|m| m.to_bit_string()).collect();
    bits.sort();
    bits.dedup();
    let ok = expected.to_string() == en.masks.len().to_string()
        && bits.len() == en.masks.len()
        && en.masks.iter().all(|m| m.k() == k);
    checks.push(check(
        "enumeration_count",
        ok,
        en.masks.len() as f64,
        format!("C({b},{k}) = {expected}"),
    ));

    let mut chosen: Option<(u64, LabeledBatch, BestSubset)> = None;
    for inst in 0..cfg.oracle_candidates as u64 {
        let batch = candidate_batch(&train, b, inst);
        let oracle = best_subset(&target, &batch, &op, k, inst)?;
        if oracle.gap() >= cfg.oracle_min_gap {
            chosen = Some((inst, batch, oracle));
            break;
        }
    }
    let (inst, batch, oracle) = match chosen {
        Some(c) => c,
        None => {
            // Fall back to the first candidate so agreement checks still run.
            let batch = candidate_batch(&train, b, 0);
            let oracle = best_subset(&target, &batch, &op, k, 0)?;
            (0, batch, oracle)
        }
    };
    let gap_ok = oracle.gap() >= cfg.oracle_min_gap;

    let mut mismatches = 0;
    for e in &oracle.table {
        let r = compute_reward(&target, &batch, &e.mask, &op, &mut rng::seeded(inst))?;
        if r.reward.to_bits() != e.record.reward.to_bits() {
            mismatches += 1;
        }
    }
    checks.push(check(
        "pipeline_agreement",
        mismatches == 0,
        mismatches as f64,
        format!("{} masks compared bitwise", oracle.table.len()),
    ));

    let max = oracle
        .table
        .iter()
        .map(|e| e.record.reward)
        .fold(f64::NEG_INFINITY, f64::max);
    let ok = oracle.best_reward == max
        && oracle.reward_of(&oracle.best) == Some(max)
        && oracle.best.k() == k;
    checks.push(check(
        "best_subset_argmax",
        ok,
        oracle.best_reward,
        format!("best mask {}", oracle.best.to_bit_string()),
    ));

    let empty = compute_reward(
        &target,
        &batch,
        &SelectionMask::none(b),
        &op,
        &mut rng::seeded(inst),
    )?;
    let full = compute_reward(
        &target,
        &batch,
        &SelectionMask::all(b),
        &op,
        &mut rng::seeded(inst),
    )?;
    checks.push(check(
        "empty_full_identity",
        empty.reward == -full.reward,
        empty.reward + full.reward,
        format!(
            "reward(empty) {} reward(full) {}",
            empty.reward, full.reward
        ),
    ));

    let seeds: Vec<u64> = (0..cfg.oracle_seeds as u64).collect();
    let probe = ProbeConfig {
        plan_seed: inst,
        ..Default::default()
    };
    let report =
        policy_convergence_probe(&target, &batch, &op, k, cfg.oracle_updates, &seeds, &probe)?;
    let detail = if gap_ok {
        format!("candidate {inst}, gap {:.4}", oracle.gap())
    } else {
        format!(
            "no candidate reached gap {}; best gap {:.4}",
            cfg.oracle_min_gap,
            oracle.gap()
        )
    };
    checks.push(check(
        "policy_convergence",
        gap_ok && report.match_fraction >= cfg.oracle_match_threshold,
        report.match_fraction,
        detail,
    ));

    let mut sink = CsvSink::new(create(&cfg.out, "oracle_report.csv")?);
    for c in &checks {
        sink.push(c)?;
    }
    sink.finish()?;
    let mut table = create(&cfg.out, "oracle_table.csv")?;
    oracle.write_csv(&mut table)?;
    table.flush()?;
    Ok(OracleSummary {
        checks,
        instance: gap_ok.then_some(inst),
    })
}

/// Parses a comma-separated list of interval counts.
pub fn parse_intervals(s: &str) -> Result<Vec<usize>> {
    let v = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .with_context(|| format!("bad interval count {p:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    if v.contains(&0) {
        bail!("interval numbers must be at least 1");
    }
    Ok(v)
}
