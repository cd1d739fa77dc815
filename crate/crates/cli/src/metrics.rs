//! CSV artifacts. Columns are fixed; numbers use the shortest round-trip
//! decimal form with a period separator.

use std::io::Write;

use anyhow::Result;
use serde::Serialize;

use selectaugment::hrl::{EvalResult, StepLog};

/// One line of `metrics.csv`: a training step or a per-epoch evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub epoch: u64,
    pub iteration: u64,
    pub strategy: String,
    pub chosen_ratio: Option<f64>,
    #[serde(rename = "k")]
    pub k: Option<usize>,
    pub reward: Option<f64>,
    pub loss_original: Option<f64>,
    pub loss_selected: Option<f64>,
    pub loss_full: Option<f64>,
    pub target_train_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub wall_ms: u64,
}

pub const METRICS_HEADER: [&str; 12] = [
    "epoch",
    "iteration",
    "strategy",
    "chosen_ratio",
    "k",
    "reward",
    "loss_original",
    "loss_selected",
    "loss_full",
    "target_train_loss",
    "test_accuracy",
    "wall_ms",
];

impl MetricsRow {
    pub fn step(log: &StepLog, wall_ms: u64) -> Self {
        let r = log.reward.as_ref();
        Self {
            epoch: log.epoch,
            iteration: log.iteration,
            strategy: log.strategy.to_string(),
            chosen_ratio: Some(log.ratio),
            k: Some(log.k),
            reward: r.map(|r| r.reward),
            loss_original: r.map(|r| r.loss_original),
            loss_selected: r.map(|r| r.loss_selected),
            loss_full: r.map(|r| r.loss_full),
            target_train_loss: Some(log.target_loss),
            test_accuracy: None,
            wall_ms,
        }
    }

    /// `iteration` is the number of steps completed when the evaluation ran.
    pub fn eval(eval: &EvalResult, iteration: u64, strategy: &str, wall_ms: u64) -> Self {
        Self {
            epoch: eval.epoch,
            iteration,
            strategy: strategy.to_string(),
            chosen_ratio: None,
            k: None,
            reward: None,
            loss_original: None,
            loss_selected: None,
            loss_full: None,
            target_train_loss: None,
            test_accuracy: Some(eval.accuracy),
            wall_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRow {
    pub iteration: u64,
    pub sample_id: u64,
    pub class: usize,
    pub score: Option<f64>,
    pub selected: u8,
}

pub fn selection_rows(log: &StepLog) -> impl Iterator<Item = SelectionRow> + '_ {
    (0..log.ids.len()).map(move |i| SelectionRow {
        iteration: log.iteration,
        sample_id: log.ids[i],
        class: log.classes[i],
        score: log.scores.as_ref().map(|s| s[i]),
        selected: u8::from(log.mask.is_selected(i)),
    })
}

/// Serializes rows with a single header line.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(inner: W) -> Self {
        Self {
            writer: csv::WriterBuilder::new()
                .has_headers(true)
                .from_writer(inner),
        }
    }

    pub fn push<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.writer.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_fixed_and_options_are_blank() {
        let mut buf = Vec::new();
        let mut sink = CsvSink::new(&mut buf);
        let row = MetricsRow::eval(
            &EvalResult {
                epoch: 0,
                accuracy: 0.5,
                mean_loss: 1.0,
            },
            2,
            "none",
            0,
        );
        sink.push(&row).unwrap();
        sink.finish().unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), METRICS_HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "0,2,none,,,,,,,,0.5,0");
    }

    #[test]
    fn floats_have_no_grouping() {
        let mut buf = Vec::new();
        let mut sink = CsvSink::new(&mut buf);
        sink.push(&(1234567.25f64, 1e-7f64)).unwrap();
        sink.finish().unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.trim(), "1234567.25,1e-7");
    }
}
