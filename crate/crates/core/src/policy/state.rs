use crate::augment::LabeledBatch;
use crate::error::{invalid, Result};
use crate::tensorcore::{softmax, Tensor};

/// Batch-level observation of the parent policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentState {
    /// Soft-label mass per class divided by the batch size.
    pub label_histogram: Vec<f64>,
    /// `iteration / total_iterations`.
    pub progress: f64,
    pub hist_loss_ema: f64,
    pub mean_p_true: f64,
    pub std_p_true: f64,
    pub mean_margin: f64,
    pub std_margin: f64,
}

impl ParentState {
    pub fn dim(num_classes: usize) -> usize {
        num_classes + 6
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.label_histogram.clone();
        v.extend_from_slice(&[
            self.progress,
            self.hist_loss_ema,
            self.mean_p_true,
            self.std_p_true,
            self.mean_margin,
            self.std_margin,
        ]);
        v
    }

    pub fn to_tensor(&self) -> Tensor {
        let v = self.to_vec();
        Tensor::matrix(1, v.len(), v).expect("finite state")
    }
}

/// Instance-level observation: target-network penultimate features, one
/// row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildState {
    pub features: Tensor,
}

/// Probability of the labelled class and the margin
/// `P(y|x) − max_{y'≠y} P(y'|x)` for each row of `probs`.
pub fn label_confidence(probs: &Tensor, classes: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    if probs.rows() != classes.len() {
        return Err(invalid("one class per probability row required"));
    }
    let mut p_true = Vec::with_capacity(classes.len());
    let mut margins = Vec::with_capacity(classes.len());
    for (i, &y) in classes.iter().enumerate() {
        let row = probs.row(i);
        if y >= row.len() {
            return Err(invalid(format!("class {y} out of range")));
        }
        let other = row
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != y)
            .map(|(_, &p)| p)
            .fold(0.0f64, f64::max);
        p_true.push(row[y]);
        margins.push(row[y] - other);
    }
    Ok((p_true, margins))
}

/// Row-wise softmax of a logit matrix.
pub fn probabilities(logits: &Tensor) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..logits.rows()).map(|i| softmax(logits.row(i))).collect();
    Tensor::from_rows(&rows).expect("rectangular")
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn encode_parent_state(
    batch: &LabeledBatch,
    p_true: &[f64],
    margins: &[f64],
    iteration: u64,
    total_iters: u64,
    loss_ema: f64,
) -> Result<ParentState> {
    let b = batch.len();
    if p_true.len() != b || margins.len() != b {
        return Err(invalid(format!(
            "batch of {b} with {} probabilities and {} margins",
            p_true.len(),
            margins.len()
        )));
    }
    if b == 0 {
        return Err(invalid("empty batch"));
    }
    let c = batch.num_classes();
    let mut hist = vec![0.0; c];
    for row in &batch.labels {
        for (h, v) in hist.iter_mut().zip(row) {
            *h += v;
        }
    }
    hist.iter_mut().for_each(|h| *h /= b as f64);
    let progress = if total_iters == 0 {
        0.0
    } else {
        (iteration as f64 / total_iters as f64).clamp(0.0, 1.0)
    };
    let (mean_p_true, std_p_true) = mean_std(p_true);
    let (mean_margin, std_margin) = mean_std(margins);
    if !loss_ema.is_finite() {
        return Err(invalid("loss average is not finite"));
    }
    Ok(ParentState {
        label_histogram: hist,
        progress,
        hist_loss_ema: loss_ema,
        mean_p_true,
        std_p_true,
        mean_margin,
        std_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Image;

    fn batch_with_classes(classes: &[usize], c: usize) -> LabeledBatch {
        let images = classes
            .iter()
            .map(|_| Image::filled(2, 2, 1, 0.0))
            .collect();
        let labels = classes
            .iter()
            .map(|&k| {
                let mut v = vec![0.0; c];
                v[k] = 1.0;
                v
            })
            .collect();
        LabeledBatch::new(images, labels, (0..classes.len() as u64).collect()).unwrap()
    }

    #[test]
    fn balanced_histogram() {
        let batch = batch_with_classes(&[0, 1, 2, 3, 3, 2, 1, 0], 4);
        let s = encode_parent_state(&batch, &[0.5; 8], &[0.1; 8], 3, 10, 1.2).unwrap();
        assert_eq!(s.label_histogram, vec![0.25; 4]);
        assert_eq!(s.to_vec().len(), ParentState::dim(4));
        assert!((s.progress - 0.3).abs() < 1e-15);
        assert_eq!(s.std_p_true, 0.0);
    }

    #[test]
    fn progress_endpoints() {
        let batch = batch_with_classes(&[0, 1], 2);
        let start = encode_parent_state(&batch, &[0.5; 2], &[0.0; 2], 0, 50, 0.0).unwrap();
        let end = encode_parent_state(&batch, &[0.5; 2], &[0.0; 2], 50, 50, 0.0).unwrap();
        assert_eq!(start.progress, 0.0);
        assert_eq!(end.progress, 1.0);
    }

    #[test]
    fn margin_definition() {
        let probs = Tensor::matrix(1, 3, vec![0.7, 0.2, 0.1]).unwrap();
        let (p, m) = label_confidence(&probs, &[0]).unwrap();
        assert!((p[0] - 0.7).abs() < 1e-15);
        assert!((m[0] - 0.5).abs() < 1e-12);
        let (_, m) = label_confidence(&probs, &[2]).unwrap();
        assert!((m[0] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        let batch = batch_with_classes(&[0, 1], 2);
        assert!(encode_parent_state(&batch, &[0.5], &[0.0; 2], 0, 1, 0.0).is_err());
    }
}
