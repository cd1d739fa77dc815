use rand::Rng;

use super::tensor::{log_softmax, softmax, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer: `y = act(x · W + b)` with `W` stored `in×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_width(&self) -> usize {
        self.weight.cols()
    }
}

/// Feed-forward network. Hidden layers use ReLU, the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Input to the last layer (penultimate activations).
    pub features: Tensor,
    pub logits: Tensor,
}

/// Per-layer inputs and pre-activations retained for backprop.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    output: Tensor,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub fn features(&self) -> &Tensor {
        self.inputs.last().expect("non-empty network")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

/// Gradients laid out exactly like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weight: Tensor::zeros(l.weight.shape().to_vec()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.flat().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Result of [`loss_and_grad`].
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub mean_loss: f64,
    pub per_sample_loss: Vec<f64>,
    pub grads: Gradients,
}

impl Mlp {
    /// He-uniform initialisation with zero biases. `widths` is `[in, hidden.., out]`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        assert!(
            widths.len() >= 2,
            "an MLP needs at least input and output widths"
        );
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (widths[i], widths[i + 1]);
                let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Dense {
                    weight: Tensor::matrix(fan_in, fan_out, data).expect("sized"),
                    bias: vec![0.0; fan_out],
                    activation: if i + 1 == n {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2);
        let n = widths.len() - 1;
        Self {
            layers: (0..n)
                .map(|i| Dense {
                    weight: Tensor::zeros(vec![widths[i], widths[i + 1]]),
                    bias: vec![0.0; widths[i + 1]],
                    activation: if i + 1 == n {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                })
                .collect(),
        }
    }

    /// Builds a network from explicit layers, checking that widths chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("empty network".into()));
        }
        for l in &layers {
            if l.bias.len() != l.out_width() {
                return Err(Error::Shape("bias length differs from layer width".into()));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::Shape(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].out_width(),
                    pair[1].in_width()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(Dense::out_width));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Dense::out_width)
    }

    pub fn feature_width(&self) -> usize {
        self.layers.last().map_or(0, Dense::in_width)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Visits every parameter in the same order as [`Mlp::flat_params`].
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut k = 0;
        for l in &mut self.layers {
            for p in l.weight.data_mut() {
                f(k, p);
                k += 1;
            }
            for p in &mut l.bias {
                f(k, p);
                k += 1;
            }
        }
    }

    pub fn forward(&self, batch: &Tensor) -> Result<Forward> {
        let trace = self.trace(batch)?;
        Ok(Forward {
            features: trace.features().clone(),
            logits: trace.output,
        })
    }

    pub fn trace(&self, batch: &Tensor) -> Result<Trace> {
        if batch.shape().len() != 2 || batch.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "batch {:?} into network of input width {}",
                batch.shape(),
                self.input_width()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let mut z = x.matmul(&layer.weight)?;
            let m = z.cols();
            for i in 0..z.rows() {
                for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            debug_assert_eq!(m, layer.bias.len());
            let mut a = z.clone();
            a.data_mut()
                .iter_mut()
                .for_each(|v| *v = layer.activation.apply(*v));
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        Ok(Trace {
            inputs,
            pre,
            output: x,
        })
    }

    /// Backpropagates `d_out` (gradient of the scalar objective w.r.t. the
    /// network output) through a recorded trace.
    pub fn backward(&self, trace: &Trace, d_out: &Tensor) -> Result<Gradients> {
        if d_out.shape() != trace.output.shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} vs output {:?}",
                d_out.shape(),
                trace.output.shape()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_out.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pre[idx];
            for (d, z) in delta.data_mut().iter_mut().zip(pre.data()) {
                *d *= layer.activation.derivative(*z);
            }
            let input = &trace.inputs[idx];
            let weight = input.transpose().matmul(&delta)?;
            let mut bias = vec![0.0; layer.bias.len()];
            for i in 0..delta.rows() {
                for (b, d) in bias.iter_mut().zip(delta.row(i)) {
                    *b += d;
                }
            }
            grads.push(DenseGrad { weight, bias });
            if idx > 0 {
                delta = delta.matmul(&layer.weight.transpose())?;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    pub fn same_shape(&self, grads: &Gradients) -> bool {
        self.layers.len() == grads.layers.len()
            && self
                .layers
                .iter()
                .zip(&grads.layers)
                .all(|(l, g)| l.weight.shape() == g.weight.shape() && l.bias.len() == g.bias.len())
    }
}

/// Checks that every row is a probability vector.
pub fn validate_soft_labels(labels: &Tensor) -> Result<()> {
    for i in 0..labels.rows() {
        let row = labels.row(i);
        if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput(format!(
                "label row {i} has entries outside [0,1]"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("label row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// Per-sample `H(y, softmax(z))` and the gradient of the *mean* loss
/// with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    if logits.shape() != labels.shape() {
        return Err(Error::Shape(format!(
            "logits {:?} vs labels {:?}",
            logits.shape(),
            labels.shape()
        )));
    }
    let n = logits.rows();
    let mut losses = Vec::with_capacity(n);
    let mut d = Tensor::zeros(logits.shape().to_vec());
    for i in 0..n {
        let z = logits.row(i);
        let y = labels.row(i);
        let logp = log_softmax(z);
        losses.push(-y.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>());
        let p = softmax(z);
        let mass: f64 = y.iter().sum();
        for ((g, pj), yj) in d.row_mut(i).iter_mut().zip(&p).zip(y) {
            *g = (mass * pj - yj) / n as f64;
        }
    }
    Ok((losses, d))
}

pub fn loss_and_grad(net: &Mlp, batch: &Tensor, soft_labels: &Tensor) -> Result<LossGrad> {
    validate_soft_labels(soft_labels)?;
    let trace = net.trace(batch)?;
    let (per_sample_loss, d_logits) = softmax_cross_entropy(trace.output(), soft_labels)?;
    let grads = net.backward(&trace, &d_logits)?;
    let mean_loss = mean(&per_sample_loss);
    Ok(LossGrad {
        mean_loss,
        per_sample_loss,
        grads,
    })
}

/// Loss only, no backprop.
pub fn loss(net: &Mlp, batch: &Tensor, soft_labels: &Tensor) -> Result<(f64, Vec<f64>)> {
    let out = net.forward(batch)?;
    let (per, _) = softmax_cross_entropy(&out.logits, soft_labels)?;
    Ok((mean(&per), per))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
