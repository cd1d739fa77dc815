use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    Adam,
}

/// Optimizer configuration plus its running state.
///
/// Weight decay is applied as an L2 term folded into the gradient for both
/// kinds. Adam moments are allocated lazily on the first step so a single
/// `OptimState` can be built before the network it will drive.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub kind: OptimKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimState {
    pub fn sgd(learning_rate: f64, weight_decay: f64) -> Self {
        Self::new(OptimKind::Sgd, learning_rate, weight_decay)
    }

    pub fn adam(learning_rate: f64, weight_decay: f64) -> Self {
        Self::new(OptimKind::Adam, learning_rate, weight_decay)
    }

    pub fn new(kind: OptimKind, learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            learning_rate,
            weight_decay,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

pub fn apply_update(net: &mut Mlp, grads: &Gradients, opt: &mut OptimState) -> Result<()> {
    if !net.same_shape(grads) {
        return Err(Error::Shape("gradients do not match network".into()));
    }
    let g = grads.flat();
    let n = g.len();
    let wd = opt.weight_decay;
    let lr = opt.learning_rate;
    opt.step += 1;
    match opt.kind {
        OptimKind::Sgd => {
            net.for_each_param_mut(|k, p| *p -= lr * (g[k] + wd * *p));
        }
        OptimKind::Adam => {
            if opt.m.len() != n {
                if opt.m.is_empty() {
                    opt.m = vec![0.0; n];
                    opt.v = vec![0.0; n];
                } else {
                    return Err(Error::Shape("adam moments do not match network".into()));
                }
            }
            let t = opt.step as i32;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            let (m, v) = (&mut opt.m, &mut opt.v);
            net.for_each_param_mut(|k, p| {
                let gk = g[k] + wd * *p;
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * gk;
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            });
        }
    }
    Ok(())
}
