use super::mlp::{loss, loss_and_grad, Gradients, Mlp};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Lower bound on the relative-error denominator. Central differences at
/// ε = 1e-5 carry roundoff near 1e-10 in absolute terms, so gradients far
/// below this are compared on an absolute scale instead.
pub const DENOM_FLOOR: f64 = 1e-4;

/// Relative error `|a - n| / max(|a|, |n|, DENOM_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(DENOM_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares `analytic` against central differences of `objective` over
/// every parameter of `net`, returning the largest relative error.
pub fn check_gradients(
    net: &Mlp,
    analytic: &Gradients,
    epsilon: f64,
    objective: impl Fn(&Mlp) -> f64,
) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !net.same_shape(analytic) {
        return Err(Error::Shape(
            "analytic gradients do not match network".into(),
        ));
    }
    let a = analytic.flat();
    let mut worst: f64 = 0.0;
    let base = net.flat_params();
    let mut probe = net.clone();
    for k in 0..a.len() {
        let original = base[k];
        set_param(&mut probe, k, original + epsilon);
        let up = objective(&probe);
        set_param(&mut probe, k, original - epsilon);
        let down = objective(&probe);
        set_param(&mut probe, k, original);
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max(relative_error(a[k], numeric));
    }
    Ok(worst)
}

/// Gradient check of the softmax cross-entropy loss.
pub fn grad_check(net: &Mlp, batch: &Tensor, labels: &Tensor, epsilon: f64) -> Result<f64> {
    let lg = loss_and_grad(net, batch, labels)?;
    check_gradients(net, &lg.grads, epsilon, |n| {
        loss(n, batch, labels).map(|(l, _)| l).unwrap_or(f64::NAN)
    })
}

fn set_param(net: &mut Mlp, k: usize, value: f64) {
    let mut remaining = k;
    for l in &mut net.layers {
        let wl = l.weight.len();
        if remaining < wl {
            l.weight.data_mut()[remaining] = value;
            return;
        }
        remaining -= wl;
        if remaining < l.bias.len() {
            l.bias[remaining] = value;
            return;
        }
        remaining -= l.bias.len();
    }
    panic!("parameter index {k} out of range");
}
