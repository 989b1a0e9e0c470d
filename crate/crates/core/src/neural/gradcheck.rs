//! Central-difference verification of analytic gradients.

use super::network::{backward, forward, predict};
use super::params::ParameterSet;
use super::spec::NetworkSpec;
use super::tensor::Tensor;
use crate::error::Result;

/// Maps a network output to a scalar loss and its exact gradient.
pub type LossFixture<'a> = dyn Fn(&Tensor) -> (f64, Tensor) + 'a;

/// `0.5 * sum((y - target)^2)`.
pub fn quadratic_loss(target: Tensor) -> impl Fn(&Tensor) -> (f64, Tensor) {
    move |y: &Tensor| {
        let mut g = y.clone();
        let mut loss = 0.0;
        for (gi, t) in g.data_mut().iter_mut().zip(target.data()) {
            *gi -= t;
            loss += 0.5 * *gi * *gi;
        }
        (loss, g)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`, maximized over elements.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Analytic parameter and input gradients of the loss, flattened in parameter order.
pub fn analytic_gradients(
    spec: &NetworkSpec,
    params: &ParameterSet,
    input: &Tensor,
    loss: &LossFixture,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut p = params.clone();
    p.zero_grads();
    let (y, cache) = forward(spec, &p, input)?;
    let (_, g) = loss(&y);
    let dx = backward(spec, &cache, &mut p, &g)?;
    Ok((p.flat_grads(), dx.into_data()))
}

/// Central differences `(f(theta + h) - f(theta - h)) / 2h` for every parameter scalar.
pub fn numeric_param_gradients(
    spec: &NetworkSpec,
    params: &ParameterSet,
    input: &Tensor,
    loss: &LossFixture,
    h: f64,
) -> Result<Vec<f64>> {
    let mut p = params.clone();
    let mut out = Vec::with_capacity(p.num_scalars());
    for k in 0..p.len() {
        for j in 0..p.params()[k].value.len() {
            let orig = p.params()[k].value.data()[j];
            p.params_mut()[k].value.data_mut()[j] = orig + h;
            let fp = loss(&predict(spec, &p, input)?).0;
            p.params_mut()[k].value.data_mut()[j] = orig - h;
            let fm = loss(&predict(spec, &p, input)?).0;
            p.params_mut()[k].value.data_mut()[j] = orig;
            out.push((fp - fm) / (2.0 * h));
        }
    }
    Ok(out)
}

pub fn numeric_input_gradients(
    spec: &NetworkSpec,
    params: &ParameterSet,
    input: &Tensor,
    loss: &LossFixture,
    h: f64,
) -> Result<Vec<f64>> {
    let mut x = input.clone();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let orig = x.data()[j];
        x.data_mut()[j] = orig + h;
        let fp = loss(&predict(spec, params, &x)?).0;
        x.data_mut()[j] = orig - h;
        let fm = loss(&predict(spec, params, &x)?).0;
        x.data_mut()[j] = orig;
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Maximum relative error between analytic and central-difference gradients,
/// over all parameters and inputs.
pub fn grad_check(spec: &NetworkSpec, params: &ParameterSet, input: &Tensor, loss: &LossFixture, h: f64) -> Result<f64> {
    let (ap, ax) = analytic_gradients(spec, params, input, loss)?;
    let np = numeric_param_gradients(spec, params, input, loss, h)?;
    let nx = numeric_input_gradients(spec, params, input, loss, h)?;
    Ok(max_relative_error(&ap, &np).max(max_relative_error(&ax, &nx)))
}
