//! Batched forward and backward passes. Tensors carry a leading batch
//! dimension; `NetworkSpec` shapes do not.

use super::params::ParameterSet;
use super::spec::{Layer, NetworkSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Layer inputs recorded by `forward`, tied to one parameter version.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    inputs: Vec<Tensor>,
    output_shape: Vec<usize>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.inputs[0].rows()
    }
}

fn param_index(params: &ParameterSet, name: &str) -> Result<usize> {
    params
        .index_of(name)
        .ok_or_else(|| Error::InvalidParams(format!("missing parameter {name}")))
}

fn batched(b: usize, shape: &[usize]) -> Vec<usize> {
    let mut s = vec![b];
    s.extend_from_slice(shape);
    s
}

/// Unfolds one sample `[c, h, w]` into rows of receptive fields, `[ho * wo, c * k * k]`.
fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, s: usize, out: &mut Vec<f64>) {
    let ho = (h - k) / s + 1;
    let wo = (w - k) / s + 1;
    out.clear();
    out.reserve(ho * wo * c * k * k);
    for oy in 0..ho {
        for ox in 0..wo {
            for ch in 0..c {
                for ky in 0..k {
                    let row = ch * h * w + (oy * s + ky) * w + ox * s;
                    out.extend_from_slice(&x[row..row + k]);
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn layer_forward(layer: &Layer, index: usize, params: &ParameterSet, x: &Tensor) -> Result<Tensor> {
    let b = x.rows();
    match *layer {
        Layer::Dense { inputs, outputs } => {
            let w = &params.param(param_index(params, &format!("{index}.weight"))?).value;
            let bias = &params.param(param_index(params, &format!("{index}.bias"))?).value;
            let (w, bias) = (w.data(), bias.data());
            let mut y = Vec::with_capacity(b * outputs);
            for r in 0..b {
                let xr = x.row(r);
                for o in 0..outputs {
                    y.push(dot(xr, &w[o * inputs..(o + 1) * inputs]) + bias[o]);
                }
            }
            Tensor::new(vec![b, outputs], y)
        }
        Layer::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
        } => {
            let (h, wd) = (x.shape()[2], x.shape()[3]);
            let (ho, wo) = ((h - kernel) / stride + 1, (wd - kernel) / stride + 1);
            let w = params.param(param_index(params, &format!("{index}.weight"))?).value.data();
            let bias = params.param(param_index(params, &format!("{index}.bias"))?).value.data();
            let field = in_ch * kernel * kernel;
            let mut col = Vec::new();
            let mut y = vec![0.0; b * out_ch * ho * wo];
            for r in 0..b {
                im2col(x.row(r), in_ch, h, wd, kernel, stride, &mut col);
                let yr = &mut y[r * out_ch * ho * wo..(r + 1) * out_ch * ho * wo];
                for oc in 0..out_ch {
                    let wk = &w[oc * field..(oc + 1) * field];
                    for p in 0..ho * wo {
                        yr[oc * ho * wo + p] = dot(wk, &col[p * field..(p + 1) * field]) + bias[oc];
                    }
                }
            }
            Tensor::new(vec![b, out_ch, ho, wo], y)
        }
        Layer::Relu => {
            let mut y = x.clone();
            y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            Ok(y)
        }
        Layer::Flatten => {
            let n = x.len() / b;
            x.clone().reshaped(vec![b, n])
        }
    }
}

/// Runs the network on a batch `[B, ...input_shape]`.
pub fn forward(spec: &NetworkSpec, params: &ParameterSet, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
    if input.shape().len() != spec.input_shape.len() + 1 || input.shape()[1..] != spec.input_shape[..] {
        return Err(Error::ShapeMismatch {
            expected: batched(input.shape().first().copied().unwrap_or(1), &spec.input_shape),
            got: input.shape().to_vec(),
        });
    }
    if !input.is_finite() {
        return Err(Error::Divergence("non-finite network input".into()));
    }
    let mut inputs = Vec::with_capacity(spec.layers.len());
    let mut x = input.clone();
    for (i, layer) in spec.layers.iter().enumerate() {
        let y = layer_forward(layer, i, params, &x)?;
        inputs.push(x);
        x = y;
    }
    if !x.is_finite() {
        return Err(Error::Divergence("non-finite network output".into()));
    }
    let cache = ForwardCache {
        version: params.version(),
        inputs,
        output_shape: x.shape().to_vec(),
    };
    Ok((x, cache))
}

/// Output only, no cache retained.
pub fn predict(spec: &NetworkSpec, params: &ParameterSet, input: &Tensor) -> Result<Tensor> {
    forward(spec, params, input).map(|(y, _)| y)
}

/// Accumulates parameter gradients of `sum(upstream * output)` into `params`
/// and returns the gradient with respect to the input.
pub fn backward(
    spec: &NetworkSpec,
    cache: &ForwardCache,
    params: &mut ParameterSet,
    upstream: &Tensor,
) -> Result<Tensor> {
    if cache.version != params.version() {
        return Err(Error::StaleCache);
    }
    if upstream.shape() != cache.output_shape.as_slice() {
        return Err(Error::ShapeMismatch {
            expected: cache.output_shape.clone(),
            got: upstream.shape().to_vec(),
        });
    }
    if !upstream.is_finite() {
        return Err(Error::Divergence("non-finite upstream gradient".into()));
    }
    let mut g = upstream.clone();
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let x = &cache.inputs[i];
        let b = x.rows();
        g = match *layer {
            Layer::Dense { inputs, outputs } => {
                let wi = param_index(params, &format!("{i}.weight"))?;
                let bi = param_index(params, &format!("{i}.bias"))?;
                let mut dx = vec![0.0; b * inputs];
                {
                    let w = params.param(wi).value.data();
                    for r in 0..b {
                        let gr = g.row(r);
                        let dxr = &mut dx[r * inputs..(r + 1) * inputs];
                        for o in 0..outputs {
                            if gr[o] != 0.0 {
                                axpy(gr[o], &w[o * inputs..(o + 1) * inputs], dxr);
                            }
                        }
                    }
                }
                let dw = params.grad_mut(wi).data_mut();
                for r in 0..b {
                    let (gr, xr) = (g.row(r), x.row(r));
                    for o in 0..outputs {
                        if gr[o] != 0.0 {
                            axpy(gr[o], xr, &mut dw[o * inputs..(o + 1) * inputs]);
                        }
                    }
                }
                let db = params.grad_mut(bi).data_mut();
                for r in 0..b {
                    for (d, v) in db.iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                Tensor::new(x.shape().to_vec(), dx)?
            }
            Layer::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
            } => {
                let (h, wd) = (x.shape()[2], x.shape()[3]);
                let (ho, wo) = ((h - kernel) / stride + 1, (wd - kernel) / stride + 1);
                let field = in_ch * kernel * kernel;
                let wi = param_index(params, &format!("{i}.weight"))?;
                let bi = param_index(params, &format!("{i}.bias"))?;
                let w = params.param(wi).value.data();
                let mut dw = vec![0.0; out_ch * field];
                let mut db = vec![0.0; out_ch];
                let mut dx = vec![0.0; x.len()];
                let mut col = Vec::new();
                let mut dcol = vec![0.0; ho * wo * field];
                let plane = in_ch * h * wd;
                for r in 0..b {
                    im2col(x.row(r), in_ch, h, wd, kernel, stride, &mut col);
                    dcol.iter_mut().for_each(|v| *v = 0.0);
                    let gr = g.row(r);
                    for oc in 0..out_ch {
                        let wk = &w[oc * field..(oc + 1) * field];
                        for p in 0..ho * wo {
                            let gv = gr[oc * ho * wo + p];
                            if gv == 0.0 {
                                continue;
                            }
                            db[oc] += gv;
                            axpy(gv, &col[p * field..(p + 1) * field], &mut dw[oc * field..(oc + 1) * field]);
                            axpy(gv, wk, &mut dcol[p * field..(p + 1) * field]);
                        }
                    }
                    // col2im
                    let dxr = &mut dx[r * plane..(r + 1) * plane];
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let p = oy * wo + ox;
                            let mut j = p * field;
                            for ch in 0..in_ch {
                                for ky in 0..kernel {
                                    let row = ch * h * wd + (oy * stride + ky) * wd + ox * stride;
                                    for kx in 0..kernel {
                                        dxr[row + kx] += dcol[j];
                                        j += 1;
                                    }
                                }
                            }
                        }
                    }
                }
                axpy(1.0, &dw, params.grad_mut(wi).data_mut());
                axpy(1.0, &db, params.grad_mut(bi).data_mut());
                Tensor::new(x.shape().to_vec(), dx)?
            }
            Layer::Relu => {
                let mut dx = g;
                for (d, v) in dx.data_mut().iter_mut().zip(x.data()) {
                    if *v <= 0.0 {
                        *d = 0.0;
                    }
                }
                dx
            }
            Layer::Flatten => g.reshaped(x.shape().to_vec())?,
        };
    }
    if params.params().iter().any(|p| !p.grad.is_finite()) {
        return Err(Error::Divergence("non-finite parameter gradient".into()));
    }
    Ok(g)
}
