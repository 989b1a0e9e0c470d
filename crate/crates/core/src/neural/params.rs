use serde::{Deserialize, Serialize};

use super::spec::{Layer, NetworkSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameters with gradient buffers of the same shapes.
///
/// `version` changes whenever values are mutated through this type; forward
/// caches record it so that backward can refuse a stale cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    params: Vec<Param>,
    version: u64,
}

impl ParameterSet {
    pub fn new(named: Vec<(String, Tensor)>) -> Result<Self> {
        let mut params: Vec<Param> = Vec::with_capacity(named.len());
        for (name, value) in named {
            if params.iter().any(|p| p.name == name) {
                return Err(Error::InvalidParams(format!("duplicate parameter name {name}")));
            }
            if !value.is_finite() {
                return Err(Error::Divergence(format!("non-finite value in {name}")));
            }
            let grad = Tensor::zeros(value.shape());
            params.push(Param { name, value, grad });
        }
        Ok(Self { params, version: 0 })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub(crate) fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub(crate) fn param(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub(crate) fn grad_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.params[i].grad
    }

    /// Mutable access to a value; invalidates outstanding forward caches.
    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.version += 1;
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    /// Mutable access to all params; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [Param] {
        self.version += 1;
        &mut self.params
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().map(|p| p.grad.sum_squares()).sum::<f64>().sqrt()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copies values from `other` (same names and shapes), e.g. a target sync.
    pub fn copy_values_from(&mut self, other: &ParameterSet) -> Result<()> {
        if other.params.len() != self.params.len() {
            return Err(Error::InvalidParams("parameter sets differ in length".into()));
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::ShapeMismatch {
                    expected: a.value.shape().to_vec(),
                    got: b.value.shape().to_vec(),
                });
            }
            a.value = b.value.clone();
        }
        self.version += 1;
        Ok(())
    }

    /// Values only, flattened in parameter order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.grad.data().iter().copied()).collect()
    }
}

/// He-uniform (bound sqrt(6 / fan_in)) for layers directly followed by relu,
/// Xavier-uniform (bound sqrt(6 / (fan_in + fan_out))) otherwise, zero biases.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<ParameterSet> {
    spec.validate()?;
    let mut rng = SplitMix64::derive(seed, 0x1a17);
    let mut named = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        let Some((wshape, bshape)) = layer.param_shapes() else {
            continue;
        };
        let (fan_in, fan_out) = layer.fans().unwrap();
        let bound = if spec.layers.get(i + 1) == Some(&Layer::Relu) {
            (6.0 / fan_in as f64).sqrt()
        } else {
            (6.0 / (fan_in + fan_out) as f64).sqrt()
        };
        let n: usize = wshape.iter().product();
        let w: Vec<f64> = (0..n).map(|_| rng.uniform(-bound, bound)).collect();
        named.push((format!("{i}.weight"), Tensor::new(wshape, w)?));
        named.push((format!("{i}.bias"), Tensor::zeros(&bshape)));
    }
    ParameterSet::new(named)
}
