//! Small dense/convolutional network engine with hand-written
//! backpropagation, SGD/RMSProp/Adam, and finite-difference checking.
//! Everything is f64.

mod blob;
mod gradcheck;
mod network;
mod optim;
mod params;
mod spec;
mod tensor;

pub use blob::{deserialize_params, fnv1a, serialize_params, serialize_params_v1, DecodedParams, VERSION as BLOB_VERSION};
pub use gradcheck::{
    analytic_gradients, grad_check, max_relative_error, numeric_input_gradients, numeric_param_gradients,
    quadratic_loss, LossFixture,
};
pub use network::{backward, forward, predict, ForwardCache};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState, StepStats};
pub use params::{init_params, Param, ParameterSet};
pub use spec::{Layer, NetworkSpec};
pub use tensor::Tensor;
