pub mod dqn;
pub mod env;
pub mod error;
pub mod geom;
pub mod harness;
pub mod neural;
pub mod observe;
pub mod ppo;
pub mod rng;

pub use error::{Error, Result};
