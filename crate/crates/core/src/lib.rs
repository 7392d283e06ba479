//! Model state arithmetic unlearning on tiny transformer language models.

pub mod ckpt;
pub mod harness;
pub mod lm;
pub mod metrics;
pub mod params;
pub mod synthbench;
pub mod tensor;
pub mod train;
pub mod unlearn;

pub use params::NamedParamMap;
