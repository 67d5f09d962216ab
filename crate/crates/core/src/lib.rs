//! Post-training quantization analysis: fake-quant calibration (min-max,
//! percentile, per-embedding-group), depth-wise outlier statistics, and a
//! synthetic residual-stack simulator for error propagation and probe
//! collapse experiments.

pub mod error;
pub mod par;
pub mod quant;
pub mod report;
pub mod sim;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{load_dump, load_dump_narrowed, save_dump, ActivationTensor, Dtype};
