//! Symmetric fake quantization and calibration.

pub mod affine;
pub mod params;
pub mod peg;
pub mod policy;
pub mod resolution;

pub use affine::{dequantize, fake_quant, quantize_affine, QuantizedTensor};
pub use params::{percentile_abs, scale_minmax, scale_percentile, Bits, QuantParams, DEGENERATE_SCALE};
pub use peg::{channel_max_abs, peg_fake_quant, peg_partition, GroupScheme};
pub use policy::{apply_policy, Directive, PrecisionPolicy};
pub use resolution::{resolution_factor, Resolution};
