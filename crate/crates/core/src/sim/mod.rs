//! Synthetic residual stacks with heavy-tailed bulk and dominant channels.

pub mod collapse;
pub mod config;
pub mod probe;
pub mod propagate;
pub mod sample;
pub mod stack;

pub use collapse::{collapse_experiment, sweep_methods, CollapseResult, MethodSpec, REFERENCE_LABEL};
pub use config::ResidualStackConfig;
pub use probe::LinearProbe;
pub use propagate::{propagate, propagate_errors, propagate_injected, ErrorMode, LayerRecord, PropagationResult};
pub use sample::SymmetricPareto;
pub use stack::{generate_layer, generate_stack, InitialState, Stack};
