//! Run configuration: a flat JSON document whose fields can be overridden
//! from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use quantlab_core::quant::{Bits, Directive, PrecisionPolicy};
use quantlab_core::sim::ResidualStackConfig;
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_SEED: u64 = 1000;
pub const DEFAULT_PERCENTILES: [f64; 4] = [99.0, 99.5, 99.9, 99.99];
pub const DEFAULT_GROUP_COUNTS: [usize; 3] = [2, 3, 4];

/// Optional replacements for fields of a stack preset.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackOverrides {
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub dominant: Option<Vec<usize>>,
    pub gain: Option<f64>,
    pub tail_index: Option<f64>,
    pub base_std: Option<f64>,
    pub samples: Option<usize>,
    pub dominant_scale: Option<f64>,
    pub latent_corr: Option<f64>,
    pub latent_tail_index: Option<f64>,
    pub signal_decay: Option<f64>,
    pub massive_count: Option<usize>,
    pub massive_spread: Option<f64>,
    pub massive_offset: Option<f64>,
    pub bulk_mix: Option<f64>,
    pub label_noise: Option<f64>,
    pub massive_label_weight: Option<f64>,
    pub injected_error_variance: Option<f64>,
}

macro_rules! override_fields {
    ($src:expr, $dst:expr, $($f:ident),*) => {
        $(if let Some(v) = $src.$f.clone() { $dst.$f = v; })*
    };
}

impl StackOverrides {
    pub fn apply(&self, mut cfg: ResidualStackConfig, seed: u64) -> ResidualStackConfig {
        override_fields!(
            self, cfg, depth, width, dominant, gain, tail_index, base_std, samples, dominant_scale,
            latent_corr, latent_tail_index, signal_decay, massive_count, massive_spread, massive_offset,
            bulk_mix, label_noise, massive_label_weight, injected_error_variance
        );
        cfg.seed = seed;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub bits: u32,
    pub percentile_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    /// Overrides for the reference stack (profiles, propagation).
    pub stack: StackOverrides,
    /// Overrides for the dominant-signal stack (collapse experiment).
    pub collapse_stack: StackOverrides,
    pub dumps: Vec<PathBuf>,
    pub out_dir: PathBuf,
    /// Per-layer directives for `simulate`, e.g. `["retain", "peg:4", ...]`.
    /// Defaults to min-max on every layer.
    pub policy: Option<Vec<String>>,
    pub microbench_iterations: usize,
    pub microbench_warmup: usize,
    /// Rows of the synthetic tensor timed by the microbenchmark.
    pub microbench_rows: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            bits: 8,
            percentile_grid: DEFAULT_PERCENTILES.to_vec(),
            k_grid: DEFAULT_GROUP_COUNTS.to_vec(),
            stack: StackOverrides::default(),
            collapse_stack: StackOverrides::default(),
            dumps: Vec::new(),
            out_dir: PathBuf::from("results"),
            policy: None,
            microbench_iterations: 200,
            microbench_warmup: 100,
            microbench_rows: 64,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.bits()?;
        if self.percentile_grid.is_empty() || self.k_grid.is_empty() {
            return Err(CliError::Usage("percentile and K grids must be non-empty".into()));
        }
        if let Some(p) = self.percentile_grid.iter().find(|&&p| !(p > 0.0 && p <= 100.0)) {
            return Err(CliError::Usage(format!("percentile {p} outside (0, 100]")));
        }
        if self.k_grid.contains(&0) {
            return Err(CliError::Usage("group counts must be at least 1".into()));
        }
        self.reference_stack().validate()?;
        self.collapse_stack().validate()?;
        Ok(())
    }

    pub fn bits(&self) -> Result<Bits, CliError> {
        Bits::new(self.bits).map_err(CliError::from)
    }

    pub fn reference_stack(&self) -> ResidualStackConfig {
        self.stack.apply(ResidualStackConfig::reference(), self.seed)
    }

    pub fn collapse_stack(&self) -> ResidualStackConfig {
        self.collapse_stack.apply(ResidualStackConfig::dominant_signal(), self.seed)
    }

    /// The `simulate` policy, checked against the reference depth.
    pub fn simulate_policy(&self) -> Result<PrecisionPolicy, CliError> {
        let depth = self.reference_stack().depth;
        let policy = match &self.policy {
            None => PrecisionPolicy::uniform(Directive::MinMax, depth),
            Some(list) => PrecisionPolicy::new(
                list.iter()
                    .map(|s| s.parse::<Directive>())
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        policy.check_len(depth)?;
        Ok(policy)
    }
}
