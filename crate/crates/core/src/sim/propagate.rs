//! Error propagation through the residual stack.
//!
//! The quantized recursion is `ĥ_{l+1} = ĥ_l + q_l(f_l(h_l))`, with every
//! branch evaluated on the clean input, so the accumulated error is the
//! sum of branch errors: `ε_{l+1} = ε_l + ε_{f_l}`.

use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::par;
use crate::quant::{Bits, PrecisionPolicy};
use crate::sim::config::ResidualStackConfig;
use crate::sim::sample::{purpose, stream};
use crate::sim::stack::{Stack, SAMPLE_CHUNK_ROWS};
use crate::stats::{layer_stats, LayerStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    /// Branch outputs are fake-quantized per the policy.
    FakeQuant,
    /// Branch outputs receive i.i.d. zero-mean Gaussian errors of variance
    /// `cfg.injected_error_variance`.
    Injected,
}

/// Block `l`'s contribution, recorded after the block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    /// Mean and variance of the accumulated error `ε_{l+1} = h_{l+1} - ĥ_{l+1}`.
    pub error_mean: f64,
    pub error_variance: f64,
    /// Mean and variance of this block's own branch error.
    pub branch_error_mean: f64,
    pub branch_error_variance: f64,
    /// Stats of the clean activations `h_{l+1}`.
    pub stats: LayerStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub mode: ErrorMode,
    pub layers: Vec<LayerRecord>,
}

impl PropagationResult {
    pub fn final_error_mean(&self) -> f64 {
        self.layers.last().map_or(0.0, |r| r.error_mean)
    }

    pub fn final_error_variance(&self) -> f64 {
        self.layers.last().map_or(0.0, |r| r.error_variance)
    }

    /// Sum of per-branch error variances.
    pub fn summed_branch_variance(&self) -> f64 {
        self.layers.iter().map(|r| r.branch_error_variance).sum()
    }

    /// `Var[ε_L] / Σ_l Var[ε_{f_l}]`; independence predicts 1. Zero when
    /// no branch error was introduced.
    pub fn variance_ratio(&self) -> f64 {
        let denom = self.summed_branch_variance();
        if denom == 0.0 {
            0.0
        } else {
            self.final_error_variance() / denom
        }
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = par::sum_by(x, |v| v) / n;
    let var = par::sum_by(x, |v| (v - mean) * (v - mean)) / n;
    (mean, var)
}

fn injected_errors(cfg: &ResidualStackConfig, layer: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, cfg.injected_error_variance.sqrt()).expect("variance validated");
    let mut e = vec![0.0f64; cfg.samples * cfg.width];
    par::for_each_chunk_mut(&mut e, SAMPLE_CHUNK_ROWS * cfg.width, |i, chunk| {
        let mut rng = stream(cfg.seed, purpose::indexed(purpose::INJECT, layer as u64, i as u64));
        for v in chunk.iter_mut() {
            *v = normal.sample(&mut rng);
        }
    });
    e
}

/// Runs the clean and perturbed recursions side by side.
///
/// In `Injected` mode the policy is only checked for length.
pub fn propagate(cfg: &ResidualStackConfig, policy: &PrecisionPolicy, bits: Bits, mode: ErrorMode) -> Result<PropagationResult> {
    policy.check_len(cfg.depth)?;
    let stack = Stack::new(cfg)?;
    let mut h = stack.initial().h0;
    let mut eps = vec![0.0f64; h.len()];
    let mut layers = Vec::with_capacity(cfg.depth);
    for (l, directive) in policy.directives().iter().enumerate() {
        let f = stack.branch(l, &h);
        let branch_err: Vec<f64> = match mode {
            ErrorMode::FakeQuant => {
                let fq = directive.apply(&f, bits)?;
                f.data().iter().zip(fq.data()).map(|(a, b)| a - b).collect()
            }
            // ĥ gets f + e, so the error h - ĥ picks up -e.
            ErrorMode::Injected => injected_errors(cfg, l).into_iter().map(|e| -e).collect(),
        };
        for (acc, e) in eps.iter_mut().zip(&branch_err) {
            *acc += e;
        }
        h = h.add_consuming(f);
        let (branch_error_mean, branch_error_variance) = mean_var(&branch_err);
        let (error_mean, error_variance) = mean_var(&eps);
        layers.push(LayerRecord {
            error_mean,
            error_variance,
            branch_error_mean,
            branch_error_variance,
            stats: layer_stats(&h),
        });
    }
    Ok(PropagationResult { mode, layers })
}

/// Fake-quant propagation (structured, correlated errors).
pub fn propagate_errors(cfg: &ResidualStackConfig, policy: &PrecisionPolicy, bits: Bits) -> Result<PropagationResult> {
    propagate(cfg, policy, bits, ErrorMode::FakeQuant)
}

/// Injected i.i.d. errors; the variance ratio should be close to 1.
pub fn propagate_injected(cfg: &ResidualStackConfig) -> Result<PropagationResult> {
    propagate(cfg, &PrecisionPolicy::uniform(crate::quant::Directive::Retain, cfg.depth), Bits::INT8, ErrorMode::Injected)
}
