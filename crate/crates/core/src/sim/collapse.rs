//! Probe-accuracy collapse under different calibration methods.
//!
//! A binary label is drawn from a linear score over the dominant-channel
//! fluctuations plus label noise, thresholded at its median so the classes
//! are balanced. A ridge probe is fit on the first half of the rows of the
//! clean final activations and scored on the second half, once on clean
//! activations (the `fp32` reference) and once per method on activations
//! whose every block output was fake-quantized per the method's policy.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quant::{Bits, Directive, PrecisionPolicy};
use crate::sim::config::ResidualStackConfig;
use crate::sim::probe::{LinearProbe, DEFAULT_RIDGE};
use crate::sim::sample::{purpose, stream};
use crate::sim::stack::{add_assign, InitialState, Stack};
use crate::tensor::ActivationTensor;

pub const REFERENCE_LABEL: &str = "fp32";

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub label: String,
    pub policy: PrecisionPolicy,
}

impl MethodSpec {
    pub fn new(label: impl Into<String>, policy: PrecisionPolicy) -> Self {
        Self { label: label.into(), policy }
    }

    /// The same directive on every block, labelled after the directive.
    pub fn uniform(directive: Directive, depth: usize) -> Self {
        Self::new(directive.label(), PrecisionPolicy::uniform(directive, depth))
    }
}

/// Min-max, then one method per percentile, then one per PEG group count.
pub fn sweep_methods(depth: usize, percentiles: &[f64], group_counts: &[usize]) -> Vec<MethodSpec> {
    std::iter::once(Directive::MinMax)
        .chain(percentiles.iter().map(|&p| Directive::Percentile(p)))
        .chain(group_counts.iter().map(|&k| Directive::Peg(k)))
        .map(|d| MethodSpec::uniform(d, depth))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseResult {
    /// `(label, accuracy)`, with the `fp32` reference first.
    entries: Vec<(String, f64)>,
}

impl CollapseResult {
    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn reference(&self) -> f64 {
        self.entries[0].1
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|(l, _)| l == label).map(|&(_, a)| a)
    }
}

/// Probe labels: `score > median(score)`.
pub fn probe_labels(cfg: &ResidualStackConfig, init: &InitialState) -> Vec<bool> {
    let n = cfg.samples;
    let mut rng = stream(cfg.seed, purpose::LABEL);
    let mut score: Vec<f64> = (0..n)
        .map(|_| {
            let eta: f64 = StandardNormal.sample(&mut rng);
            cfg.label_noise * eta
        })
        .collect();
    for (k, signal) in init.signals.iter().enumerate() {
        let w = if k < cfg.massive_count {
            cfg.massive_label_weight
        } else {
            cfg.signal_decay.powi((k - cfg.massive_count) as i32)
        };
        for (s, &u) in score.iter_mut().zip(signal) {
            *s += w * u;
        }
    }
    let mut sorted = score.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if n.is_multiple_of(2) { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) } else { sorted[n / 2] };
    score.into_iter().map(|s| s > median).collect()
}

/// Final activations `h_L` with every block output passed through `policy`.
fn run_stack(stack: &Stack, h0: &ActivationTensor, policy: &PrecisionPolicy, bits: Bits) -> Result<ActivationTensor> {
    let mut h = h0.data().to_vec();
    let mut hq = h.clone();
    let mut f = vec![0.0f64; h.len()];
    let mut fq = vec![0.0f64; h.len()];
    let mut scratch = Vec::new();
    for (l, d) in policy.directives().iter().enumerate() {
        stack.branch_into(l, &h, &mut f);
        if *d == Directive::Retain {
            add_assign(&mut hq, &f);
        } else {
            fq.copy_from_slice(&f);
            d.apply_in_place(&mut fq, h0.cols(), bits, &mut scratch)?;
            add_assign(&mut hq, &fq);
        }
        add_assign(&mut h, &f);
    }
    Ok(ActivationTensor::from_parts_unchecked(h0.rows(), h0.cols(), hq))
}

pub fn collapse_experiment(cfg: &ResidualStackConfig, methods: &[MethodSpec], bits: Bits) -> Result<CollapseResult> {
    if methods.is_empty() {
        return Err(Error::Precondition("at least one method is required".into()));
    }
    for m in methods {
        m.policy.check_len(cfg.depth)?;
        if m.label == REFERENCE_LABEL {
            return Err(Error::InvalidConfig(format!("method label {REFERENCE_LABEL:?} is reserved")));
        }
    }
    if cfg.samples < 4 {
        return Err(Error::InsufficientRows { required: 4, actual: cfg.samples });
    }
    let stack = Stack::new(cfg)?;
    let init = stack.initial();
    let labels = probe_labels(cfg, &init);
    let half = cfg.samples / 2;
    let (train_labels, eval_labels) = labels.split_at(half);
    let targets: Vec<f64> = train_labels.iter().map(|&y| if y { 1.0 } else { -1.0 }).collect();

    let clean = run_stack(&stack, &init.h0, &PrecisionPolicy::uniform(Directive::Retain, cfg.depth), bits)?;
    let probe = LinearProbe::fit(&clean.slice_rows(0, half)?, &targets, DEFAULT_RIDGE)?;
    let evaluate = |h: &ActivationTensor| -> Result<f64> {
        Ok(probe.accuracy(&h.slice_rows(half, cfg.samples)?, eval_labels))
    };

    let mut entries = vec![(REFERENCE_LABEL.to_string(), evaluate(&clean)?)];
    drop(clean);
    // Methods run one after another: each holds several N x D buffers and
    // the per-block kernels are already parallel.
    for m in methods {
        let hq = run_stack(&stack, &init.h0, &m.policy, bits)?;
        entries.push((m.label.clone(), evaluate(&hq)?));
    }
    Ok(CollapseResult { entries })
}
