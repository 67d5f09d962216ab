//! Depth-wise outlier statistics: per-channel variance, Pearson kurtosis
//! and top-p% channel energy. All moments are population moments
//! accumulated in f64.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::ActivationTensor;

/// Fraction of channels counted by `top1_energy`.
pub const TOP_FRACTION: f64 = 0.01;

const COL_BLOCK: usize = 64;

/// Population variance of each column (Welford update per column).
pub fn per_channel_variance(t: &ActivationTensor) -> Result<Vec<f64>> {
    if t.rows() < 2 {
        return Err(Error::InsufficientRows { required: 2, actual: t.rows() });
    }
    let cols = t.cols();
    let blocks: Vec<usize> = (0..cols).step_by(COL_BLOCK).collect();
    let parts = par::map_slice(&blocks, |&start| {
        let end = (start + COL_BLOCK).min(cols);
        let mut mean = vec![0.0f64; end - start];
        let mut m2 = vec![0.0f64; end - start];
        for r in 0..t.rows() {
            let n = (r + 1) as f64;
            for (j, &x) in t.row(r)[start..end].iter().enumerate() {
                let delta = x - mean[j];
                mean[j] += delta / n;
                m2[j] += delta * (x - mean[j]);
            }
        }
        let n = t.rows() as f64;
        m2.into_iter().map(|v| (v / n).max(0.0)).collect::<Vec<_>>()
    });
    Ok(parts.concat())
}

/// Mean over channels of the per-channel population variance.
pub fn mean_variance(t: &ActivationTensor) -> Result<f64> {
    let v = per_channel_variance(t)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Pearson (non-excess) kurtosis `m4 / m2^2` over all values.
pub fn kurtosis(t: &ActivationTensor) -> Result<f64> {
    let x = t.data();
    if x.len() < 4 {
        return Err(Error::TooFewValues { required: 4, actual: x.len() });
    }
    let n = x.len() as f64;
    let mean = par::sum_by(x, |v| v) / n;
    let (m2, m4) = par::map_chunks(x, par::REDUCE_CHUNK, |c| {
        c.iter().fold((0.0f64, 0.0f64), |(a2, a4), &v| {
            let d = v - mean;
            let d2 = d * d;
            (a2 + d2, a4 + d2 * d2)
        })
    })
    .into_iter()
    .fold((0.0, 0.0), |(a2, a4), (b2, b4)| (a2 + b2, a4 + b4));
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(m4 / (m2 * m2))
}

/// Sum of squares of each column.
pub fn channel_energy(t: &ActivationTensor) -> Vec<f64> {
    let cols = t.cols();
    let blocks: Vec<usize> = (0..cols).step_by(COL_BLOCK).collect();
    par::map_slice(&blocks, |&start| {
        let end = (start + COL_BLOCK).min(cols);
        let mut e = vec![0.0f64; end - start];
        for r in 0..t.rows() {
            for (acc, &x) in e.iter_mut().zip(&t.row(r)[start..end]) {
                *acc += x * x;
            }
        }
        e
    })
    .concat()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyShare {
    pub value: f64,
    /// Set when total energy is zero (value is then 0).
    pub degenerate: bool,
}

/// Share of total energy held by the `ceil(p_fraction * D)` highest-energy channels.
pub fn top_p_energy(t: &ActivationTensor, p_fraction: f64) -> Result<EnergyShare> {
    if !(p_fraction > 0.0 && p_fraction < 1.0) {
        return Err(Error::InvalidFraction(p_fraction));
    }
    let energy = channel_energy(t);
    let k = ((p_fraction * energy.len() as f64).ceil() as usize).clamp(1, energy.len());
    let total: f64 = energy.iter().sum();
    if total == 0.0 {
        return Ok(EnergyShare { value: 0.0, degenerate: true });
    }
    let mut sorted = energy;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top: f64 = sorted[..k].iter().sum();
    Ok(EnergyShare { value: (top / total).clamp(0.0, 1.0), degenerate: false })
}

/// Per-layer summary. A field is `None` when its statistic is undefined
/// for the layer (too few rows, zero variance, zero energy).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LayerStats {
    pub mean_variance: Option<f64>,
    pub kurtosis: Option<f64>,
    pub top1_energy: Option<f64>,
}

impl LayerStats {
    pub fn is_degenerate(&self) -> bool {
        self.mean_variance.is_none() || self.kurtosis.is_none() || self.top1_energy.is_none()
    }
}

pub fn layer_stats(t: &ActivationTensor) -> LayerStats {
    LayerStats {
        mean_variance: mean_variance(t).ok(),
        kurtosis: kurtosis(t).ok(),
        top1_energy: top_p_energy(t, TOP_FRACTION).ok().filter(|e| !e.degenerate).map(|e| e.value),
    }
}

/// Ordered `(label, stats)` rows with unique labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DepthProfile {
    entries: Vec<(String, LayerStats)>,
}

impl DepthProfile {
    pub fn entries(&self) -> &[(String, LayerStats)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }
}

/// Stats for each layer, in input order. Layers are evaluated in parallel;
/// each layer's reductions use a fixed order so values match a serial run.
pub fn depth_profile(layers: &[(String, ActivationTensor)]) -> Result<DepthProfile> {
    let mut seen = HashSet::new();
    for (label, _) in layers {
        if !seen.insert(label.as_str()) {
            return Err(Error::DuplicateLabel(label.clone()));
        }
    }
    let stats = par::map_slice(layers, |(_, t)| layer_stats(t));
    Ok(DepthProfile {
        entries: layers.iter().map(|(l, _)| l.clone()).zip(stats).collect(),
    })
}
