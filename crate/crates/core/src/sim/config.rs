use crate::error::{Error, Result};

/// Synthetic residual stack `h_{l+1} = h_l + f_l(h_l)`.
///
/// Layer 0 holds heavy-tailed bulk noise on every channel except the
/// dominant set. Dominant channels are either *informative* (a shared
/// latent plus per-channel tail noise, mixed by `latent_corr`) or,
/// for the first `massive_count` of them, *massive* (a large signed offset
/// plus independent fluctuation). Each block multiplies dominant channels
/// by `gain` and applies a variance-preserving signed-permutation mix of
/// strength `bulk_mix` to the bulk.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStackConfig {
    pub depth: usize,
    pub width: usize,
    pub dominant: Vec<usize>,
    pub gain: f64,
    pub tail_index: f64,
    pub base_std: f64,
    pub seed: u64,
    pub samples: usize,
    /// Std of informative dominant channels at layer 0, in units of `base_std`.
    pub dominant_scale: f64,
    /// Correlation of each informative channel with the shared latent.
    pub latent_corr: f64,
    /// Tail index of the shared latent; infinity gives a Gaussian latent.
    pub latent_tail_index: f64,
    /// Informative channel `j` (counted after the massive ones) is scaled by `signal_decay^j`.
    pub signal_decay: f64,
    pub massive_count: usize,
    /// Fluctuation std of massive channels, in units of the informative std.
    pub massive_spread: f64,
    /// Offset of massive channels, in units of their fluctuation std.
    pub massive_offset: f64,
    /// Mixing strength `c` of the bulk map; 0 leaves the bulk untouched.
    pub bulk_mix: f64,
    /// Std of label noise added to the probe score.
    pub label_noise: f64,
    /// Probe-score weight of each massive channel's fluctuation.
    pub massive_label_weight: f64,
    /// Per-layer variance of injected branch errors.
    pub injected_error_variance: f64,
}

fn evenly_spaced(count: usize, width: usize) -> Vec<usize> {
    let stride = (width / count.max(1)).max(1);
    (0..count).map(|k| k * stride).collect()
}

impl ResidualStackConfig {
    /// Twelve blocks, 768 channels, 8 dominant channels growing by 1.35 per
    /// block. Used for depth profiles and error propagation.
    pub fn reference() -> Self {
        Self {
            depth: 12,
            width: 768,
            dominant: evenly_spaced(8, 768),
            gain: 1.35,
            tail_index: 3.5,
            base_std: 1.0,
            seed: 1000,
            samples: 4096,
            dominant_scale: 6.0,
            latent_corr: 0.9,
            latent_tail_index: 3.5,
            signal_decay: 1.0,
            massive_count: 0,
            massive_spread: 1.0,
            massive_offset: 0.0,
            bulk_mix: 0.0,
            label_noise: 0.5,
            massive_label_weight: 0.25,
            injected_error_variance: 1e-4,
        }
    }

    /// Collapse-experiment config: two massive offset channels and six
    /// informative channels carry the label signal, with gain 2 per block.
    pub fn dominant_signal() -> Self {
        Self {
            gain: 2.0,
            samples: 16384,
            dominant_scale: 20.0,
            latent_corr: 0.95,
            latent_tail_index: f64::INFINITY,
            signal_decay: 0.7,
            massive_count: 2,
            massive_spread: 40.0,
            massive_offset: 60.0,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.depth < 1 {
            return bad("depth must be at least 1".into());
        }
        if self.width < 1 || self.samples < 1 {
            return bad("width and samples must be at least 1".into());
        }
        if self.dominant.len() > self.width {
            return bad("more dominant channels than channels".into());
        }
        let mut sorted = self.dominant.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.dominant.len() {
            return bad("dominant channels must be distinct".into());
        }
        if let Some(&c) = self.dominant.iter().find(|&&c| c >= self.width) {
            return bad(format!("dominant channel {c} out of range"));
        }
        if !(self.gain >= 1.0 && self.gain.is_finite()) {
            return bad(format!("gain must be >= 1, got {}", self.gain));
        }
        if !(self.tail_index > 0.0 && self.latent_tail_index > 0.0) {
            return bad("tail indices must be positive".into());
        }
        for (name, v) in [
            ("base_std", self.base_std),
            ("dominant_scale", self.dominant_scale),
            ("signal_decay", self.signal_decay),
            ("massive_spread", self.massive_spread),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("massive_offset", self.massive_offset),
            ("bulk_mix", self.bulk_mix),
            ("label_noise", self.label_noise),
            ("massive_label_weight", self.massive_label_weight),
            ("injected_error_variance", self.injected_error_variance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.latent_corr) {
            return bad(format!("latent_corr must lie in [0, 1], got {}", self.latent_corr));
        }
        if self.massive_count > self.dominant.len() {
            return bad("massive_count exceeds the dominant set".into());
        }
        Ok(())
    }
}

impl Default for ResidualStackConfig {
    fn default() -> Self {
        Self::reference()
    }
}
