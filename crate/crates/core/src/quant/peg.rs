//! Per-embedding-group quantization with magnitude-sorted, round-robin
//! channel assignment.

use crate::error::{Error, Result};
use crate::par;
use crate::quant::affine::fake_quant_columns_in_place;
use crate::quant::params::{Bits, QuantParams};
use crate::tensor::ActivationTensor;

/// Channel permutation, group boundaries and (after calibration) per-group params.
///
/// `permutation[j]` is the original channel placed at permuted position `j`.
/// Group `g` covers permuted positions `boundaries[g]..boundaries[g + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScheme {
    permutation: Vec<usize>,
    boundaries: Vec<usize>,
    group_params: Vec<QuantParams>,
}

impl GroupScheme {
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn inverse_permutation(&self) -> Vec<usize> {
        let mut inv = vec![0; self.permutation.len()];
        for (pos, &ch) in self.permutation.iter().enumerate() {
            inv[ch] = pos;
        }
        inv
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn group_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Original channel indices of group `g`, in permuted order.
    pub fn group(&self, g: usize) -> &[usize] {
        &self.permutation[self.boundaries[g]..self.boundaries[g + 1]]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Empty until the scheme has been calibrated by `peg_fake_quant`.
    pub fn group_params(&self) -> &[QuantParams] {
        &self.group_params
    }
}

/// Per-channel `max|x|` over rows.
pub fn channel_max_abs(t: &ActivationTensor) -> Vec<f64> {
    column_max_abs(t.data(), t.cols())
}

pub(crate) fn column_max_abs(data: &[f64], cols: usize) -> Vec<f64> {
    let rows = data.len() / cols;
    let rows_per_chunk = (1 << 15) / cols + 1;
    let partials = par::map_chunks(data, rows_per_chunk * cols, |chunk| {
        let mut m = vec![0.0f64; cols];
        for row in chunk.chunks(cols) {
            for (acc, &v) in m.iter_mut().zip(row) {
                *acc = acc.max(v.abs());
            }
        }
        m
    });
    debug_assert!(rows == 0 || !partials.is_empty());
    partials.into_iter().fold(vec![0.0f64; cols], |mut acc, m| {
        acc.iter_mut().zip(m).for_each(|(a, v)| *a = a.max(v));
        acc
    })
}

/// Sorts channels by `stats` descending (ties by ascending index) and deals
/// them round-robin into `k` groups. Within a group, channels keep ascending
/// original index order, so `k = 1` is the identity permutation.
pub fn peg_partition(stats: &[f64], k: usize) -> Result<GroupScheme> {
    let d = stats.len();
    if k < 1 || k > d {
        return Err(Error::InvalidK { k, channels: d });
    }
    let mut ranked: Vec<usize> = (0..d).collect();
    ranked.sort_by(|&a, &b| stats[b].total_cmp(&stats[a]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = vec![Vec::with_capacity(d / k + 1); k];
    for (rank, &ch) in ranked.iter().enumerate() {
        groups[rank % k].push(ch);
    }
    let mut permutation = Vec::with_capacity(d);
    let mut boundaries = Vec::with_capacity(k + 1);
    boundaries.push(0);
    for mut g in groups {
        g.sort_unstable();
        permutation.extend(g);
        boundaries.push(permutation.len());
    }
    Ok(GroupScheme { permutation, boundaries, group_params: Vec::new() })
}

/// Calibrates a PEG scheme on a row-major buffer and returns it with the
/// scale assigned to each original channel.
pub(crate) fn peg_calibrate(data: &[f64], cols: usize, k: usize, bits: Bits) -> Result<(GroupScheme, Vec<f64>)> {
    let stats = column_max_abs(data, cols);
    let mut scheme = peg_partition(&stats, k)?;
    let group_params: Vec<QuantParams> = (0..scheme.group_count())
        .map(|g| {
            let peak = scheme.group(g).iter().fold(0.0f64, |m, &ch| m.max(stats[ch]));
            QuantParams::from_max_abs(peak, bits)
        })
        .collect();
    let mut channel_scale = vec![0.0; cols];
    for (g, p) in group_params.iter().enumerate() {
        for &ch in scheme.group(g) {
            channel_scale[ch] = p.scale();
        }
    }
    scheme.group_params = group_params;
    Ok((scheme, channel_scale))
}

/// Min-max fake quantization with one scale per PEG group.
///
/// Quantizing channel `c` with its group's scale in place is the same as
/// permuting, quantizing group blocks and inverting the permutation, so the
/// output keeps the input channel order. With `k = 1` it is bitwise
/// identical to `fake_quant(t, &scale_minmax(t, bits))`.
pub fn peg_fake_quant(t: &ActivationTensor, k: usize, bits: Bits) -> Result<(ActivationTensor, GroupScheme)> {
    let (scheme, channel_scale) = peg_calibrate(t.data(), t.cols(), k, bits)?;
    let mut out = t.data().to_vec();
    fake_quant_columns_in_place(&mut out, &channel_scale, bits.qmax());
    Ok((ActivationTensor::from_parts_unchecked(t.rows(), t.cols(), out), scheme))
}
