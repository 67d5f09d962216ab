use crate::error::{Error, Result};
use crate::par;
use crate::tensor::ActivationTensor;

/// Scale used when a tensor is entirely zero.
pub const DEGENERATE_SCALE: f64 = 1.0 / (1u64 << 24) as f64;

/// Bit width in `[2, 16]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bits(u32);

impl Bits {
    pub const INT8: Bits = Bits(8);

    pub fn new(bits: u32) -> Result<Self> {
        if (2..=16).contains(&bits) {
            Ok(Bits(bits))
        } else {
            Err(Error::InvalidBits(bits))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Largest representable magnitude, `2^(b-1) - 1`.
    pub fn qmax(self) -> i32 {
        (1i32 << (self.0 - 1)) - 1
    }
}

impl Default for Bits {
    fn default() -> Self {
        Bits::INT8
    }
}

/// Symmetric quantization parameters. The zero point is always 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    scale: f64,
    bits: Bits,
    degenerate: bool,
}

impl QuantParams {
    pub fn new(scale: f64, bits: Bits) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Precondition(format!("scale must be positive and finite, got {scale}")));
        }
        Ok(Self { scale, bits, degenerate: false })
    }

    /// Params for a peak magnitude `max_abs`: `max_abs / qmax`, or the
    /// degenerate scale when `max_abs` is zero.
    pub fn from_max_abs(max_abs: f64, bits: Bits) -> Self {
        if max_abs > 0.0 {
            Self { scale: max_abs / bits.qmax() as f64, bits, degenerate: false }
        } else {
            Self { scale: DEGENERATE_SCALE, bits, degenerate: true }
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn zero_point(&self) -> i32 {
        0
    }

    pub fn bits(&self) -> Bits {
        self.bits
    }

    pub fn qmax(&self) -> i32 {
        self.bits.qmax()
    }

    /// True when the scale fell back to `DEGENERATE_SCALE`.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Largest magnitude that quantizes without clipping.
    pub fn clip_threshold(&self) -> f64 {
        self.scale * self.qmax() as f64
    }
}

/// Min-max calibration: `max|x| / (2^(b-1) - 1)`.
pub fn scale_minmax(t: &ActivationTensor, bits: Bits) -> QuantParams {
    QuantParams::from_max_abs(par::max_abs(t.data()), bits)
}

/// Linear-interpolation percentile of `|x|` at rank `(p/100)(n-1)`.
///
/// Uses selection rather than a full sort. `p = 100` returns the maximum
/// exactly.
pub fn percentile_abs(values: &[f64], p: f64) -> Result<f64> {
    percentile_abs_with(values, p, &mut Vec::new())
}

/// `percentile_abs` using `scratch` as the selection buffer.
pub fn percentile_abs_with(values: &[f64], p: f64, scratch: &mut Vec<f64>) -> Result<f64> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidPercentile(p));
    }
    if values.is_empty() {
        return Err(Error::TooFewValues { required: 1, actual: 0 });
    }
    let n = values.len();
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = (rank.floor() as usize).min(n - 1);
    let frac = rank - lo as f64;
    scratch.clear();
    scratch.extend(values.iter().map(|v| v.abs()));
    let (_, &mut v_lo, upper) = scratch.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return Ok(v_lo);
    }
    let v_hi = upper.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(v_lo + frac * (v_hi - v_lo))
}

/// Percentile calibration: `percentile_p(|x|) / (2^(b-1) - 1)`.
///
/// Returns `DegenerateScale` when the percentile is zero so the caller can
/// choose a fallback.
pub fn scale_percentile(t: &ActivationTensor, p: f64, bits: Bits) -> Result<QuantParams> {
    let threshold = percentile_abs(t.data(), p)?;
    if threshold == 0.0 {
        return Err(Error::DegenerateScale);
    }
    Ok(QuantParams::from_max_abs(threshold, bits))
}
