use crate::error::{Error, Result};
use crate::par;
use crate::quant::params::percentile_abs;
use crate::tensor::ActivationTensor;

/// Values with `|x|` at or below this percentile count as bulk.
pub const BULK_PERCENTILE: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub rho: f64,
    pub degenerate: bool,
}

/// `rho = sigma_bulk / max|x|`, where `sigma_bulk` is the population
/// standard deviation of values with `|x| <= percentile_99(|x|)`.
pub fn resolution_factor(t: &ActivationTensor) -> Result<Resolution> {
    let values = t.data();
    if values.len() < 2 {
        return Err(Error::TooFewValues { required: 2, actual: values.len() });
    }
    let peak = par::max_abs(values);
    let threshold = percentile_abs(values, BULK_PERCENTILE)?;
    let bulk: Vec<f64> = values.iter().copied().filter(|v| v.abs() <= threshold).collect();
    let n = bulk.len() as f64;
    let mean = par::sum_by(&bulk, |x| x) / n;
    let sigma = (par::sum_by(&bulk, |x| (x - mean) * (x - mean)) / n).sqrt();
    if peak == 0.0 || sigma == 0.0 {
        return Ok(Resolution { rho: 0.0, degenerate: true });
    }
    Ok(Resolution { rho: (sigma / peak).min(1.0), degenerate: false })
}
