use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::par;
use crate::quant::affine::{fake_quant_columns_in_place, fake_quant_in_place};
use crate::quant::params::{percentile_abs_with, Bits, QuantParams};
use crate::quant::peg::peg_calibrate;
use crate::tensor::ActivationTensor;

/// What to do with one layer's activations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Directive {
    MinMax,
    Percentile(f64),
    Peg(usize),
    /// Keep full precision.
    Retain,
}

impl Directive {
    /// Fake-quantizes `t` according to the directive.
    ///
    /// A zero percentile threshold falls back to the degenerate scale rather
    /// than failing, so a policy is total over finite inputs. Results match
    /// the standalone `fake_quant` / `peg_fake_quant` calls bit for bit.
    pub fn apply(&self, t: &ActivationTensor, bits: Bits) -> Result<ActivationTensor> {
        let mut data = t.data().to_vec();
        self.apply_in_place(&mut data, t.cols(), bits, &mut Vec::new())?;
        Ok(ActivationTensor::from_parts_unchecked(t.rows(), t.cols(), data))
    }

    /// `apply` on a row-major buffer of `cols` columns. `scratch` is reused
    /// for percentile selection.
    pub fn apply_in_place(&self, data: &mut [f64], cols: usize, bits: Bits, scratch: &mut Vec<f64>) -> Result<()> {
        match *self {
            Directive::Retain => {}
            Directive::MinMax => fake_quant_in_place(data, &QuantParams::from_max_abs(par::max_abs(data), bits)),
            Directive::Percentile(p) => {
                let threshold = percentile_abs_with(data, p, scratch)?;
                // A zero threshold takes the degenerate scale.
                fake_quant_in_place(data, &QuantParams::from_max_abs(threshold, bits));
            }
            Directive::Peg(k) => {
                let (_, channel_scale) = peg_calibrate(data, cols, k, bits)?;
                fake_quant_columns_in_place(data, &channel_scale, bits.qmax());
            }
        }
        Ok(())
    }

    /// Short machine-friendly label, e.g. `minmax`, `percentile_99.9`, `peg_k4`.
    pub fn label(&self) -> String {
        match *self {
            Directive::MinMax => "minmax".into(),
            Directive::Percentile(p) => format!("percentile_{p:?}"),
            Directive::Peg(k) => format!("peg_k{k}"),
            Directive::Retain => "retain".into(),
        }
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Directive::MinMax => f.write_str("minmax"),
            Directive::Percentile(p) => write!(f, "percentile:{p}"),
            Directive::Peg(k) => write!(f, "peg:{k}"),
            Directive::Retain => f.write_str("retain"),
        }
    }
}

/// Parses `minmax`, `retain`, `percentile:<p>` or `peg:<k>`.
impl FromStr for Directive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unrecognized directive {s:?}"));
        match s.trim().split_once(':') {
            None => match s.trim() {
                "minmax" => Ok(Directive::MinMax),
                "retain" => Ok(Directive::Retain),
                _ => Err(bad()),
            },
            Some(("percentile", p)) => {
                let p: f64 = p.parse().map_err(|_| bad())?;
                if !(p > 0.0 && p <= 100.0) {
                    return Err(Error::InvalidPercentile(p));
                }
                Ok(Directive::Percentile(p))
            }
            Some(("peg", k)) => {
                let k: usize = k.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(Error::InvalidK { k, channels: 0 });
                }
                Ok(Directive::Peg(k))
            }
            Some(_) => Err(bad()),
        }
    }
}

/// One directive per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionPolicy {
    directives: Vec<Directive>,
}

impl PrecisionPolicy {
    pub fn new(directives: Vec<Directive>) -> Self {
        Self { directives }
    }

    pub fn uniform(directive: Directive, depth: usize) -> Self {
        Self { directives: vec![directive; depth] }
    }

    pub fn directives(&self) -> &[Directive] {
        &self.directives
    }

    pub fn len(&self) -> usize {
        self.directives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directives.is_empty()
    }

    pub fn check_len(&self, depth: usize) -> Result<()> {
        if self.directives.len() != depth {
            return Err(Error::PolicyLengthMismatch { expected: depth, actual: self.directives.len() });
        }
        Ok(())
    }
}

/// Applies `policy[i]` to `layers[i]`. Layers are processed in parallel;
/// the output order matches the input.
pub fn apply_policy(layers: &[ActivationTensor], policy: &PrecisionPolicy, bits: Bits) -> Result<Vec<ActivationTensor>> {
    policy.check_len(layers.len())?;
    let pairs: Vec<(&ActivationTensor, Directive)> = layers.iter().zip(policy.directives.iter().copied()).collect();
    par::map_slice(&pairs, |(t, d)| d.apply(t, bits)).into_iter().collect()
}
