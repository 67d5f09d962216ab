use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Distribution;

use crate::error::Result;
use crate::par;
use crate::sim::config::ResidualStackConfig;
use crate::sim::sample::{purpose, stream, SymmetricPareto};
use crate::tensor::ActivationTensor;

/// Rows per independently seeded chunk of bulk noise.
pub(crate) const SAMPLE_CHUNK_ROWS: usize = 256;

/// Layer-0 activations together with the per-channel fluctuations that the
/// dominant channels were built from.
#[derive(Debug, Clone)]
pub struct InitialState {
    pub h0: ActivationTensor,
    /// Unit-scale fluctuation of each dominant channel, in `cfg.dominant` order.
    pub signals: Vec<Vec<f64>>,
}

/// Precomputed block maps for one config.
#[derive(Debug, Clone)]
pub struct Stack {
    cfg: ResidualStackConfig,
    bulk: Vec<usize>,
    /// Per layer: for each bulk position, the source bulk channel and sign.
    mixes: Vec<Vec<(usize, f64)>>,
    mix_self: f64,
    mix_other: f64,
}

impl Stack {
    pub fn new(cfg: &ResidualStackConfig) -> Result<Self> {
        cfg.validate()?;
        let mut is_dominant = vec![false; cfg.width];
        for &c in &cfg.dominant {
            is_dominant[c] = true;
        }
        let bulk: Vec<usize> = (0..cfg.width).filter(|&c| !is_dominant[c]).collect();
        let mixes = if cfg.bulk_mix > 0.0 {
            (0..cfg.depth)
                .map(|l| {
                    let mut rng = stream(cfg.seed, purpose::indexed(purpose::MIX, l as u64, 0));
                    let mut src = bulk.clone();
                    src.shuffle(&mut rng);
                    src.into_iter()
                        .map(|s| (s, if rng.random::<bool>() { 1.0 } else { -1.0 }))
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        let norm = (1.0 + cfg.bulk_mix * cfg.bulk_mix).sqrt();
        Ok(Self {
            cfg: cfg.clone(),
            bulk,
            mixes,
            mix_self: 1.0 / norm - 1.0,
            mix_other: cfg.bulk_mix / norm,
        })
    }

    pub fn config(&self) -> &ResidualStackConfig {
        &self.cfg
    }

    pub fn bulk_channels(&self) -> &[usize] {
        &self.bulk
    }

    /// Builds `h_0` and the dominant-channel fluctuations.
    pub fn initial(&self) -> InitialState {
        let cfg = &self.cfg;
        let (n, d) = (cfg.samples, cfg.width);
        let tail = SymmetricPareto::new(cfg.tail_index);
        let mut data = vec![0.0f64; n * d];
        par::for_each_chunk_mut(&mut data, SAMPLE_CHUNK_ROWS * d, |i, chunk| {
            let mut rng = stream(cfg.seed, purpose::indexed(purpose::BULK, 0, i as u64));
            for v in chunk.iter_mut() {
                *v = cfg.base_std * tail.sample(&mut rng);
            }
        });

        let mut latent_rng = stream(cfg.seed, purpose::LATENT);
        let latent_law = SymmetricPareto::new(cfg.latent_tail_index);
        let latent: Vec<f64> = (0..n).map(|_| latent_law.sample(&mut latent_rng)).collect();
        let rho = cfg.latent_corr;
        let own = (1.0 - rho * rho).sqrt();
        let sigma_inf = cfg.dominant_scale * cfg.base_std;
        let sigma_massive = cfg.massive_spread * sigma_inf;

        let mut signals = Vec::with_capacity(cfg.dominant.len());
        for (k, &ch) in cfg.dominant.iter().enumerate() {
            let mut rng = stream(cfg.seed, purpose::indexed(purpose::DOMINANT, k as u64, 0));
            let noise: Vec<f64> = (0..n).map(|_| tail.sample(&mut rng)).collect();
            let signal: Vec<f64> = if k < cfg.massive_count {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                for (r, &u) in noise.iter().enumerate() {
                    data[r * d + ch] = sign * sigma_massive * (cfg.massive_offset + u);
                }
                noise
            } else {
                let amp = sigma_inf * cfg.signal_decay.powi((k - cfg.massive_count) as i32);
                let u: Vec<f64> = latent.iter().zip(&noise).map(|(z, e)| rho * z + own * e).collect();
                for (r, &v) in u.iter().enumerate() {
                    data[r * d + ch] = amp * v;
                }
                u
            };
            signals.push(signal);
        }
        InitialState { h0: ActivationTensor::from_parts_unchecked(n, d, data), signals }
    }

    /// Block output `f_l(h)`: `(gain - 1) h` on dominant channels and the
    /// bulk mix `a h + b P_l h` elsewhere, with `a = 1/sqrt(1+c^2) - 1`,
    /// `b = c/sqrt(1+c^2)` and `P_l` a random signed permutation, so that
    /// `h + f_l(h)` keeps the bulk variance.
    pub fn branch(&self, layer: usize, h: &ActivationTensor) -> ActivationTensor {
        let mut out = vec![0.0f64; h.len()];
        self.branch_into(layer, h.data(), &mut out);
        ActivationTensor::from_parts_unchecked(h.rows(), h.cols(), out)
    }

    /// `branch` on a raw row-major buffer, written into `out`.
    pub fn branch_into(&self, layer: usize, src: &[f64], out: &mut [f64]) {
        let d = self.cfg.width;
        let g1 = self.cfg.gain - 1.0;
        let mix = self.mixes.get(layer);
        par::for_each_chunk_mut(out, SAMPLE_CHUNK_ROWS * d, |i, chunk| {
            let base = i * SAMPLE_CHUNK_ROWS * d;
            for (row_out, row_in) in chunk.chunks_mut(d).zip(src[base..].chunks(d)) {
                for &c in &self.cfg.dominant {
                    row_out[c] = g1 * row_in[c];
                }
                match mix {
                    Some(mix) => {
                        for (&dst, &(from, sign)) in self.bulk.iter().zip(mix) {
                            row_out[dst] = self.mix_self * row_in[dst] + self.mix_other * sign * row_in[from];
                        }
                    }
                    None => {
                        for &dst in &self.bulk {
                            row_out[dst] = 0.0;
                        }
                    }
                }
            }
        });
    }
}

/// `a + b` into a new tensor.
pub(crate) fn add_owned(a: &ActivationTensor, b: &ActivationTensor) -> ActivationTensor {
    let mut data = a.data().to_vec();
    add_assign(&mut data, b.data());
    ActivationTensor::from_parts_unchecked(a.rows(), a.cols(), data)
}

pub(crate) fn add_assign(acc: &mut [f64], x: &[f64]) {
    par::for_each_chunk_mut(acc, 1 << 16, |i, chunk| {
        let base = i << 16;
        for (a, &v) in chunk.iter_mut().zip(&x[base..]) {
            *a += v;
        }
    });
}

impl ActivationTensor {
    /// `self + other`, reusing `self`'s buffer.
    pub(crate) fn add_consuming(self, other: ActivationTensor) -> ActivationTensor {
        let (rows, cols) = (self.rows(), self.cols());
        let mut data = self.into_data();
        add_assign(&mut data, other.data());
        ActivationTensor::from_parts_unchecked(rows, cols, data)
    }
}

/// Clean activations `h_l` for one layer `l` in `[0, depth)`.
pub fn generate_layer(cfg: &ResidualStackConfig, layer: usize) -> Result<ActivationTensor> {
    if layer >= cfg.depth {
        return Err(crate::error::Error::Precondition(format!(
            "layer {layer} outside [0, {})",
            cfg.depth
        )));
    }
    let stack = Stack::new(cfg)?;
    let mut h = stack.initial().h0;
    for l in 0..layer {
        let f = stack.branch(l, &h);
        h = h.add_consuming(f);
    }
    Ok(h)
}

/// Clean activations `h_0 .. h_{depth-1}`.
pub fn generate_stack(cfg: &ResidualStackConfig) -> Result<Vec<ActivationTensor>> {
    let stack = Stack::new(cfg)?;
    let mut h = stack.initial().h0;
    let mut layers = Vec::with_capacity(cfg.depth);
    for l in 0..cfg.depth {
        let next = if l + 1 < cfg.depth { Some(add_owned(&h, &stack.branch(l, &h))) } else { None };
        layers.push(h);
        match next {
            Some(n) => h = n,
            None => break,
        }
    }
    Ok(layers)
}
