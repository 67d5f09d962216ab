use crate::par;
use crate::quant::params::QuantParams;
use crate::tensor::ActivationTensor;

const ROW_CHUNK: usize = 1 << 15;

/// Integer codes plus the params that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    rows: usize,
    cols: usize,
    q: Vec<i32>,
    params: QuantParams,
}

impl QuantizedTensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn codes(&self) -> &[i32] {
        &self.q
    }

    pub fn params(&self) -> &QuantParams {
        &self.params
    }
}

/// `clamp(round_half_away(x / s), -qmax, qmax)`.
#[inline]
pub fn quantize_value(x: f64, scale: f64, qmax: i32) -> i32 {
    let q = (x / scale).round();
    let m = qmax as f64;
    q.clamp(-m, m) as i32
}

#[inline]
pub fn fake_quant_value(x: f64, scale: f64, qmax: i32) -> f64 {
    scale * quantize_value(x, scale, qmax) as f64
}

pub fn quantize_affine(t: &ActivationTensor, params: &QuantParams) -> QuantizedTensor {
    let (s, qmax) = (params.scale(), params.qmax());
    let mut q = vec![0i32; t.len()];
    let src = t.data();
    par::for_each_chunk_mut(&mut q, ROW_CHUNK, |i, chunk| {
        let base = i * ROW_CHUNK;
        for (j, out) in chunk.iter_mut().enumerate() {
            *out = quantize_value(src[base + j], s, qmax);
        }
    });
    QuantizedTensor { rows: t.rows(), cols: t.cols(), q, params: *params }
}

pub fn dequantize(qt: &QuantizedTensor) -> ActivationTensor {
    let s = qt.params.scale();
    let z = qt.params.zero_point();
    let data = qt.q.iter().map(|&q| s * (q - z) as f64).collect();
    ActivationTensor::from_parts_unchecked(qt.rows, qt.cols, data)
}

/// `dequantize(quantize_affine(t, params))` without the intermediate buffer.
pub fn fake_quant(t: &ActivationTensor, params: &QuantParams) -> ActivationTensor {
    let mut out = t.data().to_vec();
    fake_quant_in_place(&mut out, params);
    ActivationTensor::from_parts_unchecked(t.rows(), t.cols(), out)
}

/// Fake-quantizes a raw buffer in place with a single scale.
pub fn fake_quant_in_place(data: &mut [f64], params: &QuantParams) {
    let (s, qmax) = (params.scale(), params.qmax());
    par::for_each_chunk_mut(data, ROW_CHUNK, |_, chunk| {
        for v in chunk.iter_mut() {
            *v = fake_quant_value(*v, s, qmax);
        }
    });
}

/// Fake-quantizes a row-major buffer in place with one scale per column.
pub fn fake_quant_columns_in_place(data: &mut [f64], channel_scale: &[f64], qmax: i32) {
    let cols = channel_scale.len();
    let rows_per_chunk = ROW_CHUNK / cols + 1;
    par::for_each_chunk_mut(data, rows_per_chunk * cols, |_, chunk| {
        for row in chunk.chunks_mut(cols) {
            for (v, &s) in row.iter_mut().zip(channel_scale) {
                *v = fake_quant_value(*v, s, qmax);
            }
        }
    });
}
