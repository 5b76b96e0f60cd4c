use crate::error::Result;
use crate::layers::FeatureMap;
use crate::tensor::Tensor;

/// 2x2 max pooling with stride 2.
///
/// Odd trailing rows/columns are dropped. An axis of extent 1 is passed
/// through unchanged (window of 1 along that axis) instead of collapsing to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MaxPool2d;

#[derive(Debug, Clone)]
pub struct PoolCache {
    input_len: usize,
    argmax: Vec<usize>,
    pub out: FeatureMap,
}

impl PoolCache {
    /// Flat input index chosen by each output cell.
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

pub fn pooled_extent(d: usize) -> usize {
    if d >= 2 {
        d / 2
    } else {
        d
    }
}

impl MaxPool2d {
    pub fn output_dims(h: usize, w: usize) -> (usize, usize) {
        (pooled_extent(h), pooled_extent(w))
    }

    pub fn forward(&self, x: &FeatureMap) -> PoolCache {
        let (oh, ow) = Self::output_dims(x.h, x.w);
        let wy = if x.h >= 2 { 2 } else { 1 };
        let wx = if x.w >= 2 { 2 } else { 1 };
        let mut out = FeatureMap::zeros(x.n, oh, ow, x.c);
        let mut argmax = vec![0; out.data.len()];
        for n in 0..x.n {
            for y in 0..oh {
                for xx in 0..ow {
                    for ch in 0..x.c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_i = 0;
                        for dy in 0..wy {
                            for dx in 0..wx {
                                let i = x.idx(n, y * wy + dy, xx * wx + dx, ch);
                                if x.data[i] > best {
                                    best = x.data[i];
                                    best_i = i;
                                }
                            }
                        }
                        let o = out.idx(n, y, xx, ch);
                        out.data[o] = best;
                        argmax[o] = best_i;
                    }
                }
            }
        }
        PoolCache {
            input_len: x.data.len(),
            argmax,
            out,
        }
    }

    pub fn backward(&self, cache: &PoolCache, d_out: &[f64]) -> Vec<f64> {
        let mut d_in = vec![0.0; cache.input_len];
        for (&i, &g) in cache.argmax.iter().zip(d_out) {
            d_in[i] += g;
        }
        d_in
    }
}

/// `input` is `h x w` or `h x w x c`.
pub fn maxpool2d(input: &Tensor) -> Result<Tensor> {
    let (h, w, c) = match *input.shape() {
        [h, w] => (h, w, 1),
        [h, w, c] => (h, w, c),
        _ => {
            return Err(crate::error::NnError::Shape(format!(
                "maxpool2d input must be HxW or HxWxC, got {:?}",
                input.shape()
            )))
        }
    };
    let fm = FeatureMap::new(1, h, w, c, input.values().to_vec())?;
    let out = MaxPool2d.forward(&fm).out;
    let shape = if input.shape().len() == 2 {
        vec![out.h, out.w]
    } else {
        vec![out.h, out.w, out.c]
    };
    Tensor::new(shape, out.data)
}
