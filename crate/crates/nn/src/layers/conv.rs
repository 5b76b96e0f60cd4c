use crate::activation::Activation;
use crate::error::{NnError, Result};
use crate::gemm::gemm;
use crate::init::glorot_uniform_init;
use crate::layers::FeatureMap;
use crate::tensor::Tensor;

/// Stride-1 2D convolution with "same" zero padding.
///
/// Kernel layout is `kh x kw x c_in x filters`. For even kernel sizes the
/// extra padding row/column goes to the bottom/right.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    input_dims: (usize, usize, usize, usize),
    cols: Vec<f64>,
    pre: Vec<f64>,
    pub out: FeatureMap,
}

impl ConvCache {
    pub fn pre_activation(&self) -> &[f64] {
        &self.pre
    }
}

impl Conv2d {
    pub fn new(kernel: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        let s = kernel.shape();
        if s.len() != 4 || s.contains(&0) {
            return Err(NnError::InvalidArgument(format!(
                "conv kernel must be kh x kw x c x f with positive dims, got {s:?}"
            )));
        }
        if bias.shape() != [s[3]] {
            return Err(NnError::Shape(format!(
                "conv bias {:?} does not match {} filters",
                bias.shape(),
                s[3]
            )));
        }
        Ok(Conv2d {
            kernel,
            bias,
            activation,
        })
    }

    /// Glorot-uniform kernel, zero bias.
    pub fn glorot(
        kh: usize,
        kw: usize,
        c_in: usize,
        filters: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let receptive = kh * kw;
        let kernel = glorot_uniform_init(
            receptive * c_in,
            receptive * filters,
            vec![kh, kw, c_in, filters],
            seed,
        )?;
        Conv2d::new(kernel, Tensor::zeros(vec![filters]), activation)
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernel.shape()[0], self.kernel.shape()[1])
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn filters(&self) -> usize {
        self.kernel.shape()[3]
    }

    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }

    fn im2col(&self, x: &FeatureMap) -> Vec<f64> {
        let (kh, kw) = self.kernel_size();
        let c = x.c;
        let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
        let k = kh * kw * c;
        let mut cols = vec![0.0; x.n * x.h * x.w * k];
        for n in 0..x.n {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let row = ((n * x.h + y) * x.w + xx) * k;
                    for dy in 0..kh {
                        let iy = y + dy;
                        if iy < pt || iy - pt >= x.h {
                            continue;
                        }
                        let iy = iy - pt;
                        for dx in 0..kw {
                            let ix = xx + dx;
                            if ix < pl || ix - pl >= x.w {
                                continue;
                            }
                            let ix = ix - pl;
                            let src = x.idx(n, iy, ix, 0);
                            let dst = row + (dy * kw + dx) * c;
                            cols[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<ConvCache> {
        if x.c != self.in_channels() {
            return Err(NnError::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels(),
                x.c
            )));
        }
        let (kh, kw) = self.kernel_size();
        let f = self.filters();
        let k = kh * kw * x.c;
        let rows = x.n * x.h * x.w;
        let cols = self.im2col(x);
        let mut pre = vec![0.0; rows * f];
        for r in 0..rows {
            pre[r * f..(r + 1) * f].copy_from_slice(self.bias.values());
        }
        gemm(rows, k, f, &cols, false, self.kernel.values(), false, 1.0, &mut pre);
        let mut out = vec![0.0; rows * f];
        self.activation.apply_slice(&pre, &mut out);
        Ok(ConvCache {
            input_dims: (x.n, x.h, x.w, x.c),
            cols,
            pre,
            out: FeatureMap::new(x.n, x.h, x.w, f, out)?,
        })
    }

    /// Returns `(d_input, [d_kernel, d_bias])`. `d_input` is empty when
    /// `need_input_grad` is false.
    pub fn backward(
        &self,
        cache: &ConvCache,
        d_out: &[f64],
        need_input_grad: bool,
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (n, h, w, c) = cache.input_dims;
        let (kh, kw) = self.kernel_size();
        let f = self.filters();
        let k = kh * kw * c;
        let rows = n * h * w;
        let mut d_pre = d_out.to_vec();
        self.activation
            .backprop_slice(&cache.pre, &cache.out.data, &mut d_pre);

        let mut d_kernel = vec![0.0; k * f];
        gemm(k, rows, f, &cache.cols, true, &d_pre, false, 0.0, &mut d_kernel);
        let mut d_bias = vec![0.0; f];
        for r in 0..rows {
            for (db, &g) in d_bias.iter_mut().zip(&d_pre[r * f..(r + 1) * f]) {
                *db += g;
            }
        }

        let mut d_input = Vec::new();
        if need_input_grad {
            let mut d_cols = vec![0.0; rows * k];
            gemm(rows, f, k, &d_pre, false, self.kernel.values(), true, 0.0, &mut d_cols);
            d_input = vec![0.0; n * h * w * c];
            let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
            for b in 0..n {
                for y in 0..h {
                    for xx in 0..w {
                        let row = ((b * h + y) * w + xx) * k;
                        for dy in 0..kh {
                            let iy = y + dy;
                            if iy < pt || iy - pt >= h {
                                continue;
                            }
                            let iy = iy - pt;
                            for dx in 0..kw {
                                let ix = xx + dx;
                                if ix < pl || ix - pl >= w {
                                    continue;
                                }
                                let ix = ix - pl;
                                let dst = ((b * h + iy) * w + ix) * c;
                                let src = row + (dy * kw + dx) * c;
                                for ch in 0..c {
                                    d_input[dst + ch] += d_cols[src + ch];
                                }
                            }
                        }
                    }
                }
            }
        }
        (d_input, vec![d_kernel, d_bias])
    }
}

/// Convenience wrapper: `input` is `h x w x c` (or `n x h x w x c`),
/// kernels `kh x kw x c x f`, bias `f`.
pub fn conv2d(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    activation: Activation,
) -> Result<Tensor> {
    let (n, h, w, c) = match *input.shape() {
        [h, w, c] => (1, h, w, c),
        [n, h, w, c] => (n, h, w, c),
        _ => {
            return Err(NnError::Shape(format!(
                "conv2d input must be HxWxC or NxHxWxC, got {:?}",
                input.shape()
            )))
        }
    };
    let layer = Conv2d::new(kernels.clone(), bias.clone(), activation)?;
    let fm = FeatureMap::new(n, h, w, c, input.values().to_vec())?;
    let out = layer.forward(&fm)?.out;
    let shape = if input.shape().len() == 3 {
        vec![h, w, layer.filters()]
    } else {
        vec![n, h, w, layer.filters()]
    };
    Tensor::new(shape, out.data)
}
