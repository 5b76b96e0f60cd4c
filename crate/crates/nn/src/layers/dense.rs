use crate::activation::Activation;
use crate::error::{NnError, Result};
use crate::gemm::gemm;
use crate::init::glorot_uniform_init;
use crate::tensor::Tensor;

/// Fully connected layer, weights stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    rows: usize,
    input: Vec<f64>,
    pre: Vec<f64>,
    pub out: Vec<f64>,
}

impl DenseCache {
    pub fn pre_activation(&self) -> &[f64] {
        &self.pre
    }
}

impl Dense {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        let s = weights.shape();
        if s.len() != 2 || s[0] == 0 || s[1] == 0 {
            return Err(NnError::InvalidArgument(format!(
                "dense weights must be in x out with positive dims, got {s:?}"
            )));
        }
        if bias.shape() != [s[1]] {
            return Err(NnError::Shape(format!(
                "dense bias {:?} does not match {} units",
                bias.shape(),
                s[1]
            )));
        }
        Ok(Dense {
            weights,
            bias,
            activation,
        })
    }

    pub fn glorot(inputs: usize, units: usize, activation: Activation, seed: u64) -> Result<Self> {
        let w = glorot_uniform_init(inputs, units, vec![inputs, units], seed)?;
        Dense::new(w, Tensor::zeros(vec![units]), activation)
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<DenseCache> {
        let (i, o) = (self.inputs(), self.units());
        if x.len() % i != 0 {
            return Err(NnError::Shape(format!(
                "dense expects rows of {i} values, got {} values",
                x.len()
            )));
        }
        let rows = x.len() / i;
        let mut pre = vec![0.0; rows * o];
        for r in 0..rows {
            pre[r * o..(r + 1) * o].copy_from_slice(self.bias.values());
        }
        gemm(rows, i, o, x, false, self.weights.values(), false, 1.0, &mut pre);
        let mut out = vec![0.0; rows * o];
        self.activation.apply_slice(&pre, &mut out);
        Ok(DenseCache {
            rows,
            input: x.to_vec(),
            pre,
            out,
        })
    }

    /// Returns `(d_input, [d_weights, d_bias])`.
    pub fn backward(&self, cache: &DenseCache, d_out: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (i, o, rows) = (self.inputs(), self.units(), cache.rows);
        let mut d_pre = d_out.to_vec();
        self.activation.backprop_slice(&cache.pre, &cache.out, &mut d_pre);
        let mut d_w = vec![0.0; i * o];
        gemm(i, rows, o, &cache.input, true, &d_pre, false, 0.0, &mut d_w);
        let mut d_b = vec![0.0; o];
        for row in d_pre.chunks_exact(o) {
            for (a, &g) in d_b.iter_mut().zip(row) {
                *a += g;
            }
        }
        let mut d_in = vec![0.0; rows * i];
        gemm(rows, o, i, &d_pre, false, self.weights.values(), true, 0.0, &mut d_in);
        (d_in, vec![d_w, d_b])
    }
}

/// `input` is `batch x in`, `weights` `in x out`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor, activation: Activation) -> Result<Tensor> {
    let layer = Dense::new(weights.clone(), bias.clone(), activation)?;
    let cache = layer.forward(input.values())?;
    Tensor::new(vec![cache.rows, layer.units()], cache.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_then_activation() {
        let w = Tensor::new(vec![2, 2], vec![1.0, -1.0, 2.0, 0.5]).unwrap();
        let b = Tensor::new(vec![2], vec![0.5, -3.0]).unwrap();
        let x = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let y = dense(&x, &w, &b, Activation::Relu).unwrap();
        assert_eq!(y.values(), &[3.5, 0.0]);
    }
}
