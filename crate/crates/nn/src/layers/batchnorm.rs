use crate::error::{NnError, Result};
use crate::tensor::Tensor;

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-3;

/// Batch normalisation over the last (channel) axis.
///
/// Training mode normalises with statistics taken over every other axis
/// (batch and spatial); inference uses the running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    channels: usize,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Batch statistics, present only for training passes.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
    pub out: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(NnError::InvalidArgument("batchnorm needs >= 1 channel".into()));
        }
        Ok(BatchNorm {
            gamma: Tensor::filled(vec![channels], 1.0),
            beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::filled(vec![channels], 1.0),
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &[f64], training: bool) -> Result<BatchNormCache> {
        let c = self.channels();
        if x.len() % c != 0 || x.is_empty() {
            return Err(NnError::Shape(format!(
                "batchnorm input of {} values is not a multiple of {c} channels",
                x.len()
            )));
        }
        let m = x.len() / c;
        let (mean, var) = if training {
            let mut mean = vec![0.0; c];
            for row in x.chunks_exact(c) {
                for (a, &v) in mean.iter_mut().zip(row) {
                    *a += v;
                }
            }
            mean.iter_mut().for_each(|v| *v /= m as f64);
            let mut var = vec![0.0; c];
            for row in x.chunks_exact(c) {
                for ((a, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                    *a += (v - mu) * (v - mu);
                }
            }
            var.iter_mut().for_each(|v| *v /= m as f64);
            (mean, var)
        } else {
            (
                self.running_mean.values().to_vec(),
                self.running_var.values().to_vec(),
            )
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        let (g, b) = (self.gamma.values(), self.beta.values());
        for (r, row) in x.chunks_exact(c).enumerate() {
            for ch in 0..c {
                let xh = (row[ch] - mean[ch]) * inv_std[ch];
                xhat[r * c + ch] = xh;
                out[r * c + ch] = g[ch] * xh + b[ch];
            }
        }
        Ok(BatchNormCache {
            channels: c,
            xhat,
            inv_std,
            batch_stats: training.then_some((mean, var)),
            out,
        })
    }

    /// Folds a training pass's batch statistics into the running averages.
    pub fn commit(&mut self, cache: &BatchNormCache) {
        if let Some((mean, var)) = &cache.batch_stats {
            for (r, &m) in self.running_mean.values_mut().iter_mut().zip(mean) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
            }
            for (r, &v) in self.running_var.values_mut().iter_mut().zip(var) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
            }
        }
    }

    /// Returns `(d_input, [d_gamma, d_beta])`.
    pub fn backward(&self, cache: &BatchNormCache, d_out: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let c = cache.channels;
        let m = d_out.len() / c;
        let mut d_gamma = vec![0.0; c];
        let mut d_beta = vec![0.0; c];
        for (dy, xh) in d_out.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                d_gamma[ch] += dy[ch] * xh[ch];
                d_beta[ch] += dy[ch];
            }
        }
        let g = self.gamma.values();
        let mut d_in = vec![0.0; d_out.len()];
        if cache.batch_stats.is_some() {
            let mf = m as f64;
            for (r, (dy, xh)) in d_out.chunks_exact(c).zip(cache.xhat.chunks_exact(c)).enumerate() {
                for ch in 0..c {
                    d_in[r * c + ch] = g[ch] * cache.inv_std[ch] / mf
                        * (mf * dy[ch] - d_beta[ch] - xh[ch] * d_gamma[ch]);
                }
            }
        } else {
            for (r, dy) in d_out.chunks_exact(c).enumerate() {
                for ch in 0..c {
                    d_in[r * c + ch] = dy[ch] * g[ch] * cache.inv_std[ch];
                }
            }
        }
        (d_in, vec![d_gamma, d_beta])
    }
}

/// Normalises `input` (`... x channels`) with fresh parameters.
pub fn batchnorm(input: &Tensor, training: bool) -> Result<Tensor> {
    let c = *input
        .shape()
        .last()
        .ok_or_else(|| NnError::Shape("batchnorm needs at least one axis".into()))?;
    let layer = BatchNorm::new(c)?;
    let cache = layer.forward(input.values(), training)?;
    Tensor::new(input.shape().to_vec(), cache.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_output_is_standardised_per_channel() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() * 3.0 + (i % 2) as f64).collect();
        let t = Tensor::new(vec![20, 2], x).unwrap();
        let y = batchnorm(&t, true).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = y.values().iter().skip(ch).step_by(2).copied().collect();
            let mean = vals.iter().sum::<f64>() / 20.0;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn inference_with_fresh_stats_is_nearly_identity() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = batchnorm(&t, false).unwrap();
        let s = 1.0 / (1.0 + BN_EPSILON).sqrt();
        for (a, b) in y.values().iter().zip(t.values()) {
            assert!((a - b * s).abs() < 1e-15);
        }
    }

    #[test]
    fn commit_moves_running_stats() {
        let mut bn = BatchNorm::new(1).unwrap();
        let cache = bn.forward(&[2.0, 4.0], true).unwrap();
        bn.commit(&cache);
        assert!((bn.running_mean.values()[0] - 0.03).abs() < 1e-15);
        assert!((bn.running_var.values()[0] - (0.99 + 0.01)).abs() < 1e-15);
    }
}
