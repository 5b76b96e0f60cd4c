use rand::Rng;

use crate::error::{NnError, Result};
use crate::rng::seeded;

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    rate: f64,
}

#[derive(Debug, Clone)]
pub struct DropoutCache {
    /// Per-element multiplier (0 or 1/(1-rate)); empty when inactive.
    scale: Vec<f64>,
    pub out: Vec<f64>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidArgument(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// With `training = None` this is the identity.
    pub fn forward(&self, x: &[f64], training: Option<u64>) -> DropoutCache {
        match training {
            Some(seed) if self.rate > 0.0 => {
                let mut rng = seeded(seed);
                let keep = 1.0 - self.rate;
                let scale: Vec<f64> = (0..x.len())
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let out = x.iter().zip(&scale).map(|(v, s)| v * s).collect();
                DropoutCache { scale, out }
            }
            _ => DropoutCache {
                scale: Vec::new(),
                out: x.to_vec(),
            },
        }
    }

    pub fn backward(&self, cache: &DropoutCache, d_out: &[f64]) -> Vec<f64> {
        if cache.scale.is_empty() {
            return d_out.to_vec();
        }
        d_out.iter().zip(&cache.scale).map(|(g, s)| g * s).collect()
    }
}

pub fn dropout(input: &[f64], rate: f64, training: bool, seed: u64) -> Result<Vec<f64>> {
    let layer = Dropout::new(rate)?;
    Ok(layer.forward(input, training.then_some(seed)).out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inference_is_identity() {
        let x = vec![1.0, -2.0, 3.0];
        assert_eq!(dropout(&x, 0.2, false, 9).unwrap(), x);
    }

    #[test]
    fn training_scales_kept_units() {
        let x = vec![1.0; 10_000];
        let y = dropout(&x, 0.2, true, 3).unwrap();
        let kept = y.iter().filter(|&&v| v > 0.0).count();
        assert!(y.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
        assert!((kept as f64 / 10_000.0 - 0.8).abs() < 0.02);
        assert_eq!(y, dropout(&x, 0.2, true, 3).unwrap());
    }

    #[test]
    fn rate_out_of_range_rejected() {
        assert!(Dropout::new(1.0).is_err());
        assert!(Dropout::new(-0.1).is_err());
    }
}
