//! Layers used by the windowed CNN-LSTM classifier.
//!
//! Each layer exposes `forward` returning a cache and `backward` consuming
//! that cache. Gradients are returned, never stored on the layer, so a layer
//! can be shared immutably while several batches are in flight.

pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod lstm;
pub mod masking;
pub mod pool;

pub use batchnorm::BatchNorm;
pub use conv::Conv2d;
pub use dense::Dense;
pub use dropout::Dropout;
pub use lstm::Lstm;
pub use pool::MaxPool2d;

use crate::error::{NnError, Result};

/// Batch of images in NHWC layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(n: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * h * w * c {
            return Err(NnError::Shape(format!(
                "feature map {n}x{h}x{w}x{c} needs {} values, got {}",
                n * h * w * c,
                data.len()
            )));
        }
        Ok(FeatureMap { n, h, w, c, data })
    }

    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        FeatureMap {
            n,
            h,
            w,
            c,
            data: vec![0.0; n * h * w * c],
        }
    }

    pub fn image_len(&self) -> usize {
        self.h * self.w * self.c
    }

    #[inline]
    pub fn idx(&self, n: usize, y: usize, x: usize, ch: usize) -> usize {
        ((n * self.h + y) * self.w + x) * self.c + ch
    }
}
