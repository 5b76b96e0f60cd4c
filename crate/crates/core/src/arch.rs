//! Network variants and the CNN-block grammar.

use std::fmt;

use serde::{Deserialize, Serialize};

use repscore_nn::{Activation, BranchSpec, LayerSpec, Network, NetworkSpec, SequenceBatch};

use crate::error::{config_err, CoreError, Result};
use crate::pipeline::{SensorLayout, CHANNELS_PER_IMU};

pub const CLASSES: usize = 3;
pub const DEFAULT_LSTM_UNITS: usize = 256;
pub const DEFAULT_DENSE_UNITS: [usize; 2] = [512, 128];
pub const DEFAULT_WINDOWS: usize = 10;
pub const DROPOUT_RATE: f64 = 0.2;
/// Filters per block; blocks use a prefix.
pub const BLOCK_FILTERS: [usize; 3] = [16, 32, 64];
pub const FIXED_KERNEL: usize = 5;
pub const DECREASING_KERNELS: [usize; 3] = [9, 5, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    ImuCentric,
    ChannelCentric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    IncFiltersFixedKernel,
    IncFiltersDecKernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regularization {
    #[serde(rename = "dropout_0.2")]
    Dropout,
    #[serde(rename = "batchnorm")]
    Batchnorm,
}

macro_rules! display_via_serde {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = serde_json::to_value(self).expect("unit enum");
                f.write_str(s.as_str().expect("string repr"))
            }
        }
        impl std::str::FromStr for $t {
            type Err = CoreError;
            fn from_str(s: &str) -> Result<Self> {
                serde_json::from_value(serde_json::Value::String(s.to_string()))
                    .map_err(|_| CoreError::Config(format!("unknown {} '{s}'", stringify!($t).to_lowercase())))
            }
        }
    )*};
}
display_via_serde!(Variant, Scheme, Regularization);

fn default_lstm_units() -> usize {
    DEFAULT_LSTM_UNITS
}

fn default_dense_units() -> Vec<usize> {
    DEFAULT_DENSE_UNITS.to_vec()
}

fn default_windows() -> usize {
    DEFAULT_WINDOWS
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub cnn_blocks: usize,
    pub scheme: Scheme,
    pub regularization: Regularization,
    pub lstm_layers: usize,
    pub activation: Activation,
    pub batch_size: usize,
    #[serde(default = "default_windows")]
    pub windows: usize,
    /// Units per LSTM layer.
    #[serde(default = "default_lstm_units")]
    pub lstm_units: usize,
    /// Hidden dense widths before the 3-way output layer.
    #[serde(default = "default_dense_units")]
    pub dense_units: Vec<usize>,
}

impl ModelConfig {
    /// The selected configuration: baseline, batch 16, two blocks, fixed
    /// 5x5 kernels, dropout, two LSTM layers, ELU.
    pub fn best() -> Self {
        ModelConfig {
            variant: Variant::Baseline,
            cnn_blocks: 2,
            scheme: Scheme::IncFiltersFixedKernel,
            regularization: Regularization::Dropout,
            lstm_layers: 2,
            activation: Activation::Elu,
            batch_size: 16,
            windows: DEFAULT_WINDOWS,
            lstm_units: DEFAULT_LSTM_UNITS,
            dense_units: DEFAULT_DENSE_UNITS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.cnn_blocks) {
            return config_err(format!("cnn_blocks {} not in 1..=3", self.cnn_blocks));
        }
        if !(1..=2).contains(&self.lstm_layers) {
            return config_err(format!("lstm_layers {} not in 1..=2", self.lstm_layers));
        }
        if ![4, 8, 16, 32].contains(&self.batch_size) {
            return config_err(format!("batch_size {} not one of 4, 8, 16, 32", self.batch_size));
        }
        if !matches!(self.activation, Activation::Relu | Activation::Elu | Activation::Lrelu) {
            return config_err(format!("activation {:?} not one of relu, elu, lrelu", self.activation));
        }
        if self.windows == 0 || self.lstm_units == 0 || self.dense_units.contains(&0) {
            return config_err("windows, lstm_units and dense widths must be >= 1");
        }
        Ok(())
    }

    /// `(kernel_h, kernel_w, filters)` per CNN block for a branch of
    /// `branch_rows` rows.
    pub fn blocks(&self) -> Vec<(usize, usize, usize)> {
        (0..self.cnn_blocks)
            .map(|i| {
                let k = match self.scheme {
                    Scheme::IncFiltersFixedKernel => FIXED_KERNEL,
                    Scheme::IncFiltersDecKernel => DECREASING_KERNELS[i],
                };
                let kh = match self.variant {
                    Variant::Baseline => k,
                    Variant::ImuCentric | Variant::ChannelCentric => 1,
                };
                (kh, k, BLOCK_FILTERS[i])
            })
            .collect()
    }
}

/// A built network together with the configuration it realises.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub network: Network,
}

pub fn network_spec(config: &ModelConfig, layout: &SensorLayout, window_len: usize) -> Result<NetworkSpec> {
    config.validate()?;
    layout.validate()?;
    if window_len == 0 {
        return config_err("window length must be >= 1");
    }
    let mut block_layers = Vec::new();
    for (kh, kw, filters) in config.blocks() {
        block_layers.push(LayerSpec::Conv2d {
            filters,
            kernel: [kh, kw],
            activation: config.activation,
        });
        block_layers.push(LayerSpec::Maxpool2d);
        block_layers.push(match config.regularization {
            Regularization::Dropout => LayerSpec::Dropout { rate: DROPOUT_RATE },
            Regularization::Batchnorm => LayerSpec::Batchnorm,
        });
    }
    let rows = layout.rows();
    let branches = match config.variant {
        Variant::Baseline | Variant::ChannelCentric => vec![BranchSpec {
            row_start: 0,
            row_end: rows,
            layers: block_layers,
        }],
        Variant::ImuCentric => (0..layout.imus.len())
            .map(|i| BranchSpec {
                row_start: i * CHANNELS_PER_IMU,
                row_end: (i + 1) * CHANNELS_PER_IMU,
                layers: block_layers.clone(),
            })
            .collect(),
    };
    let mut head = vec![LayerSpec::Masking];
    for i in 0..config.lstm_layers {
        head.push(LayerSpec::Lstm {
            units: config.lstm_units,
            return_sequences: i + 1 < config.lstm_layers,
        });
    }
    for &u in &config.dense_units {
        head.push(LayerSpec::Dense {
            units: u,
            activation: config.activation,
        });
    }
    head.push(LayerSpec::Dense {
        units: CLASSES,
        activation: Activation::Identity,
    });
    head.push(LayerSpec::Softmax);
    Ok(NetworkSpec {
        input_rows: rows,
        window_len,
        branches,
        head,
    })
}

pub fn build_model(config: &ModelConfig, layout: &SensorLayout, window_len: usize, seed: u64) -> Result<Model> {
    let spec = network_spec(config, layout, window_len)?;
    Ok(Model {
        config: config.clone(),
        network: Network::build(spec, seed)?,
    })
}

impl Model {
    /// Class probabilities, one `[p1, p2, p3]` row per sample, inference
    /// mode.
    pub fn forward_classify(&self, batch: &SequenceBatch) -> Result<Vec<[f64; CLASSES]>> {
        if batch.steps != self.config.windows {
            return config_err(format!(
                "batch has {} windows per sample, model expects {}",
                batch.steps, self.config.windows
            ));
        }
        let probs = self.network.predict(batch)?;
        Ok(probs.chunks(CLASSES).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn trainable_param_count(&self) -> usize {
        self.network.trainable_param_count()
    }
}
