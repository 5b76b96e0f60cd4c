//! Raw recordings → model-ready windowed samples.
//!
//! Order of operations for one repetition: alignment rotation, channel
//! arrangement into a `rows x true_length` matrix, per-sensor min-max
//! scaling (fitted on training data only), zero padding and windowing.

mod alignment;
mod dataset;
mod scaler;
mod window;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{data_err, CoreError, Result};

pub use alignment::{apply_alignment, validate_rotation, Rotation};
pub use dataset::{load_dataset, save_dataset, Dataset, Manifest, RepetitionMeta, DEFAULT_SAMPLE_RATE_HZ};
pub use scaler::{apply_scaler, fit_scaler, ScalerParams};
pub use window::{dataset_max_length, pad_and_window, prepare, WindowedSample};

pub const CHANNELS_PER_IMU: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Exercise {
    DS,
    HS,
    IL,
    TSP,
}

impl Exercise {
    pub const ALL: [Exercise; 4] = [Exercise::DS, Exercise::HS, Exercise::IL, Exercise::TSP];

    /// Hurdle step and inline lunge are recorded per side.
    pub fn is_sided(self) -> bool {
        matches!(self, Exercise::HS | Exercise::IL)
    }
}

impl fmt::Display for Exercise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Exercise {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DS" => Ok(Exercise::DS),
            "HS" => Ok(Exercise::HS),
            "IL" => Ok(Exercise::IL),
            "TSP" => Ok(Exercise::TSP),
            _ => data_err(format!("unknown exercise '{s}' (expected DS, HS, IL or TSP)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    None,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    AccX,
    AccY,
    AccZ,
    GyrX,
    GyrY,
    GyrZ,
}

impl Channel {
    /// Row order within one IMU.
    pub const ORDER: [Channel; 6] = [
        Channel::AccX,
        Channel::AccY,
        Channel::AccZ,
        Channel::GyrX,
        Channel::GyrY,
        Channel::GyrZ,
    ];

    pub fn suffix(self) -> &'static str {
        match self {
            Channel::AccX => "acc_x",
            Channel::AccY => "acc_y",
            Channel::AccZ => "acc_z",
            Channel::GyrX => "gyr_x",
            Channel::GyrY => "gyr_y",
            Channel::GyrZ => "gyr_z",
        }
    }

    pub fn from_suffix(s: &str) -> Option<Channel> {
        Channel::ORDER.into_iter().find(|c| c.suffix() == s)
    }

    pub fn is_accelerometer(self) -> bool {
        matches!(self, Channel::AccX | Channel::AccY | Channel::AccZ)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelKey {
    pub imu: String,
    pub channel: Channel,
}

impl ChannelKey {
    pub fn new(imu: impl Into<String>, channel: Channel) -> Self {
        ChannelKey {
            imu: imu.into(),
            channel,
        }
    }

    pub fn column(&self) -> String {
        format!("imu{}_{}", self.imu, self.channel.suffix())
    }
}

impl fmt::Display for ChannelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.column())
    }
}

/// Ordered IMUs; each contributes the six rows of [`Channel::ORDER`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorLayout {
    pub imus: Vec<String>,
}

impl SensorLayout {
    pub fn new(imus: Vec<String>) -> Result<Self> {
        let layout = SensorLayout { imus };
        layout.validate()?;
        Ok(layout)
    }

    /// IMUs named "1".."n".
    pub fn numbered(n: usize) -> Self {
        SensorLayout {
            imus: (1..=n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.imus.is_empty() {
            return data_err("sensor layout has no IMUs");
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &self.imus {
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric()) {
                return data_err(format!("IMU id '{id}' must be non-empty and alphanumeric"));
            }
            if !seen.insert(id) {
                return data_err(format!("IMU id '{id}' appears twice in the layout"));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.imus.len() * CHANNELS_PER_IMU
    }

    pub fn key(&self, row: usize) -> ChannelKey {
        ChannelKey::new(self.imus[row / CHANNELS_PER_IMU].clone(), Channel::ORDER[row % CHANNELS_PER_IMU])
    }

    pub fn row(&self, key: &ChannelKey) -> Option<usize> {
        let imu = self.imus.iter().position(|i| *i == key.imu)?;
        let ch = Channel::ORDER.iter().position(|c| *c == key.channel)?;
        Some(imu * CHANNELS_PER_IMU + ch)
    }

    pub fn keys(&self) -> impl Iterator<Item = ChannelKey> + '_ {
        (0..self.rows()).map(|r| self.key(r))
    }

    pub fn is_accelerometer_row(row: usize) -> bool {
        Channel::ORDER[row % CHANNELS_PER_IMU].is_accelerometer()
    }
}

/// One exercise execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub id: String,
    pub subject: String,
    pub exercise: Exercise,
    pub side: Side,
    pub true_length: usize,
    pub streams: BTreeMap<ChannelKey, Vec<f64>>,
    /// Final (aggregated) rating in 1..=3, once known.
    pub label: Option<u8>,
}

impl Repetition {
    pub fn validate(&self) -> Result<()> {
        if self.true_length == 0 {
            return data_err(format!("repetition {} has no samples", self.id));
        }
        for (k, v) in &self.streams {
            if v.len() != self.true_length {
                return data_err(format!(
                    "repetition {}: stream {k} has {} samples, expected {}",
                    self.id,
                    v.len(),
                    self.true_length
                ));
            }
        }
        if let Some(l) = self.label {
            if !(1..=3).contains(&l) {
                return data_err(format!("repetition {}: label {l} outside 1..=3", self.id));
            }
        }
        Ok(())
    }
}

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Stacks the layout's channels as rows: IMU by IMU, accelerometer xyz
/// then gyrometer xyz.
pub fn arrange_channels(rep: &Repetition, layout: &SensorLayout) -> Result<Matrix> {
    let cols = rep.true_length;
    let mut data = Vec::with_capacity(layout.rows() * cols);
    for key in layout.keys() {
        let s = rep
            .streams
            .get(&key)
            .ok_or_else(|| CoreError::Data(format!("repetition {} lacks channel {key} (imu {}, {})", rep.id, key.imu, key.channel.suffix())))?;
        if s.len() != cols {
            return data_err(format!("repetition {}: channel {key} has {} samples, expected {cols}", rep.id, s.len()));
        }
        data.extend_from_slice(s);
    }
    Ok(Matrix {
        rows: layout.rows(),
        cols,
        data,
    })
}

/// Inverse of [`arrange_channels`].
pub fn split_channels(matrix: &Matrix, layout: &SensorLayout) -> Result<BTreeMap<ChannelKey, Vec<f64>>> {
    if matrix.rows != layout.rows() {
        return data_err(format!("matrix has {} rows, layout needs {}", matrix.rows, layout.rows()));
    }
    Ok(layout.keys().enumerate().map(|(r, k)| (k, matrix.row(r).to_vec())).collect())
}
