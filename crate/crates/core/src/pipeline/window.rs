use serde::{Deserialize, Serialize};

use super::{apply_scaler, arrange_channels, Repetition, ScalerParams, SensorLayout};
use crate::error::{config_err, data_err, Result};
use repscore_nn::window_mask;

/// `windows x rows x window_len` values plus a per-window mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSample {
    pub windows: usize,
    pub rows: usize,
    pub window_len: usize,
    pub data: Vec<f64>,
    pub mask: Vec<bool>,
    /// Class index 0..3 (rating − 1).
    pub label: Option<usize>,
}

/// Longest repetition rounded up to a multiple of `windows`.
pub fn dataset_max_length(lengths: impl IntoIterator<Item = usize>, windows: usize) -> Result<usize> {
    if windows == 0 {
        return config_err("window count must be >= 1");
    }
    let longest = lengths.into_iter().max().unwrap_or(0);
    if longest == 0 {
        return data_err("cannot derive a maximum length from an empty set");
    }
    Ok(longest.div_ceil(windows) * windows)
}

/// Zero-pads `matrix` (`rows x true_length`, row-major) to `max_length`
/// columns and cuts it into `windows` equal windows. A window is unmasked
/// iff it starts before `true_length`.
pub fn pad_and_window(
    matrix: &[f64],
    rows: usize,
    true_length: usize,
    max_length: usize,
    windows: usize,
) -> Result<WindowedSample> {
    if windows == 0 || max_length % windows != 0 {
        return config_err(format!("{windows} windows do not evenly divide length {max_length}"));
    }
    if true_length > max_length {
        return data_err(format!("repetition length {true_length} exceeds the maximum length {max_length}"));
    }
    if matrix.len() != rows * true_length {
        return data_err(format!("matrix has {} values, expected {rows}x{true_length}", matrix.len()));
    }
    let wl = max_length / windows;
    let mut data = vec![0.0; windows * rows * wl];
    for w in 0..windows {
        let start = w * wl;
        if start >= true_length {
            break;
        }
        let end = (start + wl).min(true_length);
        for r in 0..rows {
            let dst = (w * rows + r) * wl;
            data[dst..dst + end - start].copy_from_slice(&matrix[r * true_length + start..r * true_length + end]);
        }
    }
    Ok(WindowedSample {
        windows,
        rows,
        window_len: wl,
        data,
        mask: window_mask(true_length, wl, windows),
        label: None,
    })
}

/// Arrange → scale → pad/window for one (already aligned) repetition.
pub fn prepare(
    rep: &Repetition,
    layout: &SensorLayout,
    scaler: &ScalerParams,
    max_length: usize,
    windows: usize,
) -> Result<WindowedSample> {
    let m = apply_scaler(&arrange_channels(rep, layout)?, scaler);
    let mut s = pad_and_window(&m.data, m.rows, m.cols, max_length, windows)
        .map_err(|e| crate::error::CoreError::Data(format!("repetition {}: {e}", rep.id)))?;
    s.label = rep.label.map(|l| l as usize - 1);
    Ok(s)
}
