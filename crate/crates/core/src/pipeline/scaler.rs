use serde::{Deserialize, Serialize};

use super::{Matrix, Repetition, SensorLayout};
use crate::error::{config_err, Result};

/// Min/max per sensor class, fitted on training repetitions only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub acc: (f64, f64),
    pub gyr: (f64, f64),
}

pub fn fit_scaler<'a>(training: impl IntoIterator<Item = &'a Repetition>) -> Result<ScalerParams> {
    let mut acc = (f64::INFINITY, f64::NEG_INFINITY);
    let mut gyr = acc;
    let mut any = false;
    for rep in training {
        for (k, v) in &rep.streams {
            let slot = if k.channel.is_accelerometer() { &mut acc } else { &mut gyr };
            for &x in v {
                slot.0 = slot.0.min(x);
                slot.1 = slot.1.max(x);
                any = true;
            }
        }
    }
    if !any || !acc.0.is_finite() || !gyr.0.is_finite() {
        return config_err("cannot fit scaler: training data lacks accelerometer or gyrometer samples");
    }
    Ok(ScalerParams { acc, gyr })
}

fn scale(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

/// Maps accelerometer rows by the accelerometer range and gyrometer rows by
/// the gyrometer range. Values outside the fitted range are not clipped.
pub fn apply_scaler(matrix: &Matrix, params: &ScalerParams) -> Matrix {
    for (name, (lo, hi)) in [("accelerometer", params.acc), ("gyrometer", params.gyr)] {
        if hi <= lo {
            log::warn!("{name} range is degenerate ({lo}..{hi}); its rows scale to 0");
        }
    }
    let mut out = matrix.clone();
    for r in 0..matrix.rows {
        let range = if SensorLayout::is_accelerometer_row(r) { params.acc } else { params.gyr };
        for v in &mut out.data[r * matrix.cols..(r + 1) * matrix.cols] {
            *v = scale(*v, range);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_training_span_to_unit_interval_without_clipping() {
        let p = ScalerParams {
            acc: (-2.0, 2.0),
            gyr: (5.0, 5.0),
        };
        let m = Matrix {
            rows: 6,
            cols: 3,
            data: vec![
                -2.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 1.0, 2.0, 3.0, 0.0, 0.0, 0.0,
            ],
        };
        let s = apply_scaler(&m, &p);
        assert_eq!(&s.data[0..3], &[0.0, 1.0, 1.25]);
        assert!(s.data[9..18].iter().all(|&v| v == 0.0));
    }
}
