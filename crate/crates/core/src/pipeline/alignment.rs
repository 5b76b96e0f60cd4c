use std::collections::BTreeMap;

use super::{Channel, ChannelKey, Repetition};
use crate::error::{data_err, Result};

/// Row-major 3x3 rotation.
pub type Rotation = [[f64; 3]; 3];

const ORTHO_TOL: f64 = 1e-6;

pub fn validate_rotation(r: &Rotation) -> Result<()> {
    if r.iter().flatten().any(|v| !v.is_finite()) {
        return data_err("rotation contains non-finite entries");
    }
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            if (dot - want).abs() > ORTHO_TOL {
                return data_err(format!("rotation is not orthonormal: (RᵀR)[{i}][{j}] = {dot}"));
            }
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    if (det - 1.0).abs() > ORTHO_TOL {
        return data_err(format!("rotation has determinant {det}, expected +1"));
    }
    Ok(())
}

/// Left-multiplies every accelerometer and gyrometer 3-vector of each IMU by
/// that IMU's rotation. IMUs without an entry are left unchanged.
pub fn apply_alignment(rep: &Repetition, rotations: &BTreeMap<String, Rotation>) -> Result<Repetition> {
    let mut out = rep.clone();
    for (imu, r) in rotations {
        validate_rotation(r).map_err(|e| crate::error::CoreError::Data(format!("IMU {imu}: {e}")))?;
        for triple in [
            [Channel::AccX, Channel::AccY, Channel::AccZ],
            [Channel::GyrX, Channel::GyrY, Channel::GyrZ],
        ] {
            let keys = triple.map(|c| ChannelKey::new(imu.clone(), c));
            let present = keys.iter().filter(|k| rep.streams.contains_key(*k)).count();
            if present == 0 {
                continue;
            }
            if present != 3 {
                return data_err(format!("repetition {}: IMU {imu} has an incomplete 3-axis triplet", rep.id));
            }
            let src = keys.clone().map(|k| &rep.streams[&k]);
            for (i, key) in keys.iter().enumerate() {
                let dst = out.streams.get_mut(key).expect("present");
                for (t, d) in dst.iter_mut().enumerate() {
                    *d = r[i][0] * src[0][t] + r[i][1] * src[1][t] + r[i][2] * src[2][t];
                }
            }
        }
    }
    Ok(out)
}
