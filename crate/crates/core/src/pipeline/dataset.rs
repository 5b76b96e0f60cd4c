//! On-disk dataset format.
//!
//! ```text
//! <dir>/manifest.json     layout, window count, repetition metadata
//! <dir>/reps/<id>.csv     t, imu<id>_acc_x, ..., imu<id>_gyr_z (one row per sample)
//! <dir>/ratings.csv       repetition_id, rater_id, score
//! <dir>/alignment.json    optional: IMU id -> row-major 3x3 rotation
//! ```
//! Extra columns (magnetometer, pressure, IMUs outside the layout) are
//! ignored on load.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_rotation, Channel, ChannelKey, Exercise, Repetition, Rotation, SensorLayout, Side};
use crate::error::{data_err, CoreError, Result};
use crate::labels::RatingRecord;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionMeta {
    pub id: String,
    pub subject: String,
    pub exercise: Exercise,
    pub side: Side,
    pub true_length: usize,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub sample_rate_hz: f64,
    pub layout: SensorLayout,
    /// Windows per repetition (X).
    pub windows: usize,
    /// Padded length shared by all repetitions; a multiple of `windows`.
    #[serde(default)]
    pub max_length: Option<usize>,
    pub subjects: Vec<String>,
    pub exercises: Vec<Exercise>,
    pub repetitions: Vec<RepetitionMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: SensorLayout,
    pub windows: usize,
    pub max_length: Option<usize>,
    pub sample_rate_hz: f64,
    pub repetitions: Vec<Repetition>,
    pub ratings: Vec<RatingRecord>,
    pub alignment: BTreeMap<String, Rotation>,
}

fn safe_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) && !id.starts_with('.')
}

impl Dataset {
    pub fn subjects(&self) -> Vec<String> {
        self.repetitions
            .iter()
            .map(|r| r.subject.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn manifest(&self) -> Manifest {
        let exercises: BTreeSet<Exercise> = self.repetitions.iter().map(|r| r.exercise).collect();
        Manifest {
            format_version: FORMAT_VERSION,
            sample_rate_hz: self.sample_rate_hz,
            layout: self.layout.clone(),
            windows: self.windows,
            max_length: self.max_length,
            subjects: self.subjects(),
            exercises: exercises.into_iter().collect(),
            repetitions: self
                .repetitions
                .iter()
                .map(|r| RepetitionMeta {
                    id: r.id.clone(),
                    subject: r.subject.clone(),
                    exercise: r.exercise,
                    side: r.side,
                    true_length: r.true_length,
                    file: format!("reps/{}.csv", r.id),
                    label: r.label,
                })
                .collect(),
        }
    }

    /// Structural checks shared by load and save.
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if self.windows == 0 {
            return data_err("window count must be >= 1");
        }
        if let Some(m) = self.max_length {
            if m == 0 || m % self.windows != 0 {
                return data_err(format!("max_length {m} is not a positive multiple of {} windows", self.windows));
            }
        }
        let mut ids = BTreeSet::new();
        for r in &self.repetitions {
            if !safe_id(&r.id) {
                return data_err(format!("repetition id '{}' is not filesystem-safe", r.id));
            }
            if !ids.insert(r.id.as_str()) {
                return data_err(format!("duplicate repetition id '{}'", r.id));
            }
            if r.exercise.is_sided() == (r.side == Side::None) {
                return data_err(format!("repetition {}: side '{}' invalid for exercise {}", r.id, r.side, r.exercise));
            }
            r.validate()?;
            for key in self.layout.keys() {
                if !r.streams.contains_key(&key) {
                    return data_err(format!("repetition {} lacks channel {key}", r.id));
                }
            }
            if let Some(m) = self.max_length {
                if r.true_length > m {
                    return data_err(format!("repetition {} has {} samples, above max_length {m}", r.id, r.true_length));
                }
            }
        }
        let mut pairs = BTreeSet::new();
        for (i, rec) in self.ratings.iter().enumerate() {
            if !ids.contains(rec.repetition_id.as_str()) {
                return data_err(format!("rating {i} refers to unknown repetition '{}'", rec.repetition_id));
            }
            if !(1..=3).contains(&rec.score) {
                return data_err(format!("rating {i}: score {} outside 1..=3", rec.score));
            }
            if !pairs.insert((&rec.repetition_id, &rec.rater_id)) {
                return data_err(format!(
                    "rater '{}' rated repetition '{}' more than once",
                    rec.rater_id, rec.repetition_id
                ));
            }
        }
        for (imu, r) in &self.alignment {
            if !self.layout.imus.contains(imu) {
                return data_err(format!("alignment given for IMU '{imu}' which is not in the layout"));
            }
            validate_rotation(r).map_err(|e| CoreError::Data(format!("alignment for IMU {imu}: {e}")))?;
        }
        Ok(())
    }

    /// Copies final labels from `labels` (repetition id → rating); others
    /// become unlabeled.
    pub fn with_labels(&self, labels: &BTreeMap<String, u8>) -> Dataset {
        let mut d = self.clone();
        for r in &mut d.repetitions {
            r.label = labels.get(&r.id).copied();
        }
        d
    }
}

fn io_read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CoreError::io(path, e))
}

fn io_write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).map_err(|e| CoreError::io(p, e))?;
    }
    fs::write(path, contents).map_err(|e| CoreError::io(path, e))
}

fn parse_column(name: &str) -> Option<(String, &str)> {
    let rest = name.strip_prefix("imu")?;
    let (id, suffix) = rest.split_once('_')?;
    Some((id.to_string(), suffix))
}

fn read_repetition(dir: &Path, meta: &RepetitionMeta, layout: &SensorLayout) -> Result<Repetition> {
    let path = dir.join(&meta.file);
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&path)
        .map_err(|e| CoreError::Data(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CoreError::Data(format!("{}: header: {e}", path.display())))?
        .clone();
    if headers.get(0) != Some("t") {
        return data_err(format!("{}: first column must be 't'", path.display()));
    }
    let mut columns: Vec<(usize, ChannelKey)> = Vec::new();
    for (i, h) in headers.iter().enumerate().skip(1) {
        if let Some((imu, suffix)) = parse_column(h) {
            if let Some(ch) = Channel::from_suffix(suffix) {
                if layout.imus.contains(&imu) {
                    columns.push((i, ChannelKey::new(imu, ch)));
                }
            }
        }
    }
    for key in layout.keys() {
        if !columns.iter().any(|(_, k)| *k == key) {
            return data_err(format!("{}: missing column {key}", path.display()));
        }
    }
    let mut streams: BTreeMap<ChannelKey, Vec<f64>> = columns
        .iter()
        .map(|(_, k)| (k.clone(), Vec::with_capacity(meta.true_length)))
        .collect();
    for (row_no, rec) in rdr.records().enumerate() {
        let line = row_no + 2;
        let rec = rec.map_err(|e| CoreError::Data(format!("{} row {line}: {e}", path.display())))?;
        for (i, key) in &columns {
            let field = rec.get(*i).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| {
                CoreError::Data(format!("{} row {line} column {key}: cannot parse '{field}' as a number", path.display()))
            })?;
            if !v.is_finite() {
                return data_err(format!("{} row {line} column {key}: non-finite value", path.display()));
            }
            streams.get_mut(key).expect("column registered").push(v);
        }
    }
    let n = streams.values().next().map_or(0, Vec::len);
    if n != meta.true_length {
        return data_err(format!(
            "{}: {n} samples, manifest says true_length {}",
            path.display(),
            meta.true_length
        ));
    }
    Ok(Repetition {
        id: meta.id.clone(),
        subject: meta.subject.clone(),
        exercise: meta.exercise,
        side: meta.side,
        true_length: meta.true_length,
        streams,
        label: meta.label,
    })
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join("manifest.json");
    let manifest: Manifest =
        serde_json::from_str(&io_read(&mpath)?).map_err(|e| CoreError::Data(format!("{}: {e}", mpath.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return data_err(format!("{}: unsupported format_version {}", mpath.display(), manifest.format_version));
    }
    manifest.layout.validate()?;
    let repetitions = manifest
        .repetitions
        .iter()
        .map(|m| {
            if !manifest.subjects.contains(&m.subject) {
                return data_err(format!("repetition {}: subject '{}' not listed in manifest", m.id, m.subject));
            }
            read_repetition(dir, m, &manifest.layout)
        })
        .collect::<Result<Vec<_>>>()?;

    let rpath = dir.join("ratings.csv");
    let ratings = if rpath.exists() {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(&rpath)
            .map_err(|e| CoreError::Data(format!("{}: {e}", rpath.display())))?;
        let mut out = Vec::new();
        for (i, rec) in rdr.deserialize::<RatingRecord>().enumerate() {
            out.push(rec.map_err(|e| CoreError::Data(format!("{} row {}: {e}", rpath.display(), i + 2)))?);
        }
        out
    } else {
        Vec::new()
    };

    let apath = dir.join("alignment.json");
    let alignment = if apath.exists() {
        serde_json::from_str(&io_read(&apath)?).map_err(|e| CoreError::Data(format!("{}: {e}", apath.display())))?
    } else {
        BTreeMap::new()
    };

    let ds = Dataset {
        layout: manifest.layout,
        windows: manifest.windows,
        max_length: manifest.max_length,
        sample_rate_hz: manifest.sample_rate_hz,
        repetitions,
        ratings,
        alignment,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    let manifest = ds.manifest();
    for (rep, meta) in ds.repetitions.iter().zip(&manifest.repetitions) {
        let mut w = csv::Writer::from_writer(Vec::new());
        let keys: Vec<ChannelKey> = ds.layout.keys().collect();
        let mut header = vec!["t".to_string()];
        header.extend(keys.iter().map(|k| k.column()));
        w.write_record(&header).expect("in-memory write");
        let mut row = Vec::with_capacity(header.len());
        for t in 0..rep.true_length {
            row.clear();
            row.push((t as f64 / ds.sample_rate_hz).to_string());
            row.extend(keys.iter().map(|k| rep.streams[k][t].to_string()));
            w.write_record(&row).expect("in-memory write");
        }
        io_write(&dir.join(&meta.file), &w.into_inner().expect("in-memory flush"))?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    if ds.ratings.is_empty() {
        w.write_record(["repetition_id", "rater_id", "score"]).expect("in-memory write");
    }
    for r in &ds.ratings {
        w.serialize(r).expect("in-memory write");
    }
    io_write(&dir.join("ratings.csv"), &w.into_inner().expect("in-memory flush"))?;
    if !ds.alignment.is_empty() {
        io_write(&dir.join("alignment.json"), serde_json::to_string_pretty(&ds.alignment).expect("serializable").as_bytes())?;
    }
    io_write(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("serializable").as_bytes())
}
