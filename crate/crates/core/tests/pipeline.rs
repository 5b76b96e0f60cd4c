use std::collections::BTreeMap;
use std::fs;

use proptest::prelude::*;
use repscore_core::pipeline::*;
use repscore_core::synthgen::{generate, preset};

fn rep_from(id: &str, subject: &str, layout: &SensorLayout, len: usize, f: impl Fn(usize, usize) -> f64) -> Repetition {
    let streams = layout
        .keys()
        .enumerate()
        .map(|(k, key)| (key, (0..len).map(|t| f(k, t)).collect()))
        .collect();
    Repetition {
        id: id.into(),
        subject: subject.into(),
        exercise: Exercise::DS,
        side: Side::None,
        true_length: len,
        streams,
        label: None,
    }
}

#[test]
fn quarter_turn_about_z_maps_x_to_y() {
    let layout = SensorLayout::numbered(1);
    // acc = (1, 2, 3), gyr = (10, 20, 30) at every sample
    let rep = rep_from("a", "S1", &layout, 4, |k, _| [1.0, 2.0, 3.0, 10.0, 20.0, 30.0][k]);
    let rz: Rotation = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    let imu = layout.imus[0].clone();
    let out = apply_alignment(&rep, &BTreeMap::from([(imu.clone(), rz)])).unwrap();
    let get = |c| out.streams[&ChannelKey::new(imu.clone(), c)][2];
    assert_eq!([get(Channel::AccX), get(Channel::AccY), get(Channel::AccZ)], [-2.0, 1.0, 3.0]);
    assert_eq!([get(Channel::GyrX), get(Channel::GyrY), get(Channel::GyrZ)], [-20.0, 10.0, 30.0]);
}

#[test]
fn rotations_are_validated() {
    let layout = SensorLayout::numbered(1);
    let rep = rep_from("a", "S1", &layout, 3, |_, _| 1.0);
    let reflect: Rotation = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale: Rotation = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for r in [reflect, scale] {
        assert!(validate_rotation(&r).is_err());
        assert!(apply_alignment(&rep, &BTreeMap::from([(layout.imus[0].clone(), r)])).is_err());
    }
}

fn rotation_from_angles(a: f64, b: f64, c: f64) -> Rotation {
    let (sa, ca, sb, cb, sc, cc) = (a.sin(), a.cos(), b.sin(), b.cos(), c.sin(), c.cos());
    let rz = [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]];
    let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| p[i][k] * q[k][j]).sum();
            }
        }
        m
    };
    mul(mul(rz, ry), rx)
}

proptest! {
    #[test]
    fn alignment_preserves_vector_norms(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, seed in 0u64..1000) {
        let layout = SensorLayout::numbered(2);
        let rep = rep_from("a", "S1", &layout, 7, |k, t| ((seed as f64 + 1.0) * (k * 7 + t) as f64).sin() * 5.0);
        let r = rotation_from_angles(a, b, c);
        let out = apply_alignment(&rep, &BTreeMap::from([(layout.imus[0].clone(), r)])).unwrap();
        let norm = |rp: &Repetition, imu: &str, acc: bool, t: usize| -> f64 {
            let chans = if acc { [Channel::AccX, Channel::AccY, Channel::AccZ] } else { [Channel::GyrX, Channel::GyrY, Channel::GyrZ] };
            chans.iter().map(|&c| rp.streams[&ChannelKey::new(imu, c)][t].powi(2)).sum::<f64>().sqrt()
        };
        for t in 0..7 {
            for acc in [true, false] {
                prop_assert!((norm(&rep, &layout.imus[0], acc, t) - norm(&out, &layout.imus[0], acc, t)).abs() < 1e-9);
            }
        }
        // the IMU without a rotation is untouched
        for key in layout.keys().filter(|k| k.imu == layout.imus[1]) {
            prop_assert_eq!(&rep.streams[&key], &out.streams[&key]);
        }
    }

    #[test]
    fn windowing_keeps_every_sample_in_place(len in 1usize..60, windows in 1usize..7, rows in 1usize..4) {
        let max_len = dataset_max_length([len], windows).unwrap();
        let m: Vec<f64> = (0..rows * len).map(|i| i as f64 + 1.0).collect();
        let s = pad_and_window(&m, rows, len, max_len, windows).unwrap();
        let wl = max_len / windows;
        for r in 0..rows {
            for t in 0..max_len {
                let (w, o) = (t / wl, t % wl);
                let got = s.data[(w * rows + r) * wl + o];
                let want = if t < len { m[r * len + t] } else { 0.0 };
                prop_assert_eq!(got, want);
            }
        }
        for w in 0..windows {
            prop_assert_eq!(s.mask[w], w * wl < len);
        }
    }
}

#[test]
fn scaler_maps_training_extremes_to_unit_interval() {
    let layout = SensorLayout::numbered(1);
    let a = rep_from("a", "S1", &layout, 5, |k, t| if k < 3 { t as f64 - 2.0 } else { 100.0 * t as f64 });
    let scaler = fit_scaler([&a]).unwrap();
    let m = apply_scaler(&arrange_channels(&a, &layout).unwrap(), &scaler);
    for r in 0..6 {
        let row = m.row(r);
        assert_eq!(row[0], 0.0);
        assert_eq!(row[4], 1.0);
        assert!((row[2] - 0.5).abs() < 1e-15);
    }
    // unseen extremes are not clipped
    let b = rep_from("b", "S2", &layout, 2, |k, _| if k < 3 { 4.0 } else { -200.0 });
    let mb = apply_scaler(&arrange_channels(&b, &layout).unwrap(), &scaler);
    assert!((mb.row(0)[0] - 1.5).abs() < 1e-15);
    assert!((mb.row(3)[0] + 0.5).abs() < 1e-15);
}

#[test]
fn dataset_round_trips_through_disk() {
    let mut spec = preset("tiny").unwrap();
    spec.subjects = 3;
    spec.reps_per_cell = 2;
    let mut ds = generate(&spec, 1).unwrap().dataset;
    ds.alignment.insert(ds.layout.imus[0].clone(), rotation_from_angles(0.3, -0.2, 1.1));
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    for f in ["manifest.json", "ratings.csv", "alignment.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn three_repetition_fixture() {
    let layout = SensorLayout::numbered(1);
    let mut ds = Dataset {
        layout: layout.clone(),
        windows: 2,
        max_length: None,
        sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        repetitions: vec![
            rep_from("r1", "S1", &layout, 4, |k, t| (k + t) as f64),
            rep_from("r2", "S1", &layout, 5, |k, t| (k * t) as f64 * 0.5),
            rep_from("r3", "S2", &layout, 3, |_, t| -(t as f64)),
        ],
        ratings: Vec::new(),
        alignment: BTreeMap::new(),
    };
    ds.repetitions[1].exercise = Exercise::HS;
    ds.repetitions[1].side = Side::Left;
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("reps/r1.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,imu1_acc_x,imu1_acc_y,imu1_acc_z,imu1_gyr_x,imu1_gyr_y,imu1_gyr_z");
    assert_eq!(lines.count(), 4);
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.subjects(), vec!["S1".to_string(), "S2".to_string()]);
    assert_eq!(back.repetitions[1].side, Side::Left);
    assert_eq!(dataset_max_length(back.repetitions.iter().map(|r| r.true_length), 2).unwrap(), 6);
}

#[test]
fn missing_column_is_reported_by_name() {
    let layout = SensorLayout::numbered(1);
    let ds = Dataset {
        layout: layout.clone(),
        windows: 1,
        max_length: None,
        sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        repetitions: vec![rep_from("r1", "S1", &layout, 3, |k, t| (k + t) as f64)],
        ratings: Vec::new(),
        alignment: BTreeMap::new(),
    };
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let path = dir.path().join("reps/r1.csv");
    let text = fs::read_to_string(&path).unwrap();
    let cut: String = text
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(5);
            f.join(",") + "\n"
        })
        .collect();
    fs::write(&path, cut).unwrap();
    let err = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("gyr_y"), "{err}");
}

#[test]
fn malformed_value_names_row_and_column() {
    let layout = SensorLayout::numbered(1);
    let ds = Dataset {
        layout: layout.clone(),
        windows: 1,
        max_length: None,
        sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        repetitions: vec![rep_from("r1", "S1", &layout, 3, |k, t| (k + t) as f64)],
        ratings: Vec::new(),
        alignment: BTreeMap::new(),
    };
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let path = dir.path().join("reps/r1.csv");
    let text = fs::read_to_string(&path).unwrap().replacen("\n0.008333333333333333,1,", "\n0.008333333333333333,oops,", 1);
    fs::write(&path, text).unwrap();
    let err = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("row 3") && err.contains("acc_x") && err.contains("oops"), "{err}");
}
