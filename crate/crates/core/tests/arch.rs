use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repscore_core::arch::*;
use repscore_core::pipeline::SensorLayout;
use repscore_nn::gradcheck::network_check;
use repscore_nn::{Activation, Mode, OptimizerState, SequenceBatch};

fn pooled(d: usize) -> usize {
    if d >= 2 {
        d / 2
    } else {
        d
    }
}

/// Trainable parameters counted from the layer formulas:
/// conv k_h·k_w·c_in·f + f, batchnorm 2f, LSTM 4u(n_in + u + 1),
/// dense (n_in + 1)·n_out.
fn expected_params(c: &ModelConfig, imus: usize, window_len: usize) -> usize {
    let (branches, height) = match c.variant {
        Variant::ImuCentric => (imus, 6),
        _ => (1, 6 * imus),
    };
    let (mut h, mut w, mut ch) = (height, window_len, 1);
    let mut branch = 0;
    for i in 0..c.cnn_blocks {
        let k = match c.scheme {
            Scheme::IncFiltersFixedKernel => 5,
            Scheme::IncFiltersDecKernel => [9, 5, 3][i],
        };
        let kh = if c.variant == Variant::Baseline { k } else { 1 };
        let f = [16, 32, 64][i];
        branch += kh * k * ch * f + f;
        if c.regularization == Regularization::Batchnorm {
            branch += 2 * f;
        }
        h = pooled(h);
        w = pooled(w);
        ch = f;
    }
    let mut total = branches * branch;
    let mut n_in = branches * h * w * ch;
    for _ in 0..c.lstm_layers {
        total += 4 * c.lstm_units * (n_in + c.lstm_units + 1);
        n_in = c.lstm_units;
    }
    for &u in c.dense_units.iter().chain(&[3]) {
        total += (n_in + 1) * u;
        n_in = u;
    }
    total
}

fn grid() -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for variant in [Variant::Baseline, Variant::ImuCentric, Variant::ChannelCentric] {
        for blocks in 1..=3 {
            out.push(ModelConfig {
                variant,
                cnn_blocks: blocks,
                ..ModelConfig::best()
            });
        }
    }
    out
}

#[test]
fn nine_configurations_match_hand_counts() {
    let layout = SensorLayout::numbered(3);
    for c in grid() {
        let m = build_model(&c, &layout, 24, 0).unwrap();
        assert_eq!(m.trainable_param_count(), expected_params(&c, 3, 24), "{:?} x{}", c.variant, c.cnn_blocks);
    }
    // one configuration worked through by hand: 18 x 24 input, one block
    // conv 5·5·1·16 + 16 = 416; pooled to 9 x 12 x 16 = 1728 features;
    // LSTM 1024·1985 = 2 032 640 and 1024·513 = 525 312;
    // dense 257·512 = 131 584, 513·128 = 65 664, 129·3 = 387
    let c = ModelConfig {
        cnn_blocks: 1,
        ..ModelConfig::best()
    };
    assert_eq!(build_model(&c, &layout, 24, 0).unwrap().trainable_param_count(), 2_756_003);
}

fn any_config() -> impl Strategy<Value = ModelConfig> {
    (0usize..3, 1usize..=3, any::<bool>(), any::<bool>(), 1usize..=2, 0usize..3).prop_map(|(v, b, s, r, l, a)| ModelConfig {
        variant: [Variant::Baseline, Variant::ImuCentric, Variant::ChannelCentric][v],
        cnn_blocks: b,
        scheme: if s { Scheme::IncFiltersFixedKernel } else { Scheme::IncFiltersDecKernel },
        regularization: if r { Regularization::Dropout } else { Regularization::Batchnorm },
        lstm_layers: l,
        activation: [Activation::Relu, Activation::Elu, Activation::Lrelu][a],
        lstm_units: 8,
        dense_units: vec![6, 4],
        ..ModelConfig::best()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn every_sweep_configuration_matches_hand_count(c in any_config(), imus in 1usize..4, wl in 1usize..30) {
        let layout = SensorLayout::numbered(imus);
        let m = build_model(&c, &layout, wl, 3).unwrap();
        prop_assert_eq!(m.trainable_param_count(), expected_params(&c, imus, wl));
    }
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, windows: usize, rows: usize, wl: usize, valid: &[usize]) -> SequenceBatch {
    let data: Vec<f64> = (0..n * windows * rows * wl).map(|_| rng.random_range(0.0..1.0)).collect();
    let mask: Vec<bool> = (0..n).flat_map(|b| (0..windows).map(move |w| w < valid[b])).collect();
    SequenceBatch::new(n, windows, rows, wl, data, mask).unwrap()
}

#[test]
fn best_config_gradients_on_sampled_coordinates() {
    let layout = SensorLayout::numbered(2);
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = build_model(&ModelConfig::best(), &layout, 8, seed).unwrap();
        let batch = random_batch(&mut rng, 2, 10, 12, 8, &[10, 7]);
        let labels = [rng.random_range(0..3), rng.random_range(0..3)];
        let r = network_check(&m.network, &batch, &labels, Mode::Training { dropout_seed: seed }, Some(3), &mut rng).unwrap();
        assert_eq!(r.check.coordinates, 3 * m.network.params().len());
        assert!(r.kinks_skipped * 4 <= r.check.coordinates, "seed {seed}: {} kinks", r.kinks_skipped);
        assert!(r.check.max_rel_err < 1e-4, "seed {seed}: {:e}", r.check.max_rel_err);
    }
}

#[test]
fn appended_padding_windows_leave_probabilities_unchanged() {
    let layout = SensorLayout::numbered(1);
    let config = ModelConfig {
        lstm_units: 16,
        dense_units: vec![8],
        windows: 4,
        ..ModelConfig::best()
    };
    let m = build_model(&config, &layout, 6, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let valid = rng.random_range(1..=4);
        let base = random_batch(&mut rng, 1, 4, 6, 6, &[valid]);
        let p0 = m.network.predict(&base).unwrap();
        let extra = rng.random_range(1..=5);
        let mut data = base.data.clone();
        data.extend(std::iter::repeat_n(0.0, extra * 6 * 6));
        let mut mask = base.mask.clone();
        mask.extend(std::iter::repeat_n(false, extra));
        let longer = SequenceBatch::new(1, 4 + extra, 6, 6, data, mask).unwrap();
        assert_eq!(m.network.predict(&longer).unwrap(), p0);
    }
}

#[test]
fn one_small_step_lowers_the_loss() {
    let layout = SensorLayout::numbered(1);
    for reg in [Regularization::Dropout, Regularization::Batchnorm] {
        let config = ModelConfig {
            regularization: reg,
            lstm_units: 16,
            dense_units: vec![8],
            windows: 3,
            ..ModelConfig::best()
        };
        let mut m = build_model(&config, &layout, 8, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = random_batch(&mut rng, 4, 3, 6, 8, &[3, 3, 2, 1]);
        let labels = [0, 1, 2, 1];
        let mode = Mode::Training { dropout_seed: 5 };
        let before = m.network.loss(&batch, &labels, mode).unwrap();
        let mut opt = OptimizerState::new(
            repscore_nn::AdamConfig {
                learning_rate: 1e-5,
                ..Default::default()
            },
            m.network.params(),
        );
        m.network.train_step(&batch, &labels, &mut opt, 5).unwrap();
        let after = m.network.loss(&batch, &labels, mode).unwrap();
        assert!(after < before, "{reg}: {after} >= {before}");
    }
}

#[test]
fn builds_are_seed_deterministic() {
    let layout = SensorLayout::numbered(2);
    let c = ModelConfig {
        lstm_units: 8,
        dense_units: vec![4],
        ..ModelConfig::best()
    };
    let a = build_model(&c, &layout, 5, 1).unwrap();
    let b = build_model(&c, &layout, 5, 1).unwrap();
    let d = build_model(&c, &layout, 5, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.network.params(), d.network.params());
}

#[test]
fn wrong_window_count_is_rejected() {
    let layout = SensorLayout::numbered(1);
    let m = build_model(&ModelConfig::best(), &layout, 4, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = random_batch(&mut rng, 1, 9, 6, 4, &[9]);
    assert!(m.forward_classify(&batch).is_err());
}

#[test]
fn config_serialisation_round_trips() {
    for c in grid() {
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
    }
    let bad = ModelConfig {
        batch_size: 12,
        ..ModelConfig::best()
    };
    assert!(bad.validate().is_err());
}
