use proptest::prelude::*;
use repscore_nn::layers::{Dropout, Lstm};
use repscore_nn::loss::softmax_rows;
use repscore_nn::{Activation, BranchSpec, LayerSpec, Mode, Network, NetworkSpec, SequenceBatch};

fn spec() -> NetworkSpec {
    NetworkSpec {
        input_rows: 3,
        window_len: 4,
        branches: vec![BranchSpec {
            row_start: 0,
            row_end: 3,
            layers: vec![
                LayerSpec::Conv2d {
                    filters: 2,
                    kernel: [3, 3],
                    activation: Activation::Elu,
                },
                LayerSpec::Maxpool2d,
                LayerSpec::Dropout { rate: 0.2 },
            ],
        }],
        head: vec![
            LayerSpec::Masking,
            LayerSpec::Lstm {
                units: 4,
                return_sequences: false,
            },
            LayerSpec::Dense {
                units: 3,
                activation: Activation::Identity,
            },
            LayerSpec::Softmax,
        ],
    }
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(logits in prop::collection::vec(-50.0f64..50.0, 3..30)) {
        let n = logits.len() / 3 * 3;
        for row in softmax_rows(&logits[..n], 3).chunks(3) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dropout_is_identity_at_inference(x in prop::collection::vec(-10.0f64..10.0, 1..50), rate in 0.0f64..0.9) {
        let d = Dropout::new(rate).unwrap();
        prop_assert_eq!(d.forward(&x, None).out, x);
    }

    #[test]
    fn masked_steps_leave_state_unchanged(seed in 0u64..1000, x in prop::collection::vec(-2.0f64..2.0, 12), masked in 0usize..4) {
        let l = Lstm::glorot(3, 2, seed).unwrap();
        let mut mask = vec![true; 4];
        mask[masked] = false;
        let c = l.forward(&x, 4, 1, &mask, true).unwrap();
        let prev = if masked == 0 { vec![0.0, 0.0] } else { c.out[(masked - 1) * 2..masked * 2].to_vec() };
        prop_assert_eq!(&c.out[masked * 2..masked * 2 + 2], &prev[..]);
    }

    #[test]
    fn batch_permutation_permutes_outputs(seed in 0u64..100, data in prop::collection::vec(-1.0f64..1.0, 3 * 2 * 12)) {
        let net = Network::build(spec(), seed).unwrap();
        let mask = vec![true, true, true, false, true, true];
        let batch = SequenceBatch::new(3, 2, 3, 4, data.clone(), mask.clone()).unwrap();
        let p = net.predict(&batch).unwrap();
        // reverse sample order
        let rdata: Vec<f64> = data.chunks(24).rev().flatten().copied().collect();
        let rmask: Vec<bool> = mask.chunks(2).rev().flatten().copied().collect();
        let rp = net.predict(&SequenceBatch::new(3, 2, 3, 4, rdata, rmask).unwrap()).unwrap();
        let back: Vec<f64> = rp.chunks(3).rev().flatten().copied().collect();
        prop_assert_eq!(p, back);
    }

    #[test]
    fn training_forward_is_deterministic(seed in 0u64..100, data in prop::collection::vec(-1.0f64..1.0, 2 * 12)) {
        let net = Network::build(spec(), seed).unwrap();
        let batch = SequenceBatch::new(1, 2, 3, 4, data, vec![true, true]).unwrap();
        let a = net.forward(&batch, Mode::Training { dropout_seed: seed }).unwrap().probs;
        let b = net.forward(&batch, Mode::Training { dropout_seed: seed }).unwrap().probs;
        prop_assert_eq!(a, b);
    }
}

#[test]
fn build_is_seed_deterministic() {
    assert_eq!(Network::build(spec(), 3).unwrap(), Network::build(spec(), 3).unwrap());
    assert_ne!(Network::build(spec(), 3).unwrap(), Network::build(spec(), 4).unwrap());
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = spec();
    s.head.remove(0);
    assert!(Network::build(s, 0).is_err());
    let mut s = spec();
    s.branches[0].row_end = 9;
    assert!(Network::build(s, 0).is_err());
    let mut s = spec();
    s.branches[0].layers[2] = LayerSpec::Dropout { rate: 1.0 };
    assert!(Network::build(s, 0).is_err());
    let mut s = spec();
    s.head[1] = LayerSpec::Lstm {
        units: 4,
        return_sequences: true,
    };
    assert!(Network::build(s, 0).is_err());
}
