//! Central finite-difference verification of analytic gradients.
//!
//! Every layer is probed with a random linear functional of its output, so
//! each check exercises the full vector-Jacobian product. Results report
//! the worst relative error rather than asserting, so callers pick their
//! own tolerance.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::activation::Activation;
use crate::error::Result;
use crate::layers::{BatchNorm, Conv2d, Dense, Dropout, FeatureMap, Lstm, MaxPool2d};
use crate::loss::softmax_xent;
use crate::network::{Mode, Network, SequenceBatch};
use crate::rng::seeded;
use crate::tensor::Tensor;

/// Step used for central differences.
pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that near-zero gradients
/// are compared absolutely.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub name: String,
    pub instances: usize,
    pub coordinates: usize,
    pub max_rel_err: f64,
}

impl GradCheck {
    fn new(name: &str) -> Self {
        GradCheck {
            name: name.to_string(),
            instances: 0,
            coordinates: 0,
            max_rel_err: 0.0,
        }
    }

    fn absorb(&mut self, (coords, err): (usize, f64)) {
        self.coordinates += coords;
        // NaN must surface as a failure
        if err.is_nan() || err > self.max_rel_err {
            self.max_rel_err = if err.is_nan() { f64::INFINITY } else { err };
        }
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Worst relative error between `analytic` and central differences of `f`
/// at `x`, over `coords` (all coordinates when `None`). Returns the number
/// of coordinates checked alongside.
pub fn fd_check(x: &[f64], analytic: &[f64], coords: Option<&[usize]>, f: impl Fn(&[f64]) -> f64) -> (usize, f64) {
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let mut xp = x.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        xp[i] = x[i] + STEP;
        let fp = f(&xp);
        xp[i] = x[i] - STEP;
        let fm = f(&xp);
        xp[i] = x[i];
        let e = rel_err(analytic[i], (fp - fm) / (2.0 * STEP));
        worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
    }
    (coords.len(), worst)
}

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const ACTS: [Activation; 5] = [
    Activation::Identity,
    Activation::Relu,
    Activation::Elu,
    Activation::Lrelu,
    Activation::Tanh,
];

/// Checks input and parameter gradients of every layer type over
/// `instances` seeded random instances each.
pub fn layer_suite(instances: u64) -> Result<Vec<GradCheck>> {
    let mut dense = GradCheck::new("dense");
    let mut conv = GradCheck::new("conv2d");
    let mut pool = GradCheck::new("maxpool2d");
    let mut dropout = GradCheck::new("dropout");
    let mut bn_train = GradCheck::new("batchnorm (training)");
    let mut bn_infer = GradCheck::new("batchnorm (inference)");
    let mut lstm = GradCheck::new("lstm (masked)");
    let mut xent = GradCheck::new("softmax cross-entropy");

    for seed in 0..instances {
        let mut rng = seeded(seed);
        let act = ACTS[seed as usize % ACTS.len()];

        let mut layer = Dense::glorot(4, 3, act, seed)?;
        layer.bias = Tensor::new(vec![3], randn(&mut rng, 3))?;
        let x = randn(&mut rng, 5 * 4);
        let w = randn(&mut rng, 5 * 3);
        let loss = |l: &Dense, x: &[f64]| dot(&l.forward(x).expect("shape checked").out, &w);
        let (dx, g) = layer.backward(&layer.forward(&x)?, &w);
        dense.absorb(fd_check(&x, &dx, None, |xp| loss(&layer, xp)));
        dense.absorb(fd_check(layer.weights.values(), &g[0], None, |p| {
            let mut l = layer.clone();
            l.weights.values_mut().copy_from_slice(p);
            loss(&l, &x)
        }));
        dense.absorb(fd_check(layer.bias.values(), &g[1], None, |p| {
            let mut l = layer.clone();
            l.bias.values_mut().copy_from_slice(p);
            loss(&l, &x)
        }));
        dense.instances += 1;

        let (kh, kw) = if seed % 2 == 0 { (3, 3) } else { (1, 5) };
        let mut layer = Conv2d::glorot(kh, kw, 2, 3, act, seed)?;
        layer.bias = Tensor::new(vec![3], randn(&mut rng, 3))?;
        let x = FeatureMap::new(2, 4, 5, 2, randn(&mut rng, 2 * 4 * 5 * 2))?;
        let w = randn(&mut rng, 2 * 4 * 5 * 3);
        let loss = |l: &Conv2d, x: &FeatureMap| dot(&l.forward(x).expect("shape checked").out.data, &w);
        let (dx, g) = layer.backward(&layer.forward(&x)?, &w, true);
        conv.absorb(fd_check(&x.data, &dx, None, |xp| {
            let mut x2 = x.clone();
            x2.data.copy_from_slice(xp);
            loss(&layer, &x2)
        }));
        conv.absorb(fd_check(layer.kernel.values(), &g[0], None, |p| {
            let mut l = layer.clone();
            l.kernel.values_mut().copy_from_slice(p);
            loss(&l, &x)
        }));
        conv.absorb(fd_check(layer.bias.values(), &g[1], None, |p| {
            let mut l = layer.clone();
            l.bias.values_mut().copy_from_slice(p);
            loss(&l, &x)
        }));
        conv.instances += 1;

        let (h, wd) = [(4, 6), (5, 7), (1, 6)][seed as usize % 3];
        let x = FeatureMap::new(2, h, wd, 3, randn(&mut rng, 2 * h * wd * 3))?;
        let cache = MaxPool2d.forward(&x);
        let w = randn(&mut rng, cache.out.data.len());
        let dx = MaxPool2d.backward(&cache, &w);
        pool.absorb(fd_check(&x.data, &dx, None, |xp| {
            let mut x2 = x.clone();
            x2.data.copy_from_slice(xp);
            dot(&MaxPool2d.forward(&x2).out.data, &w)
        }));
        pool.instances += 1;

        let layer = Dropout::new(0.2)?;
        let x = randn(&mut rng, 40);
        let w = randn(&mut rng, 40);
        let dx = layer.backward(&layer.forward(&x, Some(seed)), &w);
        dropout.absorb(fd_check(&x, &dx, None, |xp| dot(&layer.forward(xp, Some(seed)).out, &w)));
        dropout.instances += 1;

        for (training, report) in [(true, &mut bn_train), (false, &mut bn_infer)] {
            let mut layer = BatchNorm::new(3)?;
            layer.gamma = Tensor::new(vec![3], randn(&mut rng, 3))?;
            layer.beta = Tensor::new(vec![3], randn(&mut rng, 3))?;
            layer.running_mean = Tensor::new(vec![3], randn(&mut rng, 3))?;
            layer.running_var = Tensor::new(vec![3], randn(&mut rng, 3).iter().map(|v| v.abs() + 0.5).collect())?;
            let x = randn(&mut rng, 8 * 3);
            let w = randn(&mut rng, 8 * 3);
            let loss = |l: &BatchNorm, x: &[f64]| dot(&l.forward(x, training).expect("shape checked").out, &w);
            let (dx, g) = layer.backward(&layer.forward(&x, training)?, &w);
            report.absorb(fd_check(&x, &dx, None, |xp| loss(&layer, xp)));
            report.absorb(fd_check(layer.gamma.values(), &g[0], None, |p| {
                let mut l = layer.clone();
                l.gamma.values_mut().copy_from_slice(p);
                loss(&l, &x)
            }));
            report.absorb(fd_check(layer.beta.values(), &g[1], None, |p| {
                let mut l = layer.clone();
                l.beta.values_mut().copy_from_slice(p);
                loss(&l, &x)
            }));
            report.instances += 1;
        }

        let (steps, batch, n_in, u) = (4, 3, 5, 3);
        let mut layer = Lstm::glorot(n_in, u, seed)?;
        layer.bias = Tensor::new(vec![4 * u], randn(&mut rng, 4 * u))?;
        let return_sequences = seed % 2 == 0;
        let x = randn(&mut rng, steps * batch * n_in);
        // sample 0 fully valid, sample 1 padded after 2 steps, sample 2 has a gap
        let mut mask = vec![true; steps * batch];
        mask[2 * batch + 1] = false;
        mask[3 * batch + 1] = false;
        mask[batch + 2] = false;
        let w = randn(&mut rng, if return_sequences { steps * batch * u } else { batch * u });
        let loss = |l: &Lstm, x: &[f64]| {
            dot(&l.forward(x, steps, batch, &mask, return_sequences).expect("shape checked").out, &w)
        };
        let (dx, g) = layer.backward(&layer.forward(&x, steps, batch, &mask, return_sequences)?, &w, true);
        lstm.absorb(fd_check(&x, &dx, None, |xp| loss(&layer, xp)));
        for (k, gk) in g.iter().enumerate() {
            let base = [&layer.kernel, &layer.recurrent, &layer.bias][k].values().to_vec();
            lstm.absorb(fd_check(&base, gk, None, |p| {
                let mut l = layer.clone();
                [&mut l.kernel, &mut l.recurrent, &mut l.bias][k].values_mut().copy_from_slice(p);
                loss(&l, &x)
            }));
        }
        lstm.instances += 1;

        let logits: Vec<f64> = randn(&mut rng, 4 * 3).iter().map(|v| 3.0 * v).collect();
        let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
        let out = softmax_xent(&logits, 3, &labels)?;
        xent.absorb(fd_check(&logits, &out.d_logits, None, |l| {
            softmax_xent(l, 3, &labels).expect("shape checked").loss
        }));
        xent.instances += 1;
    }
    Ok(vec![dense, conv, pool, dropout, bn_train, bn_infer, lstm, xent])
}

/// Checks the loss gradient of every parameter tensor of `net`. With
/// `per_tensor = Some(k)` only `k` randomly chosen coordinates of each
/// tensor are probed (drawn from `rng`).
///
/// A central difference is only meaningful on a smooth piece of the loss.
/// Coordinates whose `±STEP` evaluations change a max-pool winner or a
/// ReLU-family sign relative to the unperturbed pass straddle a kink; they
/// are skipped, counted in `kinks_skipped`, and (when sampling) replaced by
/// another coordinate.
pub fn network_check(
    net: &Network,
    batch: &SequenceBatch,
    labels: &[usize],
    mode: Mode,
    per_tensor: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<NetworkCheck> {
    let cache = net.forward(batch, mode)?;
    let signature = net.kink_signature(&cache);
    let (_, grads) = net.backward(&cache, labels)?;
    let mut report = NetworkCheck {
        check: GradCheck::new("network"),
        kinks_skipped: 0,
    };
    report.check.instances = 1;
    let params = net.params();
    for (k, g) in grads.iter().enumerate() {
        let base = params[k].values();
        let order: Vec<usize> = match per_tensor {
            Some(_) => sample(rng, base.len(), base.len()).into_vec(),
            None => (0..base.len()).collect(),
        };
        let want = per_tensor.unwrap_or(base.len()).min(base.len());
        let mut done = 0;
        let mut probe = net.clone();
        for i in order {
            if done == want {
                break;
            }
            let mut eval = |v: f64| -> Result<(f64, u64)> {
                probe.params_mut()[k].values_mut()[i] = v;
                let c = probe.forward(batch, mode)?;
                Ok((crate::loss::softmax_xent(&c.logits, probe.classes(), labels)?.loss, probe.kink_signature(&c)))
            };
            let (fp, sp) = eval(base[i] + STEP)?;
            let (fm, sm) = eval(base[i] - STEP)?;
            probe.params_mut()[k].values_mut()[i] = base[i];
            if sp != signature || sm != signature {
                report.kinks_skipped += 1;
                continue;
            }
            report.check.absorb((1, rel_err(g[i], (fp - fm) / (2.0 * STEP))));
            done += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkCheck {
    #[serde(flatten)]
    pub check: GradCheck,
    pub kinks_skipped: usize,
}
