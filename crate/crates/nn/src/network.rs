//! Windowed CNN-LSTM classifier.
//!
//! A sample is a sequence of windows, each a `rows x window_len` matrix. Every
//! branch owns a contiguous row range and a CNN stack that is applied to each
//! window independently with weights shared across windows. Branch outputs
//! are flattened, concatenated per window and fed as steps to a masked LSTM
//! stack, followed by dense layers and a softmax.

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{shape_err, NnError, Result};
use crate::layers::batchnorm::BatchNormCache;
use crate::layers::conv::ConvCache;
use crate::layers::dense::DenseCache;
use crate::layers::dropout::DropoutCache;
use crate::layers::lstm::LstmCache;
use crate::layers::pool::{pooled_extent, PoolCache};
use crate::layers::{BatchNorm, Conv2d, Dense, Dropout, FeatureMap, Lstm, MaxPool2d};
use crate::loss::{softmax_rows, softmax_xent};
use crate::optim::{adam_step, OptimizerState};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        activation: Activation,
    },
    Maxpool2d,
    Dropout {
        rate: f64,
    },
    Batchnorm,
    Masking,
    Lstm {
        units: usize,
        return_sequences: bool,
    },
    Dense {
        units: usize,
        activation: Activation,
    },
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub row_start: usize,
    pub row_end: usize,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_rows: usize,
    pub window_len: usize,
    pub branches: Vec<BranchSpec>,
    /// Masking, one or more LSTM layers, dense layers, softmax.
    pub head: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Output `(h, w, c)` of each branch for one window.
    pub fn branch_output_dims(&self) -> Vec<(usize, usize, usize)> {
        self.branches
            .iter()
            .map(|b| {
                let (mut h, mut w, mut c) = (b.row_end - b.row_start, self.window_len, 1);
                for l in &b.layers {
                    match l {
                        LayerSpec::Conv2d { filters, .. } => c = *filters,
                        LayerSpec::Maxpool2d => {
                            h = pooled_extent(h);
                            w = pooled_extent(w);
                        }
                        _ => {}
                    }
                }
                (h, w, c)
            })
            .collect()
    }

    pub fn step_features(&self) -> usize {
        self.branch_output_dims().iter().map(|(h, w, c)| h * w * c).sum()
    }

    pub fn classes(&self) -> usize {
        self.head
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Dense { units, .. } => Some(*units),
                _ => None,
            })
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::InvalidArgument(m));
        if self.input_rows == 0 || self.window_len == 0 {
            return bad("input rows and window length must be >= 1".into());
        }
        if self.branches.is_empty() {
            return bad("network needs at least one branch".into());
        }
        for (i, b) in self.branches.iter().enumerate() {
            if b.row_start >= b.row_end || b.row_end > self.input_rows {
                return bad(format!(
                    "branch {i} rows {}..{} outside 0..{}",
                    b.row_start, b.row_end, self.input_rows
                ));
            }
            for l in &b.layers {
                match l {
                    LayerSpec::Conv2d { filters, kernel, .. } => {
                        if *filters == 0 || kernel[0] == 0 || kernel[1] == 0 {
                            return bad(format!("branch {i}: conv dims must be >= 1"));
                        }
                    }
                    LayerSpec::Dropout { rate } => {
                        if !(0.0..1.0).contains(rate) {
                            return bad(format!("branch {i}: dropout rate {rate} not in [0,1)"));
                        }
                    }
                    LayerSpec::Maxpool2d | LayerSpec::Batchnorm => {}
                    other => return bad(format!("branch {i}: {other:?} not allowed in a CNN branch")),
                }
            }
        }
        let mut it = self.head.iter().peekable();
        if it.next() != Some(&LayerSpec::Masking) {
            return bad("head must start with a masking layer".into());
        }
        let mut lstms = Vec::new();
        while let Some(LayerSpec::Lstm {
            units,
            return_sequences,
        }) = it.peek()
        {
            if *units == 0 {
                return bad("lstm units must be >= 1".into());
            }
            lstms.push(*return_sequences);
            it.next();
        }
        if lstms.is_empty() {
            return bad("head needs at least one lstm layer".into());
        }
        let last = lstms.len() - 1;
        if lstms.iter().enumerate().any(|(i, &rs)| rs != (i != last)) {
            return bad("all but the last lstm layer must return sequences".into());
        }
        let mut dense = 0;
        while let Some(LayerSpec::Dense { units, .. }) = it.peek() {
            if *units == 0 {
                return bad("dense units must be >= 1".into());
            }
            dense += 1;
            it.next();
        }
        if dense == 0 || it.next() != Some(&LayerSpec::Softmax) || it.next().is_some() {
            return bad("head must end with dense layers followed by softmax".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum CnnLayer {
    Conv(Conv2d),
    Pool(MaxPool2d),
    Dropout(Dropout),
    BatchNorm(BatchNorm),
}

#[derive(Debug, Clone)]
enum CnnCache {
    Conv(ConvCache),
    Pool(PoolCache),
    Dropout(DropoutCache),
    BatchNorm(BatchNormCache),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inference,
    Training { dropout_seed: u64 },
}

/// A batch of windowed samples. `data` is `batch x steps x rows x cols`,
/// `mask` is `batch x steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub batch: usize,
    pub steps: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub mask: Vec<bool>,
}

impl SequenceBatch {
    pub fn new(batch: usize, steps: usize, rows: usize, cols: usize, data: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if data.len() != batch * steps * rows * cols {
            return shape_err(format!(
                "batch data has {} values, expected {batch}x{steps}x{rows}x{cols}",
                data.len()
            ));
        }
        if mask.len() != batch * steps {
            return shape_err(format!("mask has {} entries, expected {batch}x{steps}", mask.len()));
        }
        Ok(SequenceBatch {
            batch,
            steps,
            rows,
            cols,
            data,
            mask,
        })
    }

    /// Stacks single samples (each `steps x rows x cols` with a `steps` mask).
    pub fn stack<'a>(samples: impl IntoIterator<Item = (&'a [f64], &'a [bool])>, rows: usize, cols: usize) -> Result<Self> {
        let mut data = Vec::new();
        let mut mask = Vec::new();
        let mut batch = 0;
        let mut steps = None;
        for (d, m) in samples {
            if *steps.get_or_insert(m.len()) != m.len() {
                return shape_err("samples in a batch must share the window count");
            }
            data.extend_from_slice(d);
            mask.extend_from_slice(m);
            batch += 1;
        }
        SequenceBatch::new(batch, steps.unwrap_or(0), rows, cols, data, mask)
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    steps: usize,
    branches: Vec<Vec<CnnCache>>,
    lstm: Vec<LstmCache>,
    dense: Vec<DenseCache>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    branches: Vec<Vec<CnnLayer>>,
    lstm: Vec<Lstm>,
    dense: Vec<Dense>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: f64,
    pub probs: Vec<f64>,
}

impl Network {
    /// Builds a network with Glorot-uniform weights; every layer gets its own
    /// seed derived from `seed`.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut layer_no = 0u64;
        let mut next_seed = || {
            layer_no += 1;
            derive_seed(seed, layer_no)
        };
        let mut branches = Vec::new();
        for b in &spec.branches {
            let mut c = 1;
            let mut layers = Vec::new();
            for l in &b.layers {
                layers.push(match l {
                    LayerSpec::Conv2d {
                        filters,
                        kernel,
                        activation,
                    } => {
                        let conv = Conv2d::glorot(kernel[0], kernel[1], c, *filters, *activation, next_seed())?;
                        c = *filters;
                        CnnLayer::Conv(conv)
                    }
                    LayerSpec::Maxpool2d => CnnLayer::Pool(MaxPool2d),
                    LayerSpec::Dropout { rate } => CnnLayer::Dropout(Dropout::new(*rate)?),
                    LayerSpec::Batchnorm => CnnLayer::BatchNorm(BatchNorm::new(c)?),
                    _ => unreachable!("validated"),
                });
            }
            branches.push(layers);
        }
        let mut inputs = spec.step_features();
        let mut lstm = Vec::new();
        let mut dense = Vec::new();
        for l in &spec.head {
            match l {
                LayerSpec::Lstm { units, .. } => {
                    lstm.push(Lstm::glorot(inputs, *units, next_seed())?);
                    inputs = *units;
                }
                LayerSpec::Dense { units, activation } => {
                    dense.push(Dense::glorot(inputs, *units, *activation, next_seed())?);
                    inputs = *units;
                }
                _ => {}
            }
        }
        Ok(Network {
            spec,
            branches,
            lstm,
            dense,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn classes(&self) -> usize {
        self.dense.last().map(|d| d.units()).unwrap_or(0)
    }

    /// Trainable tensors in a fixed order: branch convs and batchnorm
    /// scales, then LSTM kernels, then dense layers.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for b in &self.branches {
            for l in b {
                match l {
                    CnnLayer::Conv(c) => out.extend([&c.kernel, &c.bias]),
                    CnnLayer::BatchNorm(bn) => out.extend([&bn.gamma, &bn.beta]),
                    _ => {}
                }
            }
        }
        for l in &self.lstm {
            out.extend([&l.kernel, &l.recurrent, &l.bias]);
        }
        for d in &self.dense {
            out.extend([&d.weights, &d.bias]);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for b in &mut self.branches {
            for l in b {
                match l {
                    CnnLayer::Conv(c) => out.extend([&mut c.kernel, &mut c.bias]),
                    CnnLayer::BatchNorm(bn) => out.extend([&mut bn.gamma, &mut bn.beta]),
                    _ => {}
                }
            }
        }
        for l in &mut self.lstm {
            out.extend([&mut l.kernel, &mut l.recurrent, &mut l.bias]);
        }
        for d in &mut self.dense {
            out.extend([&mut d.weights, &mut d.bias]);
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (bi, b) in self.branches.iter().enumerate() {
            for (li, l) in b.iter().enumerate() {
                match l {
                    CnnLayer::Conv(_) => {
                        out.push(format!("branch{bi}.layer{li}.conv.kernel"));
                        out.push(format!("branch{bi}.layer{li}.conv.bias"));
                    }
                    CnnLayer::BatchNorm(_) => {
                        out.push(format!("branch{bi}.layer{li}.batchnorm.gamma"));
                        out.push(format!("branch{bi}.layer{li}.batchnorm.beta"));
                    }
                    _ => {}
                }
            }
        }
        for i in 0..self.lstm.len() {
            out.push(format!("lstm{i}.kernel"));
            out.push(format!("lstm{i}.recurrent"));
            out.push(format!("lstm{i}.bias"));
        }
        for i in 0..self.dense.len() {
            out.push(format!("dense{i}.weights"));
            out.push(format!("dense{i}.bias"));
        }
        out
    }

    /// Non-trainable state (batchnorm running statistics), in a fixed order.
    pub fn state(&self) -> Vec<&Tensor> {
        self.branches
            .iter()
            .flatten()
            .filter_map(|l| match l {
                CnnLayer::BatchNorm(bn) => Some([&bn.running_mean, &bn.running_var]),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor> {
        self.branches
            .iter_mut()
            .flatten()
            .filter_map(|l| match l {
                CnnLayer::BatchNorm(bn) => Some([&mut bn.running_mean, &mut bn.running_var]),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn check_batch(&self, batch: &SequenceBatch) -> Result<()> {
        if batch.rows != self.spec.input_rows || batch.cols != self.spec.window_len {
            return shape_err(format!(
                "network expects windows of {}x{}, got {}x{}",
                self.spec.input_rows, self.spec.window_len, batch.rows, batch.cols
            ));
        }
        if batch.batch == 0 || batch.steps == 0 {
            return shape_err("empty batch");
        }
        if batch.data.len() != batch.batch * batch.steps * batch.rows * batch.cols
            || batch.mask.len() != batch.batch * batch.steps
        {
            return shape_err("batch data or mask length inconsistent with its dimensions");
        }
        Ok(())
    }

    pub fn forward(&self, batch: &SequenceBatch, mode: Mode) -> Result<ForwardCache> {
        self.check_batch(batch)?;
        let (nb, steps) = (batch.batch, batch.steps);
        let images = nb * steps;
        let window = batch.rows * batch.cols;
        let mut branch_caches = Vec::with_capacity(self.branches.len());
        let mut branch_outs: Vec<FeatureMap> = Vec::with_capacity(self.branches.len());
        for (bi, (layers, bspec)) in self.branches.iter().zip(&self.spec.branches).enumerate() {
            let h = bspec.row_end - bspec.row_start;
            let mut data = Vec::with_capacity(images * h * batch.cols);
            for img in 0..images {
                let base = img * window + bspec.row_start * batch.cols;
                data.extend_from_slice(&batch.data[base..base + h * batch.cols]);
            }
            let mut cur = FeatureMap::new(images, h, batch.cols, 1, data)?;
            let mut caches = Vec::with_capacity(layers.len());
            for (li, layer) in layers.iter().enumerate() {
                let cache = match layer {
                    CnnLayer::Conv(c) => {
                        let cc = c.forward(&cur)?;
                        cur = cc.out.clone();
                        CnnCache::Conv(cc)
                    }
                    CnnLayer::Pool(p) => {
                        let pc = p.forward(&cur);
                        cur = pc.out.clone();
                        CnnCache::Pool(pc)
                    }
                    CnnLayer::Dropout(d) => {
                        let seed = match mode {
                            Mode::Training { dropout_seed } => Some(derive_seed(dropout_seed, (bi * 1000 + li) as u64)),
                            Mode::Inference => None,
                        };
                        let dc = d.forward(&cur.data, seed);
                        cur.data.copy_from_slice(&dc.out);
                        CnnCache::Dropout(dc)
                    }
                    CnnLayer::BatchNorm(bn) => {
                        let bc = bn.forward(&cur.data, matches!(mode, Mode::Training { .. }))?;
                        cur.data.copy_from_slice(&bc.out);
                        CnnCache::BatchNorm(bc)
                    }
                };
                caches.push(cache);
            }
            branch_caches.push(caches);
            branch_outs.push(cur);
        }

        // flatten + concatenate into step-major LSTM input
        let features: usize = branch_outs.iter().map(|f| f.image_len()).sum();
        let mut seq = vec![0.0; images * features];
        let mut mask = vec![false; images];
        for t in 0..steps {
            for b in 0..nb {
                let row = t * nb + b;
                let img = b * steps + t;
                mask[row] = batch.mask[img];
                let mut off = row * features;
                for fm in &branch_outs {
                    let len = fm.image_len();
                    seq[off..off + len].copy_from_slice(&fm.data[img * len..(img + 1) * len]);
                    off += len;
                }
            }
        }

        let mut lstm_caches = Vec::with_capacity(self.lstm.len());
        let mut x = seq;
        let last = self.lstm.len() - 1;
        for (i, l) in self.lstm.iter().enumerate() {
            let lc = l.forward(&x, steps, nb, &mask, i != last)?;
            x = lc.out.clone();
            lstm_caches.push(lc);
        }
        let mut dense_caches = Vec::with_capacity(self.dense.len());
        for d in &self.dense {
            let dc = d.forward(&x)?;
            x = dc.out.clone();
            dense_caches.push(dc);
        }
        let classes = self.classes();
        let probs = softmax_rows(&x, classes);
        Ok(ForwardCache {
            batch: nb,
            steps,
            branches: branch_caches,
            lstm: lstm_caches,
            dense: dense_caches,
            logits: x,
            probs,
        })
    }

    /// Class probabilities, `batch x classes`.
    pub fn predict(&self, batch: &SequenceBatch) -> Result<Vec<f64>> {
        Ok(self.forward(batch, Mode::Inference)?.probs)
    }

    /// Mean cross-entropy of a forward pass.
    pub fn loss(&self, batch: &SequenceBatch, labels: &[usize], mode: Mode) -> Result<f64> {
        let cache = self.forward(batch, mode)?;
        Ok(softmax_xent(&cache.logits, self.classes(), labels)?.loss)
    }

    /// Loss and gradients (aligned with [`Network::params`]) for a cached
    /// forward pass.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
        if labels.len() != cache.batch {
            return shape_err(format!("{} labels for a batch of {}", labels.len(), cache.batch));
        }
        let lo = softmax_xent(&cache.logits, self.classes(), labels)?;
        let mut d = lo.d_logits;

        let mut dense_grads = Vec::with_capacity(self.dense.len());
        for (layer, c) in self.dense.iter().zip(&cache.dense).rev() {
            let (dx, g) = layer.backward(c, &d);
            dense_grads.push(g);
            d = dx;
        }
        dense_grads.reverse();

        let mut lstm_grads = Vec::with_capacity(self.lstm.len());
        for (layer, c) in self.lstm.iter().zip(&cache.lstm).rev() {
            let (dx, g) = layer.backward(c, &d, true);
            lstm_grads.push(g);
            d = dx;
        }
        lstm_grads.reverse();

        let (nb, steps) = (cache.batch, cache.steps);
        let dims = self.spec.branch_output_dims();
        let features: usize = dims.iter().map(|(h, w, c)| h * w * c).sum();
        let mut branch_grads = Vec::with_capacity(self.branches.len());
        let mut offset = 0;
        for (bi, layers) in self.branches.iter().enumerate() {
            let (h, w, c) = dims[bi];
            let len = h * w * c;
            let mut db = vec![0.0; nb * steps * len];
            for t in 0..steps {
                for b in 0..nb {
                    let row = t * nb + b;
                    let img = b * steps + t;
                    let src = row * features + offset;
                    db[img * len..(img + 1) * len].copy_from_slice(&d[src..src + len]);
                }
            }
            offset += len;
            let mut grads = Vec::new();
            for (li, (layer, c)) in layers.iter().zip(&cache.branches[bi]).enumerate().rev() {
                match (layer, c) {
                    (CnnLayer::Conv(conv), CnnCache::Conv(cc)) => {
                        let (dx, g) = conv.backward(cc, &db, li > 0);
                        grads.push(g);
                        db = dx;
                    }
                    (CnnLayer::Pool(p), CnnCache::Pool(pc)) => db = p.backward(pc, &db),
                    (CnnLayer::Dropout(dl), CnnCache::Dropout(dc)) => db = dl.backward(dc, &db),
                    (CnnLayer::BatchNorm(bn), CnnCache::BatchNorm(bc)) => {
                        let (dx, g) = bn.backward(bc, &db);
                        grads.push(g);
                        db = dx;
                    }
                    _ => unreachable!("cache/layer mismatch"),
                }
            }
            grads.reverse();
            branch_grads.push(grads);
        }

        let grads = branch_grads
            .into_iter()
            .flatten()
            .flatten()
            .chain(lstm_grads.into_iter().flatten())
            .chain(dense_grads.into_iter().flatten())
            .collect();
        Ok((lo.loss, grads))
    }

    /// Fingerprint of every non-differentiable routing decision in a forward
    /// pass: max-pool winners and the sign pattern feeding ReLU/leaky ReLU.
    /// Two passes with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self, cache: &ForwardCache) -> u64 {
        use std::hash::{Hash, Hasher};
        let piecewise = |a: Activation| matches!(a, Activation::Relu | Activation::Lrelu);
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (layers, caches) in self.branches.iter().zip(&cache.branches) {
            for (layer, c) in layers.iter().zip(caches) {
                match (layer, c) {
                    (CnnLayer::Conv(l), CnnCache::Conv(c)) if piecewise(l.activation) => {
                        c.pre_activation().iter().for_each(|v| (*v > 0.0).hash(&mut h));
                    }
                    (_, CnnCache::Pool(c)) => c.argmax().hash(&mut h),
                    _ => {}
                }
            }
        }
        for (layer, c) in self.dense.iter().zip(&cache.dense) {
            if piecewise(layer.activation) {
                c.pre_activation().iter().for_each(|v| (*v > 0.0).hash(&mut h));
            }
        }
        h.finish()
    }

    /// Folds training-pass batchnorm statistics into the running averages.
    pub fn commit_batch_stats(&mut self, cache: &ForwardCache) {
        for (layers, caches) in self.branches.iter_mut().zip(&cache.branches) {
            for (l, c) in layers.iter_mut().zip(caches) {
                if let (CnnLayer::BatchNorm(bn), CnnCache::BatchNorm(bc)) = (l, c) {
                    bn.commit(bc);
                }
            }
        }
    }

    /// One optimisation step: training forward, backward, running-stat
    /// update, Adam.
    pub fn train_step(
        &mut self,
        batch: &SequenceBatch,
        labels: &[usize],
        optimizer: &mut OptimizerState,
        dropout_seed: u64,
    ) -> Result<StepOutput> {
        let cache = self.forward(batch, Mode::Training { dropout_seed })?;
        let (loss, grads) = self.backward(&cache, labels)?;
        if !loss.is_finite() {
            return Err(NnError::NonFinite(format!("training loss {loss} at optimizer step {}", optimizer.step + 1)));
        }
        self.commit_batch_stats(&cache);
        adam_step(&mut self.params_mut(), &grads, optimizer)?;
        Ok(StepOutput {
            loss,
            probs: cache.probs,
        })
    }

    /// Replaces all parameters and state; shapes must match.
    pub fn load_tensors(&mut self, params: Vec<Tensor>, state: Vec<Tensor>) -> Result<()> {
        fn assign(dst: Vec<&mut Tensor>, src: Vec<Tensor>, what: &str) -> Result<()> {
            if dst.len() != src.len() {
                return Err(NnError::Checkpoint(format!("{what}: expected {} tensors, got {}", dst.len(), src.len())));
            }
            for (i, (d, s)) in dst.into_iter().zip(src).enumerate() {
                if d.shape() != s.shape() {
                    return Err(NnError::Checkpoint(format!(
                        "{what} {i}: shape {:?} != {:?}",
                        s.shape(),
                        d.shape()
                    )));
                }
                *d = s;
            }
            Ok(())
        }
        assign(self.params_mut(), params, "parameter")?;
        assign(self.state_mut(), state, "state")
    }
}
