use crate::activation::sigmoid;
use crate::error::{NnError, Result};
use crate::gemm::gemm;
use crate::init::glorot_uniform_init;
use crate::tensor::Tensor;

/// LSTM with tanh cell activation and sigmoid gates.
///
/// Gate order inside the `4 * units` axis is input, forget, candidate, output.
/// Sequences are laid out step-major: row `t * batch + b` holds step `t` of
/// sample `b`. A masked step leaves `(h, c)` of that sample untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub kernel: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: usize,
    batch: usize,
    return_sequences: bool,
    mask: Vec<bool>,
    input: Vec<f64>,
    /// Activated gates per step, `steps * batch x 4u`.
    gates: Vec<f64>,
    /// States before/after each step, `(steps + 1) * batch x u`.
    h: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    pub out: Vec<f64>,
}

impl Lstm {
    pub fn new(kernel: Tensor, recurrent: Tensor, bias: Tensor) -> Result<Self> {
        let ks = kernel.shape();
        let rs = recurrent.shape();
        if ks.len() != 2 || rs.len() != 2 || ks[1] == 0 || ks[1] % 4 != 0 {
            return Err(NnError::InvalidArgument(format!(
                "lstm kernel {ks:?} / recurrent {rs:?} malformed"
            )));
        }
        let units = ks[1] / 4;
        if rs != [units, 4 * units] || bias.shape() != [4 * units] || ks[0] == 0 {
            return Err(NnError::Shape(format!(
                "lstm weights disagree on units: kernel {ks:?}, recurrent {rs:?}, bias {:?}",
                bias.shape()
            )));
        }
        Ok(Lstm {
            kernel,
            recurrent,
            bias,
        })
    }

    /// Glorot-uniform kernels, zero bias except a forget-gate bias of one.
    pub fn glorot(inputs: usize, units: usize, seed: u64) -> Result<Self> {
        if units == 0 {
            return Err(NnError::InvalidArgument("lstm needs >= 1 unit".into()));
        }
        let kernel = glorot_uniform_init(inputs, 4 * units, vec![inputs, 4 * units], seed)?;
        let recurrent = glorot_uniform_init(
            units,
            4 * units,
            vec![units, 4 * units],
            crate::rng::derive_seed(seed, 1),
        )?;
        let mut bias = Tensor::zeros(vec![4 * units]);
        bias.values_mut()[units..2 * units].fill(1.0);
        Lstm::new(kernel, recurrent, bias)
    }

    pub fn inputs(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.recurrent.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.recurrent.len() + self.bias.len()
    }

    pub fn forward(
        &self,
        x: &[f64],
        steps: usize,
        batch: usize,
        mask: &[bool],
        return_sequences: bool,
    ) -> Result<LstmCache> {
        let (n_in, u) = (self.inputs(), self.units());
        let g4 = 4 * u;
        if x.len() != steps * batch * n_in {
            return Err(NnError::Shape(format!(
                "lstm expects {steps}x{batch}x{n_in} inputs, got {} values",
                x.len()
            )));
        }
        if mask.len() != steps * batch {
            return Err(NnError::Shape(format!(
                "lstm mask has {} entries for {steps} steps x {batch} samples",
                mask.len()
            )));
        }
        let rows = steps * batch;
        let mut zx = vec![0.0; rows * g4];
        for r in 0..rows {
            zx[r * g4..(r + 1) * g4].copy_from_slice(self.bias.values());
        }
        gemm(rows, n_in, g4, x, false, self.kernel.values(), false, 1.0, &mut zx);

        let mut gates = vec![0.0; rows * g4];
        let mut h = vec![0.0; (steps + 1) * batch * u];
        let mut c = vec![0.0; (steps + 1) * batch * u];
        let mut tanh_c = vec![0.0; rows * u];
        let su = batch * u;
        for t in 0..steps {
            let z = &mut zx[t * batch * g4..(t + 1) * batch * g4];
            let (h_prev, h_next) = h.split_at_mut((t + 1) * su);
            let h_prev = &h_prev[t * su..];
            gemm(batch, u, g4, h_prev, false, self.recurrent.values(), false, 1.0, z);
            let (c_prev, c_next) = c.split_at_mut((t + 1) * su);
            let c_prev = &c_prev[t * su..];
            for b in 0..batch {
                let hn = &mut h_next[b * u..(b + 1) * u];
                let cn = &mut c_next[b * u..(b + 1) * u];
                let hp = &h_prev[b * u..(b + 1) * u];
                let cp = &c_prev[b * u..(b + 1) * u];
                if !mask[t * batch + b] {
                    hn.copy_from_slice(hp);
                    cn.copy_from_slice(cp);
                    continue;
                }
                let zr = &z[b * g4..(b + 1) * g4];
                let gr = &mut gates[(t * batch + b) * g4..(t * batch + b + 1) * g4];
                let tc = &mut tanh_c[(t * batch + b) * u..(t * batch + b + 1) * u];
                for j in 0..u {
                    let i_g = sigmoid(zr[j]);
                    let f_g = sigmoid(zr[u + j]);
                    let c_g = zr[2 * u + j].tanh();
                    let o_g = sigmoid(zr[3 * u + j]);
                    gr[j] = i_g;
                    gr[u + j] = f_g;
                    gr[2 * u + j] = c_g;
                    gr[3 * u + j] = o_g;
                    let cv = f_g * cp[j] + i_g * c_g;
                    cn[j] = cv;
                    tc[j] = cv.tanh();
                    hn[j] = o_g * tc[j];
                }
            }
        }
        let out = if return_sequences {
            h[su..].to_vec()
        } else {
            h[steps * su..].to_vec()
        };
        Ok(LstmCache {
            steps,
            batch,
            return_sequences,
            mask: mask.to_vec(),
            input: x.to_vec(),
            gates,
            h,
            c,
            tanh_c,
            out,
        })
    }

    /// Returns `(d_input, [d_kernel, d_recurrent, d_bias])`. `d_input` is
    /// empty when `need_input_grad` is false.
    pub fn backward(
        &self,
        cache: &LstmCache,
        d_out: &[f64],
        need_input_grad: bool,
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (n_in, u) = (self.inputs(), self.units());
        let g4 = 4 * u;
        let (steps, batch) = (cache.steps, cache.batch);
        let su = batch * u;
        let rows = steps * batch;
        let mut dz_all = vec![0.0; rows * g4];
        let mut dh = vec![0.0; su];
        let mut dc = vec![0.0; su];
        if !cache.return_sequences {
            dh.copy_from_slice(d_out);
        }
        let mut dh_prev = vec![0.0; su];
        for t in (0..steps).rev() {
            if cache.return_sequences {
                for (a, &g) in dh.iter_mut().zip(&d_out[t * su..(t + 1) * su]) {
                    *a += g;
                }
            }
            let c_prev = &cache.c[t * su..(t + 1) * su];
            for b in 0..batch {
                if !cache.mask[t * batch + b] {
                    continue;
                }
                let r = t * batch + b;
                let gr = &cache.gates[r * g4..(r + 1) * g4];
                let tc = &cache.tanh_c[r * u..(r + 1) * u];
                let dz = &mut dz_all[r * g4..(r + 1) * g4];
                for j in 0..u {
                    let (i_g, f_g, c_g, o_g) = (gr[j], gr[u + j], gr[2 * u + j], gr[3 * u + j]);
                    let dhj = dh[b * u + j];
                    let d_o = dhj * tc[j];
                    let dcj = dc[b * u + j] + dhj * o_g * (1.0 - tc[j] * tc[j]);
                    dz[j] = dcj * c_g * i_g * (1.0 - i_g);
                    dz[u + j] = dcj * c_prev[b * u + j] * f_g * (1.0 - f_g);
                    dz[2 * u + j] = dcj * i_g * (1.0 - c_g * c_g);
                    dz[3 * u + j] = d_o * o_g * (1.0 - o_g);
                    dc[b * u + j] = dcj * f_g;
                }
            }
            // recurrent path; masked rows have zero dz and keep their dh
            gemm(
                batch,
                g4,
                u,
                &dz_all[t * batch * g4..(t + 1) * batch * g4],
                false,
                self.recurrent.values(),
                true,
                0.0,
                &mut dh_prev,
            );
            for b in 0..batch {
                let dst = &mut dh[b * u..(b + 1) * u];
                if cache.mask[t * batch + b] {
                    dst.copy_from_slice(&dh_prev[b * u..(b + 1) * u]);
                }
            }
        }

        let mut d_kernel = vec![0.0; n_in * g4];
        gemm(n_in, rows, g4, &cache.input, true, &dz_all, false, 0.0, &mut d_kernel);
        let mut d_rec = vec![0.0; u * g4];
        gemm(u, rows, g4, &cache.h[..rows * u], true, &dz_all, false, 0.0, &mut d_rec);
        let mut d_bias = vec![0.0; g4];
        for row in dz_all.chunks_exact(g4) {
            for (a, &g) in d_bias.iter_mut().zip(row) {
                *a += g;
            }
        }
        let mut d_in = Vec::new();
        if need_input_grad {
            d_in = vec![0.0; rows * n_in];
            gemm(rows, g4, n_in, &dz_all, false, self.kernel.values(), true, 0.0, &mut d_in);
        }
        (d_in, vec![d_kernel, d_rec, d_bias])
    }
}

/// Single-sequence LSTM: `steps` are `1 x in` tensors (or flat vectors).
/// Returns the final hidden state and the full output sequence.
pub fn lstm_layer(layer: &Lstm, steps: &[Tensor], mask: &[bool]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if mask.len() != steps.len() {
        return Err(NnError::Shape(format!(
            "mask length {} != step count {}",
            mask.len(),
            steps.len()
        )));
    }
    let mut x = Vec::with_capacity(steps.len() * layer.inputs());
    for s in steps {
        if s.len() != layer.inputs() {
            return Err(NnError::Shape(format!(
                "step has {} values, lstm expects {}",
                s.len(),
                layer.inputs()
            )));
        }
        x.extend_from_slice(s.values());
    }
    let cache = layer.forward(&x, steps.len(), 1, mask, true)?;
    let u = layer.units();
    let seq: Vec<Vec<f64>> = cache.out.chunks_exact(u).map(|c| c.to_vec()).collect();
    let last = seq.last().cloned().unwrap_or_else(|| vec![0.0; u]);
    Ok((last, seq))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_lstm(n_in: usize, u: usize) -> Lstm {
        Lstm::new(
            Tensor::zeros(vec![n_in, 4 * u]),
            Tensor::zeros(vec![u, 4 * u]),
            Tensor::zeros(vec![4 * u]),
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let l = zero_lstm(3, 2);
        let step = Tensor::new(vec![3], vec![5.0, -1.0, 2.0]).unwrap();
        let cache = l.forward(step.values(), 1, 1, &[true], false).unwrap();
        assert_eq!(cache.out, vec![0.0, 0.0]);
        let r = (0..4 * 2).map(|k| cache.gates[k]).collect::<Vec<_>>();
        assert_eq!(&r[0..4], &[0.5; 4]);
        assert_eq!(&r[4..6], &[0.0, 0.0]);
        assert_eq!(&r[6..8], &[0.5, 0.5]);
    }

    #[test]
    fn fully_masked_sequence_returns_initial_state() {
        let l = Lstm::glorot(3, 4, 5).unwrap();
        let steps: Vec<Tensor> = (0..3).map(|i| Tensor::filled(vec![3], i as f64)).collect();
        let (last, _) = lstm_layer(&l, &steps, &[false, false, false]).unwrap();
        assert_eq!(last, vec![0.0; 4]);
    }

    #[test]
    fn mask_length_mismatch_rejected() {
        let l = Lstm::glorot(2, 2, 1).unwrap();
        let steps = vec![Tensor::zeros(vec![2]); 2];
        assert!(lstm_layer(&l, &steps, &[true]).is_err());
    }

    #[test]
    fn units_mismatch_rejected() {
        assert!(Lstm::new(
            Tensor::zeros(vec![3, 8]),
            Tensor::zeros(vec![3, 12]),
            Tensor::zeros(vec![8])
        )
        .is_err());
    }
}
