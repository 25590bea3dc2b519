use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Matrix, Parameters};

/// Single-layer unidirectional LSTM.
///
/// Gates are input (`i`), forget (`f`), output (`o`) and the tanh candidate
/// (`g`); `w_*` act on the input, `u_*` on the previous hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_g: Matrix,
    pub u_i: Matrix,
    pub u_f: Matrix,
    pub u_o: Matrix,
    pub u_g: Matrix,
    pub b_i: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_g: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        assert!(
            input_dim > 0 && hidden_dim > 0,
            "LSTM dims must be positive"
        );
        let w = || Matrix::zeros(hidden_dim, input_dim);
        let u = || Matrix::zeros(hidden_dim, hidden_dim);
        let b = || vec![0.0; hidden_dim];
        LstmParams {
            input_dim,
            hidden_dim,
            w_i: w(),
            w_f: w(),
            w_o: w(),
            w_g: w(),
            u_i: u(),
            u_f: u(),
            u_o: u(),
            u_g: u(),
            b_i: b(),
            b_f: b(),
            b_o: b(),
            b_g: b(),
        }
    }

    /// Matrices uniform in ±1/√hidden_dim, zero biases except a forget-gate
    /// bias of 1.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut p = LstmParams::zeros(input_dim, hidden_dim);
        for m in [&mut p.w_i, &mut p.w_f, &mut p.w_o, &mut p.w_g] {
            *m = Matrix::uniform(hidden_dim, input_dim, bound, rng);
        }
        for m in [&mut p.u_i, &mut p.u_f, &mut p.u_o, &mut p.u_g] {
            *m = Matrix::uniform(hidden_dim, hidden_dim, bound, rng);
        }
        p.b_f.fill(1.0);
        p
    }

    fn check_shapes(&self) {
        for w in [&self.w_i, &self.w_f, &self.w_o, &self.w_g] {
            assert_eq!(
                (w.rows(), w.cols()),
                (self.hidden_dim, self.input_dim),
                "LSTM W shape"
            );
        }
        for u in [&self.u_i, &self.u_f, &self.u_o, &self.u_g] {
            assert_eq!(
                (u.rows(), u.cols()),
                (self.hidden_dim, self.hidden_dim),
                "LSTM U shape"
            );
        }
        for b in [&self.b_i, &self.b_f, &self.b_o, &self.b_g] {
            assert_eq!(b.len(), self.hidden_dim, "LSTM bias shape");
        }
    }
}

impl Parameters for LstmParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w_i.as_slice(),
            self.w_f.as_slice(),
            self.w_o.as_slice(),
            self.w_g.as_slice(),
            self.u_i.as_slice(),
            self.u_f.as_slice(),
            self.u_o.as_slice(),
            self.u_g.as_slice(),
            &self.b_i,
            &self.b_f,
            &self.b_o,
            &self.b_g,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_i.as_mut_slice(),
            self.w_f.as_mut_slice(),
            self.w_o.as_mut_slice(),
            self.w_g.as_mut_slice(),
            self.u_i.as_mut_slice(),
            self.u_f.as_mut_slice(),
            self.u_o.as_mut_slice(),
            self.u_g.as_mut_slice(),
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_g,
        ]
    }
}

#[derive(Debug, Clone)]
struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Recorded forward pass. `states[t]` is the hidden state after position `t`;
/// masked positions repeat the previous state.
#[derive(Debug, Clone)]
pub struct LstmTape {
    pub states: Vec<Vec<f64>>,
    hidden_dim: usize,
    input_dim: usize,
    steps: Vec<Option<Step>>,
}

impl LstmTape {
    /// Hidden state at the last unmasked position (zero if none).
    pub fn final_state(&self) -> Vec<f64> {
        self.states
            .last()
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.hidden_dim])
    }

    /// Backpropagates `d_final` (gradient w.r.t. the final hidden state),
    /// accumulating into `grads` and returning the gradient w.r.t. each input.
    pub fn backward(
        &self,
        p: &LstmParams,
        d_final: &[f64],
        grads: &mut LstmParams,
    ) -> Vec<Vec<f64>> {
        let hd = self.hidden_dim;
        assert_eq!(d_final.len(), hd, "LSTM output gradient length");
        let mut dh = d_final.to_vec();
        let mut dc = vec![0.0; hd];
        let mut dxs = vec![vec![0.0; self.input_dim]; self.steps.len()];

        let mut dz_i = vec![0.0; hd];
        let mut dz_f = vec![0.0; hd];
        let mut dz_o = vec![0.0; hd];
        let mut dz_g = vec![0.0; hd];

        for (t, step) in self.steps.iter().enumerate().rev() {
            // Masked steps are the identity on (h, c).
            let Some(s) = step else { continue };
            for k in 0..hd {
                let d_o = dh[k] * s.tanh_c[k];
                let dct = dc[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                let d_i = dct * s.g[k];
                let d_g = dct * s.i[k];
                let d_f = dct * s.c_prev[k];
                dc[k] = dct * s.f[k];
                dz_i[k] = d_i * s.i[k] * (1.0 - s.i[k]);
                dz_f[k] = d_f * s.f[k] * (1.0 - s.f[k]);
                dz_o[k] = d_o * s.o[k] * (1.0 - s.o[k]);
                dz_g[k] = d_g * (1.0 - s.g[k] * s.g[k]);
            }

            let dx = &mut dxs[t];
            let mut dh_prev = vec![0.0; hd];
            let gates = [
                (
                    &dz_i,
                    &p.w_i,
                    &p.u_i,
                    &mut grads.w_i,
                    &mut grads.u_i,
                    &mut grads.b_i,
                ),
                (
                    &dz_f,
                    &p.w_f,
                    &p.u_f,
                    &mut grads.w_f,
                    &mut grads.u_f,
                    &mut grads.b_f,
                ),
                (
                    &dz_o,
                    &p.w_o,
                    &p.u_o,
                    &mut grads.w_o,
                    &mut grads.u_o,
                    &mut grads.b_o,
                ),
                (
                    &dz_g,
                    &p.w_g,
                    &p.u_g,
                    &mut grads.w_g,
                    &mut grads.u_g,
                    &mut grads.b_g,
                ),
            ];
            for (dz, w, u, gw, gu, gb) in gates {
                gw.outer_acc(dz, &s.x);
                gu.outer_acc(dz, &s.h_prev);
                crate::vecops::axpy(1.0, dz, gb);
                w.matvec_t_acc(dz, dx);
                u.matvec_t_acc(dz, &mut dh_prev);
            }
            dh = dh_prev;
        }
        dxs
    }
}

/// Runs the LSTM over `inputs` from zero initial state. Positions with
/// `mask[t] == false` leave (h, c) unchanged.
pub fn lstm_forward<V: AsRef<[f64]>>(p: &LstmParams, inputs: &[V], mask: &[bool]) -> LstmTape {
    p.check_shapes();
    assert_eq!(inputs.len(), mask.len(), "inputs and mask length");
    let hd = p.hidden_dim;
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    let mut states = Vec::with_capacity(inputs.len());
    let mut steps = Vec::with_capacity(inputs.len());

    for (x, &real) in inputs.iter().zip(mask) {
        let x = x.as_ref();
        assert_eq!(x.len(), p.input_dim, "LSTM input length");
        if !real {
            states.push(h.clone());
            steps.push(None);
            continue;
        }
        let pre = |w: &Matrix, u: &Matrix, b: &[f64]| {
            let mut z = b.to_vec();
            w.matvec_acc(x, &mut z);
            u.matvec_acc(&h, &mut z);
            z
        };
        let i: Vec<f64> = pre(&p.w_i, &p.u_i, &p.b_i)
            .into_iter()
            .map(sigmoid)
            .collect();
        let f: Vec<f64> = pre(&p.w_f, &p.u_f, &p.b_f)
            .into_iter()
            .map(sigmoid)
            .collect();
        let o: Vec<f64> = pre(&p.w_o, &p.u_o, &p.b_o)
            .into_iter()
            .map(sigmoid)
            .collect();
        let g: Vec<f64> = pre(&p.w_g, &p.u_g, &p.b_g)
            .into_iter()
            .map(f64::tanh)
            .collect();

        let c_new: Vec<f64> = (0..hd).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();

        steps.push(Some(Step {
            x: x.to_vec(),
            h_prev: std::mem::replace(&mut h, h_new),
            c_prev: std::mem::replace(&mut c, c_new),
            i,
            f,
            o,
            g,
            tanh_c,
        }));
        states.push(h.clone());
    }

    LstmTape {
        states,
        hidden_dim: hd,
        input_dim: p.input_dim,
        steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{central_difference, rel_err};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let p = LstmParams::zeros(3, 4);
        let xs = vec![vec![1.0, -2.0, 3.0]; 5];
        let tape = lstm_forward(&p, &xs, &[true; 5]);
        assert!(tape.states.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn mask_only_first_position_equals_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = LstmParams::init(3, 4, &mut rng);
        let xs = random_inputs(&mut rng, 5, 3);
        let masked = lstm_forward(&p, &xs, &[true, false, false, false, false]);
        let single = lstm_forward(&p, &xs[..1], &[true]);
        assert_eq!(masked.final_state(), single.final_state());
    }

    #[test]
    fn masked_positions_never_influence_final_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = LstmParams::init(3, 4, &mut rng);
        let mut xs = random_inputs(&mut rng, 4, 3);
        let mask = [true, false, true, false];
        let before = lstm_forward(&p, &xs, &mask).final_state();
        xs[1] = vec![100.0, -50.0, 7.0];
        xs[3] = vec![-3.0, 9.0, 1.0];
        assert_eq!(before, lstm_forward(&p, &xs, &mask).final_state());
    }

    #[test]
    fn scalar_lstm_matches_hand_evaluated_recurrence() {
        let mut p = LstmParams::zeros(1, 1);
        for t in p.tensors_mut().into_iter().take(8) {
            t.fill(0.5);
        }
        let tape = lstm_forward(&p, &[vec![1.0]], &[true]);

        // z = 0.5·1 + 0.5·0 + 0 for every gate.
        let s = 1.0 / (1.0 + (-0.5f64).exp());
        let g = 0.5f64.tanh();
        let c1 = s * 0.0 + s * g;
        let h1 = s * c1.tanh();
        assert!((tape.final_state()[0] - h1).abs() < 1e-12);

        // Second step from the same recurrence.
        let tape = lstm_forward(&p, &[vec![1.0], vec![1.0]], &[true, true]);
        let z = 0.5 + 0.5 * h1;
        let s2 = 1.0 / (1.0 + (-z).exp());
        let c2 = s2 * c1 + s2 * z.tanh();
        let h2 = s2 * c2.tanh();
        assert!((tape.final_state()[0] - h2).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = LstmParams::init(8, 12, &mut rng);
            let xs = random_inputs(&mut rng, 5, 8);
            let mask = [true, true, false, true, true];
            let probe: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            // Scalar objective: <probe, h_final>.
            let objective = |p: &LstmParams, xs: &[Vec<f64>]| {
                crate::vecops::dot(&probe, &lstm_forward(p, xs, &mask).final_state())
            };

            let tape = lstm_forward(&p, &xs, &mask);
            let mut grads = p.zeros_like();
            let dxs = tape.backward(&p, &probe, &mut grads);

            for idx in 0..p.num_params() {
                let numeric = central_difference(
                    |v| {
                        let mut q = p.clone();
                        q.set_flat(idx, v);
                        objective(&q, &xs)
                    },
                    p.get_flat(idx),
                    1e-4,
                );
                let analytic = grads.get_flat(idx);
                assert!(
                    rel_err(analytic, numeric) < 1e-4,
                    "seed {seed} param {idx}: {analytic} vs {numeric}"
                );
            }
            for t in 0..xs.len() {
                for k in 0..8 {
                    let numeric = central_difference(
                        |v| {
                            let mut ys = xs.clone();
                            ys[t][k] = v;
                            objective(&p, &ys)
                        },
                        xs[t][k],
                        1e-4,
                    );
                    assert!(rel_err(dxs[t][k], numeric) < 1e-4);
                }
            }
            assert!(dxs[2].iter().all(|v| *v == 0.0));
        }
    }
}
