use serde::{Deserialize, Serialize};

use super::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators, shaped like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<P> {
    pub m: P,
    pub v: P,
    pub step: u64,
}

impl<P: Parameters> AdamState<P> {
    pub fn new(params: &P) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<P: Parameters>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState<P>,
    cfg: &AdamConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for (((p, g), m), v) in tensors {
        for k in 0..p.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

/// `p ← p − lr·g`
pub fn sgd_step<P: Parameters>(params: &mut P, grads: &P, lr: f64) {
    params.add_scaled(-lr, grads);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Scalar(Vec<f64>);

    impl Parameters for Scalar {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradients_are_identity() {
        let mut p = Scalar(vec![1.5, -2.0]);
        let g = Scalar(vec![0.0, 0.0]);
        let mut st = AdamState::new(&p);
        for _ in 0..10 {
            adam_step(&mut p, &g, &mut st, &AdamConfig::default());
            sgd_step(&mut p, &g, 0.5);
        }
        assert_eq!(p, Scalar(vec![1.5, -2.0]));
    }

    #[test]
    fn first_adam_step_is_minus_lr() {
        let cfg = AdamConfig::default();
        let mut p = Scalar(vec![0.0]);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &Scalar(vec![1.0]), &mut st, &cfg);
        // m̂ = 1, v̂ = 1 after bias correction.
        let expected = -cfg.lr / (1.0 + cfg.eps);
        assert!((p.0[0] - expected).abs() < 1e-15);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_reduces_a_quadratic() {
        let loss = |x: f64| (x - 3.0) * (x - 3.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut p = Scalar(vec![0.0]);
        let mut st = AdamState::new(&p);
        let mut prev = loss(p.0[0]);
        for _ in 0..2 {
            let g = Scalar(vec![2.0 * (p.0[0] - 3.0)]);
            adam_step(&mut p, &g, &mut st, &cfg);
            let now = loss(p.0[0]);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn sgd_arithmetic_and_direction() {
        let mut p = Scalar(vec![1.0]);
        sgd_step(&mut p, &Scalar(vec![2.0]), 0.01);
        assert!((p.0[0] - 0.98).abs() < 1e-15);

        let mut p = Scalar(vec![1.0]);
        sgd_step(&mut p, &Scalar(vec![2.0]), 0.0);
        assert_eq!(p.0[0], 1.0);

        // Both optimizers move downhill on (x - 3)² from x = 5.
        let g = Scalar(vec![4.0]);
        let mut a = Scalar(vec![5.0]);
        let mut st = AdamState::new(&a);
        adam_step(&mut a, &g, &mut st, &AdamConfig::default());
        let mut s = Scalar(vec![5.0]);
        sgd_step(&mut s, &g, 0.01);
        assert_eq!((a.0[0] - 5.0).signum(), (s.0[0] - 5.0).signum());
        assert!(a.0[0] < 5.0);
    }
}
