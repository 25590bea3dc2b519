use crate::vecops::{dot, norm, NORM_EPS};

/// `1 - cos(pred, target)` and its gradient w.r.t. `pred`.
///
/// A (near) zero prediction yields loss 1 with a zero gradient. Panics if
/// `target` has zero norm.
pub fn cosine_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len(), "cosine loss length mismatch");
    let nt = norm(target);
    assert!(nt >= NORM_EPS, "cosine loss target has zero norm");
    let np = norm(pred);
    if np < NORM_EPS {
        return (1.0, vec![0.0; pred.len()]);
    }
    let pt = dot(pred, target);
    let cos = pt / (np * nt);
    // d cos / d p = t / (|p||t|) - cos · p / |p|²
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| -(t / (np * nt) - cos * p / (np * np)))
        .collect();
    ((1.0 - cos).clamp(0.0, 2.0), grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{central_difference, rel_err};
    use proptest::prelude::*;

    #[test]
    fn fixed_points() {
        assert!(cosine_loss(&[0.3, 0.4], &[0.3, 0.4]).0.abs() < 1e-15);
        assert!((cosine_loss(&[1.0, 0.0], &[0.0, 1.0]).0 - 1.0).abs() < 1e-15);
        assert!((cosine_loss(&[-1.0, -2.0], &[1.0, 2.0]).0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_prediction_is_pinned() {
        let (l, g) = cosine_loss(&[0.0, 0.0], &[1.0, 0.0]);
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_vanishes_at_target() {
        let t = [0.6, 0.8];
        let (_, g) = cosine_loss(&t, &t);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    #[should_panic(expected = "zero norm")]
    fn zero_target_panics() {
        cosine_loss(&[1.0], &[0.0]);
    }

    proptest! {
        #[test]
        fn loss_in_range_and_gradient_matches_fd(
            p in prop::collection::vec(-2.0f64..2.0, 4),
            t in prop::collection::vec(-2.0f64..2.0, 4),
        ) {
            prop_assume!(norm(&t) > 0.1 && norm(&p) > 0.1);
            let (l, g) = cosine_loss(&p, &t);
            prop_assert!((0.0..=2.0).contains(&l));
            for k in 0..4 {
                let n = central_difference(|v| {
                    let mut q = p.clone();
                    q[k] = v;
                    cosine_loss(&q, &t).0
                }, p[k], 1e-5);
                prop_assert!(rel_err(g[k], n) < 1e-4);
            }
        }

        #[test]
        fn positive_multiples_have_zero_loss(
            t in prop::collection::vec(-2.0f64..2.0, 3),
            s in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&t) > 0.1);
            let p: Vec<f64> = t.iter().map(|x| x * s).collect();
            prop_assert!(cosine_loss(&p, &t).0.abs() < 1e-12);
        }
    }
}
