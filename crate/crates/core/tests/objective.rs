use mkofl::objective::{project_ball, LossConfig, ModelParams};
use mkofl::FeatureVector;
use proptest::prelude::*;

fn vecs(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

fn central_difference(cfg: &LossConfig, w: &[f64], z: &FeatureVector, y: f64, i: usize, h: f64) -> f64 {
    let mut plus = w.to_vec();
    let mut minus = w.to_vec();
    plus[i] += h;
    minus[i] -= h;
    let f = |v: Vec<f64>| cfg.loss(&ModelParams::from_vec(v), z, y);
    (f(plus) - f(minus)) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_finite_differences(w in vecs(12), z in vecs(12), y in -1.0f64..2.0, lambda in 0.0f64..1.0) {
        let cfg = LossConfig { lambda, ..LossConfig::default() };
        let z = FeatureVector::from_vec(z);
        let g = cfg.gradient(&ModelParams::from_vec(w.clone()), &z, y);
        let fd: Vec<f64> = (0..w.len()).map(|i| central_difference(&cfg, &w, &z, y, i, 1e-5)).collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
        prop_assert!(diff / scale <= 1e-5, "relative error {}", diff / scale);
    }

    #[test]
    fn loss_is_convex(a in vecs(8), b in vecs(8), z in vecs(8), y in -1.0f64..2.0, t in 0.0f64..=1.0) {
        let cfg = LossConfig::default();
        let z = FeatureVector::from_vec(z);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(u, v)| t * u + (1.0 - t) * v).collect();
        let lhs = cfg.loss(&ModelParams::from_vec(mix), &z, y);
        let rhs = t * cfg.loss(&ModelParams::from_vec(a), &z, y) + (1.0 - t) * cfg.loss(&ModelParams::from_vec(b), &z, y);
        prop_assert!(lhs <= rhs + 1e-9);
    }

    #[test]
    fn projection_lands_in_ball(w in vecs(10), radius in 0.01f64..5.0) {
        let p = project_ball(&ModelParams::from_vec(w.clone()), radius);
        prop_assert!(p.norm() <= radius + 1e-12);
        let n = ModelParams::from_vec(w.clone()).norm();
        if n <= radius {
            prop_assert_eq!(p.as_slice(), &w[..]);
        } else {
            // radial: p is a nonnegative multiple of w
            for (pi, wi) in p.as_slice().iter().zip(&w) {
                prop_assert!((pi - wi * radius / n).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ogd_step_is_gradient_step(w in vecs(6), z in vecs(6), y in 0.0f64..1.0, step in 0.0f64..0.5) {
        let cfg = LossConfig::default();
        let w = ModelParams::from_vec(w);
        let z = FeatureVector::from_vec(z);
        let g = cfg.gradient(&w, &z, y);
        let next = cfg.ogd_step(&w, &z, y, step);
        for ((n, wi), gi) in next.as_slice().iter().zip(w.as_slice()).zip(&g) {
            prop_assert!((n - (wi - step * gi)).abs() < 1e-12);
        }
    }
}

#[test]
fn hand_evaluated_loss() {
    let cfg = LossConfig::default();
    let mut z = vec![0.0; 4];
    z[0] = 0.5;
    let mut w = vec![0.0; 4];
    w[0] = 1.0;
    let l = cfg.loss(&ModelParams::from_vec(w), &FeatureVector::from_vec(z), 0.0);
    assert!((l - 0.26).abs() < 1e-15);
}
