//! Regularized least-squares loss `(wᵀz - y)² + λ‖w‖²`, its gradient, the
//! OGD step and the optional projection onto `‖w‖ ≤ C`.

use serde::{Deserialize, Serialize};

use crate::kernel_features::FeatureVector;
use crate::math;

/// Model vector of length `2D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelParams(Vec<f64>);

impl ModelParams {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(w: Vec<f64>) -> Self {
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        math::norm(&self.0)
    }

    /// `wᵀz`.
    pub fn predict(&self, z: &FeatureVector) -> f64 {
        math::dot(&self.0, z.as_slice())
    }
}

impl AsRef<[f64]> for ModelParams {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Ridge weight λ.
    pub lambda: f64,
    /// Projection radius `C`; `None` disables projection.
    pub radius: Option<f64>,
    /// Clip losses to `[0, 1]` before they enter the Hedge exponent.
    pub clip_for_hedge: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda: 0.01, radius: None, clip_for_hedge: true }
    }
}

impl LossConfig {
    pub fn loss(&self, w: &ModelParams, z: &FeatureVector, y: f64) -> f64 {
        self.loss_at(w.predict(z), w, y)
    }

    /// Loss when the prediction `wᵀz` is already known.
    pub fn loss_at(&self, prediction: f64, w: &ModelParams, y: f64) -> f64 {
        let r = prediction - y;
        r * r + self.lambda * math::norm_sq(w.as_slice())
    }

    /// `2(wᵀz - y)z + 2λw`.
    pub fn gradient(&self, w: &ModelParams, z: &FeatureVector, y: f64) -> Vec<f64> {
        let r = w.predict(z) - y;
        w.as_slice()
            .iter()
            .zip(z.as_slice())
            .map(|(wi, zi)| 2.0 * r * zi + 2.0 * self.lambda * wi)
            .collect()
    }

    /// One OGD step `w - η ∇L`, projected when a radius is configured.
    pub fn ogd_step(&self, w: &ModelParams, z: &FeatureVector, y: f64, step: f64) -> ModelParams {
        let mut next = w.clone();
        self.ogd_step_in_place(&mut next, z, y, step);
        next
    }

    /// In-place form of [`ogd_step`](Self::ogd_step). Returns the loss
    /// measured before the step.
    pub fn ogd_step_in_place(&self, w: &mut ModelParams, z: &FeatureVector, y: f64, step: f64) -> f64 {
        let prediction = w.predict(z);
        let loss = self.loss_at(prediction, w, y);
        let r = prediction - y;
        let shrink = 1.0 - 2.0 * step * self.lambda;
        for (wi, zi) in w.0.iter_mut().zip(z.as_slice()) {
            *wi = shrink * *wi - 2.0 * step * r * zi;
        }
        if let Some(c) = self.radius {
            project_ball_in_place(w, c);
        }
        loss
    }

    /// Loss value fed to the Hedge exponent.
    pub fn hedge_loss(&self, loss: f64) -> f64 {
        if self.clip_for_hedge {
            loss.clamp(0.0, 1.0)
        } else {
            loss
        }
    }
}

/// Euclidean projection onto `{w : ‖w‖ ≤ C}`.
pub fn project_ball(w: &ModelParams, radius: f64) -> ModelParams {
    let mut out = w.clone();
    project_ball_in_place(&mut out, radius);
    out
}

pub fn project_ball_in_place(w: &mut ModelParams, radius: f64) {
    let n = w.norm();
    if n > radius {
        let s = radius / n;
        w.0.iter_mut().for_each(|v| *v *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::from_vec(v.to_vec())
    }

    fn ridge(lambda: f64) -> LossConfig {
        LossConfig { lambda, ..LossConfig::default() }
    }

    #[test]
    fn loss_examples() {
        let cfg = ridge(0.01);
        let z = fv(&[0.5, 0.3, -0.2, 0.1]);
        assert_eq!(cfg.loss(&ModelParams::zeros(4), &z, 0.0), 0.0);
        assert_eq!(cfg.loss(&ModelParams::zeros(4), &z, 1.0), 1.0);
        let e1 = ModelParams::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        assert!((cfg.loss(&e1, &z, 0.0) - 0.26).abs() < 1e-15);
    }

    #[test]
    fn gradient_vanishing_cases() {
        let cfg = ridge(0.3);
        let z = fv(&[0.5, -0.5]);
        assert_eq!(cfg.gradient(&ModelParams::zeros(2), &z, 0.0), vec![0.0, 0.0]);
        let g = ridge(0.0).gradient(&ModelParams::from_vec(vec![3.0, -1.0]), &fv(&[0.0, 0.0]), 7.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn ogd_step_from_zero_reaches_feature_vector() {
        let cfg = ridge(0.0);
        let z = fv(&[0.6, 0.8]);
        let w = cfg.ogd_step(&ModelParams::zeros(2), &z, 1.0, 0.5);
        assert!((w.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((w.as_slice()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn ogd_fixed_point() {
        // λ = 0 and wᵀz = y gives a zero gradient.
        let cfg = ridge(0.0);
        let z = fv(&[0.6, 0.8]);
        let w = ModelParams::from_vec(vec![1.0, 0.5]);
        let y = w.predict(&z);
        assert_eq!(cfg.ogd_step(&w, &z, y, 0.7), w);
    }

    #[test]
    fn small_step_decreases_loss() {
        let cfg = ridge(0.05);
        let z = fv(&[0.3, -0.4, 0.5, 0.7]);
        let w = ModelParams::from_vec(vec![0.2, 1.0, -0.3, 0.4]);
        let before = cfg.loss(&w, &z, 0.9);
        let after = cfg.loss(&cfg.ogd_step(&w, &z, 0.9, 1e-4), &z, 0.9);
        assert!(after < before);
    }

    #[test]
    fn projection_examples() {
        let inside = ModelParams::from_vec(vec![0.3, 0.4]);
        assert_eq!(project_ball(&inside, 1.0), inside);
        let far = ModelParams::from_vec(vec![4.0, 0.0]);
        assert_eq!(project_ball(&far, 2.0).as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn projected_step_respects_radius() {
        let cfg = LossConfig { lambda: 0.0, radius: Some(0.1), clip_for_hedge: true };
        let w = cfg.ogd_step(&ModelParams::zeros(2), &fv(&[0.6, 0.8]), 5.0, 1.0);
        assert!(w.norm() <= 0.1 + 1e-12);
    }

    #[test]
    fn hedge_clipping() {
        let clip = LossConfig::default();
        assert_eq!(clip.hedge_loss(3.5), 1.0);
        assert_eq!(clip.hedge_loss(0.25), 0.25);
        let raw = LossConfig { clip_for_hedge: false, ..clip };
        assert_eq!(raw.hedge_loss(3.5), 3.5);
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative(
            w in proptest::collection::vec(-5.0f64..5.0, 6),
            z in proptest::collection::vec(-1.0f64..1.0, 6),
            y in -2.0f64..2.0,
            lambda in 0.0f64..1.0,
        ) {
            prop_assert!(ridge(lambda).loss(&ModelParams::from_vec(w), &fv(&z), y) >= 0.0);
        }

        #[test]
        fn loss_is_convex_along_segments(
            w1 in proptest::collection::vec(-3.0f64..3.0, 6),
            w2 in proptest::collection::vec(-3.0f64..3.0, 6),
            z in proptest::collection::vec(-1.0f64..1.0, 6),
            y in -1.0f64..1.0,
            lambda in 0.0f64..0.5,
            t in 0.0f64..=1.0,
        ) {
            let cfg = ridge(lambda);
            let z = fv(&z);
            let mix: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let lhs = cfg.loss(&ModelParams::from_vec(mix), &z, y);
            let rhs = t * cfg.loss(&ModelParams::from_vec(w1), &z, y)
                + (1.0 - t) * cfg.loss(&ModelParams::from_vec(w2), &z, y);
            prop_assert!(lhs <= rhs + 1e-9);
        }

        #[test]
        fn projection_is_idempotent_and_bounded(
            w in proptest::collection::vec(-10.0f64..10.0, 5),
            radius in 0.01f64..5.0,
        ) {
            let once = project_ball(&ModelParams::from_vec(w), radius);
            prop_assert!(once.norm() <= radius + 1e-12);
            let twice = project_ball(&once, radius);
            for (a, b) in twice.as_slice().iter().zip(once.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
