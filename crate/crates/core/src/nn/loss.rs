//! Sigmoid and the focal loss for binary keyframe classification.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// Probabilities are clamped into `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

fn check(p: &ArrayView1<f64>, y: &ArrayView1<u8>) -> Result<()> {
    if p.len() != y.len() || p.is_empty() {
        return Err(Error::dims(
            "focal_loss",
            format!("{} probabilities vs {} labels", p.len(), y.len()),
        ));
    }
    Ok(())
}

fn frame_loss(p: f64, y: u8, fp: FocalParams) -> f64 {
    let p = p.clamp(EPS, 1.0 - EPS);
    if y == 1 {
        -fp.alpha * (1.0 - p).powf(fp.gamma) * p.ln()
    } else {
        -(1.0 - fp.alpha) * p.powf(fp.gamma) * (1.0 - p).ln()
    }
}

fn frame_grad(p: f64, y: u8, fp: FocalParams) -> f64 {
    if !(EPS..=1.0 - EPS).contains(&p) {
        return 0.0;
    }
    let FocalParams { alpha, gamma } = fp;
    if y == 1 {
        let q = 1.0 - p;
        let pow_dq = if gamma == 0.0 { 0.0 } else { gamma * q.powf(gamma - 1.0) };
        alpha * (pow_dq * p.ln() - q.powf(gamma) / p)
    } else {
        let q = 1.0 - p;
        let pow_dp = if gamma == 0.0 { 0.0 } else { gamma * p.powf(gamma - 1.0) };
        -(1.0 - alpha) * (pow_dp * q.ln() - p.powf(gamma) / q)
    }
}

/// Mean focal loss over frames.
pub fn focal_loss(p: ArrayView1<f64>, y: ArrayView1<u8>, fp: FocalParams) -> Result<f64> {
    check(&p, &y)?;
    let total: f64 = p.iter().zip(y.iter()).map(|(&p, &y)| frame_loss(p, y, fp)).sum();
    Ok(total / p.len() as f64)
}

/// Gradient of [`focal_loss`] with respect to each probability.
pub fn focal_loss_grad(p: ArrayView1<f64>, y: ArrayView1<u8>, fp: FocalParams) -> Result<Array1<f64>> {
    check(&p, &y)?;
    let n = p.len() as f64;
    Ok(p.iter()
        .zip(y.iter())
        .map(|(&p, &y)| frame_grad(p, y, fp) / n)
        .collect())
}

/// Mean binary cross-entropy with the same clamping, used as a reference.
pub fn binary_cross_entropy(p: ArrayView1<f64>, y: ArrayView1<u8>) -> Result<f64> {
    check(&p, &y)?;
    let total: f64 = p
        .iter()
        .zip(y.iter())
        .map(|(&p, &y)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / p.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn positive_at_half() {
        let l = focal_loss(array![0.5].view(), array![1u8].view(), FocalParams::default()).unwrap();
        assert!((l - 0.25 * 0.25 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((l - 0.043322).abs() < 1e-6);
    }

    #[test]
    fn confident_positive_is_near_zero() {
        let l = focal_loss(array![1.0].view(), array![1u8].view(), FocalParams::default()).unwrap();
        assert!(l < 1e-20);
    }

    #[test]
    fn reduces_to_half_bce() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fp = FocalParams {
            alpha: 0.5,
            gamma: 0.0,
        };
        for _ in 0..200 {
            let p = array![rng.random_range(0.001..0.999)];
            let y = array![rng.random_range(0..2u8)];
            let fl = focal_loss(p.view(), y.view(), fp).unwrap();
            let bce = binary_cross_entropy(p.view(), y.view()).unwrap();
            assert!((fl - 0.5 * bce).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for gamma in [0.0, 1.0, 2.0, 2.5] {
            let fp = FocalParams { alpha: 0.25, gamma };
            let p: Array1<f64> = (0..6).map(|_| rng.random_range(0.05..0.95)).collect();
            let y = array![0u8, 1, 0, 1, 1, 0];
            let g = focal_loss_grad(p.view(), y.view(), fp).unwrap();
            let eps = 1e-6;
            for i in 0..6 {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp[i] += eps;
                pm[i] -= eps;
                let num = (focal_loss(pp.view(), y.view(), fp).unwrap()
                    - focal_loss(pm.view(), y.view(), fp).unwrap())
                    / (2.0 * eps);
                assert!((num - g[i]).abs() < 1e-8, "gamma {gamma}: {num} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn clamped_inputs_are_finite() {
        let fp = FocalParams::default();
        let l = focal_loss(array![0.0, 1.0].view(), array![1u8, 0].view(), fp).unwrap();
        assert!(l.is_finite() && l > 0.0);
        let g = focal_loss_grad(array![0.0, 1.0].view(), array![1u8, 0].view(), fp).unwrap();
        assert!(g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
