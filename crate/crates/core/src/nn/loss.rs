//! Masked MSE and the CORAL covariance penalty.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Components of one evaluated loss.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub weighted_mse: f64,
    pub coral: f64,
    pub total: f64,
    pub lambda_coral: f64,
}

impl LossBreakdown {
    pub fn new(weighted_mse: f64, coral: f64, lambda_coral: f64) -> Self {
        Self { weighted_mse, coral, total: weighted_mse + lambda_coral * coral, lambda_coral }
    }
}

/// Squared error averaged over the active channels of one record.
pub fn weighted_mse(pred: &[f64], meas: &[f64], mask: &[f64]) -> Result<f64> {
    if pred.len() != meas.len() || pred.len() != mask.len() {
        return Err(Error::DimensionMismatch { expected: mask.len(), actual: pred.len().min(meas.len()) });
    }
    let active: f64 = mask.iter().sum();
    if active < 1.0 {
        return Err(Error::EmptyMask);
    }
    let mut acc = 0.0;
    for i in 0..pred.len() {
        if mask[i] != 0.0 {
            let e = pred[i] - meas[i];
            acc += mask[i] * e * e;
        }
    }
    Ok(acc / active)
}

/// Mean of the per-record masked MSE, and its gradient with respect to
/// `pred`. Masked-out entries get an exact zero gradient.
pub fn batch_weighted_mse(
    pred: ArrayView2<f64>,
    meas: ArrayView2<f64>,
    mask: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != meas.dim() || pred.dim() != mask.dim() {
        return Err(Error::DimensionMismatch { expected: mask.len(), actual: pred.len() });
    }
    let batch = pred.nrows();
    let mut grad = Array2::zeros(pred.dim());
    let mut total = 0.0;
    for k in 0..batch {
        let (p, y, c) = (pred.row(k), meas.row(k), mask.row(k));
        let active: f64 = c.sum();
        if active < 1.0 {
            return Err(Error::EmptyMask);
        }
        let mut acc = 0.0;
        let scale = 2.0 / (batch as f64 * active);
        for i in 0..p.len() {
            if c[i] != 0.0 {
                let e = p[i] - y[i];
                acc += c[i] * e * e;
                grad[[k, i]] = scale * c[i] * e;
            }
        }
        total += acc / active;
    }
    Ok((total / batch as f64, grad))
}

/// Unbiased covariance of the rows of `f` (N x d).
pub fn batch_covariance(f: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = f.nrows();
    if n < 2 {
        return Err(Error::InsufficientBatch(n));
    }
    let centered = centered(f);
    let mut c = centered.t().dot(&centered) / (n as f64 - 1.0);
    // Force exact symmetry; the product is symmetric only up to rounding.
    let d = c.nrows();
    for i in 0..d {
        for j in i + 1..d {
            let v = 0.5 * (c[[i, j]] + c[[j, i]]);
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    Ok(c)
}

fn centered(f: ArrayView2<f64>) -> Array2<f64> {
    let mean = f.mean_axis(Axis(0)).expect("non-empty batch");
    // One refinement pass so constant columns center to exact zeros.
    let correction = (&f - &mean).mean_axis(Axis(0)).expect("non-empty batch");
    &f - &(mean + correction)
}

/// `||C_S - C_T||_F^2 / (4 d^2)`.
pub fn coral_penalty(c_s: ArrayView2<f64>, c_t: ArrayView2<f64>) -> Result<f64> {
    let d = c_s.nrows();
    if c_s.dim() != (d, d) || c_t.dim() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d * d, actual: c_t.len() });
    }
    let fro: f64 = c_s.iter().zip(c_t.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(fro / (4.0 * (d * d) as f64))
}

/// Penalty and its gradient with respect to the target activations `f_t`
/// (N x d), differentiating through the batch covariance.
pub fn coral_with_gradient(c_s: ArrayView2<f64>, f_t: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    let c_t = batch_covariance(f_t)?;
    let penalty = coral_penalty(c_s, c_t.view())?;
    let n = f_t.nrows() as f64;
    let d = c_s.nrows() as f64;
    // dP/dC_T = (C_T - C_S) / (2 d^2); dC_T/dF routes through the centered rows.
    let g = (&c_t - &c_s) / (2.0 * d * d);
    let grad = centered(f_t).dot(&g) * (2.0 / (n - 1.0));
    Ok((penalty, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn masked_mse_cases() {
        assert_eq!(weighted_mse(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 1.0]).unwrap(), 0.0);
        let v = weighted_mse(&[0.2, -0.2, 9.0], &[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0]).unwrap();
        assert!((v - 0.04).abs() < 1e-12);
        assert!(matches!(weighted_mse(&[1.0], &[0.0], &[0.0]), Err(Error::EmptyMask)));
    }

    #[test]
    fn batch_mse_is_mean_of_records() {
        let pred = array![[1.0, 2.0, 3.0], [0.0, 0.0, 1.0]];
        let meas = array![[0.0, 2.0, 0.0], [1.0, 1.0, 1.0]];
        let mask = array![[1.0, 1.0, 0.0], [1.0, 0.0, 1.0]];
        let (v, g) = batch_weighted_mse(pred.view(), meas.view(), mask.view()).unwrap();
        assert!((v - 0.5 * (0.5 + 0.5)).abs() < 1e-15);
        assert_eq!(g[[0, 2]], 0.0);
        assert_eq!(g[[1, 1]], 0.0);
    }

    #[test]
    fn covariance_hand_case() {
        let f = array![[1.0, 0.0], [-1.0, 0.0]];
        assert_eq!(batch_covariance(f.view()).unwrap(), array![[2.0, 0.0], [0.0, 0.0]]);
        let constant = array![[3.0, 1.0], [3.0, 1.0], [3.0, 1.0]];
        assert!(batch_covariance(constant.view()).unwrap().iter().all(|v| *v == 0.0));
        assert!(matches!(batch_covariance(array![[1.0, 2.0]].view()), Err(Error::InsufficientBatch(1))));
    }

    #[test]
    fn coral_hand_case() {
        let cs = array![[2.0, 0.0], [0.0, 0.0]];
        let ct = array![[0.0, 0.0], [0.0, 2.0]];
        assert!((coral_penalty(cs.view(), ct.view()).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(coral_penalty(cs.view(), cs.view()).unwrap(), 0.0);
        let bad = Array2::<f64>::zeros((3, 3));
        assert!(coral_penalty(cs.view(), bad.view()).is_err());
    }

    fn matrix(n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
        prop::collection::vec(-3.0..3.0f64, n * d).prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    }

    proptest! {
        #[test]
        fn covariance_symmetric_psd(f in matrix(12, 5)) {
            let c = batch_covariance(f.view()).unwrap();
            prop_assert_eq!(c.clone(), c.t().to_owned());
            // PSD via x^T C x over random directions and via the Gram identity.
            for seed in 0..20u64 {
                let x: Vec<f64> = (0..5).map(|i| ((seed * 31 + i * 7) as f64).sin()).collect();
                let mut q = 0.0;
                for i in 0..5 { for j in 0..5 { q += x[i] * c[[i, j]] * x[j]; } }
                prop_assert!(q >= -1e-10);
            }
        }

        #[test]
        fn coral_shift_invariant_and_symmetric(fs in matrix(10, 4), ft in matrix(10, 4), shift in prop::collection::vec(-5.0..5.0f64, 4)) {
            let cs = batch_covariance(fs.view()).unwrap();
            let ct = batch_covariance(ft.view()).unwrap();
            let shifted = &ft + &ndarray::Array1::from(shift);
            let ct2 = batch_covariance(shifted.view()).unwrap();
            let a = coral_penalty(cs.view(), ct.view()).unwrap();
            let b = coral_penalty(cs.view(), ct2.view()).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            prop_assert!(a >= 0.0);
            prop_assert_eq!(a, coral_penalty(ct.view(), cs.view()).unwrap());
        }

        #[test]
        fn masked_channels_do_not_matter(pred in prop::collection::vec(-5.0..5.0f64, 8), meas in prop::collection::vec(-5.0..5.0f64, 8), junk in -1e6..1e6f64) {
            let mask = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
            let base = weighted_mse(&pred, &meas, &mask).unwrap();
            let mut p2 = pred.clone();
            p2[1] = junk;
            p2[7] = -junk;
            prop_assert_eq!(base.to_bits(), weighted_mse(&p2, &meas, &mask).unwrap().to_bits());
        }
    }

    #[test]
    fn coral_gradient_matches_finite_differences() {
        let f = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64 * 0.7).sin());
        let cs = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 0.5 } else { 0.1 });
        let (_, g) = coral_with_gradient(cs.view(), f.view()).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            for j in 0..3 {
                let mut fp = f.clone();
                fp[[i, j]] += h;
                let mut fm = f.clone();
                fm[[i, j]] -= h;
                let p = coral_with_gradient(cs.view(), fp.view()).unwrap().0;
                let m = coral_with_gradient(cs.view(), fm.view()).unwrap().0;
                assert!(((p - m) / (2.0 * h) - g[[i, j]]).abs() < 1e-8);
            }
        }
    }
}
