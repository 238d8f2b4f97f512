//! Curve-accuracy metrics: mean squared / absolute error over subjects and
//! bias of the subject-mean curve, each integrated over the domain.
//!
//! Integrals use the cell rule `dt * sum_k v_k` over `[0, T)`, so a constant
//! offset `c` yields exactly `c^2 T` and `|c| T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcdata::{validate_aligned, FunctionalSample};
use crate::quadrature::integrate_cells;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveMetrics {
    pub mse: f64,
    pub mae: f64,
    pub bias: f64,
}

/// `(1/N) sum_i int (est_i - truth_i)^2 dt`
pub fn mse(est: &FunctionalSample, truth: &FunctionalSample) -> Result<f64> {
    mean_integrated(est, truth, |d| d * d)
}

/// `(1/N) sum_i int |est_i - truth_i| dt`
pub fn mae(est: &FunctionalSample, truth: &FunctionalSample) -> Result<f64> {
    mean_integrated(est, truth, f64::abs)
}

/// `int |mean_i est_i - mean_i truth_i| dt`
pub fn bias(est: &FunctionalSample, truth: &FunctionalSample) -> Result<f64> {
    validate_aligned(&[("estimate", est), ("truth", truth)])?;
    let a = est.mean_curve();
    let b = truth.mean_curve();
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
    integrate_cells(&d, est.grid())
}

/// Prediction error of fitted response curves: the squared-error metric
/// applied to `M` or `Y`.
pub fn mspe(pred: &FunctionalSample, actual: &FunctionalSample) -> Result<f64> {
    mse(pred, actual)
}

pub fn score(est: &FunctionalSample, truth: &FunctionalSample) -> Result<CurveMetrics> {
    Ok(CurveMetrics {
        mse: mse(est, truth)?,
        mae: mae(est, truth)?,
        bias: bias(est, truth)?,
    })
}

fn mean_integrated(est: &FunctionalSample, truth: &FunctionalSample, f: impl Fn(f64) -> f64) -> Result<f64> {
    validate_aligned(&[("estimate", est), ("truth", truth)])?;
    let n_subj = est.n_subjects();
    if n_subj == 0 {
        return Err(Error::shape("metrics need at least one subject"));
    }
    let mut total = 0.0;
    for i in 0..n_subj {
        let d: Vec<f64> = est.row(i).iter().zip(truth.row(i)).map(|(a, b)| f(a - b)).collect();
        total += integrate_cells(&d, est.grid())?;
    }
    Ok(total / n_subj as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcdata::build_grid;

    #[test]
    fn constant_offset_identities() {
        let g = build_grid(150, 2.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..150).map(|k| ((i * 31 + k) as f64 * 0.37).sin()).collect())
            .collect();
        let truth = FunctionalSample::from_rows(g, &rows).unwrap();
        for c in [0.5, -1.25] {
            let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + c).collect()).collect();
            let est = FunctionalSample::from_rows(g, &shifted).unwrap();
            let m = score(&est, &truth).unwrap();
            let t = g.domain_length();
            assert!((m.mse - c * c * t).abs() < 1e-9 * t);
            assert!((m.mae - c.abs() * t).abs() < 1e-9 * t);
            assert!((m.bias - c.abs() * t).abs() < 1e-9 * t);
        }
        let zero = score(&truth, &truth).unwrap();
        assert_eq!((zero.mse, zero.mae, zero.bias), (0.0, 0.0, 0.0));
    }
}
