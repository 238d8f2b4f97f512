//! Scalar multilevel mediation baselines. Per subject, ordinary least squares
//! gives path coefficients `a` (M on Z), `c'` and `b` (Y on Z and M); the
//! population effects are `IE = mean(a) mean(b) + cov(a, b)` and `DE = mean(c')`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::design::EventDesign;
use super::hrf::Hrf;
use super::SimDataset;
use crate::error::{Error, Result};
use crate::funcdata::{validate_aligned, FunctionalSample, TimeGrid};
use crate::stats;

const MAX_DROP_PCT: f64 = 10.0;
const OLS_CONDITION_LIMIT: f64 = 1e12;

/// Per-subject path coefficients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c_prime: Vec<f64>,
}

impl PathCoefficients {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    fn select(&self, idx: &[usize]) -> PathCoefficients {
        PathCoefficients {
            a: idx.iter().map(|&i| self.a[i]).collect(),
            b: idx.iter().map(|&i| self.b[i]).collect(),
            c_prime: idx.iter().map(|&i| self.c_prime[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub ie: f64,
    pub de: f64,
    /// Bootstrap standard errors.
    pub ie_se: f64,
    pub de_se: f64,
    /// 95% bootstrap percentile intervals.
    pub ie_ci: (f64, f64),
    pub de_ci: (f64, f64),
    /// Interval excludes zero; averaged over replications this is the power.
    pub ie_significant: bool,
    pub de_significant: bool,
    pub dropped_subjects: usize,
}

/// Population effects from per-subject path coefficients.
pub fn kkb_from_paths(p: &PathCoefficients) -> (f64, f64) {
    let ie = stats::mean(&p.a) * stats::mean(&p.b) + stats::covariance(&p.a, &p.b);
    (ie, stats::mean(&p.c_prime))
}

/// OLS with a rank check; `None` when `X'X` is numerically singular.
fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let xtx = x.tr_mul(x);
    let ch = Cholesky::new(xtx)?;
    let l = ch.l_dirty();
    let d: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)].abs()).collect();
    let hi = d.iter().copied().fold(0.0, f64::max);
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    if lo.is_nan() || lo <= 0.0 || (hi / lo).powi(2) > OLS_CONDITION_LIMIT {
        return None;
    }
    Some(ch.solve(&x.tr_mul(y)))
}

/// `(a, b, c')` from observations `(z, m, y)` of one unit, with intercepts.
fn unit_paths(z: &[f64], m: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = z.len();
    let xm = DMatrix::from_fn(n, 2, |k, c| if c == 0 { 1.0 } else { z[k] });
    let a = ols(&xm, &DVector::from_column_slice(m))?[1];
    let xy = DMatrix::from_fn(n, 3, |k, c| match c {
        0 => 1.0,
        1 => z[k],
        _ => m[k],
    });
    let cb = ols(&xy, &DVector::from_column_slice(y))?;
    Some((a, cb[2], cb[1]))
}

fn collect_paths(units: Vec<Option<(f64, f64, f64)>>) -> Result<(PathCoefficients, usize)> {
    let total = units.len();
    let mut p = PathCoefficients::default();
    let mut dropped = 0;
    for u in units {
        match u {
            Some((a, b, c)) => {
                p.a.push(a);
                p.b.push(b);
                p.c_prime.push(c);
            }
            None => dropped += 1,
        }
    }
    if dropped as f64 > MAX_DROP_PCT / 100.0 * total as f64 || p.len() < 3 {
        return Err(Error::TooManyDropped {
            what: "subjects",
            dropped,
            total,
            limit_pct: MAX_DROP_PCT,
        });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} of {total} subjects with singular per-subject designs");
    }
    Ok((p, dropped))
}

fn bootstrap(p: &PathCoefficients, dropped: usize, b_power: usize, seed: u64) -> Result<BaselineResult> {
    if b_power < 2 {
        return Err(Error::invalid("at least 2 bootstrap resamples are required"));
    }
    let (ie, de) = kkb_from_paths(p);
    let n = p.len();
    let mut ies = Vec::with_capacity(b_power);
    let mut des = Vec::with_capacity(b_power);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    for _ in 0..b_power {
        for v in idx.iter_mut() {
            *v = rng.random_range(0..n);
        }
        let (i, d) = kkb_from_paths(&p.select(&idx));
        ies.push(i);
        des.push(d);
    }
    let ci = |v: &[f64]| {
        let s = stats::sorted(v);
        (stats::quantile_sorted(&s, 0.025), stats::quantile_sorted(&s, 0.975))
    };
    let (ie_ci, de_ci) = (ci(&ies), ci(&des));
    let excludes = |c: (f64, f64)| c.0 > 0.0 || c.1 < 0.0;
    Ok(BaselineResult {
        ie,
        de,
        ie_se: stats::std_dev(&ies),
        de_se: stats::std_dev(&des),
        ie_ci,
        de_ci,
        ie_significant: excludes(ie_ci),
        de_significant: excludes(de_ci),
        dropped_subjects: dropped,
    })
}

/// Treats every time point as a trial: per-subject OLS across time, then
/// population effects with a subject bootstrap for SEs and significance.
pub fn kkb_baseline(
    z: &FunctionalSample,
    m: &FunctionalSample,
    y: &FunctionalSample,
    b_power: usize,
    seed: u64,
) -> Result<BaselineResult> {
    validate_aligned(&[("z", z), ("m", m), ("y", y)])?;
    if z.n_subjects() < 3 {
        return Err(Error::invalid("the multilevel baseline needs at least 3 subjects"));
    }
    let units = (0..z.n_subjects())
        .map(|i| unit_paths(&z.row(i), &m.row(i), &y.row(i)))
        .collect();
    let (p, dropped) = collect_paths(units)?;
    bootstrap(&p, dropped, b_power, seed)
}

fn trial_design(design: &EventDesign, hrf: &Hrf, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    let n = grid.n_points();
    let e = design.n_events();
    let x = DMatrix::from_fn(n, e + 1, |k, c| {
        if c == 0 {
            1.0
        } else {
            hrf.at(grid.time(k) - design.onsets[c - 1])
        }
    });
    // Add regressors one at a time to name the trials that break the rank.
    for c in 1..=e {
        let sub = x.columns(0, c + 1).into_owned();
        if ols(&sub, &DVector::zeros(n)).is_none() {
            let col = x.column(c);
            let mut trials: Vec<usize> = (1..c)
                .filter(|&o| x.column(o).dot(&col) != 0.0)
                .map(|o| o - 1)
                .collect();
            trials.push(c - 1);
            return Err(Error::RankDeficientTrials { trials });
        }
    }
    Ok(x)
}

/// Single-trial GLM: one HRF regressor per event plus an intercept; returns
/// the per-event amplitudes.
pub fn trial_betas(series: &[f64], design: &EventDesign, hrf: &Hrf, grid: &TimeGrid) -> Result<Vec<f64>> {
    if series.len() != grid.n_points() {
        return Err(Error::shape("series length does not match the grid"));
    }
    let x = trial_design(design, hrf, grid)?;
    let beta = ols(&x, &DVector::from_column_slice(series)).ok_or_else(|| Error::RankDeficientTrials {
        trials: (0..design.n_events()).collect(),
    })?;
    Ok(beta.iter().skip(1).copied().collect())
}

/// Multilevel mediation on single-trial amplitudes: per subject, trial
/// triples (condition, beta_M, beta_Y) replace the time points.
pub fn beta_kkb_baseline(ds: &SimDataset, b_power: usize, seed: u64) -> Result<BaselineResult> {
    let grid = *ds.z.grid();
    if ds.designs.len() != ds.z.n_subjects() {
        return Err(Error::shape("one event design per subject is required"));
    }
    if ds.designs.len() < 3 {
        return Err(Error::invalid("the multilevel baseline needs at least 3 subjects"));
    }
    let units = ds
        .designs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let bm = trial_betas(&ds.m.row(i), d, &ds.hrf, &grid)?;
            let by = trial_betas(&ds.y.row(i), d, &ds.hrf, &grid)?;
            let cond: Vec<f64> = (0..d.n_events()).map(|e| d.amplitude(e)).collect();
            Ok(unit_paths(&cond, &bm, &by))
        })
        .collect::<Result<Vec<_>>>()?;
    let (p, dropped) = collect_paths(units)?;
    bootstrap(&p, dropped, b_power, seed)
}
