//! Synthetic benchmark: event designs convolved with a canonical HRF as the
//! treatment curves, mediator and outcome generated from a known mediation
//! model, accuracy metrics, and the scalar multilevel baselines.

mod baselines;
mod design;
mod hrf;
mod truth;

pub use baselines::{beta_kkb_baseline, kkb_baseline, kkb_from_paths, trial_betas, BaselineResult, PathCoefficients};
pub use design::{convolve_design, convolve_row, gen_design, EventDesign};
pub use hrf::{canonical_hrf, Hrf, HRF_DURATION};
pub use truth::{true_effects, CurveFn, SimTruth, SurfaceFn, TruePath, TruthKind};

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcdata::{FunctionalSample, TimeGrid};
use crate::mediation::{apply_path, PathSet};
use crate::metrics::{self, CurveMetrics};
use crate::regression::GridCoefficient;

/// Event-design settings shared by every subject of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignParams {
    pub iti: f64,
    pub p_case: f64,
    pub hrf: Hrf,
}

impl DesignParams {
    pub fn standard() -> Self {
        DesignParams {
            iti: 40.0,
            p_case: 0.5,
            hrf: canonical_hrf(0.1).expect("valid HRF resolution"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimDataset {
    pub z: FunctionalSample,
    pub m: FunctionalSample,
    pub y: FunctionalSample,
    pub truth: SimTruth,
    pub designs: Vec<EventDesign>,
    pub hrf: Hrf,
    pub seed: u64,
}

/// Seeds of a replication study: replicate `r` of a study seeded `seed`.
pub fn replicate_seed(seed: u64, r: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r)
}

/// Generates `n_subjects` subjects with the standard design (40 s spacing,
/// fair case/control coin, canonical HRF).
pub fn gen_dataset(truth: &SimTruth, n_subjects: usize, grid: &TimeGrid, seed: u64) -> Result<SimDataset> {
    gen_dataset_with(truth, n_subjects, grid, &DesignParams::standard(), seed)
}

/// Per subject `i`: an independent design and noise from RNG stream `i` of
/// `seed`; `M = alpha-path(Z) + e1`, `Y = gamma-path(Z) + beta-path(M) + e2`.
pub fn gen_dataset_with(
    truth: &SimTruth,
    n_subjects: usize,
    grid: &TimeGrid,
    params: &DesignParams,
    seed: u64,
) -> Result<SimDataset> {
    truth.validate()?;
    if n_subjects == 0 {
        return Err(Error::invalid("at least one subject is required"));
    }
    let paths = truth.paths(grid);
    let n = grid.n_points();
    let subjects = (0..n_subjects)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let design = design::draw_design(grid.domain_length(), params.iti, params.p_case, &mut rng)?;
            let z = convolve_row(&design, &params.hrf, grid);
            let mut m = apply_path(&paths.alpha, &z, grid)?;
            for v in &mut m {
                *v += truth.noise_sd * rng.sample::<f64, _>(StandardNormal);
            }
            let direct = apply_path(&paths.gamma, &z, grid)?;
            let mediated = apply_path(&paths.beta, &m, grid)?;
            let y: Vec<f64> = (0..n)
                .map(|k| direct[k] + mediated[k] + truth.noise_sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Ok((design, z, m, y))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut designs = Vec::with_capacity(n_subjects);
    let (mut zs, mut ms, mut ys) = (Vec::new(), Vec::new(), Vec::new());
    for (d, z, m, y) in subjects {
        designs.push(d);
        zs.push(z);
        ms.push(m);
        ys.push(y);
    }
    Ok(SimDataset {
        z: FunctionalSample::from_rows(*grid, &zs)?,
        m: FunctionalSample::from_rows(*grid, &ms)?,
        y: FunctionalSample::from_rows(*grid, &ys)?,
        truth: truth.clone(),
        designs,
        hrf: params.hrf.clone(),
        seed,
    })
}

/// Accuracy of one method against the truth. IE and DE always; path
/// coefficients only when the method estimates curves of the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ie: CurveMetrics,
    pub de: CurveMetrics,
    pub alpha: Option<CurveMetrics>,
    pub beta: Option<CurveMetrics>,
    pub gamma: Option<CurveMetrics>,
}

/// How a method produces effect curves.
#[derive(Debug, Clone, Copy)]
pub enum EffectSource<'a> {
    /// Time-varying coefficient paths.
    Functional(&'a PathSet),
    /// Time-constant effects per unit of treatment.
    Static { ie: f64, de: f64 },
}

impl EffectSource<'_> {
    /// Per-subject `(de, ie)` for each subject's treatment curve against zero.
    pub fn per_subject(&self, z: &FunctionalSample) -> Result<(FunctionalSample, FunctionalSample)> {
        match self {
            EffectSource::Functional(p) => p.per_subject(z),
            EffectSource::Static { ie, de } => {
                let scale = |c: f64| FunctionalSample::new(*z.grid(), z.values() * c);
                Ok((scale(*de)?, scale(*ie)?))
            }
        }
    }

    /// `(de, ie)` for the unit contrast `z = 1`, `z' = 0`.
    pub fn unit(&self, grid: &TimeGrid) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = grid.n_points();
        match self {
            EffectSource::Functional(p) => {
                let e = p.effects(&vec![1.0; n], &vec![0.0; n])?;
                Ok((e.de, e.ie))
            }
            EffectSource::Static { ie, de } => Ok((vec![*de; n], vec![*ie; n])),
        }
    }
}

fn single_row(grid: &TimeGrid, v: Vec<f64>) -> Result<FunctionalSample> {
    FunctionalSample::from_rows(*grid, &[v])
}

/// MSE and MAE of subject-level effect curves (each subject's `Z_i` against
/// zero) and bias of the unit-contrast effect curves.
pub fn score(est: EffectSource<'_>, truth: &PathSet, z: &FunctionalSample) -> Result<MetricReport> {
    let grid = z.grid();
    let (de_hat, ie_hat) = est.per_subject(z)?;
    let (de_true, ie_true) = truth.per_subject(z)?;
    let (de_u, ie_u) = est.unit(grid)?;
    let (de_tu, ie_tu) = EffectSource::Functional(truth).unit(grid)?;
    let block = |hat: &FunctionalSample, tru: &FunctionalSample, u: Vec<f64>, tu: Vec<f64>| -> Result<CurveMetrics> {
        Ok(CurveMetrics {
            mse: metrics::mse(hat, tru)?,
            mae: metrics::mae(hat, tru)?,
            bias: metrics::bias(&single_row(grid, u)?, &single_row(grid, tu)?)?,
        })
    };
    let (alpha, beta, gamma) = match est {
        EffectSource::Functional(p) => (
            path_metrics(&p.alpha, &truth.alpha, grid)?,
            path_metrics(&p.beta, &truth.beta, grid)?,
            path_metrics(&p.gamma, &truth.gamma, grid)?,
        ),
        EffectSource::Static { .. } => (None, None, None),
    };
    Ok(MetricReport {
        ie: block(&ie_hat, &ie_true, ie_u, ie_tu)?,
        de: block(&de_hat, &de_true, de_u, de_tu)?,
        alpha,
        beta,
        gamma,
    })
}

/// Curve vs curve: the three metrics with a single "subject". Surface vs
/// surface: the same integrals over the estimator's support band.
fn path_metrics(est: &GridCoefficient, truth: &GridCoefficient, grid: &TimeGrid) -> Result<Option<CurveMetrics>> {
    match (est, truth) {
        (GridCoefficient::Curve(a), GridCoefficient::Curve(b)) => Ok(Some(metrics::score(
            &single_row(grid, a.clone())?,
            &single_row(grid, b.clone())?,
        )?)),
        (GridCoefficient::Surface { values: a, window }, GridCoefficient::Surface { values: b, .. }) => {
            let dt = grid.dt();
            let (mut sq, mut ab) = (0.0, 0.0);
            for k in 0..grid.n_points() {
                for j in window.lower_index(k, dt)..=k {
                    let d: f64 = a[(j, k)] - b[(j, k)];
                    sq += d * d;
                    ab += d.abs();
                }
            }
            let cell = dt * dt;
            Ok(Some(CurveMetrics {
                mse: sq * cell,
                mae: ab * cell,
                bias: ab * cell,
            }))
        }
        _ => Ok(None),
    }
}

/// Relative integrated squared error of a surface over its support band.
pub fn band_relative_ise(
    est: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    window: &crate::quadrature::Window,
    grid: &TimeGrid,
) -> f64 {
    let dt = grid.dt();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..grid.n_points() {
        for j in window.lower_index(k, dt)..=k {
            num += (est[(j, k)] - truth[(j, k)]).powi(2);
            den += truth[(j, k)].powi(2);
        }
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcdata::build_grid;
    use crate::quadrature::Window;

    #[test]
    fn noise_free_generation_matches_definitions() {
        let g = build_grid(150, 2.0).unwrap();
        let c = gen_dataset(&SimTruth::concurrent(300.0, 0.0), 4, &g, 1).unwrap();
        for i in 0..4 {
            for k in 0..150usize {
                let t = g.time(k);
                let want = c.z.values()[(i, k)] * (2.0 * std::f64::consts::PI * t / 300.0).sin();
                assert!((c.m.values()[(i, k)] - want).abs() < 1e-14);
            }
        }
        let truth = SimTruth::historical(300.0, Window::Finite(6.0), 0.0);
        let h = gen_dataset(&truth, 3, &g, 2).unwrap();
        let TruePath::Surface { f, .. } = &truth.alpha else {
            unreachable!()
        };
        for i in 0..3 {
            let z = h.z.row(i);
            for k in 0..150usize {
                let lo = k.saturating_sub(3);
                let v = |j: usize| z[j] * f(g.time(j), g.time(k));
                let brute: f64 = (lo..k).map(|j| 0.5 * 2.0 * (v(j) + v(j + 1))).sum();
                assert!((h.m.values()[(i, k)] - brute).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let g = build_grid(150, 2.0).unwrap();
        let t = SimTruth::concurrent(300.0, 1.0);
        let a = gen_dataset(&t, 5, &g, 7).unwrap();
        let b = gen_dataset(&t, 5, &g, 7).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.designs, b.designs);
        let c = gen_dataset(&t, 5, &g, 8).unwrap();
        assert_ne!(a.y, c.y);
    }
}
