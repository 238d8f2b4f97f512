//! Subject-level bootstrap bands for effect curves, k-fold cross-validation
//! of smoothing parameters, and influence-window selection by cross-validated
//! prediction error.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::funcdata::{validate_aligned, FunctionalSample};
use crate::mediation::{fit_mediation, EffectCurves, MediationSpec, PathSet};
use crate::metrics::mspe;
use crate::quadrature::Window;
use crate::regression::{assemble_partials, fit, predict, CovariateTermSpec, SubjectPartials, UnitPenalty};
use crate::stats::{quantile_sorted, sorted};

const MAX_DROPPED_PCT: f64 = 5.0;
const MAX_PRODUCT_AXIS: usize = 9;
const TIE_RTOL: f64 = 1e-12;

// --- bootstrap --------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMethod {
    Percentile,
    BiasCorrected,
}

impl std::str::FromStr for BandMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "percentile" => Ok(BandMethod::Percentile),
            "bias_corrected" | "bias-corrected" | "bc" => Ok(BandMethod::BiasCorrected),
            other => Err(Error::invalid(format!("unknown band method `{other}`"))),
        }
    }
}

/// Treatment contrast for effect curves.
#[derive(Debug, Clone, PartialEq)]
pub enum Contrast {
    /// Population contrast `z` vs `z'`.
    Pair { z: Vec<f64>, z_prime: Vec<f64> },
    /// Each subject's own treatment curve vs zero.
    PerSubject,
}

/// Point estimates and replicate curves, one set per contrast.
#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    pub labels: Vec<String>,
    pub point: Vec<EffectCurves>,
    /// `replicates[r][c]`: replicate `r`, contrast `c`.
    pub replicates: Vec<Vec<EffectCurves>>,
    pub requested: usize,
    pub dropped: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EffectBandsRecord")]
pub struct EffectBands {
    pub label: String,
    pub t: Vec<f64>,
    pub de: Vec<f64>,
    pub de_lo: Vec<f64>,
    pub de_hi: Vec<f64>,
    pub ie: Vec<f64>,
    pub ie_lo: Vec<f64>,
    pub ie_hi: Vec<f64>,
}

#[derive(Deserialize)]
struct EffectBandsRecord {
    label: String,
    t: Vec<f64>,
    de: Vec<f64>,
    de_lo: Vec<f64>,
    de_hi: Vec<f64>,
    ie: Vec<f64>,
    ie_lo: Vec<f64>,
    ie_hi: Vec<f64>,
}

impl TryFrom<EffectBandsRecord> for EffectBands {
    type Error = Error;

    fn try_from(r: EffectBandsRecord) -> Result<Self> {
        let n = r.t.len();
        if [&r.de, &r.de_lo, &r.de_hi, &r.ie, &r.ie_lo, &r.ie_hi]
            .iter()
            .any(|v| v.len() != n)
        {
            return Err(Error::shape(format!("band `{}`: columns differ in length", r.label)));
        }
        Ok(EffectBands {
            label: r.label,
            t: r.t,
            de: r.de,
            de_lo: r.de_lo,
            de_hi: r.de_hi,
            ie: r.ie,
            ie_lo: r.ie_lo,
            ie_hi: r.ie_hi,
        })
    }
}

impl EffectBands {
    /// CSV with columns `t,de,de_lo,de_hi,ie,ie_lo,ie_hi`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "de", "de_lo", "de_hi", "ie", "ie_lo", "ie_hi"])
            .map_err(crate::funcdata::csv_io)?;
        for k in 0..self.t.len() {
            let row = [
                self.t[k],
                self.de[k],
                self.de_lo[k],
                self.de_hi[k],
                self.ie[k],
                self.ie_lo[k],
                self.ie_hi[k],
            ];
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(crate::funcdata::csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBands {
    pub b: usize,
    pub level: f64,
    pub method: BandMethod,
    pub seed: u64,
    pub dropped: usize,
    pub bands: Vec<EffectBands>,
}

fn contrast_curves(paths: &PathSet, contrast: &Contrast, z: &FunctionalSample) -> Result<Vec<EffectCurves>> {
    match contrast {
        Contrast::Pair { z, z_prime } => Ok(vec![paths.effects(z, z_prime)?]),
        Contrast::PerSubject => {
            let zero = vec![0.0; paths.grid.n_points()];
            (0..z.n_subjects()).map(|i| paths.effects(&z.row(i), &zero)).collect()
        }
    }
}

/// Refits the mediation model on `b` subject resamples. Replicate `r` draws
/// its subjects from RNG stream `r` of `seed`, so results do not depend on
/// the number of worker threads. Replicates whose fit is numerically
/// singular are dropped; more than 5% dropped is an error.
pub fn bootstrap_draws(
    z: &FunctionalSample,
    m: &FunctionalSample,
    y: &FunctionalSample,
    spec: &MediationSpec,
    contrast: &Contrast,
    b: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    if b < 50 {
        return Err(Error::invalid(format!(
            "at least 50 bootstrap replicates are required, got {b}"
        )));
    }
    validate_aligned(&[("z", z), ("m", m), ("y", y)])?;
    let n_subj = z.n_subjects();
    let point_fit = fit_mediation(z, m, y, spec)?;
    let point = contrast_curves(&point_fit.paths()?, contrast, z)?;
    let labels = match contrast {
        Contrast::Pair { .. } => vec!["contrast".to_string()],
        Contrast::PerSubject => z.ids().to_vec(),
    };

    let outcomes = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let idx: Vec<usize> = (0..n_subj).map(|_| rng.random_range(0..n_subj)).collect();
            let fitted = fit_mediation(
                &z.select_subjects(&idx),
                &m.select_subjects(&idx),
                &y.select_subjects(&idx),
                spec,
            );
            match fitted {
                Ok(f) => contrast_curves(&f.paths()?, contrast, z).map(Some),
                Err(e) if e.is_numerical() => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let dropped = outcomes.iter().filter(|o| o.is_none()).count();
    if dropped as f64 > MAX_DROPPED_PCT / 100.0 * b as f64 {
        return Err(Error::TooManyDropped {
            what: "bootstrap replicates",
            dropped,
            total: b,
            limit_pct: MAX_DROPPED_PCT,
        });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} of {b} singular bootstrap replicates");
    }
    Ok(BootstrapDraws {
        labels,
        point,
        replicates: outcomes.into_iter().flatten().collect(),
        requested: b,
        dropped,
        seed,
    })
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Point-wise band of `draws` around `estimate`.
pub fn band(draws: &[f64], estimate: f64, level: f64, method: BandMethod) -> (f64, f64) {
    let s = sorted(draws);
    let (p_lo, p_hi) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    match method {
        BandMethod::Percentile => (quantile_sorted(&s, p_lo), quantile_sorted(&s, p_hi)),
        BandMethod::BiasCorrected => {
            let b = s.len() as f64;
            let below = s.iter().filter(|v| **v < estimate).count() as f64;
            let ties = s.iter().filter(|v| **v == estimate).count() as f64;
            let frac = ((below + 0.5 * ties) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
            let nrm = standard_normal();
            let z0 = nrm.inverse_cdf(frac);
            let adj = |p: f64| nrm.cdf(2.0 * z0 + nrm.inverse_cdf(p));
            (quantile_sorted(&s, adj(p_lo)), quantile_sorted(&s, adj(p_hi)))
        }
    }
}

impl BootstrapDraws {
    pub fn bands(&self, level: f64, method: BandMethod) -> Result<BootstrapBands> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::invalid(format!("band level must lie in (0, 1), got {level}")));
        }
        let bands = self
            .point
            .iter()
            .enumerate()
            .map(|(c, est)| {
                let n = est.grid.n_points();
                let mut out = EffectBands {
                    label: self.labels[c].clone(),
                    t: est.grid.times(),
                    de: est.de.clone(),
                    ie: est.ie.clone(),
                    de_lo: vec![0.0; n],
                    de_hi: vec![0.0; n],
                    ie_lo: vec![0.0; n],
                    ie_hi: vec![0.0; n],
                };
                for k in 0..n {
                    let de: Vec<f64> = self.replicates.iter().map(|r| r[c].de[k]).collect();
                    let ie: Vec<f64> = self.replicates.iter().map(|r| r[c].ie[k]).collect();
                    (out.de_lo[k], out.de_hi[k]) = band(&de, est.de[k], level, method);
                    (out.ie_lo[k], out.ie_hi[k]) = band(&ie, est.ie[k], level, method);
                }
                out
            })
            .collect();
        Ok(BootstrapBands {
            b: self.requested,
            level,
            method,
            seed: self.seed,
            dropped: self.dropped,
            bands,
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn bootstrap_effects(
    z: &FunctionalSample,
    m: &FunctionalSample,
    y: &FunctionalSample,
    spec: &MediationSpec,
    contrast: &Contrast,
    b: usize,
    level: f64,
    method: BandMethod,
    seed: u64,
) -> Result<BootstrapBands> {
    bootstrap_draws(z, m, y, spec, contrast, b, seed)?.bands(level, method)
}

// --- cross-validation -------------------------------------------------------

/// Seeded assignment of subjects to `k` near-equal folds.
pub fn fold_assignment(n_subjects: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid(format!("at least 2 folds are required, got {k}")));
    }
    if n_subjects < k {
        return Err(Error::invalid(format!("{n_subjects} subjects cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n_subjects).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n_subjects];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

/// Training and validation subject lists (ascending) per fold.
fn fold_splits(assignment: &[usize], k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..k)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) = (0..assignment.len()).partition(|&i| assignment[i] == f);
            (train, val)
        })
        .collect()
}

/// How the smoothing parameters of a model's terms are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaPolicy {
    /// One value for every term (and both directions of a surface).
    Tied,
    /// Independent values per term over the product grid (at most 9 per axis).
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub policy: LambdaPolicy,
    /// Candidate smoothing parameters, one value per term.
    pub candidates: Vec<Vec<f64>>,
    /// `fold_mspe[c][f]`
    pub fold_mspe: Vec<Vec<f64>>,
    pub mean_mspe: Vec<f64>,
    pub selected: usize,
    pub selected_lambdas: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

impl CvResult {
    /// Term specs carrying the selected smoothing parameters.
    pub fn apply(&self, specs: &[CovariateTermSpec]) -> Vec<CovariateTermSpec> {
        specs
            .iter()
            .zip(&self.selected_lambdas)
            .map(|(s, l)| s.with_lambda(*l))
            .collect()
    }
}

/// Default base grid: 9 log-spaced values from 1e-4 to 1e4.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powi(i - 4)).collect()
}

fn block_scale(partials: &SubjectPartials) -> Vec<f64> {
    let all: Vec<usize> = (0..partials.n_subjects()).collect();
    let gram = {
        let p: usize = partials.blocks.iter().map(|b| b.dim).sum();
        let mut g = nalgebra::DMatrix::zeros(p, p);
        for &i in &all {
            g += &partials.gram[i];
        }
        g
    };
    partials
        .blocks
        .iter()
        .map(|blk| {
            let a: f64 = (blk.offset..blk.offset + blk.dim).map(|p| gram[(p, p)]).sum();
            let pen = match &blk.unit {
                UnitPenalty::Curve(r) => r.trace(),
                UnitPenalty::Surface { s, t } => s.trace() + t.trace(),
            };
            if pen > 0.0 && a > 0.0 {
                a / pen
            } else {
                1.0
            }
        })
        .collect()
}

/// Cross-validated MSPE of one regression per fold, for fixed specs.
fn fold_errors(
    partials: &SubjectPartials,
    covariates: &[&FunctionalSample],
    y: &FunctionalSample,
    specs: &[CovariateTermSpec],
    splits: &[(Vec<usize>, Vec<usize>)],
) -> Result<Vec<f64>> {
    splits
        .iter()
        .map(|(train, val)| {
            let sys = partials.system(train, specs);
            let fitted = fit(&sys, specs, y.grid())?;
            let xs: Vec<FunctionalSample> = covariates.iter().map(|x| x.select_subjects(val)).collect();
            let refs: Vec<&FunctionalSample> = xs.iter().collect();
            mspe(&predict(&fitted, &refs)?, &y.select_subjects(val))
        })
        .collect()
}

/// k-fold CV of the smoothing parameters of one regression. The data are
/// used as given (no centering). An explicit `base_grid` is used verbatim;
/// otherwise the default grid is scaled per term by `trace(A_jj) / trace(P_jj)`.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate_lambda(
    covariates: &[&FunctionalSample],
    specs: &[CovariateTermSpec],
    y: &FunctionalSample,
    base_grid: Option<&[f64]>,
    policy: LambdaPolicy,
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    let assignment = fold_assignment(y.n_subjects(), folds, seed)?;
    let partials = assemble_partials(covariates, specs, y)?;
    cv_with_partials(
        &partials, covariates, specs, y, base_grid, policy, folds, seed, assignment,
    )
}

#[allow(clippy::too_many_arguments)]
fn cv_with_partials(
    partials: &SubjectPartials,
    covariates: &[&FunctionalSample],
    specs: &[CovariateTermSpec],
    y: &FunctionalSample,
    base_grid: Option<&[f64]>,
    policy: LambdaPolicy,
    folds: usize,
    seed: u64,
    assignment: Vec<usize>,
) -> Result<CvResult> {
    let base: Vec<f64> = match base_grid {
        Some(g) => g.to_vec(),
        None => default_lambda_grid(),
    };
    if base.is_empty() {
        return Err(Error::invalid("the lambda grid is empty"));
    }
    if base.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::invalid("lambda grid values must be finite and >= 0"));
    }
    let mut base = base;
    base.sort_by(f64::total_cmp);
    base.dedup();
    let scale = match base_grid {
        Some(_) => vec![1.0; specs.len()],
        None => block_scale(partials),
    };
    let candidates: Vec<Vec<f64>> = match policy {
        LambdaPolicy::Tied => base.iter().map(|l| scale.iter().map(|s| l * s).collect()).collect(),
        LambdaPolicy::Product => {
            if base.len() > MAX_PRODUCT_AXIS {
                return Err(Error::invalid(format!(
                    "product lambda search allows at most {MAX_PRODUCT_AXIS} values per term, got {}",
                    base.len()
                )));
            }
            let mut out = vec![vec![]];
            for s in &scale {
                out = out
                    .into_iter()
                    .flat_map(|prefix: Vec<f64>| {
                        base.iter().map(move |l| {
                            let mut v = prefix.clone();
                            v.push(l * s);
                            v
                        })
                    })
                    .collect();
            }
            out
        }
    };

    let splits = fold_splits(&assignment, folds);
    let fold_mspe = candidates
        .par_iter()
        .map(|lams| {
            let trial: Vec<CovariateTermSpec> = specs.iter().zip(lams).map(|(s, l)| s.with_lambda(*l)).collect();
            match fold_errors(partials, covariates, y, &trial, &splits) {
                Ok(v) => Ok(v),
                Err(e) if e.is_numerical() => Ok(vec![f64::INFINITY; folds]),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_mspe: Vec<f64> = fold_mspe.iter().map(|f| f.iter().sum::<f64>() / folds as f64).collect();
    let selected = argmin_prefer_last(&mean_mspe, |c| candidates[c].iter().map(|l| l.max(1e-300).ln()).sum())
        .ok_or_else(|| Error::SingularSystem {
            condition: f64::INFINITY,
            detail: "every lambda candidate failed to fit".into(),
        })?;
    Ok(CvResult {
        policy,
        selected_lambdas: candidates[selected].clone(),
        candidates,
        fold_mspe,
        mean_mspe,
        selected,
        folds,
        seed,
        assignment,
    })
}

/// Index of the minimum finite value; near-ties (relative 1e-12) go to the
/// candidate with the larger `size`.
fn argmin_prefer_last(values: &[f64], size: impl Fn(usize) -> f64) -> Option<usize> {
    let best = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    (0..values.len())
        .filter(|&c| values[c] <= best + TIE_RTOL * best.abs())
        .max_by(|&a, &b| size(a).total_cmp(&size(b)).then(a.cmp(&b)))
}

/// Cross-validation of both mediation regressions: one tied value for the
/// mediator model, the product grid over the outcome model's two terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationCv {
    pub mediator: CvResult,
    pub outcome: CvResult,
    pub spec: MediationSpec,
}

pub fn cross_validate_mediation(
    z: &FunctionalSample,
    m: &FunctionalSample,
    y: &FunctionalSample,
    spec: &MediationSpec,
    base_grid: Option<&[f64]>,
    folds: usize,
    seed: u64,
) -> Result<MediationCv> {
    validate_aligned(&[("z", z), ("m", m), ("y", y)])?;
    let (z, m, y) = prepared(z, m, y, spec.center);
    let mediator = cross_validate_lambda(
        &[&z],
        &spec.mediator_terms(),
        &m,
        base_grid,
        LambdaPolicy::Tied,
        folds,
        seed,
    )?;
    let outcome = cross_validate_lambda(
        &[&z, &m],
        &spec.outcome_terms(),
        &y,
        base_grid,
        LambdaPolicy::Product,
        folds,
        seed,
    )?;
    let mut tuned = spec.clone();
    tuned.m_on_z = spec.m_on_z.with_lambda(mediator.selected_lambdas[0]);
    tuned.y_on_z = spec.y_on_z.with_lambda(outcome.selected_lambdas[0]);
    tuned.y_on_m = spec.y_on_m.with_lambda(outcome.selected_lambdas[1]);
    Ok(MediationCv {
        mediator,
        outcome,
        spec: tuned,
    })
}

fn prepared(
    z: &FunctionalSample,
    m: &FunctionalSample,
    y: &FunctionalSample,
    center: bool,
) -> (FunctionalSample, FunctionalSample, FunctionalSample) {
    let c = |s: &FunctionalSample| {
        if center && !s.is_centered() {
            s.center()
        } else {
            s.clone()
        }
    };
    (c(z), c(m), c(y))
}

// --- influence-window selection ----------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaGrids {
    pub mz: Vec<Window>,
    pub yz: Vec<Window>,
    pub ym: Vec<Window>,
}

impl DeltaGrids {
    pub fn uniform(grid: &[Window]) -> Self {
        DeltaGrids {
            mz: grid.to_vec(),
            yz: grid.to_vec(),
            ym: grid.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSelection {
    pub grids: DeltaGrids,
    /// CV MSPE of the mediator model per `delta_MZ`.
    pub m_mspe: Vec<f64>,
    /// CV MSPE of the outcome model, `y_mspe[ym][yz]`.
    pub y_mspe: Vec<Vec<f64>>,
    pub selected_mz: Window,
    pub selected_yz: Window,
    pub selected_ym: Window,
    pub folds: usize,
    pub seed: u64,
}

impl DeltaSelection {
    /// Table with one column per treatment window: an `M` row over the
    /// mediator model's window, then one `Y` row per mediator window of the
    /// outcome model. Cells without a candidate are empty.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut cols: Vec<Window> = self.grids.mz.clone();
        for w in &self.grids.yz {
            if !cols.contains(w) {
                cols.push(*w);
            }
        }
        cols.sort_by(|a, b| a.delta().total_cmp(&b.delta()));
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["model".to_string(), "m_window".to_string()];
        header.extend(cols.iter().map(|c| format!("z_window={c}")));
        w.write_record(&header).map_err(crate::funcdata::csv_io)?;
        let cell = |grid: &[Window], vals: &[f64], c: &Window| {
            grid.iter()
                .position(|g| g == c)
                .map(|i| vals[i].to_string())
                .unwrap_or_default()
        };
        let mut row = vec!["M".to_string(), String::new()];
        row.extend(cols.iter().map(|c| cell(&self.grids.mz, &self.m_mspe, c)));
        w.write_record(&row).map_err(crate::funcdata::csv_io)?;
        for (r, ym) in self.grids.ym.iter().enumerate() {
            let mut row = vec!["Y".to_string(), ym.to_string()];
            row.extend(cols.iter().map(|c| cell(&self.grids.yz, &self.y_mspe[r], c)));
            w.write_record(&row).map_err(crate::funcdata::csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(name: &str, grid: &[Window]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(format!("window grid for {name} is empty")));
    }
    Ok(())
}

fn cv_mean(
    covariates: &[&FunctionalSample],
    specs: &[CovariateTermSpec],
    y: &FunctionalSample,
    splits: &[(Vec<usize>, Vec<usize>)],
) -> Result<f64> {
    let partials = assemble_partials(covariates, specs, y)?;
    let errs = fold_errors(&partials, covariates, y, specs, splits)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Cross-validated MSPE of the mediator model for each `delta_MZ`, then of
/// the outcome model over every `(delta_YZ, delta_YM)` with `delta_MZ` fixed at
/// its minimizer. Smoothing parameters come from `base`; a zero window
/// gives a concurrent term. Folds are shared by every candidate.
pub fn select_delta(
    z: &FunctionalSample,
    m: &FunctionalSample,
    y: &FunctionalSample,
    base: &MediationSpec,
    grids: &DeltaGrids,
    folds: usize,
    seed: u64,
) -> Result<DeltaSelection> {
    check_grid("the mediator model", &grids.mz)?;
    check_grid("the outcome treatment term", &grids.yz)?;
    check_grid("the outcome mediator term", &grids.ym)?;
    validate_aligned(&[("z", z), ("m", m), ("y", y)])?;
    let (z, m, y) = prepared(z, m, y, base.center);
    let splits = fold_splits(&fold_assignment(z.n_subjects(), folds, seed)?, folds);

    let m_mspe = grids
        .mz
        .par_iter()
        .map(|d| cv_mean(&[&z], &[base.m_on_z.with_window(*d)], &m, &splits))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..grids.ym.len())
        .flat_map(|r| (0..grids.yz.len()).map(move |c| (r, c)))
        .collect();
    let flat = pairs
        .par_iter()
        .map(|&(r, c)| {
            let specs = [
                base.y_on_z.with_window(grids.yz[c]),
                base.y_on_m.with_window(grids.ym[r]),
            ];
            cv_mean(&[&z, &m], &specs, &y, &splits)
        })
        .collect::<Result<Vec<_>>>()?;
    let y_mspe: Vec<Vec<f64>> = flat.chunks(grids.yz.len()).map(|c| c.to_vec()).collect();

    let best_mz = first_argmin(&m_mspe).ok_or_else(|| Error::invalid("no finite mediator-model MSPE"))?;
    let best_y = first_argmin(&flat).ok_or_else(|| Error::invalid("no finite outcome-model MSPE"))?;
    let (r, c) = pairs[best_y];
    Ok(DeltaSelection {
        grids: grids.clone(),
        m_mspe,
        y_mspe,
        selected_mz: grids.mz[best_mz],
        selected_yz: grids.yz[c],
        selected_ym: grids.ym[r],
        folds,
        seed,
    })
}

fn first_argmin(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        if x.is_finite() && best.is_none_or(|b| *x < v[b]) {
            best = Some(i);
        }
    }
    best
}
