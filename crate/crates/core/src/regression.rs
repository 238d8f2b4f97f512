//! Penalized function-on-function regression with per-covariate concurrent or
//! historical terms.
//!
//! For subject `i` the response curve is modelled as
//!
//! ```text
//! Y_i(t) = sum_j [ X_ij(t) theta_j(t) ]                         (concurrent)
//!        + sum_j [ int_{Omega_t} X_ij(s) theta_j(s, t) ds ]     (historical)
//! ```
//!
//! with `theta_j(t) = phi_j(t)' g_j` and `theta_j(s,t) = phi_j(s)' G_j eta_j(t)`.
//! Stacking all coefficients into `c` gives a design row `r_i(t)` per subject
//! and time, and the penalized normal equations
//! `(int sum_i r_i r_i' dt + P) c = int sum_i r_i Y_i dt`, where `P` is the
//! block-diagonal roughness penalty. Integrals over `t` use the trapezoid rule
//! on the observation grid.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{gram_matrix, penalty_matrix, BasisSystem, LinDiffOp, DEFAULT_REFINE};
use crate::error::{Error, Result};
use crate::funcdata::{validate_aligned, FunctionalSample, TimeGrid};
use crate::metrics;
use crate::quadrature::{windowed_integrals, Window};

/// Cholesky pivots whose squared ratio falls below this are treated as a
/// failed factorization.
const PIVOT_RATIO_FLOOR: f64 = 1e-15;
const JITTER_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TermModel {
    Concurrent,
    Historical { delta: Window },
}

impl TermModel {
    pub fn label(&self) -> char {
        match self {
            TermModel::Concurrent => 'C',
            TermModel::Historical { .. } => 'H',
        }
    }
}

/// One covariate's coefficient model: its type, bases, roughness operator and
/// smoothing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTermSpec {
    pub name: String,
    pub model: TermModel,
    /// Basis in `t` (`K_j` functions for concurrent, `K_2j` for historical).
    pub basis_t: BasisSystem,
    /// Basis in `s`; historical terms only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_s: Option<BasisSystem>,
    pub op: LinDiffOp,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub lambda_s: f64,
    #[serde(default)]
    pub lambda_t: f64,
}

impl CovariateTermSpec {
    pub fn concurrent(name: &str, basis: BasisSystem, op: LinDiffOp, lambda: f64) -> Self {
        Self {
            name: name.to_string(),
            model: TermModel::Concurrent,
            basis_t: basis,
            basis_s: None,
            op,
            lambda,
            lambda_s: 0.0,
            lambda_t: 0.0,
        }
    }

    pub fn historical(
        name: &str,
        delta: Window,
        basis_s: BasisSystem,
        basis_t: BasisSystem,
        op: LinDiffOp,
        lambda_s: f64,
        lambda_t: f64,
    ) -> Self {
        Self {
            name: name.to_string(),
            model: TermModel::Historical { delta },
            basis_t,
            basis_s: Some(basis_s),
            op,
            lambda: 0.0,
            lambda_s,
            lambda_t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda, self.lambda_s, self.lambda_t];
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::invalid(format!(
                "term {}: smoothing parameters must be finite and >= 0",
                self.name
            )));
        }
        self.op.check_supported(&self.basis_t)?;
        match (&self.model, &self.basis_s) {
            (TermModel::Concurrent, None) => Ok(()),
            (TermModel::Concurrent, Some(_)) => Err(Error::invalid(format!(
                "term {}: concurrent terms do not take basis_s",
                self.name
            ))),
            (TermModel::Historical { .. }, None) => Err(Error::invalid(format!(
                "term {}: historical terms need basis_s",
                self.name
            ))),
            (TermModel::Historical { .. }, Some(bs)) => self.op.check_supported(bs),
        }
    }

    /// Number of coefficients: `K` (concurrent) or `K1 * K2` (historical).
    pub fn dim(&self) -> usize {
        match &self.basis_s {
            Some(bs) if matches!(self.model, TermModel::Historical { .. }) => bs.n_basis() * self.basis_t.n_basis(),
            _ => self.basis_t.n_basis(),
        }
    }

    pub fn window(&self) -> Option<Window> {
        match self.model {
            TermModel::Historical { delta } => Some(delta),
            TermModel::Concurrent => None,
        }
    }

    /// Copy with every smoothing parameter of the term set to `lambda`
    /// (`lambda_s = lambda_t` for historical terms).
    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut s = self.clone();
        match s.model {
            TermModel::Concurrent => s.lambda = lambda,
            TermModel::Historical { .. } => {
                s.lambda_s = lambda;
                s.lambda_t = lambda;
            }
        }
        s
    }

    /// Copy re-typed for an influence window: width 0 gives a concurrent
    /// term, anything else a historical term (reusing `basis_t` in `s` when
    /// no `basis_s` is set). Smoothing parameters carry over by role.
    pub fn with_window(&self, delta: Window) -> Self {
        let mut s = self.clone();
        if delta.is_degenerate() {
            if let TermModel::Historical { .. } = self.model {
                s.lambda = self.lambda_t;
            }
            s.model = TermModel::Concurrent;
            s.basis_s = None;
        } else {
            if let TermModel::Concurrent = self.model {
                s.lambda_s = self.lambda;
                s.lambda_t = self.lambda;
            }
            s.model = TermModel::Historical { delta };
            s.basis_s = Some(self.basis_s.clone().unwrap_or_else(|| self.basis_t.clone()));
        }
        s
    }
}

/// Fitted coefficient function of one term.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientEstimate {
    Curve {
        basis: BasisSystem,
        coeffs: DVector<f64>,
    },
    Surface {
        basis_s: BasisSystem,
        basis_t: BasisSystem,
        /// `K1 x K2`
        coeffs: DMatrix<f64>,
        /// Window width snapped to the fitting grid.
        window: Window,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalPoint {
    At(f64),
    Pair { s: f64, t: f64 },
}

impl CoefficientEstimate {
    pub fn is_surface(&self) -> bool {
        matches!(self, CoefficientEstimate::Surface { .. })
    }

    /// Value at a point plus an extrapolation flag (surfaces only: set when
    /// `(s, t)` lies outside the band `(t - delta) v 0 <= s <= t`).
    pub fn eval(&self, at: EvalPoint) -> Result<(f64, bool)> {
        match (self, at) {
            (CoefficientEstimate::Curve { basis, coeffs }, EvalPoint::At(t)) => Ok((basis.eval(t)?.dot(coeffs), false)),
            (
                CoefficientEstimate::Surface {
                    basis_s,
                    basis_t,
                    coeffs,
                    window,
                },
                EvalPoint::Pair { s, t },
            ) => {
                let phi = basis_s.eval(s)?;
                let eta = basis_t.eval(t)?;
                let v = (phi.transpose() * coeffs * eta)[(0, 0)];
                Ok((v, !window.contains(s, t)))
            }
            (CoefficientEstimate::Curve { .. }, EvalPoint::Pair { .. }) => {
                Err(Error::invalid("a coefficient curve is evaluated at a single time"))
            }
            (CoefficientEstimate::Surface { .. }, EvalPoint::At(_)) => {
                Err(Error::invalid("a coefficient surface is evaluated at an (s, t) pair"))
            }
        }
    }

    /// Values on the observation grid: `n` values for a curve, an `n x n`
    /// matrix indexed `[s_j, t_k]` for a surface.
    pub fn on_grid(&self, grid: &TimeGrid) -> Result<GridCoefficient> {
        let times = grid.times();
        match self {
            CoefficientEstimate::Curve { basis, coeffs } => {
                let phi = basis.eval_matrix(&times)?;
                Ok(GridCoefficient::Curve((phi * coeffs).as_slice().to_vec()))
            }
            CoefficientEstimate::Surface {
                basis_s,
                basis_t,
                coeffs,
                window,
            } => {
                let phi = basis_s.eval_matrix(&times)?;
                let eta = basis_t.eval_matrix(&times)?;
                Ok(GridCoefficient::Surface {
                    values: phi * coeffs * eta.transpose(),
                    window: *window,
                })
            }
        }
    }

    /// Unweighted roughness `int (L theta)^2` (surfaces: the sum of the `s`-
    /// and `t`-direction roughness).
    pub fn roughness(&self, op: &LinDiffOp) -> Result<f64> {
        match self {
            CoefficientEstimate::Curve { basis, coeffs } => {
                let r = penalty_matrix(basis, op, DEFAULT_REFINE)?;
                Ok(coeffs.dot(&(r * coeffs)))
            }
            CoefficientEstimate::Surface {
                basis_s,
                basis_t,
                coeffs,
                ..
            } => {
                let (u, v) = surface_penalties(basis_s, basis_t, op)?;
                let g = DVector::from_column_slice(coeffs.as_slice());
                Ok(g.dot(&((u + v) * &g)))
            }
        }
    }
}

/// A coefficient function sampled on the observation grid.
#[derive(Debug, Clone, PartialEq)]
pub enum GridCoefficient {
    Curve(Vec<f64>),
    /// `values[(j, k)] = theta(t_j, t_k)`
    Surface {
        values: DMatrix<f64>,
        window: Window,
    },
}

impl GridCoefficient {
    pub fn model_label(&self) -> char {
        match self {
            GridCoefficient::Curve(_) => 'C',
            GridCoefficient::Surface { .. } => 'H',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// `(max / min)^2` of the Cholesky pivots of the penalized system.
    pub condition_estimate: f64,
    pub jitter_applied: bool,
    pub jitter_amount: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_mspe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedTerm {
    pub spec: CovariateTermSpec,
    pub estimate: CoefficientEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedRegression {
    pub terms: Vec<FittedTerm>,
    pub diagnostics: FitDiagnostics,
    pub grid: TimeGrid,
}

impl FittedRegression {
    /// All coefficients stacked in term order (surfaces column-major).
    pub fn coefficient_vector(&self) -> DVector<f64> {
        let mut out = Vec::new();
        for t in &self.terms {
            match &t.estimate {
                CoefficientEstimate::Curve { coeffs, .. } => out.extend(coeffs.iter()),
                CoefficientEstimate::Surface { coeffs, .. } => out.extend(coeffs.iter()),
            }
        }
        DVector::from_vec(out)
    }

    pub fn specs(&self) -> Vec<CovariateTermSpec> {
        self.terms.iter().map(|t| t.spec.clone()).collect()
    }
}

/// Unit penalty blocks for one term, before multiplication by its lambdas.
#[derive(Debug, Clone)]
pub enum UnitPenalty {
    /// `int (L phi)(L phi)'`
    Curve(DMatrix<f64>),
    /// `U = (int eta eta') (x) (int L phi L phi')`, `V = (int L eta L eta') (x) (int phi phi')`
    Surface { s: DMatrix<f64>, t: DMatrix<f64> },
}

#[derive(Debug, Clone)]
pub struct TermBlock {
    pub offset: usize,
    pub dim: usize,
    pub unit: UnitPenalty,
}

/// Normal equations `A c = b` plus the penalty assembled with the specs' lambdas.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub penalty: DMatrix<f64>,
    pub blocks: Vec<TermBlock>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Block-diagonal penalty for the given term specs' lambdas.
    pub fn penalty_for(&self, specs: &[CovariateTermSpec]) -> DMatrix<f64> {
        assemble_penalty(&self.blocks, specs)
    }
}

fn assemble_penalty(blocks: &[TermBlock], specs: &[CovariateTermSpec]) -> DMatrix<f64> {
    let p: usize = blocks.iter().map(|b| b.dim).sum();
    let mut pen = DMatrix::zeros(p, p);
    for (blk, spec) in blocks.iter().zip(specs) {
        let mut view = pen.view_mut((blk.offset, blk.offset), (blk.dim, blk.dim));
        match &blk.unit {
            UnitPenalty::Curve(r) => view.copy_from(&(r * spec.lambda)),
            UnitPenalty::Surface { s, t } => {
                view.copy_from(&(s * spec.lambda_s + t * spec.lambda_t));
            }
        }
    }
    pen
}

fn surface_penalties(
    basis_s: &BasisSystem,
    basis_t: &BasisSystem,
    op: &LinDiffOp,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let gram_s = gram_matrix(basis_s, DEFAULT_REFINE)?;
    let gram_t = gram_matrix(basis_t, DEFAULT_REFINE)?;
    let rough_s = penalty_matrix(basis_s, op, DEFAULT_REFINE)?;
    let rough_t = penalty_matrix(basis_t, op, DEFAULT_REFINE)?;
    // vec(G) is column-major, so index l*K1 + k pairs eta_l with phi_k.
    Ok((gram_t.kronecker(&rough_s), rough_t.kronecker(&gram_s)))
}

/// Per-term basis values on the grid, shared by assembly and prediction.
#[derive(Debug, Clone)]
pub struct Design {
    grid: TimeGrid,
    terms: Vec<TermDesign>,
    dim: usize,
}

#[derive(Debug, Clone)]
struct TermDesign {
    offset: usize,
    /// `n x K2` (or `n x K` for concurrent terms)
    eta: DMatrix<f64>,
    /// `n x K1` for historical terms
    phi_s: Option<DMatrix<f64>>,
    window: Option<Window>,
}

impl Design {
    pub fn new(grid: &TimeGrid, specs: &[CovariateTermSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("regression needs at least one covariate term"));
        }
        let times = grid.times();
        let mut offset = 0;
        let mut terms = Vec::with_capacity(specs.len());
        for spec in specs {
            spec.validate()?;
            let eta = spec.basis_t.eval_matrix(&times)?;
            let (phi_s, window) = match (&spec.model, &spec.basis_s) {
                (TermModel::Historical { delta }, Some(bs)) => {
                    if delta.steps(grid.dt()) == Some(0) {
                        return Err(Error::invalid(format!(
                            "term {}: window {delta} snaps to zero width on dt={}; use a concurrent term",
                            spec.name,
                            grid.dt()
                        )));
                    }
                    (Some(bs.eval_matrix(&times)?), Some(delta.snapped(grid.dt())))
                }
                _ => (None, None),
            };
            terms.push(TermDesign {
                offset,
                eta,
                phi_s,
                window,
            });
            offset += spec.dim();
        }
        Ok(Self {
            grid: *grid,
            terms,
            dim: offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `n x P` design rows of one subject; `xs[j]` is the subject's curve for term `j`.
    pub fn subject_rows(&self, xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let n = self.grid.n_points();
        let mut rows = DMatrix::zeros(n, self.dim);
        for (td, x) in self.terms.iter().zip(xs) {
            match (&td.phi_s, &td.window) {
                (Some(phi_s), Some(window)) => {
                    let k1 = phi_s.ncols();
                    let k2 = td.eta.ncols();
                    // X*_c(t) = int_{Omega_t} X(s) phi_c(s) ds
                    let mut xstar = DMatrix::zeros(n, k1);
                    let mut prod = vec![0.0; n];
                    for c in 0..k1 {
                        for (k, p) in prod.iter_mut().enumerate() {
                            *p = x[k] * phi_s[(k, c)];
                        }
                        let w = windowed_integrals(&prod, &self.grid, window)?;
                        xstar.column_mut(c).copy_from_slice(&w);
                    }
                    for l in 0..k2 {
                        for c in 0..k1 {
                            let col = td.offset + l * k1 + c;
                            for k in 0..n {
                                rows[(k, col)] = td.eta[(k, l)] * xstar[(k, c)];
                            }
                        }
                    }
                }
                _ => {
                    for c in 0..td.eta.ncols() {
                        for k in 0..n {
                            rows[(k, td.offset + c)] = x[k] * td.eta[(k, c)];
                        }
                    }
                }
            }
        }
        Ok(rows)
    }
}

/// Per-subject contributions `A_i = int r_i r_i'`, `b_i = int r_i Y_i`.
#[derive(Debug, Clone)]
pub struct SubjectPartials {
    pub gram: Vec<DMatrix<f64>>,
    pub rhs: Vec<DVector<f64>>,
    pub blocks: Vec<TermBlock>,
}

impl SubjectPartials {
    pub fn n_subjects(&self) -> usize {
        self.rhs.len()
    }

    /// Sums the partials of the listed subjects, in the order given.
    pub fn system(&self, subjects: &[usize], specs: &[CovariateTermSpec]) -> LinearSystem {
        let p = self.blocks.iter().map(|b| b.dim).sum();
        let mut gram = DMatrix::zeros(p, p);
        let mut rhs = DVector::zeros(p);
        for &i in subjects {
            gram += &self.gram[i];
            rhs += &self.rhs[i];
        }
        LinearSystem {
            gram,
            rhs,
            penalty: assemble_penalty(&self.blocks, specs),
            blocks: self.blocks.clone(),
        }
    }
}

fn trapezoid_weights(grid: &TimeGrid) -> Vec<f64> {
    let n = grid.n_points();
    let dt = grid.dt();
    (0..n)
        .map(|k| if k == 0 || k == n - 1 { 0.5 * dt } else { dt })
        .collect()
}

fn term_blocks(specs: &[CovariateTermSpec]) -> Result<Vec<TermBlock>> {
    let mut offset = 0;
    specs
        .iter()
        .map(|spec| {
            let unit = match (&spec.model, &spec.basis_s) {
                (TermModel::Historical { .. }, Some(bs)) => {
                    let (s, t) = surface_penalties(bs, &spec.basis_t, &spec.op)?;
                    UnitPenalty::Surface { s, t }
                }
                _ => UnitPenalty::Curve(penalty_matrix(&spec.basis_t, &spec.op, DEFAULT_REFINE)?),
            };
            let blk = TermBlock {
                offset,
                dim: spec.dim(),
                unit,
            };
            offset += spec.dim();
            Ok(blk)
        })
        .collect()
}

fn check_inputs(covariates: &[&FunctionalSample], specs: &[CovariateTermSpec], y: &FunctionalSample) -> Result<()> {
    if covariates.is_empty() || specs.is_empty() {
        return Err(Error::invalid("regression needs at least one covariate"));
    }
    if covariates.len() != specs.len() {
        return Err(Error::shape(format!(
            "{} covariate samples for {} term specs",
            covariates.len(),
            specs.len()
        )));
    }
    let mut labelled: Vec<(&str, &FunctionalSample)> = vec![("response", y)];
    labelled.extend(specs.iter().map(|s| s.name.as_str()).zip(covariates.iter().copied()));
    validate_aligned(&labelled)
}

/// Per-subject Gram contributions, computed in parallel and kept in subject order.
pub fn assemble_partials(
    covariates: &[&FunctionalSample],
    specs: &[CovariateTermSpec],
    y: &FunctionalSample,
) -> Result<SubjectPartials> {
    check_inputs(covariates, specs, y)?;
    let grid = *y.grid();
    let design = Design::new(&grid, specs)?;
    let sqrt_w: Vec<f64> = trapezoid_weights(&grid).iter().map(|w| w.sqrt()).collect();
    let blocks = term_blocks(specs)?;

    let parts = (0..y.n_subjects())
        .into_par_iter()
        .map(|i| {
            let xs: Vec<Vec<f64>> = covariates.iter().map(|x| x.row(i)).collect();
            let mut rows = design.subject_rows(&xs)?;
            let mut yi = DVector::from_vec(y.row(i));
            for (k, sw) in sqrt_w.iter().enumerate() {
                rows.row_mut(k).scale_mut(*sw);
                yi[k] *= sw;
            }
            let mut a = rows.tr_mul(&rows);
            symmetrize_from_upper(&mut a);
            let b = rows.tr_mul(&yi);
            Ok((a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let (gram, rhs) = parts.into_iter().unzip();
    Ok(SubjectPartials { gram, rhs, blocks })
}

fn symmetrize_from_upper(a: &mut DMatrix<f64>) {
    let p = a.nrows();
    for r in 0..p {
        for c in (r + 1)..p {
            a[(c, r)] = a[(r, c)];
        }
    }
}

/// Builds `A = int R'R dt`, `b = int R'Y dt` summed over subjects, and the
/// block-diagonal penalty.
pub fn assemble_system(
    covariates: &[&FunctionalSample],
    specs: &[CovariateTermSpec],
    y: &FunctionalSample,
) -> Result<LinearSystem> {
    let partials = assemble_partials(covariates, specs, y)?;
    let all: Vec<usize> = (0..partials.n_subjects()).collect();
    Ok(partials.system(&all, specs))
}

/// Solves `(A + penalty) c = b` and unpacks `c` into per-term estimates.
pub fn fit(system: &LinearSystem, specs: &[CovariateTermSpec], grid: &TimeGrid) -> Result<FittedRegression> {
    if specs.len() != system.blocks.len() {
        return Err(Error::shape("term specs do not match the assembled system"));
    }
    check_design_blocks(system, specs)?;
    let lhs = &system.gram + &system.penalty;
    let (coeffs, condition_estimate, jitter) = solve_spd(&lhs, &system.rhs)?;

    let terms = specs
        .iter()
        .zip(&system.blocks)
        .map(|(spec, blk)| {
            let c = coeffs.rows(blk.offset, blk.dim).into_owned();
            let estimate = match (&spec.model, &spec.basis_s) {
                (TermModel::Historical { delta }, Some(bs)) => CoefficientEstimate::Surface {
                    basis_s: bs.clone(),
                    basis_t: spec.basis_t.clone(),
                    coeffs: DMatrix::from_column_slice(bs.n_basis(), spec.basis_t.n_basis(), c.as_slice()),
                    window: delta.snapped(grid.dt()),
                },
                _ => CoefficientEstimate::Curve {
                    basis: spec.basis_t.clone(),
                    coeffs: c,
                },
            };
            FittedTerm {
                spec: spec.clone(),
                estimate,
            }
        })
        .collect();

    Ok(FittedRegression {
        terms,
        diagnostics: FitDiagnostics {
            condition_estimate,
            jitter_applied: jitter > 0.0,
            jitter_amount: jitter,
            training_mspe: None,
        },
        grid: *grid,
    })
}

/// A term whose design block is identically zero cannot be estimated; report
/// it instead of letting the penalty or jitter produce a silent zero.
fn check_design_blocks(system: &LinearSystem, specs: &[CovariateTermSpec]) -> Result<()> {
    let global = (0..system.dim()).map(|p| system.gram[(p, p)]).fold(0.0, f64::max);
    for (blk, spec) in system.blocks.iter().zip(specs) {
        let local = (blk.offset..blk.offset + blk.dim)
            .map(|p| system.gram[(p, p)])
            .fold(0.0, f64::max);
        if local <= 1e-20 * global || local == 0.0 {
            return Err(Error::SingularSystem {
                condition: f64::INFINITY,
                detail: format!("design for term `{}` is identically zero", spec.name),
            });
        }
    }
    Ok(())
}

fn pivot_condition(ch: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = ch.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (hi / lo).powi(2)
}

/// Cholesky solve with the ridge-jitter fallback. Returns the solution, the
/// pivot condition estimate and the jitter added (0 when none).
pub fn solve_spd(lhs: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64, f64)> {
    let p = lhs.nrows();
    let try_solve = |m: DMatrix<f64>| -> Option<(DVector<f64>, f64)> {
        let ch = Cholesky::new(m)?;
        let cond = pivot_condition(&ch);
        if !cond.is_finite() || 1.0 / cond < PIVOT_RATIO_FLOOR {
            return None;
        }
        let x = ch.solve(rhs);
        x.iter().all(|v| v.is_finite()).then_some((x, cond))
    };
    if let Some((x, cond)) = try_solve(lhs.clone()) {
        return Ok((x, cond, 0.0));
    }
    let mut eps = 1e-10 * lhs.trace() / p as f64;
    for _ in 0..JITTER_RETRIES {
        if eps > 0.0 && eps.is_finite() {
            let mut m = lhs.clone();
            for i in 0..p {
                m[(i, i)] += eps;
            }
            if let Some((x, cond)) = try_solve(m) {
                log::warn!("penalized system needed ridge jitter {eps:.3e}");
                return Ok((x, cond, eps));
            }
        }
        eps *= 100.0;
    }
    Err(Error::SingularSystem {
        condition: eigen_condition(lhs),
        detail: format!("Cholesky failed after {JITTER_RETRIES} jitter retries"),
    })
}

fn eigen_condition(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    let eig = SymmetricEigen::new(m.clone());
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let hi = abs.iter().copied().fold(0.0, f64::max);
    let lo = abs.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

/// Assemble, solve and record the training MSPE.
pub fn fit_regression(
    covariates: &[&FunctionalSample],
    specs: &[CovariateTermSpec],
    y: &FunctionalSample,
) -> Result<FittedRegression> {
    let system = assemble_system(covariates, specs, y)?;
    let mut fitted = fit(&system, specs, y.grid())?;
    let pred = predict(&fitted, covariates)?;
    fitted.diagnostics.training_mspe = Some(metrics::mspe(&pred, y)?);
    Ok(fitted)
}

/// Fitted response curves for new covariate samples (no intercept).
pub fn predict(fit: &FittedRegression, covariates: &[&FunctionalSample]) -> Result<FunctionalSample> {
    if covariates.len() != fit.terms.len() {
        return Err(Error::shape(format!(
            "{} covariates for a fit with {} terms",
            covariates.len(),
            fit.terms.len()
        )));
    }
    let labelled: Vec<(&str, &FunctionalSample)> = fit
        .terms
        .iter()
        .map(|t| t.spec.name.as_str())
        .zip(covariates.iter().copied())
        .collect();
    validate_aligned(&labelled)?;
    let grid = covariates[0].grid();
    if grid != &fit.grid {
        return Err(Error::Alignment {
            left: "fit".into(),
            right: "covariates".into(),
            detail: "prediction grid differs from the fitting grid".into(),
        });
    }
    let specs = fit.specs();
    let design = Design::new(grid, &specs)?;
    let coeffs = fit.coefficient_vector();
    let n_subj = covariates[0].n_subjects();
    let rows = (0..n_subj)
        .into_par_iter()
        .map(|i| {
            let xs: Vec<Vec<f64>> = covariates.iter().map(|x| x.row(i)).collect();
            let r = design.subject_rows(&xs)?;
            Ok((r * &coeffs).as_slice().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    FunctionalSample::from_rows(*grid, &rows)
}

/// Single-coefficient evaluation under its operational name.
pub fn eval_coefficient(est: &CoefficientEstimate, at: EvalPoint) -> Result<(f64, bool)> {
    est.eval(at)
}

// --- JSON form -------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
enum EstimateRecord {
    Curve {
        basis: BasisSystem,
        coeffs: Vec<f64>,
    },
    Surface {
        basis_s: BasisSystem,
        basis_t: BasisSystem,
        /// `[K1, K2]`
        shape: [usize; 2],
        /// Row-major `K1 x K2`.
        coeffs: Vec<f64>,
        window: Window,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TermRecord {
    spec: CovariateTermSpec,
    estimate: EstimateRecord,
}

/// Serialized fitted regression: term specs, basis descriptors, coefficients
/// (row-major for surfaces) and diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedRegressionRecord {
    grid: TimeGrid,
    terms: Vec<TermRecord>,
    diagnostics: FitDiagnostics,
}

impl From<&FittedRegression> for FittedRegressionRecord {
    fn from(f: &FittedRegression) -> Self {
        let terms = f
            .terms
            .iter()
            .map(|t| TermRecord {
                spec: t.spec.clone(),
                estimate: match &t.estimate {
                    CoefficientEstimate::Curve { basis, coeffs } => EstimateRecord::Curve {
                        basis: basis.clone(),
                        coeffs: coeffs.as_slice().to_vec(),
                    },
                    CoefficientEstimate::Surface {
                        basis_s,
                        basis_t,
                        coeffs,
                        window,
                    } => EstimateRecord::Surface {
                        basis_s: basis_s.clone(),
                        basis_t: basis_t.clone(),
                        shape: [coeffs.nrows(), coeffs.ncols()],
                        coeffs: coeffs.transpose().as_slice().to_vec(),
                        window: *window,
                    },
                },
            })
            .collect();
        FittedRegressionRecord {
            grid: f.grid,
            terms,
            diagnostics: f.diagnostics.clone(),
        }
    }
}

impl TryFrom<FittedRegressionRecord> for FittedRegression {
    type Error = Error;

    fn try_from(r: FittedRegressionRecord) -> Result<Self> {
        let terms = r
            .terms
            .into_iter()
            .map(|t| {
                let estimate = match t.estimate {
                    EstimateRecord::Curve { basis, coeffs } => {
                        if coeffs.len() != basis.n_basis() {
                            return Err(Error::shape("curve coefficient count does not match its basis"));
                        }
                        CoefficientEstimate::Curve {
                            basis,
                            coeffs: DVector::from_vec(coeffs),
                        }
                    }
                    EstimateRecord::Surface {
                        basis_s,
                        basis_t,
                        shape,
                        coeffs,
                        window,
                    } => {
                        if shape != [basis_s.n_basis(), basis_t.n_basis()] || coeffs.len() != shape[0] * shape[1] {
                            return Err(Error::shape("surface coefficient shape does not match its bases"));
                        }
                        CoefficientEstimate::Surface {
                            basis_s,
                            basis_t,
                            coeffs: DMatrix::from_row_slice(shape[0], shape[1], &coeffs),
                            window,
                        }
                    }
                };
                Ok(FittedTerm { spec: t.spec, estimate })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FittedRegression {
            terms,
            diagnostics: r.diagnostics,
            grid: r.grid,
        })
    }
}

impl Serialize for FittedRegression {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        FittedRegressionRecord::from(self).serialize(ser)
    }
}

impl<'de> Deserialize<'de> for FittedRegression {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rec = FittedRegressionRecord::deserialize(de)?;
        FittedRegression::try_from(rec).map_err(serde::de::Error::custom)
    }
}
