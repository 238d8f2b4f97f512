//! Mediation model: `M` regressed on `Z` (the alpha path) and `Y` regressed
//! jointly on `Z` (gamma) and `M` (beta). Each path is concurrent or
//! historical, giving eight model combinations.
//!
//! Effects for a treatment contrast `z - z'`:
//!
//! ```text
//! DE(t) = gamma-path applied to (z - z')
//! IE(t) = beta-path applied to (alpha-path applied to (z - z'))
//! ```
//!
//! where a concurrent path multiplies point-wise and a historical path
//! integrates `x(s) theta(s, t)` over its window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcdata::{validate_aligned, FunctionalSample, TimeGrid};
use crate::quadrature::integrate_window;
use crate::regression::{fit_regression, CoefficientEstimate, CovariateTermSpec, FittedRegression, GridCoefficient};

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationSpec {
    /// alpha path (`M` on `Z`)
    pub m_on_z: CovariateTermSpec,
    /// gamma path (`Y` on `Z`)
    pub y_on_z: CovariateTermSpec,
    /// beta path (`Y` on `M`)
    pub y_on_m: CovariateTermSpec,
    /// Subtract subject means before fitting.
    #[serde(default = "default_true")]
    pub center: bool,
}

impl MediationSpec {
    pub fn new(m_on_z: CovariateTermSpec, y_on_z: CovariateTermSpec, y_on_m: CovariateTermSpec) -> Self {
        Self {
            m_on_z,
            y_on_z,
            y_on_m,
            center: true,
        }
    }

    /// Model label such as `C-CH`: alpha type, then gamma and beta types.
    pub fn combo(&self) -> String {
        format!(
            "{}-{}{}",
            self.m_on_z.model.label(),
            self.y_on_z.model.label(),
            self.y_on_m.model.label()
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.m_on_z.validate()?;
        self.y_on_z.validate()?;
        self.y_on_m.validate()
    }

    pub fn mediator_terms(&self) -> Vec<CovariateTermSpec> {
        vec![self.m_on_z.clone()]
    }

    pub fn outcome_terms(&self) -> Vec<CovariateTermSpec> {
        vec![self.y_on_z.clone(), self.y_on_m.clone()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FittedMediationRecord")]
pub struct FittedMediation {
    pub spec: MediationSpec,
    pub grid: TimeGrid,
    pub mediator_fit: FittedRegression,
    pub outcome_fit: FittedRegression,
}

#[derive(Deserialize)]
struct FittedMediationRecord {
    spec: MediationSpec,
    grid: TimeGrid,
    mediator_fit: FittedRegression,
    outcome_fit: FittedRegression,
}

impl TryFrom<FittedMediationRecord> for FittedMediation {
    type Error = Error;

    fn try_from(r: FittedMediationRecord) -> Result<Self> {
        if r.mediator_fit.terms.len() != 1 || r.outcome_fit.terms.len() != 2 {
            return Err(Error::shape(
                "a mediation fit has one mediator-model term and two outcome-model terms",
            ));
        }
        if r.mediator_fit.grid != r.grid || r.outcome_fit.grid != r.grid {
            return Err(Error::shape("regression grids differ from the mediation grid"));
        }
        Ok(FittedMediation {
            spec: r.spec,
            grid: r.grid,
            mediator_fit: r.mediator_fit,
            outcome_fit: r.outcome_fit,
        })
    }
}

impl FittedMediation {
    pub fn alpha(&self) -> &CoefficientEstimate {
        &self.mediator_fit.terms[0].estimate
    }

    pub fn gamma(&self) -> &CoefficientEstimate {
        &self.outcome_fit.terms[0].estimate
    }

    pub fn beta(&self) -> &CoefficientEstimate {
        &self.outcome_fit.terms[1].estimate
    }

    /// The three coefficient functions sampled on the fitting grid.
    pub fn paths(&self) -> Result<PathSet> {
        Ok(PathSet {
            grid: self.grid,
            alpha: self.alpha().on_grid(&self.grid)?,
            gamma: self.gamma().on_grid(&self.grid)?,
            beta: self.beta().on_grid(&self.grid)?,
        })
    }
}

/// Fits the mediator and outcome regressions.
pub fn fit_mediation(
    z: &FunctionalSample,
    m: &FunctionalSample,
    y: &FunctionalSample,
    spec: &MediationSpec,
) -> Result<FittedMediation> {
    spec.validate()?;
    validate_aligned(&[("z", z), ("m", m), ("y", y)])?;
    let prep = |s: &FunctionalSample| {
        if spec.center && !s.is_centered() {
            s.center()
        } else {
            s.clone()
        }
    };
    let (z, m, y) = (prep(z), prep(m), prep(y));
    let mediator_fit = fit_regression(&[&z], &spec.mediator_terms(), &m)?;
    let outcome_fit = fit_regression(&[&z, &m], &spec.outcome_terms(), &y)?;
    Ok(FittedMediation {
        spec: spec.clone(),
        grid: *z.grid(),
        mediator_fit,
        outcome_fit,
    })
}

/// Applies a path to an input curve on the grid.
pub fn apply_path(coef: &GridCoefficient, x: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    let n = grid.n_points();
    if x.len() != n {
        return Err(Error::shape(format!("curve has {} values, grid has {n}", x.len())));
    }
    match coef {
        GridCoefficient::Curve(theta) => {
            if theta.len() != n {
                return Err(Error::shape("coefficient curve does not match the grid"));
            }
            Ok(x.iter().zip(theta).map(|(a, b)| a * b).collect())
        }
        GridCoefficient::Surface { values, window } => {
            if values.nrows() != n || values.ncols() != n {
                return Err(Error::shape("coefficient surface does not match the grid"));
            }
            let mut prod = vec![0.0; n];
            Ok((0..n)
                .map(|k| {
                    for (j, p) in prod.iter_mut().enumerate().take(k + 1) {
                        *p = x[j] * values[(j, k)];
                    }
                    integrate_window(&prod, grid, window, k)
                })
                .collect())
        }
    }
}

/// Alpha, gamma and beta sampled on a grid; shared by fitted and true models.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub grid: TimeGrid,
    pub alpha: GridCoefficient,
    pub gamma: GridCoefficient,
    pub beta: GridCoefficient,
}

impl PathSet {
    pub fn combo(&self) -> String {
        format!(
            "{}-{}{}",
            self.alpha.model_label(),
            self.gamma.model_label(),
            self.beta.model_label()
        )
    }

    pub fn direct(&self, diff: &[f64]) -> Result<Vec<f64>> {
        apply_path(&self.gamma, diff, &self.grid)
    }

    pub fn indirect(&self, diff: &[f64]) -> Result<Vec<f64>> {
        let alpha_bar = apply_path(&self.alpha, diff, &self.grid)?;
        apply_path(&self.beta, &alpha_bar, &self.grid)
    }

    pub fn effects(&self, z: &[f64], z_prime: &[f64]) -> Result<EffectCurves> {
        let diff = contrast(z, z_prime, &self.grid)?;
        Ok(EffectCurves {
            grid: self.grid,
            de: self.direct(&diff)?,
            ie: self.indirect(&diff)?,
            z: z.to_vec(),
            z_prime: z_prime.to_vec(),
        })
    }

    /// Effects of each subject's own treatment curve against zero; returns
    /// `(de, ie)` samples with one row per subject.
    pub fn per_subject(&self, z: &FunctionalSample) -> Result<(FunctionalSample, FunctionalSample)> {
        if z.grid() != &self.grid {
            return Err(grid_mismatch());
        }
        let rows = (0..z.n_subjects())
            .into_par_iter()
            .map(|i| {
                let zi = z.row(i);
                Ok((self.direct(&zi)?, self.indirect(&zi)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let (de, ie): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        Ok((
            FunctionalSample::with_ids(self.grid, rows_matrix(&de, self.grid.n_points()), z.ids().to_vec())?,
            FunctionalSample::with_ids(self.grid, rows_matrix(&ie, self.grid.n_points()), z.ids().to_vec())?,
        ))
    }
}

fn rows_matrix(rows: &[Vec<f64>], n: usize) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(rows.len(), n, |i, k| rows[i][k])
}

fn grid_mismatch() -> Error {
    Error::Alignment {
        left: "fit".into(),
        right: "contrast".into(),
        detail: "contrast is not on the fitting grid".into(),
    }
}

fn contrast(z: &[f64], z_prime: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    let n = grid.n_points();
    if z.len() != n || z_prime.len() != n {
        return Err(grid_mismatch());
    }
    Ok(z.iter().zip(z_prime).map(|(a, b)| a - b).collect())
}

/// Direct and indirect effect curves for one contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurves {
    pub grid: TimeGrid,
    pub de: Vec<f64>,
    pub ie: Vec<f64>,
    pub z: Vec<f64>,
    pub z_prime: Vec<f64>,
}

impl EffectCurves {
    pub fn mean_de(&self) -> f64 {
        self.de.iter().sum::<f64>() / self.de.len() as f64
    }

    pub fn mean_ie(&self) -> f64 {
        self.ie.iter().sum::<f64>() / self.ie.len() as f64
    }

    /// CSV with columns `t,de,ie`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "de", "ie"]).map_err(crate::funcdata::csv_io)?;
        for k in 0..self.grid.n_points() {
            w.write_record([
                self.grid.time(k).to_string(),
                self.de[k].to_string(),
                self.ie[k].to_string(),
            ])
            .map_err(crate::funcdata::csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn direct_effect(fit: &FittedMediation, z: &[f64], z_prime: &[f64]) -> Result<Vec<f64>> {
    fit.paths()?.direct(&contrast(z, z_prime, &fit.grid)?)
}

pub fn indirect_effect(fit: &FittedMediation, z: &[f64], z_prime: &[f64]) -> Result<Vec<f64>> {
    fit.paths()?.indirect(&contrast(z, z_prime, &fit.grid)?)
}

pub fn effect_curves(fit: &FittedMediation, z: &[f64], z_prime: &[f64]) -> Result<EffectCurves> {
    fit.paths()?.effects(z, z_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcdata::build_grid;
    use crate::quadrature::Window;
    use nalgebra::DMatrix;

    #[test]
    fn concurrent_then_historical_window_length() {
        let g = build_grid(50, 1.0).unwrap();
        let n = g.n_points();
        let paths = PathSet {
            grid: g,
            alpha: GridCoefficient::Curve(vec![1.0; n]),
            gamma: GridCoefficient::Curve(vec![0.0; n]),
            beta: GridCoefficient::Surface {
                values: DMatrix::from_element(n, n, 1.0),
                window: Window::Finite(6.0),
            },
        };
        assert_eq!(paths.combo(), "C-CH");
        let e = paths.effects(&vec![1.0; n], &vec![0.0; n]).unwrap();
        for k in 0..n {
            assert!((e.ie[k] - g.time(k).min(6.0)).abs() < 1e-12);
            assert_eq!(e.de[k], 0.0);
        }
        let same = paths.effects(&vec![0.3; n], &vec![0.3; n]).unwrap();
        assert!(same.ie.iter().chain(&same.de).all(|v| *v == 0.0));
    }
}
