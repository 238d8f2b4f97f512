use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcdata::TimeGrid;
use crate::mediation::{EffectCurves, PathSet};
use crate::quadrature::Window;
use crate::regression::GridCoefficient;

pub type CurveFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SurfaceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Closed-form coefficient of one path.
#[derive(Clone)]
pub enum TruePath {
    Curve(CurveFn),
    Surface { f: SurfaceFn, window: Window },
}

impl fmt::Debug for TruePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruePath::Curve(_) => write!(f, "Curve(..)"),
            TruePath::Surface { window, .. } => write!(f, "Surface {{ window: {window} }}"),
        }
    }
}

impl TruePath {
    pub fn curve(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TruePath::Curve(Arc::new(f))
    }

    pub fn surface(window: Window, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        TruePath::Surface { f: Arc::new(f), window }
    }

    pub fn on_grid(&self, grid: &TimeGrid) -> GridCoefficient {
        let times = grid.times();
        match self {
            TruePath::Curve(f) => GridCoefficient::Curve(times.iter().map(|&t| f(t)).collect()),
            TruePath::Surface { f, window } => {
                let n = times.len();
                GridCoefficient::Surface {
                    values: DMatrix::from_fn(n, n, |j, k| f(times[j], times[k])),
                    window: window.snapped(grid.dt()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum TruthKind {
    Concurrent,
    Historical { delta: Window },
    Custom { label: String },
}

/// Data-generating model: coefficient functions for the alpha, beta and gamma
/// paths plus the noise level of both error curves.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub kind: TruthKind,
    pub alpha: TruePath,
    pub beta: TruePath,
    pub gamma: TruePath,
    pub noise_sd: f64,
}

impl SimTruth {
    /// `alpha = sin(2 pi t/T)`, `beta = cos(2 pi t/T) - t/T`, `gamma = -sin(2 pi t/T)`.
    pub fn concurrent(domain: f64, noise_sd: f64) -> Self {
        let w = 2.0 * PI / domain;
        SimTruth {
            kind: TruthKind::Concurrent,
            alpha: TruePath::curve(move |t| (w * t).sin()),
            beta: TruePath::curve(move |t| (w * t).cos() - t / domain),
            gamma: TruePath::curve(move |t| -(w * t).sin()),
            noise_sd,
        }
    }

    /// Historical surfaces on the band of width `delta`:
    ///
    /// ```text
    /// alpha(s,t) =  sin(2 pi (s+t) / 2T) + (s-t) / 2T
    /// beta(s,t)  =  cos(2 pi (s-t) / 2T) - (s+t) / 2T
    /// gamma(s,t) = -sin(2 pi (s+t) / 2T) + (s-t) / 2T
    /// ```
    pub fn historical(domain: f64, delta: Window, noise_sd: f64) -> Self {
        let two_t = 2.0 * domain;
        let w = 2.0 * PI / two_t;
        SimTruth {
            kind: TruthKind::Historical { delta },
            alpha: TruePath::surface(delta, move |s, t| (w * (s + t)).sin() + (s - t) / two_t),
            beta: TruePath::surface(delta, move |s, t| (w * (s - t)).cos() - (s + t) / two_t),
            gamma: TruePath::surface(delta, move |s, t| -(w * (s + t)).sin() + (s - t) / two_t),
            noise_sd,
        }
    }

    pub fn custom(label: &str, alpha: TruePath, beta: TruePath, gamma: TruePath, noise_sd: f64) -> Self {
        SimTruth {
            kind: TruthKind::Custom {
                label: label.to_string(),
            },
            alpha,
            beta,
            gamma,
            noise_sd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid(format!(
                "noise sd must be finite and >= 0, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }

    pub fn paths(&self, grid: &TimeGrid) -> PathSet {
        PathSet {
            grid: *grid,
            alpha: self.alpha.on_grid(grid),
            gamma: self.gamma.on_grid(grid),
            beta: self.beta.on_grid(grid),
        }
    }
}

/// Direct and indirect effects of the true model for the contrast `z - z'`.
pub fn true_effects(truth: &SimTruth, z: &[f64], z_prime: &[f64], grid: &TimeGrid) -> Result<EffectCurves> {
    truth.paths(grid).effects(z, z_prime)
}
