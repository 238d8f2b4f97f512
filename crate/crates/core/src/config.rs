//! Model configuration JSON shared by every command.
//!
//! ```json
//! {
//!   "center": true,
//!   "mediator": { "z": { "type": "historical", "delta": 6,
//!                        "basis": { "kind": "bspline", "n_basis": 8 },
//!                        "lambda": 1.0 } },
//!   "outcome":  { "z": { "type": "concurrent",
//!                        "basis": { "kind": "fourier", "n_basis": 5 } },
//!                 "m": { "type": "historical", "delta": "inf",
//!                        "basis": { "kind": "bspline", "n_basis": 8, "order": 4 },
//!                        "lambda_s": 0.5, "lambda_t": 2.0 } }
//! }
//! ```
//!
//! Bases carry no domain; it is taken from the data grid when the config is
//! turned into a [`MediationSpec`]. `op` defaults to curvature. For historical
//! terms `lambda` sets both `lambda_s` and `lambda_t` unless those are given.

use serde::{Deserialize, Serialize};

use crate::basis::{BasisDescriptor, BasisKind, BasisSystem, LinDiffOp};
use crate::error::{Error, Result};
use crate::mediation::MediationSpec;
use crate::quadrature::Window;
use crate::regression::CovariateTermSpec;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_true")]
    pub center: bool,
    pub mediator: MediatorConfig,
    pub outcome: OutcomeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediatorConfig {
    pub z: TermConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub z: TermConfig,
    pub m: TermConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermType {
    Concurrent,
    Historical,
}

/// Window width as written: a number or a string such as `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub kind: BasisKind,
    pub n_basis: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    #[serde(rename = "type")]
    pub kind: TermType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaValue>,
    pub basis: BasisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_s: Option<BasisConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<LinDiffOp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_t: Option<f64>,
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl BasisConfig {
    fn build(&self, domain: f64, path: &str) -> Result<BasisSystem> {
        BasisSystem::try_from(BasisDescriptor {
            kind: self.kind,
            n_basis: self.n_basis,
            domain,
            order: self.order,
        })
        .map_err(|e| config_err(path, e.to_string()))
    }
}

impl TermConfig {
    fn window(&self, path: &str) -> Result<Option<Window>> {
        let p = format!("{path}.delta");
        match (self.kind, &self.delta) {
            (TermType::Concurrent, None) => Ok(None),
            (TermType::Concurrent, Some(_)) => Err(config_err(&p, "concurrent terms take no window")),
            (TermType::Historical, None) => Err(config_err(&p, "historical terms need a window width")),
            (TermType::Historical, Some(d)) => {
                let w = match d {
                    DeltaValue::Number(v) => Window::new(*v),
                    DeltaValue::Text(s) => s.parse(),
                }
                .map_err(|e| config_err(&p, e.to_string()))?;
                if w.is_degenerate() {
                    return Err(config_err(
                        &p,
                        "window width 0 is the concurrent model; use type \"concurrent\"",
                    ));
                }
                Ok(Some(w))
            }
        }
    }

    fn lambda_field(&self, v: Option<f64>, field: &str, path: &str) -> Result<f64> {
        let v = v.unwrap_or(0.0);
        if !(v.is_finite() && v >= 0.0) {
            return Err(config_err(
                &format!("{path}.{field}"),
                format!("must be finite and >= 0, got {v}"),
            ));
        }
        Ok(v)
    }

    /// The covariate term this entry describes, with bases on `[0, domain]`.
    pub fn to_term(&self, name: &str, domain: f64, path: &str) -> Result<CovariateTermSpec> {
        let window = self.window(path)?;
        let basis_t = self.basis.build(domain, &format!("{path}.basis"))?;
        let op = self.op.unwrap_or(LinDiffOp::Curvature);
        let lambda = self.lambda_field(self.lambda, "lambda", path)?;
        let spec = match window {
            None => {
                if self.basis_s.is_some() {
                    return Err(config_err(
                        &format!("{path}.basis_s"),
                        "concurrent terms take no basis_s",
                    ));
                }
                if self.lambda_s.is_some() || self.lambda_t.is_some() {
                    return Err(config_err(
                        path,
                        "concurrent terms take `lambda`, not lambda_s/lambda_t",
                    ));
                }
                CovariateTermSpec::concurrent(name, basis_t, op, lambda)
            }
            Some(w) => {
                let basis_s = match &self.basis_s {
                    Some(b) => b.build(domain, &format!("{path}.basis_s"))?,
                    None => basis_t.clone(),
                };
                let ls = self.lambda_field(self.lambda_s.or(self.lambda), "lambda_s", path)?;
                let lt = self.lambda_field(self.lambda_t.or(self.lambda), "lambda_t", path)?;
                CovariateTermSpec::historical(name, w, basis_s, basis_t, op, ls, lt)
            }
        };
        spec.validate().map_err(|e| config_err(path, e.to_string()))?;
        Ok(spec)
    }
}

impl ModelConfig {
    /// Mediation spec for data observed on `[0, domain)`.
    pub fn to_spec(&self, domain: f64) -> Result<MediationSpec> {
        let mut spec = MediationSpec::new(
            self.mediator.z.to_term("z", domain, "mediator.z")?,
            self.outcome.z.to_term("z", domain, "outcome.z")?,
            self.outcome.m.to_term("m", domain, "outcome.m")?,
        );
        spec.center = self.center;
        Ok(spec)
    }

    /// Copy of this config carrying the smoothing parameters of `spec`, e.g.
    /// the values selected by cross-validation.
    pub fn with_lambdas_of(&self, spec: &MediationSpec) -> ModelConfig {
        let set = |t: &TermConfig, s: &CovariateTermSpec| {
            let mut t = t.clone();
            match t.kind {
                TermType::Concurrent => t.lambda = Some(s.lambda),
                TermType::Historical => {
                    t.lambda = None;
                    t.lambda_s = Some(s.lambda_s);
                    t.lambda_t = Some(s.lambda_t);
                }
            }
            t
        };
        ModelConfig {
            center: self.center,
            mediator: MediatorConfig {
                z: set(&self.mediator.z, &spec.m_on_z),
            },
            outcome: OutcomeConfig {
                z: set(&self.outcome.z, &spec.y_on_z),
                m: set(&self.outcome.m, &spec.y_on_m),
            },
        }
    }

    /// Checks everything that does not depend on the data grid.
    pub fn validate(&self) -> Result<()> {
        self.to_spec(1.0).map(|_| ())
    }
}

/// Parses and validates a model configuration. Errors name the offending
/// field as a dotted path, e.g. `outcome.m.delta`.
pub fn parse_model_config(json: &str) -> Result<ModelConfig> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let cfg: ModelConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(&path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}
