use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HRF_DURATION: f64 = 32.0;

/// Sampled haemodynamic response on a fine grid starting at lag 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hrf {
    dt: f64,
    values: Vec<f64>,
}

impl Hrf {
    /// Kernel from samples at lags `0, dt, 2 dt, ...`.
    pub fn from_samples(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("kernel spacing must be positive, got {dt}")));
        }
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("kernel needs at least one finite sample"));
        }
        Ok(Hrf { dt, values })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn duration(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    /// Value at `lag` from the nearest fine-grid sample; zero outside the support.
    pub fn at(&self, lag: f64) -> f64 {
        if lag < 0.0 {
            return 0.0;
        }
        let idx = (lag / self.dt + 0.5).floor() as usize;
        self.values.get(idx).copied().unwrap_or(0.0)
    }

    /// Lag of the maximum.
    pub fn peak_time(&self) -> f64 {
        self.arg(|a, b| a > b)
    }

    /// Lag of the minimum.
    pub fn trough_time(&self) -> f64 {
        self.arg(|a, b| a < b)
    }

    fn arg(&self, better: impl Fn(f64, f64) -> bool) -> f64 {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if better(*v, self.values[best]) {
                best = i;
            }
        }
        best as f64 * self.dt
    }
}

/// Double-gamma response `t^5 e^-t / 5! - (1/6) t^15 e^-t / 15!` on `[0, 32]`,
/// scaled to a peak of exactly 1.
pub fn canonical_hrf(dt_hrf: f64) -> Result<Hrf> {
    if !(dt_hrf > 0.0 && dt_hrf <= 0.5) {
        return Err(Error::invalid(format!(
            "HRF resolution must lie in (0, 0.5], got {dt_hrf}"
        )));
    }
    let n = (HRF_DURATION / dt_hrf + 0.5).floor() as usize + 1;
    let g6 = 120.0;
    let g16 = 1_307_674_368_000.0;
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 * dt_hrf;
            let e = (-t).exp();
            t.powi(5) * e / g6 - t.powi(15) * e / (6.0 * g16)
        })
        .collect();
    let peak = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Hrf {
        dt: dt_hrf,
        values: raw.iter().map(|v| v / peak).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_shape() {
        let h = canonical_hrf(0.1).unwrap();
        assert!((4.5..=5.5).contains(&h.peak_time()));
        assert_eq!(h.values().iter().copied().fold(f64::MIN, f64::max), 1.0);
        let min = h.values().iter().copied().fold(f64::MAX, f64::min);
        assert!(min < 0.0);
        assert!((12.0..=18.0).contains(&h.trough_time()));
        assert_eq!(h.at(-1.0), 0.0);
        assert_eq!(h.at(40.0), 0.0);
        assert!(canonical_hrf(0.0).is_err());
        assert!(canonical_hrf(0.6).is_err());
    }
}
