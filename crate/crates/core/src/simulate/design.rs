use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Bernoulli;
use serde::{Deserialize, Serialize};

use super::hrf::Hrf;
use crate::error::{Error, Result};
use crate::funcdata::{FunctionalSample, TimeGrid};

/// Event onsets with case (1) / control (0) labels. Case events carry unit
/// amplitude and control events none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDesign {
    pub onsets: Vec<f64>,
    pub conditions: Vec<u8>,
    pub iti: f64,
}

impl EventDesign {
    pub fn new(onsets: Vec<f64>, conditions: Vec<u8>, iti: f64) -> Result<Self> {
        if onsets.len() != conditions.len() {
            return Err(Error::shape("one condition per onset is required"));
        }
        if onsets.windows(2).any(|w| w[1] <= w[0]) || onsets.iter().any(|o| *o < 0.0) {
            return Err(Error::invalid("onsets must be non-negative and strictly increasing"));
        }
        if conditions.iter().any(|c| *c > 1) {
            return Err(Error::invalid("conditions must be 0 or 1"));
        }
        Ok(Self {
            onsets,
            conditions,
            iti,
        })
    }

    pub fn n_events(&self) -> usize {
        self.onsets.len()
    }

    pub fn amplitude(&self, e: usize) -> f64 {
        f64::from(self.conditions[e])
    }

    /// CSV with columns `onset,condition`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["onset", "condition"])
            .map_err(crate::funcdata::csv_io)?;
        for (o, c) in self.onsets.iter().zip(&self.conditions) {
            w.write_record([o.to_string(), c.to_string()])
                .map_err(crate::funcdata::csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn onsets(duration: f64, iti: f64) -> Result<Vec<f64>> {
    if !(iti > 0.0 && iti.is_finite()) {
        return Err(Error::invalid(format!(
            "inter-trial interval must be positive, got {iti}"
        )));
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let o = k as f64 * iti;
        if o >= duration {
            return Ok(out);
        }
        out.push(o);
        k += 1;
    }
}

pub(crate) fn draw_design<R: Rng>(duration: f64, iti: f64, p_case: f64, rng: &mut R) -> Result<EventDesign> {
    let coin = Bernoulli::new(p_case)
        .map_err(|_| Error::invalid(format!("case probability must lie in [0, 1], got {p_case}")))?;
    let onsets = onsets(duration, iti)?;
    let conditions = onsets.iter().map(|_| u8::from(rng.sample(coin))).collect();
    Ok(EventDesign {
        onsets,
        conditions,
        iti,
    })
}

/// Onsets at `0, iti, 2 iti, ... < duration`, conditions i.i.d. Bernoulli(`p_case`).
pub fn gen_design(duration: f64, iti: f64, p_case: f64, seed: u64) -> Result<EventDesign> {
    draw_design(duration, iti, p_case, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `Z(t_k) = sum_e amplitude_e h(t_k - onset_e)` on the grid.
pub fn convolve_row(design: &EventDesign, hrf: &Hrf, grid: &TimeGrid) -> Vec<f64> {
    (0..grid.n_points())
        .map(|k| {
            let t = grid.time(k);
            (0..design.n_events())
                .map(|e| design.amplitude(e) * hrf.at(t - design.onsets[e]))
                .sum()
        })
        .collect()
}

pub fn convolve_design(design: &EventDesign, hrf: &Hrf, grid: &TimeGrid) -> Result<FunctionalSample> {
    FunctionalSample::from_rows(*grid, &[convolve_row(design, hrf, grid)])
}
