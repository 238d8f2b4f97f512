//! Uniform time grids and multi-subject functional samples.
//!
//! Every curve in the crate lives on a [`TimeGrid`] with origin 0 and constant
//! spacing `dt`; the domain is `[0, T)` with `T = n_points * dt`, so the last
//! sample sits at `T - dt`.

use std::io::Read;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking CSV time headers for uniform spacing.
const UNIFORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRecord")]
pub struct TimeGrid {
    n_points: usize,
    dt: f64,
}

#[derive(Deserialize)]
struct GridRecord {
    n_points: usize,
    dt: f64,
}

impl TryFrom<GridRecord> for TimeGrid {
    type Error = Error;

    fn try_from(r: GridRecord) -> Result<Self> {
        TimeGrid::new(r.n_points, r.dt)
    }
}

impl TimeGrid {
    pub fn new(n_points: usize, dt: f64) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::invalid(format!(
                "time grid needs at least 3 points, got {n_points}"
            )));
        }
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::invalid(format!(
                "grid spacing must be positive and finite, got {dt}"
            )));
        }
        Ok(Self { n_points, dt })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Domain length `T = n_points * dt`.
    pub fn domain_length(&self) -> f64 {
        self.n_points as f64 * self.dt
    }

    /// Sample time `t_k = k * dt`.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.time(k)).collect()
    }

    pub fn last_time(&self) -> f64 {
        self.time(self.n_points - 1)
    }
}

/// `build_grid` under its operational name.
pub fn build_grid(n_points: usize, dt: f64) -> Result<TimeGrid> {
    TimeGrid::new(n_points, dt)
}

/// N subject curves sampled on a shared grid; row `i` is subject `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    grid: TimeGrid,
    values: DMatrix<f64>,
    ids: Vec<String>,
    centered: bool,
}

impl FunctionalSample {
    pub fn new(grid: TimeGrid, values: DMatrix<f64>) -> Result<Self> {
        let ids = (0..values.nrows()).map(|i| i.to_string()).collect();
        Self::with_ids(grid, values, ids)
    }

    pub fn with_ids(grid: TimeGrid, values: DMatrix<f64>, ids: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::invalid("functional sample needs at least one subject"));
        }
        if values.ncols() != grid.n_points() {
            return Err(Error::shape(format!(
                "sample has {} columns but grid has {} points",
                values.ncols(),
                grid.n_points()
            )));
        }
        if ids.len() != values.nrows() {
            return Err(Error::shape(format!(
                "{} subject ids for {} rows",
                ids.len(),
                values.nrows()
            )));
        }
        if let Some((i, k)) = first_non_finite(&values) {
            return Err(Error::invalid(format!(
                "non-finite value at subject {i}, time index {k}"
            )));
        }
        Ok(Self {
            grid,
            values,
            ids,
            centered: false,
        })
    }

    /// Builds a sample from per-subject rows.
    pub fn from_rows(grid: TimeGrid, rows: &[Vec<f64>]) -> Result<Self> {
        let n = grid.n_points();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::shape(format!(
                "row {i} has length {} but grid has {n} points",
                r.len()
            )));
        }
        let values = DMatrix::from_fn(rows.len(), n, |i, k| rows[i][k]);
        Self::new(grid, values)
    }

    pub fn zeros(grid: TimeGrid, n_subjects: usize) -> Result<Self> {
        Self::new(grid, DMatrix::zeros(n_subjects, grid.n_points()))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Point-wise cross-subject mean, one value per grid time.
    pub fn mean_curve(&self) -> Vec<f64> {
        let n = self.n_subjects() as f64;
        self.values.row_sum().iter().map(|s| s / n).collect()
    }

    /// Subtracts the point-wise subject mean from every row.
    pub fn center(&self) -> FunctionalSample {
        let mean = self.mean_curve();
        let mut values = self.values.clone();
        for (k, m) in mean.iter().enumerate() {
            values.column_mut(k).add_scalar_mut(-m);
        }
        FunctionalSample {
            grid: self.grid,
            values,
            ids: self.ids.clone(),
            centered: true,
        }
    }

    /// New sample made of the given subject rows, in order. Duplicates allowed.
    pub fn select_subjects(&self, indices: &[usize]) -> FunctionalSample {
        let values = self.values.select_rows(indices.iter());
        FunctionalSample {
            grid: self.grid,
            values,
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            centered: false,
        }
    }

    /// Reads the wide CSV layout: `subject_id,t0,t1,...` with numeric time labels.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse(format!("reading header: {e}")))?
            .clone();
        if header.len() < 2 {
            return Err(Error::Parse("header needs subject_id and time columns".into()));
        }
        let times = header
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>()
                    .ok()
                    .filter(|t| t.is_finite())
                    .ok_or_else(|| Error::Parse(format!("time label {j} ({s:?}) is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let grid = grid_from_times(&times)?;

        let mut ids = Vec::new();
        let mut flat = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("record {line}: {e}")))?;
            if rec.len() != times.len() + 1 {
                return Err(Error::Parse(format!(
                    "record {line} has {} fields, expected {}",
                    rec.len(),
                    times.len() + 1
                )));
            }
            ids.push(rec[0].to_string());
            for (k, field) in rec.iter().skip(1).enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("record {line}, column {k}: {field:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!("record {line}, column {k}: non-finite value")));
                }
                flat.push(v);
            }
        }
        if ids.is_empty() {
            return Err(Error::Parse("no subject rows".into()));
        }
        let values = DMatrix::from_row_slice(ids.len(), times.len(), &flat);
        Self::with_ids(grid, values, ids)
    }

    pub fn read_csv_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_csv(bytes)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["subject_id".to_string()];
        header.extend(self.grid.times().iter().map(|t| format!("{t}")));
        w.write_record(&header).map_err(csv_io)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.values.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn grid_from_times(times: &[f64]) -> Result<TimeGrid> {
    if times.len() < 3 {
        return Err(Error::Parse(format!(
            "need at least 3 time columns, found {}",
            times.len()
        )));
    }
    let dt = times[1] - times[0];
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::Parse("time labels must be strictly increasing".into()));
    }
    if times[0].abs() > UNIFORM_TOL * dt {
        return Err(Error::Parse(format!("time origin must be 0, found {}", times[0])));
    }
    for (k, &t) in times.iter().enumerate() {
        if (t - k as f64 * dt).abs() > UNIFORM_TOL * dt * (1.0 + k as f64) {
            return Err(Error::Parse(format!(
                "non-uniform time grid at column {k}: {t} vs expected {}",
                k as f64 * dt
            )));
        }
    }
    TimeGrid::new(times.len(), dt).map_err(|e| Error::Parse(e.to_string()))
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for k in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, k)].is_finite() {
                return Some((i, k));
            }
        }
    }
    None
}

/// Checks that every sample shares the first one's grid and subject count.
/// Labels name the samples in error messages.
pub fn validate_aligned(samples: &[(&str, &FunctionalSample)]) -> Result<()> {
    let Some(&(first_label, first)) = samples.first() else {
        return Ok(());
    };
    for &(label, s) in &samples[1..] {
        if s.grid() != first.grid() {
            return Err(Error::Alignment {
                left: first_label.to_string(),
                right: label.to_string(),
                detail: format!(
                    "grids ({} pts, dt {}) vs ({} pts, dt {})",
                    first.grid().n_points(),
                    first.grid().dt(),
                    s.grid().n_points(),
                    s.grid().dt()
                ),
            });
        }
        if s.n_subjects() != first.n_subjects() {
            return Err(Error::shape(format!(
                "{first_label} has {} subjects but {label} has {}",
                first.n_subjects(),
                s.n_subjects()
            )));
        }
    }
    Ok(())
}
