//! Trapezoid quadrature on uniform grids, including the moving-window
//! integrals `int_{(t-delta) v 0}^{t} f(s) ds` behind every historical term.
//!
//! All window integrals are sums of the same per-interval trapezoid terms
//! `dt/2 (f_j + f_{j+1})`, accumulated left to right from the window's lower
//! index, so whole-sequence and single-entry routes agree bit for bit.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::funcdata::TimeGrid;

/// Influence window width. `Infinite` integrates over the whole history `[0, t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    Finite(f64),
    Infinite,
}

impl Window {
    pub fn new(delta: f64) -> Result<Self> {
        if delta == f64::INFINITY {
            Ok(Window::Infinite)
        } else if delta.is_finite() && delta >= 0.0 {
            Ok(Window::Finite(delta))
        } else {
            Err(Error::invalid(format!(
                "window width must be >= 0 or +inf, got {delta}"
            )))
        }
    }

    pub fn delta(&self) -> f64 {
        match self {
            Window::Finite(d) => *d,
            Window::Infinite => f64::INFINITY,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Window::Finite(d) if *d == 0.0)
    }

    /// Number of grid intervals spanned: `delta / dt` rounded to nearest,
    /// ties up. `None` for the whole-history window.
    pub fn steps(&self, dt: f64) -> Option<usize> {
        match *self {
            Window::Infinite => None,
            Window::Finite(d) => {
                let steps = (d / dt + 0.5).floor();
                if (steps * dt - d).abs() > 1e-9 {
                    log::warn!("window width {d} is not a multiple of dt={dt}; using {}", steps * dt);
                }
                Some(steps as usize)
            }
        }
    }

    /// Window with its width snapped to the grid.
    pub fn snapped(&self, dt: f64) -> Window {
        match self.steps(dt) {
            None => Window::Infinite,
            Some(s) => Window::Finite(s as f64 * dt),
        }
    }

    /// First grid index inside the window ending at index `k`.
    #[inline]
    pub fn lower_index(&self, k: usize, dt: f64) -> usize {
        match self.steps(dt) {
            None => 0,
            Some(s) => k.saturating_sub(s),
        }
    }

    /// Realized lower bound `(t - delta) v 0`.
    pub fn lower_bound(&self, t: f64) -> f64 {
        match self {
            Window::Infinite => 0.0,
            Window::Finite(d) => (t - d).max(0.0),
        }
    }

    /// Whether `(s, t)` lies in the support band `{(t-delta) v 0 <= s <= t}`.
    pub fn contains(&self, s: f64, t: f64) -> bool {
        let eps = 1e-9 * t.abs().max(1.0);
        s <= t + eps && s >= self.lower_bound(t) - eps
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Finite(d) => write!(f, "{d}"),
            Window::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s.to_ascii_lowercase().as_str(), "inf" | "+inf" | "infinity") {
            return Ok(Window::Infinite);
        }
        let d: f64 = s
            .parse()
            .map_err(|_| Error::Parse(format!("window width {s:?} is not a number or \"inf\"")))?;
        Window::new(d)
    }
}

impl Serialize for Window {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Window::Finite(d) => ser.serialize_f64(*d),
            Window::Infinite => ser.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        struct WindowVisitor;

        impl Visitor<'_> for WindowVisitor {
            type Value = Window;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a nonnegative number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Window, E> {
                Window::new(v).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Window, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Window, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Window, E> {
                v.parse().map_err(E::custom)
            }
        }

        de.deserialize_any(WindowVisitor)
    }
}

fn check_len(values: &[f64], grid: &TimeGrid) -> Result<()> {
    if values.len() != grid.n_points() {
        return Err(Error::shape(format!(
            "sequence of length {} on a grid of {} points",
            values.len(),
            grid.n_points()
        )));
    }
    Ok(())
}

/// Per-interval trapezoid terms `dt/2 (v_j + v_{j+1})`.
pub fn interval_terms(values: &[f64], dt: f64) -> Vec<f64> {
    values.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).collect()
}

#[inline]
fn sum_terms(terms: &[f64]) -> f64 {
    terms.iter().fold(0.0, |acc, v| acc + v)
}

/// Composite trapezoid over `[t_0, t_{n-1}]`.
pub fn integrate(values: &[f64], grid: &TimeGrid) -> Result<f64> {
    check_len(values, grid)?;
    Ok(sum_terms(&interval_terms(values, grid.dt())))
}

/// Cell (rectangle) rule over `[0, T)`: each sample stands for one `dt` cell.
/// Used for the error metrics, which integrate over the full acquisition span.
pub fn integrate_cells(values: &[f64], grid: &TimeGrid) -> Result<f64> {
    check_len(values, grid)?;
    Ok(grid.dt() * values.iter().sum::<f64>())
}

/// Entry `k` is the trapezoid of `values` over the window ending at `t_k`.
pub fn windowed_integrals(values: &[f64], grid: &TimeGrid, window: &Window) -> Result<Vec<f64>> {
    check_len(values, grid)?;
    let terms = interval_terms(values, grid.dt());
    let n = values.len();
    let mut out = vec![0.0; n];
    match window.steps(grid.dt()) {
        None => {
            let mut running = 0.0;
            for k in 1..n {
                running += terms[k - 1];
                out[k] = running;
            }
        }
        Some(0) => {}
        Some(m) => {
            for (k, o) in out.iter_mut().enumerate().skip(1) {
                *o = sum_terms(&terms[k.saturating_sub(m)..k]);
            }
        }
    }
    Ok(out)
}

/// Trapezoid of an arbitrary integrand `values` (indexed by `s`) over the
/// window ending at grid index `k`. Matches entry `k` of
/// [`windowed_integrals`] exactly when given the same sequence.
pub fn integrate_window(values: &[f64], grid: &TimeGrid, window: &Window, k: usize) -> f64 {
    let lo = window.lower_index(k, grid.dt());
    let dt = grid.dt();
    (lo..k).fold(0.0, |acc, j| acc + 0.5 * dt * (values[j] + values[j + 1]))
}

/// Trapezoid weights over the window ending at index `k`: `(lo, weights)`
/// with `weights[j - lo]` multiplying `f(t_j)`.
pub fn window_weights(grid: &TimeGrid, window: &Window, k: usize) -> (usize, Vec<f64>) {
    let lo = window.lower_index(k, grid.dt());
    let dt = grid.dt();
    let mut w = vec![0.0; k - lo + 1];
    for j in 0..(k - lo) {
        w[j] += 0.5 * dt;
        w[j + 1] += 0.5 * dt;
    }
    (lo, w)
}
