//! Basis systems, linear differential operators and the Gram / roughness
//! penalty matrices built from them.
//!
//! Fourier bases are orthonormal on `[0, T]` with period `T`:
//! `1/sqrt(T)`, then `sqrt(2/T) sin(r w t)`, `sqrt(2/T) cos(r w t)` for
//! `r = 1, 2, ...` with `w = 2 pi / T`. B-splines are clamped with equally
//! spaced interior knots. Monomials are the raw powers `t^k`.
//!
//! Penalty and Gram integrals share one code path: a composite trapezoid over
//! `512 * refine` sub-intervals of `[0, T]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base number of quadrature intervals for penalty/Gram integrals.
pub const QUADRATURE_BASE: usize = 512;
/// Default refinement multiplier over [`QUADRATURE_BASE`].
pub const DEFAULT_REFINE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Fourier,
    Bspline,
    Monomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisDescriptor", into = "BasisDescriptor")]
pub struct BasisSystem {
    kind: BasisKind,
    n_basis: usize,
    domain: f64,
    /// Spline order (degree + 1); zero for non-spline bases.
    order: usize,
    knots: Vec<f64>,
}

/// Serialized form of a [`BasisSystem`]; knots are derived, not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub kind: BasisKind,
    pub n_basis: usize,
    pub domain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

impl From<BasisSystem> for BasisDescriptor {
    fn from(b: BasisSystem) -> Self {
        BasisDescriptor {
            kind: b.kind,
            n_basis: b.n_basis,
            domain: b.domain,
            order: b.order(),
        }
    }
}

impl TryFrom<BasisDescriptor> for BasisSystem {
    type Error = Error;

    fn try_from(d: BasisDescriptor) -> Result<Self> {
        match d.kind {
            BasisKind::Fourier => Self::fourier(d.n_basis, d.domain),
            BasisKind::Monomial => Self::monomial(d.n_basis, d.domain),
            BasisKind::Bspline => {
                let order = d.order.unwrap_or(4);
                if d.n_basis < order {
                    return Err(Error::invalid(format!(
                        "bspline n_basis {} smaller than order {order}",
                        d.n_basis
                    )));
                }
                Self::bspline(order, d.n_basis - order, d.domain)
            }
        }
    }
}

impl BasisSystem {
    pub fn fourier(n_basis: usize, domain: f64) -> Result<Self> {
        check_domain(domain)?;
        if n_basis == 0 || n_basis.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "fourier basis size must be odd and positive, got {n_basis}"
            )));
        }
        Ok(Self {
            kind: BasisKind::Fourier,
            n_basis,
            domain,
            order: 0,
            knots: Vec::new(),
        })
    }

    pub fn monomial(n_basis: usize, domain: f64) -> Result<Self> {
        check_domain(domain)?;
        if n_basis == 0 {
            return Err(Error::invalid("monomial basis needs at least one function"));
        }
        Ok(Self {
            kind: BasisKind::Monomial,
            n_basis,
            domain,
            order: 0,
            knots: Vec::new(),
        })
    }

    /// Clamped B-spline basis with `n_interior` equally spaced interior knots;
    /// `n_basis = n_interior + order`.
    pub fn bspline(order: usize, n_interior: usize, domain: f64) -> Result<Self> {
        check_domain(domain)?;
        if order < 1 {
            return Err(Error::invalid("spline order must be at least 1"));
        }
        let mut knots = vec![0.0; order];
        let spans = n_interior + 1;
        knots.extend((1..spans).map(|i| domain * i as f64 / spans as f64));
        knots.extend(std::iter::repeat_n(domain, order));
        Ok(Self {
            kind: BasisKind::Bspline,
            n_basis: n_interior + order,
            domain,
            order,
            knots,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn domain(&self) -> f64 {
        self.domain
    }

    pub fn order(&self) -> Option<usize> {
        (self.kind == BasisKind::Bspline).then_some(self.order)
    }

    /// Highest derivative this basis supports with continuous values.
    pub fn max_derivative(&self) -> usize {
        match self.kind {
            BasisKind::Fourier | BasisKind::Monomial => usize::MAX,
            BasisKind::Bspline => self.order.saturating_sub(2),
        }
    }

    fn check_point(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.domain;
        if !(t >= -slack && t <= self.domain + slack) {
            return Err(Error::Domain {
                value: t,
                lower: 0.0,
                upper: self.domain,
            });
        }
        Ok(t.clamp(0.0, self.domain))
    }

    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        self.eval_derivative(t, 0)
    }

    /// `d`-th derivative of every basis function at `t`.
    pub fn eval_derivative(&self, t: f64, d: usize) -> Result<DVector<f64>> {
        let t = self.check_point(t)?;
        if d > self.max_derivative() {
            return Err(Error::Capability(format!(
                "order-{} B-splines do not have a continuous derivative of order {d}",
                self.order
            )));
        }
        let mut out = DVector::zeros(self.n_basis);
        match self.kind {
            BasisKind::Fourier => self.fourier_into(t, d, out.as_mut_slice()),
            BasisKind::Monomial => monomial_into(t, d, out.as_mut_slice()),
            BasisKind::Bspline => {
                let v = bspline_derivative(&self.knots, self.order, t, d);
                out.as_mut_slice().copy_from_slice(&v);
            }
        }
        Ok(out)
    }

    fn fourier_into(&self, t: f64, d: usize, out: &mut [f64]) {
        let omega = 2.0 * PI / self.domain;
        out[0] = if d == 0 { 1.0 / self.domain.sqrt() } else { 0.0 };
        let c = (2.0 / self.domain).sqrt();
        for r in 1..=(self.n_basis / 2) {
            let w = r as f64 * omega;
            let (s, co) = (w * t).sin_cos();
            let scale = c * w.powi(d as i32);
            // cyclic derivatives of sin and cos
            let (ds, dc) = match d % 4 {
                0 => (s, co),
                1 => (co, -s),
                2 => (-s, -co),
                _ => (-co, s),
            };
            out[2 * r - 1] = scale * ds;
            out[2 * r] = scale * dc;
        }
    }

    /// `n_points x K` matrix of basis values at the given times.
    pub fn eval_matrix(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        self.derivative_matrix(times, 0)
    }

    pub fn derivative_matrix(&self, times: &[f64], d: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(times.len(), self.n_basis);
        for (k, &t) in times.iter().enumerate() {
            let v = self.eval_derivative(t, d)?;
            m.row_mut(k).copy_from(&v.transpose());
        }
        Ok(m)
    }
}

fn check_domain(domain: f64) -> Result<()> {
    if domain <= 0.0 || !domain.is_finite() {
        return Err(Error::invalid(format!("basis domain must be positive, got {domain}")));
    }
    Ok(())
}

fn monomial_into(t: f64, d: usize, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = if k < d {
            0.0
        } else {
            let falling: f64 = ((k - d + 1)..=k).map(|j| j as f64).product();
            falling * t.powi((k - d) as i32)
        };
    }
}

/// All B-splines of `order` at `t` via the Cox-de Boor recursion. The right
/// endpoint is assigned to the last non-degenerate span.
fn bspline_values(knots: &[f64], order: usize, t: f64) -> Vec<f64> {
    let m = knots.len();
    let mut b = vec![0.0; m - 1];
    let last = *knots.last().unwrap();
    let span = if t >= last {
        (0..m - 1).rev().find(|&i| knots[i] < knots[i + 1])
    } else {
        (0..m - 1).find(|&i| knots[i] <= t && t < knots[i + 1])
    };
    if let Some(i) = span {
        b[i] = 1.0;
    }
    for p in 2..=order {
        let len = m - p;
        let mut next = vec![0.0; len];
        for i in 0..len {
            let mut v = 0.0;
            let d1 = knots[i + p - 1] - knots[i];
            if d1 > 0.0 {
                v += (t - knots[i]) / d1 * b[i];
            }
            let d2 = knots[i + p] - knots[i + 1];
            if d2 > 0.0 {
                v += (knots[i + p] - t) / d2 * b[i + 1];
            }
            next[i] = v;
        }
        b = next;
    }
    b
}

fn bspline_derivative(knots: &[f64], order: usize, t: f64, d: usize) -> Vec<f64> {
    if d >= order {
        return vec![0.0; knots.len() - order];
    }
    let mut v = bspline_values(knots, order - d, t);
    for p in (order - d + 1)..=order {
        let len = knots.len() - p;
        let scale = (p - 1) as f64;
        v = (0..len)
            .map(|i| {
                let d1 = knots[i + p - 1] - knots[i];
                let d2 = knots[i + p] - knots[i + 1];
                let a = if d1 > 0.0 { v[i] / d1 } else { 0.0 };
                let b = if d2 > 0.0 { v[i + 1] / d2 } else { 0.0 };
                scale * (a - b)
            })
            .collect();
    }
    v
}

/// Roughness operator `L` applied to coefficient functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LinDiffOp {
    /// `D^2`
    Curvature,
    /// `w^2 D + D^3`; `omega` defaults to `2 pi / T`.
    Harmonic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
    },
}

impl LinDiffOp {
    pub fn harmonic() -> Self {
        LinDiffOp::Harmonic { omega: None }
    }

    fn max_derivative(&self) -> usize {
        match self {
            LinDiffOp::Curvature => 2,
            LinDiffOp::Harmonic { .. } => 3,
        }
    }

    pub fn check_supported(&self, basis: &BasisSystem) -> Result<()> {
        let need = self.max_derivative();
        if need > basis.max_derivative() {
            return Err(Error::Capability(format!(
                "{self:?} needs derivative {need}, but the order-{} B-spline basis supports at most {}",
                basis.order,
                basis.max_derivative()
            )));
        }
        Ok(())
    }
}

/// `(L phi)(t)` for every basis function, from analytic derivatives.
pub fn eval_operator(op: &LinDiffOp, basis: &BasisSystem, t: f64) -> Result<DVector<f64>> {
    op.check_supported(basis)?;
    match *op {
        LinDiffOp::Curvature => basis.eval_derivative(t, 2),
        LinDiffOp::Harmonic { omega } => {
            let w = omega.unwrap_or(2.0 * PI / basis.domain());
            let d1 = basis.eval_derivative(t, 1)?;
            let d3 = basis.eval_derivative(t, 3)?;
            Ok(d1 * (w * w) + d3)
        }
    }
}

fn quadrature_nodes(domain: f64, refine: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if refine < 4 {
        return Err(Error::invalid(format!("quadrature refine must be >= 4, got {refine}")));
    }
    let m = QUADRATURE_BASE * refine;
    let h = domain / m as f64;
    let nodes = (0..=m).map(|i| i as f64 * h).collect();
    let weights = (0..=m).map(|i| if i == 0 || i == m { 0.5 * h } else { h }).collect();
    Ok((nodes, weights))
}

/// `sum_q w_q v_q v_q^T`, assembled from the upper triangle so the result is
/// exactly symmetric.
fn weighted_outer(rows: &[DVector<f64>], weights: &[f64], k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let s: f64 = rows.iter().zip(weights).map(|(v, w)| w * v[a] * v[b]).sum();
            out[(a, b)] = s;
            out[(b, a)] = s;
        }
    }
    out
}

/// `int_0^T (L phi)(L phi)^T dt`.
pub fn penalty_matrix(basis: &BasisSystem, op: &LinDiffOp, refine: usize) -> Result<DMatrix<f64>> {
    let (nodes, weights) = quadrature_nodes(basis.domain(), refine)?;
    let rows = nodes
        .iter()
        .map(|&t| eval_operator(op, basis, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(weighted_outer(&rows, &weights, basis.n_basis()))
}

/// `int_0^T phi phi^T dt`.
pub fn gram_matrix(basis: &BasisSystem, refine: usize) -> Result<DMatrix<f64>> {
    let (nodes, weights) = quadrature_nodes(basis.domain(), refine)?;
    let rows = nodes.iter().map(|&t| basis.eval(t)).collect::<Result<Vec<_>>>()?;
    Ok(weighted_outer(&rows, &weights, basis.n_basis()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_at_origin() {
        let b = BasisSystem::fourier(3, 1.0).unwrap();
        let v = b.eval(0.0).unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], 0.0);
        assert!((v[2] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn monomial_values() {
        let b = BasisSystem::monomial(3, 5.0).unwrap();
        assert_eq!(b.eval(2.0).unwrap().as_slice(), &[1.0, 2.0, 4.0]);
        let op = LinDiffOp::Curvature;
        for t in [0.0, 1.3, 4.9] {
            assert_eq!(eval_operator(&op, &b, t).unwrap().as_slice(), &[0.0, 0.0, 2.0]);
        }
    }

    #[test]
    fn bspline_partition_of_unity() {
        let b = BasisSystem::bspline(4, 7, 10.0).unwrap();
        assert_eq!(b.n_basis(), 11);
        for i in 0..=200 {
            let t = 10.0 * i as f64 / 200.0;
            let s: f64 = b.eval(t).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "t={t} sum={s}");
        }
    }

    #[test]
    fn fourier_curvature_at_eighth_period() {
        // d^2/dt^2 sqrt(2) sin(2 pi t) = -(2 pi)^2 sqrt(2) sin(2 pi t)
        let b = BasisSystem::fourier(3, 1.0).unwrap();
        let t = 0.125;
        let l = eval_operator(&LinDiffOp::Curvature, &b, t).unwrap();
        let expect = -(2.0 * PI).powi(2) * 2f64.sqrt() * (2.0 * PI * t).sin();
        assert!((l[1] - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn harmonic_annihilates_first_harmonic() {
        let b = BasisSystem::fourier(3, 7.0).unwrap();
        for i in 0..50 {
            let t = 7.0 * i as f64 / 49.0;
            let l = eval_operator(&LinDiffOp::harmonic(), &b, t).unwrap();
            assert!(l.amax() <= 1e-10, "t={t}: {l:?}");
        }
    }

    #[test]
    fn capability_errors() {
        let cubic = BasisSystem::bspline(4, 5, 1.0).unwrap();
        assert!(matches!(
            eval_operator(&LinDiffOp::harmonic(), &cubic, 0.5),
            Err(Error::Capability(_))
        ));
        assert!(eval_operator(&LinDiffOp::Curvature, &cubic, 0.5).is_ok());
        let quintic = BasisSystem::bspline(5, 5, 1.0).unwrap();
        assert!(eval_operator(&LinDiffOp::harmonic(), &quintic, 0.5).is_ok());
    }

    #[test]
    fn domain_errors() {
        let b = BasisSystem::fourier(5, 2.0).unwrap();
        assert!(matches!(b.eval(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(b.eval(2.5), Err(Error::Domain { .. })));
        assert!(b.eval(2.0).is_ok());
    }

    #[test]
    fn fourier_penalty_closed_form() {
        let b = BasisSystem::fourier(3, 1.0).unwrap();
        let p = penalty_matrix(&b, &LinDiffOp::Curvature, 4).unwrap();
        let w4 = (2.0 * PI).powi(4);
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, w4, w4]));
        assert!((&p - &expect).amax() <= 1e-6 * w4);
    }

    #[test]
    fn monomial_line_has_no_curvature() {
        let b = BasisSystem::monomial(2, 3.0).unwrap();
        let p = penalty_matrix(&b, &LinDiffOp::Curvature, 4).unwrap();
        assert_eq!(p, DMatrix::zeros(2, 2));
    }

    #[test]
    fn gram_matrices() {
        let f = BasisSystem::fourier(7, 300.0).unwrap();
        let g = gram_matrix(&f, 4).unwrap();
        assert!((&g - DMatrix::identity(7, 7)).amax() <= 1e-8);

        let m = BasisSystem::monomial(2, 1.0).unwrap();
        let g = gram_matrix(&m, 4).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0 / 3.0]);
        assert!((&g - &expect).amax() <= 1e-6);
        assert_eq!(g, g.transpose());
    }

    #[test]
    fn refine_precondition() {
        let b = BasisSystem::fourier(3, 1.0).unwrap();
        assert!(gram_matrix(&b, 3).is_err());
    }
}
