//! Piecewise quadratic Lyapunov functions `V(x) = max_j x^T P_j x` and the
//! largest sublevel set contained in the modeling box.
//!
//! A max of positive definite quadratics has convex sublevel sets containing
//! the origin, so `{V <= k}` lies inside the box exactly when `k` does not
//! exceed the minimum of `V` over the box boundary. In the plane that minimum
//! is found in closed form facet by facet.

use thiserror::Error;

use crate::lmikit::SymMatrix;
use crate::polyalg::{BoxDomain, Transform};
use crate::sampling::Halton;

/// Boundary samples used when `n >= 3`.
pub const DEFAULT_BOUNDARY_SAMPLES: usize = 200_000;
/// Ray-parameter tolerance of [`boundary_polyline`].
pub const RAY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevelError {
    #[error("no Lyapunov pieces given")]
    EmptyPieces,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("origin is not strictly inside the box")]
    OriginNotInterior,
    #[error("level must be positive and finite, got {0}")]
    NonPositiveLevel(f64),
    #[error("operation only supported in two dimensions (got {0})")]
    UnsupportedDimension(usize),
}

/// Point-membership query in original coordinates.
pub trait Region: Sync {
    fn dim(&self) -> usize;
    fn contains(&self, x: &[f64]) -> bool;
    /// A box containing the whole region.
    fn bounding_box(&self) -> BoxDomain;
}

fn check_pieces(pieces: &[SymMatrix], n: usize) -> Result<(), LevelError> {
    if pieces.is_empty() {
        return Err(LevelError::EmptyPieces);
    }
    if let Some(p) = pieces.iter().find(|p| p.dim() != n) {
        return Err(LevelError::DimensionMismatch { expected: n, got: p.dim() });
    }
    Ok(())
}

/// `max_j x^T P_j x`.
pub fn v_eval(pieces: &[SymMatrix], x: &[f64]) -> Result<f64, LevelError> {
    check_pieces(pieces, x.len())?;
    Ok(v_unchecked(pieces, x))
}

pub(crate) fn v_unchecked(pieces: &[SymMatrix], x: &[f64]) -> f64 {
    pieces.iter().map(|p| p.quad_form(x)).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub k: f64,
    /// Boundary point attaining (or, when approximate, nearest to) `k`.
    pub witness: Vec<f64>,
    /// True for the sampled fallback, which can only over-estimate `k`.
    pub approximate: bool,
}

/// Largest `k` with `{V <= k}` inside `bx`: the minimum of `V` on the boundary.
pub fn max_level(pieces: &[SymMatrix], bx: &BoxDomain) -> Result<LevelResult, LevelError> {
    check_pieces(pieces, bx.dim())?;
    if bx.lower().iter().zip(bx.upper()).any(|(&l, &u)| !(l < 0.0 && 0.0 < u)) {
        return Err(LevelError::OriginNotInterior);
    }
    if bx.dim() == 2 {
        Ok(facet_min_2d(pieces, bx))
    } else {
        Ok(sampled_min(pieces, bx, DEFAULT_BOUNDARY_SAMPLES))
    }
}

/// Real roots of `a t^2 + b t + c` (linear or constant handled).
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        return if b.abs() > 1e-14 * scale { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

fn facet_min_2d(pieces: &[SymMatrix], bx: &BoxDomain) -> LevelResult {
    let mut best = LevelResult { k: f64::INFINITY, witness: vec![0.0; 2], approximate: false };
    for axis in 0..2 {
        let other = 1 - axis;
        let (t_lo, t_hi) = (bx.lower()[other], bx.upper()[other]);
        for side in [bx.lower()[axis], bx.upper()[axis]] {
            // x(t) = c + t e with c[axis] = side, e = unit(other)
            let coeffs: Vec<(f64, f64, f64)> = pieces
                .iter()
                .map(|p| {
                    let m = p.matrix();
                    (m[(other, other)], 2.0 * m[(other, axis)] * side, m[(axis, axis)] * side * side)
                })
                .collect();
            let mut candidates = vec![t_lo, t_hi];
            for &(a, b, _) in &coeffs {
                if a > 0.0 {
                    candidates.push(-b / (2.0 * a));
                }
            }
            for i in 0..coeffs.len() {
                for j in i + 1..coeffs.len() {
                    let (ai, bi, ci) = coeffs[i];
                    let (aj, bj, cj) = coeffs[j];
                    candidates.extend(quadratic_roots(ai - aj, bi - bj, ci - cj));
                }
            }
            for t in candidates {
                if !(t_lo..=t_hi).contains(&t) {
                    continue;
                }
                let mut x = [0.0; 2];
                x[axis] = side;
                x[other] = t;
                let v = v_unchecked(pieces, &x);
                if v < best.k {
                    best = LevelResult { k: v, witness: x.to_vec(), approximate: false };
                }
            }
        }
    }
    best
}

/// Quasi-random boundary sampling, split evenly over the `2n` facets.
pub fn sampled_min(pieces: &[SymMatrix], bx: &BoxDomain, samples: usize) -> LevelResult {
    let n = bx.dim();
    let per_face = (samples / (2 * n)).max(1);
    let mut best = LevelResult { k: f64::INFINITY, witness: vec![0.0; n], approximate: true };
    for axis in 0..n {
        for side in [bx.lower()[axis], bx.upper()[axis]] {
            let mut h = Halton::new(n.saturating_sub(1).max(1));
            for _ in 0..per_face {
                let u = h.next_point();
                let mut x = Vec::with_capacity(n);
                let mut k = 0;
                for d in 0..n {
                    if d == axis {
                        x.push(side);
                    } else {
                        x.push(bx.lower()[d] + u[k] * (bx.upper()[d] - bx.lower()[d]));
                        k += 1;
                    }
                }
                let v = v_unchecked(pieces, &x);
                if v < best.k {
                    best.k = v;
                    best.witness = x;
                }
            }
        }
    }
    best
}

/// `{x : T x in box, V(T x) <= k}` in original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RoaEstimate {
    pieces: Vec<SymMatrix>,
    k: f64,
    transform: Transform,
    bx: BoxDomain,
    approximate: bool,
}

impl RoaEstimate {
    pub fn new(
        pieces: Vec<SymMatrix>,
        k: f64,
        transform: Transform,
        bx: BoxDomain,
        approximate: bool,
    ) -> Result<Self, LevelError> {
        check_pieces(&pieces, bx.dim())?;
        if transform.dim() != bx.dim() {
            return Err(LevelError::DimensionMismatch { expected: bx.dim(), got: transform.dim() });
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(LevelError::NonPositiveLevel(k));
        }
        Ok(Self { pieces, k, transform, bx, approximate })
    }

    pub fn pieces(&self) -> &[SymMatrix] {
        &self.pieces
    }

    pub fn level(&self) -> f64 {
        self.k
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    /// Modeling box in transformed coordinates.
    pub fn domain(&self) -> &BoxDomain {
        &self.bx
    }

    pub fn is_approximate(&self) -> bool {
        self.approximate
    }

    /// `V` evaluated in transformed coordinates at `T x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        v_unchecked(&self.pieces, &self.transform.apply(x))
    }

    /// Same estimate with pieces and level scaled by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            pieces: self.pieces.iter().map(|p| p.scaled(c)).collect(),
            k: self.k * c,
            transform: self.transform.clone(),
            bx: self.bx.clone(),
            approximate: self.approximate,
        }
    }

    /// Membership in transformed coordinates.
    pub fn contains_transformed(&self, xb: &[f64]) -> bool {
        self.bx.contains(xb) && v_unchecked(&self.pieces, xb) <= self.k
    }

    /// Points of `{V(T x) = k}` along `samples` rays from the origin, ordered
    /// by angle, found by bisection on the ray parameter.
    pub fn boundary_polyline(&self, samples: usize) -> Result<Vec<Vec<f64>>, LevelError> {
        if self.bx.dim() != 2 {
            return Err(LevelError::UnsupportedDimension(self.bx.dim()));
        }
        Ok((0..samples)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / samples as f64;
                let u = [theta.cos(), theta.sin()];
                let at = |s: f64| self.value(&[s * u[0], s * u[1]]);
                let mut hi = 1.0;
                while at(hi) < self.k && hi < 1e12 {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                while hi - lo > RAY_TOL {
                    let mid = 0.5 * (lo + hi);
                    if at(mid) <= self.k {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                vec![lo * u[0], lo * u[1]]
            })
            .collect())
    }
}

impl Region for RoaEstimate {
    fn dim(&self) -> usize {
        self.bx.dim()
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.contains_transformed(&self.transform.apply(x))
    }

    fn bounding_box(&self) -> BoxDomain {
        self.bx.map_box(&self.transform.inverted()).expect("dimensions checked at construction").bounding_box()
    }
}

/// Free-function form of [`Region::contains`].
pub fn contains(roa: &RoaEstimate, x: &[f64]) -> bool {
    roa.contains(x)
}

/// Free-function form of [`RoaEstimate::boundary_polyline`].
pub fn boundary_polyline(roa: &RoaEstimate, samples: usize) -> Result<Vec<Vec<f64>>, LevelError> {
    roa.boundary_polyline(samples)
}
