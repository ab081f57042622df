//! Polynomial vector fields in canonical monomial form, box domains and
//! linear changes of coordinates.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coefficients with magnitude at or below this are dropped when merging.
pub const MERGE_TOL: f64 = 1e-12;

/// Highest total degree `compose_linear` will expand.
pub const MAX_COMPOSE_DEGREE: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("component {component} has a constant term {value}; the origin must be an equilibrium")]
    NonZeroAtOrigin { component: usize, value: f64 },
    #[error("transform is singular (|det| = {det:e})")]
    SingularTransform { det: f64 },
    #[error("transform is not square ({rows}x{cols})")]
    NonSquareTransform { rows: usize, cols: usize },
    #[error("degree {degree} exceeds the expansion cap of {cap}")]
    DegreeCap { degree: u32, cap: u32 },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// A single term `coeff * prod_i x_i^powers[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

impl Monomial {
    pub fn new(coeff: f64, powers: Vec<u32>) -> Self {
        Self { coeff, powers }
    }

    pub fn degree(&self) -> u32 {
        self.powers.iter().sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.powers
            .iter()
            .zip(x)
            .fold(self.coeff, |acc, (&p, &xi)| acc * xi.powi(p as i32))
    }
}

/// Graded lexicographic order on exponent vectors.
fn grlex(a: &[u32], b: &[u32]) -> Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    da.cmp(&db).then_with(|| b.cmp(a))
}

/// A polynomial in `dim` variables, kept in canonical merged form: terms
/// sorted in graded lexicographic order, no repeated exponent vectors and no
/// near-zero coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    dim: usize,
    terms: Vec<Monomial>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::from_terms(dim, vec![Monomial::new(c, vec![0; dim])]).expect("constant has right arity")
    }

    /// The coordinate polynomial `x_i`.
    pub fn var(dim: usize, i: usize) -> Self {
        let mut powers = vec![0; dim];
        powers[i] = 1;
        Self { dim, terms: vec![Monomial::new(1.0, powers)] }
    }

    pub fn from_terms(dim: usize, terms: Vec<Monomial>) -> Result<Self, PolyError> {
        for t in &terms {
            if t.powers.len() != dim {
                return Err(PolyError::DimensionMismatch { expected: dim, got: t.powers.len() });
            }
            if !t.coeff.is_finite() {
                return Err(PolyError::NonFinite("monomial coefficient"));
            }
        }
        let mut p = Self { dim, terms };
        p.canonicalize();
        Ok(p)
    }

    fn canonicalize(&mut self) {
        self.terms.sort_by(|a, b| grlex(&a.powers, &b.powers));
        let mut merged: Vec<Monomial> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.powers == t.powers => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff.abs() > MERGE_TOL);
        self.terms = merged;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Coefficient of the constant term.
    pub fn constant_term(&self) -> f64 {
        self.terms
            .iter()
            .find(|t| t.powers.iter().all(|&p| p == 0))
            .map_or(0.0, |t| t.coeff)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        let mut p = Poly { dim: self.dim, terms };
        p.canonicalize();
        p
    }

    pub fn scale(&self, c: f64) -> Poly {
        let mut p = Poly {
            dim: self.dim,
            terms: self.terms.iter().map(|t| Monomial::new(t.coeff * c, t.powers.clone())).collect(),
        };
        p.canonicalize();
        p
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let powers = a.powers.iter().zip(&b.powers).map(|(p, q)| p + q).collect();
                terms.push(Monomial::new(a.coeff * b.coeff, powers));
            }
        }
        let mut p = Poly { dim: self.dim, terms };
        p.canonicalize();
        p
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut acc = Poly::constant(self.dim, 1.0);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    /// Substitutes `x_i -> subs[i]` for every variable.
    pub fn substitute(&self, subs: &[Poly]) -> Poly {
        let out_dim = subs.first().map_or(self.dim, Poly::dim);
        let mut acc = Poly::zero(out_dim);
        for t in &self.terms {
            let mut term = Poly::constant(out_dim, t.coeff);
            for (i, &p) in t.powers.iter().enumerate() {
                if p > 0 {
                    term = term.mul(&subs[i].pow(p));
                }
            }
            acc = acc.add(&term);
        }
        acc
    }

    /// True when the polynomial is a single monomial term.
    pub fn as_monomial(&self) -> Option<&Monomial> {
        match self.terms.as_slice() {
            [m] => Some(m),
            _ => None,
        }
    }
}

/// A polynomial vector field `f: R^n -> R^n` with `f(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyMap {
    dim: usize,
    components: Vec<Poly>,
}

impl PolyMap {
    pub fn new(components: Vec<Poly>) -> Result<Self, PolyError> {
        let dim = components.len();
        for (i, c) in components.iter().enumerate() {
            if c.dim() != dim {
                return Err(PolyError::DimensionMismatch { expected: dim, got: c.dim() });
            }
            let c0 = c.constant_term();
            if c0 != 0.0 {
                return Err(PolyError::NonZeroAtOrigin { component: i, value: c0 });
            }
        }
        Ok(Self { dim, components })
    }

    /// Builds a field from per-component monomial lists.
    pub fn from_monomials(dim: usize, equations: Vec<Vec<Monomial>>) -> Result<Self, PolyError> {
        if equations.len() != dim {
            return Err(PolyError::DimensionMismatch { expected: dim, got: equations.len() });
        }
        let components =
            equations.into_iter().map(|terms| Poly::from_terms(dim, terms)).collect::<Result<Vec<_>, _>>()?;
        Self::new(components)
    }

    /// Linear field `x -> A x`.
    pub fn linear(a: &DMatrix<f64>) -> Result<Self, PolyError> {
        if a.nrows() != a.ncols() {
            return Err(PolyError::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
        }
        let n = a.nrows();
        let components = (0..n)
            .map(|i| (0..n).fold(Poly::zero(n), |acc, j| acc.add(&Poly::var(n, j).scale(a[(i, j)]))))
            .collect();
        Self::new(components)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Poly] {
        &self.components
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(Poly::degree).max().unwrap_or(0)
    }

    /// Evaluates `f(x)`.
    pub fn eval_field(&self, x: &[f64]) -> Result<Vec<f64>, PolyError> {
        if x.len() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PolyError::NonFinite("evaluation point"));
        }
        Ok(self.eval_unchecked(x))
    }

    /// `eval_field` without validation, for inner loops.
    pub fn eval_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
        }
    }

    /// Field in coordinates `xb = T x`: returns `fb` with `fb(T x) = T f(x)`.
    pub fn compose_linear(&self, t: &Transform) -> Result<PolyMap, PolyError> {
        if t.dim() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, got: t.dim() });
        }
        let degree = self.degree();
        if degree > MAX_COMPOSE_DEGREE {
            return Err(PolyError::DegreeCap { degree, cap: MAX_COMPOSE_DEGREE });
        }
        let n = self.dim;
        // x_i = sum_j Tinv[i, j] xb_j
        let subs: Vec<Poly> = (0..n)
            .map(|i| (0..n).fold(Poly::zero(n), |acc, j| acc.add(&Poly::var(n, j).scale(t.inverse()[(i, j)]))))
            .collect();
        let substituted: Vec<Poly> = self.components.iter().map(|c| c.substitute(&subs)).collect();
        let components = (0..n)
            .map(|i| {
                substituted
                    .iter()
                    .enumerate()
                    .fold(Poly::zero(n), |acc, (k, c)| acc.add(&c.scale(t.matrix()[(i, k)])))
            })
            .collect();
        PolyMap::new(components)
    }
}

/// Axis-aligned box `[lower, upper]` strictly containing the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, PolyError> {
        let b = Self::unchecked(lower, upper)?;
        if b.lower.iter().zip(&b.upper).any(|(&l, &u)| !(l < 0.0 && 0.0 < u)) {
            return Err(PolyError::InvalidBox("origin must lie strictly inside the box".into()));
        }
        Ok(b)
    }

    /// A box that need not contain the origin (bounding boxes, plot frames).
    pub fn unchecked(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, PolyError> {
        if lower.len() != upper.len() {
            return Err(PolyError::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.is_empty() {
            return Err(PolyError::InvalidBox("zero-dimensional box".into()));
        }
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(PolyError::NonFinite("box bounds"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l >= u) {
            return Err(PolyError::InvalidBox("lower must be < upper componentwise".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn symmetric(half_widths: &[f64]) -> Result<Self, PolyError> {
        Self::new(half_widths.iter().map(|h| -h).collect(), half_widths.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    /// All `2^n` corners, first coordinate varying slowest.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| if mask >> (n - 1 - i) & 1 == 1 { self.upper[i] } else { self.lower[i] })
                    .collect()
            })
            .collect()
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BoxDomain) -> BoxDomain {
        BoxDomain {
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a.min(*b)).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    /// Point at unit-cube coordinates `u`.
    pub fn lerp(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.lower.iter().zip(&self.upper)).map(|(t, (l, h))| l + t * (h - l)).collect()
    }

    /// Image `{T x : x in box}` as a vertex-listed polytope.
    pub fn map_box(&self, t: &Transform) -> Result<MappedBox, PolyError> {
        if t.dim() != self.dim() {
            return Err(PolyError::DimensionMismatch { expected: self.dim(), got: t.dim() });
        }
        let vertices = self.corners().iter().map(|c| t.apply(c)).collect();
        Ok(MappedBox { vertices })
    }
}

/// Image of a box under an invertible linear map.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedBox {
    pub vertices: Vec<Vec<f64>>,
}

impl MappedBox {
    /// Axis-aligned bounding box. This over-approximates the polytope unless
    /// the transform is a signed permutation-scaling.
    pub fn bounding_box(&self) -> BoxDomain {
        let n = self.vertices[0].len();
        let mut lower = vec![f64::INFINITY; n];
        let mut upper = vec![f64::NEG_INFINITY; n];
        for v in &self.vertices {
            for i in 0..n {
                lower[i] = lower[i].min(v[i]);
                upper[i] = upper[i].max(v[i]);
            }
        }
        BoxDomain { lower, upper }
    }
}

/// Invertible linear coordinate change `xb = T x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl Transform {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, PolyError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(PolyError::NonSquareTransform { rows: matrix.nrows(), cols: matrix.ncols() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(PolyError::NonFinite("transform"));
        }
        let det = matrix.determinant();
        if det.abs() <= 1e-9 {
            return Err(PolyError::SingularTransform { det });
        }
        let inverse = matrix.clone().try_inverse().ok_or(PolyError::SingularTransform { det })?;
        let n = matrix.nrows();
        let err = (&matrix * &inverse - DMatrix::identity(n, n)).amax();
        if err > 1e-12 {
            return Err(PolyError::SingularTransform { det });
        }
        Ok(Self { matrix, inverse })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, PolyError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(PolyError::NonSquareTransform { rows: n, cols: bad.len() });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self { matrix: DMatrix::identity(n, n), inverse: DMatrix::identity(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn inverted(&self) -> Transform {
        Transform { matrix: self.inverse.clone(), inverse: self.matrix.clone() }
    }

    pub fn is_identity(&self) -> bool {
        self.matrix == DMatrix::identity(self.dim(), self.dim())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        (&self.inverse * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}
