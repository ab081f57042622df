//! Sector-nonlinearity Takagi-Sugeno models.
//!
//! The user supplies premise polynomials `z_k(x)` and a factorization
//! `f(x) = A(z(x)) x` whose entries are affine in `z`. Bounding every premise
//! over the modeling box gives a hyper-rectangle in premise space; evaluating
//! `A` at its `2^p` corners yields the vertex matrices, and the membership
//! weights are products of one-dimensional interpolation weights.
//!
//! Corner `c` assigns premise `k` its upper bound when bit `p-1-k` of `c` is
//! set, so the first premise is the most significant bit and the last premise
//! varies fastest.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polyalg::{BoxDomain, Monomial, Poly, PolyError, PolyMap};
use crate::sampling::Halton;

/// Relative tolerance on `|A(z(x)) x - f(x)|` accepted by `build_ts`.
pub const FACTORIZATION_TOL: f64 = 1e-9;
/// Quasi-random samples used to check a factorization.
pub const FACTORIZATION_SAMPLES: usize = 1000;
/// Grid subdivisions per axis for interval bounds of general polynomials.
pub const INTERVAL_GRID: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("premise {index} is constant over the box (width {width:e})")]
    ConstantPremise { index: usize, width: f64 },
    #[error("factorization has {rows}x{cols} entries, expected {n}x{n}")]
    FactorizationShape { rows: usize, cols: usize, n: usize },
    #[error("factorization entry ({row},{col}) has {got} premise coefficients, expected {expected}")]
    FactorizationArity { row: usize, col: usize, expected: usize, got: usize },
    #[error("factorization residual {residual:e} exceeds tolerance at x = {point:?}")]
    FactorizationResidual { residual: f64, point: Vec<f64> },
    #[error("too many premises ({0}); at most 16 supported")]
    TooManyPremises(usize),
}

/// Lower/upper bounds of a premise over a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiseBounds {
    pub min: f64,
    pub max: f64,
    /// False when produced by interval arithmetic (may be conservative).
    pub tight: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PremiseVar {
    pub poly: Poly,
    pub bounds: PremiseBounds,
}

impl PremiseVar {
    pub fn width(&self) -> f64 {
        self.bounds.max - self.bounds.min
    }
}

/// Affine expression `constant + sum_k coeffs[k] z_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub constant: f64,
    pub coeffs: Vec<f64>,
}

impl AffineExpr {
    pub fn new(constant: f64, coeffs: Vec<f64>) -> Self {
        Self { constant, coeffs }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.coeffs.iter().zip(z).fold(self.constant, |acc, (c, zk)| acc + c * zk)
    }
}

/// Matrix `A(z)` with entries affine in the premise variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    entries: Vec<Vec<AffineExpr>>,
}

impl Factorization {
    pub fn new(entries: Vec<Vec<AffineExpr>>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[Vec<AffineExpr>] {
        &self.entries
    }

    fn validate(&self, n: usize, p: usize) -> Result<(), TsError> {
        let rows = self.entries.len();
        let bad_cols = self.entries.iter().map(Vec::len).find(|&c| c != n);
        if rows != n || bad_cols.is_some() {
            return Err(TsError::FactorizationShape { rows, cols: bad_cols.unwrap_or(n), n });
        }
        for (i, row) in self.entries.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if e.coeffs.len() != p {
                    return Err(TsError::FactorizationArity { row: i, col: j, expected: p, got: e.coeffs.len() });
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, z: &[f64]) -> DMatrix<f64> {
        let n = self.entries.len();
        DMatrix::from_fn(n, n, |i, j| self.entries[i][j].eval(z))
    }
}

/// Exact range of a monomial over a box: the product of independent per-axis
/// ranges of `x_i^p_i`.
fn monomial_range(m: &Monomial, lower: &[f64], upper: &[f64]) -> (f64, f64) {
    let mut lo = 1.0;
    let mut hi = 1.0;
    for ((&p, &l), &u) in m.powers.iter().zip(lower).zip(upper) {
        if p == 0 {
            continue;
        }
        let a = l.powi(p as i32);
        let b = u.powi(p as i32);
        let (mut fmin, mut fmax) = (a.min(b), a.max(b));
        if l < 0.0 && 0.0 < u {
            fmin = fmin.min(0.0);
            fmax = fmax.max(0.0);
        }
        let cands = [lo * fmin, lo * fmax, hi * fmin, hi * fmax];
        lo = cands.iter().copied().fold(f64::INFINITY, f64::min);
        hi = cands.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    let (a, b) = (m.coeff * lo, m.coeff * hi);
    (a.min(b), a.max(b))
}

/// Bounds of `z` over `bx`: exact for a single monomial, otherwise interval
/// arithmetic refined over a uniform grid and flagged as possibly non-tight.
pub fn bound_premise(z: &Poly, bx: &BoxDomain) -> Result<PremiseBounds, TsError> {
    bound_premise_indexed(0, z, bx)
}

fn bound_premise_indexed(index: usize, z: &Poly, bx: &BoxDomain) -> Result<PremiseBounds, TsError> {
    if z.dim() != bx.dim() {
        return Err(PolyError::DimensionMismatch { expected: bx.dim(), got: z.dim() }.into());
    }
    let bounds = if let Some(m) = z.as_monomial() {
        let (min, max) = monomial_range(m, bx.lower(), bx.upper());
        PremiseBounds { min, max, tight: true }
    } else {
        interval_bounds(z, bx)
    };
    let width = bounds.max - bounds.min;
    if width.is_nan() || width <= 1e-12 {
        return Err(TsError::ConstantPremise { index, width });
    }
    Ok(bounds)
}

fn interval_bounds(z: &Poly, bx: &BoxDomain) -> PremiseBounds {
    let n = bx.dim();
    let per_axis = if n <= 3 { INTERVAL_GRID } else { ((1e6f64).powf(1.0 / n as f64).floor() as usize).max(2) };
    let cells = per_axis.pow(n as u32);
    let step: Vec<f64> = (0..n).map(|i| (bx.upper()[i] - bx.lower()[i]) / per_axis as f64).collect();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for cell in 0..cells {
        let mut rest = cell;
        for i in 0..n {
            let k = rest % per_axis;
            rest /= per_axis;
            lo[i] = bx.lower()[i] + k as f64 * step[i];
            hi[i] = if k + 1 == per_axis { bx.upper()[i] } else { lo[i] + step[i] };
        }
        let (a, b) = z.terms().iter().fold((0.0, 0.0), |(a, b), m| {
            let (ma, mb) = monomial_range(m, &lo, &hi);
            (a + ma, b + mb)
        });
        min = min.min(a);
        max = max.max(b);
    }
    PremiseBounds { min, max, tight: false }
}

/// Membership weights at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub values: Vec<f64>,
    pub in_box: bool,
}

/// A Takagi-Sugeno model `xdot = sum_i w_i(x) A_i x` valid on `bx`.
#[derive(Debug, Clone)]
pub struct TsModel {
    field: PolyMap,
    premises: Vec<PremiseVar>,
    factorization: Factorization,
    vertices: Vec<DMatrix<f64>>,
    bx: BoxDomain,
}

impl TsModel {
    /// Builds the model, rejecting factorizations that do not reproduce `f`.
    pub fn build(
        field: &PolyMap,
        premise_polys: &[Poly],
        factorization: &Factorization,
        bx: &BoxDomain,
    ) -> Result<Self, TsError> {
        let n = field.dim();
        if bx.dim() != n {
            return Err(PolyError::DimensionMismatch { expected: n, got: bx.dim() }.into());
        }
        let p = premise_polys.len();
        if p > 16 {
            return Err(TsError::TooManyPremises(p));
        }
        factorization.validate(n, p)?;
        let premises = premise_polys
            .iter()
            .enumerate()
            .map(|(k, z)| bound_premise_indexed(k, z, bx).map(|bounds| PremiseVar { poly: z.clone(), bounds }))
            .collect::<Result<Vec<_>, _>>()?;

        let model = Self {
            field: field.clone(),
            vertices: corner_matrices(&premises, factorization),
            premises,
            factorization: factorization.clone(),
            bx: bx.clone(),
        };
        model.check_factorization()?;
        Ok(model)
    }

    fn check_factorization(&self) -> Result<(), TsError> {
        let mut worst = (0.0, vec![0.0; self.dim()]);
        let mut probe = |x: Vec<f64>| {
            let z = self.premise_values(&x);
            let a = self.factorization.eval(&z);
            let r = relative_residual(&(a * nalgebra::DVector::from_column_slice(&x)), &self.field, &x);
            if r > worst.0 || r.is_nan() {
                worst = (r, x);
            }
        };
        for c in self.bx.corners() {
            probe(c);
        }
        let mut h = Halton::new(self.dim());
        for _ in 0..FACTORIZATION_SAMPLES {
            probe(self.bx.lerp(&h.next_point()));
        }
        if worst.0.is_nan() || worst.0 > FACTORIZATION_TOL {
            return Err(TsError::FactorizationResidual { residual: worst.0, point: worst.1 });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn field(&self) -> &PolyMap {
        &self.field
    }

    pub fn premises(&self) -> &[PremiseVar] {
        &self.premises
    }

    pub fn vertices(&self) -> &[DMatrix<f64>] {
        &self.vertices
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.bx
    }

    pub fn premise_values(&self, x: &[f64]) -> Vec<f64> {
        self.premises.iter().map(|z| z.poly.eval(x)).collect()
    }

    /// Per-premise `(w_min, w_max)` pairs: `w_min = (z_max - z)/(z_max - z_min)`.
    pub fn premise_weights(&self, x: &[f64]) -> Vec<(f64, f64)> {
        self.premises
            .iter()
            .map(|zk| {
                let z = zk.poly.eval(x);
                let w_min = (zk.bounds.max - z) / zk.width();
                (w_min, 1.0 - w_min)
            })
            .collect()
    }

    /// Corner weights in vertex order. Outside the box they may leave `[0,1]`.
    pub fn weights(&self, x: &[f64]) -> Weights {
        let pairs = self.premise_weights(x);
        let p = pairs.len();
        let values = (0..1usize << p)
            .map(|c| {
                pairs
                    .iter()
                    .enumerate()
                    .map(|(k, &(w_min, w_max))| if c >> (p - 1 - k) & 1 == 1 { w_max } else { w_min })
                    .product()
            })
            .collect();
        Weights { values, in_box: self.bx.contains(x) }
    }

    /// `sum_i w_i(x) A_i x`.
    pub fn blended_field(&self, x: &[f64]) -> Vec<f64> {
        let w = self.weights(x).values;
        let xv = nalgebra::DVector::from_column_slice(x);
        let a = self.vertices.iter().zip(&w).fold(DMatrix::zeros(self.dim(), self.dim()), |acc, (ai, wi)| acc + ai * *wi);
        (a * xv).as_slice().to_vec()
    }

    /// Max over quasi-random in-box samples of `|sum w_i A_i x - f(x)| / (1 + |f(x)|)`.
    pub fn reconstruct_residual(&self, samples: usize) -> f64 {
        let mut h = Halton::new(self.dim());
        (0..samples)
            .map(|_| {
                let x = self.bx.lerp(&h.next_point());
                let blended = nalgebra::DVector::from_vec(self.blended_field(&x));
                relative_residual(&blended, &self.field, &x)
            })
            .fold(0.0, f64::max)
    }
}

fn corner_matrices(premises: &[PremiseVar], fact: &Factorization) -> Vec<DMatrix<f64>> {
    let p = premises.len();
    (0..1usize << p)
        .map(|c| {
            let z: Vec<f64> = premises
                .iter()
                .enumerate()
                .map(|(k, zk)| if c >> (p - 1 - k) & 1 == 1 { zk.bounds.max } else { zk.bounds.min })
                .collect();
            fact.eval(&z)
        })
        .collect()
}

fn relative_residual(approx: &nalgebra::DVector<f64>, field: &PolyMap, x: &[f64]) -> f64 {
    let fx = nalgebra::DVector::from_vec(field.eval_unchecked(x));
    (approx - &fx).norm() / (1.0 + fx.norm())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn m(c: f64, p: &[u32]) -> Monomial {
        Monomial::new(c, p.to_vec())
    }

    fn mono(dim: usize, c: f64, p: &[u32]) -> Poly {
        Poly::from_terms(dim, vec![m(c, p)]).unwrap()
    }

    pub(crate) fn reference_model() -> TsModel {
        let f = PolyMap::from_monomials(
            2,
            vec![
                vec![m(-1.0, &[2, 0]), m(-2.0, &[0, 1]), m(-2.0, &[1, 0])],
                vec![m(1.0, &[0, 3]), m(-1.0, &[0, 1])],
            ],
        )
        .unwrap();
        let premises = vec![mono(2, 1.0, &[1, 0]), mono(2, 1.0, &[0, 2])];
        let fact = Factorization::new(vec![
            vec![AffineExpr::new(-2.0, vec![-1.0, 0.0]), AffineExpr::new(-2.0, vec![0.0, 0.0])],
            vec![AffineExpr::new(0.0, vec![0.0, 0.0]), AffineExpr::new(-1.0, vec![0.0, 1.0])],
        ]);
        let bx = BoxDomain::symmetric(&[1.0, 0.5]).unwrap();
        TsModel::build(&f, &premises, &fact, &bx).unwrap()
    }

    #[test]
    fn premise_bounds_closed_form() {
        let b1 = BoxDomain::symmetric(&[1.0, 0.5]).unwrap();
        let z1 = bound_premise(&mono(2, 1.0, &[1, 0]), &b1).unwrap();
        assert_eq!((z1.min, z1.max, z1.tight), (-1.0, 1.0, true));
        let z2 = bound_premise(&mono(2, 1.0, &[0, 2]), &b1).unwrap();
        assert_eq!((z2.min, z2.max), (0.0, 0.25));
        let b2 = BoxDomain::symmetric(&[0.55, 0.55]).unwrap();
        let z3 = bound_premise(&mono(2, 1.0, &[1, 0]), &b2).unwrap();
        assert_eq!((z3.min, z3.max), (-0.55, 0.55));
    }

    #[test]
    fn negative_coefficient_and_mixed_monomial() {
        let bx = BoxDomain::new(vec![-1.0, -0.5], vec![2.0, 0.5]).unwrap();
        let b = bound_premise(&mono(2, -3.0, &[1, 2]), &bx).unwrap();
        // x1 * x2^2 ranges over [-0.25, 0.5]
        assert!((b.min + 1.5).abs() < 1e-15 && (b.max - 0.75).abs() < 1e-15);
    }

    #[test]
    fn general_polynomial_bounds_enclose_samples() {
        let bx = BoxDomain::symmetric(&[1.0, 1.0]).unwrap();
        let z = Poly::from_terms(2, vec![m(1.0, &[1, 0]), m(-1.0, &[0, 2]), m(0.5, &[1, 1])]).unwrap();
        let b = bound_premise(&z, &bx).unwrap();
        assert!(!b.tight);
        let mut h = Halton::new(2);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..20_000 {
            let v = z.eval(&bx.lerp(&h.next_point()));
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!(b.min <= lo && hi <= b.max);
        assert!(lo - b.min < 0.1 && b.max - hi < 0.1);
    }

    #[test]
    fn constant_premise_rejected() {
        let bx = BoxDomain::symmetric(&[1.0]).unwrap();
        assert!(matches!(bound_premise(&Poly::constant(1, 2.0), &bx), Err(TsError::ConstantPremise { .. })));
        assert!(matches!(bound_premise(&Poly::zero(1), &bx), Err(TsError::ConstantPremise { .. })));
    }

    #[test]
    fn reference_vertices_match_published() {
        let model = reference_model();
        let expected = [[-1.0, -2.0, 0.0, -1.0], [-1.0, -2.0, 0.0, -0.75], [-3.0, -2.0, 0.0, -1.0], [
            -3.0, -2.0, 0.0, -0.75,
        ]];
        assert_eq!(model.vertices().len(), 4);
        for (a, e) in model.vertices().iter().zip(expected) {
            let got = [a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]];
            assert_eq!(got, e);
        }
    }

    #[test]
    fn weights_at_origin() {
        let w = reference_model().weights(&[0.0, 0.0]);
        assert!(w.in_box);
        assert_eq!(w.values, vec![0.5, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn weights_at_corner_are_one_hot() {
        let model = reference_model();
        let w = model.weights(&[1.0, 0.5]).values;
        assert_eq!(w, vec![0.0, 0.0, 0.0, 1.0]);
        assert!(!model.weights(&[2.0, 0.0]).in_box);
    }

    #[test]
    fn linear_model_single_vertex() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.3, -2.0]);
        let f = PolyMap::linear(&a).unwrap();
        let fact = Factorization::new(
            (0..2).map(|i| (0..2).map(|j| AffineExpr::new(a[(i, j)], vec![])).collect()).collect(),
        );
        let model = TsModel::build(&f, &[], &fact, &BoxDomain::symmetric(&[1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(model.vertices(), &[a]);
        assert!(model.reconstruct_residual(1000) <= 1e-12);
    }

    #[test]
    fn residual_detects_corrupted_vertex() {
        let mut model = reference_model();
        assert!(model.reconstruct_residual(1000) <= 1e-9);
        model.vertices[0][(0, 0)] += 0.1;
        assert!(model.reconstruct_residual(1000) > 1e-3);
    }

    #[test]
    fn wrong_factorization_rejected_with_point() {
        let f = reference_model().field().clone();
        let premises = vec![mono(2, 1.0, &[1, 0]), mono(2, 1.0, &[0, 2])];
        let fact = Factorization::new(vec![
            vec![AffineExpr::new(-2.0, vec![1.0, 0.0]), AffineExpr::new(-2.0, vec![0.0, 0.0])],
            vec![AffineExpr::new(0.0, vec![0.0, 0.0]), AffineExpr::new(-1.0, vec![0.0, 1.0])],
        ]);
        let err = TsModel::build(&f, &premises, &fact, &BoxDomain::symmetric(&[1.0, 0.5]).unwrap()).unwrap_err();
        match err {
            TsError::FactorizationResidual { residual, point } => {
                assert!(residual > 1e-3);
                assert_eq!(point.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn factorization_shape_checked() {
        let f = reference_model().field().clone();
        let fact = Factorization::new(vec![vec![AffineExpr::new(0.0, vec![])]]);
        let err = TsModel::build(&f, &[], &fact, &BoxDomain::symmetric(&[1.0, 0.5]).unwrap()).unwrap_err();
        assert!(matches!(err, TsError::FactorizationShape { .. }));
    }
}
