//! Reference planar system and the data used to certify it.
//!
//! The field is
//!
//! ```text
//! x1' = -x1^2 - 2 x1 - 2 x2
//! x2' =  x2^3 - x2
//! ```
//!
//! modeled on `[-1,1] x [-0.5,0.5]` in its own coordinates and on
//! `[-0.55,0.55]^2` after the shear `xb = T x`, `T = [[1,2],[0,1]]`. The
//! `*_pieces` functions return the published four-decimal Lyapunov pieces,
//! and [`shear_vertices`] the published shear-coordinate vertex matrices.

use nalgebra::DMatrix;

use crate::lmikit::SymMatrix;
use crate::pipeline::{CaseSpec, VertexSource};
use crate::polyalg::{BoxDomain, Monomial, Poly, PolyMap, Transform};
use crate::tsmodel::{AffineExpr, Factorization};

fn m(c: f64, p: &[u32]) -> Monomial {
    Monomial::new(c, p.to_vec())
}

fn mat2(rows: [[f64; 2]; 2]) -> DMatrix<f64> {
    DMatrix::from_fn(2, 2, |i, j| rows[i][j])
}

fn sym(rows: [[f64; 2]; 2]) -> SymMatrix {
    SymMatrix::new(mat2(rows)).expect("symmetric literal")
}

fn var(i: usize, power: u32) -> Poly {
    let mut p = [0, 0];
    p[i] = power;
    Poly::from_terms(2, vec![m(1.0, &p)]).expect("valid monomial")
}

pub fn planar_field() -> PolyMap {
    PolyMap::from_monomials(
        2,
        vec![
            vec![m(-1.0, &[2, 0]), m(-2.0, &[1, 0]), m(-2.0, &[0, 1])],
            vec![m(1.0, &[0, 3]), m(-1.0, &[0, 1])],
        ],
    )
    .expect("valid field")
}

pub fn identity_box() -> BoxDomain {
    BoxDomain::symmetric(&[1.0, 0.5]).expect("valid box")
}

/// `z1 = x1`, `z2 = x2^2`.
pub fn identity_premises() -> Vec<Poly> {
    vec![var(0, 1), var(1, 2)]
}

/// `A(z) = [[-2 - z1, -2], [0, z2 - 1]]`.
pub fn identity_factorization() -> Factorization {
    Factorization::new(vec![
        vec![AffineExpr::new(-2.0, vec![-1.0, 0.0]), AffineExpr::new(-2.0, vec![0.0, 0.0])],
        vec![AffineExpr::new(0.0, vec![0.0, 0.0]), AffineExpr::new(-1.0, vec![0.0, 1.0])],
    ])
}

pub fn identity_vertices() -> Vec<DMatrix<f64>> {
    vec![
        mat2([[-1.0, -2.0], [0.0, -1.0]]),
        mat2([[-1.0, -2.0], [0.0, -0.75]]),
        mat2([[-3.0, -2.0], [0.0, -1.0]]),
        mat2([[-3.0, -2.0], [0.0, -0.75]]),
    ]
}

pub fn identity_pieces() -> Vec<SymMatrix> {
    vec![sym([[0.1071, -0.0829], [-0.0829, 0.2836]]), sym([[0.1045, -0.0852], [-0.0852, 0.2605]])]
}

pub fn identity_case() -> CaseSpec {
    CaseSpec {
        label: Some("identity".into()),
        transform: Transform::identity(2),
        bx: identity_box(),
        source: VertexSource::Factorization {
            premises: identity_premises(),
            factorization: identity_factorization(),
        },
        pinned: None,
    }
}

pub fn shear() -> Transform {
    Transform::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).expect("invertible")
}

pub fn shear_box() -> BoxDomain {
    BoxDomain::symmetric(&[0.55, 0.55]).expect("valid box")
}

/// Published shear-coordinate vertices. `a8_sign` sets the sign of the last
/// vertex's `(1,2)` entry, published as negative.
pub fn shear_vertices(a8_sign: f64) -> Vec<DMatrix<f64>> {
    vec![
        mat2([[-1.45, -0.3328], [0.0, -1.1664]]),
        mat2([[-1.45, 0.3328], [0.0, -0.8336]]),
        mat2([[-0.24, -1.5428], [0.0, -1.1664]]),
        mat2([[-0.24, 0.8773], [0.0, -0.8336]]),
        mat2([[-2.55, -0.3328], [0.0, -1.1664]]),
        mat2([[-2.55, 0.3328], [0.0, -0.8336]]),
        mat2([[-1.34, -1.5428], [0.0, -1.1664]]),
        mat2([[-1.34, a8_sign * 0.8773], [0.0, -0.8336]]),
    ]
}

pub fn shear_pieces() -> Vec<SymMatrix> {
    vec![sym([[5.0473, -1.1747], [-1.1747, 8.4518]]), sym([[5.0896, -1.0599], [-1.0599, 8.7648]])]
}

/// `z1 = xb1`, `z2 = xb2`, `z3 = xb2^2`.
pub fn shear_premises() -> Vec<Poly> {
    vec![var(0, 1), var(1, 1), var(1, 2)]
}

/// `A(z) = [[-2 - z1, 4 z1 - 4 z2 + 2 z3], [0, z3 - 1]]`, exact for the
/// sheared field.
pub fn shear_factorization() -> Factorization {
    Factorization::new(vec![
        vec![AffineExpr::new(-2.0, vec![-1.0, 0.0, 0.0]), AffineExpr::new(0.0, vec![4.0, -4.0, 2.0])],
        vec![AffineExpr::new(0.0, vec![0.0, 0.0, 0.0]), AffineExpr::new(-1.0, vec![0.0, 0.0, 1.0])],
    ])
}

/// Shear case solved from the factorization.
pub fn shear_case() -> CaseSpec {
    CaseSpec {
        label: Some("shear".into()),
        transform: shear(),
        bx: shear_box(),
        source: VertexSource::Factorization { premises: shear_premises(), factorization: shear_factorization() },
        pinned: None,
    }
}

/// Shear case with the published vertices and pieces.
pub fn shear_published_case() -> CaseSpec {
    CaseSpec {
        label: Some("shear, published".into()),
        source: VertexSource::Direct(shear_vertices(-1.0)),
        pinned: Some(shear_pieces()),
        ..shear_case()
    }
}

/// Identity case with the published pieces.
pub fn identity_published_case() -> CaseSpec {
    CaseSpec { label: Some("identity, published".into()), pinned: Some(identity_pieces()), ..identity_case() }
}
