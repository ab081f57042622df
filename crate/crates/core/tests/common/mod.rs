#![allow(dead_code)]

use nalgebra::DMatrix;
use roa_core::{LdiSystem, Monomial};

pub use roa_core::reference::*;

pub fn m(c: f64, p: &[u32]) -> Monomial {
    Monomial::new(c, p.to_vec())
}

pub fn mat(rows: &[[f64; 2]]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j])
}

pub fn ldi(vertices: Vec<DMatrix<f64>>) -> LdiSystem {
    LdiSystem::new(vertices).unwrap()
}
