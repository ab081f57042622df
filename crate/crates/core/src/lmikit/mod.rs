//! Lyapunov LMIs for linear differential inclusions.
//!
//! Quadratic certificates solve `P > 0, -(P A_i + A_i^T P) > 0` for all
//! vertices. Piecewise quadratic certificates `V(x) = max(x^T P1 x, x^T P2 x)`
//! solve, for a fixed coupling pair `(l1, l2)`,
//!
//! ```text
//! P1, P2 > 0
//! l1 (P2 - P1) - (P1 A_i + A_i^T P1) > 0   for all i
//! l2 (P1 - P2) - (P2 A_i + A_i^T P2) > 0   for all i
//! ```
//!
//! The products `l * P` make the joint problem bilinear, so the couplings are
//! scanned over a finite grid. Every certificate leaving this module has been
//! re-checked by [`verify_certificate`], which only computes eigenvalues.

mod barrier;

pub use barrier::{feasibility_core, AffineBlock, CoreOptions, CoreSolution, Equality, LmiProgram};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Margin a solver output must exceed after trace normalization.
pub const STRICT_MARGIN: f64 = 1e-7;
/// Tolerance every returned certificate is re-verified against.
pub const VERIFY_TOL: f64 = 1e-9;
/// Maximum symmetric asymmetry accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

pub const DEFAULT_LAMBDA_GRID: [f64; 10] = [0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 100.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("LDI has no vertices")]
    EmptySystem,
    #[error("lambda grid must be non-empty with finite non-negative values")]
    InvalidGrid,
    #[error("{0} pieces requested; only 1 or 2 are supported")]
    UnsupportedPieces(usize),
    #[error("starting point violates the equality constraints")]
    InfeasibleStart,
    #[error("no certificate found (best margin {margin:e}, gap bound {gap:e}, {iterations} iterations)")]
    NoCertificate { margin: f64, gap: f64, iterations: usize },
    #[error("lambda grid exhausted after {points_tried} points (best margin {best_margin:e})")]
    GridExhausted { points_tried: usize, best_margin: f64 },
    #[error("iteration cap reached after {iterations} iterations (margin {margin:e}, gap bound {gap:e})")]
    IterationCap { iterations: usize, margin: f64, gap: f64 },
    #[error("solver output failed independent verification (margin {0:e})")]
    VerificationFailed(f64),
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
}

/// A real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, LmiError> {
        if m.nrows() != m.ncols() {
            return Err(LmiError::NonSquare { rows: m.nrows(), cols: m.ncols() });
        }
        let asym = (&m - m.transpose()).amax();
        if asym.is_nan() || asym > SYMMETRY_TOL {
            return Err(LmiError::NotSymmetric(asym));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LmiError> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(LmiError::NonSquare { rows: n, cols: r.len() });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// Builds from stacked upper-triangular entries (row-major, `i <= j`).
    pub fn from_upper(n: usize, y: &[f64]) -> Self {
        let mut m = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m[(i, j)] = y[k];
                m[(j, i)] = y[k];
                k += 1;
            }
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.0[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `P A + A^T P`.
pub fn lyapunov_sum(p: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    p * a + a.transpose() * p
}

/// Basis of symmetric `n x n` matrices matching [`SymMatrix::from_upper`].
pub fn sym_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    out
}

/// Vertex set of a linear differential inclusion.
#[derive(Debug, Clone, PartialEq)]
pub struct LdiSystem {
    vertices: Vec<DMatrix<f64>>,
}

impl LdiSystem {
    pub fn new(vertices: Vec<DMatrix<f64>>) -> Result<Self, LmiError> {
        let first = vertices.first().ok_or(LmiError::EmptySystem)?;
        let n = first.nrows();
        for a in &vertices {
            if a.nrows() != a.ncols() {
                return Err(LmiError::NonSquare { rows: a.nrows(), cols: a.ncols() });
            }
            if a.nrows() != n {
                return Err(LmiError::DimensionMismatch { expected: n, got: a.nrows() });
            }
        }
        Ok(Self { vertices })
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].nrows()
    }

    pub fn vertices(&self) -> &[DMatrix<f64>] {
        &self.vertices
    }
}

/// Lyapunov certificate with one (quadratic) or two (piecewise) pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct PwqCertificate {
    pub pieces: Vec<SymMatrix>,
    /// Coupling scalar of each piece; unused for a single piece.
    pub lambdas: Vec<f64>,
    /// Smallest eigenvalue over all verified constraint matrices.
    pub margin: f64,
}

impl PwqCertificate {
    pub fn new(pieces: Vec<SymMatrix>, lambdas: Vec<f64>) -> Self {
        Self { pieces, lambdas, margin: f64::NAN }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            pieces: self.pieces.iter().map(|p| p.scaled(c)).collect(),
            lambdas: self.lambdas.clone(),
            margin: self.margin * c,
        }
    }
}

/// Eigenvalue margins of every constraint matrix of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    /// `lambda_min(P_j)`.
    pub piece_margins: Vec<f64>,
    /// `[piece][vertex]` minimum eigenvalue of the decrease condition.
    pub decrease_margins: Vec<Vec<f64>>,
    pub min_margin: f64,
    pub accepted: bool,
}

fn decrease_matrix(pieces: &[SymMatrix], j: usize, lambda: f64, a: &DMatrix<f64>) -> DMatrix<f64> {
    let pj = pieces[j].matrix();
    let mut m = -lyapunov_sum(pj, a);
    if pieces.len() == 2 {
        m += (pieces[1 - j].matrix() - pj) * lambda;
    }
    m
}

fn piece_decrease_margin(pieces: &[SymMatrix], j: usize, lambda: f64, sys: &LdiSystem) -> f64 {
    sys.vertices.iter().map(|a| min_eigenvalue(&decrease_matrix(pieces, j, lambda, a))).fold(f64::INFINITY, f64::min)
}

fn check_shapes(pieces: &[SymMatrix], lambdas: &[f64], sys: &LdiSystem) -> Result<(), LmiError> {
    if !(1..=2).contains(&pieces.len()) {
        return Err(LmiError::UnsupportedPieces(pieces.len()));
    }
    if pieces.len() == 2 && lambdas.len() != 2 {
        return Err(LmiError::DimensionMismatch { expected: 2, got: lambdas.len() });
    }
    for p in pieces {
        if p.dim() != sys.dim() {
            return Err(LmiError::DimensionMismatch { expected: sys.dim(), got: p.dim() });
        }
    }
    Ok(())
}

/// Independent eigenvalue check of every constraint; accepts iff the smallest
/// eigenvalue is at least `tol`.
pub fn verify_certificate(cert: &PwqCertificate, sys: &LdiSystem, tol: f64) -> Result<MarginReport, LmiError> {
    check_shapes(&cert.pieces, &cert.lambdas, sys)?;
    let piece_margins: Vec<f64> = cert.pieces.iter().map(SymMatrix::min_eigenvalue).collect();
    let decrease_margins: Vec<Vec<f64>> = (0..cert.pieces.len())
        .map(|j| {
            let lambda = cert.lambdas.get(j).copied().unwrap_or(0.0);
            sys.vertices.iter().map(|a| min_eigenvalue(&decrease_matrix(&cert.pieces, j, lambda, a))).collect()
        })
        .collect();
    let min_margin =
        piece_margins.iter().chain(decrease_margins.iter().flatten()).copied().fold(f64::INFINITY, f64::min);
    Ok(MarginReport { piece_margins, decrease_margins, min_margin, accepted: min_margin >= tol })
}

/// Compiles the fixed-coupling LMI for `pieces` Lyapunov matrices into the
/// generic margin program. Decision vector: stacked upper triangles of each
/// `P_j`; normalization `sum_j trace(P_j) = pieces * n`.
pub fn compile_program(sys: &LdiSystem, lambdas: &[f64]) -> LmiProgram {
    let n = sys.dim();
    let pieces = lambdas.len().max(1);
    let per = n * (n + 1) / 2;
    let num_vars = pieces * per;
    let basis = sym_basis(n);
    let zero = DMatrix::<f64>::zeros(n, n);

    let coeffs_for = |f: &dyn Fn(usize, &DMatrix<f64>) -> DMatrix<f64>| -> Vec<DMatrix<f64>> {
        (0..num_vars).map(|k| f(k / per, &basis[k % per])).collect()
    };

    let mut blocks = Vec::new();
    for j in 0..pieces {
        blocks.push(AffineBlock {
            constant: zero.clone(),
            coeffs: coeffs_for(&|piece, e| if piece == j { e.clone() } else { zero.clone() }),
        });
    }
    for j in 0..pieces {
        let lambda = lambdas.get(j).copied().unwrap_or(0.0);
        for a in &sys.vertices {
            blocks.push(AffineBlock {
                constant: zero.clone(),
                coeffs: coeffs_for(&|piece, e| {
                    if piece == j {
                        let mut m = -lyapunov_sum(e, a);
                        if pieces == 2 {
                            m -= e * lambda;
                        }
                        m
                    } else if pieces == 2 {
                        e * lambda
                    } else {
                        zero.clone()
                    }
                }),
            });
        }
    }
    let mut trace = vec![0.0; num_vars];
    for (k, t) in trace.iter_mut().enumerate() {
        let e = &basis[k % per];
        *t = e.trace();
    }
    LmiProgram { num_vars, blocks, equalities: vec![Equality { coeffs: trace, rhs: (pieces * n) as f64 }] }
}

fn identity_start(n: usize, pieces: usize) -> Vec<f64> {
    let eye: Vec<f64> = (0..n).flat_map(|i| (i..n).map(move |j| if i == j { 1.0 } else { 0.0 })).collect();
    eye.iter().copied().cycle().take(eye.len() * pieces).collect()
}

/// Solves and verifies the fixed-coupling program.
pub fn solve_fixed(sys: &LdiSystem, lambdas: &[f64], opts: &CoreOptions) -> Result<PwqCertificate, LmiError> {
    let n = sys.dim();
    let pieces = lambdas.len().max(1);
    if pieces > 2 {
        return Err(LmiError::UnsupportedPieces(pieces));
    }
    let program = compile_program(sys, lambdas);
    let sol = feasibility_core(&program, &identity_start(n, pieces), opts)?;
    let per = n * (n + 1) / 2;
    let mats: Vec<SymMatrix> = (0..pieces).map(|j| SymMatrix::from_upper(n, &sol.y[j * per..(j + 1) * per])).collect();
    let mut cert = PwqCertificate::new(mats, if pieces == 2 { lambdas.to_vec() } else { Vec::new() });
    let report = verify_certificate(&cert, sys, VERIFY_TOL)?;
    if !report.accepted {
        return Err(LmiError::VerificationFailed(report.min_margin));
    }
    cert.margin = report.min_margin;
    Ok(cert)
}

/// Common quadratic Lyapunov function for every vertex.
pub fn solve_quadratic_ldi(sys: &LdiSystem) -> Result<PwqCertificate, LmiError> {
    solve_fixed(sys, &[], &CoreOptions::default())
}

/// Quadratic Lyapunov function for `xdot = A x`.
pub fn solve_quadratic_lti(a: &DMatrix<f64>) -> Result<PwqCertificate, LmiError> {
    if a.nrows() != a.ncols() {
        return Err(LmiError::NonSquare { rows: a.nrows(), cols: a.ncols() });
    }
    solve_quadratic_ldi(&LdiSystem::new(vec![a.clone()])?)
}

/// First verified certificate in grid order.
#[derive(Debug, Clone)]
pub struct PwqSolution {
    pub certificate: PwqCertificate,
    /// Indices of the winning `(lambda1, lambda2)` in the grid.
    pub grid_index: (usize, usize),
    /// Grid points up to and including the winner.
    pub points_tried: usize,
}

fn validate_grid(grid: &[f64]) -> Result<(), LmiError> {
    if grid.is_empty() || grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(LmiError::InvalidGrid);
    }
    Ok(())
}

/// Two-piece certificate over `grid x grid`, ascending `lambda1` then `lambda2`.
pub fn solve_pwq(sys: &LdiSystem, grid: &[f64]) -> Result<PwqSolution, LmiError> {
    validate_grid(grid)?;
    let opts = CoreOptions::default();
    let points: Vec<(usize, usize)> = (0..grid.len()).flat_map(|i| (0..grid.len()).map(move |j| (i, j))).collect();
    let outcomes: Vec<Result<PwqCertificate, LmiError>> =
        points.par_iter().map(|&(i, j)| solve_fixed(sys, &[grid[i], grid[j]], &opts)).collect();
    let mut best_margin = f64::NEG_INFINITY;
    for (idx, (point, outcome)) in points.iter().zip(outcomes).enumerate() {
        match outcome {
            Ok(certificate) => {
                return Ok(PwqSolution { certificate, grid_index: *point, points_tried: idx + 1 });
            }
            Err(LmiError::NoCertificate { margin, .. }) | Err(LmiError::IterationCap { margin, .. }) => {
                best_margin = best_margin.max(margin);
            }
            Err(LmiError::VerificationFailed(margin)) => best_margin = best_margin.max(margin),
            Err(LmiError::Numerical(_)) => {}
            Err(other) => return Err(other),
        }
    }
    Err(LmiError::GridExhausted { points_tried: points.len(), best_margin })
}

/// Best coupling for fixed pieces: for each piece the decrease margin is
/// concave in its own lambda, so a grid scan brackets the maximum and a
/// golden-section search refines it.
pub fn fit_lambdas(pieces: &[SymMatrix], sys: &LdiSystem, grid: &[f64]) -> Result<PwqCertificate, LmiError> {
    validate_grid(grid)?;
    check_shapes(pieces, &[0.0; 2][..pieces.len().min(2)], sys)?;
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let lambdas = if pieces.len() == 1 {
        Vec::new()
    } else {
        (0..2)
            .map(|j| {
                let score = |l: f64| piece_decrease_margin(pieces, j, l, sys);
                let (best, _) = sorted
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| (i, score(l)))
                    .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
                let lo = sorted[best.saturating_sub(1)];
                let hi = sorted[(best + 1).min(sorted.len() - 1)];
                let refined = golden_max(&score, lo, hi, 100);
                if score(refined) >= score(sorted[best]) { refined } else { sorted[best] }
            })
            .collect()
    };
    let mut cert = PwqCertificate::new(pieces.to_vec(), lambdas);
    cert.margin = verify_certificate(&cert, sys, VERIFY_TOL)?.min_margin;
    Ok(cert)
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}
