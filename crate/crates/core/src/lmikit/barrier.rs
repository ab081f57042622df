//! Margin maximization over affine symmetric-matrix constraints.
//!
//! Solves `max t  s.t.  F_b(y) - t I >= 0 for every block b,  E y = e` with a
//! path-following log-det barrier method: for increasing `tau`, Newton's
//! method with equality constraints minimizes
//! `-tau t - sum_b log det(F_b(y) - t I)`. At a central point the optimal
//! margin is within `nu / tau` of the current `t`, where `nu` is the total
//! block dimension.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::LmiError;

/// `F(y) = constant + sum_k y_k coeffs[k]`, all symmetric.
#[derive(Debug, Clone)]
pub struct AffineBlock {
    pub constant: DMatrix<f64>,
    pub coeffs: Vec<DMatrix<f64>>,
}

impl AffineBlock {
    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        self.coeffs.iter().zip(y).fold(self.constant.clone(), |acc, (d, yk)| acc + d * *yk)
    }

    fn size(&self) -> usize {
        self.constant.nrows()
    }
}

/// Linear equality `coeffs . y = rhs`.
#[derive(Debug, Clone)]
pub struct Equality {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LmiProgram {
    pub num_vars: usize,
    pub blocks: Vec<AffineBlock>,
    pub equalities: Vec<Equality>,
}

#[derive(Debug, Clone, Copy)]
pub struct CoreOptions {
    /// Newton step budget across all barrier stages.
    pub max_iterations: usize,
    /// Optimal margin must exceed this for a certificate.
    pub accept_margin: f64,
    /// Absolute duality-gap bound at which the path is abandoned.
    pub gap_tol: f64,
    /// Stop once the gap is below this fraction of a positive margin.
    pub rel_gap: f64,
}

impl Default for CoreOptions {
    fn default() -> Self {
        Self { max_iterations: 5000, accept_margin: 1e-7, gap_tol: 1e-9, rel_gap: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct CoreSolution {
    pub y: Vec<f64>,
    pub margin: f64,
    /// Upper bound on `optimal margin - margin` at termination.
    pub gap: f64,
    pub iterations: usize,
}

struct Stage<'a> {
    program: &'a LmiProgram,
    tau: f64,
}

impl Stage<'_> {
    /// Cholesky factors of every `F_b(y) - t I`, or `None` outside the domain.
    fn factors(&self, v: &[f64]) -> Option<Vec<Cholesky<f64, Dyn>>> {
        let (y, t) = v.split_at(self.program.num_vars);
        self.program
            .blocks
            .iter()
            .map(|b| {
                let mut g = b.eval(y);
                for i in 0..g.nrows() {
                    g[(i, i)] -= t[0];
                }
                if g.iter().any(|x| !x.is_finite()) {
                    return None;
                }
                Cholesky::new(g)
            })
            .collect()
    }

    fn objective(&self, v: &[f64]) -> Option<f64> {
        let chols = self.factors(v)?;
        let t = v[self.program.num_vars];
        let logdet: f64 = chols.iter().map(|c| 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()).sum();
        Some(-self.tau * t - logdet)
    }

    fn gradient_hessian(&self, chols: &[Cholesky<f64, Dyn>]) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.program.num_vars;
        let dim = m + 1;
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        g[m] = -self.tau;
        for (block, chol) in self.program.blocks.iter().zip(chols) {
            let ginv = chol.inverse();
            // G^-1 D_k for each variable, with D_t = -I
            let mut prods: Vec<DMatrix<f64>> = block.coeffs.iter().map(|d| &ginv * d).collect();
            prods.push(-&ginv);
            for k in 0..dim {
                g[k] -= prods[k].trace();
                for l in 0..=k {
                    let v = prods[k].component_mul(&prods[l].transpose()).sum();
                    h[(k, l)] += v;
                    if k != l {
                        h[(l, k)] += v;
                    }
                }
            }
        }
        (g, h)
    }
}

fn kkt_step(g: &DVector<f64>, h: &DMatrix<f64>, program: &LmiProgram) -> Option<DVector<f64>> {
    let dim = g.len();
    let p = program.equalities.len();
    let mut kkt = DMatrix::zeros(dim + p, dim + p);
    kkt.view_mut((0, 0), (dim, dim)).copy_from(h);
    for (r, eq) in program.equalities.iter().enumerate() {
        for (k, c) in eq.coeffs.iter().enumerate() {
            kkt[(dim + r, k)] = *c;
            kkt[(k, dim + r)] = *c;
        }
    }
    let mut rhs = DVector::zeros(dim + p);
    rhs.rows_mut(0, dim).copy_from(&(-g));
    let sol = kkt.lu().solve(&rhs)?;
    let step = sol.rows(0, dim).into_owned();
    step.iter().all(|x| x.is_finite()).then_some(step)
}

/// Maximizes the common margin `t`. `start` must satisfy the equalities; any
/// `t` is accepted since the initial margin is chosen strictly feasible.
pub fn feasibility_core(program: &LmiProgram, start: &[f64], opts: &CoreOptions) -> Result<CoreSolution, LmiError> {
    let m = program.num_vars;
    if start.len() != m {
        return Err(LmiError::DimensionMismatch { expected: m, got: start.len() });
    }
    for b in &program.blocks {
        if b.coeffs.len() != m {
            return Err(LmiError::DimensionMismatch { expected: m, got: b.coeffs.len() });
        }
    }
    for eq in &program.equalities {
        let lhs: f64 = eq.coeffs.iter().zip(start).map(|(a, b)| a * b).sum();
        if (lhs - eq.rhs).abs() > 1e-9 * (1.0 + eq.rhs.abs()) {
            return Err(LmiError::InfeasibleStart);
        }
    }
    let nu: f64 = program.blocks.iter().map(AffineBlock::size).sum::<usize>() as f64;
    let min_eig = program
        .blocks
        .iter()
        .map(|b| super::min_eigenvalue(&b.eval(start)))
        .fold(f64::INFINITY, f64::min);

    let mut v: Vec<f64> = start.to_vec();
    v.push(min_eig - 1.0);
    let mut stage = Stage { program, tau: 1.0 };
    let mut iterations = 0usize;
    const MU: f64 = 10.0;
    // at large tau the objective loses resolution and Newton can stall
    const MAX_STAGE_STEPS: usize = 100;

    loop {
        // centering
        for _ in 0..MAX_STAGE_STEPS {
            let chols = stage.factors(&v).ok_or(LmiError::Numerical("iterate left the barrier domain"))?;
            let (g, h) = stage.gradient_hessian(&chols);
            let step = kkt_step(&g, &h, program).ok_or(LmiError::Numerical("singular Newton system"))?;
            let slope = g.dot(&step);
            if -slope / 2.0 <= 1e-10 {
                break;
            }
            iterations += 1;
            if iterations > opts.max_iterations {
                return Err(LmiError::IterationCap { iterations, margin: v[m], gap: nu / stage.tau });
            }
            let f0 = stage.objective(&v).expect("current iterate is interior");
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, d)| a + s * d).collect();
                if let Some(f1) = stage.objective(&trial) {
                    if f1 <= f0 + 0.25 * s * slope {
                        v = trial;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                // no progress possible at this tau; treat as centered
                break;
            }
        }

        let t = v[m];
        let gap = nu / stage.tau;
        if t + gap < opts.accept_margin {
            return Err(LmiError::NoCertificate { margin: t, gap, iterations });
        }
        if gap <= opts.gap_tol || (t > opts.accept_margin && gap <= opts.rel_gap * t) {
            if t > opts.accept_margin {
                return Ok(CoreSolution { y: v[..m].to_vec(), margin: t, gap, iterations });
            }
            return Err(LmiError::NoCertificate { margin: t, gap, iterations });
        }
        stage.tau *= MU;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmikit::sym_basis;

    #[test]
    fn trace_normalized_identity() {
        // P >= t I with trace P = 2: optimum t = 1 at P = I.
        let basis = sym_basis(2);
        let program = LmiProgram {
            num_vars: 3,
            blocks: vec![AffineBlock { constant: DMatrix::zeros(2, 2), coeffs: basis }],
            equalities: vec![Equality { coeffs: vec![1.0, 0.0, 1.0], rhs: 2.0 }],
        };
        let opts = CoreOptions { rel_gap: 1e-9, ..Default::default() };
        let sol = feasibility_core(&program, &[1.5, 0.3, 0.5], &opts).unwrap();
        assert!((sol.margin - 1.0).abs() < 1e-6, "margin {}", sol.margin);
        assert!((sol.y[0] - 1.0).abs() < 1e-5 && sol.y[1].abs() < 1e-5 && (sol.y[2] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rejects_start_violating_equality() {
        let program = LmiProgram {
            num_vars: 1,
            blocks: vec![AffineBlock { constant: DMatrix::zeros(1, 1), coeffs: vec![DMatrix::identity(1, 1)] }],
            equalities: vec![Equality { coeffs: vec![1.0], rhs: 1.0 }],
        };
        assert!(matches!(feasibility_core(&program, &[2.0], &CoreOptions::default()), Err(LmiError::InfeasibleStart)));
    }

    #[test]
    fn iteration_cap_reported() {
        let basis = sym_basis(2);
        let program = LmiProgram {
            num_vars: 3,
            blocks: vec![AffineBlock { constant: DMatrix::zeros(2, 2), coeffs: basis }],
            equalities: vec![Equality { coeffs: vec![1.0, 0.0, 1.0], rhs: 2.0 }],
        };
        let opts = CoreOptions { max_iterations: 2, rel_gap: 1e-12, ..Default::default() };
        assert!(matches!(feasibility_core(&program, &[1.0, 0.0, 1.0], &opts), Err(LmiError::IterationCap { .. })));
    }
}
