//! Multi-transform region-of-attraction pipeline.
//!
//! Every case runs independently: transform the field, build the TS model (or
//! take a vertex set directly), certify a piecewise quadratic Lyapunov
//! function, and maximize its level inside the case's box. The result is the
//! union of the per-case estimates, each pulled back to original coordinates.
//! The union is a union of separately certified invariant sets; it is not
//! itself claimed to be invariant.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::levelset::{max_level, LevelResult, Region, RoaEstimate};
use crate::lmikit::{
    fit_lambdas, solve_pwq, verify_certificate, LdiSystem, MarginReport, PwqCertificate, SymMatrix,
    DEFAULT_LAMBDA_GRID, VERIFY_TOL,
};
use crate::polyalg::{BoxDomain, Poly, PolyMap, Transform};
use crate::tsmodel::{Factorization, PremiseBounds, TsModel};

/// Samples used to report the TS reconstruction residual of a case.
pub const RESIDUAL_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub lambda_grid: Vec<f64>,
    /// Minimum verified eigenvalue margin for a certificate to be used.
    pub margin_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(), margin_tol: VERIFY_TOL }
    }
}

/// Where a case's vertex matrices come from.
#[derive(Debug, Clone, PartialEq)]
pub enum VertexSource {
    /// Sector-nonlinearity model from premises and a factorization.
    Factorization { premises: Vec<Poly>, factorization: Factorization },
    /// Vertex matrices given directly.
    Direct(Vec<DMatrix<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSpec {
    pub label: Option<String>,
    pub transform: Transform,
    /// Modeling box in transformed coordinates.
    pub bx: BoxDomain,
    pub source: VertexSource,
    /// Lyapunov pieces to verify instead of solving for new ones.
    pub pinned: Option<Vec<SymMatrix>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub system: PolyMap,
    pub original_box: BoxDomain,
    pub cases: Vec<CaseSpec>,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Transform,
    Factorization,
    Lmi,
    Level,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Transform => "transform",
            Stage::Factorization => "factorization",
            Stage::Lmi => "lmi",
            Stage::Level => "level",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage} stage failed: {message}")]
pub struct CaseFailure {
    pub stage: Stage,
    pub message: String,
}

impl CaseFailure {
    fn new(stage: Stage, err: impl fmt::Display) -> Self {
        Self { stage, message: err.to_string() }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("pipeline has no cases")]
    NoCases,
    #[error("all {} cases failed", .0.len())]
    AllCasesFailed(Vec<CaseFailure>),
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub estimate: RoaEstimate,
    pub certificate: PwqCertificate,
    pub margins: MarginReport,
    pub vertices: Vec<DMatrix<f64>>,
    pub transformed_field: PolyMap,
    pub premise_bounds: Vec<PremiseBounds>,
    pub reconstruct_residual: Option<f64>,
    /// Winning `(lambda1, lambda2)` grid indices for solved certificates.
    pub grid_index: Option<(usize, usize)>,
    pub level: LevelResult,
    pub pinned: bool,
}

/// Runs one case end to end.
pub fn run_case(case: &CaseSpec, system: &PolyMap, solver: &SolverOptions) -> Result<CaseResult, CaseFailure> {
    let transformed_field = system.compose_linear(&case.transform).map_err(|e| CaseFailure::new(Stage::Transform, e))?;
    if case.bx.dim() != system.dim() {
        return Err(CaseFailure::new(Stage::Transform, "case box dimension differs from the system"));
    }

    let (vertices, premise_bounds, reconstruct_residual) = match &case.source {
        VertexSource::Factorization { premises, factorization } => {
            let model = TsModel::build(&transformed_field, premises, factorization, &case.bx)
                .map_err(|e| CaseFailure::new(Stage::Factorization, e))?;
            let bounds = model.premises().iter().map(|p| p.bounds).collect();
            (model.vertices().to_vec(), bounds, Some(model.reconstruct_residual(RESIDUAL_SAMPLES)))
        }
        VertexSource::Direct(vertices) => (vertices.clone(), Vec::new(), None),
    };
    let sys = LdiSystem::new(vertices.clone()).map_err(|e| CaseFailure::new(Stage::Factorization, e))?;
    if sys.dim() != system.dim() {
        return Err(CaseFailure::new(Stage::Factorization, "vertex dimension differs from the system"));
    }

    let (certificate, grid_index) = match &case.pinned {
        Some(pieces) => {
            let cert = fit_lambdas(pieces, &sys, &solver.lambda_grid).map_err(|e| CaseFailure::new(Stage::Lmi, e))?;
            (cert, None)
        }
        None => {
            let sol = solve_pwq(&sys, &solver.lambda_grid).map_err(|e| CaseFailure::new(Stage::Lmi, e))?;
            (sol.certificate, Some(sol.grid_index))
        }
    };
    let margins = verify_certificate(&certificate, &sys, solver.margin_tol).map_err(|e| CaseFailure::new(Stage::Lmi, e))?;
    if !margins.accepted {
        return Err(CaseFailure::new(
            Stage::Lmi,
            format!("certificate margin {:e} below tolerance {:e}", margins.min_margin, solver.margin_tol),
        ));
    }
    if certificate.pieces.iter().any(|p| p.min_eigenvalue() <= 0.0) {
        return Err(CaseFailure::new(Stage::Lmi, "Lyapunov pieces are not positive definite"));
    }

    let level = max_level(&certificate.pieces, &case.bx).map_err(|e| CaseFailure::new(Stage::Level, e))?;
    let estimate = RoaEstimate::new(
        certificate.pieces.clone(),
        level.k,
        case.transform.clone(),
        case.bx.clone(),
        level.approximate,
    )
    .map_err(|e| CaseFailure::new(Stage::Level, e))?;

    Ok(CaseResult {
        estimate,
        certificate,
        margins,
        vertices,
        transformed_field,
        premise_bounds,
        reconstruct_residual,
        grid_index,
        level,
        pinned: case.pinned.is_some(),
    })
}

/// Union of separately certified estimates, queried in original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct UnionRegion {
    members: Vec<RoaEstimate>,
}

impl UnionRegion {
    pub fn new(members: Vec<RoaEstimate>) -> Self {
        Self { members }
    }

    pub fn members(&self) -> &[RoaEstimate] {
        &self.members
    }

    pub fn union_contains(&self, x: &[f64]) -> bool {
        self.members.iter().any(|m| m.contains(x))
    }
}

impl Region for UnionRegion {
    fn dim(&self) -> usize {
        self.members.first().map_or(0, Region::dim)
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.union_contains(x)
    }

    fn bounding_box(&self) -> BoxDomain {
        let mut boxes = self.members.iter().map(Region::bounding_box);
        let first = boxes.next().expect("union has at least one member");
        boxes.fold(first, |acc, b| acc.hull(&b))
    }
}

#[derive(Debug)]
pub struct MultiOutcome {
    pub region: UnionRegion,
    /// Per-case outcome in spec order.
    pub cases: Vec<Result<CaseResult, CaseFailure>>,
}

impl MultiOutcome {
    /// Indices into `cases` of the members of `region`.
    pub fn member_cases(&self) -> Vec<usize> {
        self.cases.iter().enumerate().filter(|(_, c)| c.is_ok()).map(|(i, _)| i).collect()
    }
}

/// Runs every case independently and unions the successful estimates.
pub fn run_multi(spec: &PipelineSpec) -> Result<MultiOutcome, PipelineError> {
    if spec.cases.is_empty() {
        return Err(PipelineError::NoCases);
    }
    let cases: Vec<Result<CaseResult, CaseFailure>> =
        spec.cases.par_iter().map(|c| run_case(c, &spec.system, &spec.solver)).collect();
    let members: Vec<RoaEstimate> = cases.iter().filter_map(|c| c.as_ref().ok()).map(|r| r.estimate.clone()).collect();
    if members.is_empty() {
        return Err(PipelineError::AllCasesFailed(cases.into_iter().filter_map(Result::err).collect()));
    }
    Ok(MultiOutcome { region: UnionRegion::new(members), cases })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaEstimate {
    pub area: f64,
    /// Half-width of the binomial 95% interval.
    pub half_width: f64,
    pub hits: u64,
    pub samples: u64,
    pub seed: u64,
}

impl AreaEstimate {
    pub fn interval(&self) -> (f64, f64) {
        (self.area - self.half_width, self.area + self.half_width)
    }
}

/// Monte Carlo measure of `region` inside `bbox`.
pub fn area_estimate(region: &dyn Region, bbox: &BoxDomain, n_samples: u64, seed: u64) -> AreaEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = bbox.dim();
    let mut x = vec![0.0; n];
    let mut hits = 0u64;
    for _ in 0..n_samples {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = rng.random_range(bbox.lower()[i]..bbox.upper()[i]);
        }
        if region.contains(&x) {
            hits += 1;
        }
    }
    let vol = bbox.volume();
    let p = hits as f64 / n_samples.max(1) as f64;
    let half_width = 1.96 * (p * (1.0 - p) / n_samples.max(1) as f64).sqrt() * vol;
    AreaEstimate { area: p * vol, half_width, hits, samples: n_samples, seed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::Monomial;
    use crate::tsmodel::AffineExpr;

    fn m(c: f64, p: &[u32]) -> Monomial {
        Monomial::new(c, p.to_vec())
    }

    fn reference_field() -> PolyMap {
        PolyMap::from_monomials(
            2,
            vec![
                vec![m(-1.0, &[2, 0]), m(-2.0, &[0, 1]), m(-2.0, &[1, 0])],
                vec![m(1.0, &[0, 3]), m(-1.0, &[0, 1])],
            ],
        )
        .unwrap()
    }

    fn reference_case() -> CaseSpec {
        CaseSpec {
            label: None,
            transform: Transform::identity(2),
            bx: BoxDomain::symmetric(&[1.0, 0.5]).unwrap(),
            source: VertexSource::Factorization {
                premises: vec![
                    Poly::from_terms(2, vec![m(1.0, &[1, 0])]).unwrap(),
                    Poly::from_terms(2, vec![m(1.0, &[0, 2])]).unwrap(),
                ],
                factorization: Factorization::new(vec![
                    vec![AffineExpr::new(-2.0, vec![-1.0, 0.0]), AffineExpr::new(-2.0, vec![0.0, 0.0])],
                    vec![AffineExpr::new(0.0, vec![0.0, 0.0]), AffineExpr::new(-1.0, vec![0.0, 1.0])],
                ]),
            },
            pinned: None,
        }
    }

    #[test]
    fn reference_fresh_case() {
        let r = run_case(&reference_case(), &reference_field(), &SolverOptions::default()).unwrap();
        assert!(r.margins.accepted && r.level.k > 0.0);
        assert!(r.reconstruct_residual.unwrap() <= 1e-9);
        assert_eq!(r.vertices.len(), 4);
    }

    #[test]
    fn reference_pinned_case_reproduces_level() {
        let mut case = reference_case();
        case.pinned = Some(crate::lmikit::tests::published_pieces());
        let r = run_case(&case, &reference_field(), &SolverOptions::default()).unwrap();
        assert!((r.level.k - 0.054).abs() <= 0.05 * 0.054);
        assert!(r.pinned && r.grid_index.is_none());
    }

    #[test]
    fn unstable_linearization_fails_at_lmi() {
        let f = PolyMap::linear(&DMatrix::identity(1, 1)).unwrap();
        let case = CaseSpec {
            label: None,
            transform: Transform::identity(1),
            bx: BoxDomain::symmetric(&[1.0]).unwrap(),
            source: VertexSource::Factorization {
                premises: vec![],
                factorization: Factorization::new(vec![vec![AffineExpr::new(1.0, vec![])]]),
            },
            pinned: None,
        };
        let err = run_case(&case, &f, &SolverOptions::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Lmi);
    }

    #[test]
    fn bad_factorization_fails_at_factorization_stage() {
        let mut case = reference_case();
        if let VertexSource::Factorization { factorization, .. } = &mut case.source {
            *factorization = Factorization::new(vec![
                vec![AffineExpr::new(-1.0, vec![0.0, 0.0]), AffineExpr::new(0.0, vec![0.0, 0.0])],
                vec![AffineExpr::new(0.0, vec![0.0, 0.0]), AffineExpr::new(-1.0, vec![0.0, 0.0])],
            ]);
        }
        let err = run_case(&case, &reference_field(), &SolverOptions::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Factorization);
    }

    #[test]
    fn multi_single_and_duplicate() {
        let spec = PipelineSpec {
            system: reference_field(),
            original_box: BoxDomain::symmetric(&[1.0, 0.5]).unwrap(),
            cases: vec![reference_case()],
            solver: SolverOptions::default(),
        };
        let single = run_multi(&spec).unwrap();
        let direct = run_case(&reference_case(), &reference_field(), &SolverOptions::default()).unwrap();
        assert_eq!(single.region.members(), &[direct.estimate]);

        let dup = run_multi(&PipelineSpec { cases: vec![reference_case(), reference_case()], ..spec.clone() }).unwrap();
        assert_eq!(dup.region.members().len(), 2);
        let bbox = dup.region.bounding_box();
        let a1 = area_estimate(&single.region, &bbox, 20_000, 5);
        let a2 = area_estimate(&dup.region, &bbox, 20_000, 5);
        assert_eq!(a1, a2);
    }

    #[test]
    fn all_failed_reported() {
        let f = PolyMap::linear(&DMatrix::identity(1, 1)).unwrap();
        let case = CaseSpec {
            label: None,
            transform: Transform::identity(1),
            bx: BoxDomain::symmetric(&[1.0]).unwrap(),
            source: VertexSource::Direct(vec![DMatrix::identity(1, 1)]),
            pinned: None,
        };
        let spec = PipelineSpec {
            system: f,
            original_box: BoxDomain::symmetric(&[1.0]).unwrap(),
            cases: vec![case],
            solver: SolverOptions::default(),
        };
        assert!(matches!(run_multi(&spec), Err(PipelineError::AllCasesFailed(v)) if v.len() == 1));
    }

    #[test]
    fn unit_disk_area() {
        let bx = BoxDomain::symmetric(&[3.0, 3.0]).unwrap();
        let disk = RoaEstimate::new(vec![SymMatrix::identity(2)], 1.0, Transform::identity(2), bx.clone(), false)
            .unwrap();
        let a = area_estimate(&disk, &bx, 1_000_000, 11);
        assert!((a.area - std::f64::consts::PI).abs() / std::f64::consts::PI < 0.02);
        assert!((a.area - std::f64::consts::PI).abs() <= 2.0 * a.half_width);
    }

    #[test]
    fn full_box_area() {
        let bx = BoxDomain::symmetric(&[1.0, 1.0]).unwrap();
        let everything =
            RoaEstimate::new(vec![SymMatrix::identity(2)], 100.0, Transform::identity(2), bx.clone(), false).unwrap();
        let a = area_estimate(&everything, &bx, 10_000, 1);
        assert_eq!(a.area, 4.0);
        assert_eq!(a.half_width, 0.0);
    }
}
