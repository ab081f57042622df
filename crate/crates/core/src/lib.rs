//! Region-of-attraction estimates for polynomial systems.
//!
//! A polynomial field `xdot = f(x)` is rewritten, possibly after a linear
//! change of coordinates `xb = T x`, as a Takagi-Sugeno convex combination of
//! linear vertex systems on a box. A (piecewise) quadratic Lyapunov function
//! certified by LMIs over those vertices then yields a sublevel set inside the
//! box, and estimates from several coordinate choices are combined as a union.
//!
//! Modules, bottom up:
//!
//! * [`polyalg`]: polynomials, boxes, coordinate transforms.
//! * [`tsmodel`]: premise bounds, vertex matrices, membership weights.
//! * [`lmikit`]: LMI compilation, barrier solver, certificate verification.
//! * [`levelset`]: `V(x) = max_j x^T P_j x` and the largest level in a box.
//! * [`pipeline`]: per-transform cases, unions, Monte Carlo area.
//! * [`simcheck`]: RK4 validation of certified regions.
//! * [`reference`]: a planar reference system and its certificates.

pub mod levelset;
pub mod lmikit;
pub mod pipeline;
pub mod polyalg;
pub mod reference;
pub mod sampling;
pub mod simcheck;
pub mod tsmodel;

pub use levelset::{max_level, v_eval, LevelError, LevelResult, Region, RoaEstimate};
pub use lmikit::{
    solve_pwq, solve_quadratic_ldi, solve_quadratic_lti, verify_certificate, LdiSystem, LmiError, MarginReport,
    PwqCertificate, SymMatrix, DEFAULT_LAMBDA_GRID,
};
pub use pipeline::{
    area_estimate, run_case, run_multi, AreaEstimate, CaseFailure, CaseResult, CaseSpec, PipelineError, PipelineSpec,
    SolverOptions, Stage, UnionRegion, VertexSource,
};
pub use polyalg::{BoxDomain, Monomial, Poly, PolyError, PolyMap, Transform};
pub use simcheck::{integrate, lyapunov_decrease_check, validate_region, SimOptions, Trajectory, ValidationReport};
pub use tsmodel::{bound_premise, AffineExpr, Factorization, PremiseBounds, TsError, TsModel};
