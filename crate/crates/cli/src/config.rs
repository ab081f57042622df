//! JSON run configuration.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use roa_core::{
    AffineExpr, BoxDomain, CaseSpec, Factorization, Monomial, PipelineSpec, Poly, PolyMap, SimOptions, SolverOptions,
    SymMatrix, Transform, VertexSource, DEFAULT_LAMBDA_GRID,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub original_box: BoxConfig,
    pub cases: Vec<CaseConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dim: usize,
    pub equations: Vec<Vec<MonomialConfig>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialConfig {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl From<&BoxDomain> for BoxConfig {
    fn from(b: &BoxDomain) -> Self {
        Self { lower: b.lower().to_vec(), upper: b.upper().to_vec() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiseConfig {
    pub poly: Vec<MonomialConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineConfig {
    #[serde(rename = "const")]
    pub constant: f64,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    pub pieces: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub transform: Option<Vec<Vec<f64>>>,
    #[serde(rename = "box")]
    pub bx: BoxConfig,
    #[serde(default)]
    pub premises: Option<Vec<PremiseConfig>>,
    #[serde(default)]
    pub factorization: Option<Vec<Vec<AffineConfig>>>,
    /// Vertex matrices supplied directly instead of premises/factorization.
    #[serde(default)]
    pub vertices: Option<Vec<Vec<Vec<f64>>>>,
    /// Lyapunov pieces to verify instead of solving.
    #[serde(default)]
    pub certificate: Option<CertificateConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_margin_tol")]
    pub margin_tol: f64,
}

fn default_grid() -> Vec<f64> {
    DEFAULT_LAMBDA_GRID.to_vec()
}

fn default_margin_tol() -> f64 {
    roa_core::lmikit::VERIFY_TOL
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { lambda_grid: default_grid(), margin_tol: default_margin_tol() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_area_samples")]
    pub area_samples: u64,
}

fn default_samples() -> usize {
    500
}
fn default_dt() -> f64 {
    SimOptions::default().dt
}
fn default_horizon() -> f64 {
    SimOptions::default().horizon
}
fn default_area_samples() -> u64 {
    1_000_000
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            seed: 0,
            dt: default_dt(),
            horizon: default_horizon(),
            area_samples: default_area_samples(),
        }
    }
}

impl ValidationConfig {
    pub fn sim_options(&self) -> SimOptions {
        SimOptions { dt: self.dt, horizon: self.horizon, ..SimOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub results: PathBuf,
    #[serde(default)]
    pub svg: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub area_samples: Option<u64>,
}

fn field_err(field: impl Into<String>, message: impl std::fmt::Display) -> CliError {
    CliError::Config { field: field.into(), message: message.to_string() }
}

/// A parsed, validated configuration together with its location.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub spec: PipelineSpec,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| field_err("<file>", format!("{}: {e}", path.display())))?;
    let mut config: RunConfig = serde_json::from_str(&text).map_err(|e| field_err("<json>", e))?;
    if let Some(seed) = overrides.seed {
        config.validation.seed = seed;
    }
    if let Some(grid) = &overrides.lambda_grid {
        config.solver.lambda_grid = grid.clone();
    }
    if let Some(samples) = overrides.samples {
        config.validation.samples = samples;
    }
    if let Some(samples) = overrides.area_samples {
        config.validation.area_samples = samples;
    }
    let spec = to_spec(&config)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir, spec })
}

fn poly_from(dim: usize, terms: &[MonomialConfig], field: &str) -> Result<Poly, CliError> {
    let terms = terms.iter().map(|m| Monomial::new(m.coeff, m.powers.clone())).collect();
    Poly::from_terms(dim, terms).map_err(|e| field_err(field, e))
}

pub fn box_from(b: &BoxConfig, field: &str) -> Result<BoxDomain, CliError> {
    BoxDomain::new(b.lower.clone(), b.upper.clone()).map_err(|e| field_err(field, e))
}

pub fn matrix_from(rows: &[Vec<f64>], n: usize, field: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(field_err(field, format!("expected a {n}x{n} matrix")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(field_err(field, "non-finite entry"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn to_spec(config: &RunConfig) -> Result<PipelineSpec, CliError> {
    let n = config.system.dim;
    if n == 0 {
        return Err(field_err("system.dim", "must be positive"));
    }
    let equations = config
        .system
        .equations
        .iter()
        .map(|eq| eq.iter().map(|m| Monomial::new(m.coeff, m.powers.clone())).collect())
        .collect();
    let system = PolyMap::from_monomials(n, equations).map_err(|e| field_err("system.equations", e))?;
    let original_box = box_from(&config.original_box, "original_box")?;
    if original_box.dim() != n {
        return Err(field_err("original_box", format!("expected dimension {n}")));
    }
    if config.cases.is_empty() {
        return Err(field_err("cases", "at least one case is required"));
    }
    let grid = &config.solver.lambda_grid;
    if grid.is_empty() || grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(field_err("solver.lambda_grid", "must be non-empty with finite non-negative values"));
    }
    if !config.solver.margin_tol.is_finite() {
        return Err(field_err("solver.margin_tol", "must be finite"));
    }
    let v = &config.validation;
    if !(v.dt > 0.0 && v.horizon > v.dt) {
        return Err(field_err("validation", "need dt > 0 and horizon > dt"));
    }
    if v.samples == 0 || v.area_samples == 0 {
        return Err(field_err("validation", "sample counts must be positive"));
    }

    let cases = config.cases.iter().enumerate().map(|(i, c)| case_from(c, i, n)).collect::<Result<Vec<_>, _>>()?;
    Ok(PipelineSpec {
        system,
        original_box,
        cases,
        solver: SolverOptions { lambda_grid: grid.clone(), margin_tol: config.solver.margin_tol },
    })
}

fn case_from(c: &CaseConfig, i: usize, n: usize) -> Result<CaseSpec, CliError> {
    let at = |f: &str| format!("cases[{i}].{f}");
    let transform = match &c.transform {
        None => Transform::identity(n),
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(field_err(at("transform"), format!("expected a square {n}x{n} matrix")));
            }
            Transform::from_rows(rows).map_err(|e| field_err(at("transform"), e))?
        }
    };
    let bx = box_from(&c.bx, &at("box"))?;
    if bx.dim() != n {
        return Err(field_err(at("box"), format!("expected dimension {n}")));
    }
    let source = match (&c.vertices, &c.premises, &c.factorization) {
        (Some(vs), None, None) => {
            if vs.is_empty() {
                return Err(field_err(at("vertices"), "at least one vertex matrix is required"));
            }
            let mats = vs
                .iter()
                .enumerate()
                .map(|(k, rows)| matrix_from(rows, n, &at(&format!("vertices[{k}]"))))
                .collect::<Result<Vec<_>, _>>()?;
            VertexSource::Direct(mats)
        }
        (None, premises, Some(fact)) => {
            let premises = premises
                .as_deref()
                .unwrap_or_default()
                .iter()
                .enumerate()
                .map(|(k, p)| poly_from(n, &p.poly, &at(&format!("premises[{k}]"))))
                .collect::<Result<Vec<_>, _>>()?;
            let entries = fact
                .iter()
                .map(|row| row.iter().map(|e| AffineExpr::new(e.constant, e.coeffs.clone())).collect())
                .collect();
            VertexSource::Factorization { premises, factorization: Factorization::new(entries) }
        }
        (Some(_), _, _) => {
            return Err(field_err(at("vertices"), "give either vertices or premises/factorization, not both"));
        }
        (None, _, None) => return Err(field_err(at("factorization"), "missing (or give vertices)")),
    };
    let pinned = match &c.certificate {
        None => None,
        Some(cert) => {
            if !(1..=2).contains(&cert.pieces.len()) {
                return Err(field_err(at("certificate.pieces"), "one or two pieces required"));
            }
            let pieces = cert
                .pieces
                .iter()
                .enumerate()
                .map(|(k, rows)| {
                    let f = at(&format!("certificate.pieces[{k}]"));
                    let m = matrix_from(rows, n, &f)?;
                    SymMatrix::new(m).map_err(|e| field_err(f, e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(pieces)
        }
    };
    Ok(CaseSpec { label: c.label.clone(), transform, bx, source, pinned })
}
