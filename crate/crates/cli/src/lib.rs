//! Commands behind the `roa-forge` binary.
//!
//! `estimate` runs every configured case and writes a results file,
//! `validate` re-checks a results file against its configuration and by
//! simulation, and `render` draws the certified boundaries of a planar run.

pub mod config;
pub mod render;
pub mod results;

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use roa_core::levelset::Region;
use roa_core::{
    area_estimate, max_level, run_multi, validate_region, verify_certificate, CaseSpec, LdiSystem, PipelineError,
    PolyMap, PwqCertificate, TsModel, UnionRegion, VertexSource,
};
use thiserror::Error;

use config::{LoadedConfig, Overrides};
use results::{CaseRecord, Outcome, ResultsFile, UnionRecord};

/// Allowed drift between stored and recomputed vertices.
pub const VERTEX_TOL: f64 = 1e-12;
/// Allowed relative drift between stored and recomputed levels.
pub const LEVEL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("results: {0}")]
    Results(String),
    #[error("io: {0}")]
    Io(String),
    #[error("every case failed")]
    AllInfeasible,
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::AllInfeasible => 2,
            CliError::Validation(_) => 3,
            _ => 1,
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Summary returned by [`estimate`].
#[derive(Debug)]
pub struct EstimateSummary {
    pub results_path: PathBuf,
    pub results: ResultsFile,
}

pub fn estimate(config_path: &Path, overrides: &Overrides) -> Result<EstimateSummary, CliError> {
    let loaded = config::load(config_path, overrides)?;
    let spec = &loaded.spec;
    let cfg = &loaded.config;
    let results_path = loaded.resolve(&cfg.outputs.results);

    let mut file = ResultsFile {
        format: results::FORMAT.to_string(),
        dim: spec.system.dim(),
        original_box: (&spec.original_box).into(),
        lambda_grid: spec.solver.lambda_grid.clone(),
        margin_tol: spec.solver.margin_tol,
        cases: Vec::new(),
        union: None,
    };

    let outcome = match run_multi(spec) {
        Ok(o) => o,
        Err(PipelineError::AllCasesFailed(failures)) => {
            file.cases = spec
                .cases
                .iter()
                .zip(&failures)
                .enumerate()
                .map(|(i, (c, f))| CaseRecord::failed(i, c.label.clone(), &c.transform, (&c.bx).into(), f))
                .collect();
            file.write(&results_path)?;
            return Err(CliError::AllInfeasible);
        }
        Err(PipelineError::NoCases) => return Err(CliError::Usage("no cases configured".into())),
    };

    let bbox = spec.original_box.hull(&outcome.region.bounding_box());
    let v = &cfg.validation;
    for (i, (case, r)) in spec.cases.iter().zip(&outcome.cases).enumerate() {
        let record = match r {
            Ok(r) => {
                let area = area_estimate(&r.estimate, &bbox, v.area_samples, v.seed);
                CaseRecord::certified(i, case.label.clone(), r, area)
            }
            Err(f) => CaseRecord::failed(i, case.label.clone(), &case.transform, (&case.bx).into(), f),
        };
        file.cases.push(record);
    }
    file.union = Some(UnionRecord {
        members: outcome.member_cases(),
        bounding_box: (&bbox).into(),
        area: area_estimate(&outcome.region, &bbox, v.area_samples, v.seed),
    });
    file.write(&results_path)?;

    if cfg.outputs.svg.is_some() || cfg.outputs.csv.is_some() {
        if spec.system.dim() == 2 {
            let plot = render::Plot::from_results(&file)?;
            if let Some(p) = &cfg.outputs.svg {
                write_file(&loaded.resolve(p), &plot.svg())?;
            }
            if let Some(p) = &cfg.outputs.csv {
                write_file(&loaded.resolve(p), &plot.csv())?;
            }
        } else {
            eprintln!("skipping plot outputs: system dimension is {}", spec.system.dim());
        }
    }
    Ok(EstimateSummary { results_path, results: file })
}

/// Vertex matrices a case induces, rebuilt from the configuration alone.
pub fn case_vertices(case: &CaseSpec, system: &PolyMap) -> Result<Vec<DMatrix<f64>>, String> {
    match &case.source {
        VertexSource::Direct(v) => Ok(v.clone()),
        VertexSource::Factorization { premises, factorization } => {
            let field = system.compose_linear(&case.transform).map_err(|e| e.to_string())?;
            let model = TsModel::build(&field, premises, factorization, &case.bx).map_err(|e| e.to_string())?;
            Ok(model.vertices().to_vec())
        }
    }
}

/// Outcome of [`validate`]: printable check lines and the failures among them.
#[derive(Debug, Default)]
pub struct ValidationSummary {
    pub lines: Vec<String>,
    pub failures: Vec<String>,
    pub counterexample: Option<Vec<f64>>,
}

impl ValidationSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Error carrying every failed check and the counterexample, if any.
    pub fn into_error(self) -> CliError {
        let mut msg = self.failures.join("; ");
        if let Some(x) = &self.counterexample {
            msg.push_str(&format!("; counterexample x0 = {x:?}"));
        }
        CliError::Validation(msg)
    }

    fn check(&mut self, ok: bool, what: String) {
        self.lines.push(format!("{} {what}", if ok { "ok  " } else { "FAIL" }));
        if !ok {
            self.failures.push(what);
        }
    }
}

fn max_abs_diff(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.shape() != y.shape()) {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

fn validate_case(
    summary: &mut ValidationSummary,
    loaded: &LoadedConfig,
    file: &ResultsFile,
    record: &CaseRecord,
) -> Result<(), CliError> {
    let spec = &loaded.spec;
    let n = file.dim;
    let name = record.name();
    let Some(case) = spec.cases.get(record.index) else {
        summary.check(false, format!("{name}: no matching case in the config"));
        return Ok(());
    };
    let Outcome::Ok(c) = &record.outcome else { return Ok(()) };

    summary.check(
        record.transform == case.transform.rows() && record.bx == (&case.bx).into(),
        format!("{name}: transform and box against the config"),
    );

    let stored = c.vertices(n, &format!("cases[{}].vertices", record.index))?;
    match case_vertices(case, &spec.system) {
        Ok(fresh) => {
            let d = max_abs_diff(&stored, &fresh);
            summary.check(d <= VERTEX_TOL, format!("{name}: vertices rebuilt from the config, max difference {d:e}"));
        }
        Err(e) => summary.check(false, format!("{name}: vertices could not be rebuilt: {e}")),
    }

    let pieces = match c.pieces(n, &format!("cases[{}].pieces", record.index)) {
        Ok(p) => p,
        Err(e) => {
            summary.check(false, format!("{name}: stored pieces are malformed: {e}"));
            return Ok(());
        }
    };
    let sys = LdiSystem::new(stored).map_err(|e| CliError::Results(format!("cases[{}].vertices: {e}", record.index)))?;
    let cert = PwqCertificate::new(pieces.clone(), c.lambdas.clone());
    match verify_certificate(&cert, &sys, file.margin_tol) {
        Ok(m) => summary.check(
            m.accepted && pieces.iter().all(|p| p.min_eigenvalue() > 0.0),
            format!("{name}: certificate min margin {:e} (tolerance {:e})", m.min_margin, file.margin_tol),
        ),
        Err(e) => summary.check(false, format!("{name}: certificate rejected: {e}")),
    }

    match max_level(&pieces, &case.bx) {
        Ok(level) => {
            let rel = (level.k - c.k).abs() / c.k.abs().max(1.0);
            summary.check(rel <= LEVEL_TOL, format!("{name}: level stored {}, recomputed {}", c.k, level.k));
        }
        Err(e) => summary.check(false, format!("{name}: level could not be recomputed: {e}")),
    }
    Ok(())
}

pub fn validate(results_path: &Path, config_path: &Path, overrides: &Overrides) -> Result<ValidationSummary, CliError> {
    let loaded = config::load(config_path, overrides)?;
    let file = ResultsFile::load(results_path)?;
    let spec = &loaded.spec;
    let mut summary = ValidationSummary::default();

    summary.check(
        file.dim == spec.system.dim() && file.cases.len() == spec.cases.len(),
        format!("results shape: {} cases, dimension {}", file.cases.len(), file.dim),
    );
    for record in &file.cases {
        validate_case(&mut summary, &loaded, &file, record)?;
    }

    let members = file.members()?;
    if members.is_empty() {
        summary.check(false, "results contain no certified case".into());
    } else {
        let union = UnionRegion::new(members.into_iter().map(|(_, e)| e).collect());
        let v = &loaded.config.validation;
        let report = validate_region(&union, &spec.system, v.samples, v.seed, &v.sim_options());
        summary.check(
            report.all_converged(),
            format!(
                "simulation: {}/{} sampled initial states converge (seed {})",
                report.converged, report.tested, v.seed
            ),
        );
        if !report.all_converged() {
            summary.counterexample = report.worst_point.clone();
        }
    }

    Ok(summary)
}

pub fn render(results_path: &Path, out_svg: &Path) -> Result<PathBuf, CliError> {
    let file = ResultsFile::load(results_path)?;
    let plot = render::Plot::from_results(&file)?;
    let csv_path = out_svg.with_extension("csv");
    write_file(out_svg, &plot.svg())?;
    write_file(&csv_path, &plot.csv())?;
    Ok(csv_path)
}
