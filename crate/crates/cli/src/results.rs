//! Results file written by `estimate` and read by `validate` and `render`.

use std::path::Path;

use nalgebra::DMatrix;
use roa_core::{
    AreaEstimate, CaseFailure, CaseResult, MarginReport, PremiseBounds, RoaEstimate, Stage, SymMatrix, Transform,
};
use serde::{Deserialize, Serialize};

use crate::config::{box_from, matrix_from, BoxConfig};
use crate::CliError;

pub const FORMAT: &str = "roa-forge-results/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub format: String,
    pub dim: usize,
    pub original_box: BoxConfig,
    pub lambda_grid: Vec<f64>,
    pub margin_tol: f64,
    pub cases: Vec<CaseRecord>,
    pub union: Option<UnionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub index: usize,
    pub label: Option<String>,
    pub transform: Vec<Vec<f64>>,
    #[serde(rename = "box")]
    pub bx: BoxConfig,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Ok(Box<Certified>),
    Failed { stage: Stage, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certified {
    pub vertices: Vec<Vec<Vec<f64>>>,
    pub premise_bounds: Vec<PremiseBounds>,
    pub reconstruct_residual: Option<f64>,
    pub pieces: Vec<Vec<Vec<f64>>>,
    pub lambdas: Vec<f64>,
    pub pinned: bool,
    pub grid_index: Option<(usize, usize)>,
    pub margins: MarginReport,
    pub k: f64,
    pub witness: Vec<f64>,
    pub approximate: bool,
    pub area: AreaEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnionRecord {
    pub members: Vec<usize>,
    /// Sampling box shared by every area estimate in the file.
    pub bounding_box: BoxConfig,
    pub area: AreaEstimate,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl CaseRecord {
    pub fn certified(index: usize, label: Option<String>, r: &CaseResult, area: AreaEstimate) -> Self {
        Self {
            index,
            label,
            transform: r.estimate.transform().rows(),
            bx: r.estimate.domain().into(),
            outcome: Outcome::Ok(Box::new(Certified {
                vertices: r.vertices.iter().map(rows).collect(),
                premise_bounds: r.premise_bounds.clone(),
                reconstruct_residual: r.reconstruct_residual,
                pieces: r.certificate.pieces.iter().map(SymMatrix::rows).collect(),
                lambdas: r.certificate.lambdas.clone(),
                pinned: r.pinned,
                grid_index: r.grid_index,
                margins: r.margins.clone(),
                k: r.level.k,
                witness: r.level.witness.clone(),
                approximate: r.level.approximate,
                area,
            })),
        }
    }

    pub fn failed(index: usize, label: Option<String>, transform: &Transform, bx: BoxConfig, f: &CaseFailure) -> Self {
        Self {
            index,
            label,
            transform: transform.rows(),
            bx,
            outcome: Outcome::Failed { stage: f.stage, message: f.message.clone() },
        }
    }

    pub fn name(&self) -> String {
        self.label.clone().unwrap_or_else(|| format!("case {}", self.index))
    }
}

impl Certified {
    pub fn pieces(&self, n: usize, field: &str) -> Result<Vec<SymMatrix>, CliError> {
        self.pieces
            .iter()
            .map(|rows| {
                let m = matrix_from(rows, n, field)?;
                SymMatrix::new(m).map_err(|e| CliError::Results(format!("{field}: {e}")))
            })
            .collect()
    }

    pub fn vertices(&self, n: usize, field: &str) -> Result<Vec<DMatrix<f64>>, CliError> {
        self.vertices.iter().map(|rows| matrix_from(rows, n, field)).collect()
    }
}

impl ResultsFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Results(format!("{}: {e}", path.display())))?;
        let file: ResultsFile =
            serde_json::from_str(&text).map_err(|e| CliError::Results(format!("{}: {e}", path.display())))?;
        if file.format != FORMAT {
            return Err(CliError::Results(format!("unsupported results format {:?}", file.format)));
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("results serialize");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    /// Certified members rebuilt as estimates, with their case records.
    pub fn members(&self) -> Result<Vec<(&CaseRecord, RoaEstimate)>, CliError> {
        let n = self.dim;
        let mut out = Vec::new();
        for case in &self.cases {
            let Outcome::Ok(c) = &case.outcome else { continue };
            let at = |f: &str| format!("cases[{}].{f}", case.index);
            let pieces = c.pieces(n, &at("pieces"))?;
            let transform = Transform::from_rows(&case.transform)
                .map_err(|e| CliError::Results(format!("{}: {e}", at("transform"))))?;
            let bx = box_from(&case.bx, &at("box")).map_err(|e| CliError::Results(e.to_string()))?;
            let est = RoaEstimate::new(pieces, c.k, transform, bx, c.approximate)
                .map_err(|e| CliError::Results(format!("cases[{}]: {e}", case.index)))?;
            out.push((case, est));
        }
        Ok(out)
    }
}
