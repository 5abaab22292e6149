//! Problem files and inline source laws.
//!
//! A problem file is TOML:
//!
//! ```toml
//! name = "skewed-3"
//! description = "optional free text"
//! labels = ["a", "b", "c"]            # optional, one per source symbol
//! source = [0.5, 0.3, 0.2]
//! distortion = [[0, 1, 2], [1, 0, 1], [2, 1, 0]]
//! ```
//!
//! `distortion = "hamming"` stands for the square 0/1 matrix.

use std::path::Path;

use lossylab::{Pmf, SourceProblem};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    name: Option<String>,
    description: Option<String>,
    labels: Option<Vec<String>>,
    reconstruction_labels: Option<Vec<String>>,
    source: Vec<f64>,
    distortion: RawDistortion,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawDistortion {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub name: String,
    pub description: Option<String>,
    pub labels: Option<Vec<String>>,
    pub reconstruction_labels: Option<Vec<String>>,
    pub problem: SourceProblem,
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: RawProblem = toml::from_str(text).map_err(|e| CliError::Input(e.to_string()))?;
        let field =
            |name: &str, e: lossylab::Error| CliError::Input(format!("field `{name}`: {e}"));

        let px = Pmf::new(raw.source).map_err(|e| field("source", e))?;
        let dist = match raw.distortion {
            RawDistortion::Named(kind) if kind == "hamming" => {
                let n = px.len();
                (0..n)
                    .map(|x| (0..n).map(|y| if x == y { 0.0 } else { 1.0 }).collect())
                    .collect()
            }
            RawDistortion::Named(kind) => {
                return Err(CliError::Input(format!(
                    "field `distortion`: unknown named distortion {kind:?} (expected \"hamming\" or a matrix)"
                )))
            }
            RawDistortion::Matrix(rows) => rows,
        };
        if dist.is_empty() {
            return Err(CliError::Input("field `distortion`: empty matrix".into()));
        }
        let problem = SourceProblem::new(px, dist).map_err(|e| field("distortion", e))?;

        if let Some(labels) = &raw.labels {
            if labels.len() != problem.sources() {
                return Err(CliError::Input(format!(
                    "field `labels`: {} labels for {} source symbols",
                    labels.len(),
                    problem.sources()
                )));
            }
        }
        if let Some(labels) = &raw.reconstruction_labels {
            if labels.len() != problem.reconstructions() {
                return Err(CliError::Input(format!(
                    "field `reconstruction_labels`: {} labels for {} reconstruction symbols",
                    labels.len(),
                    problem.reconstructions()
                )));
            }
        }
        Ok(ProblemFile {
            name: raw.name.unwrap_or_else(|| "unnamed".into()),
            description: raw.description,
            labels: raw.labels,
            reconstruction_labels: raw.reconstruction_labels,
            problem,
        })
    }
}

/// Parses `p1,p2,...` or `uniform:N`.
pub fn parse_pmf(spec: &str) -> Result<Pmf, CliError> {
    let spec = spec.trim();
    if let Some(n) = spec.strip_prefix("uniform:") {
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("--pmf: bad alphabet size in {spec:?}")))?;
        if n == 0 {
            return Err(CliError::Input(
                "--pmf: alphabet size must be positive".into(),
            ));
        }
        return Ok(Pmf::uniform(n));
    }
    let probs = parse_list(spec, "--pmf")?;
    Pmf::new(probs).map_err(|e| CliError::Input(format!("--pmf: {e}")))
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(spec: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|_| {
                CliError::Input(format!("{flag}: cannot parse {:?} as a number", t.trim()))
            })
        })
        .collect()
}
