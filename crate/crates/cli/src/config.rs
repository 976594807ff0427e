//! Run configuration: a TOML file with `model`, `space`, `solver`,
//! `symmetry`, `output` and `invariance` blocks.

use std::fmt;
use std::path::{Path, PathBuf};

use mmdesign::{BasisVector, DesignSpace, Estimator, FactorSpec, ResponseModel, SolverOptions, SymMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

impl ConfigError {
    pub fn at(path: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError::Schema {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Field path of a schema error (empty for I/O errors).
    pub fn path(&self) -> &str {
        match self {
            ConfigError::Schema { path, .. } => path,
            ConfigError::Io { .. } => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label used in reports; defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelConfig,
    pub space: SpaceConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub symmetry: SymmetryConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub invariance: Option<InvarianceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of design variables `x1..xp`.
    pub p: usize,
    /// One basis string per response, e.g. `"1, x1, x1*x2"`.
    pub responses: Vec<String>,
    /// Nominal covariance; exclusive with `v0_variants`.
    #[serde(default)]
    pub v0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub v0_variants: Vec<NamedMatrix>,
    pub alpha: OneOrMany,
    #[serde(default)]
    pub estimator: EstimatorChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMatrix {
    pub name: String,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    Glse,
    Olse,
    #[default]
    Both,
}

impl EstimatorChoice {
    pub fn estimators(self) -> Vec<Estimator> {
        match self {
            EstimatorChoice::Glse => vec![Estimator::Glse],
            EstimatorChoice::Olse => vec![Estimator::Olse],
            EstimatorChoice::Both => vec![Estimator::Glse, Estimator::Olse],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub factors: Vec<FactorSpec>,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

fn default_max_points() -> usize {
    mmdesign::space::DEFAULT_MAX_POINTS
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryConfig {
    #[serde(default)]
    pub axes: AxesChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxesChoice {
    Keyword(AxesKeyword),
    List(Vec<usize>),
}

impl Default for AxesChoice {
    fn default() -> Self {
        AxesChoice::Keyword(AxesKeyword::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxesKeyword {
    Auto,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Sweep design table as CSV.
    Csv,
    /// Sweep design table as aligned text.
    Table,
    /// Per-case machine-readable result.
    Json,
    /// Per-case certificate values for plotting.
    Plot,
    /// Per-case outer-iteration trace.
    Trace,
}

pub const ALL_FORMATS: [Format; 5] = [Format::Csv, Format::Table, Format::Json, Format::Plot, Format::Trace];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            formats: default_formats(),
        }
    }
}

fn default_formats() -> Vec<Format> {
    ALL_FORMATS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceConfig {
    /// Diagonal ±1 sign patterns `Q`; each case is re-solved with `Q V₀ Q`.
    #[serde(default)]
    pub sign_flips: Vec<Vec<f64>>,
    /// Positive per-variable scale factors; each case is re-solved on the
    /// scaled space.
    #[serde(default)]
    pub scale: Option<Vec<f64>>,
    /// Largest acceptable max-abs weight difference.
    #[serde(default = "default_invariance_tol")]
    pub tolerance: f64,
}

fn default_invariance_tol() -> f64 {
    1e-4
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    /// Parses and validates; errors name the offending field.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| ConfigError::at("<document>", e.message()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().message().to_string();
            ConfigError::at(if path == "." { "<document>".into() } else { path }, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if m.p == 0 {
            return Err(ConfigError::at("model.p", "need at least one design variable"));
        }
        if m.responses.is_empty() {
            return Err(ConfigError::at("model.responses", "need at least one response"));
        }
        self.bases()?;
        let variants = self.v0_variants()?;
        for (k, (label, v)) in variants.iter().enumerate() {
            let field = if m.v0.is_some() { "model.v0".to_string() } else { format!("model.v0_variants[{k}]") };
            if m.v0.is_none() && (label.is_empty() || label.contains(['/', '\\'])) {
                return Err(ConfigError::at(format!("{field}.name"), "name must be nonempty without path separators"));
            }
            if v.dim() != m.responses.len() {
                return Err(ConfigError::at(
                    field,
                    format!("expected a {0}×{0} matrix (one row per response)", m.responses.len()),
                ));
            }
        }
        let alphas = m.alpha.values();
        if alphas.is_empty() {
            return Err(ConfigError::at("model.alpha", "alpha list is empty"));
        }
        for (k, a) in alphas.iter().enumerate() {
            if !(*a >= 0.0) || !a.is_finite() {
                let field = match m.alpha {
                    OneOrMany::One(_) => "model.alpha".to_string(),
                    OneOrMany::Many(_) => format!("model.alpha[{k}]"),
                };
                return Err(ConfigError::at(field, format!("alpha must be finite and ≥ 0, got {a}")));
            }
        }
        // Model validation (PD V₀ etc.) on every variant.
        for (k, (_, v0)) in variants.iter().enumerate() {
            let field = if m.v0.is_some() { "model.v0".to_string() } else { format!("model.v0_variants[{k}].matrix") };
            ResponseModel::new(m.p, self.bases()?, v0.clone(), 0.0, Estimator::Glse)
                .map_err(|e| ConfigError::at(field, e))?;
        }

        if self.space.factors.len() != m.p {
            return Err(ConfigError::at(
                "space.factors",
                format!("expected {} factors (one per design variable), got {}", m.p, self.space.factors.len()),
            ));
        }
        for (k, f) in self.space.factors.iter().enumerate() {
            f.validate().map_err(|e| ConfigError::at(format!("space.factors[{k}]"), e))?;
        }
        self.solver.validate().map_err(|e| ConfigError::at("solver", e))?;
        if self.output.formats.is_empty() {
            return Err(ConfigError::at("output.formats", "list at least one format"));
        }
        if let AxesChoice::List(axes) = &self.symmetry.axes {
            for (k, &a) in axes.iter().enumerate() {
                if a == 0 || a > m.p {
                    return Err(ConfigError::at(
                        format!("symmetry.axes[{k}]"),
                        format!("axis {a} is not a design variable (1..={})", m.p),
                    ));
                }
            }
        }
        if let Some(inv) = &self.invariance {
            let mdim = m.responses.len();
            for (k, s) in inv.sign_flips.iter().enumerate() {
                if s.len() != mdim || s.iter().any(|&x| x != 1.0 && x != -1.0) {
                    return Err(ConfigError::at(
                        format!("invariance.sign_flips[{k}]"),
                        format!("need {mdim} entries, each 1 or -1"),
                    ));
                }
            }
            if let Some(t) = &inv.scale {
                if t.len() != m.p || t.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(ConfigError::at("invariance.scale", format!("need {} positive factors", m.p)));
                }
            }
            if !(inv.tolerance > 0.0) {
                return Err(ConfigError::at("invariance.tolerance", "must be positive"));
            }
        }
        Ok(())
    }

    /// Parsed bases, one per response.
    pub fn bases(&self) -> Result<Vec<BasisVector>, ConfigError> {
        self.model
            .responses
            .iter()
            .enumerate()
            .map(|(j, text)| {
                let field = format!("model.responses[{j}]");
                if text.trim().is_empty() {
                    return Err(ConfigError::at(field, format!("empty basis for response {}", j + 1)));
                }
                BasisVector::parse_with_vars(text, self.model.p).map_err(|e| ConfigError::at(field, e))
            })
            .collect()
    }

    /// `(label, V₀)` pairs; the label is empty for a single `v0`.
    pub fn v0_variants(&self) -> Result<Vec<(String, SymMatrix)>, ConfigError> {
        let m = &self.model;
        let rows_to_sym = |rows: &[Vec<f64>], field: String| -> Result<SymMatrix, ConfigError> {
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(ConfigError::at(field, "matrix must be square and nonempty"));
            }
            for i in 0..n {
                for j in 0..i {
                    if rows[i][j] != rows[j][i] {
                        return Err(ConfigError::at(field, format!("matrix is not symmetric at ({}, {})", i + 1, j + 1)));
                    }
                }
            }
            Ok(SymMatrix::from_rows(rows))
        };
        match (&m.v0, m.v0_variants.is_empty()) {
            (Some(rows), true) => Ok(vec![(String::new(), rows_to_sym(rows, "model.v0".into())?)]),
            (None, false) => {
                let mut seen = std::collections::HashSet::new();
                m.v0_variants
                    .iter()
                    .enumerate()
                    .map(|(k, nm)| {
                        if !seen.insert(nm.name.as_str()) {
                            return Err(ConfigError::at(format!("model.v0_variants[{k}].name"), "duplicate name"));
                        }
                        Ok((nm.name.clone(), rows_to_sym(&nm.matrix, format!("model.v0_variants[{k}].matrix"))?))
                    })
                    .collect()
            }
            (Some(_), false) => Err(ConfigError::at("model", "give either v0 or v0_variants, not both")),
            (None, true) => Err(ConfigError::at("model.v0", "missing nominal covariance")),
        }
    }

    pub fn build_space(&self) -> Result<DesignSpace, ConfigError> {
        DesignSpace::build_capped(&self.space.factors, self.space.max_points).map_err(|e| ConfigError::at("space", e))
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}
