//! Case expansion, concurrent solving and invariance comparisons.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mmdesign::verify::{flipped_problem, scaled_problem};
use mmdesign::{certify, solve_dc, Certificate, DesignProblem, Estimator, ResponseModel, SolveResult, SymMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AxesChoice, AxesKeyword, ConfigError, RunConfig};
use crate::output::{self, OutputError};

/// A transformed copy of a base case whose optimal design theory predicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Solved with `Q V₀ Q` for the diagonal sign pattern `Q`.
    SignFlip(Vec<f64>),
    /// Solved on the space with each coordinate multiplied by `t`.
    Scale(Vec<f64>),
}

impl Transform {
    fn suffix(&self) -> String {
        match self {
            Transform::SignFlip(s) => {
                let signs: String = s.iter().map(|&x| if x < 0.0 { 'm' } else { 'p' }).collect();
                format!("flip-{signs}")
            }
            Transform::Scale(_) => "scaled".into(),
        }
    }
}

/// One solve of the sweep.
#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub id: String,
    pub variant: Option<String>,
    pub estimator: Estimator,
    pub alpha: f64,
    pub transform: Option<Transform>,
    /// Id of the untransformed case this one is compared against.
    pub base: Option<String>,
}

/// Machine-readable result of one case. Contains nothing run-dependent
/// (timings live in the text table), so repeated runs serialize to
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: String,
    pub variant: Option<String>,
    pub estimator: Estimator,
    pub alpha: f64,
    pub transform: Option<Transform>,
    pub v0: Vec<Vec<f64>>,
    pub symmetry_axes: Vec<usize>,
    pub num_points: usize,
    pub num_params: usize,
    pub loss: f64,
    pub initial_loss: f64,
    pub converged: bool,
    pub inner_converged: bool,
    pub init_iterations: usize,
    pub outer_iterations: usize,
    pub inner_iteration_counts: Vec<usize>,
    pub certificate: Certificate,
    /// Full weight vector in design-space order.
    pub weights: Vec<f64>,
    pub support: Vec<SupportPoint>,
    pub trace: Vec<mmdesign::solver::OuterIterate>,
    pub starts: Vec<mmdesign::solver::StartSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub index: usize,
    pub x: Vec<f64>,
    pub weight: f64,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.converged && self.certificate.pass
    }
}

#[derive(Debug)]
pub enum CaseOutcome {
    Solved {
        result: Box<CaseResult>,
        wall_time: f64,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug)]
pub struct CaseReport {
    pub spec: CaseSpec,
    pub outcome: CaseOutcome,
}

impl CaseReport {
    pub fn result(&self) -> Option<&CaseResult> {
        match &self.outcome {
            CaseOutcome::Solved { result, .. } => Some(result),
            CaseOutcome::Failed { .. } => None,
        }
    }

    pub fn wall_time(&self) -> Option<f64> {
        match &self.outcome {
            CaseOutcome::Solved { wall_time, .. } => Some(*wall_time),
            CaseOutcome::Failed { .. } => None,
        }
    }

    pub fn passed(&self) -> bool {
        self.result().is_some_and(CaseResult::passed)
    }
}

/// Comparison of a transformed case with its base case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCheck {
    pub base: String,
    pub transformed: String,
    pub max_weight_diff: f64,
    pub loss_diff: f64,
    pub support_match: bool,
    pub pass: bool,
}

#[derive(Debug)]
pub struct RunReport {
    pub name: String,
    pub out_dir: PathBuf,
    pub cases: Vec<CaseReport>,
    pub invariance: Vec<InvarianceCheck>,
}

impl RunReport {
    pub fn case(&self, id: &str) -> Option<&CaseResult> {
        self.cases.iter().find(|c| c.spec.id == id).and_then(CaseReport::result)
    }

    pub fn success(&self) -> bool {
        self.cases.iter().all(CaseReport::passed) && self.invariance.iter().all(|c| c.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.success() {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl RunError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output.dir`.
    pub out_dir: Option<PathBuf>,
    /// Concurrent cases; `None` uses the rayon default.
    pub workers: Option<usize>,
    /// Solve without writing files.
    pub dry: bool,
}

/// Expands the configuration into cases: variants × estimators × α, then
/// one transformed copy per requested invariance check.
pub fn plan(cfg: &RunConfig) -> Result<Vec<CaseSpec>, ConfigError> {
    let variants = cfg.v0_variants()?;
    let mut cases = Vec::new();
    for (label, _) in &variants {
        for est in cfg.model.estimator.estimators() {
            for alpha in cfg.model.alpha.values() {
                let mut id = String::new();
                if !label.is_empty() {
                    id.push_str(label);
                    id.push('-');
                }
                id.push_str(&format!("{est}-alpha{alpha}"));
                cases.push(CaseSpec {
                    id,
                    variant: (!label.is_empty()).then(|| label.clone()),
                    estimator: est,
                    alpha,
                    transform: None,
                    base: None,
                });
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    for c in &cases {
        if !seen.insert(c.id.as_str()) {
            return Err(ConfigError::at("model.alpha", format!("duplicate case {}", c.id)));
        }
    }
    if let Some(inv) = &cfg.invariance {
        let mut transforms: Vec<Transform> = inv.sign_flips.iter().cloned().map(Transform::SignFlip).collect();
        transforms.extend(inv.scale.iter().cloned().map(Transform::Scale));
        let bases = cases.clone();
        for b in &bases {
            for t in &transforms {
                cases.push(CaseSpec {
                    id: format!("{}-{}", b.id, t.suffix()),
                    transform: Some(t.clone()),
                    base: Some(b.id.clone()),
                    ..b.clone()
                });
            }
        }
    }
    Ok(cases)
}

/// Symmetry axes the configuration asks for, checked against the model.
pub fn resolve_axes(cfg: &RunConfig) -> Result<Vec<usize>, ConfigError> {
    let space = cfg.build_space()?;
    let (_, v0) = cfg.v0_variants()?.swap_remove(0);
    let model = ResponseModel::new(cfg.model.p, cfg.bases()?, v0, 0.0, Estimator::Glse)
        .map_err(|e| ConfigError::at("model", e))?;
    let valid = space.symmetry_axes(&model);
    match &cfg.symmetry.axes {
        AxesChoice::Keyword(AxesKeyword::Auto) => Ok(valid),
        AxesChoice::Keyword(AxesKeyword::Off) => Ok(Vec::new()),
        AxesChoice::List(list) => {
            for (k, a) in list.iter().enumerate() {
                if !valid.contains(a) {
                    return Err(ConfigError::at(
                        format!("symmetry.axes[{k}]"),
                        format!("reflecting x{a} is not a symmetry of this model and space (valid: {valid:?})"),
                    ));
                }
            }
            let mut axes = list.clone();
            axes.sort_unstable();
            axes.dedup();
            Ok(axes)
        }
    }
}

/// Builds the design problem for one case.
pub fn build_problem(cfg: &RunConfig, case: &CaseSpec, axes: &[usize]) -> Result<DesignProblem, String> {
    let variants = cfg.v0_variants().map_err(|e| e.to_string())?;
    let v0 = variants
        .iter()
        .find(|(label, _)| case.variant.as_deref().unwrap_or("") == label)
        .map(|(_, v)| v.clone())
        .ok_or_else(|| format!("unknown V0 variant {:?}", case.variant))?;
    let model = ResponseModel::new(cfg.model.p, cfg.bases().map_err(|e| e.to_string())?, v0, case.alpha, case.estimator)
        .map_err(|e| e.to_string())?;
    let space = cfg.build_space().map_err(|e| e.to_string())?;
    let orbits = space.build_orbits(axes);
    let base = DesignProblem::new(model, space, orbits).map_err(|e| e.to_string())?;
    match &case.transform {
        None => Ok(base),
        Some(Transform::SignFlip(s)) => flipped_problem(&base, s).map_err(|e| e.to_string()),
        Some(Transform::Scale(t)) => scaled_problem(&base, t).map_err(|e| e.to_string()),
    }
}

fn case_result(case: &CaseSpec, p: &DesignProblem, r: SolveResult, threshold: f64) -> CaseResult {
    let support = r
        .support(threshold)
        .into_iter()
        .map(|(index, weight)| SupportPoint {
            index,
            x: p.space().point(index).to_vec(),
            weight,
        })
        .collect();
    CaseResult {
        case: case.id.clone(),
        variant: case.variant.clone(),
        estimator: case.estimator,
        alpha: case.alpha,
        transform: case.transform.clone(),
        v0: p.model().v0().to_rows(),
        symmetry_axes: p.orbits().axes().to_vec(),
        num_points: p.num_points(),
        num_params: p.q(),
        loss: r.loss,
        initial_loss: r.initial_loss,
        converged: r.converged,
        inner_converged: r.inner_converged,
        init_iterations: r.init_iterations,
        outer_iterations: r.outer_iterations,
        inner_iteration_counts: r.inner_iteration_counts,
        certificate: r.certificate,
        weights: r.weights,
        support,
        trace: r.trace,
        starts: r.starts,
    }
}

fn solve_case(cfg: &RunConfig, case: &CaseSpec, axes: &[usize]) -> CaseOutcome {
    let started = Instant::now();
    let problem = match build_problem(cfg, case, axes) {
        Ok(p) => p,
        Err(error) => return CaseOutcome::Failed { error },
    };
    match solve_dc(&problem, &cfg.solver) {
        Ok(r) => CaseOutcome::Solved {
            result: Box::new(case_result(case, &problem, r, cfg.solver.support_threshold)),
            wall_time: started.elapsed().as_secs_f64(),
        },
        Err(e) => CaseOutcome::Failed { error: e.to_string() },
    }
}

fn compare(base: &CaseResult, other: &CaseResult, tol: f64) -> InvarianceCheck {
    let max_weight_diff = base
        .weights
        .iter()
        .zip(&other.weights)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let idx = |r: &CaseResult| r.support.iter().map(|s| s.index).collect::<Vec<_>>();
    let support_match = idx(base) == idx(other);
    InvarianceCheck {
        base: base.case.clone(),
        transformed: other.case.clone(),
        max_weight_diff,
        loss_diff: other.loss - base.loss,
        support_match,
        pass: base.weights.len() == other.weights.len() && max_weight_diff <= tol,
    }
}

/// Solves every case, writes the artifacts and compares invariance pairs.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport, RunError> {
    cfg.validate()?;
    let cases = plan(cfg)?;
    let axes = resolve_axes(cfg)?;
    let name = cfg.name.clone().unwrap_or_else(|| "run".into());
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&name));

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = opts.workers {
        builder = builder.num_threads(k.max(1));
    }
    let pool = builder.build()?;
    let outcomes: Vec<CaseOutcome> = pool.install(|| cases.par_iter().map(|c| solve_case(cfg, c, &axes)).collect());
    let reports: Vec<CaseReport> = cases
        .into_iter()
        .zip(outcomes)
        .map(|(spec, outcome)| CaseReport { spec, outcome })
        .collect();

    let tol = cfg.invariance.as_ref().map_or(0.0, |i| i.tolerance);
    let invariance = reports
        .iter()
        .filter_map(|c| {
            let base_id = c.spec.base.as_ref()?;
            let base = reports.iter().find(|b| &b.spec.id == base_id)?;
            Some(match (base.result(), c.result()) {
                (Some(b), Some(t)) => compare(b, t, tol),
                _ => InvarianceCheck {
                    base: base_id.clone(),
                    transformed: c.spec.id.clone(),
                    max_weight_diff: f64::NAN,
                    loss_diff: f64::NAN,
                    support_match: false,
                    pass: false,
                },
            })
        })
        .collect();

    let report = RunReport {
        name,
        out_dir,
        cases: reports,
        invariance,
    };
    if !opts.dry {
        output::write_all(cfg, &report)?;
    }
    Ok(report)
}

/// Outcome of re-certifying a stored result.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub case: String,
    pub certificate: Certificate,
    /// Largest `|d_i − stored d_i|`.
    pub max_d_diff: f64,
    pub loss_diff: f64,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.certificate.pass && self.max_d_diff <= 1e-12
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("case {0} is not part of this configuration")]
    UnknownCase(String),
    #[error("case {case}: {message}")]
    Problem { case: String, message: String },
}

impl VerifyError {
    pub fn exit_code(&self) -> i32 {
        match self {
            VerifyError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Rebuilds the problem of a stored result and re-certifies its weights.
pub fn verify_result(cfg: &RunConfig, path: &Path) -> Result<VerifyReport, VerifyError> {
    let text = std::fs::read_to_string(path).map_err(|source| VerifyError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let stored: CaseResult = serde_json::from_str(&text).map_err(|source| VerifyError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = plan(cfg)?
        .into_iter()
        .find(|c| c.id == stored.case)
        .ok_or_else(|| VerifyError::UnknownCase(stored.case.clone()))?;
    let problem_err = |message: String| VerifyError::Problem {
        case: stored.case.clone(),
        message,
    };
    let problem = build_problem(cfg, &spec, &stored.symmetry_axes).map_err(problem_err)?;
    if SymMatrix::from_rows(&stored.v0) != *problem.model().v0() {
        return Err(problem_err("stored V0 differs from the configuration".into()));
    }
    if stored.weights.len() != problem.num_points() {
        return Err(problem_err(format!(
            "stored result has {} weights, the design space has {} points",
            stored.weights.len(),
            problem.num_points()
        )));
    }
    let certificate =
        certify(&problem, &stored.weights, cfg.solver.eta2).map_err(|e| problem_err(e.to_string()))?;
    let max_d_diff = certificate
        .d
        .iter()
        .zip(&stored.certificate.d)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let loss = problem.loss(&stored.weights).map_err(|e| problem_err(e.to_string()))?;
    Ok(VerifyReport {
        case: stored.case,
        certificate,
        max_d_diff,
        loss_diff: loss - stored.loss,
    })
}

/// Convenience for tests and scripts: parse, run, report.
pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunReport, RunError> {
    let cfg = RunConfig::load(path)?;
    run(&cfg, opts)
}
