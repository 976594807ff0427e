//! First-order optimality certificate and invariance checks.
//!
//! At a local minimizer `w*` every candidate point satisfies
//!
//! ```text
//! d_i = tr(2 G⁻¹(w*) G_i − H⁻¹(w*) H_i) − q ≤ 0
//! ```
//!
//! and numerically we accept `d_i ≤ η₂`. Because `Σ w_i tr(G⁻¹G_i) = q` (and
//! likewise for `H`), `Σ w_i d_i = 0` for *any* nonsingular `w`, which makes a
//! cheap consistency check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criterion::{DesignProblem, Piece};
use crate::linalg::{LinalgError, SymMatrix};
use crate::model::ResponseModel;
use crate::solver::{solve_dc, SolveError, SolveResult, SolverOptions};
use crate::space::DesignSpace;

pub const DEFAULT_ETA2: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `d_i` for every point of the design space.
    pub d: Vec<f64>,
    pub max_violation: f64,
    /// Index of the point attaining `max_violation`.
    pub argmax: usize,
    /// `Σ w_i d_i`; zero up to rounding.
    pub weighted_sum: f64,
    pub eta2: f64,
    pub pass: bool,
}

/// Evaluates the directional-derivative certificate at point weights `w`.
pub fn certify(problem: &DesignProblem, w: &[f64], eta2: f64) -> Result<Certificate, LinalgError> {
    let state = problem.state(w)?;
    let tg = problem.point_traces(state.g_cholesky(), Piece::G);
    let th = problem.point_traces(state.h_cholesky(), Piece::H);
    let q = problem.q() as f64;
    let d: Vec<f64> = tg.iter().zip(&th).map(|(g, h)| 2.0 * g - h - q).collect();
    let (argmax, max_violation) = d
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let weighted_sum = w.iter().zip(&d).map(|(wi, di)| wi * di).sum();
    Ok(Certificate {
        d,
        max_violation,
        argmax,
        weighted_sum,
        eta2,
        pass: max_violation <= eta2,
    })
}

#[derive(Debug, Error)]
pub enum InvarianceError {
    #[error("scale check not applicable: {0}")]
    NotApplicable(String),
    #[error("sign-flip matrix must have {expected} diagonal entries of ±1")]
    BadSignFlip { expected: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Outcome of solving a problem and a transformed copy that theory says has
/// the same optimal weights.
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub max_weight_diff: f64,
    pub loss_diff: f64,
    /// Support sets (weights ≥ threshold) coincide.
    pub support_match: bool,
    pub base: SolveResult,
    pub transformed: SolveResult,
}

impl InvarianceReport {
    fn compare(base: SolveResult, transformed: SolveResult, threshold: f64) -> Self {
        let max_weight_diff = base
            .weights
            .iter()
            .zip(&transformed.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let support = |r: &SolveResult| -> Vec<usize> {
            r.weights
                .iter()
                .enumerate()
                .filter(|(_, &w)| w >= threshold)
                .map(|(i, _)| i)
                .collect()
        };
        Self {
            max_weight_diff,
            loss_diff: transformed.loss - base.loss,
            support_match: support(&base) == support(&transformed),
            base,
            transformed,
        }
    }
}

/// `Q V₀ Q` for a diagonal ±1 `Q`.
pub fn sign_flip_v0(v0: &SymMatrix, signs: &[f64]) -> Result<SymMatrix, InvarianceError> {
    let m = v0.dim();
    if signs.len() != m || signs.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(InvarianceError::BadSignFlip { expected: m });
    }
    let mut flat = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            flat[i * m + j] = signs[i] * v0.get(i, j) * signs[j];
        }
    }
    Ok(SymMatrix::from_row_major(m, &flat))
}

/// Solves with `V₀` and with `Q V₀ Q` and compares the designs.
pub fn check_sign_flip(
    problem: &DesignProblem,
    signs: &[f64],
    opts: &SolverOptions,
) -> Result<InvarianceReport, InvarianceError> {
    let flipped = flipped_problem(problem, signs)?;
    let (base, transformed) = rayon::join(|| solve_dc(problem, opts), || solve_dc(&flipped, opts));
    Ok(InvarianceReport::compare(
        base?,
        transformed?,
        opts.support_threshold,
    ))
}

pub fn flipped_problem(problem: &DesignProblem, signs: &[f64]) -> Result<DesignProblem, InvarianceError> {
    let model = problem.model().with_v0(sign_flip_v0(problem.model().v0(), signs)?)?;
    Ok(DesignProblem::new(
        model,
        problem.space().clone(),
        problem.orbits().clone(),
    )?)
}

/// Checks that every basis entry scales by a positive constant under `t`.
pub fn scale_premise(model: &ResponseModel, t: &[f64]) -> Result<(), InvarianceError> {
    if t.len() != model.p() || t.iter().any(|&x| !(x > 0.0)) {
        return Err(InvarianceError::NotApplicable(format!(
            "need {} positive scale factors",
            model.p()
        )));
    }
    for (j, b) in model.blocks().iter().enumerate() {
        if !b.is_scale_diagonal(t) {
            return Err(InvarianceError::NotApplicable(format!(
                "response {} has a shifted truncated power in a rescaled variable",
                j + 1
            )));
        }
    }
    Ok(())
}

pub fn scaled_problem(problem: &DesignProblem, t: &[f64]) -> Result<DesignProblem, InvarianceError> {
    scale_premise(problem.model(), t)?;
    let space: DesignSpace = problem.space().apply_scale(t);
    Ok(DesignProblem::new(
        problem.model().clone(),
        space,
        problem.orbits().clone(),
    )?)
}

/// Solves on `S` and on the scaled space `S_T` and compares weights index by
/// index (scaling preserves point order).
pub fn check_scale(
    problem: &DesignProblem,
    t: &[f64],
    opts: &SolverOptions,
) -> Result<InvarianceReport, InvarianceError> {
    let scaled = scaled_problem(problem, t)?;
    let (base, transformed) = rayon::join(|| solve_dc(problem, opts), || solve_dc(&scaled, opts));
    Ok(InvarianceReport::compare(
        base?,
        transformed?,
        opts.support_threshold,
    ))
}

/// `loss_b(w) - loss_a(w)` for each weight vector; a theorem-level invariance
/// shows up as a constant (or zero) vector.
pub fn loss_offsets(
    a: &DesignProblem,
    b: &DesignProblem,
    weights: &[Vec<f64>],
) -> Result<Vec<f64>, LinalgError> {
    weights
        .iter()
        .map(|w| Ok(b.loss(w)? - a.loss(w)?))
        .collect()
}
