//! DC algorithm for the minimax D-criterion.
//!
//! The loss `g(w) - h(w)` is minimized over the simplex by repeatedly
//! replacing `h` with its tangent at the current iterate `w⁰`, which gives the
//! convex majorizer
//!
//! ```text
//! g(w) - v(w, w⁰) = -2 log det G(w) + Σ_k c_k w_k + const,   c_k = tr(H⁻¹(w⁰) H̄_k)
//! ```
//!
//! Each majorizer is minimized by conditional gradient with away steps. The
//! linear oracle over the simplex picks the vertex with the smallest gradient
//! component, and steps come from an exact line search (bisection on the
//! derivative). The starting point is the minimizer of `g` alone.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criterion::{DesignProblem, Piece};
use crate::linalg::{cholesky, Cholesky, LinalgError, SymMatrix};
use crate::verify::{certify, Certificate, DEFAULT_ETA2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Outer stop: Euclidean norm of the weight change between iterates.
    pub eta1: f64,
    /// Frank–Wolfe duality gap at which an inner solve stops.
    pub inner_gap_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Weights below this are not reported as support points.
    pub support_threshold: f64,
    /// Certificate acceptance threshold.
    pub eta2: f64,
    /// Number of additional deterministic starting points (0 = single start).
    pub multi_start: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eta1: 1e-5,
            inner_gap_tol: 1e-7,
            max_outer: 200,
            max_inner: 50_000,
            support_threshold: 1e-5,
            eta2: DEFAULT_ETA2,
            multi_start: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("eta1", self.eta1),
            ("inner_gap_tol", self.inner_gap_tol),
            ("support_threshold", self.support_threshold),
            ("eta2", self.eta2),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be a positive number, got {v}"));
            }
        }
        if self.max_outer == 0 {
            return Err("max_outer must be at least 1".into());
        }
        if self.max_inner == 0 {
            return Err("max_inner must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no design on this space makes the information matrix nonsingular")]
    InfeasibleModel,
    #[error("singular information matrix at an iterate: {0}")]
    Singular(#[from] LinalgError),
}

/// Result of one convex subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    /// Orbit weights.
    pub weights: Vec<f64>,
    /// `-2 log det G(w) + c·w` at `weights`.
    pub objective: f64,
    pub iterations: usize,
    /// Frank–Wolfe gap at `weights` (as last evaluated).
    pub gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterIterate {
    pub iteration: usize,
    pub loss: f64,
    pub step_norm: f64,
    pub inner_iterations: usize,
    pub inner_gap: f64,
    pub inner_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: usize,
    pub loss: f64,
    pub converged: bool,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Point weights, length N.
    pub weights: Vec<f64>,
    /// Orbit weights actually optimized.
    pub var_weights: Vec<f64>,
    pub loss: f64,
    /// Loss at the `g`-minimizing start.
    pub initial_loss: f64,
    pub init_iterations: usize,
    pub outer_iterations: usize,
    pub inner_iteration_counts: Vec<usize>,
    pub trace: Vec<OuterIterate>,
    pub certificate: Certificate,
    pub max_violation: f64,
    pub wall_time: f64,
    /// Outer stopping rule met before `max_outer`.
    pub converged: bool,
    /// Every inner solve reached its gap tolerance.
    pub inner_converged: bool,
    /// One entry per start when multi-start is enabled.
    pub starts: Vec<StartSummary>,
}

impl SolveResult {
    /// `(point index, weight)` for weights at or above `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<(usize, f64)> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w >= threshold)
            .map(|(i, &w)| (i, w))
            .collect()
    }
}

/// Minimizer of `g(w)` alone, started from uniform weights.
pub fn init_weights(problem: &DesignProblem, opts: &SolverOptions) -> Result<InnerOutcome, SolveError> {
    let start = problem.uniform_vars();
    let lin = vec![0.0; problem.num_vars()];
    match minimize_surrogate(problem, &lin, &start, opts.inner_gap_tol, opts.max_inner) {
        Err(SolveError::Singular(_)) => Err(SolveError::InfeasibleModel),
        other => other,
    }
}

/// One DC step: minimizes the convex majorizer built at `anchor` (orbit
/// weights), starting from the anchor.
pub fn solve_inner(
    problem: &DesignProblem,
    anchor: &[f64],
    opts: &SolverOptions,
) -> Result<InnerOutcome, SolveError> {
    let lin = anchor_linear_term(problem, anchor)?;
    minimize_surrogate(problem, &lin, anchor, opts.inner_gap_tol, opts.max_inner)
}

/// `c_k = -∂h/∂W_k = tr(H⁻¹(w⁰) H̄_k)` at the anchor.
fn anchor_linear_term(problem: &DesignProblem, anchor: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let h = problem.aggregate_vars(anchor, Piece::H);
    let chol = cholesky(&h)?;
    Ok(problem.var_traces(&chol, Piece::H))
}

pub fn solve_dc(problem: &DesignProblem, opts: &SolverOptions) -> Result<SolveResult, SolveError> {
    let clock = Instant::now();
    let init = init_weights(problem, opts)?;
    let mut best = run_dca(problem, opts, &init.weights, init.iterations)?;
    if opts.multi_start > 0 {
        let mut starts = vec![summary(0, &best)];
        for s in 1..=opts.multi_start {
            let w0 = perturbed_start(&init.weights, s as u64);
            let r = run_dca(problem, opts, &w0, 0)?;
            starts.push(summary(s, &r));
            if r.loss < best.loss - 1e-12 {
                best = r;
            }
        }
        best.starts = starts;
    }
    best.wall_time = clock.elapsed().as_secs_f64();
    Ok(best)
}

/// Runs the outer loop from given orbit weights instead of the `g`-minimizer.
pub fn solve_dc_from(
    problem: &DesignProblem,
    opts: &SolverOptions,
    start: &[f64],
) -> Result<SolveResult, SolveError> {
    assert_eq!(start.len(), problem.num_vars());
    let clock = Instant::now();
    let mut r = run_dca(problem, opts, start, 0)?;
    r.wall_time = clock.elapsed().as_secs_f64();
    Ok(r)
}

fn summary(start: usize, r: &SolveResult) -> StartSummary {
    StartSummary {
        start,
        loss: r.loss,
        converged: r.converged,
        max_violation: r.max_violation,
    }
}

/// Half the `g`-minimizer plus half a seeded Dirichlet(1) draw; stays
/// nonsingular because the first half already is.
fn perturbed_start(init: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: Vec<f64> = init
        .iter()
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let total: f64 = e.iter().sum();
    init.iter()
        .zip(&e)
        .map(|(a, b)| 0.5 * a + 0.5 * b / total)
        .collect()
}

fn run_dca(
    problem: &DesignProblem,
    opts: &SolverOptions,
    start: &[f64],
    init_iterations: usize,
) -> Result<SolveResult, SolveError> {
    let mut w = start.to_vec();
    let mut w_full = problem.expand(&w);
    let initial_loss = problem.state(&w_full)?.loss();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut inner_converged = true;
    for l in 1..=opts.max_outer {
        let inner = solve_inner(problem, &w, opts)?;
        let next_full = problem.expand(&inner.weights);
        let step_norm = w_full
            .iter()
            .zip(&next_full)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let loss = problem.state(&next_full)?.loss();
        inner_converged &= inner.converged;
        trace.push(OuterIterate {
            iteration: l,
            loss,
            step_norm,
            inner_iterations: inner.iterations,
            inner_gap: inner.gap,
            inner_converged: inner.converged,
        });
        w = inner.weights;
        w_full = next_full;
        if step_norm < opts.eta1 {
            converged = true;
            break;
        }
    }
    let state = problem.state(&w_full)?;
    let loss = state.loss();
    let certificate = certify(problem, &w_full, opts.eta2)?;
    Ok(SolveResult {
        max_violation: certificate.max_violation,
        weights: w_full,
        var_weights: w,
        loss,
        initial_loss,
        init_iterations,
        outer_iterations: trace.len(),
        inner_iteration_counts: trace.iter().map(|t| t.inner_iterations).collect(),
        trace,
        certificate,
        wall_time: 0.0,
        converged,
        inner_converged,
        starts: Vec::new(),
    })
}

const LINE_SEARCH_WIDTH: f64 = 1e-12;
const MAX_HALVINGS: usize = 60;
/// Supports larger than this are re-seeded before Newton steps start.
const NEWTON_MAX_SUPPORT: usize = 256;
/// Violating vertices brought into the support per round.
const ADD_BATCH: usize = 8;
/// Newton steps per round before the full gradient is re-checked.
const NEWTON_STEPS_PER_ROUND: usize = 50;
const CENTER_MU_FINAL: f64 = 1e-12;
const CENTER_NEWTON_STEPS: usize = 30;

/// `min -2 log det G(w) + lin·w` over the simplex of orbit weights.
///
/// Active-set Newton: Newton steps with the exact Hessian on the current
/// support (a point leaves when its weight reaches zero), alternated with
/// adding the points of steepest descent from the full gradient. A
/// Frank–Wolfe or away step is taken whenever a Newton round stalls.
pub fn minimize_surrogate(
    problem: &DesignProblem,
    lin: &[f64],
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<InnerOutcome, SolveError> {
    let n = problem.num_vars();
    assert_eq!(lin.len(), n);
    assert_eq!(start.len(), n);
    let sur = Surrogate {
        problem,
        lin,
        q: problem.q() as f64,
    };
    let mut it = sur.iterate(start.to_vec())?;
    if it.support().len() > NEWTON_MAX_SUPPORT {
        it = sur.reseed(&it)?;
    }
    let mut iterations = 0;
    loop {
        let grad = sur.gradient(&it);
        let wg = dot(&it.w, &grad);
        let gap = wg - grad.iter().copied().fold(f64::INFINITY, f64::min);
        if gap <= tol && iterations == 0 {
            // An optimal start is returned as given.
            return Ok(InnerOutcome {
                converged: true,
                weights: it.w,
                objective: it.objective,
                iterations,
                gap,
            });
        }
        if gap <= tol {
            return sur.central_outcome(it, gap, tol, iterations);
        }
        if iterations >= max_iter {
            return Ok(InnerOutcome {
                converged: false,
                weights: it.w,
                objective: it.objective,
                iterations,
                gap,
            });
        }

        let mut support = it.support();
        let mut candidates: Vec<usize> = (0..n)
            .filter(|&k| it.w[k] == 0.0 && grad[k] < wg)
            .collect();
        candidates.sort_by(|&a, &b| grad[a].total_cmp(&grad[b]).then(a.cmp(&b)));
        support.extend(candidates.into_iter().take(ADD_BATCH));
        support.sort_unstable();

        let budget = NEWTON_STEPS_PER_ROUND.min(max_iter - iterations);
        let before = it.objective;
        let steps = sur.newton_round(&mut it, support, 0.1 * tol, budget)?;
        iterations += steps;
        let stalled = steps == 0 || !(it.objective < before);
        if stalled && iterations < max_iter {
            iterations += 1;
            if !sur.conditional_step(&mut it, &grad)? {
                // Neither step type makes numerical progress.
                let grad = sur.gradient(&it);
                let wg = dot(&it.w, &grad);
                let gap = wg - grad.iter().copied().fold(f64::INFINITY, f64::min);
                return Ok(InnerOutcome {
                    converged: gap <= tol,
                    weights: it.w,
                    objective: it.objective,
                    iterations,
                    gap,
                });
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Surrogate<'a> {
    problem: &'a DesignProblem,
    lin: &'a [f64],
    q: f64,
}

/// Weights with `G(w)`, its factor and the surrogate objective.
struct Iterate {
    w: Vec<f64>,
    g: SymMatrix,
    chol: Cholesky,
    objective: f64,
}

impl Iterate {
    fn support(&self) -> Vec<usize> {
        (0..self.w.len()).filter(|&k| self.w[k] > 0.0).collect()
    }
}

impl Surrogate<'_> {
    fn iterate(&self, w: Vec<f64>) -> Result<Iterate, LinalgError> {
        let g = self.problem.aggregate_vars(&w, Piece::G);
        let chol = cholesky(&g)?;
        let objective = -2.0 * chol.log_det() + dot(&w, self.lin);
        Ok(Iterate {
            w,
            g,
            chol,
            objective,
        })
    }

    fn gradient(&self, it: &Iterate) -> Vec<f64> {
        let t = self.problem.var_traces(&it.chol, Piece::G);
        t.iter().zip(self.lin).map(|(t, c)| -2.0 * t + c).collect()
    }

    /// Uniform weights on the vertices of steepest descent at `it`, doubling
    /// the count until the information matrix is nonsingular.
    fn reseed(&self, it: &Iterate) -> Result<Iterate, SolveError> {
        let n = self.problem.num_vars();
        let grad = self.gradient(it);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| grad[a].total_cmp(&grad[b]).then(a.cmp(&b)));
        let mut k = (2 * self.problem.q()).max(16).min(n);
        loop {
            let mut w = vec![0.0; n];
            for &v in &order[..k] {
                w[v] = 1.0 / k as f64;
            }
            match self.iterate(w) {
                Ok(next) => return Ok(next),
                Err(_) if k < n => k = (2 * k).min(n),
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Whitened factors `L⁻¹F_i / √|o|` of every member of each support
    /// vertex, as one column-packed block per vertex.
    fn whitened(&self, chol: &Cholesky, support: &[usize]) -> Vec<Vec<f64>> {
        let q = self.problem.q();
        support
            .iter()
            .map(|&k| {
                let members = self.problem.orbits().members(k);
                let scale = 1.0 / (members.len() as f64).sqrt();
                let mut block = Vec::with_capacity(members.len() * self.problem.g_factor(0).len());
                for &i in members {
                    for col in self.problem.g_factor(i).chunks_exact(q) {
                        let start = block.len();
                        block.extend_from_slice(col);
                        chol.forward_in_place(&mut block[start..]);
                    }
                }
                block.iter_mut().for_each(|x| *x *= scale);
                block
            })
            .collect()
    }

    /// Up to `budget` Newton steps restricted to `support`. Returns the
    /// number of accepted steps.
    fn newton_round(
        &self,
        it: &mut Iterate,
        mut support: Vec<usize>,
        tol: f64,
        budget: usize,
    ) -> Result<usize, SolveError> {
        let q = self.problem.q();
        let mut steps = 0;
        while steps < budget && !support.is_empty() {
            let blocks = self.whitened(&it.chol, &support);
            let s = support.len();
            let grad: Vec<f64> = blocks
                .iter()
                .zip(&support)
                .map(|(b, &k)| -2.0 * b.iter().map(|x| x * x).sum::<f64>() + self.lin[k])
                .collect();
            let w: Vec<f64> = support.iter().map(|&k| it.w[k]).collect();
            let wg = dot(&w, &grad);
            let restricted_gap = (0..s)
                .map(|a| if w[a] > 0.0 { (grad[a] - wg).abs() } else { wg - grad[a] })
                .fold(0.0, f64::max);
            if restricted_gap <= tol {
                break;
            }

            let hess = hessian(&blocks, q);

            let Some(d) = kkt_direction(&hess, &grad, &w) else {
                break;
            };
            let slope = dot(&grad, &d);
            if !(slope < 0.0) {
                break;
            }
            let mut alpha_max = f64::INFINITY;
            let mut blocking = usize::MAX;
            for a in 0..s {
                if d[a] < 0.0 {
                    let r = w[a] / -d[a];
                    if r < alpha_max {
                        alpha_max = r;
                        blocking = a;
                    }
                }
            }
            let mut alpha = alpha_max.min(1.0);

            let mut dmat = SymMatrix::zeros(q);
            for (a, &k) in support.iter().enumerate() {
                if d[a] != 0.0 {
                    let members = self.problem.orbits().members(k);
                    let share = d[a] / members.len() as f64;
                    for &i in members {
                        dmat.add_gram(share, self.problem.g_factor(i));
                    }
                }
            }
            let lin_now = dot(&it.w, self.lin);
            let lin_dir: f64 = support.iter().zip(&d).map(|(&k, da)| self.lin[k] * da).sum();
            let noise = 1e-13 * (1.0 + it.objective.abs());
            // Once the predicted decrease is at rounding level, objective
            // comparisons say nothing; the full step is kept if it stays
            // positive definite.
            let fine = -0.5 * slope <= 10.0 * noise;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let m = it.g.lin_comb(1.0, &dmat, alpha);
                if let Ok(c) = cholesky(&m) {
                    let f_new = -2.0 * c.log_det() + lin_now + alpha * lin_dir;
                    if fine || f_new <= it.objective + 1e-4 * alpha * slope + noise {
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }

            let mut w_new = it.w.clone();
            for (a, &k) in support.iter().enumerate() {
                w_new[k] = (w[a] + alpha * d[a]).max(0.0);
            }
            if alpha == alpha_max {
                w_new[support[blocking]] = 0.0;
            }
            let total: f64 = w_new.iter().sum();
            w_new.iter_mut().for_each(|x| *x /= total);
            let Ok(next) = self.iterate(w_new) else {
                break;
            };
            if !fine && next.objective > it.objective + noise {
                break;
            }
            *it = next;
            steps += 1;
            support.retain(|&k| it.w[k] > 0.0);
        }
        Ok(steps)
    }

    /// Converged result, moved to the central minimizer when that keeps the
    /// gap within tolerance.
    fn central_outcome(
        &self,
        it: Iterate,
        gap: f64,
        tol: f64,
        iterations: usize,
    ) -> Result<InnerOutcome, SolveError> {
        let face_tol = (1e3 * tol).max(1e-6);
        if let Some(mut c) = self.center(&it, face_tol)? {
            let mut grad = self.gradient(&c);
            let c_gap = dot(&c.w, &grad) - grad.iter().copied().fold(f64::INFINITY, f64::min);
            if c_gap > tol {
                // The barrier path stops short near the boundary; a few plain
                // Newton steps on the same support recover the tolerance.
                let support = c.support();
                self.newton_round(&mut c, support, 0.1 * tol, NEWTON_STEPS_PER_ROUND)?;
                grad = self.gradient(&c);
            }
            let c_gap = dot(&c.w, &grad) - grad.iter().copied().fold(f64::INFINITY, f64::min);
            if c_gap <= tol && c.objective <= it.objective + 1e-9 * (1.0 + it.objective.abs()) {
                return Ok(InnerOutcome {
                    converged: true,
                    weights: c.w,
                    objective: c.objective,
                    iterations,
                    gap: c_gap,
                });
            }
        }
        Ok(InnerOutcome {
            converged: true,
            weights: it.w,
            objective: it.objective,
            iterations,
            gap,
        })
    }

    /// Among the (possibly many) minimizers, moves to the one an
    /// interior-point method converges to: the maximizer of Σ log W_k over
    /// the optimal face, approached along the barrier path
    /// `min f(w) − μ Σ_{k∈face} log W_k` as μ → 0.
    ///
    /// The face is every vertex whose gradient is within `face_tol` of the
    /// minimum; for D-type criteria the information matrix at the optimum is
    /// unique, so these are exactly the vertices an optimal design may use.
    fn center(&self, it: &Iterate, face_tol: f64) -> Result<Option<Iterate>, SolveError> {
        let grad = self.gradient(it);
        let wg = dot(&it.w, &grad);
        let face: Vec<usize> = (0..grad.len()).filter(|&k| grad[k] - wg <= face_tol).collect();
        if face.len() < 2 || face.len() > NEWTON_MAX_SUPPORT {
            return Ok(None);
        }
        let share = 1.0 / face.len() as f64;
        let mut w0 = vec![0.0; it.w.len()];
        for &k in &face {
            w0[k] = 0.5 * it.w[k] + 0.5 * share;
        }
        let mut cur = self.iterate(w0)?;
        let q = self.problem.q();
        let mut mu = 1e-2;
        while mu >= CENTER_MU_FINAL {
            for _ in 0..CENTER_NEWTON_STEPS {
                let blocks = self.whitened(&cur.chol, &face);
                let s = face.len();
                let w: Vec<f64> = face.iter().map(|&k| cur.w[k]).collect();
                let grad: Vec<f64> = blocks
                    .iter()
                    .zip(&face)
                    .zip(&w)
                    .map(|((b, &k), wk)| {
                        -2.0 * b.iter().map(|x| x * x).sum::<f64>() + self.lin[k] - mu / wk
                    })
                    .collect();
                let mut hess = hessian(&blocks, q);
                for a in 0..s {
                    hess[a * s + a] += mu / (w[a] * w[a]);
                }
                let Some(d) = kkt_direction(&hess, &grad, &vec![1.0; s]) else {
                    break;
                };
                let decrement = -dot(&grad, &d);
                if !(decrement > 1e-15 * (1.0 + cur.objective.abs())) {
                    break;
                }
                // Stay strictly inside the positive orthant.
                let mut alpha: f64 = 1.0;
                for a in 0..s {
                    if d[a] < 0.0 {
                        alpha = alpha.min(0.99 * w[a] / -d[a]);
                    }
                }
                let barrier = |it: &Iterate| -> f64 {
                    it.objective - mu * face.iter().map(|&k| it.w[k].ln()).sum::<f64>()
                };
                let phi = barrier(&cur);
                let mut next = None;
                for _ in 0..MAX_HALVINGS {
                    let mut w_new = cur.w.clone();
                    for (a, &k) in face.iter().enumerate() {
                        w_new[k] = w[a] + alpha * d[a];
                    }
                    if let Ok(cand) = self.iterate(w_new) {
                        let noise = 1e-13 * (1.0 + phi.abs());
                        if barrier(&cand) <= phi - 1e-4 * alpha * decrement + noise {
                            next = Some(cand);
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                match next {
                    Some(n) => cur = n,
                    None => break,
                }
            }
            mu *= 0.1;
        }
        Ok(Some(cur))
    }

    /// One Frank–Wolfe or away step with exact line search. Returns false
    /// if no progress was possible.
    fn conditional_step(&self, it: &mut Iterate, grad: &[f64]) -> Result<bool, SolveError> {
        let n = grad.len();
        let wg = dot(&it.w, grad);
        let mut s = 0;
        for k in 1..n {
            if grad[k] < grad[s] {
                s = k;
            }
        }
        let mut a = usize::MAX;
        for k in 0..n {
            if it.w[k] > 0.0 && (a == usize::MAX || grad[k] > grad[a]) {
                a = k;
            }
        }
        let fw_gap = wg - grad[s];
        let away_gap = grad[a] - wg;
        let (vertex, lo, hi) = if fw_gap >= away_gap || it.w[a] >= 1.0 {
            (s, 0.0, 1.0)
        } else {
            (a, -it.w[a] / (1.0 - it.w[a]), 0.0)
        };
        let vmat = self.problem.var_matrix(vertex, Piece::G);
        let search = LineSearch {
            problem: self.problem,
            g: &it.g,
            v: &vmat,
            vertex,
            q: self.q,
            slope: self.lin[vertex] - dot(&it.w, self.lin),
        };
        let mut tau = search.minimize(lo, hi);
        for _ in 0..=MAX_HALVINGS {
            if tau == 0.0 {
                return Ok(false);
            }
            let w_new = step_weights(&it.w, vertex, tau, lo);
            if let Ok(next) = self.iterate(w_new) {
                // Exact line search already guarantees descent; the check
                // only guards against gross cancellation (same allowance
                // as the Newton steps).
                if next.objective > it.objective + 1e-12 * (1.0 + it.objective.abs()) {
                    return Ok(false);
                }
                *it = next;
                return Ok(true);
            }
            tau *= 0.5;
        }
        Ok(false)
    }
}

/// `∂²/∂W_k∂W_l = 2 tr(G⁻¹ Ḡ_k G⁻¹ Ḡ_l) = 2 ‖B_kᵀ B_l‖²_F` from whitened
/// blocks.
fn hessian(blocks: &[Vec<f64>], q: usize) -> Vec<f64> {
    let s = blocks.len();
    let mut hess = vec![0.0; s * s];
    for a in 0..s {
        for b in a..s {
            let mut acc = 0.0;
            for u in blocks[a].chunks_exact(q) {
                for v in blocks[b].chunks_exact(q) {
                    let c = dot(u, v);
                    acc += c * c;
                }
            }
            hess[a * s + b] = 2.0 * acc;
            hess[b * s + a] = 2.0 * acc;
        }
    }
    hess
}

/// Newton direction for `min gᵀd + ½ dᵀHd` subject to `Σ d = 0`, with
/// components at zero weight that would turn negative held fixed.
fn kkt_direction(hess: &[f64], grad: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let s = grad.len();
    let mut free: Vec<usize> = (0..s).collect();
    loop {
        let f = free.len();
        if f < 2 {
            return None;
        }
        let mut h = vec![0.0; f * f];
        for (i, &a) in free.iter().enumerate() {
            for (j, &b) in free.iter().enumerate() {
                h[i * f + j] = hess[a * s + b];
            }
        }
        let max_diag = (0..f).map(|i| h[i * f + i]).fold(0.0, f64::max);
        let mut ridge = 1e-12 * max_diag.max(1e-300);
        let chol = loop {
            let mut hr = h.clone();
            for i in 0..f {
                hr[i * f + i] += ridge;
            }
            match cholesky(&SymMatrix::from_row_major(f, &hr)) {
                Ok(c) => break c,
                Err(_) if ridge < max_diag => ridge *= 100.0,
                Err(_) => return None,
            }
        };
        let g_free: Vec<f64> = free.iter().map(|&a| grad[a]).collect();
        let hg = chol.solve_vec(&g_free);
        let h1 = chol.solve_vec(&vec![1.0; f]);
        let lambda = -hg.iter().sum::<f64>() / h1.iter().sum::<f64>();
        let dfree: Vec<f64> = hg.iter().zip(&h1).map(|(x, y)| -(x + lambda * y)).collect();

        let pinned: Vec<usize> = free
            .iter()
            .zip(&dfree)
            .filter(|(&a, &da)| w[a] == 0.0 && da < 0.0)
            .map(|(&a, _)| a)
            .collect();
        if pinned.is_empty() {
            let mut d = vec![0.0; s];
            for (&a, &da) in free.iter().zip(&dfree) {
                d[a] = da;
            }
            return Some(d);
        }
        free.retain(|a| !pinned.contains(a));
    }
}

/// `w ← (1-τ) w + τ e_vertex`. For an away step that hits the lower bound
/// `lo`, the vertex weight is set to exactly zero.
fn step_weights(w: &[f64], vertex: usize, tau: f64, lo: f64) -> Vec<f64> {
    let mut out: Vec<f64> = w.iter().map(|x| (1.0 - tau) * x).collect();
    out[vertex] += tau;
    if tau < 0.0 && tau <= lo {
        out[vertex] = 0.0;
    }
    for x in &mut out {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    out
}

/// One-dimensional restriction `ψ(τ) = -2 log det((1-τ)G + τV) + τ·slope`.
struct LineSearch<'a> {
    problem: &'a DesignProblem,
    g: &'a SymMatrix,
    v: &'a SymMatrix,
    vertex: usize,
    q: f64,
    slope: f64,
}

enum Deriv {
    Value(f64),
    /// `(1-τ)G + τV` is not positive definite.
    Infeasible,
}

impl LineSearch<'_> {
    fn derivative(&self, tau: f64) -> Deriv {
        let m = self.g.lin_comb(1.0 - tau, self.v, tau);
        let Ok(chol) = cholesky(&m) else {
            return Deriv::Infeasible;
        };
        let dlogdet = if (1.0 - tau).abs() > 1e-8 {
            // tr(M⁻¹(V − G)) = (tr(M⁻¹V) − q)/(1 − τ)
            let t_v = self.vertex_trace(&chol);
            (t_v - self.q) / (1.0 - tau)
        } else {
            let d = self.v.lin_comb(1.0, self.g, -1.0);
            trace_solve(&chol, &d)
        };
        Deriv::Value(-2.0 * dlogdet + self.slope)
    }

    fn vertex_trace(&self, chol: &Cholesky) -> f64 {
        let members = self.problem.orbits().members(self.vertex);
        let mut scratch = vec![0.0; chol.dim()];
        let sum: f64 = members
            .iter()
            .map(|&i| chol.inv_quad_sum(self.problem.g_factor(i), &mut scratch))
            .sum();
        sum / members.len() as f64
    }

    /// Exact minimizer of the convex restriction on `[lo, hi]`, where one
    /// end is 0. Returns a feasible step (possibly 0).
    fn minimize(&self, lo: f64, hi: f64) -> f64 {
        if hi > 0.0 {
            // Forward step: ψ'(0) < 0.
            if let Deriv::Value(d) = self.derivative(hi) {
                if d <= 0.0 {
                    return hi;
                }
            }
            let (mut a, mut b) = (0.0, hi);
            while b - a > LINE_SEARCH_WIDTH {
                let mid = 0.5 * (a + b);
                match self.derivative(mid) {
                    Deriv::Value(d) if d <= 0.0 => a = mid,
                    _ => b = mid,
                }
            }
            a
        } else {
            // Away step: ψ'(0) > 0, move towards negative τ.
            if let Deriv::Value(d) = self.derivative(lo) {
                if d >= 0.0 {
                    return lo;
                }
            }
            let (mut a, mut b) = (lo, 0.0);
            while b - a > LINE_SEARCH_WIDTH {
                let mid = 0.5 * (a + b);
                match self.derivative(mid) {
                    Deriv::Value(d) if d >= 0.0 => b = mid,
                    _ => a = mid,
                }
            }
            b
        }
    }
}

/// `tr(S⁻¹ D)` with `S` given by its factor.
fn trace_solve(chol: &Cholesky, d: &SymMatrix) -> f64 {
    let n = d.dim();
    let mut col = vec![0.0; n];
    let mut t = 0.0;
    for j in 0..n {
        for i in 0..n {
            col[i] = d.get(i, j);
        }
        chol.forward_in_place(&mut col);
        chol.backward_in_place(&mut col);
        t += col[j];
    }
    t
}
