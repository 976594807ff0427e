//! Brute-force references for tests: exhaustive search over a weight grid on
//! tiny problems, and worst-case sampling over the covariance neighbourhood.
//!
//! Everything here recomputes from the model's `Z_i` with nalgebra rather
//! than going through the solver's cached factors.

use mmdesign::{DesignProblem, Estimator};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub const MAX_GRID_POINTS: usize = 6;
pub const MAX_GRID_DIVISIONS: usize = 100;
pub const MAX_SAMPLES: usize = 100_000;
pub const MAX_SAMPLE_RESPONSES: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("grid search supports at most {MAX_GRID_POINTS} points, got {0}")]
    TooManyPoints(usize),
    #[error("step must be 1/k for an integer 1 <= k <= {MAX_GRID_DIVISIONS}, got {0}")]
    BadStep(f64),
    #[error("every grid weight vector gives a singular information matrix")]
    NoFeasiblePoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub weights: Vec<f64>,
    pub loss: f64,
    pub evaluations: usize,
}

/// Loss at point weights `w`, built from scratch with nalgebra.
pub fn reference_loss(problem: &DesignProblem, w: &[f64]) -> Option<f64> {
    let model = problem.model();
    let v0 = to_dmatrix(model.v0().as_slice(), model.m());
    let plug_in = &v0 + DMatrix::identity(model.m(), model.m()) * model.alpha();
    neighbourhood_loss(problem, w, &plug_in)
}

/// `log det Cov(β̂)` of the estimator under true error covariance `v`, up to
/// the common `1/n` scaling: `-2 log det G(w) + log det Σ wᵢ Zᵢᵀ W V W Zᵢ`.
pub fn neighbourhood_loss(problem: &DesignProblem, w: &[f64], v: &DMatrix<f64>) -> Option<f64> {
    let model = problem.model();
    let m = model.m();
    let weight = estimator_weight(problem);
    let q = model.q();
    let mut g = DMatrix::zeros(q, q);
    let mut h = DMatrix::zeros(q, q);
    let middle = &weight * v * &weight;
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let z = model.build_z(problem.space().point(i));
        let z = DMatrix::from_row_slice(m, q, z.matrix().as_slice());
        g += z.transpose() * &weight * &z * wi;
        h += z.transpose() * &middle * &z * wi;
    }
    Some(-2.0 * log_det(g)? + log_det(h)?)
}

fn estimator_weight(problem: &DesignProblem) -> DMatrix<f64> {
    let model = problem.model();
    let m = model.m();
    match model.estimator() {
        Estimator::Glse => to_dmatrix(model.v0().as_slice(), m)
            .try_inverse()
            .expect("validated V0 is invertible"),
        Estimator::Olse => DMatrix::identity(m, m),
    }
}

fn to_dmatrix(row_major: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, row_major)
}

fn log_det(a: DMatrix<f64>) -> Option<f64> {
    let chol = a.cholesky()?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Exhaustive search over all weight vectors whose entries are multiples of
/// `step`. Works on point weights (orbit structure is ignored).
pub fn simplex_grid_search(problem: &DesignProblem, step: f64) -> Result<OracleResult, OracleError> {
    let n = problem.num_points();
    if n > MAX_GRID_POINTS {
        return Err(OracleError::TooManyPoints(n));
    }
    let k = (1.0 / step).round();
    if !(step > 0.0) || (k * step - 1.0).abs() > 1e-9 || k < 1.0 || k > MAX_GRID_DIVISIONS as f64 {
        return Err(OracleError::BadStep(step));
    }
    let k = k as usize;

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut evaluations = 0;
    let mut counts = vec![0usize; n];
    let mut w = vec![0.0; n];
    compositions(k, &mut counts, 0, &mut |c| {
        for (wi, &ci) in w.iter_mut().zip(c) {
            *wi = ci as f64 / k as f64;
        }
        evaluations += 1;
        if let Some(loss) = reference_loss(problem, &w) {
            if best.as_ref().map_or(true, |(b, _)| loss < *b) {
                best = Some((loss, c.to_vec()));
            }
        }
    });
    let (loss, counts) = best.ok_or(OracleError::NoFeasiblePoint)?;
    Ok(OracleResult {
        weights: counts.iter().map(|&c| c as f64 / k as f64).collect(),
        loss,
        evaluations,
    })
}

/// Calls `f` on every way to write `remaining` as an ordered sum of
/// `counts.len() - at` non-negative parts.
fn compositions(remaining: usize, counts: &mut [usize], at: usize, f: &mut impl FnMut(&[usize])) {
    if at + 1 == counts.len() {
        counts[at] = remaining;
        f(counts);
        return;
    }
    for c in 0..=remaining {
        counts[at] = c;
        compositions(remaining - c, counts, at + 1, f);
    }
}

/// Largest [`neighbourhood_loss`] over `samples` random covariances
/// `V = clip₊(V₀ + αU)` with `U` symmetric and `‖U‖₂ ≤ 1`. Samples that end
/// up outside the spectral ball after clipping are skipped. Deterministic for
/// a given `seed`.
pub fn neighbourhood_sample_max(problem: &DesignProblem, w: &[f64], samples: usize, seed: u64) -> f64 {
    let model = problem.model();
    let m = model.m();
    assert!(m <= MAX_SAMPLE_RESPONSES, "sampling supports m <= {MAX_SAMPLE_RESPONSES}");
    assert!(samples <= MAX_SAMPLES, "at most {MAX_SAMPLES} samples");
    let v0 = to_dmatrix(model.v0().as_slice(), m);
    let alpha = model.alpha();
    (0..samples)
        .into_par_iter()
        .filter_map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let v = clip_psd(&v0 + random_unit_ball(&mut rng, m) * alpha);
            let dist = SymmetricEigen::new(&v - &v0)
                .eigenvalues
                .iter()
                .fold(0.0f64, |a, e| a.max(e.abs()));
            if dist > alpha * (1.0 + 1e-12) + 1e-15 {
                return None;
            }
            neighbourhood_loss(problem, w, &v)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

/// Symmetric matrix with eigenvalues uniform on [−1, 1] in a random
/// orthonormal basis.
fn random_unit_ball(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let x = rng.gen_range(-1.0..1.0);
            a[(i, j)] = x;
            a[(j, i)] = x;
        }
    }
    let basis = SymmetricEigen::new(a).eigenvectors;
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |_, _| rng.gen_range(-1.0..=1.0)));
    &basis * lambda * basis.transpose()
}

fn clip_psd(v: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(v);
    let clipped = eig.eigenvalues.map(|e| e.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}
