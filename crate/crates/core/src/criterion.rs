//! Minimax D-criterion on a discrete design space.
//!
//! With the plug-in worst case `V₀ + αI` the loss of a weight vector `w` is
//!
//! ```text
//! loss(w) = -2 log det G(w) + log det H(w),   G(w) = Σ w_i G_i,  H(w) = Σ w_i H_i
//! ```
//!
//! | estimator | `G_i`            | `H_i`                          |
//! |-----------|------------------|--------------------------------|
//! | GLSE      | `Zᵀ V₀⁻¹ Z`      | `Zᵀ V₀⁻¹ (V₀ + αI) V₀⁻¹ Z`     |
//! | OLSE      | `Zᵀ Z`           | `Zᵀ (V₀ + αI) Z`               |
//!
//! Both pieces `g = -2 log det G` and `h = -log det H` are convex, so the
//! loss is the DC function `g - h`.
//!
//! Every `G_i` and `H_i` has rank at most `m`, so the problem caches the
//! `q × m` factors `F_i = Zᵢᵀ L` (with `L Lᵀ` the m×m weight matrix) instead
//! of full `q × q` matrices; traces become `tr(G⁻¹ G_i) = ‖L_G⁻¹ F_i‖²_F`.

use rayon::prelude::*;

use crate::linalg::{cholesky, inverse_pd, Cholesky, LinalgError, SymMatrix};
use crate::model::{Estimator, ResponseModel};
use crate::space::{DesignSpace, OrbitStructure};

/// Weights below this are skipped when aggregating information matrices.
pub const AGGREGATION_FLOOR: f64 = 1e-16;

/// `G_i` and `H_i` for a single design point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatrices {
    pub index: usize,
    pub g: SymMatrix,
    pub h: SymMatrix,
}

/// The two m×m weight matrices sandwiched between `Zᵀ` and `Z`.
fn weight_matrices(model: &ResponseModel) -> Result<(SymMatrix, SymMatrix), LinalgError> {
    let m = model.m();
    let inflated = model
        .v0()
        .lin_comb(1.0, &SymMatrix::identity(m), model.alpha());
    Ok(match model.estimator() {
        Estimator::Glse => {
            let v0_inv = inverse_pd(model.v0())?;
            let h = if model.alpha() == 0.0 {
                v0_inv.clone()
            } else {
                inflated.congruence(&v0_inv.to_matrix())
            };
            (v0_inv, h)
        }
        Estimator::Olse => (SymMatrix::identity(m), inflated),
    })
}

/// A model evaluated on a design space, with the orbit structure that ties
/// weights. Optimization variables are orbit weights `W_k` (summing to one);
/// each member of orbit `k` carries `W_k / |orbit k|`.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    model: ResponseModel,
    space: DesignSpace,
    orbits: OrbitStructure,
    q: usize,
    m: usize,
    g_factors: Vec<f64>,
    h_factors: Vec<f64>,
}

impl DesignProblem {
    pub fn new(
        model: ResponseModel,
        space: DesignSpace,
        orbits: OrbitStructure,
    ) -> Result<Self, LinalgError> {
        assert_eq!(model.p(), space.dim(), "model and space disagree on p");
        assert_eq!(orbits.num_points(), space.len(), "orbits do not match the space");
        let (wg, wh) = weight_matrices(&model)?;
        let lg = cholesky(&wg)?;
        let lh = cholesky(&wh)?;
        let (q, m) = (model.q(), model.m());
        let stride = q * m;
        let mut g_factors = vec![0.0; space.len() * stride];
        let mut h_factors = vec![0.0; space.len() * stride];
        g_factors
            .par_chunks_mut(stride)
            .zip(h_factors.par_chunks_mut(stride))
            .enumerate()
            .for_each(|(i, (gf, hf))| {
                let z = model.build_z(space.point(i));
                fill_factor(z.matrix(), &lg, gf);
                fill_factor(z.matrix(), &lh, hf);
            });
        Ok(Self {
            model,
            space,
            orbits,
            q,
            m,
            g_factors,
            h_factors,
        })
    }

    /// Problem with every point its own variable.
    pub fn unreduced(model: ResponseModel, space: DesignSpace) -> Result<Self, LinalgError> {
        let orbits = OrbitStructure::trivial(space.len());
        Self::new(model, space, orbits)
    }

    pub fn model(&self) -> &ResponseModel {
        &self.model
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn orbits(&self) -> &OrbitStructure {
        &self.orbits
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn num_points(&self) -> usize {
        self.space.len()
    }

    pub fn num_vars(&self) -> usize {
        self.orbits.len()
    }

    #[inline]
    pub(crate) fn g_factor(&self, i: usize) -> &[f64] {
        let s = self.q * self.m;
        &self.g_factors[i * s..(i + 1) * s]
    }

    #[inline]
    pub(crate) fn h_factor(&self, i: usize) -> &[f64] {
        let s = self.q * self.m;
        &self.h_factors[i * s..(i + 1) * s]
    }

    /// `G_i` and `H_i` formed directly as `Zᵀ W Z`.
    pub fn point_matrices(&self, i: usize) -> PointMatrices {
        let (wg, wh) = weight_matrices(&self.model).expect("validated model");
        let z = self.model.build_z(self.space.point(i));
        PointMatrices {
            index: i,
            g: wg.congruence(z.matrix()),
            h: wh.congruence(z.matrix()),
        }
    }

    pub fn uniform_vars(&self) -> Vec<f64> {
        let k = self.num_vars();
        vec![1.0 / k as f64; k]
    }

    pub fn expand(&self, var_weights: &[f64]) -> Vec<f64> {
        self.orbits.expand(var_weights)
    }

    /// `Σ w_i G_i` (or `H_i`) over point weights.
    pub fn aggregate(&self, w: &[f64], which: Piece) -> SymMatrix {
        assert_eq!(w.len(), self.num_points());
        let mut out = SymMatrix::zeros(self.q);
        for (i, &wi) in w.iter().enumerate() {
            if wi >= AGGREGATION_FLOOR {
                out.add_gram(wi, self.factor(i, which));
            }
        }
        out
    }

    /// Orbit-averaged matrix `Ḡ_k = |o|⁻¹ Σ_{i∈o} G_i`.
    pub fn var_matrix(&self, k: usize, which: Piece) -> SymMatrix {
        let members = self.orbits.members(k);
        let mut out = SymMatrix::zeros(self.q);
        let share = 1.0 / members.len() as f64;
        for &i in members {
            out.add_gram(share, self.factor(i, which));
        }
        out
    }

    /// `Σ_k W_k Ḡ_k` over orbit weights.
    pub fn aggregate_vars(&self, var_weights: &[f64], which: Piece) -> SymMatrix {
        assert_eq!(var_weights.len(), self.num_vars());
        let mut out = SymMatrix::zeros(self.q);
        for (k, &wk) in var_weights.iter().enumerate() {
            if wk < AGGREGATION_FLOOR {
                continue;
            }
            let members = self.orbits.members(k);
            let share = wk / members.len() as f64;
            for &i in members {
                out.add_gram(share, self.factor(i, which));
            }
        }
        out
    }

    fn factor(&self, i: usize, which: Piece) -> &[f64] {
        match which {
            Piece::G => self.g_factor(i),
            Piece::H => self.h_factor(i),
        }
    }

    /// `tr(S⁻¹ X_i)` for every point, where `X_i` is `G_i` or `H_i` and `S`
    /// is given by its Cholesky factor.
    pub fn point_traces(&self, chol: &Cholesky, which: Piece) -> Vec<f64> {
        (0..self.num_points())
            .into_par_iter()
            .map_init(
                || vec![0.0; self.q],
                |scratch, i| chol.inv_quad_sum(self.factor(i, which), scratch),
            )
            .collect()
    }

    /// Orbit means of [`Self::point_traces`].
    pub fn var_traces(&self, chol: &Cholesky, which: Piece) -> Vec<f64> {
        if self.num_vars() == self.num_points() {
            return self.point_traces(chol, which);
        }
        (0..self.num_vars())
            .into_par_iter()
            .map_init(
                || vec![0.0; self.q],
                |scratch, k| {
                    let members = self.orbits.members(k);
                    let sum: f64 = members
                        .iter()
                        .map(|&i| chol.inv_quad_sum(self.factor(i, which), scratch))
                        .sum();
                    sum / members.len() as f64
                },
            )
            .collect()
    }

    /// Criterion state at point weights `w` (length N).
    pub fn state(&self, w: &[f64]) -> Result<CriterionState<'_>, LinalgError> {
        let g_w = self.aggregate(w, Piece::G);
        let h_w = self.aggregate(w, Piece::H);
        CriterionState::from_matrices(self, w.to_vec(), g_w, h_w)
    }

    /// Criterion state at orbit weights.
    pub fn state_vars(&self, var_weights: &[f64]) -> Result<CriterionState<'_>, LinalgError> {
        self.state(&self.expand(var_weights))
    }

    pub fn loss(&self, w: &[f64]) -> Result<f64, LinalgError> {
        Ok(self.state(w)?.loss())
    }
}

/// Selects the `G` or `H` family of per-point matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Piece {
    G,
    H,
}

fn fill_factor(z: &crate::linalg::Matrix, l: &Cholesky, out: &mut [f64]) {
    let (m, q) = (z.rows(), z.cols());
    // column c of Zᵀ L is Σ_j Z[j, :] L[j, c]
    for c in 0..m {
        let col = &mut out[c * q..(c + 1) * q];
        col.fill(0.0);
        for j in c..m {
            let ljc = l.get(j, c);
            if ljc == 0.0 {
                continue;
            }
            for (dst, &zv) in col.iter_mut().zip(z.row(j)) {
                *dst += zv * ljc;
            }
        }
    }
}

/// `G(w)`, `H(w)` and their factorizations at a fixed weight vector.
#[derive(Debug, Clone)]
pub struct CriterionState<'a> {
    problem: &'a DesignProblem,
    weights: Vec<f64>,
    g_w: SymMatrix,
    h_w: SymMatrix,
    g_chol: Cholesky,
    h_chol: Cholesky,
}

impl<'a> CriterionState<'a> {
    fn from_matrices(
        problem: &'a DesignProblem,
        weights: Vec<f64>,
        g_w: SymMatrix,
        h_w: SymMatrix,
    ) -> Result<Self, LinalgError> {
        let g_chol = cholesky(&g_w)?;
        let h_chol = cholesky(&h_w)?;
        Ok(Self {
            problem,
            weights,
            g_w,
            h_w,
            g_chol,
            h_chol,
        })
    }

    pub fn problem(&self) -> &'a DesignProblem {
        self.problem
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn g_matrix(&self) -> &SymMatrix {
        &self.g_w
    }

    pub fn h_matrix(&self) -> &SymMatrix {
        &self.h_w
    }

    pub fn g_cholesky(&self) -> &Cholesky {
        &self.g_chol
    }

    pub fn h_cholesky(&self) -> &Cholesky {
        &self.h_chol
    }

    /// `g(w) = -2 log det G(w)`.
    pub fn g_value(&self) -> f64 {
        -2.0 * self.g_chol.log_det()
    }

    /// `h(w) = -log det H(w)`.
    pub fn h_value(&self) -> f64 {
        -self.h_chol.log_det()
    }

    /// `g(w) - h(w)`.
    pub fn loss(&self) -> f64 {
        self.g_value() - self.h_value()
    }

    /// `∂g/∂w_i = -2 tr(G⁻¹ G_i)` for every point.
    pub fn grad_g(&self) -> Vec<f64> {
        self.problem
            .point_traces(&self.g_chol, Piece::G)
            .into_iter()
            .map(|t| -2.0 * t)
            .collect()
    }

    /// `∂h/∂w_i = -tr(H⁻¹ H_i)` for every point.
    pub fn grad_h(&self) -> Vec<f64> {
        self.problem
            .point_traces(&self.h_chol, Piece::H)
            .into_iter()
            .map(|t| -t)
            .collect()
    }

    /// Gradient of the convex majorizer `g(w) - v(w, w⁰)`, where `v` is the
    /// linearization of `h` at the anchor whose gradient is given.
    pub fn surrogate_grad(&self, anchor_grad_h: &[f64]) -> Vec<f64> {
        surrogate_grad(&self.grad_g(), anchor_grad_h)
    }

    /// Orbit-level gradients: derivative with respect to an orbit weight is
    /// the mean over its members.
    pub fn grad_g_vars(&self) -> Vec<f64> {
        self.problem.orbits().mean(&self.grad_g())
    }

    pub fn grad_h_vars(&self) -> Vec<f64> {
        self.problem.orbits().mean(&self.grad_h())
    }
}

pub fn surrogate_grad(grad_g: &[f64], anchor_grad_h: &[f64]) -> Vec<f64> {
    assert_eq!(grad_g.len(), anchor_grad_h.len());
    grad_g.iter().zip(anchor_grad_h).map(|(g, h)| g - h).collect()
}
