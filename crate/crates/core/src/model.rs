//! Multi-response linear model `y_i = Z_iᵀβ + ε_i` with block-diagonal `Z_i`.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::BasisVector;
use crate::linalg::{cholesky, Matrix, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Generalized least squares with working covariance `V₀`.
    Glse,
    /// Ordinary least squares.
    Olse,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Glse => "glse",
            Estimator::Olse => "olse",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model needs at least one response block")]
    NoBlocks,
    #[error("response {response}: basis is empty")]
    EmptyBlock { response: usize },
    #[error("response {response}: variable x{var} exceeds p = {p}")]
    VariableOutOfRange { response: usize, var: usize, p: usize },
    #[error("V0 is {dim}x{dim} but there are {blocks} response blocks")]
    CovarianceShape { dim: usize, blocks: usize },
    #[error("V0 is not positive definite")]
    CovarianceNotPd,
    #[error("alpha must be a finite number >= 0, got {0}")]
    NegativeAlpha(f64),
    #[error("p must be at least 1")]
    NoVariables,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseModel {
    p: usize,
    blocks: Vec<BasisVector>,
    v0: SymMatrix,
    alpha: f64,
    estimator: Estimator,
}

impl ResponseModel {
    /// Builds and validates a model.
    pub fn new(
        p: usize,
        blocks: Vec<BasisVector>,
        v0: SymMatrix,
        alpha: f64,
        estimator: Estimator,
    ) -> Result<Self, ModelError> {
        let m = Self {
            p,
            blocks,
            v0,
            alpha,
            estimator,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.p == 0 {
            return Err(ModelError::NoVariables);
        }
        if self.blocks.is_empty() {
            return Err(ModelError::NoBlocks);
        }
        for (j, b) in self.blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(ModelError::EmptyBlock { response: j + 1 });
            }
            if b.max_var() > self.p {
                return Err(ModelError::VariableOutOfRange {
                    response: j + 1,
                    var: b.max_var(),
                    p: self.p,
                });
            }
        }
        if self.v0.dim() != self.blocks.len() {
            return Err(ModelError::CovarianceShape {
                dim: self.v0.dim(),
                blocks: self.blocks.len(),
            });
        }
        if cholesky(&self.v0).is_err() {
            return Err(ModelError::CovarianceNotPd);
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(ModelError::NegativeAlpha(self.alpha));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn q(&self) -> usize {
        self.blocks.iter().map(BasisVector::len).sum()
    }

    pub fn blocks(&self) -> &[BasisVector] {
        &self.blocks
    }

    pub fn v0(&self) -> &SymMatrix {
        &self.v0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self, ModelError> {
        Self::new(self.p, self.blocks.clone(), self.v0.clone(), alpha, self.estimator)
    }

    pub fn with_estimator(&self, estimator: Estimator) -> Self {
        Self {
            estimator,
            ..self.clone()
        }
    }

    pub fn with_v0(&self, v0: SymMatrix) -> Result<Self, ModelError> {
        Self::new(self.p, self.blocks.clone(), v0, self.alpha, self.estimator)
    }

    /// Column range of block `j` in the parameter vector (block-major order).
    pub fn block_range(&self, j: usize) -> Range<usize> {
        let start: usize = self.blocks[..j].iter().map(BasisVector::len).sum();
        start..start + self.blocks[j].len()
    }

    pub fn build_z(&self, point: &[f64]) -> ZMatrix {
        assert_eq!(point.len(), self.p, "point has wrong dimension");
        let (m, q) = (self.m(), self.q());
        let mut z = Matrix::zeros(m, q);
        let mut row = Vec::new();
        for (j, b) in self.blocks.iter().enumerate() {
            row.resize(b.len(), 0.0);
            b.eval_into(point, &mut row);
            for (c, &v) in self.block_range(j).zip(&row) {
                z.set(j, c, v);
            }
        }
        ZMatrix(z)
    }
}

/// `m × q` matrix whose row `j` carries `f_jᵀ(x)` in block `j`'s columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ZMatrix(pub Matrix);

impl ZMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.0.row(j)
    }
}
