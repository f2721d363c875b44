//! Dense second-order cone programs in affine-cone form:
//!
//! ```text
//! minimize    c^T y
//! subject to  G_k y + h_k  in  SOC(rows_k),   k = 1..K
//! ```
//!
//! where `u in SOC(n)` means `u[n-1] >= ||u[0..n-1]||`, i.e. the scalar
//! bound is the last coordinate. A single-row cone is the half-line `u >= 0`.

mod cone;
mod dump;
mod kkt;
mod solver;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dump::{parse_dump, write_dump};
pub use kkt::{kkt_residuals, KktResiduals};
pub use solver::solve;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

/// `matrix * y + offset` constrained to the second-order cone.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineCone {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineCone {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Value of the affine map at `y`.
    pub fn eval(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.matrix * y + &self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocpProblem {
    pub n_vars: usize,
    pub objective: DVector<f64>,
    pub cones: Vec<AffineCone>,
}

impl SocpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            n_vars: objective.len(),
            objective: DVector::from_vec(objective),
            cones: Vec::new(),
        }
    }

    /// Appends the cone `rows * y + offset in SOC`. `rows` is row-major.
    pub fn add_cone(&mut self, rows: &[Vec<f64>], offset: Vec<f64>) -> Result<()> {
        if rows.is_empty() || rows.len() != offset.len() {
            return Err(Error::Usage(format!(
                "cone needs >= 1 row and one offset per row (got {} rows, {} offsets)",
                rows.len(),
                offset.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != self.n_vars) {
            return Err(Error::Usage(format!(
                "cone row has {} columns, problem has {} variables",
                bad.len(),
                self.n_vars
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        self.cones.push(AffineCone {
            matrix: DMatrix::from_row_slice(rows.len(), self.n_vars, &flat),
            offset: DVector::from_vec(offset),
        });
        Ok(())
    }

    /// `y[var] >= bound` as a one-row cone.
    pub fn add_lower_bound(&mut self, var: usize, bound: f64) -> Result<()> {
        if var >= self.n_vars {
            return Err(Error::Usage(format!("variable {var} out of range")));
        }
        let mut row = vec![0.0; self.n_vars];
        row[var] = 1.0;
        self.add_cone(&[row], vec![-bound])
    }

    pub fn total_rows(&self) -> usize {
        self.cones.iter().map(AffineCone::rows).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vars == 0 {
            return Err(Error::Usage("problem has no variables".into()));
        }
        if self.objective.len() != self.n_vars {
            return Err(Error::Usage("objective length differs from n_vars".into()));
        }
        for (k, c) in self.cones.iter().enumerate() {
            if c.rows() == 0 || c.matrix.ncols() != self.n_vars || c.offset.len() != c.rows() {
                return Err(Error::Usage(format!("cone {k} is malformed")));
            }
            if c.matrix.iter().chain(c.offset.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Usage(format!("cone {k} has non-finite data")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::Usage("objective has non-finite data".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// `||G y + h - s|| / max(1, ||h||)`.
    pub primal_res: f64,
    /// `||c - G^T z|| / max(1, ||c||)`.
    pub dual_res: f64,
    /// Duality gap relative to `1 + |objective|`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocpSolution {
    pub status: SolveStatus,
    /// Optimal point; for `Unbounded`, a normalized improving ray.
    pub primal: DVector<f64>,
    /// One dual vector per cone, in the cone's own row order. For
    /// `Infeasible` these form a certificate: `sum G_k^T z_k = 0`,
    /// `sum h_k^T z_k = -1`.
    pub duals: Vec<DVector<f64>>,
    pub objective_value: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl SocpSolution {
    /// Dual objective `-sum h_k^T z_k`.
    pub fn dual_objective(&self, problem: &SocpProblem) -> f64 {
        -problem
            .cones
            .iter()
            .zip(&self.duals)
            .map(|(c, z)| c.offset.dot(z))
            .sum::<f64>()
    }
}

#[cfg(test)]
mod tests;
