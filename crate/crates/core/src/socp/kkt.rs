use nalgebra::DVector;
use serde::Serialize;

use super::SocpProblem;
use crate::error::{Error, Result};

/// Infinity-norm KKT residuals of a candidate primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// `||c - sum G_k^T z_k||_inf`.
    pub stationarity: f64,
    /// Largest amount by which some `G_k y + h_k` leaves its cone.
    pub primal_cone: f64,
    /// Same for the duals.
    pub dual_cone: f64,
    /// `max_k |s_k^T z_k|`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_cone)
            .max(self.dual_cone)
            .max(self.complementarity)
    }
}

fn cone_violation(u: &DVector<f64>) -> f64 {
    let n = u.len();
    let bound = u[n - 1];
    let rest = u.rows(0, n - 1).norm();
    (rest - bound).max(0.0)
}

pub fn kkt_residuals(problem: &SocpProblem, primal: &DVector<f64>, duals: &[DVector<f64>]) -> Result<KktResiduals> {
    problem.validate()?;
    if primal.len() != problem.n_vars {
        return Err(Error::Usage(format!(
            "primal has {} entries, problem has {} variables",
            primal.len(),
            problem.n_vars
        )));
    }
    if duals.len() != problem.cones.len() {
        return Err(Error::Usage(format!(
            "{} dual vectors for {} cones",
            duals.len(),
            problem.cones.len()
        )));
    }
    let mut grad = problem.objective.clone();
    let mut out = KktResiduals {
        stationarity: 0.0,
        primal_cone: 0.0,
        dual_cone: 0.0,
        complementarity: 0.0,
    };
    for (k, (cone, z)) in problem.cones.iter().zip(duals).enumerate() {
        if z.len() != cone.rows() {
            return Err(Error::Usage(format!(
                "dual {k} has {} entries, cone has {} rows",
                z.len(),
                cone.rows()
            )));
        }
        grad -= cone.matrix.transpose() * z;
        let s = cone.eval(primal);
        out.primal_cone = out.primal_cone.max(cone_violation(&s));
        out.dual_cone = out.dual_cone.max(cone_violation(z));
        out.complementarity = out.complementarity.max(s.dot(z).abs());
    }
    out.stationarity = grad.amax();
    Ok(out)
}
