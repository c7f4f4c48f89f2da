//! Dense least-squares kernels: Lawson–Hanson NNLS, minimum-norm least
//! squares and SVD condition diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParticipationMatrix;

/// Relative threshold on the dual vector for NNLS termination.
pub const NNLS_DUAL_TOL: f64 = 1e-12;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// `A x ≈ b`. For loss extraction `A` is the participation matrix and `b`
/// holds the inverse TLS quality factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::mismatch("right-hand side", a.nrows(), b.len()));
        }
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidInput("system matrix has no rows or columns".into()));
        }
        Ok(LinearSystem { a, b })
    }

    pub fn from_participation(p: &ParticipationMatrix, inv_q: &[f64]) -> Result<Self> {
        Self::new(p.to_matrix(), DVector::from_column_slice(inv_q))
    }

    fn check_finite(&self) -> Result<()> {
        if self.a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("system matrix".into()));
        }
        if self.b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side".into()));
        }
        Ok(())
    }

    pub fn residual_norm(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    /// Number of variables moved into the passive set.
    pub passes: usize,
}

/// Minimises `‖Ax − b‖₂` subject to `x ≥ 0`.
///
/// Classic active-set method: variables enter the passive (free) set one at a
/// time, choosing the largest dual component `wⱼ = [Aᵀ(b − Ax)]ⱼ` (lowest
/// index on ties); an interpolation step restores feasibility whenever the
/// unconstrained solve on the passive set produces a non-positive entry.
/// Variables outside the passive set are exactly zero.
pub fn nnls_solve(system: &LinearSystem) -> Result<NnlsSolution> {
    system.check_finite()?;
    let a = &system.a;
    let b = &system.b;
    let n = a.ncols();
    if a.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroMatrix);
    }

    let atb_norm = (a.transpose() * b).norm();
    let noise_floor = 4.0 * f64::EPSILON * a.norm() * b.norm();
    let tol = (NNLS_DUAL_TOL * atb_norm).max(noise_floor);
    let max_passes = 3 * n;

    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let mut passes = 0;

    loop {
        let w = a.transpose() * (b - a * &x);
        let mut candidates: Vec<usize> = (0..n).filter(|&j| !passive[j] && w[j] > tol).collect();
        candidates.sort_by(|&i, &j| w[j].total_cmp(&w[i]).then(i.cmp(&j)));

        // A candidate whose own coefficient comes out non-positive would
        // leave immediately; skip it as Lawson–Hanson do.
        let mut entering = None;
        for j in candidates {
            passive[j] = true;
            let z = solve_passive(a, b, &passive)?;
            if z[j] > 0.0 {
                entering = Some(z);
                break;
            }
            passive[j] = false;
        }
        let Some(mut z) = entering else { break };

        passes += 1;
        if passes > max_passes {
            let max_dual = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            return Err(Error::NotConverged {
                iterations: passes - 1,
                max_dual,
                passive: (0..n).filter(|&j| passive[j]).collect(),
            });
        }

        loop {
            if (0..n).filter(|&j| passive[j]).all(|j| z[j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut leaving = usize::MAX;
            for j in (0..n).filter(|&j| passive[j] && z[j] <= 0.0) {
                let step = x[j] / (x[j] - z[j]);
                if step < alpha {
                    alpha = step;
                    leaving = j;
                }
            }
            for j in 0..n {
                if passive[j] {
                    x[j] += alpha * (z[j] - x[j]);
                }
            }
            x[leaving] = 0.0;
            for j in 0..n {
                if passive[j] && x[j] <= 0.0 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            z = solve_passive(a, b, &passive)?;
        }
    }

    let residual_norm = system.residual_norm(&x);
    Ok(NnlsSolution { x, residual_norm, passes })
}

/// Unconstrained least squares on the passive columns; zeros elsewhere.
///
/// Columns are equilibrated before the SVD solve so that regions with very
/// different participation scales (interfaces near 1e-3, substrate near 1)
/// are resolved to comparable relative accuracy.
fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> Result<DVector<f64>> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let mut z = DVector::zeros(passive.len());
    if idx.is_empty() {
        return Ok(z);
    }
    let mut sub = a.select_columns(&idx);
    let mut scales = Vec::with_capacity(idx.len());
    for mut col in sub.column_iter_mut() {
        let norm = col.norm();
        let s = if norm > 0.0 { norm } else { 1.0 };
        col /= s;
        scales.push(s);
    }
    let y = svd_min_norm(sub, b)?;
    for (k, &j) in idx.iter().enumerate() {
        z[j] = y[k] / scales[k];
    }
    Ok(z)
}

fn svd_min_norm(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    if s_max == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let eps = s_max * (m.max(n) as f64) * f64::EPSILON;
    svd.solve(b, eps).map_err(|e| Error::InvalidInput(format!("svd solve: {e}")))
}

/// Minimum-norm least-squares solution via SVD.
pub fn least_squares(system: &LinearSystem) -> Result<DVector<f64>> {
    system.check_finite()?;
    svd_min_norm(system.a.clone(), &system.b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// 2-norm condition number; infinite for rank-deficient matrices.
    #[serde(with = "crate::io::float_or_inf")]
    pub kappa: f64,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub rank_estimate: usize,
}

pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().cloned().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Condition report of an arbitrary dense matrix.
///
/// A single-row matrix has one singular value and therefore `kappa = 1`.
pub fn condition_report(a: &DMatrix<f64>) -> Result<ConditionReport> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix".into()));
    }
    if a.is_empty() || a.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let singular_values = singular_values(a);
    let s_max = singular_values[0];
    let s_min = *singular_values.last().unwrap();
    let kappa = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    let rank_estimate = singular_values.iter().filter(|&&s| s > RANK_TOL * s_max).count();
    Ok(ConditionReport {
        kappa,
        singular_values,
        rank_estimate,
    })
}

pub fn condition_number(p: &ParticipationMatrix) -> Result<ConditionReport> {
    condition_report(&p.to_matrix())
}
