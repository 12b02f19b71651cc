//! Central-difference gradient checking.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub worst_numeric: f64,
    pub worst_analytic: f64,
    pub checked: usize,
}

fn rel_error(numeric: f64, analytic: f64) -> f64 {
    (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` at every coordinate of `point`.
pub fn grad_check<F>(f: F, point: &[f64], analytic: &[f64], eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    let all: Vec<usize> = (0..point.len()).collect();
    grad_check_at(f, point, analytic, &all, eps)
}

/// Like [`grad_check`], restricted to the listed coordinates.
pub fn grad_check_at<F>(
    mut f: F,
    point: &[f64],
    analytic: &[f64],
    indices: &[usize],
    eps: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if point.len() != analytic.len() {
        return Err(Error::Schema(format!(
            "point has {} coordinates, gradient {}",
            point.len(),
            analytic.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Input(format!("eps must be positive, got {eps}")));
    }
    let mut p = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        worst_numeric: 0.0,
        worst_analytic: 0.0,
        checked: 0,
    };
    for &i in indices {
        let orig = p[i];
        p[i] = orig + eps;
        let plus = f(&p);
        p[i] = orig - eps;
        let minus = f(&p);
        p[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "objective not finite near coordinate {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let err = rel_error(numeric, analytic[i]);
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
            report.worst_numeric = numeric;
            report.worst_analytic = analytic[i];
        }
        report.checked += 1;
    }
    Ok(report)
}
