//! Central finite-difference gradient checker.

use serde::Serialize;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`,
/// so coordinates whose true gradient is ~0 are judged on absolute error.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compares `analytic` with `(f(θ+ε) − f(θ−ε)) / 2ε` for every coordinate of `theta`.
pub fn grad_check<L>(theta: &[f64], analytic: &[f64], mut loss: L, eps: f64, tolerance: f64) -> GradCheckReport
where
    L: FnMut(&[f64]) -> f64,
{
    assert_eq!(theta.len(), analytic.len(), "parameter and gradient lengths differ");
    let mut probe = theta.to_vec();
    let mut report = GradCheckReport {
        checked: theta.len(),
        max_rel_error: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        tolerance,
    };
    for i in 0..theta.len() {
        probe[i] = theta[i] + eps;
        let up = loss(&probe);
        probe[i] = theta[i] - eps;
        let down = loss(&probe);
        probe[i] = theta[i];
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || i == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic_at_worst = analytic[i];
            report.numeric_at_worst = numeric;
        }
    }
    report
}
