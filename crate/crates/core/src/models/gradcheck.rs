use super::Objective;
use crate::datagen::Example;
use crate::error::{Error, Result};
use crate::numkit::PrngStream;

/// Models with more parameters than this are checked on a random subset.
const FULL_CHECK_LIMIT: usize = 512;
const SUBSET_SIZE: usize = 64;
/// Denominator floor so near-zero gradients are judged absolutely.
const RELATIVE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiffReport {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_coordinate: usize,
    pub coordinates_checked: usize,
}

/// Compare the analytic gradient against central differences
/// `(f(w + eps e_i) - f(w - eps e_i)) / (2 eps)`.
pub fn finite_diff_check<O: Objective + ?Sized>(
    objective: &O,
    params: &[f64],
    batch: &[&Example],
    epsilon: f64,
) -> Result<FiniteDiffReport> {
    let mut analytic = vec![0.0; params.len()];
    objective.gradient(params, batch, &mut analytic)?;
    finite_diff_against(objective, params, batch, epsilon, &analytic)
}

/// As [`finite_diff_check`] but against a caller-supplied gradient, which
/// lets tests confirm the detector catches a corrupted one.
pub fn finite_diff_against<O: Objective + ?Sized>(
    objective: &O,
    params: &[f64],
    batch: &[&Example],
    epsilon: f64,
    analytic: &[f64],
) -> Result<FiniteDiffReport> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::config("finite-difference epsilon must be positive"));
    }
    let n = params.len();
    let coords: Vec<usize> = if n <= FULL_CHECK_LIMIT {
        (0..n).collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        PrngStream::new(0x6C4D, n as u64).shuffle(&mut all);
        all.truncate(SUBSET_SIZE);
        all.sort_unstable();
        all
    };

    let mut probe = params.to_vec();
    let mut report = FiniteDiffReport {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        worst_coordinate: 0,
        coordinates_checked: coords.len(),
    };
    for &i in &coords {
        let orig = probe[i];
        probe[i] = orig + epsilon;
        let up = objective.loss(&probe, batch)?;
        probe[i] = orig - epsilon;
        let down = objective.loss(&probe, batch)?;
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let abs = (analytic[i] - numeric).abs();
        let rel = abs / analytic[i].abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        report.max_absolute_error = report.max_absolute_error.max(abs);
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_coordinate = i;
        }
    }
    Ok(report)
}
