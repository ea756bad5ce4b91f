//! Order-of-convergence fitting for refinement studies: errors against mesh
//! size or step size on log-log axes, slope by least squares.

use crate::config::{CliError, CliResult};

/// Least-squares slope of log10(y) against log10(x). All inputs must be
/// positive; a degenerate abscissa (all x equal) is rejected.
pub fn fit_log_slope(x: &[f64], y: &[f64]) -> CliResult<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(CliError::Runtime(format!(
            "slope fit needs at least two matching points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(CliError::Runtime(
            "slope fit needs strictly positive finite errors and mesh parameters".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return Err(CliError::Runtime("slope fit abscissa is degenerate".into()));
    }
    Ok(sxy / sxx)
}
