//! Log-log least-squares rate fits.

use serde::Serialize;

use crate::error::{Error, Result};

/// Errors at or below this are treated as exact agreement.
pub const EXACT_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fits ln(error) = slope·ln(ε) + intercept.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} points, need at least 3", points.len())));
    }
    if let Some(&(eps, e)) = points.iter().find(|p| p.1 <= EXACT_FLOOR) {
        return Err(Error::DegenerateFit(format!("error {e:e} at eps = {eps} is at the exact-agreement floor")));
    }
    if points.iter().any(|&(eps, e)| !(eps > 0.0) || !eps.is_finite() || !e.is_finite()) {
        return Err(Error::NonFinite("rate fit input".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all epsilon values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(RateFit { slope, intercept, r2 })
}
