use std::f64::consts::LN_2;

use super::regret::RegretCurve;
use crate::error::{Error, Result};
use crate::loops::NEWINFO_TOL;

/// Horizons below this are burn-in and stay out of the default fit.
pub const BURN_IN: usize = 100;

pub const MIN_FIT_POINTS: usize = 4;

/// Least-squares power law log R = intercept + exponent * log T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub fit_range: (usize, usize),
}

/// Fits the horizons in `fit_range` (inclusive).
pub fn fit_regret_exponent(curve: &RegretCurve, fit_range: (usize, usize)) -> Result<FitReport> {
    let points: Vec<(usize, f64)> = curve
        .horizons
        .iter()
        .zip(&curve.cumulative_regret)
        .filter(|(&t, _)| t >= fit_range.0 && t <= fit_range.1)
        .map(|(&t, &r)| (t, r))
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: points.len(),
        });
    }
    if let Some((t, r)) = points.iter().find(|(_, r)| !(*r > 0.0)) {
        return Err(Error::NonPositiveRegret(format!("R({t}) = {r}")));
    }
    let xs: Vec<f64> = points.iter().map(|(t, _)| (*t as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, r)| r.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - exponent * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(FitReport {
        exponent,
        intercept,
        r_squared,
        fit_range: (points[0].0, points[points.len() - 1].0),
    })
}

/// Default range: everything from the burn-in cutoff on.
pub fn fit_after_burn_in(curve: &RegretCurve) -> Result<FitReport> {
    fit_regret_exponent(curve, (BURN_IN, usize::MAX))
}

/// Per-step inputs of the information coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelErrorSample {
    pub error: f64,
    pub gain: f64,
    /// H at the most recent checkpoint minus H at this step.
    pub drop_since_checkpoint: f64,
}

/// Gains at or below this are treated as no information.
pub const GAIN_FLOOR: f64 = 1e-6;

/// Linearly interpolated quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Empirical Gamma(delta): the (1 - delta)-quantile of |error| / sqrt(gain)
/// over steps that gained information and are within ln 2 of their checkpoint.
pub fn information_coefficient(samples: &[ModelErrorSample], delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1], got {delta}")));
    }
    let mut ratios: Vec<f64> = samples
        .iter()
        .filter(|s| s.gain > GAIN_FLOOR && s.drop_since_checkpoint <= LN_2 + NEWINFO_TOL)
        .map(|s| s.error.abs() / s.gain.sqrt())
        .collect();
    if ratios.is_empty() {
        return Err(Error::NoEligibleSteps);
    }
    ratios.sort_by(f64::total_cmp);
    Ok(quantile(&ratios, 1.0 - delta))
}
