use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest usable points for a rate fit.
pub const MIN_FIT_POINTS: usize = 5;
/// Spans at or below this multiple of machine epsilon (times the reference
/// scale) are treated as rounding noise.
pub const NOISE_FLOOR_EPS: f64 = 1e2 * f64::EPSILON;

/// Geometric rate fitted to a span sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// `exp(slope)` of the least-squares line through `(t, ln span_t)`.
    pub rate: f64,
    /// `span_last / span_{last - window}` over the usable points.
    pub window_rate: Option<f64>,
    pub fit_r2: f64,
    /// Indices `[first, last]` of the points used.
    pub first: usize,
    pub last: usize,
}

/// Fits a geometric rate to `spans`, excluding trailing values at or below
/// `100 eps * spans[0]`.
pub fn estimate_rate(spans: &[f64], window: usize) -> Result<RateEstimate> {
    let reference = spans.first().copied().unwrap_or(0.0);
    estimate_rate_with_floor(spans, window, NOISE_FLOOR_EPS * reference)
}

/// Like [`estimate_rate`] with an explicit absolute noise floor. The fit
/// stops at the first value at or below `floor`.
pub fn estimate_rate_with_floor(spans: &[f64], window: usize, floor: f64) -> Result<RateEstimate> {
    let usable = spans
        .iter()
        .take_while(|&&s| s > floor && s > 0.0 && s.is_finite())
        .count();
    if usable < MIN_FIT_POINTS {
        return Err(Error::Inconclusive(format!(
            "{usable} usable span values, need at least {MIN_FIT_POINTS}"
        )));
    }
    let ys: Vec<f64> = spans[..usable].iter().map(|s| s.ln()).collect();
    let n = usable as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in ys.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (y - y_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    let ss_res: f64 = ys
        .iter()
        .enumerate()
        .map(|(t, y)| (y - (y_mean + slope * (t as f64 - t_mean))).powi(2))
        .sum();
    // scale-aware test for a flat sequence
    let fit_r2 = if ss_tot <= 1e-24 * (1.0 + y_mean * y_mean) * n {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    let last = usable - 1;
    let window_rate = (window > 0 && last >= window).then(|| spans[last] / spans[last - window]);
    Ok(RateEstimate {
        rate: slope.exp(),
        window_rate,
        fit_r2,
        first: 0,
        last,
    })
}
