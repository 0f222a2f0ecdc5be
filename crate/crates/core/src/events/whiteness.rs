use super::EventError;

/// Outcome of the turning-point whiteness test.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitenessReport {
    pub n: usize,
    pub turning_points: usize,
    pub z_score: f64,
    pub pass: bool,
}

/// Standard normal quantile `Φ⁻¹(p)` by bisection on `Φ(z) = ½·erfc(−z/√2)`.
pub fn normal_quantile(p: f64) -> Result<f64, EventError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EventError::InvalidArgument("quantile level must lie in (0, 1)"));
    }
    let cdf = |z: f64| 0.5 * libm::erfc(-z / core::f64::consts::SQRT_2);
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Counts interior local extrema `T` of `series` and compares
/// `z = (T − 2(n−2)/3) / sqrt((16n−29)/90)` with the two-sided normal
/// critical value at level `alpha`. Equal neighbours do not form a turning
/// point.
pub fn turning_point_test(series: &[f64], alpha: f64) -> Result<WhitenessReport, EventError> {
    let n = series.len();
    if n < 20 {
        return Err(EventError::InsufficientSamples { needed: 20, got: n });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EventError::InvalidArgument("alpha must lie in (0, 1)"));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(EventError::InvalidArgument("series must be finite"));
    }
    let turning_points = series
        .windows(3)
        .filter(|w| (w[1] > w[0] && w[1] > w[2]) || (w[1] < w[0] && w[1] < w[2]))
        .count();
    let nf = n as f64;
    let mean = 2.0 * (nf - 2.0) / 3.0;
    let sd = libm::sqrt((16.0 * nf - 29.0) / 90.0);
    let z_score = (turning_points as f64 - mean) / sd;
    let crit = normal_quantile(1.0 - alpha / 2.0)?;
    Ok(WhitenessReport {
        n,
        turning_points,
        z_score,
        pass: z_score.abs() <= crit,
    })
}
