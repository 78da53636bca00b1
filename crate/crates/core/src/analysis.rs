//! Post-processing of time series: zero crossings, second minima, power-law fits.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub amplitude: f64,
    /// Root-mean-square residual of the log-log regression.
    pub residual: f64,
}

/// Least-squares fit of `y = amplitude * x^exponent` in log-log space.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerLawFit> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!("{} x values but {} y values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::TooFewPoints { need: 3, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Invalid("power-law fit needs finite positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("all x values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| {
            let r = b - (icpt + slope * a);
            r * r
        })
        .sum();
    Ok(PowerLawFit { exponent: slope, amplitude: icpt.exp(), residual: (ss / n).sqrt() })
}

/// First time `<J^x>` changes sign, by linear interpolation between the
/// bracketing samples. `None` if the series never crosses zero.
pub fn crossing_time(t: &[f64], mean_x: &[f64]) -> Option<f64> {
    let n = t.len().min(mean_x.len());
    for k in 1..n {
        let (a, b) = (mean_x[k - 1], mean_x[k]);
        if a > 0.0 && b <= 0.0 {
            if b == 0.0 {
                return Some(t[k]);
            }
            let f = a / (a - b);
            return Some(t[k - 1] + f * (t[k] - t[k - 1]));
        }
    }
    None
}

/// Centered three-sample mean; endpoints are kept.
pub fn smooth3(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n < 3 {
        return y.to_vec();
    }
    let mut out = y.to_vec();
    for k in 1..n - 1 {
        out[k] = (y[k - 1] + y[k] + y[k + 1]) / 3.0;
    }
    out
}

/// Indices of strict interior local minima of `y`.
pub fn local_minima(y: &[f64]) -> Vec<usize> {
    (1..y.len().saturating_sub(1))
        .filter(|&k| y[k] < y[k - 1] && y[k] <= y[k + 1])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub time: f64,
    pub value: f64,
}

/// Second local minimum after light smoothing. The reported value is read
/// from the unsmoothed series at the detected sample.
pub fn second_minimum(t: &[f64], y: &[f64]) -> Option<Extremum> {
    let n = t.len().min(y.len());
    let s = smooth3(&y[..n]);
    let mins = local_minima(&s);
    mins.get(1).map(|&k| Extremum { time: t[k], value: y[k] })
}
