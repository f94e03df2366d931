//! Least-squares helpers for scaling fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two paired samples, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Fitted exponent `p` in `value ≈ C·δ^p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub prefactor: f64,
}

pub fn loglog_fit(deltas: &[f64], values: &[f64]) -> Result<ScalingFit> {
    if values.iter().chain(deltas).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Precondition(format!(
            "log-log fit needs positive finite data, got {values:?}"
        )));
    }
    let lx: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|d| d.ln()).collect();
    let (slope, icpt) = linear_fit(&lx, &ly)?;
    Ok(ScalingFit {
        deltas: deltas.to_vec(),
        values: values.to_vec(),
        slope,
        prefactor: icpt.exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law() {
        let d = [0.2, 0.1, 0.05];
        let v: Vec<f64> = d.iter().map(|x: &f64| 3.0 * x.powi(3)).collect();
        let f = loglog_fit(&d, &v).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!((f.prefactor - 3.0).abs() < 1e-10);
        assert!(loglog_fit(&d, &[1.0, 0.0, 1.0]).is_err());
    }
}
