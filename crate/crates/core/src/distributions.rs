//! Chi-square and standard normal distribution utilities.

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

fn chi2(df: usize) -> Result<ChiSquared> {
    if df == 0 {
        return Err(Error::invalid("chi-square degrees of freedom must be ≥ 1"));
    }
    ChiSquared::new(df as f64).map_err(|e| Error::invalid(e.to_string()))
}

fn check_level(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("level must lie in (0, 1), got {tau}")))
    }
}

/// Upper-tail probability `P(χ²_df > w)`.
pub fn chi_square_sf(w: f64, df: usize) -> Result<f64> {
    let dist = chi2(df)?;
    if w.is_nan() {
        return Err(Error::invalid("chi-square argument is NaN"));
    }
    if w <= 0.0 {
        return Ok(1.0);
    }
    Ok(dist.sf(w).clamp(0.0, 1.0))
}

/// Upper `tau` quantile: the `w` with `P(χ²_df > w) = tau`.
pub fn chi_square_quantile(df: usize, tau: f64) -> Result<f64> {
    let dist = chi2(df)?;
    check_level(tau)?;
    let mut w = dist.inverse_cdf(1.0 - tau);
    // Polish on the upper tail so that small `tau` keeps full relative accuracy.
    for _ in 0..20 {
        let f = dist.sf(w) - tau;
        let dens = dist.pdf(w);
        if !(dens > 0.0) {
            break;
        }
        let step = f / dens;
        let next = (w + step).max(w * 0.5);
        if (next - w).abs() <= 1e-15 * w.max(1.0) {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

pub fn normal_quantile(p: f64) -> Result<f64> {
    check_level(p)?;
    let dist = Normal::standard();
    let mut z = dist.inverse_cdf(p);
    for _ in 0..3 {
        // Work on the smaller tail to avoid cancellation.
        let f = if z > 0.0 { (1.0 - p) - dist.sf(z) } else { dist.cdf(z) - p };
        let dens = dist.pdf(z);
        if !(dens > 0.0) {
            break;
        }
        z -= f / dens;
    }
    Ok(z)
}
