//! Ordinary least squares for straight lines.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{bail, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub residual_rms: f64,
    pub n: usize,
}

impl LineFit {
    /// Half-width of the two-sided confidence interval for the slope.
    pub fn slope_half_width(&self, level: f64) -> f64 {
        if self.n < 3 || self.slope_stderr == 0.0 {
            return 0.0;
        }
        let t = StudentsT::new(0.0, 1.0, (self.n - 2) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.5 + 0.5 * level);
        t * self.slope_stderr
    }
}

/// Fits y = slope·x + intercept; needs 3 points with spread in x and y.
pub fn ols(points: &[(f64, f64)]) -> Result<LineFit> {
    let n = points.len();
    if n < 3 {
        bail!(Validation, "a line fit needs at least 3 points, got {n}");
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        bail!(Validation, "non-finite point in fit data");
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let scale_x = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(1.0);
    let scale_y = points.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(1.0);
    if sxx <= (1e-12 * scale_x).powi(2) * nf {
        bail!(Validation, "degenerate fit: no spread in the abscissae");
    }
    if syy <= (1e-12 * scale_y).powi(2) * nf {
        bail!(Validation, "degenerate fit: no spread in the ordinates");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr: (sse / (nf - 2.0) / sxx).sqrt(),
        residual_rms: (sse / nf).sqrt(),
        n,
    })
}
