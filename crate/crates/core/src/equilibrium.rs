//! Long-time second moments: stationary variances for β > 0, convergence
//! gaps against the exponential tail bound, the Neumann zero mode, and
//! linear variance growth for β = 0.

use std::io::Write;

use serde::Serialize;

use crate::energy::BoundarySet;
use crate::error::{bail, Result};
use crate::kernel::{integral_v2, stationary_variance, tail_integral_v2, WaveParams};
use crate::regression::ols;

/// Eigenvalues below this are treated as the Neumann zero mode.
pub const ZERO_MODE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StationaryMode {
    /// 1-based mode index.
    pub k: usize,
    pub lambda: f64,
    pub variance: f64,
}

/// The excluded λ = 0 mode: Var Y(t) grows like t/(4β²).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZeroMode {
    pub lambda: f64,
    pub growth_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryReport {
    pub beta: f64,
    pub modes: Vec<StationaryMode>,
    pub total: f64,
    pub zero_mode: Option<ZeroMode>,
    /// Weyl-law estimate of Σ_{k>K} 1/(4βλ_k); never added to `total`.
    pub weyl_tail: Option<f64>,
}

fn check_beta(beta: f64) -> Result<()> {
    if beta == 0.0 {
        bail!(Domain, "β = 0: the stationary limit does not exist (mode variances grow without bound)");
    }
    if !(beta > 0.0 && beta.is_finite()) {
        bail!(Domain, "β must be positive, got {beta}");
    }
    Ok(())
}

/// Linear growth rate of the zero mode's variance.
pub fn zero_mode_growth_rate(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(0.25 / (beta * beta))
}

/// Σ_k 1/(4βλ_k) over the supplied ascending eigenvalues; for b = N the
/// zero mode is excluded and reported separately.
pub fn stationary_norm(eigenvalues: &[f64], beta: f64, b: &BoundarySet) -> Result<StationaryReport> {
    check_beta(beta)?;
    let mut zero_mode = None;
    let mut start = 0;
    if b.is_neumann() {
        match eigenvalues.first() {
            Some(&l) if l.abs() <= ZERO_MODE_TOLERANCE => {
                zero_mode = Some(ZeroMode {
                    lambda: l,
                    growth_rate: zero_mode_growth_rate(beta)?,
                });
                start = 1;
            }
            _ => bail!(Validation, "Neumann spectrum must start with the zero eigenvalue"),
        }
    }
    let modes = eigenvalues[start..]
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            Ok(StationaryMode {
                k: start + i + 1,
                lambda,
                variance: stationary_variance(&WaveParams::new(beta, lambda)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = modes.iter().map(|m| m.variance).sum();
    Ok(StationaryReport {
        beta,
        modes,
        total,
        zero_mode,
        weyl_tail: weyl_tail(eigenvalues, beta),
    })
}

/// Fits λ_k ≈ c·k^a on the upper part of the spectrum and integrates
/// 1/(4βc x^a) from K + ½ to ∞.
fn weyl_tail(eigenvalues: &[f64], beta: f64) -> Option<f64> {
    let n = eigenvalues.len();
    if n < 20 {
        return None;
    }
    let pts: Vec<(f64, f64)> = (n / 10 + 2..=4 * n / 5)
        .filter(|&k| eigenvalues[k - 1] > 0.0)
        .map(|k| ((k as f64).ln(), eigenvalues[k - 1].ln()))
        .collect();
    let fit = ols(&pts).ok()?;
    if fit.slope <= 1.0 {
        return None;
    }
    let x0 = n as f64 + 0.5;
    Some(x0.powf(1.0 - fit.slope) / ((fit.slope - 1.0) * fit.intercept.exp() * 4.0 * beta))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapRow {
    pub k: usize,
    pub lambda: f64,
    pub stationary_var: f64,
    /// ∫_t^∞ V² at each requested time.
    pub gaps: Vec<f64>,
    /// (1/2β)e^{−2βt}/(λ − β²) for underdamped modes.
    pub bounds: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub beta: f64,
    pub times: Vec<f64>,
    pub modes: Vec<GapRow>,
    pub total_gap: Vec<f64>,
    /// Exact gaps of modes with λ ≤ β² plus the exponential tail bound of
    /// the rest.
    pub bound: Vec<f64>,
    pub zero_mode: Option<ZeroMode>,
}

/// Per-mode tail bound, `None` unless λ > β².
pub fn gap_bound(beta: f64, lambda: f64, t: f64) -> Option<f64> {
    (lambda > beta * beta).then(|| (-2.0 * beta * t).exp() / (2.0 * beta * (lambda - beta * beta)))
}

pub fn equilibrium_gap(eigenvalues: &[f64], beta: f64, b: &BoundarySet, times: &[f64]) -> Result<EquilibriumReport> {
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        bail!(Validation, "times must be finite and non-negative");
    }
    let stationary = stationary_norm(eigenvalues, beta, b)?;
    let mut total_gap = vec![0.0; times.len()];
    let mut bound = vec![0.0; times.len()];
    let mut modes = Vec::with_capacity(stationary.modes.len());
    for m in &stationary.modes {
        let p = WaveParams::new(beta, m.lambda)?;
        let gaps = times.iter().map(|&t| tail_integral_v2(&p, t)).collect::<Result<Vec<_>>>()?;
        let bounds: Option<Vec<f64>> = times.iter().map(|&t| gap_bound(beta, m.lambda, t)).collect();
        for (j, g) in gaps.iter().enumerate() {
            total_gap[j] += g;
            bound[j] += bounds.as_ref().map_or(*g, |b| b[j]);
        }
        modes.push(GapRow {
            k: m.k,
            lambda: m.lambda,
            stationary_var: m.variance,
            gaps,
            bounds,
        });
    }
    Ok(EquilibriumReport {
        beta,
        times: times.to_vec(),
        modes,
        total_gap,
        bound,
        zero_mode: stationary.zero_mode,
    })
}

impl EquilibriumReport {
    /// `k,lambda,stationary_var,gap_at_<t>...`
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let cols: Vec<String> = self.times.iter().map(|t| format!("gap_at_{t}")).collect();
        writeln!(out, "k,lambda,stationary_var,{}", cols.join(","))?;
        for m in &self.modes {
            let gaps: Vec<String> = m.gaps.iter().map(|g| format!("{g:e}")).collect();
            writeln!(out, "{},{:e},{:e},{}", m.k, m.lambda, m.stationary_var, gaps.join(","))?;
        }
        Ok(())
    }
}

/// Var Y(t) = t/(2λ) − sin(2√λ t)/(4λ^{3/2}) for β = 0.
pub fn undamped_growth(lambda: f64, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        bail!(Validation, "undamped growth needs λ > 0, got {lambda}");
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[0] >= w[1]) {
        bail!(Validation, "times must be non-negative and strictly increasing");
    }
    let w = lambda.sqrt();
    Ok(times
        .iter()
        .map(|&t| (t, t / (2.0 * lambda) - (2.0 * w * t).sin() / (4.0 * lambda * w)))
        .collect())
}

/// Var Y(t) of the zero mode, ∫₀ᵗ V_β(0, s)² ds.
pub fn zero_mode_variance(beta: f64, t: f64) -> Result<f64> {
    integral_v2(&WaveParams::new(beta, 0.0)?, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::quadrature::integrate;
    use std::f64::consts::PI;

    fn interval_exact(k: usize) -> Vec<f64> {
        (1..=k).map(|j| (j as f64 * PI).powi(2)).collect()
    }

    #[test]
    fn basel_partial_sum() {
        let r = stationary_norm(&interval_exact(200), 1.0, &BoundarySet::dirichlet(2)).unwrap();
        assert!((r.total / (1.0 / 24.0) - 1.0).abs() < 0.005);
        // The Weyl tail brings the partial sum close to the limit.
        let tail = r.weyl_tail.unwrap();
        assert!((r.total + tail - 1.0 / 24.0).abs() < 1e-3 * (1.0 / 24.0));
        assert!(r.zero_mode.is_none());
    }

    #[test]
    fn neumann_zero_mode_is_excluded() {
        let mut eig = vec![0.0];
        eig.extend(interval_exact(50));
        let r = stationary_norm(&eig, 0.5, &BoundarySet::neumann(2)).unwrap();
        assert_eq!(r.modes.len(), 50);
        assert_eq!(r.modes[0].k, 2);
        assert_eq!(r.zero_mode.unwrap().growth_rate, 1.0);
        assert!(r.total.is_finite());
        assert!(stationary_norm(&interval_exact(5), 0.5, &BoundarySet::neumann(2)).is_err());
    }

    #[test]
    fn undamped_limit_is_a_domain_error() {
        let e = stationary_norm(&interval_exact(5), 0.0, &BoundarySet::dirichlet(2));
        assert!(matches!(e, Err(Error::Domain(_))));
        assert!(matches!(zero_mode_growth_rate(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn gaps_start_at_stationary_variance_and_decrease() {
        let times = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];
        let r = equilibrium_gap(&interval_exact(200), 1.0, &BoundarySet::dirichlet(2), &times).unwrap();
        for m in &r.modes {
            assert!((m.gaps[0] - m.stationary_var).abs() < 1e-12 * m.stationary_var);
            assert!(m.gaps.windows(2).all(|w| w[1] <= w[0]));
            let b = m.bounds.as_ref().unwrap();
            assert!(m.gaps.iter().zip(b).all(|(g, b)| g <= b));
            // Matches the difference form where it does not cancel.
            let p = WaveParams::new(1.0, m.lambda).unwrap();
            let diff = m.stationary_var - integral_v2(&p, 1.0).unwrap();
            assert!((diff - m.gaps[2]).abs() < 1e-9 * m.stationary_var);
        }
        assert!(r.total_gap.iter().zip(&r.bound).all(|(g, b)| g <= b));
        assert!(r.total_gap.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn gap_ratio_is_governed_by_the_oscillating_factor() {
        // ∫_t^∞ e^{−2s} sin²(ωs)/ω² ds = e^{−2t}(1/4 − c(t))/ω² with
        // |c(t)| ≤ 1/(4√(1+ω²)), so gap(5)/gap(1) ≤ e^{−8}(1+ε)/(1−ε), ε = 1/√(1+ω²).
        let r = equilibrium_gap(&interval_exact(200), 1.0, &BoundarySet::dirichlet(2), &[1.0, 5.0]).unwrap();
        for m in &r.modes {
            let eps = 1.0 / m.lambda.sqrt();
            let ratio = m.gaps[1] / m.gaps[0];
            assert!(ratio <= (-8f64).exp() * (1.0 + eps) / (1.0 - eps) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn csv_layout() {
        let r = equilibrium_gap(&interval_exact(2), 1.0, &BoundarySet::dirichlet(2), &[1.0, 5.0]).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,lambda,stationary_var,gap_at_1,gap_at_5\n1,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn undamped_growth_closed_form() {
        let v = undamped_growth(1.0, &[2.0 * PI]).unwrap();
        assert!((v[0].1 - PI).abs() < 1e-14);
        let q = integrate(|s| s.sin().powi(2), 0.0, 2.0 * PI, 1e-13, 0.0).unwrap();
        assert!((q - v[0].1).abs() < 1e-12);
        for lambda in [1.0, PI * PI] {
            let t = undamped_growth(lambda, &[100.0, 200.0]).unwrap();
            assert!((t[1].1 / t[0].1 - 2.0).abs() < 0.01);
            let p = WaveParams::new(0.0, lambda).unwrap();
            assert!((integral_v2(&p, 100.0).unwrap() - t[0].1).abs() < 1e-9 * t[0].1);
        }
        assert!(undamped_growth(0.0, &[1.0]).is_err());
        assert!(undamped_growth(1.0, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn zero_mode_grows_at_the_reported_rate() {
        for beta in [0.5, 1.0, 2.0] {
            let slope = zero_mode_variance(beta, 61.0).unwrap() - zero_mode_variance(beta, 60.0).unwrap();
            assert!((slope - zero_mode_growth_rate(beta).unwrap()).abs() < 1e-10);
        }
    }

    proptest::proptest! {
        #[test]
        fn undamped_variance_oscillates_around_the_line(lambda in 0.01f64..100.0, t in 0.0f64..50.0) {
            let v = undamped_growth(lambda, &[t]).unwrap()[0].1;
            let line = t / (2.0 * lambda);
            proptest::prop_assert!(v >= line - 0.25 / lambda.powf(1.5) - 1e-12);
            proptest::prop_assert!(v <= line + 0.25 / lambda.powf(1.5) + 1e-12);
        }
    }
}
