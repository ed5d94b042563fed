//! The damped wave kernel V_β(λ, t) and the exact one-mode transition law.
//!
//! V solves V̈ + 2βV̇ + λV = 0 with V(0) = 0, V̇(0) = 1. With z = λ − β² and
//! x = z t², V = e^{−βt}·t·S(x) and V̇ = e^{−βt}(C(x) − βt·S(x)) where
//! S(x) = sin√x/√x and C(x) = cos√x continue analytically to x < 0. This
//! single representation covers all three damping regimes.

use serde::Serialize;

use crate::error::{bail, Result};
use crate::quadrature::integrate;

/// Relative width of the band around λ = β² classified as critical.
pub const CRITICAL_BAND: f64 = 1e-8;

/// |x| below which S and C are summed from their power series.
const SERIES_RADIUS: f64 = 1e-2;

/// ω²τ² below which closed-form integrals lose digits to cancellation.
const CANCELLATION_GUARD: f64 = 1e-2;

const QUAD_REL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    Underdamped,
    Critical,
    Overdamped,
}

/// Damping β ≥ 0 and eigenvalue λ ≥ 0 of one mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WaveParams {
    beta: f64,
    lambda: f64,
}

impl WaveParams {
    pub fn new(beta: f64, lambda: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            bail!(Domain, "damping β must be finite and non-negative, got {beta}");
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            bail!(Domain, "eigenvalue λ must be finite and non-negative, got {lambda}");
        }
        Ok(WaveParams { beta, lambda })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// λ − β²
    pub fn discriminant(&self) -> f64 {
        self.lambda - self.beta * self.beta
    }

    pub fn regime(&self) -> Regime {
        let z = self.discriminant();
        if z.abs() < CRITICAL_BAND * (self.beta * self.beta).max(1.0) {
            Regime::Critical
        } else if z > 0.0 {
            Regime::Underdamped
        } else {
            Regime::Overdamped
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        bail!(Validation, "time must be finite and non-negative, got {t}");
    }
    Ok(())
}

/// (S(x), C(x), C(x) − 1)
fn s_c(x: f64) -> (f64, f64, f64) {
    if x.abs() < SERIES_RADIUS {
        let (mut s, mut cm1) = (1.0, 0.0);
        let mut term = 1.0;
        for j in 1..12 {
            // term = (−x)^j / (2j)!
            term *= -x / ((2 * j - 1) as f64 * (2 * j) as f64);
            cm1 += term;
            s += term / (2 * j + 1) as f64;
        }
        (s, 1.0 + cm1, cm1)
    } else if x > 0.0 {
        let u = x.sqrt();
        let h = (0.5 * u).sin();
        (u.sin() / u, u.cos(), -2.0 * h * h)
    } else {
        let u = (-x).sqrt();
        let h = (0.5 * u).sinh();
        (u.sinh() / u, u.cosh(), 2.0 * h * h)
    }
}

/// V, V̇ and Φ₁₁ − 1 = V̇ + 2βV − 1 at time t.
#[derive(Clone, Copy, Debug)]
pub(crate) struct KernelTerms {
    pub v: f64,
    pub vdot: f64,
    pub phi11_m1: f64,
}

pub(crate) fn terms(beta: f64, lambda: f64, t: f64) -> KernelTerms {
    let z = lambda - beta * beta;
    let x = z * t * t;
    if x < -1.0 {
        // γt > 1: exponential form avoids overflow of sinh·e^{−βt}.
        let g = (-z).sqrt();
        let b = beta + g;
        let a = lambda / b;
        let ea = (-a * t).exp();
        let e2 = (-2.0 * g * t).exp();
        let v = ea * -(-2.0 * g * t).exp_m1() / (2.0 * g);
        let vdot = ea * (b * e2 - a) / (2.0 * g);
        let phi11_m1 = (b * (-a * t).exp_m1() - a * (-b * t).exp_m1()) / (2.0 * g);
        return KernelTerms { v, vdot, phi11_m1 };
    }
    let (s, c, cm1) = s_c(x);
    let bt = beta * t;
    let e = (-bt).exp();
    KernelTerms {
        v: e * t * s,
        vdot: e * (c - bt * s),
        phi11_m1: (-bt).exp_m1() * (c + bt * s) + cm1 + bt * s,
    }
}

pub fn kernel_v(p: &WaveParams, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(terms(p.beta, p.lambda, t).v)
}

pub fn kernel_vdot(p: &WaveParams, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(terms(p.beta, p.lambda, t).vdot)
}

/// ∫_0^∞ e^{−kt} restricted to [0, T].
fn exp_integral(k: f64, t: f64) -> f64 {
    if k == 0.0 {
        t
    } else {
        -(-k * t).exp_m1() / k
    }
}

/// Scale on which the e^{−2βt} weight forgets the origin.
fn memory_time(beta: f64, t: f64) -> f64 {
    if beta > 0.0 {
        t.min(1.0 / beta)
    } else {
        t
    }
}

/// ∫_0^T V² dt
pub fn integral_v2(p: &WaveParams, t_end: f64) -> Result<f64> {
    check_time(t_end)?;
    let (beta, lambda) = (p.beta, p.lambda);
    let z = p.discriminant();
    let tau = memory_time(beta, t_end);
    if z.abs() * tau * tau >= CANCELLATION_GUARD {
        if z > 0.0 {
            let w = z.sqrt();
            let e = exp_integral(2.0 * beta, t_end);
            let decay = (-2.0 * beta * t_end).exp();
            let c = (decay
                * (-2.0 * beta * (2.0 * w * t_end).cos() + 2.0 * w * (2.0 * w * t_end).sin())
                + 2.0 * beta)
                / (4.0 * (beta * beta + w * w));
            return Ok(0.5 * (e - c) / z);
        }
        let g = (-z).sqrt();
        let b = beta + g;
        let a = lambda / b;
        let v = exp_integral(2.0 * a, t_end) - 2.0 * exp_integral(2.0 * beta, t_end)
            + exp_integral(2.0 * b, t_end);
        return Ok(v / (4.0 * g * g));
    }
    integrate(
        |s| terms(beta, lambda, s).v.powi(2),
        0.0,
        t_end,
        QUAD_REL_TOL,
        0.0,
    )
}

/// ∫_t^∞ V² ds; needs β > 0 and λ > 0.
pub fn tail_integral_v2(p: &WaveParams, t: f64) -> Result<f64> {
    check_time(t)?;
    let (beta, lambda) = (p.beta, p.lambda);
    if beta <= 0.0 || lambda <= 0.0 {
        bail!(Domain, "tail of ∫V² diverges unless β > 0 and λ > 0 (β = {beta}, λ = {lambda})");
    }
    let z = p.discriminant();
    if z.abs() >= CANCELLATION_GUARD * beta * beta {
        if z > 0.0 {
            let w = z.sqrt();
            let decay = (-2.0 * beta * t).exp();
            let c = decay * (2.0 * beta * (2.0 * w * t).cos() - 2.0 * w * (2.0 * w * t).sin())
                / (4.0 * (beta * beta + w * w));
            return Ok(0.5 * (decay / (2.0 * beta) - c) / z);
        }
        let g = (-z).sqrt();
        let b = beta + g;
        let a = lambda / b;
        let tail = |k: f64| (-k * t).exp() / k;
        return Ok((tail(2.0 * a) - 2.0 * tail(2.0 * beta) + tail(2.0 * b)) / (4.0 * g * g));
    }
    // Near-critical: V² ≈ s² e^{−2βs}; 60 decay lengths exhaust double precision.
    let rate = if z < 0.0 { lambda / (beta + (-z).sqrt()) } else { beta };
    integrate(
        |s| terms(beta, lambda, s).v.powi(2),
        t,
        t + 60.0 / rate,
        QUAD_REL_TOL,
        0.0,
    )
}

/// ∫_0^∞ e^{−2αt} V² dt = 1 / (4(α+β)(α² + 2αβ + λ)).
pub fn laplace_v2(alpha: f64, p: &WaveParams) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        bail!(Validation, "α must be finite and positive, got {alpha}");
    }
    let s = alpha + p.beta;
    let q = alpha * alpha + 2.0 * alpha * p.beta + p.lambda;
    if s <= 0.0 || q <= 0.0 {
        bail!(Domain, "∫e^(−2αt)V² diverges at α = {alpha}, β = {}, λ = {}", p.beta, p.lambda);
    }
    Ok(1.0 / (4.0 * s * q))
}

/// 1/(4βλ), the stationary variance of one mode.
pub fn stationary_variance(p: &WaveParams) -> Result<f64> {
    if p.beta <= 0.0 || p.lambda <= 0.0 {
        bail!(Domain, "no stationary law unless β > 0 and λ > 0 (β = {}, λ = {})", p.beta, p.lambda);
    }
    Ok(1.0 / (4.0 * p.beta * p.lambda))
}

/// Exact one-step law of (Y, Ẏ): mean Φ·(y, ẏ), covariance Q.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModeTransition {
    pub h: f64,
    pub phi: [[f64; 2]; 2],
    pub q: [[f64; 2]; 2],
    /// Φ₁₁ − 1 without cancellation.
    pub phi11_minus_one: f64,
}

pub fn mode_transition(p: &WaveParams, h: f64) -> Result<ModeTransition> {
    if !(h.is_finite() && h > 0.0) {
        bail!(Validation, "step must be positive, got {h}");
    }
    let k = terms(p.beta, p.lambda, h);
    let i2 = integral_v2(p, h)?;
    let q12 = 0.5 * k.v * k.v;
    let q22 = k.v * k.vdot + p.beta * k.v * k.v + p.lambda * i2;
    Ok(ModeTransition {
        h,
        phi: [[1.0 + k.phi11_m1, k.v], [-p.lambda * k.v, k.vdot]],
        q: [[i2, q12], [q12, q22]],
        phi11_minus_one: k.phi11_m1,
    })
}
