//! The fourteen end-to-end acceptance checks, shared by the `acceptance`
//! test target and the CLI `report` command.

use std::f64::consts::PI;
use std::time::Instant;

use serde::Serialize;

use crate::energy::{verify_harmonic_structure, BoundarySet, HarmonicStructure, MetricTable, ResistanceSolver};
use crate::equilibrium::{equilibrium_gap, stationary_norm, undamped_growth, zero_mode_growth_rate, zero_mode_variance};
use crate::error::{bail, Result};
use crate::kernel::{integral_v2, kernel_v, kernel_vdot, laplace_v2, mode_transition, WaveParams};
use crate::model::Model;
use crate::presets;
use crate::quadrature::integrate;
use crate::regularity::{
    fit_exponent, l2_modulus_from_spectrum, log_grid, spatial_variogram_exact, spatial_variogram_full,
    temporal_variogram_full, QuadratureBudget,
};
use crate::simulator::mode_ensemble;
use crate::spectrum::decimation::{decimated_spectrum, DecimationFamily};
use crate::spectrum::{solve_eigenvalues, solve_spectrum, weyl_diagnostics};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:>2} {} ({:.1}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

type Check = fn() -> Result<(bool, String)>;

pub const CRITERIA: [(u8, &str, Check); 14] = [
    (1, "interval spectrum oracle", interval_spectrum),
    (2, "eigenvalue interlacing", interlacing),
    (3, "harmonic renormalisation", harmonic_renormalisation),
    (4, "spectral dimension from Weyl fit", weyl_dimension),
    (5, "Laplace transform of V squared", laplace_identity),
    (6, "mode transition exactness", transition_exactness),
    (7, "simulator against theory", simulator_moments),
    (8, "temporal exponent", temporal_exponent),
    (9, "spatial exponent", spatial_exponent),
    (10, "L2 modulus exponent", l2_exponent),
    (11, "equilibrium", equilibrium),
    (12, "non-equilibrium growth", non_equilibrium),
    (13, "kernel bounds", kernel_bounds),
    (14, "nested resistance consistency", nested_resistance),
];

pub fn run(id: u8) -> Result<Outcome> {
    let Some(&(id, name, check)) = CRITERIA.iter().find(|c| c.0 == id) else {
        bail!(Validation, "no acceptance criterion {id}");
    };
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Ok(Outcome {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all() -> Vec<Outcome> {
    CRITERIA.iter().map(|c| run(c.0).expect("listed criterion")).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn interval_spectrum() -> Result<(bool, String)> {
    let start = Instant::now();
    let m = presets::interval();
    let d = solve_spectrum(&m.system(10, &BoundarySet::dirichlet(2))?, 5)?;
    let worst = (0..5)
        .map(|k| rel(d.eigenvalues[k], ((k + 1) as f64 * PI).powi(2)))
        .fold(0.0, f64::max);
    let n = solve_spectrum(&m.system(10, &BoundarySet::neumann(2))?, 1)?;
    let col: Vec<f64> = (0..n.total_vertices).map(|v| n.phi(0, v)).collect::<Result<_>>()?;
    let spread = col.iter().fold(0.0f64, |a, x| a.max(x.abs() - col[0].abs()).max(col[0].abs() - x.abs()));
    let same_sign = col.iter().all(|x| x.signum() == col[0].signum());
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 0.01 && n.eigenvalues[0].abs() < 1e-9 && spread < 1e-9 && same_sign && secs < 30.0;
    Ok((
        pass,
        format!(
            "max rel. error {worst:.2e} over k ≤ 5; Neumann λ₁ = {:.1e}, φ₁ spread {spread:.1e}; {secs:.1}s",
            n.eigenvalues[0]
        ),
    ))
}

fn interlacing() -> Result<(bool, String)> {
    let cases = [(presets::interval(), 8), (presets::gasket(), 4), (presets::hata(2.0), 6)];
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for (m, level) in cases {
        let n0 = m.boundary_size();
        let eig = |b: &BoundarySet| -> Result<Vec<f64>> { solve_eigenvalues(&m.system(level, b)?, 50) };
        let lo = eig(&BoundarySet::neumann(n0))?;
        let hi = eig(&BoundarySet::dirichlet(n0))?;
        for b in BoundarySet::all_subsets(n0) {
            let mid = eig(&b)?;
            for k in 0..50 {
                let tol = 1e-9 * mid[k].abs().max(1.0);
                worst = worst.max((lo[k] - mid[k]) / tol).max((mid[k] - hi[k]) / tol);
            }
            count += 1;
        }
    }
    Ok((
        worst <= 1.0,
        format!("{count} boundary subsets, worst violation {:.2} tolerance units (≤ 1 passes)", worst.max(0.0)),
    ))
}

fn harmonic_renormalisation() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [presets::interval(), presets::gasket(), presets::hata(2.0)] {
        let c = verify_harmonic_structure(&m.spec, &m.harmonic)?;
        pass &= c.residual < 1e-10;
        parts.push(format!("{} {:.1e}", m.spec.name, c.residual));
    }
    let g = presets::gasket();
    let bad = HarmonicStructure::new(g.harmonic.a0.clone(), vec![0.5; 3])?;
    let c = verify_harmonic_structure(&g.spec, &bad)?;
    pass &= c.residual > 1e-3;
    parts.push(format!("gasket r=1/2 {:.2e}", c.residual));
    Ok((pass, format!("Schur residuals: {}", parts.join(", "))))
}

fn weyl_dimension() -> Result<(bool, String)> {
    let g = presets::gasket();
    let sys = g.system(7, &BoundarySet::dirichlet(3))?;
    let eig = solve_eigenvalues(&sys, sys.dim())?;
    let fg = weyl_diagnostics(&eig, &g.dims, (5, 100))?;
    let i = presets::interval();
    let sys = i.system(10, &BoundarySet::dirichlet(2))?;
    let eig = solve_eigenvalues(&sys, sys.dim())?;
    let fi = weyl_diagnostics(&eig, &i.dims, (5, 100))?;
    let target = 2.0 * 3f64.ln() / 5f64.ln();
    let pass = (fg.d_s_estimate - target).abs() <= 0.07 && (fi.d_s_estimate - 1.0).abs() <= 0.05;
    Ok((
        pass,
        format!(
            "gasket d_s {:.4} (target {target:.4} ± 0.07), interval d_s {:.4} (target 1 ± 0.05)",
            fg.d_s_estimate, fi.d_s_estimate
        ),
    ))
}

/// ∫₀^∞ f by Gauss–Kronrod on unit panels up to where e^{−rate·t} < 1e-20.
fn integrate_decaying(f: impl Fn(f64) -> f64, rate: f64) -> Result<f64> {
    let end = 46.0 / rate;
    let panels = end.ceil() as usize;
    let width = end / panels as f64;
    let mut total = 0.0;
    for j in 0..panels {
        total += integrate(&f, j as f64 * width, (j + 1) as f64 * width, 1e-12, 0.0)?;
    }
    Ok(total)
}

fn decay_rate(alpha: f64, beta: f64, lambda: f64) -> f64 {
    let d = beta * beta - lambda;
    2.0 * (alpha + beta - if d > 0.0 { d.sqrt() } else { 0.0 })
}

fn laplace_identity() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for alpha in [0.1, 0.5, 2.0] {
        for beta in [0.5, 1.0, 2.0] {
            for lambda in [beta * beta / 4.0, beta * beta, 4.0 * beta * beta] {
                let p = WaveParams::new(beta, lambda)?;
                let closed = laplace_v2(alpha, &p)?;
                let quad = integrate_decaying(
                    |t| (-2.0 * alpha * t).exp() * kernel_v(&p, t).unwrap_or(f64::NAN).powi(2),
                    decay_rate(alpha, beta, lambda),
                )?;
                worst = worst.max(rel(closed, quad));
                points += 1;
            }
        }
    }
    Ok((worst < 1e-8, format!("{points} grid points incl. λ = β², max rel. diff {worst:.2e}")))
}

/// exp of a 2×2 matrix by scaling and squaring of a 30-term Taylor series.
fn expm2(a: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let norm = a.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(squarings);
    let b = [[a[0][0] * scale, a[0][1] * scale], [a[1][0] * scale, a[1][1] * scale]];
    let mul = |x: [[f64; 2]; 2], y: [[f64; 2]; 2]| {
        let mut z = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                z[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
            }
        }
        z
    };
    let mut term = [[1.0, 0.0], [0.0, 1.0]];
    let mut sum = term;
    for n in 1..30 {
        term = mul(term, b);
        for row in term.iter_mut() {
            for x in row.iter_mut() {
                *x /= n as f64;
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        sum = mul(sum, sum);
    }
    sum
}

fn transition_exactness() -> Result<(bool, String)> {
    let (mut phi_err, mut q_err, mut ck_err) = (0.0f64, 0.0f64, 0.0f64);
    for beta in [0.0, 0.5, 1.0, 2.0] {
        for lambda in [0.0, 0.25, 1.0, 4.0, 30.0] {
            let p = WaveParams::new(beta, lambda)?;
            for h in [0.05, 0.4, 1.3] {
                let tr = mode_transition(&p, h)?;
                let e = expm2([[0.0, h], [-lambda * h, -2.0 * beta * h]]);
                let scale = e.iter().flatten().fold(1.0f64, |a, x| a.max(x.abs()));
                for i in 0..2 {
                    for j in 0..2 {
                        phi_err = phi_err.max((tr.phi[i][j] - e[i][j]).abs() / scale);
                    }
                }
                let v = |t: f64| kernel_v(&p, t).unwrap_or(f64::NAN);
                let vd = |t: f64| kernel_vdot(&p, t).unwrap_or(f64::NAN);
                let q12 = integrate(|t| v(t) * vd(t), 0.0, h, 1e-12, 0.0)?;
                let q22 = integrate(|t| vd(t) * vd(t), 0.0, h, 1e-12, 0.0)?;
                let q11 = integrate(|t| v(t) * v(t), 0.0, h, 1e-12, 0.0)?;
                q_err = q_err.max(rel(tr.q[0][1], q12)).max(rel(tr.q[1][1], q22)).max(rel(tr.q[0][0], q11));
                let (a, b) = (mode_transition(&p, 0.7 * h)?, mode_transition(&p, 0.3 * h)?);
                for i in 0..2 {
                    for j in 0..2 {
                        let mut phi = 0.0;
                        let mut q = b.q[i][j];
                        for k in 0..2 {
                            phi += b.phi[i][k] * a.phi[k][j];
                            for l in 0..2 {
                                q += b.phi[i][k] * a.q[k][l] * b.phi[j][l];
                            }
                        }
                        let qs = (tr.q[i][i] * tr.q[j][j]).sqrt();
                        ck_err = ck_err
                            .max((phi - tr.phi[i][j]).abs() / scale)
                            .max((q - tr.q[i][j]).abs() / qs);
                    }
                }
            }
        }
    }
    let pass = phi_err < 1e-9 && q_err < 1e-8 && ck_err < 1e-10;
    Ok((
        pass,
        format!("Φ vs expm {phi_err:.1e}, Q vs quadrature {q_err:.1e}, composition {ck_err:.1e}"),
    ))
}

fn simulator_moments() -> Result<(bool, String)> {
    let start = Instant::now();
    let m = presets::interval();
    let sys = m.system(10, &BoundarySet::dirichlet(2))?;
    let eig = solve_eigenvalues(&sys, 50)?;
    let times = [0.5, 2.0];
    let moments = mode_ensemble(&eig, 1.0, 20_240_601, &times, 100_000)?;
    let (mut var_z, mut mean_z, mut cross_z) = (0.0f64, 0.0f64, 0.0f64);
    let mut var_fail = 0;
    for mo in &moments {
        for (k, &l) in eig.iter().enumerate() {
            let exact = integral_v2(&WaveParams::new(1.0, l)?, mo.t)?;
            let (v, se) = mo.second_moment(k, k);
            let z = (v - exact).abs() / se;
            var_z = var_z.max(z);
            var_fail += usize::from(z > 3.0);
            let (mu, se) = mo.mean(k);
            mean_z = mean_z.max(mu.abs() / se);
            for j in 0..k {
                let (c, se) = mo.second_moment(j, k);
                cross_z = cross_z.max(c.abs() / se);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = var_fail == 0 && mean_z <= 4.0 && cross_z <= 4.0 && secs < 300.0;
    Ok((
        pass,
        format!(
            "10⁵ replicas, K = 50: max |z| variance {var_z:.2} ({var_fail} beyond 3), mean {mean_z:.2}, cross-covariance {cross_z:.2}; {secs:.1}s"
        ),
    ))
}

const LAG_WINDOW: (f64, f64) = (1e-4, 1e-2);

fn lags() -> Vec<f64> {
    log_grid(LAG_WINDOW.0, LAG_WINDOW.1, 9)
}

fn temporal_exponent() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    // Vertex 2 is the first vertex born at level 1: the interval midpoint
    // and the gasket point ψ₁(p₂).
    for (m, level) in [(presets::interval(), 14), (presets::gasket(), 11)] {
        let sys = m.system(level, &BoundarySet::dirichlet(m.boundary_size()))?;
        let x = m.boundary_size();
        let table = temporal_variogram_full(&sys, 1.0, x, 2.0, &lags(), QuadratureBudget::default())?;
        let fit = fit_exponent(&table, LAG_WINDOW)?;
        let target = 2.0 - m.dims.d_s;
        pass &= fit.contains(target, 0.05);
        parts.push(format!(
            "{} level {level}: slope {:.4} (target {target:.4}), {} Lanczos steps",
            m.spec.name,
            fit.slope,
            table.meta.modes.unwrap_or(0)
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn vertex_at_point(m: &Model, level: usize, point: &[f64]) -> Result<usize> {
    let emb = m.spec.embedding.as_ref().expect("presets carry an embedding");
    let xy = m.complex(level)?.coordinates(emb)?;
    match xy
        .iter()
        .position(|c| c.iter().zip(point).all(|(a, b)| (a - b).abs() < 1e-12))
    {
        Some(v) => Ok(v),
        None => bail!(Validation, "no level-{level} vertex at {point:?}"),
    }
}

fn spatial_exponent() -> Result<(bool, String)> {
    let i = presets::interval();
    let level = 10;
    let x = vertex_at_point(&i, level, &[0.25])?;
    let pairs: Vec<(usize, usize)> = (3..=8)
        .map(|j| Ok((x, vertex_at_point(&i, level, &[0.25 + 0.5f64.powi(j)])?)))
        .collect::<Result<_>>()?;
    let metric = ResistanceSolver::new(&i.system(level, &BoundarySet::neumann(2))?)?.table(&pairs)?;
    let sp = solve_spectrum(&i.system(level, &BoundarySet::dirichlet(2))?, 200)?;
    let table = spatial_variogram_exact(&sp, 1.0, 2.0, &metric, 200)?;
    let fi = fit_exponent(&table, (0.5f64.powi(8), 0.5f64.powi(3)))?;

    let g = presets::gasket();
    let glevel = 9;
    let x = vertex_at_point(&g, glevel, &[0.5, 0.0])?;
    let pairs: Vec<(usize, usize)> = (1..=5)
        .map(|j| Ok((x, vertex_at_point(&g, glevel, &[0.5 - 0.5f64.powi(j + 1), 0.0])?)))
        .collect::<Result<_>>()?;
    let metric = ResistanceSolver::new(&g.system(glevel, &BoundarySet::neumann(3))?)?.table(&pairs)?;
    let sys = g.system(glevel, &BoundarySet::dirichlet(3))?;
    let table = spatial_variogram_full(&sys, 1.0, 2.0, &metric, QuadratureBudget::default())?;
    let (lo, hi) = metric.rows.iter().fold((f64::MAX, 0.0f64), |(a, b), r| (a.min(r.2), b.max(r.2)));
    let fg = fit_exponent(&table, (lo, hi))?;
    let pass = fi.contains(1.0, 0.1) && fg.contains(1.0, 0.1);
    Ok((
        pass,
        format!(
            "interval slope {:.4} over R ∈ [2⁻⁸, 2⁻³]; gasket slope {:.4} over {} pairs of level ≤ 6 vertices",
            fi.slope,
            fg.slope,
            metric.rows.len()
        ),
    ))
}

fn l2_exponent() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (family, level) in [(DecimationFamily::Interval, 14), (DecimationFamily::Gasket, 13)] {
        let m = family.preset();
        let b = BoundarySet::dirichlet(m.boundary_size());
        let spectrum = decimated_spectrum(family, level, &b)?;
        let table = l2_modulus_from_spectrum(level, "D", &spectrum.values, 1.0, 2.0, &lags())?;
        let fit = fit_exponent(&table, LAG_WINDOW)?;
        let target = 2.0 - m.dims.d_s;
        pass &= fit.contains(target, 0.05);
        parts.push(format!(
            "{} level {level} ({} modes): slope {:.4} (target {target:.4})",
            m.spec.name,
            spectrum.dimension(),
            fit.slope
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn equilibrium() -> Result<(bool, String)> {
    let b = BoundarySet::dirichlet(2);
    let exact: Vec<f64> = (1..=200).map(|k| (k as f64 * PI).powi(2)).collect();
    let m = presets::interval();
    let discrete = solve_eigenvalues(&m.system(10, &b)?, 200)?;
    let target = 1.0 / 24.0;
    let e = stationary_norm(&exact, 1.0, &b)?.total;
    let d = stationary_norm(&discrete, 1.0, &b)?.total;
    let mut gaps_ok = true;
    let mut worst: f64 = 0.0;
    for eig in [&exact, &discrete] {
        let r = equilibrium_gap(eig, 1.0, &b, &[5.0])?;
        for row in &r.modes {
            if let Some(bounds) = &row.bounds {
                worst = worst.max(row.gaps[0] / bounds[0]);
                gaps_ok &= row.gaps[0] <= bounds[0];
            }
        }
    }
    let pass = rel(e, target) < 0.005 && rel(d, target) < 0.02 && gaps_ok;
    Ok((
        pass,
        format!(
            "partial sums {:.3}% (exact λ) and {:.3}% (level-10 λ) from 1/24; max gap/bound at t = 5: {worst:.3}",
            100.0 * rel(e, target),
            100.0 * rel(d, target)
        ),
    ))
}

fn non_equilibrium() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for lambda in [1.0, PI * PI] {
        let v = undamped_growth(lambda, &[100.0, 200.0])?;
        let ratio = v[1].1 / v[0].1;
        pass &= (ratio - 2.0).abs() < 0.02;
        parts.push(format!("λ = {lambda:.4}: Var(2T)/Var(T) = {ratio:.5}"));
    }
    let m = presets::interval();
    let beta = 1.0;
    let eig = solve_eigenvalues(&m.system(10, &BoundarySet::neumann(2))?, 50)?;
    let report = stationary_norm(&eig, beta, &BoundarySet::neumann(2))?;
    let excluded = report.zero_mode.is_some() && report.modes.first().map(|m| m.k) == Some(2);
    let rate = report.zero_mode.map_or(f64::NAN, |z| z.growth_rate);
    let measured = zero_mode_variance(beta, 101.0)? - zero_mode_variance(beta, 100.0)?;
    pass &= excluded && rel(rate, zero_mode_growth_rate(beta)?) < 1e-15 && rel(measured, rate) < 1e-9;
    parts.push(format!("zero mode excluded: {excluded}, growth rate {rate} (measured {measured:.12})"));
    Ok((pass, parts.join("; ")))
}

fn kernel_bounds() -> Result<(bool, String)> {
    let beta: f64 = 1.0;
    let mut lambdas = vec![0.0];
    lambdas.extend(log_grid(1e-4, 1e4, 999));
    let mut v_ok = true;
    let mut equality: f64 = 0.0;
    for &t in &[0.1, 1.0, 5.0] {
        let bound = (-beta * t).exp() * (beta * t).sinh() / beta;
        for &l in &lambdas {
            let v = kernel_v(&WaveParams::new(beta, l)?, t)?;
            v_ok &= v.abs() <= bound * (1.0 + 1e-12);
            if l == 0.0 {
                equality = equality.max(rel(v, bound));
            }
        }
    }
    let horizon: f64 = 5.0;
    let mut sup_vdot: f64 = 0.0;
    for &l in &lambdas {
        let p = WaveParams::new(beta, l)?;
        for j in 0..=500 {
            sup_vdot = sup_vdot.max(kernel_vdot(&p, horizon * j as f64 / 500.0)?.abs());
        }
    }
    let vdot_bound = (beta * horizon).exp().max(horizon);
    let pass = v_ok && equality < 1e-12 && sup_vdot <= vdot_bound;
    Ok((
        pass,
        format!(
            "{} λ values × 3 times: |V| bound holds {v_ok}, λ = 0 equality to {equality:.1e}; sup|V̇| = {sup_vdot:.4} ≤ {vdot_bound:.2}",
            lambdas.len()
        ),
    ))
}

fn nested_resistance() -> Result<(bool, String)> {
    let base = 2;
    let mut worst: f64 = 0.0;
    let mut pairs_checked = 0;
    for m in [presets::interval(), presets::gasket(), presets::hata(2.0)] {
        let nb = m.complex(base)?.num_vertices();
        let pairs: Vec<(usize, usize)> = (0..nb).flat_map(|x| (x + 1..nb).map(move |y| (x, y))).collect();
        let reference = ResistanceSolver::new(&m.system(base, &BoundarySet::neumann(m.boundary_size()))?)?.table(&pairs)?;
        for level in base + 1..=base + 3 {
            let t: MetricTable =
                ResistanceSolver::new(&m.system(level, &BoundarySet::neumann(m.boundary_size()))?)?.table(&pairs)?;
            for (a, b) in t.rows.iter().zip(&reference.rows) {
                worst = worst.max(rel(a.2, b.2));
            }
        }
        pairs_checked += pairs.len();
    }
    Ok((
        worst < 1e-9,
        format!("{pairs_checked} level-{base} pairs on three presets, levels {base}..{}: max rel. diff {worst:.1e}", base + 3),
    ))
}
