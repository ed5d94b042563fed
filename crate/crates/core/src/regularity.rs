//! Second-moment variograms of the field in space and time, and power-law
//! exponent fits.
//!
//! Exact tables are mode sums over independent centred modes. The `_full`
//! variants replace the truncated sum by Gauss quadrature of a spectral
//! measure (every mode of the level-n system), the `_from_spectrum` L²
//! variant by a sum over an exact decimated spectrum.

use std::io::Write;

use serde::Serialize;

use crate::energy::{EnergySystem, MetricTable};
use crate::error::{bail, Result};
use crate::kernel::{integral_v2, WaveParams};
use crate::regression::ols;
use crate::simulator::{increment_variances, FieldSample};
use crate::spectrum::lanczos::{converged, LanczosRun, SpectralMeasure};
use crate::spectrum::Spectrum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariogramKind {
    Spatial,
    Temporal,
    L2,
}

/// Inputs that produced a table; unused fields stay `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VariogramMeta {
    pub level: Option<usize>,
    pub boundary: Option<String>,
    pub beta: Option<f64>,
    pub modes: Option<usize>,
    pub t: Option<f64>,
    pub s: Option<f64>,
    pub vertex: Option<usize>,
    pub replicas: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariogramRow {
    pub separation: f64,
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariogramTable {
    pub kind: VariogramKind,
    pub meta: VariogramMeta,
    pub rows: Vec<VariogramRow>,
}

impl VariogramTable {
    fn exact(kind: VariogramKind, meta: VariogramMeta, rows: impl IntoIterator<Item = (f64, f64)>) -> Self {
        VariogramTable {
            kind,
            meta,
            rows: rows
                .into_iter()
                .map(|(separation, value)| VariogramRow {
                    separation,
                    value,
                    stderr: None,
                })
                .collect(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    /// `separation,value,stderr`; stderr is blank for exact tables.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "separation,value,stderr")?;
        for r in &self.rows {
            match r.stderr {
                Some(se) => writeln!(out, "{:e},{:e},{se:e}", r.separation, r.value)?,
                None => writeln!(out, "{:e},{:e},", r.separation, r.value)?,
            }
        }
        Ok(())
    }

    /// Largest value/separation over positive separations.
    pub fn max_ratio(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.separation > 0.0)
            .map(|r| r.value / r.separation)
            .fold(0.0, f64::max)
    }
}

fn mode_params(eigenvalues: &[f64], beta: f64) -> Result<Vec<WaveParams>> {
    eigenvalues.iter().map(|&l| WaveParams::new(beta, l.max(0.0))).collect()
}

fn check_modes(spectrum: &Spectrum, k: usize) -> Result<()> {
    if k == 0 || k > spectrum.len() {
        bail!(Validation, "mode count {k} outside 1..={}", spectrum.len());
    }
    Ok(())
}

fn check_lags(lags: &[f64]) -> Result<()> {
    if lags.is_empty() {
        bail!(Validation, "empty lag list");
    }
    if lags.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        bail!(Validation, "lags must be finite and non-negative");
    }
    Ok(())
}

fn spectrum_meta(spectrum: &Spectrum, beta: f64, k: usize) -> VariogramMeta {
    VariogramMeta {
        level: Some(spectrum.level),
        boundary: Some(spectrum.boundary.to_string()),
        beta: Some(beta),
        modes: Some(k),
        ..Default::default()
    }
}

/// Σ_{k≤K} (∫₀ᵗV²)(φ_k(x) − φ_k(y))², separation R(x, y).
pub fn spatial_variogram_exact(
    spectrum: &Spectrum,
    beta: f64,
    t: f64,
    pairs: &MetricTable,
    k: usize,
) -> Result<VariogramTable> {
    check_modes(spectrum, k)?;
    if pairs.rows.is_empty() {
        bail!(Validation, "empty pair list");
    }
    let weights = mode_params(&spectrum.eigenvalues[..k], beta)?
        .iter()
        .map(|p| integral_v2(p, t))
        .collect::<Result<Vec<_>>>()?;
    let rows = pairs
        .rows
        .iter()
        .map(|&(x, y, r)| {
            let value = (0..k)
                .map(|j| Ok(weights[j] * (spectrum.phi(j, x)? - spectrum.phi(j, y)?).powi(2)))
                .sum::<Result<f64>>()?;
            Ok((r, value))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = VariogramMeta {
        t: Some(t),
        ..spectrum_meta(spectrum, beta, k)
    };
    Ok(VariogramTable::exact(VariogramKind::Spatial, meta, rows))
}

/// Σ_{k≤K} E[(Y_k(s+t) − Y_k(s))²]·φ_k(x)² for each lag t.
pub fn temporal_variogram_exact(
    spectrum: &Spectrum,
    beta: f64,
    x: usize,
    s: f64,
    lags: &[f64],
    k: usize,
) -> Result<VariogramTable> {
    check_modes(spectrum, k)?;
    check_lags(lags)?;
    let mut values = vec![0.0; lags.len()];
    for (j, p) in mode_params(&spectrum.eigenvalues[..k], beta)?.iter().enumerate() {
        let w = spectrum.phi(j, x)?.powi(2);
        for (v, inc) in values.iter_mut().zip(increment_variances(p, s, lags)?) {
            *v += w * inc;
        }
    }
    let meta = VariogramMeta {
        s: Some(s),
        vertex: Some(x),
        ..spectrum_meta(spectrum, beta, k)
    };
    Ok(VariogramTable::exact(VariogramKind::Temporal, meta, lags.iter().copied().zip(values)))
}

/// Σ (multiplicity)·E[(Y(s+t) − Y(s))²] over (eigenvalue, multiplicity).
pub fn l2_modulus_from_eigenvalues(values: &[(f64, u64)], beta: f64, s: f64, lags: &[f64]) -> Result<Vec<f64>> {
    check_lags(lags)?;
    let mut out = vec![0.0; lags.len()];
    for &(l, mult) in values {
        let p = WaveParams::new(beta, l.max(0.0))?;
        for (v, inc) in out.iter_mut().zip(increment_variances(&p, s, lags)?) {
            *v += mult as f64 * inc;
        }
    }
    Ok(out)
}

/// E‖u(s+t) − u(s)‖²_μ for the K-truncated field.
pub fn l2_modulus_exact(spectrum: &Spectrum, beta: f64, s: f64, lags: &[f64], k: usize) -> Result<VariogramTable> {
    check_modes(spectrum, k)?;
    let single: Vec<(f64, u64)> = spectrum.eigenvalues[..k].iter().map(|&l| (l, 1)).collect();
    let values = l2_modulus_from_eigenvalues(&single, beta, s, lags)?;
    let meta = VariogramMeta {
        s: Some(s),
        ..spectrum_meta(spectrum, beta, k)
    };
    Ok(VariogramTable::exact(VariogramKind::L2, meta, lags.iter().copied().zip(values)))
}

/// L² modulus over a full spectrum given with multiplicities.
pub fn l2_modulus_from_spectrum(
    level: usize,
    boundary: &str,
    values: &[(f64, u64)],
    beta: f64,
    s: f64,
    lags: &[f64],
) -> Result<VariogramTable> {
    let sums = l2_modulus_from_eigenvalues(values, beta, s, lags)?;
    let meta = VariogramMeta {
        level: Some(level),
        boundary: Some(boundary.to_string()),
        beta: Some(beta),
        modes: Some(values.iter().map(|v| v.1 as usize).sum()),
        s: Some(s),
        ..Default::default()
    };
    Ok(VariogramTable::exact(VariogramKind::L2, meta, lags.iter().copied().zip(sums)))
}

/// Budget for Lanczos runs behind the `_full` variogram variants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureBudget {
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Default for QuadratureBudget {
    fn default() -> Self {
        QuadratureBudget {
            rel_tol: 1e-6,
            max_steps: 1 << 13,
        }
    }
}

fn system_meta(system: &EnergySystem, beta: f64, steps: usize) -> VariogramMeta {
    VariogramMeta {
        level: Some(system.level),
        boundary: Some(system.boundary.to_string()),
        beta: Some(beta),
        modes: Some(steps),
        ..Default::default()
    }
}

/// Temporal variogram over every mode of the level-n system. `modes` in
/// the metadata records the Gauss rule size.
pub fn temporal_variogram_full(
    system: &EnergySystem,
    beta: f64,
    x: usize,
    s: f64,
    lags: &[f64],
    budget: QuadratureBudget,
) -> Result<VariogramTable> {
    check_lags(lags)?;
    let mut run = LanczosRun::new(system, x)?;
    let eval = |mu: &SpectralMeasure| {
        let mut acc = vec![0.0; lags.len()];
        for (&theta, &w) in mu.nodes.iter().zip(&mu.weights) {
            let p = WaveParams::new(beta, theta)?;
            for (a, inc) in acc.iter_mut().zip(increment_variances(&p, s, lags)?) {
                *a += w * inc;
            }
        }
        Ok(acc)
    };
    let (values, steps) = converged(&mut run, 32, budget.max_steps, budget.rel_tol, eval)?;
    let meta = VariogramMeta {
        s: Some(s),
        vertex: Some(x),
        ..system_meta(system, beta, steps)
    };
    Ok(VariogramTable::exact(VariogramKind::Temporal, meta, lags.iter().copied().zip(values)))
}

/// Spatial variogram over every mode of the level-n system.
pub fn spatial_variogram_full(
    system: &EnergySystem,
    beta: f64,
    t: f64,
    pairs: &MetricTable,
    budget: QuadratureBudget,
) -> Result<VariogramTable> {
    if pairs.rows.is_empty() {
        bail!(Validation, "empty pair list");
    }
    let mut rows = Vec::with_capacity(pairs.rows.len());
    let mut max_steps = 0;
    for &(x, y, r) in &pairs.rows {
        if x == y {
            rows.push((r, 0.0));
            continue;
        }
        let mut run = LanczosRun::for_pair(system, x, y)?;
        let eval = |mu: &SpectralMeasure| {
            let mut acc = 0.0;
            for (&theta, &w) in mu.nodes.iter().zip(&mu.weights) {
                acc += w * integral_v2(&WaveParams::new(beta, theta)?, t)?;
            }
            Ok(vec![acc])
        };
        let (v, steps) = converged(&mut run, 16, budget.max_steps, budget.rel_tol, eval)?;
        max_steps = max_steps.max(steps);
        rows.push((r, v[0]));
    }
    let meta = VariogramMeta {
        t: Some(t),
        ..system_meta(system, beta, max_steps)
    };
    Ok(VariogramTable::exact(VariogramKind::Spatial, meta, rows))
}

/// Relative change of each temporal entry when K is halved. Entries above
/// 1% mark lags below the truncation resolution.
pub fn truncation_sensitivity(
    spectrum: &Spectrum,
    beta: f64,
    x: usize,
    s: f64,
    lags: &[f64],
    k: usize,
) -> Result<Vec<f64>> {
    if k < 2 {
        bail!(Validation, "truncation sensitivity needs K ≥ 2");
    }
    let full = temporal_variogram_exact(spectrum, beta, x, s, lags, k)?;
    let half = temporal_variogram_exact(spectrum, beta, x, s, lags, k / 2)?;
    Ok(full
        .rows
        .iter()
        .zip(&half.rows)
        .map(|(a, b)| if a.value > 0.0 { (a.value - b.value) / a.value } else { 0.0 })
        .collect())
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_ensemble(ensemble: &[FieldSample]) -> Result<()> {
    if ensemble.len() < 2 {
        bail!(Validation, "empirical variograms need at least 2 replicas, got {}", ensemble.len());
    }
    let first = &ensemble[0];
    if ensemble
        .iter()
        .any(|s| s.vertices != first.vertices || s.values.len() != first.vertices.len())
    {
        bail!(Validation, "replicas sample different vertex sets");
    }
    Ok(())
}

fn column(sample: &FieldSample, v: usize) -> Result<usize> {
    match sample.vertices.iter().position(|&u| u == v) {
        Some(i) => Ok(i),
        None => bail!(Validation, "vertex {v} not present in the field samples"),
    }
}

/// Replica mean of (u(x) − u(y))² with standard errors.
pub fn empirical_variogram(ensemble: &[FieldSample], pairs: &MetricTable) -> Result<VariogramTable> {
    check_ensemble(ensemble)?;
    if pairs.rows.is_empty() {
        bail!(Validation, "empty pair list");
    }
    let rows = pairs
        .rows
        .iter()
        .map(|&(x, y, r)| {
            let (ix, iy) = (column(&ensemble[0], x)?, column(&ensemble[0], y)?);
            let sq: Vec<f64> = ensemble.iter().map(|s| (s.values[ix] - s.values[iy]).powi(2)).collect();
            let (value, se) = mean_and_stderr(&sq);
            Ok(VariogramRow {
                separation: r,
                value,
                stderr: Some(se),
            })
        })
        .collect::<Result<_>>()?;
    Ok(VariogramTable {
        kind: VariogramKind::Spatial,
        meta: VariogramMeta {
            t: Some(ensemble[0].t),
            replicas: Some(ensemble.len()),
            ..Default::default()
        },
        rows,
    })
}

/// Replica mean of (u(s+t, x) − u(s, x))². Each path lists samples at
/// increasing times; `base` indexes the sample taken at s.
pub fn empirical_temporal_variogram(paths: &[Vec<FieldSample>], x: usize, base: usize) -> Result<VariogramTable> {
    if paths.len() < 2 {
        bail!(Validation, "empirical variograms need at least 2 replicas, got {}", paths.len());
    }
    let len = paths[0].len();
    if base >= len || paths.iter().any(|p| p.len() != len) {
        bail!(Validation, "paths have mismatched lengths or base index out of range");
    }
    for j in 0..len {
        let slice: Vec<FieldSample> = paths.iter().map(|p| p[j].clone()).collect();
        check_ensemble(&slice)?;
    }
    let col = column(&paths[0][base], x)?;
    let s = paths[0][base].t;
    let rows = (base + 1..len)
        .map(|j| {
            let sq: Vec<f64> = paths.iter().map(|p| (p[j].values[col] - p[base].values[col]).powi(2)).collect();
            let (value, se) = mean_and_stderr(&sq);
            VariogramRow {
                separation: paths[0][j].t - s,
                value,
                stderr: Some(se),
            }
        })
        .collect();
    Ok(VariogramTable {
        kind: VariogramKind::Temporal,
        meta: VariogramMeta {
            s: Some(s),
            vertex: Some(x),
            replicas: Some(paths.len()),
            ..Default::default()
        },
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence half-width of the slope.
    pub half_width: f64,
    pub window: (f64, f64),
    pub points: usize,
    pub residual_rms: f64,
}

impl ExponentFit {
    pub fn write_json<W: Write>(&self, out: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(std::io::Error::other)
    }

    pub fn contains(&self, target: f64, tol: f64) -> bool {
        (self.slope - target).abs() <= tol
    }
}

/// Least squares of log value on log separation over rows with
/// separation in [lo, hi] and positive value.
pub fn fit_exponent(table: &VariogramTable, window: (f64, f64)) -> Result<ExponentFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi) {
        bail!(Validation, "fit window ({lo}, {hi}) must satisfy 0 < lo < hi");
    }
    let pts: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter(|r| r.separation >= lo && r.separation <= hi && r.value > 0.0)
        .map(|r| (r.separation.ln(), r.value.ln()))
        .collect();
    if pts.len() < 3 {
        bail!(Validation, "fit window ({lo}, {hi}) holds {} usable rows, need 3", pts.len());
    }
    let f = ols(&pts)?;
    Ok(ExponentFit {
        slope: f.slope,
        intercept: f.intercept,
        half_width: f.slope_half_width(0.95),
        window,
        points: f.n,
        residual_rms: f.residual_rms,
    })
}

/// Log-spaced values from lo to hi inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{BoundarySet, ResistanceSolver};
    use crate::presets;
    use crate::simulator::{init_simulation, field_at, advance, increment_variance};
    use crate::spectrum::solve_spectrum;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn interval(level: usize, b: &str, k: usize) -> (EnergySystem, Spectrum) {
        let m = presets::interval();
        let sys = m.system(level, &m.boundary_set(b).unwrap()).unwrap();
        let sp = solve_spectrum(&sys, k).unwrap();
        (sys, sp)
    }

    fn interval_resistances(level: usize, pairs: &[(usize, usize)]) -> MetricTable {
        let m = presets::interval();
        let sys = m.system(level, &BoundarySet::neumann(2)).unwrap();
        ResistanceSolver::new(&sys).unwrap().table(pairs).unwrap()
    }

    #[test]
    fn zero_time_and_coincident_points() {
        let (_, sp) = interval(6, "D", 30);
        let pairs = MetricTable {
            rows: vec![(5, 9, 0.1), (7, 7, 0.0)],
        };
        let t0 = spatial_variogram_exact(&sp, 1.0, 0.0, &pairs, 30).unwrap();
        assert!(t0.values().iter().all(|v| *v == 0.0));
        let t2 = spatial_variogram_exact(&sp, 1.0, 2.0, &pairs, 30).unwrap();
        assert!(t2.rows[0].value > 0.0 && t2.rows[1].value == 0.0);
        let empty = MetricTable { rows: vec![] };
        assert!(spatial_variogram_exact(&sp, 1.0, 2.0, &empty, 30).is_err());
        let tv = temporal_variogram_exact(&sp, 1.0, 5, 2.0, &[0.0, 1e-3], 30).unwrap();
        assert_eq!(tv.rows[0].value, 0.0);
        let l2 = l2_modulus_exact(&sp, 1.0, 2.0, &[0.0], 30).unwrap();
        assert_eq!(l2.rows[0].value, 0.0);
    }

    #[test]
    fn l2_modulus_is_the_mass_integral_of_the_temporal_variogram() {
        let (sys, sp) = interval(5, "D", 31);
        let lags = [1e-3, 1e-2, 0.1];
        let l2 = l2_modulus_exact(&sp, 1.0, 2.0, &lags, 31).unwrap();
        let mut acc = [0.0; 3];
        for (r, &v) in sys.vertices.iter().enumerate() {
            let t = temporal_variogram_exact(&sp, 1.0, v, 2.0, &lags, 31).unwrap();
            for j in 0..3 {
                acc[j] += sys.mass[r] * t.rows[j].value;
            }
        }
        for j in 0..3 {
            assert!((acc[j] - l2.rows[j].value).abs() < 1e-10 * acc[j]);
        }
    }

    #[test]
    fn full_variants_match_complete_mode_sums() {
        let (sys, sp) = interval(6, "D", 63);
        let lags = log_grid(1e-3, 1e-1, 5);
        let exact = temporal_variogram_exact(&sp, 1.0, 20, 2.0, &lags, 63).unwrap();
        let budget = QuadratureBudget {
            rel_tol: 1e-10,
            max_steps: 256,
        };
        let full = temporal_variogram_full(&sys, 1.0, 20, 2.0, &lags, budget).unwrap();
        for (a, b) in exact.rows.iter().zip(&full.rows) {
            assert!((a.value - b.value).abs() < 1e-8 * a.value);
        }
        let pairs = interval_resistances(6, &[(20, 33), (0, 40)]);
        let exact = spatial_variogram_exact(&sp, 1.0, 2.0, &pairs, 63).unwrap();
        let full = spatial_variogram_full(&sys, 1.0, 2.0, &pairs, budget).unwrap();
        for (a, b) in exact.rows.iter().zip(&full.rows) {
            assert!((a.value - b.value).abs() < 1e-8 * a.value);
        }
    }

    #[test]
    fn synthetic_power_law_fit() {
        let t = VariogramTable::exact(
            VariogramKind::Temporal,
            VariogramMeta::default(),
            log_grid(1e-4, 1e-2, 9).into_iter().map(|x| (x, x.powf(1.3))),
        );
        let f = fit_exponent(&t, (1e-4, 1e-2)).unwrap();
        assert!((f.slope - 1.3).abs() < 1e-12);
        let flat = VariogramTable::exact(
            VariogramKind::Temporal,
            VariogramMeta::default(),
            log_grid(1e-4, 1e-2, 9).into_iter().map(|x| (x, 2.0)),
        );
        assert!(fit_exponent(&flat, (1e-4, 1e-2)).is_err());
        assert!(fit_exponent(&t, (1e-3, 1e-3)).is_err());
        assert!(fit_exponent(&t, (2e-3, 3e-3)).is_err());
    }

    #[test]
    fn deterministic_ensemble_gives_zero_and_single_replica_fails() {
        let (_, sp) = interval(5, "D", 20);
        let sp = Arc::new(sp);
        let ens: Vec<FieldSample> = (0..3)
            .map(|r| {
                let mut st = init_simulation(sp.clone(), 1.0, 20, r, None).unwrap();
                st.chain = st.chain.clone().without_noise();
                advance(&mut st, 1.0).unwrap();
                field_at(&st, &[3, 8, 12]).unwrap()
            })
            .collect();
        let pairs = MetricTable {
            rows: vec![(3, 8, 0.1), (8, 12, 0.2)],
        };
        let v = empirical_variogram(&ens, &pairs).unwrap();
        assert!(v.rows.iter().all(|r| r.value == 0.0));
        assert!(empirical_variogram(&ens[..1], &pairs).is_err());
        let mut bad = ens.clone();
        bad[1].vertices = vec![3, 8];
        bad[1].values.pop();
        assert!(empirical_variogram(&bad, &pairs).is_err());
    }

    #[test]
    fn empirical_spatial_variogram_agrees_with_exact() {
        let (_, sp) = interval(6, "D", 30);
        let sp = Arc::new(sp);
        let verts = [10, 20, 33, 40];
        let pairs = interval_resistances(6, &[(10, 20), (20, 33), (10, 40)]);
        let ens: Vec<FieldSample> = (0..4000)
            .map(|r| {
                let mut st = init_simulation(sp.clone(), 1.0, 30, crate::simulator::replica_seed(17, r), None).unwrap();
                advance(&mut st, 2.0).unwrap();
                field_at(&st, &verts).unwrap()
            })
            .collect();
        let emp = empirical_variogram(&ens, &pairs).unwrap();
        let exact = spatial_variogram_exact(&sp, 1.0, 2.0, &pairs, 30).unwrap();
        for (e, x) in emp.rows.iter().zip(&exact.rows) {
            assert!((e.value - x.value).abs() < 4.0 * e.stderr.unwrap(), "{e:?} vs {x:?}");
        }
    }

    #[test]
    fn empirical_temporal_variogram_agrees_with_exact() {
        let (_, sp) = interval(5, "D", 10);
        let sp = Arc::new(sp);
        let paths: Vec<Vec<FieldSample>> = (0..4000)
            .map(|r| {
                let mut st = init_simulation(sp.clone(), 1.0, 10, crate::simulator::replica_seed(5, r), None).unwrap();
                advance(&mut st, 1.0).unwrap();
                let mut out = vec![field_at(&st, &[16]).unwrap()];
                for h in [0.05, 0.15] {
                    advance(&mut st, h).unwrap();
                    out.push(field_at(&st, &[16]).unwrap());
                }
                out
            })
            .collect();
        let emp = empirical_temporal_variogram(&paths, 16, 0).unwrap();
        let exact = temporal_variogram_exact(&sp, 1.0, 16, 1.0, &[0.05, 0.2], 10).unwrap();
        for (e, x) in emp.rows.iter().zip(&exact.rows) {
            assert!((e.separation - x.separation).abs() < 1e-12);
            assert!((e.value - x.value).abs() < 4.0 * e.stderr.unwrap());
        }
    }

    #[test]
    fn truncation_sensitivity_shrinks_with_lag() {
        let (_, sp) = interval(8, "D", 200);
        let lags = [1e-4, 1e-2];
        let d = truncation_sensitivity(&sp, 1.0, 128, 2.0, &lags, 200).unwrap();
        assert!(d[0] > d[1] && d[1] >= 0.0);
    }

    #[test]
    fn csv_and_json_layout() {
        let t = VariogramTable::exact(VariogramKind::L2, VariogramMeta::default(), [(0.5, 1.0)]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "separation,value,stderr\n5e-1,1e0,\n");
        let pts = log_grid(1.0, 8.0, 4);
        let t = VariogramTable::exact(VariogramKind::L2, VariogramMeta::default(), pts.iter().map(|&x| (x, x * x)));
        let f = fit_exponent(&t, (1.0, 8.0)).unwrap();
        let mut buf = Vec::new();
        f.write_json(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert!((v["slope"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn variograms_are_nonnegative_and_monotone_in_k(
            k in 2usize..30, x in 1usize..33, y in 1usize..33, lag in 1e-4f64..1.0, beta in 0.0f64..2.0,
        ) {
            let (_, sp) = interval(5, "D", 31);
            let pairs = MetricTable { rows: vec![(x, y, 1.0)] };
            let a = spatial_variogram_exact(&sp, beta, 1.5, &pairs, k).unwrap().rows[0].value;
            let b = spatial_variogram_exact(&sp, beta, 1.5, &pairs, k + 1).unwrap().rows[0].value;
            prop_assert!(a >= 0.0 && b >= a);
            let a = temporal_variogram_exact(&sp, beta, x, 1.0, &[lag], k).unwrap().rows[0].value;
            let b = temporal_variogram_exact(&sp, beta, x, 1.0, &[lag], k + 1).unwrap().rows[0].value;
            prop_assert!(a >= 0.0 && b >= a);
        }

        #[test]
        fn increment_variance_is_nonnegative(beta in 0.0f64..3.0, lambda in 0.0f64..1e4, s in 0.0f64..5.0, t in 0.0f64..2.0) {
            let p = WaveParams::new(beta, lambda).unwrap();
            prop_assert!(increment_variance(&p, s, t).unwrap() >= 0.0);
        }
    }
}
