//! Generalised eigenproblem (−H)φ = λMφ and Weyl-law diagnostics.

pub mod decimation;
pub mod lanczos;

use std::io::Write;

use faer::{Mat, Side};
use serde::Serialize;

use crate::energy::{BoundarySet, DimensionData, EnergySystem};
use crate::error::{bail, Error, Result};
use crate::regression::{ols, LineFit};

/// Largest reduced dimension handed to the dense eigensolver.
pub const DENSE_LIMIT: usize = 12_000;

/// Lowest K eigenpairs, φ mass-orthonormal on the free vertices.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub level: usize,
    pub boundary: BoundarySet,
    pub eigenvalues: Vec<f64>,
    /// Column k holds φ_{k+1} at the free vertices, ordered like `vertices`.
    pub vectors: Mat<f64>,
    pub vertices: Vec<usize>,
    pub mass: Vec<f64>,
    pub total_vertices: usize,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Row of vertex `v` in `vectors`; `None` when pinned.
    pub fn row_of(&self, v: usize) -> Result<Option<usize>> {
        if v >= self.total_vertices {
            bail!(Validation, "vertex {v} is not in V_{} ({} vertices)", self.level, self.total_vertices);
        }
        Ok(self.vertices.binary_search(&v).ok())
    }

    /// φ_k(v) with k 0-based; exactly 0 at pinned vertices.
    pub fn phi(&self, k: usize, v: usize) -> Result<f64> {
        if k >= self.len() {
            bail!(Validation, "mode {} beyond the {} computed", k + 1, self.len());
        }
        Ok(self.row_of(v)?.map_or(0.0, |r| self.vectors[(r, k)]))
    }

    /// Mass inner products ⟨f, φ_k⟩ for f given on all vertex ids.
    pub fn project(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.total_vertices {
            bail!(Validation, "function has {} values for {} vertices", f.len(), self.total_vertices);
        }
        Ok((0..self.len())
            .map(|k| {
                self.vertices
                    .iter()
                    .enumerate()
                    .map(|(r, &v)| self.mass[r] * f[v] * self.vectors[(r, k)])
                    .sum()
            })
            .collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,lambda")?;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            writeln!(out, "{},{l:e}", k + 1)?;
        }
        Ok(())
    }

    /// `vertex_id,phi_1,...,phi_K` over all vertices, pinned rows zero.
    pub fn write_vectors_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.len()).map(|k| format!("phi_{k}")).collect();
        writeln!(out, "vertex_id,{}", header.join(","))?;
        for v in 0..self.total_vertices {
            let row = self.vertices.binary_search(&v).ok();
            let vals: Vec<String> = (0..self.len())
                .map(|k| format!("{:e}", row.map_or(0.0, |r| self.vectors[(r, k)])))
                .collect();
            writeln!(out, "{v},{}", vals.join(","))?;
        }
        Ok(())
    }
}

/// M^{-1/2}(−H)M^{-1/2} as a dense matrix.
fn symmetric_operator(system: &EnergySystem) -> Result<Mat<f64>> {
    let n = system.dim();
    if n > DENSE_LIMIT {
        bail!(
            Validation,
            "dense eigensolve limited to {DENSE_LIMIT} unknowns, system has {n}; use the spectral-measure or decimation routes"
        );
    }
    if let Some(m) = system.mass.iter().find(|m| !(**m > 0.0)) {
        bail!(Structural, "non-positive mass {m}");
    }
    let s: Vec<f64> = system.mass.iter().map(|m| m.sqrt().recip()).collect();
    Ok(system.energy.scaled(&s, &s).negated().to_dense())
}

fn check_count(system: &EnergySystem, k: usize) -> Result<()> {
    if k == 0 || k > system.dim() {
        bail!(Validation, "requested {k} modes but the reduced dimension is {}", system.dim());
    }
    Ok(())
}

pub fn solve_spectrum(system: &EnergySystem, k: usize) -> Result<Spectrum> {
    check_count(system, k)?;
    let a = symmetric_operator(system)?;
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
    let values = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..system.dim()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let n = system.dim();
    let mut vectors = Mat::<f64>::zeros(n, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        eigenvalues.push(values[idx]);
        let phi: Vec<f64> = (0..n).map(|r| u[(r, idx)] / system.mass[r].sqrt()).collect();
        let sign = if phi[sign_pivot(&phi)] < 0.0 { -1.0 } else { 1.0 };
        for (r, p) in phi.iter().enumerate() {
            vectors[(r, col)] = sign * p;
        }
    }
    Ok(Spectrum {
        level: system.level,
        boundary: system.boundary.clone(),
        eigenvalues,
        vectors,
        vertices: system.vertices.clone(),
        mass: system.mass.clone(),
        total_vertices: system.total_vertices,
    })
}

/// First entry whose magnitude is within round-off of the maximum; the
/// spectrum makes this entry positive.
pub fn sign_pivot(v: &[f64]) -> usize {
    let max = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    v.iter().position(|x| x.abs() >= max * (1.0 - 1e-9)).unwrap_or(0)
}

/// Lowest K eigenvalues without eigenvectors.
pub fn solve_eigenvalues(system: &EnergySystem, k: usize) -> Result<Vec<f64>> {
    check_count(system, k)?;
    let a = symmetric_operator(system)?;
    let mut values = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
    values.sort_by(f64::total_cmp);
    values.truncate(k);
    Ok(values)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeylFit {
    /// 1-based inclusive index window.
    pub window: (usize, usize),
    /// Slope of log λ_k against log k.
    pub slope: f64,
    pub intercept: f64,
    pub d_s_estimate: f64,
    /// d_s_estimate − d_s
    pub deviation: f64,
    pub residual_rms: f64,
}

pub fn weyl_diagnostics(
    eigenvalues: &[f64],
    dims: &DimensionData,
    window: (usize, usize),
) -> Result<WeylFit> {
    let (lo, hi) = window;
    if lo < 2 || hi <= lo {
        bail!(Validation, "Weyl window [{lo}, {hi}] must satisfy 2 ≤ lo < hi");
    }
    if hi > eigenvalues.len() {
        bail!(Validation, "Weyl window ends at {hi} but only {} eigenvalues exist", eigenvalues.len());
    }
    if 5 * hi > 4 * eigenvalues.len() {
        bail!(
            Validation,
            "Weyl window reaches into the top 20% of the {} computed modes",
            eigenvalues.len()
        );
    }
    let pts: Vec<(f64, f64)> = (lo..=hi)
        .map(|k| ((k as f64).ln(), eigenvalues[k - 1]))
        .filter(|p| p.1 > 0.0)
        .map(|(x, l)| (x, l.ln()))
        .collect();
    let LineFit { slope, intercept, residual_rms, .. } = ols(&pts)?;
    let d_s_estimate = 2.0 / slope;
    Ok(WeylFit {
        window,
        slope,
        intercept,
        d_s_estimate,
        deviation: d_s_estimate - dims.d_s,
        residual_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use std::f64::consts::PI;

    fn interval_spectrum(level: usize, b: &str, k: usize) -> Spectrum {
        let m = presets::interval();
        let sys = m.system(level, &m.boundary_set(b).unwrap()).unwrap();
        solve_spectrum(&sys, k).unwrap()
    }

    #[test]
    fn interval_dirichlet_matches_classical_values() {
        let s = interval_spectrum(8, "D", 5);
        for k in 1..=5 {
            let exact = (k as f64 * PI).powi(2);
            assert!((s.eigenvalues[k - 1] / exact - 1.0).abs() < 0.01);
        }
        // Discrete values are 4 sin²(kπh/2)/h² exactly.
        let h = 1.0 / 256.0;
        for k in 1..=5 {
            let d = 4.0 * (k as f64 * PI * h / 2.0).sin().powi(2) / (h * h);
            assert!((s.eigenvalues[k - 1] - d).abs() < 1e-9 * d);
        }
    }

    #[test]
    fn interval_neumann_has_constant_ground_state() {
        let s = interval_spectrum(6, "N", 3);
        assert!(s.eigenvalues[0].abs() < 1e-9);
        for v in 0..s.total_vertices {
            assert!((s.phi(0, v).unwrap() - 1.0).abs() < 1e-9);
        }
        assert!(s.eigenvalues[1] > 1.0);
    }

    #[test]
    fn interval_mixed_boundary() {
        // Free at label "0", pinned at "1".
        let s = interval_spectrum(9, "0", 4);
        for k in 1..=4 {
            let exact = ((k as f64 - 0.5) * PI).powi(2);
            assert!((s.eigenvalues[k - 1] / exact - 1.0).abs() < 0.01);
        }
        assert_eq!(s.phi(0, 1).unwrap(), 0.0);
    }

    #[test]
    fn orthonormal_and_rayleigh_consistent() {
        let m = presets::gasket();
        for b in ["N", "D", "p1"] {
            let sys = m.system(3, &m.boundary_set(b).unwrap()).unwrap();
            let s = solve_spectrum(&sys, 20).unwrap();
            for j in 0..20 {
                let col: Vec<f64> = (0..sys.dim()).map(|r| s.vectors[(r, j)]).collect();
                let rq = -sys.energy.quadratic_form(&col);
                assert!((rq - s.eigenvalues[j]).abs() < 1e-8 * s.eigenvalues[j].max(1.0));
                for i in 0..=j {
                    let ip: f64 = (0..sys.dim()).map(|r| sys.mass[r] * s.vectors[(r, i)] * col[r]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-8);
                }
                assert!(col[sign_pivot(&col)] > 0.0);
            }
            assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            assert!(s.eigenvalues[0] >= -1e-10);
        }
    }

    #[test]
    fn eigenvalues_only_agree_with_full_solve() {
        let m = presets::hata(2.0);
        let sys = m.system(5, &BoundarySet::dirichlet(3)).unwrap();
        let a = solve_spectrum(&sys, 10).unwrap().eigenvalues;
        let b = solve_eigenvalues(&sys, 10).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9 * x.max(1.0));
        }
    }

    #[test]
    fn neumann_zero_eigenvalue_is_simple() {
        let m = presets::hata(2.0);
        let sys = m.system(4, &BoundarySet::neumann(3)).unwrap();
        let e = solve_eigenvalues(&sys, 3).unwrap();
        assert!(e[0].abs() < 1e-9 && e[1] > 1e-3);
    }

    #[test]
    fn hoelder_embedding_of_eigenfunctions() {
        // |φ(x) − φ(y)|² ≤ R(x,y)·E(φ) = R(x,y)·λ.
        let m = presets::gasket();
        let sys = m.system(3, &BoundarySet::neumann(3)).unwrap();
        let s = solve_spectrum(&sys, 15).unwrap();
        let r = crate::energy::ResistanceSolver::new(&sys).unwrap();
        for x in 0..sys.dim() {
            for y in (x + 1..sys.dim()).step_by(5) {
                let rxy = r.resistance(x, y).unwrap();
                for k in 0..15 {
                    let d = s.phi(k, x).unwrap() - s.phi(k, y).unwrap();
                    assert!(d * d <= rxy * s.eigenvalues[k] * (1.0 + 1e-9) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn too_many_modes_is_validation() {
        let m = presets::interval();
        let sys = m.system(2, &BoundarySet::dirichlet(2)).unwrap();
        assert!(matches!(solve_spectrum(&sys, 4), Err(Error::Validation(_))));
        assert!(matches!(solve_spectrum(&sys, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn weyl_fit_recovers_interval_law() {
        let m = presets::interval();
        let sys = m.system(10, &BoundarySet::dirichlet(2)).unwrap();
        let e = solve_eigenvalues(&sys, 200).unwrap();
        let fit = weyl_diagnostics(&e, &m.dims, (2, 50)).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.01);
        assert!(fit.deviation.abs() < 0.05);
        assert!(weyl_diagnostics(&e, &m.dims, (5, 5)).is_err());
        assert!(weyl_diagnostics(&e, &m.dims, (2, 190)).is_err());
    }

    #[test]
    fn spectrum_csv_layout() {
        let s = interval_spectrum(3, "D", 2);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,lambda\n1,"));
        let mut buf = Vec::new();
        s.write_vectors_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + s.total_vertices);
        assert!(text.lines().nth(1).unwrap().starts_with("0,0e0,0e0"));
    }
}
