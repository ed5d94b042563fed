//! Exact discrete spectra of the interval and gasket presets.
//!
//! The lumped-mass generalised eigenvalues at level n are scaled values of
//! the normalised graph Laplacian. For the interval these are
//! 2·4ⁿ(1 − cos(kπ/2ⁿ)). For the gasket they are 1.5·5ⁿ·x, where the
//! multiset of x is generated from level 1 by the inverse branches
//! φ_±(x) = (5 ± √(25 − 4x))/2 plus the new values 5 and 6 born at each
//! level.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::energy::{BoundarySet, HarmonicStructure};
use crate::error::{bail, Result};
use crate::model::Model;
use crate::presets;
use crate::topology::FractalSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DecimationFamily {
    Interval,
    Gasket,
}

impl DecimationFamily {
    pub fn preset(&self) -> Model {
        match self {
            DecimationFamily::Interval => presets::interval(),
            DecimationFamily::Gasket => presets::gasket(),
        }
    }

    pub(crate) fn parts(&self) -> (FractalSpec, HarmonicStructure) {
        match self {
            DecimationFamily::Interval => presets::interval_parts(),
            DecimationFamily::Gasket => presets::gasket_parts(),
        }
    }

    pub fn max_level(&self) -> usize {
        match self {
            DecimationFamily::Interval => 22,
            DecimationFamily::Gasket => 18,
        }
    }
}

/// Distinct eigenvalues with multiplicities, ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct DecimatedSpectrum {
    pub level: usize,
    pub values: Vec<(f64, u64)>,
}

impl DecimatedSpectrum {
    pub fn dimension(&self) -> u64 {
        self.values.iter().map(|v| v.1).sum()
    }

    /// The lowest `k` eigenvalues listed with multiplicity.
    pub fn lowest(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(k);
        for &(v, c) in &self.values {
            for _ in 0..c {
                if out.len() == k {
                    return out;
                }
                out.push(v);
            }
        }
        out
    }
}

fn branch_minus(x: f64) -> f64 {
    // (5 − √(25 − 4x))/2 without cancellation near x = 0.
    2.0 * x / (5.0 + (25.0 - 4.0 * x).sqrt())
}

fn branch_plus(x: f64) -> f64 {
    0.5 * (5.0 + (25.0 - 4.0 * x).sqrt())
}

fn gasket_values(level: usize, neumann: bool) -> BTreeMap<u64, u64> {
    let key = |x: f64| x.to_bits();
    let mut cur: BTreeMap<u64, u64> = if neumann {
        [(0.0, 1), (3.0, 2), (6.0, 3)].into_iter().map(|(x, c)| (key(x), c)).collect()
    } else {
        [(2.0, 1), (5.0, 2)].into_iter().map(|(x, c)| (key(x), c)).collect()
    };
    let mut dim: u64 = if neumann { 6 } else { 3 };
    for m in 1..level as u32 {
        let mut next = BTreeMap::new();
        let mut add = |x: f64, c: u64| *next.entry(key(x)).or_insert(0) += c;
        for (&bits, &c) in &cur {
            let x = f64::from_bits(bits);
            if x == 6.0 {
                add(3.0, c);
            } else {
                add(branch_minus(x), c);
                add(branch_plus(x), c);
            }
        }
        let born5 = if neumann { (3u64.pow(m) - 3) / 2 } else { (3u64.pow(m) + 3) / 2 };
        if born5 > 0 {
            add(5.0, born5);
        }
        add(6.0, dim);
        cur = next;
        dim = if neumann {
            (3u64.pow(m + 2) + 3) / 2
        } else {
            (3u64.pow(m + 2) - 3) / 2
        };
    }
    cur
}

/// Eigenvalues of (−H_n)φ = λMφ for a decimation family with b = N or D.
pub fn decimated_spectrum(
    family: DecimationFamily,
    level: usize,
    b: &BoundarySet,
) -> Result<DecimatedSpectrum> {
    let neumann = b.is_neumann();
    if !(neumann || b.is_dirichlet()) {
        bail!(Validation, "exact decimation spectra are available for b = N or D only");
    }
    if level == 0 || level > family.max_level() {
        bail!(Validation, "decimation level must lie in 1..={}, got {level}", family.max_level());
    }
    let mut values: Vec<(f64, u64)> = match family {
        DecimationFamily::Interval => {
            let n = 1u64 << level;
            let scale = 2.0 * (n as f64).powi(2);
            let ks = if neumann { 0..=n } else { 1..=n - 1 };
            ks.map(|k| {
                let theta = std::f64::consts::PI * k as f64 / n as f64;
                (scale * 2.0 * (0.5 * theta).sin().powi(2), 1)
            })
            .collect()
        }
        DecimationFamily::Gasket => {
            let scale = 1.5 * 5f64.powi(level as i32);
            gasket_values(level, neumann)
                .into_iter()
                .map(|(bits, c)| (scale * f64::from_bits(bits), c))
                .collect()
        }
    };
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(DecimatedSpectrum { level, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::solve_eigenvalues;

    #[test]
    fn gasket_decimation_matches_dense_solver() {
        let m = presets::gasket();
        for b in [BoundarySet::dirichlet(3), BoundarySet::neumann(3)] {
            for level in 1..=4 {
                let sys = m.system(level, &b).unwrap();
                let dense = solve_eigenvalues(&sys, sys.dim()).unwrap();
                let dec = decimated_spectrum(DecimationFamily::Gasket, level, &b).unwrap();
                assert_eq!(dec.dimension() as usize, sys.dim());
                let list = dec.lowest(sys.dim());
                for (x, y) in dense.iter().zip(&list) {
                    assert!((x - y).abs() < 1e-9 * y.max(1.0), "level {level} {b}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn interval_decimation_matches_dense_solver() {
        let m = presets::interval();
        for b in [BoundarySet::dirichlet(2), BoundarySet::neumann(2)] {
            let sys = m.system(7, &b).unwrap();
            let dense = solve_eigenvalues(&sys, sys.dim()).unwrap();
            let dec = decimated_spectrum(DecimationFamily::Interval, 7, &b).unwrap();
            for (x, y) in dense.iter().zip(dec.lowest(sys.dim())) {
                assert!((x - y).abs() < 1e-9 * y.max(1.0));
            }
        }
    }

    #[test]
    fn mixed_boundary_is_rejected() {
        let b = BoundarySet::from_free(vec![true, false, false]);
        assert!(decimated_spectrum(DecimationFamily::Gasket, 3, &b).is_err());
        assert!(decimated_spectrum(DecimationFamily::Gasket, 0, &BoundarySet::dirichlet(3)).is_err());
    }

    #[test]
    fn deep_levels_keep_dimension() {
        let d = decimated_spectrum(DecimationFamily::Gasket, 12, &BoundarySet::dirichlet(3)).unwrap();
        assert_eq!(d.dimension(), (3u64.pow(13) - 3) / 2);
        let lowest = d.values[0].0;
        // Converges to the continuum ground state ≈ 1.5·5ⁿ·x with x ∝ 5⁻ⁿ.
        let prev = decimated_spectrum(DecimationFamily::Gasket, 11, &BoundarySet::dirichlet(3)).unwrap();
        assert!((lowest / prev.values[0].0 - 1.0).abs() < 1e-6);
    }
}
