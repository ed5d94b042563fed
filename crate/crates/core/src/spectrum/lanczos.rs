//! Gauss quadrature of spectral measures μ_f = Σ_k ⟨f, φ_k⟩_μ² δ_{λ_k}.
//!
//! For a spectral function g, Σ_k g(λ_k)⟨f, φ_k⟩² over the full spectrum is
//! approximated by the Gauss rule obtained from Lanczos on
//! M^{-1/2}(−H)M^{-1/2} started at M^{1/2}f. Point evaluations use
//! f = δ_x/m_x, so ⟨f, φ_k⟩ = φ_k(x). No eigenvectors are formed, so this
//! scales to systems far beyond the dense limit.

use crate::energy::EnergySystem;
use crate::error::{bail, Result};
use crate::sparse::CsrMatrix;

/// Gauss rule: nodes θ_j and weights summing to ‖M^{1/2}f‖².
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralMeasure {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpectralMeasure {
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * g(t)).sum()
    }
}

/// Lanczos recurrence that can be extended on demand.
pub struct LanczosRun {
    op: CsrMatrix,
    q_prev: Vec<f64>,
    q: Vec<f64>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    exhausted: bool,
    norm2: f64,
}

impl LanczosRun {
    /// Measure of point evaluation at `vertex`.
    pub fn new(system: &EnergySystem, vertex: usize) -> Result<Self> {
        let Some(row) = system.index_of(vertex)? else {
            bail!(Validation, "vertex {vertex} is pinned; its spectral measure is zero");
        };
        let mut start = vec![0.0; system.dim()];
        start[row] = system.mass[row].sqrt().recip();
        Self::from_start(system, start)
    }

    /// Measure of the increment f(x) − f(y); pinned endpoints contribute 0.
    pub fn for_pair(system: &EnergySystem, x: usize, y: usize) -> Result<Self> {
        let mut start = vec![0.0; system.dim()];
        if let Some(r) = system.index_of(x)? {
            start[r] += system.mass[r].sqrt().recip();
        }
        if let Some(r) = system.index_of(y)? {
            start[r] -= system.mass[r].sqrt().recip();
        }
        Self::from_start(system, start)
    }

    /// `start` is M^{1/2}f in reduced coordinates.
    pub fn from_start(system: &EnergySystem, mut start: Vec<f64>) -> Result<Self> {
        if start.len() != system.dim() {
            bail!(Validation, "start vector has {} entries, system has {}", start.len(), system.dim());
        }
        let norm2: f64 = start.iter().map(|x| x * x).sum();
        if !(norm2 > 0.0 && norm2.is_finite()) {
            bail!(Validation, "Lanczos start vector is zero or non-finite");
        }
        let inv = norm2.sqrt().recip();
        start.iter_mut().for_each(|x| *x *= inv);
        let s: Vec<f64> = system.mass.iter().map(|m| m.sqrt().recip()).collect();
        let op = system.energy.scaled(&s, &s).negated();
        Ok(LanczosRun {
            op,
            q_prev: vec![0.0; system.dim()],
            q: start,
            alphas: Vec::new(),
            betas: Vec::new(),
            exhausted: false,
            norm2,
        })
    }

    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    /// True once an invariant subspace was reached; the rule is then exact.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn extend_to(&mut self, steps: usize) {
        let mut w = vec![0.0; self.q.len()];
        while self.alphas.len() < steps && !self.exhausted {
            self.op.mul_vec(&self.q, &mut w);
            let b_prev = self.betas.last().copied().unwrap_or(0.0);
            for (wi, qp) in w.iter_mut().zip(&self.q_prev) {
                *wi -= b_prev * qp;
            }
            let a: f64 = w.iter().zip(&self.q).map(|(x, y)| x * y).sum();
            for (wi, qi) in w.iter_mut().zip(&self.q) {
                *wi -= a * qi;
            }
            self.alphas.push(a);
            let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = a.abs() + b_prev;
            if b <= 1e-13 * scale.max(f64::MIN_POSITIVE) || self.alphas.len() == self.q.len() {
                self.exhausted = true;
                break;
            }
            self.betas.push(b);
            std::mem::swap(&mut self.q_prev, &mut self.q);
            for (qi, wi) in self.q.iter_mut().zip(&w) {
                *qi = wi / b;
            }
        }
    }

    /// Gauss rule from the first `steps` Lanczos coefficients.
    pub fn measure(&self, steps: usize) -> Result<SpectralMeasure> {
        let m = steps.min(self.alphas.len());
        if m == 0 {
            bail!(Validation, "no Lanczos steps available");
        }
        let (nodes, first) = tridiagonal_eigen(&self.alphas[..m], &self.betas[..m - 1])?;
        Ok(SpectralMeasure {
            nodes: nodes.iter().map(|x| x.max(0.0)).collect(),
            weights: first.iter().map(|z| z * z * self.norm2).collect(),
        })
    }
}

/// Eigenvalues and first eigenvector components of the symmetric
/// tridiagonal matrix with diagonal `d` and off-diagonal `e`, by implicit QL.
pub fn tridiagonal_eigen(d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    if e.len() + 1 != n {
        bail!(Validation, "tridiagonal sizes {} and {} do not match", n, e.len());
    }
    let mut d = d.to_vec();
    let mut e: Vec<f64> = e.iter().copied().chain(std::iter::once(0.0)).collect();
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                bail!(Numerical, "tridiagonal QL did not converge");
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

/// Evaluates `eval` on Gauss rules of doubling size until two successive
/// rules agree to `rel_tol` in every component.
pub fn converged<F>(
    run: &mut LanczosRun,
    start: usize,
    max_steps: usize,
    rel_tol: f64,
    eval: F,
) -> Result<(Vec<f64>, usize)>
where
    F: Fn(&SpectralMeasure) -> Result<Vec<f64>>,
{
    let mut m = start.max(8);
    run.extend_to(m);
    let mut prev = eval(&run.measure(m / 2)?)?;
    loop {
        let cur = eval(&run.measure(m)?)?;
        let close = cur
            .iter()
            .zip(&prev)
            .all(|(a, b)| (a - b).abs() <= rel_tol * a.abs().max(b.abs()));
        if close || run.exhausted() {
            return Ok((cur, run.steps().min(m)));
        }
        if 2 * m > max_steps {
            bail!(
                Numerical,
                "spectral quadrature not converged after {m} Lanczos steps (tolerance {rel_tol})"
            );
        }
        m *= 2;
        run.extend_to(m);
        prev = cur;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::BoundarySet;
    use crate::presets;
    use crate::spectrum::solve_spectrum;
    use faer::{Mat, Side};

    #[test]
    fn tridiagonal_solver_matches_dense() {
        let d = [2.0, -1.0, 0.5, 3.0, 1.0];
        let e = [1.0, 0.3, -2.0, 0.7];
        let (vals, first) = tridiagonal_eigen(&d, &e).unwrap();
        let a = Mat::<f64>::from_fn(5, 5, |i, j| {
            if i == j {
                d[i]
            } else if i + 1 == j {
                e[i]
            } else if j + 1 == i {
                e[j]
            } else {
                0.0
            }
        });
        let evd = a.self_adjoint_eigen(Side::Lower).unwrap();
        let s = evd.S().column_vector();
        let mut pairs: Vec<(f64, f64)> = vals.iter().copied().zip(first.iter().map(|z| z * z)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (j, (v, w)) in pairs.iter().enumerate() {
            assert!((v - s[j]).abs() < 1e-12);
            assert!((w - evd.U()[(0, j)].powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_rule_reproduces_mode_sums() {
        let m = presets::gasket();
        let sys = m.system(4, &BoundarySet::dirichlet(3)).unwrap();
        let spec = solve_spectrum(&sys, sys.dim()).unwrap();
        let x = 7;
        let g = |l: f64| (-0.01 * l).exp() / (1.0 + l);
        let exact: f64 = (0..spec.len())
            .map(|k| g(spec.eigenvalues[k]) * spec.phi(k, x).unwrap().powi(2))
            .sum();
        let mut run = LanczosRun::new(&sys, x).unwrap();
        let (v, _) = converged(&mut run, 8, 512, 1e-12, |mu| Ok(vec![mu.integrate(g)])).unwrap();
        assert!((v[0] - exact).abs() < 1e-10 * exact);
        let total = run.measure(run.steps()).unwrap().weights.iter().sum::<f64>();
        assert!((total * sys.mass[sys.index_of(x).unwrap().unwrap()] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pair_measure_reproduces_increment_sums() {
        let m = presets::gasket();
        let sys = m.system(3, &BoundarySet::neumann(3)).unwrap();
        let spec = solve_spectrum(&sys, sys.dim()).unwrap();
        let (x, y) = (4, 11);
        let g = |l: f64| 1.0 / (1.0 + l);
        let exact: f64 = (0..spec.len())
            .map(|k| g(spec.eigenvalues[k]) * (spec.phi(k, x).unwrap() - spec.phi(k, y).unwrap()).powi(2))
            .sum();
        let mut run = LanczosRun::for_pair(&sys, x, y).unwrap();
        let (v, _) = converged(&mut run, 8, 512, 1e-13, |mu| Ok(vec![mu.integrate(g)])).unwrap();
        assert!((v[0] - exact).abs() < 1e-10 * exact);
        assert!(LanczosRun::for_pair(&sys, x, x).is_err());
    }

    #[test]
    fn pinned_vertex_is_rejected() {
        let m = presets::interval();
        let sys = m.system(4, &BoundarySet::dirichlet(2)).unwrap();
        assert!(LanczosRun::new(&sys, 0).is_err());
    }
}
