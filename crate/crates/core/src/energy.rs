//! Renormalised energy forms, lumped masses and effective resistance.

use std::fmt;
use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use petgraph::unionfind::UnionFind;
use serde::Serialize;

use crate::error::{bail, Error, Result};
use crate::sparse::CsrMatrix;
use crate::topology::{cell_table, expand_complex, CellTable, FractalSpec, VertexComplex};

/// Level-0 conductance matrix A₀ (Laplacian sign: non-negative off-diagonal,
/// zero row sums) and resistance ratios r_i.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicStructure {
    pub a0: Vec<Vec<f64>>,
    pub r: Vec<f64>,
}

impl HarmonicStructure {
    pub fn new(a0: Vec<Vec<f64>>, r: Vec<f64>) -> Result<Self> {
        let n = a0.len();
        if n < 2 || a0.iter().any(|row| row.len() != n) {
            bail!(Validation, "A0 must be a square matrix of size at least 2");
        }
        let scale = a0.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(scale.is_finite() && scale > 0.0) {
            bail!(Validation, "A0 must have finite, not all zero entries");
        }
        let tol = 1e-12 * scale;
        for i in 0..n {
            if a0[i][i] > 0.0 {
                bail!(Validation, "A0[{i}][{i}] = {} is positive", a0[i][i]);
            }
            for j in 0..n {
                if (a0[i][j] - a0[j][i]).abs() > tol {
                    bail!(Validation, "A0 is not symmetric at ({i},{j})");
                }
                if i != j && a0[i][j] < 0.0 {
                    bail!(Validation, "A0[{i}][{j}] = {} is a negative conductance", a0[i][j]);
                }
            }
            let sum: f64 = a0[i].iter().sum();
            if sum.abs() > tol {
                bail!(Validation, "row {i} of A0 sums to {sum}, not 0");
            }
        }
        let mut uf = UnionFind::<usize>::new(n);
        for i in 0..n {
            for j in 0..n {
                if i != j && a0[i][j] > 0.0 {
                    uf.union(i, j);
                }
            }
        }
        if (1..n).any(|i| !uf.equiv(0, i)) {
            bail!(Validation, "A0 is reducible");
        }
        if r.len() < 2 {
            bail!(Validation, "need at least 2 resistance ratios");
        }
        if let Some(x) = r.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
            bail!(Validation, "resistance ratio {x} outside (0,1)");
        }
        Ok(HarmonicStructure { a0, r })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DimensionData {
    /// Root of Σ r_i^d = 1.
    pub d_h: f64,
    /// 2 d_H / (d_H + 1)
    pub d_s: f64,
}

pub fn dimension_exponents(r: &[f64]) -> Result<DimensionData> {
    if r.len() < 2 {
        bail!(Validation, "need at least 2 resistance ratios");
    }
    if let Some(x) = r.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        bail!(Validation, "resistance ratio {x} outside (0,1)");
    }
    let g = |d: f64| r.iter().map(|x| x.powf(d)).sum::<f64>() - 1.0;
    let mut lo = 1e-12;
    let mut hi = 64.0;
    while g(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            bail!(Numerical, "no Hausdorff exponent below {hi}");
        }
    }
    // g is strictly decreasing; bisect to adjacent floats.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let d_h = if g(lo).abs() < g(hi).abs() { lo } else { hi };
    Ok(DimensionData {
        d_h,
        d_s: 2.0 * d_h / (d_h + 1.0),
    })
}

fn check_level(c: &VertexComplex, cells: &CellTable) -> Result<()> {
    if c.level() != cells.level || cells.mass.len() != c.num_cells() {
        bail!(
            Validation,
            "cell table is for level {} but the complex is level {}",
            cells.level,
            c.level()
        );
    }
    Ok(())
}

/// H_n = Σ_w r_w⁻¹ · (A₀ scattered onto the vertices of cell w).
pub fn assemble_energy(
    c: &VertexComplex,
    hs: &HarmonicStructure,
    cells: &CellTable,
) -> Result<CsrMatrix> {
    check_level(c, cells)?;
    let n0 = c.boundary_size();
    if hs.a0.len() != n0 {
        bail!(Validation, "A0 is {}x{} but |F0| = {n0}", hs.a0.len(), hs.a0.len());
    }
    let pattern: Vec<(usize, usize, f64)> = (0..n0)
        .flat_map(|a| (0..n0).map(move |b| (a, b)))
        .map(|(a, b)| (a, b, hs.a0[a][b]))
        .filter(|e| e.2 != 0.0)
        .collect();
    let mut entries = Vec::with_capacity(pattern.len() * c.num_cells());
    for (w, cell) in c.cells().enumerate() {
        let s = 1.0 / cells.resistance_scale[w];
        entries.extend(pattern.iter().map(|&(a, b, v)| (cell[a], cell[b], v * s)));
    }
    Ok(CsrMatrix::from_triplets(c.num_vertices(), entries))
}

/// m(x) = Σ_{w ∋ x} μ_w / |F⁰|
pub fn assemble_mass(c: &VertexComplex, cells: &CellTable) -> Result<Vec<f64>> {
    check_level(c, cells)?;
    let n0 = c.boundary_size() as f64;
    let mut m = vec![0.0; c.num_vertices()];
    for (w, cell) in c.cells().enumerate() {
        for &v in cell {
            m[v] += cells.mass[w] / n0;
        }
    }
    Ok(m)
}

/// The subset b ⊆ F⁰ of boundary labels left free; the rest are pinned to 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoundarySet {
    free: Vec<bool>,
}

impl BoundarySet {
    pub fn neumann(n0: usize) -> Self {
        BoundarySet { free: vec![true; n0] }
    }

    pub fn dirichlet(n0: usize) -> Self {
        BoundarySet { free: vec![false; n0] }
    }

    pub fn from_free(free: Vec<bool>) -> Self {
        BoundarySet { free }
    }

    /// Accepts `N`, `D`, or a comma separated list of free labels.
    pub fn parse(text: &str, labels: &[String]) -> Result<Self> {
        match text.trim() {
            "N" => return Ok(Self::neumann(labels.len())),
            "D" => return Ok(Self::dirichlet(labels.len())),
            _ => {}
        }
        let mut free = vec![false; labels.len()];
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let Some(p) = labels.iter().position(|l| l == item) else {
                bail!(Validation, "unknown boundary label '{item}' (labels: {})", labels.join(","));
            };
            free[p] = true;
        }
        Ok(BoundarySet { free })
    }

    /// All 2^|F⁰| subsets, Dirichlet first and Neumann last.
    pub fn all_subsets(n0: usize) -> Vec<Self> {
        (0..1u32 << n0)
            .map(|mask| BoundarySet {
                free: (0..n0).map(|p| mask >> p & 1 == 1).collect(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn is_free(&self, p: usize) -> bool {
        self.free[p]
    }

    pub fn is_neumann(&self) -> bool {
        self.free.iter().all(|&f| f)
    }

    pub fn is_dirichlet(&self) -> bool {
        self.free.iter().all(|&f| !f)
    }

    /// `N`, `D`, or the free labels joined by commas.
    pub fn describe(&self, labels: &[String]) -> String {
        if self.is_neumann() {
            "N".into()
        } else if self.is_dirichlet() {
            "D".into()
        } else {
            labels
                .iter()
                .zip(&self.free)
                .filter(|(_, f)| **f)
                .map(|(l, _)| l.as_str())
                .collect::<Vec<_>>()
                .join(",")
        }
    }
}

impl fmt::Display for BoundarySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let free: Vec<String> = self
            .free
            .iter()
            .enumerate()
            .filter(|(_, x)| **x)
            .map(|(p, _)| p.to_string())
            .collect();
        write!(f, "{{{}}}", free.join(","))
    }
}

/// Energy and mass restricted to the free vertices V_n \ (F⁰ \ b).
#[derive(Clone, Debug)]
pub struct EnergySystem {
    pub level: usize,
    pub boundary: BoundarySet,
    /// Reduced H (Laplacian sign, negative semi-definite).
    pub energy: CsrMatrix,
    pub mass: Vec<f64>,
    /// Vertex id of each reduced index, ascending.
    pub vertices: Vec<usize>,
    pub total_vertices: usize,
}

impl EnergySystem {
    pub fn dim(&self) -> usize {
        self.vertices.len()
    }

    /// Reduced index of vertex `v`, `None` when pinned.
    pub fn index_of(&self, v: usize) -> Result<Option<usize>> {
        if v >= self.total_vertices {
            bail!(Validation, "vertex {v} is not in V_{} ({} vertices)", self.level, self.total_vertices);
        }
        Ok(self.vertices.binary_search(&v).ok())
    }
}

pub fn reduce_boundary(
    level: usize,
    h: &CsrMatrix,
    mass: &[f64],
    b: &BoundarySet,
) -> Result<EnergySystem> {
    let n = h.dim();
    if mass.len() != n {
        bail!(Validation, "mass has {} entries for {n} vertices", mass.len());
    }
    if b.len() > n {
        bail!(Validation, "boundary set larger than the vertex set");
    }
    if let Some(v) = mass.iter().position(|m| !(*m > 0.0)) {
        bail!(Structural, "vertex {v} has non-positive mass {}", mass[v]);
    }
    let vertices: Vec<usize> = (0..n).filter(|&v| v >= b.len() || b.is_free(v)).collect();
    Ok(EnergySystem {
        level,
        boundary: b.clone(),
        energy: h.principal_submatrix(&vertices),
        mass: vertices.iter().map(|&v| mass[v]).collect(),
        vertices,
        total_vertices: n,
    })
}

/// Schur complement of the level-1 energy onto F⁰ compared with A₀.
#[derive(Clone, Debug, Serialize)]
pub struct HarmonicCheck {
    pub residual: f64,
    pub trace: Vec<Vec<f64>>,
}

impl HarmonicCheck {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn passed(&self) -> bool {
        self.residual < Self::TOLERANCE
    }
}

pub fn verify_harmonic_structure(
    spec: &FractalSpec,
    hs: &HarmonicStructure,
) -> Result<HarmonicCheck> {
    let c = expand_complex(spec, 1)?;
    let cells = cell_table(spec, &hs.r, 1.0, 1)?;
    let h = assemble_energy(&c, hs, &cells)?.to_dense();
    let n0 = c.boundary_size();
    let ni = c.num_vertices() - n0;
    let hbb = h.submatrix(0, 0, n0, n0);
    let hbi = h.submatrix(0, n0, n0, ni);
    let hib = h.submatrix(n0, 0, ni, n0);
    let neg_hii = -h.submatrix(n0, n0, ni, ni);
    let llt = neg_hii
        .llt(Side::Lower)
        .map_err(|_| Error::Structural("interior block of the level-1 energy is singular".into()))?;
    let x = llt.solve(hib);
    let s: Mat<f64> = hbb + hbi * x;
    let mut residual = 0.0f64;
    let trace: Vec<Vec<f64>> = (0..n0)
        .map(|a| {
            (0..n0)
                .map(|b| {
                    residual = residual.max((s[(a, b)] - hs.a0[a][b]).abs());
                    s[(a, b)]
                })
                .collect()
        })
        .collect();
    Ok(HarmonicCheck { residual, trace })
}

/// Grounded factorisation of −H for repeated resistance queries.
pub struct ResistanceSolver {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    ground: usize,
    n: usize,
}

impl ResistanceSolver {
    /// Needs the Neumann system (no pinned vertices).
    pub fn new(system: &EnergySystem) -> Result<Self> {
        if !system.boundary.is_neumann() {
            bail!(Validation, "effective resistance needs the Neumann system (b = N)");
        }
        let n = system.dim();
        let mut uf = UnionFind::<usize>::new(n);
        for i in 0..n {
            for (j, _) in system.energy.row(i) {
                uf.union(i, j);
            }
        }
        if (1..n).any(|i| !uf.equiv(0, i)) {
            bail!(Structural, "energy graph is disconnected");
        }
        let ground = n - 1;
        let keep: Vec<usize> = (0..ground).collect();
        let k = system.energy.principal_submatrix(&keep).negated().to_faer()?;
        let llt = k
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Numerical(format!("grounded Cholesky failed: {e:?}")))?;
        Ok(ResistanceSolver { llt, ground, n })
    }

    /// R(x, y) for reduced indices (vertex ids, since nothing is pinned).
    pub fn resistance(&self, x: usize, y: usize) -> Result<f64> {
        if x >= self.n || y >= self.n {
            bail!(Validation, "vertex ({x}, {y}) outside V ({} vertices)", self.n);
        }
        if x == y {
            return Ok(0.0);
        }
        let mut rhs = Mat::<f64>::zeros(self.ground, 1);
        if x != self.ground {
            rhs[(x, 0)] += 1.0;
        }
        if y != self.ground {
            rhs[(y, 0)] -= 1.0;
        }
        let v = self.llt.solve(&rhs);
        let at = |i: usize| if i == self.ground { 0.0 } else { v[(i, 0)] };
        Ok(at(x) - at(y))
    }

    pub fn table(&self, pairs: &[(usize, usize)]) -> Result<MetricTable> {
        let rows = pairs
            .iter()
            .map(|&(x, y)| Ok((x, y, self.resistance(x, y)?)))
            .collect::<Result<_>>()?;
        Ok(MetricTable { rows })
    }
}

pub fn effective_resistance(system: &EnergySystem, x: usize, y: usize) -> Result<f64> {
    ResistanceSolver::new(system)?.resistance(x, y)
}

/// Effective resistances R(x, y) between selected vertex pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricTable {
    pub rows: Vec<(usize, usize, f64)>,
}

impl MetricTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x_id,y_id,R")?;
        for (x, y, r) in &self.rows {
            writeln!(out, "{x},{y},{r:e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn interval_energy_is_path_laplacian() {
        let m = presets::interval();
        let sys = m.system(3, &BoundarySet::neumann(2)).unwrap();
        // Vertex order: 0, 1, then by birth level.
        let h = &sys.energy;
        assert_eq!(h.get(0, 0), -8.0);
        assert!(h.row_sums().iter().all(|s| s.abs() < 1e-12));
        assert!((sys.mass.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((sys.mass[0] - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn dimensions_of_presets() {
        let g = dimension_exponents(&[0.6; 3]).unwrap();
        let exact = 3f64.ln() / (5f64 / 3.0).ln();
        assert!((g.d_h - exact).abs() < 1e-13);
        assert!((g.d_s - 2.0 * 3f64.ln() / 5f64.ln()).abs() < 1e-13);
        let i = dimension_exponents(&[0.5, 0.5]).unwrap();
        assert!((i.d_h - 1.0).abs() < 1e-14 && (i.d_s - 1.0).abs() < 1e-14);
        assert!(dimension_exponents(&[0.5, 1.0]).is_err());
    }

    #[test]
    fn harmonic_structures_verify() {
        for m in [presets::interval(), presets::gasket(), presets::hata(2.0), presets::hata(3.5)] {
            let chk = verify_harmonic_structure(&m.spec, &m.harmonic).unwrap();
            assert!(chk.passed(), "{} residual {}", m.spec.name, chk.residual);
        }
        let mut g = presets::gasket();
        g.harmonic.r = vec![0.5; 3];
        assert!(verify_harmonic_structure(&g.spec, &g.harmonic).unwrap().residual > 1e-3);
    }

    #[test]
    fn invalid_conductances_are_rejected() {
        let bad = vec![vec![-1.0, 1.0], vec![0.5, -0.5]];
        assert!(matches!(HarmonicStructure::new(bad, vec![0.5, 0.5]), Err(Error::Validation(_))));
        let pos = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        assert!(HarmonicStructure::new(pos, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn boundary_labels_parse() {
        let labels: Vec<String> = ["p1", "p2", "p3"].iter().map(|s| s.to_string()).collect();
        let b = BoundarySet::parse("p1,p3", &labels).unwrap();
        assert!(b.is_free(0) && !b.is_free(1) && b.is_free(2));
        assert_eq!(b.describe(&labels), "p1,p3");
        assert!(BoundarySet::parse("q", &labels).is_err());
        assert!(BoundarySet::parse("N", &labels).unwrap().is_neumann());
        assert_eq!(BoundarySet::all_subsets(3).len(), 8);
    }

    #[test]
    fn interval_resistance_is_distance() {
        let m = presets::interval();
        let sys = m.system(5, &BoundarySet::neumann(2)).unwrap();
        let r = ResistanceSolver::new(&sys).unwrap();
        assert!((r.resistance(0, 1).unwrap() - 1.0).abs() < 1e-12);
        // Vertex 2 is the midpoint.
        assert!((r.resistance(0, 2).unwrap() - 0.5).abs() < 1e-12);
        let d = m.system(5, &BoundarySet::dirichlet(2)).unwrap();
        assert!(matches!(ResistanceSolver::new(&d), Err(Error::Validation(_))));
    }

    #[test]
    fn gasket_boundary_resistance() {
        let m = presets::gasket();
        for n in 1..5 {
            let sys = m.system(n, &BoundarySet::neumann(3)).unwrap();
            assert!((effective_resistance(&sys, 0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_and_level_mismatch() {
        let m = presets::gasket();
        let c = expand_complex(&m.spec, 3).unwrap();
        let t = cell_table(&m.spec, &m.harmonic.r, m.dims.d_h, 2).unwrap();
        assert!(matches!(assemble_mass(&c, &t), Err(Error::Validation(_))));
        let t = cell_table(&m.spec, &m.harmonic.r, m.dims.d_h, 3).unwrap();
        let mass = assemble_mass(&c, &t).unwrap();
        assert!((mass.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }
}
