//! Combinatorial self-similar structure: vertex sets V_n, cells and gluings.
//!
//! A fractal is described by its boundary labels F⁰, by which contraction
//! images ψ_i(p) are themselves boundary points, and by the level-1 gluing
//! relations ψ_i(p) ≡ ψ_j(q). Deeper levels are generated self-similarly.

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// One side of a gluing relation: the image ψ_map(label). `map` is 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Endpoint {
    pub map: usize,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gluing(pub Endpoint, pub Endpoint);

/// Affine map x ↦ linear·x + shift used only for coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub linear: Vec<Vec<f64>>,
    pub shift: Vec<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.linear
            .iter()
            .zip(&self.shift)
            .map(|(row, s)| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + s)
            .collect()
    }
}

/// Optional Euclidean realisation: coordinates of F⁰ and the maps ψ_i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub points: Vec<Vec<f64>>,
    pub maps: Vec<AffineMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FractalSpec {
    pub name: String,
    pub contractions: usize,
    pub boundary: Vec<String>,
    /// `images[i][p]` is `Some(q)` when ψ_i(x_p) = x_q, `None` when interior.
    pub images: Vec<Vec<Option<String>>>,
    pub gluings: Vec<Gluing>,
    pub embedding: Option<Embedding>,
}

impl FractalSpec {
    pub fn boundary_size(&self) -> usize {
        self.boundary.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.boundary.iter().position(|b| b == label)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GluingReport {
    /// Number of merges performed when identifying interior image points.
    pub identifications: usize,
    pub interior_classes: usize,
    pub level1_vertices: usize,
}

/// Index form of a validated spec.
#[derive(Clone, Debug)]
pub(crate) struct Resolved {
    pub m: usize,
    pub n0: usize,
    /// `Some(q)` when ψ_i(x_p) = x_q.
    pub boundary_image: Vec<Vec<Option<usize>>>,
    /// Interior class of ψ_i(x_p); meaningless where `boundary_image` is set.
    pub class: Vec<Vec<usize>>,
    pub n_classes: usize,
}

fn resolve(spec: &FractalSpec) -> Result<(Resolved, GluingReport)> {
    let m = spec.contractions;
    let n0 = spec.boundary_size();
    if m < 2 {
        bail!(Validation, "need at least 2 contractions, got {m}");
    }
    if n0 < 2 {
        bail!(Validation, "boundary needs at least 2 labels, got {n0}");
    }
    for (a, la) in spec.boundary.iter().enumerate() {
        if spec.boundary[..a].contains(la) {
            bail!(Validation, "duplicate boundary label '{la}'");
        }
    }
    if spec.images.len() != m {
        bail!(
            Validation,
            "images has {} rows but M = {m}",
            spec.images.len()
        );
    }
    let mut boundary_image = vec![vec![None; n0]; m];
    let mut hit = vec![None::<(usize, usize)>; n0];
    for (i, row) in spec.images.iter().enumerate() {
        if row.len() != n0 {
            bail!(
                Validation,
                "images row {} has {} entries, expected {n0}",
                i + 1,
                row.len()
            );
        }
        for (p, img) in row.iter().enumerate() {
            let Some(q) = img else { continue };
            let Some(qi) = spec.label_index(q) else {
                bail!(Structural, "image ψ_{}({}) = '{q}' is not a boundary label", i + 1, spec.boundary[p]);
            };
            if let Some((j, pp)) = hit[qi] {
                bail!(
                    Structural,
                    "boundary point '{q}' is the image of both ψ_{}({}) and ψ_{}({})",
                    j + 1,
                    spec.boundary[pp],
                    i + 1,
                    spec.boundary[p]
                );
            }
            hit[qi] = Some((i, p));
            boundary_image[i][p] = Some(qi);
        }
    }
    if let Some(q) = hit.iter().position(Option::is_none) {
        bail!(
            Structural,
            "boundary point '{}' is not the image of any ψ_i",
            spec.boundary[q]
        );
    }

    let mut uf = UnionFind::<usize>::new(m * n0);
    let mut merges = 0;
    for g in &spec.gluings {
        let mut ends = [0usize; 2];
        for (slot, e) in [&g.0, &g.1].into_iter().enumerate() {
            let describe = || {
                format!(
                    "gluing ψ_{}({}) ~ ψ_{}({})",
                    g.0.map + 1,
                    g.0.label,
                    g.1.map + 1,
                    g.1.label
                )
            };
            if e.map >= m {
                bail!(Structural, "{}: contraction index out of range 1..={m}", describe());
            }
            let Some(p) = spec.label_index(&e.label) else {
                bail!(Structural, "{}: unknown label '{}'", describe(), e.label);
            };
            if boundary_image[e.map][p].is_some() {
                bail!(Structural, "{}: ψ_{}({}) is a boundary point", describe(), e.map + 1, e.label);
            }
            ends[slot] = e.map * n0 + p;
        }
        if g.0.map == g.1.map {
            bail!(
                Structural,
                "gluing ψ_{}({}) ~ ψ_{}({}) identifies two points of the same cell",
                g.0.map + 1,
                g.0.label,
                g.1.map + 1,
                g.1.label
            );
        }
        if uf.union(ends[0], ends[1]) {
            merges += 1;
        }
    }

    // Classes are numbered in lexicographic order of their minimal member (i, p).
    let mut class = vec![vec![usize::MAX; n0]; m];
    let mut root_class = vec![usize::MAX; m * n0];
    let mut n_classes = 0;
    for i in 0..m {
        for p in 0..n0 {
            if boundary_image[i][p].is_some() {
                continue;
            }
            let root = uf.find(i * n0 + p);
            if root_class[root] == usize::MAX {
                root_class[root] = n_classes;
                n_classes += 1;
            }
            class[i][p] = root_class[root];
        }
    }
    // A class meeting the same cell twice would fold a cell onto itself.
    for i in 0..m {
        for p in 0..n0 {
            for q in p + 1..n0 {
                if boundary_image[i][p].is_none()
                    && boundary_image[i][q].is_none()
                    && class[i][p] == class[i][q]
                {
                    bail!(
                        Structural,
                        "gluings identify ψ_{}({}) with ψ_{}({})",
                        i + 1,
                        spec.boundary[p],
                        i + 1,
                        spec.boundary[q]
                    );
                }
            }
        }
    }

    let resolved = Resolved {
        m,
        n0,
        boundary_image,
        class,
        n_classes,
    };
    let level1 = expand_resolved(&resolved, 1);
    if !cells_connected(&level1) {
        bail!(Structural, "level-1 complex is disconnected");
    }
    let report = GluingReport {
        identifications: merges,
        interior_classes: n_classes,
        level1_vertices: n0 + n_classes,
    };
    Ok((resolved, report))
}

fn cells_connected(c: &VertexComplex) -> bool {
    let mut uf = UnionFind::<usize>::new(c.num_vertices());
    for cell in c.cells() {
        for &v in &cell[1..] {
            uf.union(cell[0], v);
        }
    }
    let r0 = uf.find(0);
    (0..c.num_vertices()).all(|v| uf.find(v) == r0)
}

/// Checks gluing consistency and level-1 connectivity.
pub fn verify_gluing(spec: &FractalSpec) -> Result<GluingReport> {
    resolve(spec).map(|(_, report)| report)
}

/// Where a vertex first appears: cell `word` (a word of length `level`,
/// encoded base M) at boundary label `label`. Level-0 vertices are F⁰.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VertexOrigin {
    pub level: u32,
    pub word: u64,
    pub label: u32,
}

/// The level-n vertex set V_n together with the cell incidence.
///
/// Vertex ids are ordered by birth level and then by the lexicographically
/// smallest (word, label) representing the vertex at its birth level, so
/// V_k occupies ids `0..level_vertex_count(k)` for every k ≤ n. Boundary
/// label p is vertex p.
#[derive(Clone, Debug)]
pub struct VertexComplex {
    level: usize,
    m: usize,
    n0: usize,
    cell_vertices: Vec<usize>,
    origins: Vec<VertexOrigin>,
    level_counts: Vec<usize>,
}

impl VertexComplex {
    pub fn level(&self) -> usize {
        self.level
    }
    pub fn contractions(&self) -> usize {
        self.m
    }
    pub fn boundary_size(&self) -> usize {
        self.n0
    }
    pub fn num_vertices(&self) -> usize {
        self.origins.len()
    }
    pub fn num_cells(&self) -> usize {
        self.cell_vertices.len() / self.n0
    }
    /// Vertex ids of cell `c`, indexed by boundary label.
    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cell_vertices[c * self.n0..(c + 1) * self.n0]
    }
    pub fn cells(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.cell_vertices.chunks_exact(self.n0)
    }
    pub fn origin(&self, v: usize) -> VertexOrigin {
        self.origins[v]
    }
    /// |V_k| for k ≤ level.
    pub fn level_vertex_count(&self, k: usize) -> usize {
        self.level_counts[k.min(self.level)]
    }
    /// Vertex at boundary label `label` of the level-n cell `word`.
    pub fn vertex_at(&self, word: &[usize], label: usize) -> Result<usize> {
        if word.len() != self.level || label >= self.n0 || word.iter().any(|&d| d >= self.m) {
            bail!(
                Validation,
                "address {word:?}/{label} is not a level-{} cell label",
                self.level
            );
        }
        Ok(self.cell(word_index(word, self.m) as usize)[label])
    }

    /// Euclidean coordinates of every vertex.
    pub fn coordinates(&self, emb: &Embedding) -> Result<Vec<Vec<f64>>> {
        if emb.points.len() != self.n0 || emb.maps.len() != self.m {
            bail!(
                Validation,
                "embedding needs {} points and {} maps",
                self.n0,
                self.m
            );
        }
        Ok(self
            .origins
            .iter()
            .map(|o| {
                let digits = word_digits(o.word, o.level as usize, self.m);
                digits
                    .iter()
                    .rev()
                    .fold(emb.points[o.label as usize].clone(), |x, &i| {
                        emb.maps[i].apply(&x)
                    })
            })
            .collect())
    }
}

/// Base-M digits of a word index, most significant first.
pub fn word_digits(mut index: u64, len: usize, m: usize) -> Vec<usize> {
    let mut d = vec![0; len];
    for slot in d.iter_mut().rev() {
        *slot = (index % m as u64) as usize;
        index /= m as u64;
    }
    d
}

pub fn word_index(word: &[usize], m: usize) -> u64 {
    word.iter().fold(0u64, |acc, &d| acc * m as u64 + d as u64)
}

/// Largest number of level-n cells [`expand_complex`] will build.
pub const MAX_CELLS: u64 = 1 << 26;

fn expand_resolved(r: &Resolved, n: usize) -> VertexComplex {
    let (m, n0, nc) = (r.m, r.n0, r.n_classes);
    let mut cells: Vec<usize> = (0..n0).collect();
    let mut origins: Vec<VertexOrigin> = (0..n0)
        .map(|p| VertexOrigin {
            level: 0,
            word: 0,
            label: p as u32,
        })
        .collect();
    let mut level_counts = vec![n0];

    let mut min_rep = vec![(0usize, 0usize); nc];
    for c in 0..nc {
        min_rep[c] = (0..m)
            .flat_map(|i| (0..n0).map(move |p| (i, p)))
            .find(|&(i, p)| r.boundary_image[i][p].is_none() && r.class[i][p] == c)
            .expect("every class has a member");
    }

    for k in 1..=n {
        let parents = cells.len() / n0;
        let base = origins.len();
        let mut next = Vec::with_capacity(parents * m * n0);
        origins.reserve(parents * nc);
        for w in 0..parents {
            let parent = &cells[w * n0..(w + 1) * n0];
            for i in 0..m {
                for p in 0..n0 {
                    next.push(match r.boundary_image[i][p] {
                        Some(q) => parent[q],
                        None => base + w * nc + r.class[i][p],
                    });
                }
            }
            for &(i, p) in &min_rep {
                origins.push(VertexOrigin {
                    level: k as u32,
                    word: (w * m + i) as u64,
                    label: p as u32,
                });
            }
        }
        cells = next;
        level_counts.push(origins.len());
    }
    VertexComplex {
        level: n,
        m,
        n0,
        cell_vertices: cells,
        origins,
        level_counts,
    }
}

/// Builds V_n and the level-n cell incidence.
pub fn expand_complex(spec: &FractalSpec, n: usize) -> Result<VertexComplex> {
    let (r, _) = resolve(spec)?;
    let cells = (r.m as u64).checked_pow(n as u32);
    if cells.is_none_or(|c| c > MAX_CELLS) {
        bail!(
            Validation,
            "level {n} needs {}^{n} cells, above the limit of {MAX_CELLS}",
            r.m
        );
    }
    Ok(expand_resolved(&r, n))
}

/// Per-cell scaling data at level n, indexed like the cells of [`VertexComplex`].
#[derive(Clone, Debug)]
pub struct CellTable {
    pub level: usize,
    /// r_w = r_{w_1}⋯r_{w_n}
    pub resistance_scale: Vec<f64>,
    /// μ_w = r_w^{d_H}
    pub mass: Vec<f64>,
}

pub fn cell_table(spec: &FractalSpec, r: &[f64], d_h: f64, n: usize) -> Result<CellTable> {
    let m = spec.contractions;
    if r.len() != m {
        bail!(Validation, "need {m} resistance ratios, got {}", r.len());
    }
    if let Some(x) = r.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        bail!(Validation, "resistance ratio {x} outside (0,1)");
    }
    if !(d_h.is_finite() && d_h > 0.0) {
        bail!(Validation, "Hausdorff exponent must be positive, got {d_h}");
    }
    if (m as u64).checked_pow(n as u32).is_none_or(|c| c > MAX_CELLS) {
        bail!(Validation, "level {n} has too many cells");
    }
    let mu: Vec<f64> = r.iter().map(|x| x.powf(d_h)).collect();
    let mut scale = vec![1.0];
    let mut mass = vec![1.0];
    for _ in 0..n {
        scale = scale.iter().flat_map(|s| r.iter().map(move |x| s * x)).collect();
        mass = mass.iter().flat_map(|s| mu.iter().map(move |x| s * x)).collect();
    }
    Ok(CellTable {
        level: n,
        resistance_scale: scale,
        mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::presets;
    use std::collections::HashMap;

    /// The unique chain ψ_s(x_{p'}) = x_p of length `len`.
    fn lift(spec: &FractalSpec, p: usize, len: usize) -> (Vec<usize>, usize) {
        let mut word = Vec::new();
        let mut label = p;
        for _ in 0..len {
            let (j, q) = (0..spec.contractions)
                .flat_map(|j| (0..spec.boundary_size()).map(move |q| (j, q)))
                .find(|&(j, q)| {
                    spec.images[j][q].as_deref() == Some(spec.boundary[label].as_str())
                })
                .unwrap();
            word.push(j);
            label = q;
        }
        (word, label)
    }

    /// Identifies all (w, p), w ∈ W_n, by propagating every gluing to every
    /// level; returns the class representative of each pair.
    fn brute_force(spec: &FractalSpec, n: usize) -> (usize, Vec<usize>) {
        let m = spec.contractions;
        let n0 = spec.boundary_size();
        let cells = m.pow(n as u32);
        let mut uf = UnionFind::<usize>::new(cells * n0);
        for k in 1..=n {
            for u in 0..m.pow(k as u32 - 1) {
                for g in &spec.gluings {
                    let mut node = [0; 2];
                    for (s, e) in [&g.0, &g.1].into_iter().enumerate() {
                        let p = spec.label_index(&e.label).unwrap();
                        let (tail, q) = lift(spec, p, n - k);
                        let mut w = u * m + e.map;
                        for d in tail {
                            w = w * m + d;
                        }
                        node[s] = w * n0 + q;
                    }
                    uf.union(node[0], node[1]);
                }
            }
        }
        let labels: Vec<usize> = (0..cells * n0).map(|x| uf.find(x)).collect();
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        (distinct.len(), labels)
    }

    #[test]
    fn expansion_matches_brute_force_identification() {
        for spec in [presets::interval().spec, presets::gasket().spec, presets::hata(2.0).spec] {
            for n in 0..=5 {
                let c = expand_complex(&spec, n).unwrap();
                let (count, labels) = brute_force(&spec, n);
                assert_eq!(c.num_vertices(), count, "{} level {n}", spec.name);
                let mut id_of: HashMap<usize, usize> = HashMap::new();
                let mut class_of: HashMap<usize, usize> = HashMap::new();
                for (slot, &v) in c.cell_vertices.iter().enumerate() {
                    assert_eq!(*id_of.entry(labels[slot]).or_insert(v), v);
                    assert_eq!(*class_of.entry(v).or_insert(labels[slot]), labels[slot]);
                }
            }
        }
    }

    #[test]
    fn vertex_counts_follow_known_formulas() {
        let g = presets::gasket().spec;
        let i = presets::interval().spec;
        for n in 0..8 {
            let gc = expand_complex(&g, n).unwrap();
            assert_eq!(gc.num_vertices(), (3usize.pow(n as u32 + 1) + 3) / 2);
            assert_eq!(expand_complex(&i, n).unwrap().num_vertices(), (1 << n) + 1);
        }
    }

    #[test]
    fn lower_levels_are_prefixes() {
        let spec = presets::gasket().spec;
        let deep = expand_complex(&spec, 5).unwrap();
        for k in 0..5 {
            let shallow = expand_complex(&spec, k).unwrap();
            assert_eq!(deep.level_vertex_count(k), shallow.num_vertices());
            assert_eq!(&deep.origins[..shallow.num_vertices()], &shallow.origins[..]);
        }
    }

    #[test]
    fn gasket_coordinates_are_distinct_and_on_the_lattice() {
        let model = presets::gasket();
        let c = expand_complex(&model.spec, 4).unwrap();
        let xy = c.coordinates(model.spec.embedding.as_ref().unwrap()).unwrap();
        let mut keys: Vec<(i64, i64)> = xy
            .iter()
            .map(|p| ((p[0] * 32.0).round() as i64, (p[1] * 32.0 / 3f64.sqrt()).round() as i64))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), c.num_vertices());
        // Every cell is an equilateral triangle of side 2^-4.
        for cell in c.cells() {
            for a in 0..3 {
                let (p, q) = (&xy[cell[a]], &xy[cell[(a + 1) % 3]]);
                let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                assert!((d - 1.0 / 16.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gluing_reports() {
        assert_eq!(verify_gluing(&presets::interval().spec).unwrap().identifications, 1);
        assert_eq!(verify_gluing(&presets::gasket().spec).unwrap().identifications, 3);
        let h = verify_gluing(&presets::hata(2.0).spec).unwrap();
        assert_eq!(h.level1_vertices, 5);
    }

    #[test]
    fn unknown_label_in_gluing_is_structural() {
        let mut spec = presets::gasket().spec;
        spec.gluings[0].1.label = "p9".into();
        let err = verify_gluing(&spec).unwrap_err();
        assert!(matches!(err, Error::Structural(ref s) if s.contains("p9")), "{err}");
        let mut spec = presets::gasket().spec;
        spec.gluings[1].0.map = 7;
        assert!(matches!(verify_gluing(&spec), Err(Error::Structural(_))));
    }

    #[test]
    fn missing_gluing_disconnects() {
        let mut spec = presets::interval().spec;
        spec.gluings.clear();
        assert!(matches!(verify_gluing(&spec), Err(Error::Structural(_))));
    }

    #[test]
    fn too_few_contractions_is_validation() {
        let mut spec = presets::interval().spec;
        spec.contractions = 1;
        spec.images.truncate(1);
        assert!(matches!(verify_gluing(&spec), Err(Error::Validation(_))));
    }

    #[test]
    fn cell_table_masses_sum_to_one() {
        let model = presets::hata(2.0);
        let t = cell_table(&model.spec, &model.harmonic.r, model.dims.d_h, 6).unwrap();
        let total: f64 = t.mass.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(t.resistance_scale.len(), 64);
        assert!(cell_table(&model.spec, &[0.5, 1.2], 1.0, 2).is_err());
    }

    #[test]
    fn word_round_trip() {
        let w = vec![2, 0, 1, 1];
        assert_eq!(word_digits(word_index(&w, 3), 4, 3), w);
    }
}
