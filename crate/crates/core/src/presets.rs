//! Built-in fractals: unit interval, Sierpinski gasket, Hata tree.

use crate::energy::HarmonicStructure;
use crate::error::{bail, Result};
use crate::model::Model;
use crate::topology::{AffineMap, Embedding, Endpoint, FractalSpec, Gluing};

pub const NAMES: [&str; 3] = ["interval", "gasket", "hata"];

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn img(x: Option<&str>) -> Option<String> {
    x.map(str::to_string)
}

fn glue(i: usize, p: &str, j: usize, q: &str) -> Gluing {
    Gluing(
        Endpoint { map: i, label: p.into() },
        Endpoint { map: j, label: q.into() },
    )
}

fn affine(linear: [[f64; 2]; 2], shift: [f64; 2]) -> AffineMap {
    AffineMap {
        linear: linear.iter().map(|r| r.to_vec()).collect(),
        shift: shift.to_vec(),
    }
}

/// [0,1] with ψ₁(x) = x/2, ψ₂(x) = (x+1)/2.
pub fn interval() -> Model {
    let (spec, hs) = interval_parts();
    Model::new(spec, hs).expect("interval preset")
}

pub(crate) fn interval_parts() -> (FractalSpec, HarmonicStructure) {
    let spec = FractalSpec {
        name: "interval".into(),
        contractions: 2,
        boundary: labels(&["0", "1"]),
        images: vec![
            vec![img(Some("0")), None],
            vec![None, img(Some("1"))],
        ],
        gluings: vec![glue(0, "1", 1, "0")],
        embedding: Some(Embedding {
            points: vec![vec![0.0], vec![1.0]],
            maps: vec![
                AffineMap { linear: vec![vec![0.5]], shift: vec![0.0] },
                AffineMap { linear: vec![vec![0.5]], shift: vec![0.5] },
            ],
        }),
    };
    let hs = HarmonicStructure::new(vec![vec![-1.0, 1.0], vec![1.0, -1.0]], vec![0.5, 0.5])
        .expect("interval harmonic structure");
    (spec, hs)
}

/// Sierpinski gasket with ψ_i(x) = (x + p_i)/2.
pub fn gasket() -> Model {
    let (spec, hs) = gasket_parts();
    Model::new(spec, hs).expect("gasket preset")
}

pub(crate) fn gasket_parts() -> (FractalSpec, HarmonicStructure) {
    let p = [[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]];
    let names = ["p1", "p2", "p3"];
    let spec = FractalSpec {
        name: "gasket".into(),
        contractions: 3,
        boundary: labels(&names),
        images: (0..3)
            .map(|i| (0..3).map(|q| (i == q).then(|| names[i].to_string())).collect())
            .collect(),
        gluings: vec![
            glue(0, "p2", 1, "p1"),
            glue(0, "p3", 2, "p1"),
            glue(1, "p3", 2, "p2"),
        ],
        embedding: Some(Embedding {
            points: p.iter().map(|x| x.to_vec()).collect(),
            maps: p
                .iter()
                .map(|x| affine([[0.5, 0.0], [0.0, 0.5]], [x[0] / 2.0, x[1] / 2.0]))
                .collect(),
        }),
    };
    let a0 = (0..3)
        .map(|i| (0..3).map(|j| if i == j { -2.0 } else { 1.0 }).collect())
        .collect();
    let hs = HarmonicStructure::new(a0, vec![0.6; 3]).expect("gasket harmonic structure");
    (spec, hs)
}

/// Hata tree-like set with conductance parameter h > 1 and boundary labels
/// (c, 0, 1). Planar maps use c = 0.4 + 0.3i: ψ₁(z) = c·z̄,
/// ψ₂(z) = (1 − |c|²)·z̄ + |c|².
pub fn hata(h: f64) -> Model {
    try_hata(h).expect("hata preset")
}

pub fn try_hata(h: f64) -> Result<Model> {
    if !(h.is_finite() && h > 1.0) {
        bail!(Validation, "Hata parameter h must exceed 1, got {h}");
    }
    let (cr, ci) = (0.4, 0.3);
    let c2 = cr * cr + ci * ci;
    let spec = FractalSpec {
        name: "hata".into(),
        contractions: 2,
        boundary: labels(&["c", "0", "1"]),
        images: vec![
            vec![None, img(Some("0")), img(Some("c"))],
            vec![None, None, img(Some("1"))],
        ],
        gluings: vec![glue(0, "c", 1, "0")],
        embedding: Some(Embedding {
            points: vec![vec![cr, ci], vec![0.0, 0.0], vec![1.0, 0.0]],
            maps: vec![
                affine([[cr, ci], [ci, -cr]], [0.0, 0.0]),
                affine([[1.0 - c2, 0.0], [0.0, -(1.0 - c2)]], [c2, 0.0]),
            ],
        }),
    };
    let a0 = vec![
        vec![-h, h, 0.0],
        vec![h, -(h + 1.0), 1.0],
        vec![0.0, 1.0, -1.0],
    ];
    let hs = HarmonicStructure::new(a0, vec![1.0 / h, 1.0 - 1.0 / (h * h)])?;
    Model::new(spec, hs)
}

pub fn by_name(name: &str) -> Result<Model> {
    match name {
        "interval" => Ok(interval()),
        "gasket" => Ok(gasket()),
        "hata" => Ok(hata(2.0)),
        other => bail!(Validation, "unknown preset '{other}' (known: {})", NAMES.join(", ")),
    }
}

/// Same combinatorics and harmonic structure, ignoring name and embedding.
pub(crate) fn same_structure(
    (s, a): (&FractalSpec, &HarmonicStructure),
    (t, b): (&FractalSpec, &HarmonicStructure),
) -> bool {
    s.contractions == t.contractions
        && s.boundary == t.boundary
        && s.images == t.images
        && s.gluings == t.gluings
        && a == b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::decimation::DecimationFamily;

    #[test]
    fn presets_resolve() {
        assert_eq!(interval().family, Some(DecimationFamily::Interval));
        assert_eq!(gasket().family, Some(DecimationFamily::Gasket));
        assert!(by_name("cantor").is_err());
        assert!(try_hata(0.5).is_err());
    }

    #[test]
    fn hata_glued_point_is_consistent() {
        let m = hata(2.0);
        let c = m.complex(1).unwrap();
        let xy = c.coordinates(m.spec.embedding.as_ref().unwrap()).unwrap();
        // ψ₁(c) = |c|² = ψ₂(0)
        assert!((xy[3][0] - 0.25).abs() < 1e-15 && xy[3][1].abs() < 1e-15);
        let cell0 = c.cell(0);
        assert_eq!(xy[cell0[2]], vec![0.4, 0.3]);
    }
}
