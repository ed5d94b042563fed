//! A fractal together with its harmonic structure, and the JSON spec file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{
    assemble_energy, assemble_mass, dimension_exponents, reduce_boundary, BoundarySet,
    DimensionData, EnergySystem, HarmonicStructure,
};
use crate::error::{bail, Error, Result};
use crate::presets;
use crate::spectrum::decimation::DecimationFamily;
use crate::topology::{
    cell_table, expand_complex, verify_gluing, CellTable, Embedding, Endpoint, FractalSpec,
    Gluing, VertexComplex,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HarmonicFile {
    #[serde(rename = "A0")]
    a0: Vec<Vec<f64>>,
    r: Vec<f64>,
}

/// On-disk form. Contraction indices in `gluings` are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(rename = "M")]
    m: usize,
    boundary: Vec<String>,
    images: Vec<Vec<Option<String>>>,
    #[serde(default)]
    gluings: Vec<[(usize, String); 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Embedding>,
    harmonic: HarmonicFile,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: FractalSpec,
    pub harmonic: HarmonicStructure,
    pub dims: DimensionData,
    /// Set when the structure matches a preset with an exact decimation map.
    pub family: Option<DecimationFamily>,
}

impl Model {
    pub fn new(spec: FractalSpec, harmonic: HarmonicStructure) -> Result<Self> {
        verify_gluing(&spec)?;
        if harmonic.a0.len() != spec.boundary_size() {
            bail!(
                Validation,
                "A0 is {0}x{0} but the boundary has {1} labels",
                harmonic.a0.len(),
                spec.boundary_size()
            );
        }
        if harmonic.r.len() != spec.contractions {
            bail!(
                Validation,
                "{} resistance ratios for {} contractions",
                harmonic.r.len(),
                spec.contractions
            );
        }
        let dims = dimension_exponents(&harmonic.r)?;
        let mut model = Model {
            spec,
            harmonic,
            dims,
            family: None,
        };
        model.family = [DecimationFamily::Interval, DecimationFamily::Gasket]
            .into_iter()
            .find(|f| {
                let (spec, hs) = f.parts();
                presets::same_structure((&model.spec, &model.harmonic), (&spec, &hs))
            });
        Ok(model)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(text).map_err(|e| {
            Error::Validation(format!(
                "spec file line {}, column {}: {e}",
                e.line(),
                e.column()
            ))
        })?;
        let mut gluings = Vec::with_capacity(file.gluings.len());
        for [(i, p), (j, q)] in file.gluings {
            if i == 0 || j == 0 {
                bail!(Structural, "gluing ({i},{p}) ~ ({j},{q}): contraction indices are 1-based");
            }
            gluings.push(Gluing(
                Endpoint { map: i - 1, label: p },
                Endpoint { map: j - 1, label: q },
            ));
        }
        let spec = FractalSpec {
            name: file.name.unwrap_or_else(|| "custom".into()),
            contractions: file.m,
            boundary: file.boundary,
            images: file.images,
            gluings,
            embedding: file.embedding,
        };
        let harmonic = HarmonicStructure::new(file.harmonic.a0, file.harmonic.r)?;
        Model::new(spec, harmonic)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        let file = SpecFile {
            name: Some(self.spec.name.clone()),
            m: self.spec.contractions,
            boundary: self.spec.boundary.clone(),
            images: self.spec.images.clone(),
            gluings: self
                .spec
                .gluings
                .iter()
                .map(|g| {
                    [
                        (g.0.map + 1, g.0.label.clone()),
                        (g.1.map + 1, g.1.label.clone()),
                    ]
                })
                .collect(),
            embedding: self.spec.embedding.clone(),
            harmonic: HarmonicFile {
                a0: self.harmonic.a0.clone(),
                r: self.harmonic.r.clone(),
            },
        };
        serde_json::to_string_pretty(&file).expect("spec serialises")
    }

    pub fn boundary_size(&self) -> usize {
        self.spec.boundary_size()
    }

    pub fn boundary_set(&self, text: &str) -> Result<BoundarySet> {
        BoundarySet::parse(text, &self.spec.boundary)
    }

    pub fn complex(&self, n: usize) -> Result<VertexComplex> {
        expand_complex(&self.spec, n)
    }

    pub fn cell_table(&self, n: usize) -> Result<CellTable> {
        cell_table(&self.spec, &self.harmonic.r, self.dims.d_h, n)
    }

    /// Assembled and boundary-reduced level-n system.
    pub fn system(&self, n: usize, b: &BoundarySet) -> Result<EnergySystem> {
        if b.len() != self.boundary_size() {
            bail!(Validation, "boundary set has {} labels, expected {}", b.len(), self.boundary_size());
        }
        let c = self.complex(n)?;
        let t = self.cell_table(n)?;
        let h = assemble_energy(&c, &self.harmonic, &t)?;
        let m = assemble_mass(&c, &t)?;
        reduce_boundary(n, &h, &m, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_files_match_builders() {
        for (text, built) in [
            (include_str!("../presets/interval.json"), presets::interval()),
            (include_str!("../presets/gasket.json"), presets::gasket()),
            (include_str!("../presets/hata.json"), presets::hata(2.0)),
        ] {
            let parsed = Model::from_json_str(text).unwrap();
            assert_eq!(parsed.spec, built.spec);
            assert_eq!(parsed.harmonic, built.harmonic);
            assert_eq!(parsed.family, built.family);
        }
    }

    #[test]
    fn round_trip_through_json() {
        let g = presets::gasket();
        let back = Model::from_json_str(&g.to_json()).unwrap();
        assert_eq!(back.spec, g.spec);
        assert_eq!(back.family, Some(DecimationFamily::Gasket));
        assert_eq!(presets::hata(2.0).family, None);
    }

    #[test]
    fn parse_errors_carry_a_line() {
        let err = Model::from_json_str("{\n \"M\": 2,\n \"boundary\": [1]\n}").unwrap_err();
        assert!(matches!(err, Error::Validation(ref s) if s.contains("line 3")), "{err}");
    }

    #[test]
    fn zero_based_gluing_index_is_rejected() {
        let text = include_str!("../presets/interval.json").replace("[1, \"1\"]", "[0, \"1\"]");
        assert!(matches!(Model::from_json_str(&text), Err(Error::Structural(_))));
    }

    #[test]
    fn mismatched_a0_is_validation() {
        let mut text: serde_json::Value =
            serde_json::from_str(include_str!("../presets/gasket.json")).unwrap();
        text["harmonic"]["A0"] = serde_json::json!([[-1.0, 1.0], [1.0, -1.0]]);
        assert!(matches!(
            Model::from_json_str(&text.to_string()),
            Err(Error::Validation(_))
        ));
    }
}
