//! Versioned JSON documents for instances, witnesses and reports.
//!
//! Complex numbers are `[re, im]` pairs, matrices are lists of rows and
//! floats are written in shortest round-trip form, so parsing a document and
//! writing it back reproduces the original bytes.

use std::path::Path;

use nearcomm_core::algebra::{Block, VertexStructure};
use nearcomm_core::graph::QuditGraph;
use nearcomm_core::instance::{InstanceMetadata, QsatInstance, TERM_TOL};
use nearcomm_core::linalg::{self, CMat, CVec, C64};
use nearcomm_core::witness::{BlockAssignment, EnergyReport, TensorNetworkWitness};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{field, io, Error, FieldError, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const INSTANCE_FORMAT: &str = "nearcomm-instance";
pub const WITNESS_FORMAT: &str = "nearcomm-witness";

/// Residual factors are always prepared in their first basis vector by
/// [`nearcomm_core::witness::build_witness`]; recorded for readers.
pub const RESIDUAL_CONVENTION: &str = "first-basis-vector";

pub type Complex = [f64; 2];
pub type MatrixDoc = Vec<Vec<Complex>>;
pub type VectorDoc = Vec<Complex>;

pub fn matrix_doc(m: &CMat) -> MatrixDoc {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect()
}

pub fn vector_doc(v: &CVec) -> VectorDoc {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn vector_from(doc: &[Complex]) -> CVec {
    CVec::from_iterator(doc.len(), doc.iter().map(|&[re, im]| C64::new(re, im)))
}

/// Builds a `rows × cols` matrix, reporting ragged or misshapen input.
fn matrix_from(doc: &MatrixDoc, rows: usize, cols: usize, path: &str, errors: &mut Vec<FieldError>) -> Option<CMat> {
    if doc.len() != rows {
        errors.push(field(path, format!("expected {rows} rows, found {}", doc.len())));
        return None;
    }
    for (r, row) in doc.iter().enumerate() {
        if row.len() != cols {
            errors.push(field(format!("{path}[{r}]"), format!("expected {cols} entries, found {}", row.len())));
            return None;
        }
    }
    Some(CMat::from_fn(rows, cols, |r, c| C64::new(doc[r][c][0], doc[r][c][1])))
}

fn check_header(format: &str, version: u32, expected: &str, errors: &mut Vec<FieldError>) {
    if format != expected {
        errors.push(field("format", format!("expected \"{expected}\", found \"{format}\"")));
    }
    if version != FORMAT_VERSION {
        errors.push(field("version", format!("unsupported version {version} (this build reads {FORMAT_VERSION})")));
    }
}

/// Parses JSON, reporting the failing field path on type errors.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "document".to_string() } else { path };
        Error::Document(vec![field(path, e.into_inner().to_string())])
    })
}

/// Pretty JSON with a trailing newline.
pub fn render<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents contain only finite numbers and strings");
    s.push('\n');
    s
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    parse(&text)
}

pub fn write<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    std::fs::write(path, render(doc)).map_err(io(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataDoc {
    pub seed: u64,
    pub delta_declared: f64,
    pub delta_actual: f64,
    pub projective: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub n: usize,
    pub d: usize,
    pub degree: usize,
    pub edges: Vec<[usize; 2]>,
    pub terms: Vec<MatrixDoc>,
    pub metadata: MetadataDoc,
}

impl InstanceDocument {
    pub fn from_instance(instance: &QsatInstance, config_hash: Option<&str>) -> Self {
        let m = &instance.metadata;
        Self {
            format: INSTANCE_FORMAT.into(),
            version: FORMAT_VERSION,
            config_hash: config_hash.map(Into::into),
            n: instance.graph.n,
            d: instance.d,
            degree: instance.graph.degree,
            edges: instance.graph.edges.iter().map(|&(u, v)| [u, v]).collect(),
            terms: instance.terms.iter().map(matrix_doc).collect(),
            metadata: MetadataDoc {
                seed: m.seed,
                delta_declared: m.delta_declared,
                delta_actual: m.delta_actual,
                projective: m.projective,
            },
        }
    }

    pub fn to_instance(&self) -> Result<QsatInstance> {
        let mut errors = Vec::new();
        check_header(&self.format, self.version, INSTANCE_FORMAT, &mut errors);
        if self.d == 0 {
            errors.push(field("d", "must be positive"));
        }
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|&[u, v]| (u, v)).collect();
        let graph = QuditGraph { n: self.n, degree: self.degree, edges };
        if let Err(e) = graph.validate() {
            errors.push(field("edges", e.to_string()));
        }
        if self.terms.len() != self.edges.len() {
            errors.push(field("terms", format!("{} terms for {} edges", self.terms.len(), self.edges.len())));
        }
        let dd = self.d * self.d;
        let mut terms = Vec::with_capacity(self.terms.len());
        for (e, doc) in self.terms.iter().enumerate() {
            let path = format!("terms[{e}]");
            if let Some(q) = matrix_from(doc, dd, dd, &path, &mut errors) {
                let herm = linalg::hermiticity_residual(&q);
                if !(herm <= TERM_TOL) {
                    errors.push(field(&path, format!("not Hermitian (residual {herm:e})")));
                } else if self.metadata.projective {
                    let idem = linalg::frob_norm(&(&q * &q - &q));
                    if !(idem <= TERM_TOL) {
                        errors.push(field(&path, format!("not a projection (residual {idem:e})")));
                    }
                }
                terms.push(q);
            }
        }
        if !errors.is_empty() {
            return Err(Error::Document(errors));
        }
        let m = &self.metadata;
        let metadata = InstanceMetadata {
            seed: m.seed,
            delta_declared: m.delta_declared,
            delta_actual: m.delta_actual,
            projective: m.projective,
        };
        QsatInstance::new(self.d, graph, terms, metadata).map_err(|e| Error::Document(vec![field("document", e.to_string())]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDoc {
    pub factor_dims: Vec<usize>,
    pub residual_dim: usize,
    /// `d × dim` isometry, columns in lexicographic factor order.
    pub isometry: MatrixDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureDoc {
    pub vertex: usize,
    pub edges: Vec<usize>,
    pub blocks: Vec<BlockDoc>,
}

impl StructureDoc {
    pub fn from_structure(s: &VertexStructure) -> Self {
        Self {
            vertex: s.vertex,
            edges: s.edges.clone(),
            blocks: s
                .blocks
                .iter()
                .map(|b| BlockDoc { factor_dims: b.factor_dims.clone(), residual_dim: b.residual_dim, isometry: matrix_doc(&b.isometry) })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessDocument {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub n: usize,
    pub d: usize,
    pub residual_convention: String,
    pub assignment: Vec<usize>,
    pub structures: Vec<StructureDoc>,
    pub edge_states: Vec<VectorDoc>,
    pub residual_states: Vec<VectorDoc>,
}

impl WitnessDocument {
    pub fn from_witness(w: &TensorNetworkWitness, config_hash: Option<&str>) -> Self {
        Self {
            format: WITNESS_FORMAT.into(),
            version: FORMAT_VERSION,
            config_hash: config_hash.map(Into::into),
            n: w.n,
            d: w.d,
            residual_convention: RESIDUAL_CONVENTION.into(),
            assignment: w.assignment.0.clone(),
            structures: w.structures.iter().map(StructureDoc::from_structure).collect(),
            edge_states: w.edge_states.iter().map(vector_doc).collect(),
            residual_states: w.residual_states.iter().map(vector_doc).collect(),
        }
    }

    /// Rebuilds the witness. Only shape errors that prevent building
    /// matrices are reported here; everything else is left to the verifier.
    pub fn to_witness(&self) -> Result<TensorNetworkWitness> {
        let mut errors = Vec::new();
        check_header(&self.format, self.version, WITNESS_FORMAT, &mut errors);
        let mut structures = Vec::with_capacity(self.structures.len());
        for (v, s) in self.structures.iter().enumerate() {
            let mut blocks = Vec::with_capacity(s.blocks.len());
            for (b, block) in s.blocks.iter().enumerate() {
                let path = format!("structures[{v}].blocks[{b}].isometry");
                let cols = block.isometry.first().map_or(0, Vec::len);
                if let Some(iso) = matrix_from(&block.isometry, self.d, cols, &path, &mut errors) {
                    blocks.push(Block { isometry: iso, factor_dims: block.factor_dims.clone(), residual_dim: block.residual_dim });
                }
            }
            structures.push(VertexStructure { vertex: s.vertex, edges: s.edges.clone(), blocks });
        }
        if !errors.is_empty() {
            return Err(Error::Document(errors));
        }
        Ok(TensorNetworkWitness {
            n: self.n,
            d: self.d,
            structures,
            assignment: BlockAssignment(self.assignment.clone()),
            edge_states: self.edge_states.iter().map(|s| vector_from(s)).collect(),
            residual_states: self.residual_states.iter().map(|s| vector_from(s)).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReportDoc {
    pub per_edge: Vec<f64>,
    pub total: f64,
    pub m: usize,
    pub energy_over_m: f64,
}

impl From<&EnergyReport> for EnergyReportDoc {
    fn from(r: &EnergyReport) -> Self {
        Self { per_edge: r.per_edge.clone(), total: r.total, m: r.m, energy_over_m: r.per_m }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nearcomm_core::graph::generate_regular_graph;
    use nearcomm_core::instance::{generate_commuting_instance, perturb_instance, BlockStyle};

    fn sample() -> QsatInstance {
        let g = generate_regular_graph(6, 3, 1).unwrap();
        let inst = generate_commuting_instance(g, 3, 1, true, BlockStyle::Auto).unwrap();
        perturb_instance(&inst, 0.05, 2).unwrap()
    }

    #[test]
    fn instance_round_trip_is_byte_identical() {
        let inst = sample();
        let text = render(&InstanceDocument::from_instance(&inst, Some("abc")));
        let doc: InstanceDocument = parse(&text).unwrap();
        assert_eq!(render(&doc), text);
        assert_eq!(doc.to_instance().unwrap(), inst);
    }

    #[test]
    fn type_errors_name_the_field() {
        let inst = sample();
        let mut value: serde_json::Value = serde_json::from_str(&render(&InstanceDocument::from_instance(&inst, None))).unwrap();
        value["terms"][2][1][0] = serde_json::json!("x");
        let err = parse::<InstanceDocument>(&value.to_string()).unwrap_err().to_string();
        assert!(err.contains("terms[2][1][0]"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let inst = sample();
        let mut doc = InstanceDocument::from_instance(&inst, None);
        doc.terms[4][0][1] = [0.5, 0.0];
        doc.terms[1].pop();
        doc.version = 9;
        let err = doc.to_instance().unwrap_err().to_string();
        assert!(err.contains("terms[4]: not Hermitian"), "{err}");
        assert!(err.contains("terms[1]: expected 9 rows"), "{err}");
        assert!(err.contains("version: unsupported version 9"), "{err}");
    }
}
