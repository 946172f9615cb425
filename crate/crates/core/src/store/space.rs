use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{ConceptId, ConceptKind, Vocabulary};
use crate::boxes::{compute_extrema, entailment, BoxEmbedding, GlobalExtrema, KnowledgeSpaceConfig};
use crate::error::{Error, Result};

pub const SPACE_FORMAT_VERSION: u32 = 1;

/// The concept space: one box per vocabulary concept plus cached extrema.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSpace {
    pub vocabulary: Vocabulary,
    pub boxes: Vec<BoxEmbedding>,
    pub config: KnowledgeSpaceConfig,
    extrema: GlobalExtrema,
}

impl ConceptSpace {
    pub fn new(vocabulary: Vocabulary, boxes: Vec<BoxEmbedding>, config: KnowledgeSpaceConfig) -> Result<Self> {
        config.validate()?;
        if boxes.len() != vocabulary.len() {
            return Err(Error::domain(format!(
                "{} boxes for {} concepts",
                boxes.len(),
                vocabulary.len()
            )));
        }
        for b in &boxes {
            if b.dim() != config.dim {
                return Err(Error::domain(format!(
                    "box of dimension {} in a {}-d space",
                    b.dim(),
                    config.dim
                )));
            }
            b.validate()?;
        }
        let extrema = compute_extrema(&boxes)?;
        Ok(ConceptSpace {
            vocabulary,
            boxes,
            config,
            extrema,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn eps(&self) -> f64 {
        self.config.prob_clamp_eps
    }

    pub fn extrema(&self) -> &GlobalExtrema {
        &self.extrema
    }

    pub fn concept_box(&self, id: ConceptId) -> &BoxEmbedding {
        &self.boxes[id.index()]
    }

    /// Recompute the cached extrema after the boxes changed.
    pub fn refresh_extrema(&mut self) {
        self.extrema = compute_extrema(&self.boxes).expect("space always holds at least one box");
    }

    /// True when the cached extrema match the current boxes.
    pub fn extrema_consistent(&self) -> bool {
        compute_extrema(&self.boxes).map(|e| e == self.extrema).unwrap_or(false)
    }

    /// Clamped `P(a | b)` between two concepts.
    pub fn entailment(&self, a: ConceptId, b: ConceptId) -> f64 {
        entailment(
            &self.boxes[a.index()],
            &self.boxes[b.index()],
            &self.extrema,
            self.eps(),
        )
        .expect("boxes in one space share a dimension")
    }

    /// Clamped `P(concept | x)` for an arbitrary box in the same space.
    pub fn concept_given(&self, concept: ConceptId, x: &BoxEmbedding) -> Result<f64> {
        entailment(&self.boxes[concept.index()], x, &self.extrema, self.eps())
    }

    pub fn num_parameters(&self) -> usize {
        self.boxes.len() * 2 * self.dim()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &self.to_file()).map_err(|e| Error::format(None, e.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("space serialises")
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_reader(reader).map_err(|e| Error::format(None, format!("concept space: {e}")))?;
        // check the version before the schema so newer files fail with a clear message
        let version = raw
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::format(None, "concept space: missing version"))?;
        if version != u64::from(SPACE_FORMAT_VERSION) {
            return Err(Error::Version {
                found: version as u32,
                supported: SPACE_FORMAT_VERSION,
            });
        }
        let file: SpaceFile =
            serde_json::from_value(raw).map_err(|e| Error::format(None, format!("concept space: {e}")))?;
        file.into_space()
    }

    fn to_file(&self) -> SpaceFile {
        SpaceFile {
            version: SPACE_FORMAT_VERSION,
            dim: self.dim(),
            eps: Some(self.eps()),
            concepts: self
                .vocabulary
                .concepts()
                .iter()
                .map(|c| ConceptEntry {
                    name: c.name.clone(),
                    kind: c.kind,
                    family: c.family.clone(),
                })
                .collect(),
            min: self.boxes.iter().map(|b| b.min.clone()).collect(),
            delta: self.boxes.iter().map(|b| b.delta.clone()).collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ConceptEntry {
    name: String,
    kind: ConceptKind,
    family: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpaceFile {
    version: u32,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    concepts: Vec<ConceptEntry>,
    min: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl SpaceFile {
    fn into_space(self) -> Result<ConceptSpace> {
        if self.min.len() != self.concepts.len() || self.delta.len() != self.concepts.len() {
            return Err(Error::format(
                None,
                "concept space: box rows do not match concept count",
            ));
        }
        let mut vocab = Vocabulary::new();
        for c in &self.concepts {
            vocab.push(&c.name, c.kind, c.family.as_deref())?;
        }
        let mut boxes = Vec::with_capacity(self.min.len());
        for (row, (min, delta)) in self.min.into_iter().zip(self.delta).enumerate() {
            if min.len() != self.dim || delta.len() != self.dim {
                return Err(Error::format(
                    None,
                    format!(
                        "concept space: row {row} has {}/{} values, header dim {}",
                        min.len(),
                        delta.len(),
                        self.dim
                    ),
                ));
            }
            boxes.push(BoxEmbedding::new(min, delta).map_err(|e| Error::format(None, e.to_string()))?);
        }
        let config = KnowledgeSpaceConfig {
            dim: self.dim,
            prob_clamp_eps: self.eps.unwrap_or(KnowledgeSpaceConfig::default().prob_clamp_eps),
        };
        ConceptSpace::new(vocab, boxes, config)
    }
}
