//! Line-delimited dataset files.
//!
//! The first line is a header object
//! `{"dim_features", "families": [{"name", "values"}], "categories", "attributes"}`;
//! every following line is one record
//! `{"id", "concepts": [names], "vision": [reals], "text", "coords": [x, y]}`.
//! `attributes` lists free attributes that belong to no family, and records may
//! carry an optional integer `scene` grouping objects of one scene.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{build_vocabulary, ConceptDecl, ConceptId, ConceptKind, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDecl {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub dim_features: usize,
    #[serde(default)]
    pub families: Vec<FamilyDecl>,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<String>,
}

impl DatasetHeader {
    /// Map every declared name to its role, rejecting names declared twice.
    pub fn declarations(&self) -> Result<HashMap<String, ConceptDecl>> {
        let mut out = HashMap::new();
        let mut insert = |name: &str, decl: ConceptDecl| -> Result<()> {
            if let Some(prev) = out.insert(name.to_string(), decl.clone()) {
                if prev != decl {
                    return Err(Error::format(
                        Some(1),
                        format!("concept `{name}` declared with conflicting kind/family"),
                    ));
                }
                return Err(Error::format(Some(1), format!("concept `{name}` declared twice")));
            }
            Ok(())
        };
        for fam in &self.families {
            for v in &fam.values {
                insert(
                    v,
                    ConceptDecl {
                        kind: ConceptKind::Attribute,
                        family: Some(fam.name.clone()),
                    },
                )?;
            }
        }
        for c in &self.categories {
            insert(
                c,
                ConceptDecl {
                    kind: ConceptKind::Category,
                    family: None,
                },
            )?;
        }
        for a in &self.attributes {
            insert(
                a,
                ConceptDecl {
                    kind: ConceptKind::Attribute,
                    family: None,
                },
            )?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSample {
    pub id: String,
    pub labels: Vec<ConceptId>,
    pub vision: Vec<f64>,
    pub text: String,
    pub coords: Option<[f64; 2]>,
    pub scene: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordLine {
    id: String,
    concepts: Vec<String>,
    vision: Vec<f64>,
    text: String,
    #[serde(default)]
    coords: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub vocabulary: Vocabulary,
    pub samples: Vec<AnnotatedSample>,
}

impl Dataset {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: DatasetHeader = loop {
            match lines.next() {
                None => return Err(Error::format(None, "missing header line")),
                Some((_, line)) => {
                    let line = line.map_err(|e| Error::io("<dataset>", e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line)
                        .map_err(|e| Error::format(Some(1), format!("bad header: {e}")))?;
                }
            }
        };
        let decls = header.declarations()?;

        let mut records = Vec::new();
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io("<dataset>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordLine =
                serde_json::from_str(&line).map_err(|e| Error::format(Some(idx + 1), e.to_string()))?;
            if rec.vision.len() != header.dim_features {
                return Err(Error::format(
                    Some(idx + 1),
                    format!(
                        "vision payload has {} values, header declares {}",
                        rec.vision.len(),
                        header.dim_features
                    ),
                ));
            }
            if let Some([x, y]) = rec.coords {
                if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                    return Err(Error::format(Some(idx + 1), "coordinates outside [0,1]^2"));
                }
            }
            records.push((idx + 1, rec));
        }
        if records.is_empty() {
            return Err(Error::format(None, "dataset has no records"));
        }

        let vocabulary = build_vocabulary(records.iter().map(|(_, r)| r.concepts.as_slice()), |name| {
            decls
                .get(name)
                .cloned()
                .ok_or_else(|| Error::format(None, format!("concept `{name}` not declared in header")))
        })?;

        let mut samples = Vec::with_capacity(records.len());
        for (line, rec) in records {
            let mut labels: Vec<ConceptId> = rec
                .concepts
                .iter()
                .map(|n| vocabulary.require(n))
                .collect::<Result<_>>()?;
            labels.sort();
            labels.dedup();
            vocabulary.check_label_set(&labels).map_err(|e| match e {
                Error::Format { message, .. } => Error::format(Some(line), message),
                other => other,
            })?;
            samples.push(AnnotatedSample {
                id: rec.id,
                labels,
                vision: rec.vision,
                text: rec.text,
                coords: rec.coords,
                scene: rec.scene,
            });
        }
        Ok(Dataset {
            header,
            vocabulary,
            samples,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        serde_json::to_writer(&mut *w, &self.header)?;
        writeln!(w)?;
        for s in &self.samples {
            let rec = RecordLine {
                id: s.id.clone(),
                concepts: s.labels.iter().map(|&c| self.vocabulary.name(c).to_string()).collect(),
                vision: s.vision.clone(),
                text: s.text.clone(),
                coords: s.coords,
                scene: s.scene,
            };
            serde_json::to_writer(&mut *w, &rec)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn label_sets(&self) -> Vec<Vec<ConceptId>> {
        self.samples.iter().map(|s| s.labels.clone()).collect()
    }
}
