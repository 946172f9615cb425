use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a concept within a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub u32);

impl ConceptId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for ConceptId {
    fn from(i: usize) -> Self {
        ConceptId(i as u32)
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptKind {
    Attribute,
    Category,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub name: String,
    pub kind: ConceptKind,
    /// Mutually exclusive attribute group (`color`, `shape`, ...). Free
    /// attributes that may co-occur with their peers carry no family.
    pub family: Option<String>,
}

/// Declared role of a concept name, as found in a dataset header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptDecl {
    pub kind: ConceptKind,
    pub family: Option<String>,
}

/// The concept set `Y` with its attribute families.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    concepts: Vec<Concept>,
    by_name: HashMap<String, ConceptId>,
    /// family name -> member ids in ascending id order; BTreeMap keeps
    /// iteration deterministic
    families: BTreeMap<String, Vec<ConceptId>>,
    family_order: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a concept. Names must be unique; category concepts may not
    /// carry a family.
    pub fn push(&mut self, name: &str, kind: ConceptKind, family: Option<&str>) -> Result<ConceptId> {
        if self.by_name.contains_key(name) {
            return Err(Error::format(None, format!("duplicate concept `{name}`")));
        }
        if name.is_empty() || name.contains(char::is_whitespace) || name.contains(',') {
            return Err(Error::format(None, format!("invalid concept name `{name}`")));
        }
        if kind == ConceptKind::Category && family.is_some() {
            return Err(Error::format(
                None,
                format!("category `{name}` cannot belong to a family"),
            ));
        }
        let id = ConceptId::from(self.concepts.len());
        if let Some(f) = family {
            if !self.families.contains_key(f) {
                self.family_order.push(f.to_string());
            }
            self.families.entry(f.to_string()).or_default().push(id);
        }
        self.concepts.push(Concept {
            id,
            name: name.to_string(),
            kind,
            family: family.map(str::to_string),
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn get(&self, id: ConceptId) -> &Concept {
        &self.concepts[id.index()]
    }

    pub fn name(&self, id: ConceptId) -> &str {
        &self.concepts[id.index()].name
    }

    pub fn id(&self, name: &str) -> Option<ConceptId> {
        self.by_name.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<ConceptId> {
        self.id(name).ok_or_else(|| Error::UnknownConcept(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = ConceptId> + '_ {
        (0..self.concepts.len()).map(ConceptId::from)
    }

    /// Family names in order of first declaration.
    pub fn family_names(&self) -> &[String] {
        &self.family_order
    }

    pub fn family_members(&self, family: &str) -> Option<&[ConceptId]> {
        self.families.get(family).map(Vec::as_slice)
    }

    pub fn family_index(&self, family: &str) -> Option<usize> {
        self.family_order.iter().position(|f| f == family)
    }

    pub fn attributes(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.concepts
            .iter()
            .filter(|c| c.kind == ConceptKind::Attribute)
            .map(|c| c.id)
    }

    pub fn categories(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.concepts
            .iter()
            .filter(|c| c.kind == ConceptKind::Category)
            .map(|c| c.id)
    }

    /// Check the per-sample label invariants: non-empty, at most one category,
    /// at most one value per attribute family.
    pub fn check_label_set(&self, labels: &[ConceptId]) -> Result<()> {
        if labels.is_empty() {
            return Err(Error::format(None, "empty label set"));
        }
        let mut categories = 0;
        let mut seen_families: Vec<&str> = Vec::new();
        for &id in labels {
            if id.index() >= self.len() {
                return Err(Error::format(None, format!("label {id} out of range")));
            }
            let c = self.get(id);
            if c.kind == ConceptKind::Category {
                categories += 1;
            }
            if let Some(f) = c.family.as_deref() {
                if seen_families.contains(&f) {
                    return Err(Error::format(None, format!("two labels from family `{f}`")));
                }
                seen_families.push(f);
            }
        }
        if categories > 1 {
            return Err(Error::format(None, "more than one category label"));
        }
        Ok(())
    }
}

/// Derive the vocabulary from raw label lists.
///
/// Concepts get ids in order of first appearance; names first seen in the same
/// sample are ordered by name. `declare` supplies each name's kind and family;
/// a name declared with two different roles is rejected.
pub fn build_vocabulary<'a, S, F>(samples: S, mut declare: F) -> Result<Vocabulary>
where
    S: IntoIterator<Item = &'a [String]>,
    F: FnMut(&str) -> Result<ConceptDecl>,
{
    let mut vocab = Vocabulary::new();
    let mut any = false;
    for labels in samples {
        any = true;
        let mut fresh: Vec<&String> = labels.iter().filter(|n| vocab.id(n).is_none()).collect();
        fresh.sort();
        fresh.dedup();
        for name in fresh {
            let decl = declare(name)?;
            vocab.push(name, decl.kind, decl.family.as_deref())?;
        }
    }
    if !any {
        return Err(Error::domain("cannot build a vocabulary from zero samples"));
    }
    Ok(vocab)
}
