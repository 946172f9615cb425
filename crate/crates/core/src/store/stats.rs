use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::vocab::{ConceptId, ConceptKind, Vocabulary};
use crate::error::{Error, Result};

/// Source of target entailment probabilities `P(a | b)`.
pub trait EntailmentTargets {
    /// `Ok(None)` when the table has no opinion about the pair.
    fn target(&self, a: ConceptId, b: ConceptId) -> Result<Option<f64>>;
}

/// Occurrence and co-occurrence counts over a labelled dataset.
///
/// Pair counts are stored sparsely under the ordered key `(lo, hi)`; pairs
/// never observed together read as zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthStats {
    unary: Vec<u64>,
    pairs: BTreeMap<(ConceptId, ConceptId), u64>,
    total: u64,
}

impl GroundTruthStats {
    pub fn extract<'a, I>(samples: I, vocab: &Vocabulary) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [ConceptId]>,
    {
        let mut unary = vec![0u64; vocab.len()];
        let mut pairs = BTreeMap::new();
        let mut total = 0u64;
        let mut labels: Vec<ConceptId> = Vec::new();
        for sample in samples {
            labels.clear();
            labels.extend_from_slice(sample);
            labels.sort();
            labels.dedup();
            for (i, &a) in labels.iter().enumerate() {
                if a.index() >= vocab.len() {
                    return Err(Error::domain(format!("label {a} not in vocabulary")));
                }
                unary[a.index()] += 1;
                total += 1;
                for &b in &labels[i + 1..] {
                    *pairs.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
        Ok(GroundTruthStats { unary, pairs, total })
    }

    pub fn count(&self, c: ConceptId) -> u64 {
        self.unary[c.index()]
    }

    pub fn pair_count(&self, a: ConceptId, b: ConceptId) -> u64 {
        if a == b {
            return self.count(a);
        }
        let key = if a < b { (a, b) } else { (b, a) };
        self.pairs.get(&key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn num_concepts(&self) -> usize {
        self.unary.len()
    }

    /// `P(y) = count(y) / sum of all concept counts` (a distribution over
    /// label tokens, not over samples).
    pub fn marginal(&self, c: ConceptId) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.count(c) as f64 / self.total as f64
    }

    /// `P(a | b) = count(a ∩ b) / count(b)`.
    pub fn conditional(&self, a: ConceptId, b: ConceptId) -> Result<f64> {
        let cb = self.count(b);
        if cb == 0 {
            return Err(Error::UnsupportedConditioning(b.to_string()));
        }
        Ok(self.pair_count(a, b) as f64 / cb as f64)
    }

    /// Every ordered pair `(a, b)`, `a != b`, with a supported conditioning concept.
    pub fn ordered_pairs(&self) -> Vec<(ConceptId, ConceptId)> {
        let n = self.unary.len();
        let mut out = Vec::new();
        for b in 0..n {
            if self.unary[b] == 0 {
                continue;
            }
            for a in 0..n {
                if a != b {
                    out.push((ConceptId::from(a), ConceptId::from(b)));
                }
            }
        }
        out
    }
}

impl EntailmentTargets for GroundTruthStats {
    fn target(&self, a: ConceptId, b: ConceptId) -> Result<Option<f64>> {
        self.conditional(a, b).map(Some)
    }
}

/// Explicit `(concept, given, probability)` targets, e.g. a hypernym closure.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    pub rows: Vec<PairRow>,
    index: BTreeMap<(ConceptId, ConceptId), f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRow {
    pub concept: ConceptId,
    pub given: ConceptId,
    pub probability: f64,
}

impl PairTable {
    pub fn new(rows: Vec<PairRow>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for r in &rows {
            if !(0.0..=1.0).contains(&r.probability) {
                return Err(Error::domain(format!("probability {} outside [0,1]", r.probability)));
            }
            index.insert((r.concept, r.given), r.probability);
        }
        Ok(PairTable { rows, index })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn read(path: &Path, vocab: Option<&Vocabulary>) -> Result<(Self, Vocabulary)> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file), vocab)
    }

    /// Parse a tab-separated pair file: one header line, then
    /// `concept <TAB> given <TAB> p` rows meaning `P(concept | given) = p`.
    ///
    /// With a vocabulary, unknown names are errors. Without one, a vocabulary of
    /// category concepts is built in order of first appearance.
    pub fn parse<R: BufRead>(reader: R, vocab: Option<&Vocabulary>) -> Result<(Self, Vocabulary)> {
        let mut built = vocab.cloned().unwrap_or_default();
        let fixed = vocab.is_some();
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io("<pairs>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            if !saw_header {
                saw_header = true;
                if line.split('\t').count() != 3 {
                    return Err(Error::format(
                        Some(lineno),
                        "header must have three tab-separated columns",
                    ));
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::format(
                    Some(lineno),
                    format!("expected `concept<TAB>given<TAB>p`, got `{line}`"),
                ));
            }
            let p: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| Error::format(Some(lineno), format!("bad probability `{}`", fields[2])))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::format(Some(lineno), format!("probability {p} outside [0,1]")));
            }
            let mut resolve = |name: &str| -> Result<ConceptId> {
                let name = name.trim();
                match built.id(name) {
                    Some(id) => Ok(id),
                    None if fixed => Err(Error::format(Some(lineno), format!("unknown concept `{name}`"))),
                    None => built
                        .push(name, ConceptKind::Category, None)
                        .map_err(|e| Error::format(Some(lineno), e.to_string())),
                }
            };
            let concept = resolve(fields[0])?;
            let given = resolve(fields[1])?;
            rows.push(PairRow {
                concept,
                given,
                probability: p,
            });
        }
        if rows.is_empty() {
            return Err(Error::format(None, "pair file has no rows"));
        }
        Ok((PairTable::new(rows)?, built))
    }

    pub fn write<W: std::io::Write>(&self, vocab: &Vocabulary, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "concept\tgiven\tprobability")?;
        for r in &self.rows {
            writeln!(
                w,
                "{}\t{}\t{}",
                vocab.name(r.concept),
                vocab.name(r.given),
                r.probability
            )?;
        }
        Ok(())
    }
}

impl EntailmentTargets for PairTable {
    fn target(&self, a: ConceptId, b: ConceptId) -> Result<Option<f64>> {
        Ok(self.index.get(&(a, b)).copied())
    }
}
