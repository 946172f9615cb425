use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{ConceptId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativePolicy {
    /// Every same-family sibling of each positive attribute label.
    SameFamily,
    /// `k` concepts drawn uniformly from everything not in the label set.
    Uniform,
}

impl std::str::FromStr for NegativePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same_family" | "same-family" => Ok(NegativePolicy::SameFamily),
            "uniform" => Ok(NegativePolicy::Uniform),
            other => Err(format!("unknown negative policy `{other}`")),
        }
    }
}

/// Negative concepts for one sample, returned sorted by id and disjoint from
/// `labels`. `k` is ignored by the same-family policy.
pub fn sample_negatives<R: Rng + ?Sized>(
    labels: &[ConceptId],
    vocab: &Vocabulary,
    policy: NegativePolicy,
    k: usize,
    rng: &mut R,
) -> Vec<ConceptId> {
    let mut out = Vec::new();
    match policy {
        NegativePolicy::SameFamily => {
            for &l in labels {
                if let Some(fam) = vocab.get(l).family.as_deref() {
                    if let Some(members) = vocab.family_members(fam) {
                        out.extend(members.iter().copied().filter(|m| !labels.contains(m)));
                    }
                }
            }
        }
        NegativePolicy::Uniform => {
            let pool: Vec<ConceptId> = vocab.ids().filter(|c| !labels.contains(c)).collect();
            let amount = k.min(pool.len());
            out.extend(index::sample(rng, pool.len(), amount).into_iter().map(|i| pool[i]));
        }
    }
    out.sort();
    out.dedup();
    out
}
