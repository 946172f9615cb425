use std::collections::BTreeMap;

use crate::boxes::BoxEmbedding;
use crate::error::{Error, Result};
use crate::projection::{concept_probabilities, family_argmax, FeatureEncoder, Payload};
use crate::store::{AnnotatedSample, ConceptId, ConceptSpace, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub labels: Vec<ConceptId>,
    pub coords: [f64; 2],
    pub vision: Vec<f64>,
}

impl SceneObject {
    pub fn from_sample(sample: &AnnotatedSample, vocab: &Vocabulary) -> Result<Self> {
        let coords = sample
            .coords
            .ok_or_else(|| Error::domain(format!("sample `{}` has no coordinates", sample.id)))?;
        if !coords.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::domain(format!(
                "sample `{}` has coordinates outside [0,1]",
                sample.id
            )));
        }
        for f in vocab.family_names() {
            let members = vocab.family_members(f).expect("listed family");
            let n = sample.labels.iter().filter(|l| members.contains(l)).count();
            if n != 1 {
                return Err(Error::domain(format!(
                    "sample `{}` has {n} values of family `{f}`, expected one",
                    sample.id
                )));
            }
        }
        Ok(SceneObject {
            id: sample.id.clone(),
            labels: sample.labels.clone(),
            coords,
            vision: sample.vision.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedObject {
    pub id: String,
    pub projection: BoxEmbedding,
    pub coords: [f64; 2],
}

/// An object reduced to one value per family, in vocabulary family order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedObject {
    pub id: String,
    pub values: Vec<ConceptId>,
    pub coords: [f64; 2],
}

/// Group samples into scenes by their scene index, preserving sample order.
pub fn scenes_from_samples(samples: &[AnnotatedSample], vocab: &Vocabulary) -> Result<BTreeMap<u64, Vec<SceneObject>>> {
    let mut out: BTreeMap<u64, Vec<SceneObject>> = BTreeMap::new();
    for s in samples {
        let scene = s
            .scene
            .ok_or_else(|| Error::domain(format!("sample `{}` carries no scene index", s.id)))?;
        out.entry(scene).or_default().push(SceneObject::from_sample(s, vocab)?);
    }
    Ok(out)
}

pub fn project_scene(
    scene: &[SceneObject],
    encoder: &FeatureEncoder,
    space: &ConceptSpace,
) -> Result<Vec<ProjectedObject>> {
    if scene.is_empty() {
        return Err(Error::domain("empty scene"));
    }
    if encoder.dim() != space.dim() {
        return Err(Error::domain(format!(
            "encoder outputs {}-d boxes, space is {}-d",
            encoder.dim(),
            space.dim()
        )));
    }
    scene
        .iter()
        .map(|o| {
            Ok(ProjectedObject {
                id: o.id.clone(),
                projection: encoder.encode(Payload::Vision(&o.vision))?,
                coords: o.coords,
            })
        })
        .collect()
}

/// Ground-truth values of each object.
pub fn resolve_oracle(scene: &[SceneObject], vocab: &Vocabulary) -> Vec<ResolvedObject> {
    scene
        .iter()
        .map(|o| ResolvedObject {
            id: o.id.clone(),
            values: vocab
                .family_names()
                .iter()
                .map(|f| {
                    let members = vocab.family_members(f).expect("listed family");
                    *o.labels
                        .iter()
                        .find(|l| members.contains(l))
                        .expect("validated on construction")
                })
                .collect(),
            coords: o.coords,
        })
        .collect()
}

/// Per-family argmax of the entailment of every concept given each projection.
pub fn resolve_projected(scene: &[ProjectedObject], space: &ConceptSpace) -> Result<Vec<ResolvedObject>> {
    let vocab = &space.vocabulary;
    scene
        .iter()
        .map(|o| {
            let probs = concept_probabilities(&o.projection, space)?;
            Ok(ResolvedObject {
                id: o.id.clone(),
                values: vocab
                    .family_names()
                    .iter()
                    .map(|f| family_argmax(vocab.family_members(f).expect("listed family"), &probs))
                    .collect(),
                coords: o.coords,
            })
        })
        .collect()
}
