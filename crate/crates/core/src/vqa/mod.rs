//! Symbolic question answering over projected scenes.

pub mod exec;
pub mod generate;
pub mod program;
pub mod scene;

use serde::{Deserialize, Serialize};

pub use exec::{execute, execute_steps, ExecMode};
pub use generate::{generate_questions, Template};
pub use program::{read_programs, write_programs, Answer, Direction, Op, Program, Step};
pub use scene::{
    project_scene, resolve_oracle, resolve_projected, scenes_from_samples, ProjectedObject, ResolvedObject, SceneObject,
};

use crate::error::{Error, Result};
use crate::projection::FeatureEncoder;
use crate::store::{AnnotatedSample, ConceptSpace, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaReport {
    pub mode: ExecMode,
    pub questions: usize,
    pub exact_match: f64,
    /// Programs that failed at execution time, counted as wrong.
    pub execution_errors: usize,
}

/// Answer every program against its scene and score exact matches.
///
/// Projected mode needs an encoder and reads attribute values from projected
/// boxes; oracle mode reads ground-truth labels.
pub fn evaluate_vqa(
    programs: &[Program],
    samples: &[AnnotatedSample],
    vocab: &Vocabulary,
    mode: ExecMode,
    projected: Option<(&FeatureEncoder, &ConceptSpace)>,
) -> Result<VqaReport> {
    let scenes = scenes_from_samples(samples, vocab)?;
    let mut resolved = std::collections::BTreeMap::new();
    for (id, objs) in &scenes {
        let r = match mode {
            ExecMode::Oracle => resolve_oracle(objs, vocab),
            ExecMode::Projected => {
                let (enc, space) =
                    projected.ok_or_else(|| Error::Config("projected mode needs an encoder and a space".into()))?;
                resolve_projected(&project_scene(objs, enc, space)?, space)?
            }
        };
        resolved.insert(*id, r);
    }
    let mut hits = 0usize;
    let mut errors = 0usize;
    for p in programs {
        let id = p
            .scene
            .ok_or_else(|| Error::Validation(format!("question `{}` names no scene", p.question)))?;
        let scene = resolved
            .get(&id)
            .ok_or_else(|| Error::Validation(format!("question `{}` refers to unknown scene {id}", p.question)))?;
        match execute(p, scene, vocab) {
            Ok(a) if a == p.answer => hits += 1,
            Ok(_) => {}
            Err(Error::Execution(_)) => errors += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(VqaReport {
        mode,
        questions: programs.len(),
        exact_match: if programs.is_empty() {
            0.0
        } else {
            hits as f64 / programs.len() as f64
        },
        execution_errors: errors,
    })
}
