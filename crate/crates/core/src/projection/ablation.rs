//! Pretrained-space versus from-scratch comparison.
//!
//! Arm A trains an encoder against a frozen, pretrained concept space. Arm B
//! trains the same encoder initialisation together with a freshly initialised
//! space, adding the concept-fitting loss to the projection loss. Both arms see
//! the same batches in the same order.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::encoder::FeatureEncoder;
use super::train::{evaluate, projection_batch, ProjectionTrainConfig};
use crate::error::{Error, Result};
use crate::optim::{AdamW, AdamWConfig};
use crate::rng;
use crate::store::{sample_negatives, AnnotatedSample, ConceptId, ConceptSpace, GroundTruthStats};
use crate::trainer::{collect_pairs, init_space, pair_loss, zero_grads, ConceptTrainConfig, SpaceOptimizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub projection: ProjectionTrainConfig,
    /// Learning rate, init ranges and negative policy of the fresh space in arm B.
    pub concept: ConceptTrainConfig,
    pub target_accuracy: f64,
    pub eval_every: usize,
    /// Held-out samples used for each curve point.
    pub eval_samples: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            projection: ProjectionTrainConfig::default(),
            concept: ConceptTrainConfig::default(),
            target_accuracy: 0.95,
            eval_every: 10,
            eval_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Pretrained,
    Scratch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub arm: Arm,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub curve: Vec<CurvePoint>,
    pub losses_pretrained: Vec<f64>,
    pub losses_scratch: Vec<f64>,
    pub steps_to_target_pretrained: Option<usize>,
    pub steps_to_target_scratch: Option<usize>,
    /// Concept loss of the fresh space on the first batch, before any update.
    pub scratch_initial_concept_loss: f64,
}

impl AblationReport {
    /// `pretrained / scratch` steps to target; an arm that never reaches the
    /// target counts as one evaluation interval past the last step.
    pub fn ratio(&self, total_steps: usize, eval_every: usize) -> f64 {
        let cap = (total_steps + eval_every) as f64;
        let a = self.steps_to_target_pretrained.map_or(cap, |s| s as f64);
        let b = self.steps_to_target_scratch.map_or(cap, |s| s as f64);
        a / b
    }
}

/// Accuracy used for the curves: mean per-family accuracy, or category
/// accuracy when the vocabulary has no families.
fn curve_accuracy(encoder: &FeatureEncoder, space: &ConceptSpace, eval: &[AnnotatedSample]) -> Result<f64> {
    let ev = evaluate(encoder, space, eval, None, false)?;
    if !ev.family_accuracy.is_empty() {
        Ok(ev.mean_family_accuracy)
    } else {
        Ok(ev.category_accuracy.unwrap_or(0.0))
    }
}

pub fn ablation_run(
    train: &[AnnotatedSample],
    eval: &[AnnotatedSample],
    pretrained: &ConceptSpace,
    stats: &GroundTruthStats,
    init_encoder: &FeatureEncoder,
    config: &AblationConfig,
) -> Result<AblationReport> {
    config.projection.validate()?;
    config.concept.validate()?;
    if train.is_empty() || eval.is_empty() {
        return Err(Error::domain("ablation needs non-empty train and evaluation splits"));
    }
    if config.eval_every == 0 {
        return Err(Error::Config("eval_every must be >= 1".into()));
    }
    let eval = &eval[..eval.len().min(config.eval_samples.max(1))];
    let vocab = &pretrained.vocabulary;
    let pcfg = &config.projection;

    // shared batch order and negatives
    let mut sampler = rng::stream(pcfg.seed, "batches");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batches: Vec<Vec<usize>> = Vec::new();
    for _ in 0..pcfg.epochs {
        order.shuffle(&mut sampler);
        batches.extend(order.chunks(pcfg.batch_size).map(<[usize]>::to_vec));
    }
    let total = batches.len();

    let mut enc_a = init_encoder.clone();
    let mut enc_b = init_encoder.clone();
    let mut space_b = init_space(vocab, &config.concept, &mut rng::stream(config.concept.seed, "init"))?;
    let adam = AdamWConfig {
        weight_decay: pcfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut opt_a = AdamW::new(adam, &[enc_a.params.len()]);
    let mut opt_b = AdamW::new(adam, &[enc_b.params.len()]);
    let mut space_opt = SpaceOptimizer::new(&space_b, config.concept.weight_decay);
    let mut neg_rng = rng::stream(config.concept.seed, "sampling");

    let mut report = AblationReport {
        curve: Vec::new(),
        losses_pretrained: Vec::with_capacity(total),
        losses_scratch: Vec::with_capacity(total),
        steps_to_target_pretrained: None,
        steps_to_target_scratch: None,
        scratch_initial_concept_loss: 0.0,
    };
    let mut grad_a = vec![0.0; enc_a.params.len()];
    let mut grad_b = vec![0.0; enc_b.params.len()];
    let mut skipped = 0u64;

    let record =
        |report: &mut AblationReport, step: usize, a: &FeatureEncoder, b: &FeatureEncoder, sb: &ConceptSpace| {
            let acc_a = curve_accuracy(a, pretrained, eval)?;
            let acc_b = curve_accuracy(b, sb, eval)?;
            report.curve.push(CurvePoint {
                step,
                arm: Arm::Pretrained,
                accuracy: acc_a,
            });
            report.curve.push(CurvePoint {
                step,
                arm: Arm::Scratch,
                accuracy: acc_b,
            });
            if report.steps_to_target_pretrained.is_none() && acc_a >= config.target_accuracy {
                report.steps_to_target_pretrained = Some(step);
            }
            if report.steps_to_target_scratch.is_none() && acc_b >= config.target_accuracy {
                report.steps_to_target_scratch = Some(step);
            }
            Ok::<(), Error>(())
        };
    record(&mut report, 0, &enc_a, &enc_b, &space_b)?;

    for (step, idx) in batches.iter().enumerate() {
        let batch: Vec<&AnnotatedSample> = idx.iter().map(|&i| &train[i]).collect();
        let lr = pcfg.lr_at(step, total);

        grad_a.iter_mut().for_each(|g| *g = 0.0);
        let loss_a = projection_batch(
            &enc_a,
            pretrained,
            &batch,
            pcfg.positive_weight,
            Some(&mut grad_a),
            None,
        )?;
        opt_a.begin_step();
        opt_a.update(0, &mut enc_a.params, &grad_a, lr);
        report.losses_pretrained.push(loss_a);

        grad_b.iter_mut().for_each(|g| *g = 0.0);
        let mut space_grads = zero_grads(&space_b);
        let proj_b = projection_batch(
            &enc_b,
            &space_b,
            &batch,
            pcfg.positive_weight,
            Some(&mut grad_b),
            Some(&mut space_grads),
        )?;
        let label_sets: Vec<Vec<ConceptId>> = batch
            .iter()
            .map(|s| {
                let mut ys = s.labels.clone();
                ys.extend(sample_negatives(
                    &s.labels,
                    vocab,
                    config.concept.negative_policy,
                    config.concept.negative_k,
                    &mut neg_rng,
                ));
                ys
            })
            .collect();
        let pairs = collect_pairs(&label_sets, stats, config.concept.ordering, &mut skipped)?;
        let concept = pair_loss(&space_b, &pairs, Some(&mut space_grads))?;
        if step == 0 {
            report.scratch_initial_concept_loss = concept;
        }
        opt_b.begin_step();
        opt_b.update(0, &mut enc_b.params, &grad_b, lr);
        space_opt.step(&mut space_b, &space_grads, config.concept.lr);
        report.losses_scratch.push(proj_b + concept);

        let done = step + 1;
        if done % config.eval_every == 0 || done == total {
            record(&mut report, done, &enc_a, &enc_b, &space_b)?;
        }
    }
    Ok(report)
}
