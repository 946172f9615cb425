use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::{FeatureEncoder, Modality, Payload};
use super::losses::{projection_loss, LossGrads, ProjectionLoss};
use super::predict::{concept_probabilities, evaluate_probs, Evaluation, ThresholdTable};
use crate::boxes::BoxGrad;
use crate::error::{Error, Result};
use crate::optim::{AdamW, AdamWConfig};
use crate::rng;
use crate::store::{AnnotatedSample, ConceptId, ConceptSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub positive_weight: f64,
    /// Share of all steps spent warming the learning rate up linearly.
    pub warmup_fraction: f64,
    /// Final learning rate as a fraction of the peak.
    pub decay_floor: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ProjectionTrainConfig {
    fn default() -> Self {
        ProjectionTrainConfig {
            lr: 1e-4,
            batch_size: 256,
            epochs: 5,
            positive_weight: 3.0,
            warmup_fraction: 0.2,
            decay_floor: 0.1,
            weight_decay: 1e-2,
            seed: 0,
        }
    }
}

impl ProjectionTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be >= 1".into()));
        }
        if self.positive_weight.is_nan() || self.positive_weight <= 0.0 {
            return Err(Error::Config("positive weight must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warm-up fraction must lie in [0,1)".into()));
        }
        if !(self.decay_floor > 0.0 && self.decay_floor <= 1.0) {
            return Err(Error::Config("decay floor must lie in (0,1]".into()));
        }
        Ok(())
    }

    /// Learning rate for 0-based `step` of `total`: linear warm-up to the peak,
    /// then linear decay to `decay_floor * peak` at the last step.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let warm = (self.warmup_fraction * total as f64).round() as usize;
        if step < warm {
            return self.lr * (step + 1) as f64 / warm as f64;
        }
        let rest = total.saturating_sub(warm).max(1);
        let progress = if rest <= 1 {
            1.0
        } else {
            (step - warm) as f64 / (rest - 1) as f64
        };
        self.lr * (1.0 - (1.0 - self.decay_floor) * progress.min(1.0))
    }
}

pub fn payload(sample: &AnnotatedSample, modality: Modality) -> Payload<'_> {
    match modality {
        Modality::Vision => Payload::Vision(&sample.vision),
        Modality::Text => Payload::Text(&sample.text),
    }
}

/// Mean projection loss over `batch`, accumulating encoder gradients (and
/// concept-box gradients when `space_grads` is given), both scaled by
/// `1 / batch.len()`.
pub fn projection_batch(
    encoder: &FeatureEncoder,
    space: &ConceptSpace,
    batch: &[&AnnotatedSample],
    positive_weight: f64,
    enc_grad: Option<&mut [f64]>,
    mut space_grads: Option<&mut [BoxGrad]>,
) -> Result<f64> {
    let scale = 1.0 / batch.len() as f64;
    let mut enc_grad = enc_grad;
    let mut total = 0.0;
    let mut gx = BoxGrad::zeros(encoder.dim());
    let mut local_space = space_grads
        .as_ref()
        .map(|_| vec![BoxGrad::zeros(space.dim()); space.boxes.len()]);
    for s in batch {
        let cache = encoder.forward(encoder.featurize(payload(s, encoder.modality))?);
        gx.clear();
        if let Some(ls) = local_space.as_mut() {
            ls.iter_mut().for_each(BoxGrad::clear);
        }
        let want_grad = enc_grad.is_some() || space_grads.is_some();
        let grads = want_grad.then_some(LossGrads {
            x: &mut gx,
            space: local_space.as_deref_mut(),
        });
        let loss: ProjectionLoss = projection_loss(&s.labels, &cache.output, space, positive_weight, grads);
        let l = loss.total();
        if !l.is_finite() {
            return Err(Error::NonFinite(format!("projection loss on sample `{}`", s.id)));
        }
        total += l;
        if let Some(g) = enc_grad.as_deref_mut() {
            let mut scaled = gx.clone();
            scaled
                .min
                .iter_mut()
                .chain(scaled.delta.iter_mut())
                .for_each(|v| *v *= scale);
            encoder.backward(&cache, &scaled, g);
        }
        if let (Some(dst), Some(src)) = (space_grads.as_deref_mut(), local_space.as_ref()) {
            for (d, s) in dst.iter_mut().zip(src) {
                d.add_scaled(s, scale);
            }
        }
    }
    Ok(total * scale)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProjectionMetrics {
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
    /// Held-out evaluation after each epoch, when an evaluation split is given.
    pub epoch_eval: Vec<Evaluation>,
    pub steps: usize,
}

/// Train `encoder` against a frozen `space`. `on_step(epoch, step, lr, loss)`
/// sees every update.
pub fn train_projection(
    train: &[AnnotatedSample],
    eval: Option<&[AnnotatedSample]>,
    space: &ConceptSpace,
    encoder: &mut FeatureEncoder,
    config: &ProjectionTrainConfig,
    mut on_step: impl FnMut(usize, usize, f64, f64),
) -> Result<ProjectionMetrics> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::domain("empty training split"));
    }
    if encoder.dim() != space.dim() {
        return Err(Error::domain(format!(
            "encoder outputs {}-d boxes, space is {}-d",
            encoder.dim(),
            space.dim()
        )));
    }
    let mut opt = AdamW::new(
        AdamWConfig {
            weight_decay: config.weight_decay,
            ..AdamWConfig::default()
        },
        &[encoder.params.len()],
    );
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut sampler = rng::stream(config.seed, "batches");
    let per_epoch = train.len().div_ceil(config.batch_size);
    let total = per_epoch * config.epochs;
    let mut grad = vec![0.0; encoder.params.len()];
    let mut metrics = ProjectionMetrics::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut sampler);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&AnnotatedSample> = chunk.iter().map(|&i| &train[i]).collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = projection_batch(encoder, space, &batch, config.positive_weight, Some(&mut grad), None)?;
            let lr = config.lr_at(metrics.steps, total);
            opt.begin_step();
            opt.update(0, &mut encoder.params, &grad, lr);
            metrics.steps += 1;
            metrics.step_losses.push(loss);
            sum += loss;
            on_step(epoch, metrics.steps, lr, loss);
        }
        metrics.epoch_losses.push(sum / per_epoch as f64);
        if let Some(ev) = eval {
            metrics.epoch_eval.push(evaluate(encoder, space, ev, None, false)?);
        }
    }
    Ok(metrics)
}

/// `P(c | encode(x))` for every sample and concept.
pub fn project_probs(
    encoder: &FeatureEncoder,
    space: &ConceptSpace,
    samples: &[AnnotatedSample],
    parallel: bool,
) -> Result<Vec<Vec<f64>>> {
    let one = |s: &AnnotatedSample| -> Result<Vec<f64>> {
        let b = encoder.encode(payload(s, encoder.modality))?;
        concept_probabilities(&b, space)
    };
    if parallel {
        samples.par_iter().map(one).collect()
    } else {
        samples.iter().map(one).collect()
    }
}

pub fn evaluate(
    encoder: &FeatureEncoder,
    space: &ConceptSpace,
    samples: &[AnnotatedSample],
    thresholds: Option<&ThresholdTable>,
    parallel: bool,
) -> Result<Evaluation> {
    let probs = project_probs(encoder, space, samples, parallel)?;
    let labels: Vec<Vec<ConceptId>> = samples.iter().map(|s| s.labels.clone()).collect();
    Ok(evaluate_probs(&space.vocabulary, &probs, &labels, thresholds))
}
