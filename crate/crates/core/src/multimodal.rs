//! Cross-modality alignment and image-text matching.
//!
//! A vision box and a text box describe the same object when they entail each
//! other. Joint training minimises `1 - (P(v|t) + P(t|v)) / 2` together with each
//! modality's projection loss, and matching scores a pair by the same mean
//! cross-entailment.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boxes::{
    add_log_entailment_grad, clamp_prob, entailment, log_entailment_unchecked, BoxEmbedding, BoxGrad, GlobalExtrema,
};
use crate::datagen::parse_description;
use crate::error::{Error, Result};
use crate::optim::{AdamW, AdamWConfig};
use crate::projection::train::{payload, projection_batch};
use crate::projection::{FeatureEncoder, Modality, Payload};
use crate::rng;
use crate::store::{sample_negatives, AnnotatedSample, ConceptId, ConceptSpace, EntailmentTargets, Vocabulary};
use crate::trainer::{collect_pairs, pair_loss, zero_grads, ConceptTrainConfig, SpaceOptimizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointLossForm {
    /// `1 - mean cross-entailment`.
    Overlap,
    /// `-ln(mean cross-entailment)`.
    NegLog,
}

/// Joint loss of a vision box `v` and a text box `t`.
pub fn joint_loss(v: &BoxEmbedding, t: &BoxEmbedding, extrema: &GlobalExtrema, eps: f64) -> Result<f64> {
    Ok(1.0 - cross_entailment(v, t, extrema, eps)?)
}

/// `(P(v|t) + P(t|v)) / 2`, each clamped.
pub fn cross_entailment(v: &BoxEmbedding, t: &BoxEmbedding, extrema: &GlobalExtrema, eps: f64) -> Result<f64> {
    Ok(0.5 * (entailment(v, t, extrema, eps)? + entailment(t, v, extrema, eps)?))
}

/// Loss value and accumulated box gradients for one pair.
pub fn joint_loss_grad(
    v: &BoxEmbedding,
    t: &BoxEmbedding,
    eps: f64,
    form: JointLossForm,
    scale: f64,
    gv: &mut BoxGrad,
    gt: &mut BoxGrad,
) -> f64 {
    let raw_vt = log_entailment_unchecked(v, t).exp();
    let raw_tv = log_entailment_unchecked(t, v).exp();
    let p_vt = clamp_prob(raw_vt, eps);
    let p_tv = clamp_prob(raw_tv, eps);
    let mean = 0.5 * (p_vt + p_tv);
    // d loss / d mean
    let (loss, d_mean) = match form {
        JointLossForm::Overlap => (1.0 - mean, -1.0),
        JointLossForm::NegLog => (-mean.ln(), -1.0 / mean),
    };
    if p_vt == raw_vt {
        add_log_entailment_grad(v, t, scale * d_mean * 0.5 * p_vt, Some(&mut *gv), Some(&mut *gt));
    }
    if p_tv == raw_tv {
        add_log_entailment_grad(t, v, scale * d_mean * 0.5 * p_tv, Some(&mut *gt), Some(&mut *gv));
    }
    loss
}

/// Mean cross-entailment of a vision and a text payload.
pub fn itm_score(
    vision: Payload<'_>,
    text: Payload<'_>,
    vision_encoder: &FeatureEncoder,
    text_encoder: &FeatureEncoder,
    space: &ConceptSpace,
) -> Result<f64> {
    let v = vision_encoder.encode(vision)?;
    let t = text_encoder.encode(text)?;
    cross_entailment(&v, &t, space.extrema(), space.eps())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Weight of the concept-fitting loss; `0` keeps the space frozen.
    pub beta: f64,
    pub space_lr: f64,
    pub positive_weight: f64,
    pub weight_decay: f64,
    pub loss_form: JointLossForm,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for JointTrainConfig {
    fn default() -> Self {
        JointTrainConfig {
            lr: 1e-3,
            batch_size: 256,
            steps: 500,
            beta: 1.0,
            space_lr: 1e-3,
            positive_weight: 3.0,
            weight_decay: 1e-2,
            loss_form: JointLossForm::Overlap,
            eval_every: 25,
            eval_samples: 1000,
            seed: 0,
        }
    }
}

impl JointTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.space_lr >= 0.0) {
            return Err(Error::Config("learning rates must be >= 0".into()));
        }
        if self.batch_size == 0 || self.steps == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch size, steps and eval_every must be >= 1".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossPoint {
    pub step: usize,
    pub mean_cross_entailment: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointReport {
    pub step_losses: Vec<f64>,
    pub curve: Vec<CrossPoint>,
    /// First curve step at or above 0.9 mean cross-entailment.
    pub steps_to_0_9: Option<usize>,
}

/// Mean cross-entailment over matching vision/text payloads of `samples`.
pub fn mean_cross_entailment(
    samples: &[AnnotatedSample],
    vision: &FeatureEncoder,
    text: &FeatureEncoder,
    space: &ConceptSpace,
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for s in samples {
        sum += itm_score(Payload::Vision(&s.vision), Payload::Text(&s.text), vision, text, space)?;
    }
    Ok(sum / samples.len() as f64)
}

/// Align two pretrained encoders on paired samples.
///
/// The objective per batch is the mean joint loss plus both projection losses,
/// plus `beta` times the concept-fitting loss. The space is updated only when
/// `beta > 0`, and then from the whole objective.
#[allow(clippy::too_many_arguments)]
pub fn joint_train<T: EntailmentTargets + ?Sized>(
    train: &[AnnotatedSample],
    held_out: &[AnnotatedSample],
    vision: &mut FeatureEncoder,
    text: &mut FeatureEncoder,
    space: &mut ConceptSpace,
    targets: &T,
    concept: &ConceptTrainConfig,
    config: &JointTrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<JointReport> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::domain("empty training split"));
    }
    if vision.modality != Modality::Vision || text.modality != Modality::Text {
        return Err(Error::Config("joint training needs a vision and a text encoder".into()));
    }
    let held_out = &held_out[..held_out.len().min(config.eval_samples)];
    let adam = AdamWConfig {
        weight_decay: config.weight_decay,
        ..AdamWConfig::default()
    };
    let mut opt = AdamW::new(adam, &[vision.params.len(), text.params.len()]);
    let mut space_opt = SpaceOptimizer::new(space, concept.weight_decay);
    let train_space = config.beta > 0.0;
    let mut sampler = rng::stream(config.seed, "batches");
    let mut neg_rng = rng::stream(config.seed, "sampling");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut gv_enc = vec![0.0; vision.params.len()];
    let mut gt_enc = vec![0.0; text.params.len()];
    let mut report = JointReport::default();
    let mut skipped = 0u64;
    let eps = space.eps();

    let record = |report: &mut JointReport, step: usize, v: &FeatureEncoder, t: &FeatureEncoder, sp: &ConceptSpace| {
        if held_out.is_empty() {
            return Ok::<(), Error>(());
        }
        let m = mean_cross_entailment(held_out, v, t, sp)?;
        report.curve.push(CrossPoint {
            step,
            mean_cross_entailment: m,
        });
        if report.steps_to_0_9.is_none() && m >= 0.9 {
            report.steps_to_0_9 = Some(step);
        }
        Ok(())
    };
    record(&mut report, 0, vision, text, space)?;

    for step in 0..config.steps {
        let mut idx = Vec::with_capacity(config.batch_size);
        while idx.len() < config.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut sampler);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let batch: Vec<&AnnotatedSample> = idx.iter().map(|&i| &train[i]).collect();
        let scale = 1.0 / batch.len() as f64;
        gv_enc.iter_mut().for_each(|g| *g = 0.0);
        gt_enc.iter_mut().for_each(|g| *g = 0.0);
        let mut space_grads = train_space.then(|| zero_grads(space));

        let mut joint = 0.0;
        let mut gv = BoxGrad::zeros(space.dim());
        let mut gt = BoxGrad::zeros(space.dim());
        for s in &batch {
            let cv = vision.forward(vision.featurize(payload(s, Modality::Vision))?);
            let ct = text.forward(text.featurize(payload(s, Modality::Text))?);
            gv.clear();
            gt.clear();
            joint += joint_loss_grad(&cv.output, &ct.output, eps, config.loss_form, scale, &mut gv, &mut gt);
            vision.backward(&cv, &gv, &mut gv_enc);
            text.backward(&ct, &gt, &mut gt_enc);
        }
        joint *= scale;
        let proj_v = projection_batch(
            vision,
            space,
            &batch,
            config.positive_weight,
            Some(&mut gv_enc),
            space_grads.as_deref_mut(),
        )?;
        let proj_t = projection_batch(
            text,
            space,
            &batch,
            config.positive_weight,
            Some(&mut gt_enc),
            space_grads.as_deref_mut(),
        )?;
        let mut loss = joint + proj_v + proj_t;
        if let Some(sg) = space_grads.as_mut() {
            let label_sets: Vec<Vec<ConceptId>> = batch
                .iter()
                .map(|s| {
                    let mut ys = s.labels.clone();
                    ys.extend(sample_negatives(
                        &s.labels,
                        &space.vocabulary,
                        concept.negative_policy,
                        concept.negative_k,
                        &mut neg_rng,
                    ));
                    ys
                })
                .collect();
            let pairs = collect_pairs(&label_sets, targets, concept.ordering, &mut skipped)?;
            let mut cg = zero_grads(space);
            let lc = pair_loss(space, &pairs, Some(&mut cg))?;
            for (d, s) in sg.iter_mut().zip(&cg) {
                d.add_scaled(s, config.beta);
            }
            loss += config.beta * lc;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("joint loss at step {step}")));
        }
        opt.begin_step();
        opt.update(0, &mut vision.params, &gv_enc, config.lr);
        opt.update(1, &mut text.params, &gt_enc, config.lr);
        if let Some(sg) = space_grads.as_ref() {
            space_opt.step(space, sg, config.space_lr);
        }
        report.step_losses.push(loss);
        on_step(step + 1, loss);
        let done = step + 1;
        if done % config.eval_every == 0 || done == config.steps {
            record(&mut report, done, vision, text, space)?;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    SentenceSwap,
    AttributeSwap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapMode {
    SentenceSwap,
    AttributeSwap,
}

impl std::str::FromStr for SwapMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sentence_swap" | "sentence" => Ok(SwapMode::SentenceSwap),
            "attribute_swap" | "attribute" => Ok(SwapMode::AttributeSwap),
            other => Err(format!("unknown swap mode `{other}`")),
        }
    }
}

impl std::fmt::Display for SwapMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SwapMode::SentenceSwap => "sentence_swap",
            SwapMode::AttributeSwap => "attribute_swap",
        })
    }
}

/// A vision payload with a sentence that may or may not describe it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    /// Index of the vision sample in the source split.
    pub source: usize,
    pub vision: Vec<f64>,
    pub text: String,
    /// Labels of the vision sample.
    pub labels: Vec<ConceptId>,
    pub matched: bool,
    pub provenance: Provenance,
}

/// Turn a `fraction` share of samples into mismatched pairs.
///
/// Sentence swap deranges the sentences of the chosen subset so that no sample
/// keeps a sentence with its own label set. Attribute swap replaces one
/// attribute value in the sentence by a different value of the same family.
pub fn make_itm_pairs<R: Rng + ?Sized>(
    samples: &[AnnotatedSample],
    vocab: &Vocabulary,
    mode: SwapMode,
    fraction: f64,
    rng: &mut R,
) -> Result<Vec<PairedSample>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("fraction must lie in [0,1], got {fraction}")));
    }
    let n = samples.len();
    let k = (fraction * n as f64).round() as usize;
    let chosen: Vec<usize> = {
        let mut c = rand::seq::index::sample(rng, n, k).into_vec();
        c.sort_unstable();
        c
    };
    let mut out: Vec<PairedSample> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| PairedSample {
            source: i,
            vision: s.vision.clone(),
            text: s.text.clone(),
            labels: s.labels.clone(),
            matched: true,
            provenance: Provenance::Original,
        })
        .collect();
    if k == 0 {
        return Ok(out);
    }
    match mode {
        SwapMode::SentenceSwap => {
            if k == 1 {
                return Err(Error::Config("sentence swap needs at least two swapped samples".into()));
            }
            let perm = derangement(&chosen, samples, rng)?;
            for (&dst, &src) in chosen.iter().zip(&perm) {
                out[dst].text = samples[src].text.clone();
                out[dst].matched = false;
                out[dst].provenance = Provenance::SentenceSwap;
            }
        }
        SwapMode::AttributeSwap => {
            for &i in &chosen {
                out[i].text = swap_attribute(&samples[i].text, vocab, rng)?;
                out[i].matched = false;
                out[i].provenance = Provenance::AttributeSwap;
            }
        }
    }
    Ok(out)
}

/// Permutation of `chosen` in which every sample receives a sentence from a
/// sample with a different label set.
fn derangement<R: Rng + ?Sized>(chosen: &[usize], samples: &[AnnotatedSample], rng: &mut R) -> Result<Vec<usize>> {
    let k = chosen.len();
    let clash = |dst: usize, src: usize| samples[dst].labels == samples[src].labels;
    let mut perm = chosen.to_vec();
    for _ in 0..32 {
        perm.shuffle(rng);
        let mut ok = true;
        for i in 0..k {
            if !clash(chosen[i], perm[i]) {
                continue;
            }
            // repair by exchanging with a position where both sides become valid
            let start = rng.random_range(0..k);
            let fix = (0..k)
                .map(|o| (start + o) % k)
                .find(|&j| j != i && !clash(chosen[i], perm[j]) && !clash(chosen[j], perm[i]));
            match fix {
                Some(j) => perm.swap(i, j),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(perm);
        }
    }
    Err(Error::Config(
        "cannot build a sentence swap: too few distinct label sets".into(),
    ))
}

/// Replace one attribute value of `sentence` by a different value of its family.
fn swap_attribute<R: Rng + ?Sized>(sentence: &str, vocab: &Vocabulary, rng: &mut R) -> Result<String> {
    let words = parse_description(sentence)
        .ok_or_else(|| Error::format(None, format!("cannot parse sentence `{sentence}`")))?;
    let swappable: Vec<(usize, &[ConceptId])> = words
        .iter()
        .enumerate()
        .filter_map(|(i, w)| {
            let c = vocab.id(w)?;
            let members = vocab.family_members(vocab.get(c).family.as_deref()?)?;
            (members.len() >= 2).then_some((i, members))
        })
        .collect();
    let &(pos, members) = swappable
        .choose(rng)
        .ok_or_else(|| Error::Config(format!("no swappable attribute family in `{sentence}`")))?;
    let current = vocab.id(&words[pos]).expect("filtered above");
    let others: Vec<ConceptId> = members.iter().copied().filter(|&m| m != current).collect();
    let replacement = vocab.name(*others.choose(rng).expect("family has another value"));
    let mut words = words;
    words[pos] = replacement.to_string();
    let head = words.pop().expect("non-empty");
    Ok(if words.is_empty() {
        format!("There is a {head}")
    } else {
        format!("There is a {} {head}", words.join(", "))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItmReport {
    pub mode: SwapMode,
    pub accuracy: f64,
    pub threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

pub const ITM_THRESHOLD: f64 = 0.5;

/// Matching accuracy at [`ITM_THRESHOLD`].
pub fn evaluate_itm(
    pairs: &[PairedSample],
    mode: SwapMode,
    vision: &FeatureEncoder,
    text: &FeatureEncoder,
    space: &ConceptSpace,
    parallel: bool,
) -> Result<ItmReport> {
    use rayon::prelude::*;
    let score = |p: &PairedSample| itm_score(Payload::Vision(&p.vision), Payload::Text(&p.text), vision, text, space);
    let scores: Vec<f64> = if parallel {
        pairs.par_iter().map(score).collect::<Result<_>>()?
    } else {
        pairs.iter().map(score).collect::<Result<_>>()?
    };
    let correct = pairs
        .iter()
        .zip(&scores)
        .filter(|(p, &s)| (s >= ITM_THRESHOLD) == p.matched)
        .count();
    let n_pos = pairs.iter().filter(|p| p.matched).count();
    Ok(ItmReport {
        mode,
        accuracy: if pairs.is_empty() {
            0.0
        } else {
            correct as f64 / pairs.len() as f64
        },
        threshold: ITM_THRESHOLD,
        n_pos,
        n_neg: pairs.len() - n_pos,
    })
}
