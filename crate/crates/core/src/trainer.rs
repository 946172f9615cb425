//! Fitting a concept space to target entailment probabilities.
//!
//! Each ordered pair `(a, b)` contributes the Bernoulli divergence between the
//! target `P(a | b)` and the box prediction `Q(a | b)`. Pairs inside a batch are
//! aggregated into a sorted map so that every distinct pair is evaluated once
//! and gradients are reduced in a fixed order.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boxes::{add_log_entailment_grad, log_entailment_unchecked, BoxEmbedding, BoxGrad, KnowledgeSpaceConfig};
use crate::error::{Error, Result};
use crate::optim::{AdamW, AdamWConfig};
use crate::rng;
use crate::store::{
    sample_negatives, ConceptId, ConceptSpace, EntailmentTargets, GroundTruthStats, NegativePolicy, PairTable,
    Vocabulary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrdering {
    /// Both `Q(a|b)` and `Q(b|a)` for every unordered pair.
    Both,
    /// Only `Q(lower id | higher id)`.
    Canonical,
}

impl std::str::FromStr for PairOrdering {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "both" => Ok(PairOrdering::Both),
            "canonical" => Ok(PairOrdering::Canonical),
            other => Err(format!("unknown pair ordering `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptTrainConfig {
    pub space: KnowledgeSpaceConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub init_min: (f64, f64),
    pub init_delta: (f64, f64),
    pub negative_policy: NegativePolicy,
    pub negative_k: usize,
    pub ordering: PairOrdering,
}

impl Default for ConceptTrainConfig {
    fn default() -> Self {
        ConceptTrainConfig {
            space: KnowledgeSpaceConfig::default(),
            lr: 1e-3,
            batch_size: 256,
            epochs: 2,
            weight_decay: 1e-2,
            seed: 0,
            init_min: (0.0, 1.0),
            init_delta: (0.1, 0.9),
            negative_policy: NegativePolicy::SameFamily,
            negative_k: 5,
            ordering: PairOrdering::Both,
        }
    }
}

impl ConceptTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be >= 0".into()));
        }
        let (lo, hi) = self.init_min;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config("init min range must satisfy lo <= hi".into()));
        }
        let (lo, hi) = self.init_delta;
        if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(
                "init delta range must be non-negative with lo <= hi".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epoch_losses: Vec<f64>,
    pub step_losses: Vec<f64>,
    pub initial_kl: f64,
    pub final_kl: f64,
    pub max_abs_error: f64,
    pub target_pairs: usize,
    pub skipped_pairs: u64,
    pub steps: u64,
    pub wall_time_secs: f64,
}

/// Fresh space with `min ~ U[init_min]` and `delta ~ U[init_delta]` per coordinate.
pub fn init_space<R: Rng + ?Sized>(
    vocab: &Vocabulary,
    config: &ConceptTrainConfig,
    rng: &mut R,
) -> Result<ConceptSpace> {
    config.validate()?;
    let d = config.space.dim;
    let mut boxes = Vec::with_capacity(vocab.len());
    for _ in 0..vocab.len() {
        let min: Vec<f64> = (0..d).map(|_| uniform(rng, config.init_min)).collect();
        let delta: Vec<f64> = (0..d).map(|_| uniform(rng, config.init_delta)).collect();
        boxes.push(BoxEmbedding::new(min, delta)?);
    }
    if boxes.is_empty() {
        return Err(Error::domain("cannot initialise a space over an empty vocabulary"));
    }
    ConceptSpace::new(vocab.clone(), boxes, config.space)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// `KL(P || Q) + KL(1-P || 1-Q)` for Bernoulli `P`, `Q`; the target is clamped
/// into `[eps, 1 - eps]` first.
pub fn kl_pair_loss(p_target: f64, q_pred: f64, eps: f64) -> f64 {
    let p = p_target.clamp(eps, 1.0 - eps);
    let q = q_pred.clamp(eps, 1.0 - eps);
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

/// Derivative of [`kl_pair_loss`] with respect to `ln q`, zero where the
/// prediction is clamped.
pub fn d_kl_d_log_q(p_target: f64, q_raw: f64, eps: f64) -> f64 {
    if q_raw < eps || q_raw > 1.0 - eps {
        return 0.0;
    }
    let p = p_target.clamp(eps, 1.0 - eps);
    (q_raw - p) / (1.0 - q_raw)
}

/// One ordered pair `(concept | given)` with its target and weight in the batch loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPair {
    pub concept: ConceptId,
    pub given: ConceptId,
    pub target: f64,
    pub weight: f64,
}

/// Collapse a batch of label sets into weighted ordered pairs.
///
/// Every sample with at least one servable pair contributes its pairs with
/// weight `1 / (2 |C(y,2)| * n)`, `n` the number of such samples; unservable
/// pairs are counted in `skipped`.
pub fn collect_pairs<T: EntailmentTargets + ?Sized>(
    batch: &[Vec<ConceptId>],
    targets: &T,
    ordering: PairOrdering,
    skipped: &mut u64,
) -> Result<Vec<WeightedPair>> {
    let mut per_sample: Vec<Vec<(ConceptId, ConceptId, f64)>> = Vec::with_capacity(batch.len());
    let mut norms = Vec::with_capacity(batch.len());
    for labels in batch {
        let mut ys = labels.clone();
        ys.sort();
        ys.dedup();
        let n_unordered = ys.len() * ys.len().saturating_sub(1) / 2;
        let mut terms = Vec::new();
        for (i, &lo) in ys.iter().enumerate() {
            for &hi in &ys[i + 1..] {
                let ordered: &[(ConceptId, ConceptId)] = match ordering {
                    PairOrdering::Both => &[(lo, hi), (hi, lo)],
                    PairOrdering::Canonical => &[(lo, hi)],
                };
                for &(a, b) in ordered {
                    match targets.target(a, b) {
                        Ok(Some(p)) => terms.push((a, b, p)),
                        Ok(None) | Err(Error::UnsupportedConditioning(_)) => *skipped += 1,
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        if !terms.is_empty() {
            per_sample.push(terms);
            norms.push(2.0 * n_unordered as f64);
        }
    }
    let n = per_sample.len() as f64;
    let mut agg: BTreeMap<(ConceptId, ConceptId), (f64, f64)> = BTreeMap::new();
    for (terms, norm) in per_sample.iter().zip(&norms) {
        for &(a, b, p) in terms {
            agg.entry((a, b)).or_insert((p, 0.0)).1 += 1.0 / (norm * n);
        }
    }
    Ok(agg
        .into_iter()
        .map(|((concept, given), (target, weight))| WeightedPair {
            concept,
            given,
            target,
            weight,
        })
        .collect())
}

/// Weighted KL over `pairs`, accumulating box gradients into `grads` when given.
pub fn pair_loss(space: &ConceptSpace, pairs: &[WeightedPair], mut grads: Option<&mut [BoxGrad]>) -> Result<f64> {
    let eps = space.eps();
    let mut loss = 0.0;
    for wp in pairs {
        let a = &space.boxes[wp.concept.index()];
        let b = &space.boxes[wp.given.index()];
        let q_raw = log_entailment_unchecked(a, b).exp();
        let term = kl_pair_loss(wp.target, q_raw, eps);
        if !term.is_finite() {
            return Err(Error::NonFinite(format!(
                "pair ({} | {}) target {} prediction {}",
                space.vocabulary.name(wp.concept),
                space.vocabulary.name(wp.given),
                wp.target,
                q_raw
            )));
        }
        loss += wp.weight * term;
        if let Some(g) = grads.as_deref_mut() {
            let scale = wp.weight * d_kl_d_log_q(wp.target, q_raw, eps);
            if scale != 0.0 {
                let (ga, gb) = two_mut(g, wp.concept.index(), wp.given.index());
                add_log_entailment_grad(a, b, scale, Some(ga), Some(gb));
            }
        }
    }
    Ok(loss)
}

fn two_mut<T>(v: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    assert_ne!(i, j);
    if i < j {
        let (lo, hi) = v.split_at_mut(j);
        (&mut lo[i], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(i);
        (&mut hi[0], &mut lo[j])
    }
}

/// Batch loss over label sets (negatives already appended) and its gradient.
pub fn concept_loss<T: EntailmentTargets + ?Sized>(
    batch: &[Vec<ConceptId>],
    space: &ConceptSpace,
    targets: &T,
    ordering: PairOrdering,
    grads: Option<&mut [BoxGrad]>,
    skipped: &mut u64,
) -> Result<f64> {
    let pairs = collect_pairs(batch, targets, ordering, skipped)?;
    pair_loss(space, &pairs, grads)
}

pub fn zero_grads(space: &ConceptSpace) -> Vec<BoxGrad> {
    vec![BoxGrad::zeros(space.dim()); space.boxes.len()]
}

/// AdamW over all concept boxes, followed by the `delta >= 0` projection and an
/// extrema refresh.
#[derive(Debug, Clone)]
pub struct SpaceOptimizer {
    opt: AdamW,
}

impl SpaceOptimizer {
    pub fn new(space: &ConceptSpace, weight_decay: f64) -> Self {
        let sizes = vec![space.dim(); 2 * space.boxes.len()];
        SpaceOptimizer {
            opt: AdamW::new(
                AdamWConfig {
                    weight_decay,
                    ..AdamWConfig::default()
                },
                &sizes,
            ),
        }
    }

    pub fn step(&mut self, space: &mut ConceptSpace, grads: &[BoxGrad], lr: f64) {
        self.opt.begin_step();
        for (k, (b, g)) in space.boxes.iter_mut().zip(grads).enumerate() {
            self.opt.update(2 * k, &mut b.min, &g.min, lr);
            self.opt.update(2 * k + 1, &mut b.delta, &g.delta, lr);
            b.project_nonnegative();
        }
        space.refresh_extrema();
    }
}

/// Training data for [`fit_concept_space`].
pub enum FitData<'a> {
    /// Label sets with count-derived targets; negatives are sampled per sample.
    Samples {
        label_sets: &'a [Vec<ConceptId>],
        stats: &'a GroundTruthStats,
    },
    /// Explicit pair targets; each row is one training example.
    Pairs(&'a PairTable),
}

impl FitData<'_> {
    /// Every target pair with its probability, used for the final report.
    pub fn target_pairs(&self) -> Vec<(ConceptId, ConceptId, f64)> {
        match self {
            FitData::Samples { stats, .. } => stats
                .ordered_pairs()
                .into_iter()
                .map(|(a, b)| (a, b, stats.conditional(a, b).expect("ordered_pairs skips zero counts")))
                .collect(),
            FitData::Pairs(table) => table.rows.iter().map(|r| (r.concept, r.given, r.probability)).collect(),
        }
    }

    fn len(&self) -> usize {
        match self {
            FitData::Samples { label_sets, .. } => label_sets.len(),
            FitData::Pairs(table) => table.len(),
        }
    }
}

/// Mean divergence and max absolute error of `space` over `pairs`.
pub fn evaluate_fit(space: &ConceptSpace, pairs: &[(ConceptId, ConceptId, f64)]) -> (f64, f64) {
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let eps = space.eps();
    let mut kl = 0.0;
    let mut max_err: f64 = 0.0;
    for &(a, b, p) in pairs {
        let q = space.entailment(a, b);
        kl += kl_pair_loss(p, q, eps);
        max_err = max_err.max((q - p).abs());
    }
    (kl / pairs.len() as f64, max_err)
}

/// Fit a fresh space. `on_step(epoch, step, loss)` sees every optimizer step.
pub fn fit_concept_space(
    data: &FitData<'_>,
    vocab: &Vocabulary,
    config: &ConceptTrainConfig,
    mut on_step: impl FnMut(usize, u64, f64),
) -> Result<(ConceptSpace, FitReport)> {
    config.validate()?;
    if data.len() == 0 {
        return Err(Error::domain("no training data"));
    }
    let started = Instant::now();
    let mut space = init_space(vocab, config, &mut rng::stream(config.seed, "init"))?;
    let mut sampler = rng::stream(config.seed, "sampling");
    let all_pairs = data.target_pairs();
    let (initial_kl, _) = evaluate_fit(&space, &all_pairs);

    let mut opt = SpaceOptimizer::new(&space, config.weight_decay);
    let mut grads = zero_grads(&space);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step_losses = Vec::new();
    let mut skipped = 0u64;
    let mut steps = 0u64;

    for epoch in 0..config.epochs {
        order.shuffle(&mut sampler);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let pairs = match data {
                FitData::Samples { label_sets, stats } => {
                    let batch: Vec<Vec<ConceptId>> = chunk
                        .iter()
                        .map(|&i| {
                            let labels = &label_sets[i];
                            let mut ys = labels.clone();
                            ys.extend(sample_negatives(
                                labels,
                                vocab,
                                config.negative_policy,
                                config.negative_k,
                                &mut sampler,
                            ));
                            ys
                        })
                        .collect();
                    collect_pairs(&batch, *stats, config.ordering, &mut skipped)?
                }
                FitData::Pairs(table) => row_pairs(table, chunk),
            };
            grads.iter_mut().for_each(BoxGrad::clear);
            let loss = pair_loss(&space, &pairs, Some(&mut grads))?;
            opt.step(&mut space, &grads, config.lr);
            steps += 1;
            sum += loss;
            batches += 1;
            step_losses.push(loss);
            on_step(epoch, steps, loss);
        }
        epoch_losses.push(sum / batches as f64);
    }

    let (final_kl, max_abs_error) = evaluate_fit(&space, &all_pairs);
    let report = FitReport {
        epoch_losses,
        step_losses,
        initial_kl,
        final_kl,
        max_abs_error,
        target_pairs: all_pairs.len(),
        skipped_pairs: skipped,
        steps,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((space, report))
}

fn row_pairs(table: &PairTable, chunk: &[usize]) -> Vec<WeightedPair> {
    let w = 1.0 / chunk.len() as f64;
    let mut agg: BTreeMap<(ConceptId, ConceptId), (f64, f64)> = BTreeMap::new();
    for &i in chunk {
        let r = table.rows[i];
        agg.entry((r.concept, r.given)).or_insert((r.probability, 0.0)).1 += w;
    }
    agg.into_iter()
        .map(|((concept, given), (target, weight))| WeightedPair {
            concept,
            given,
            target,
            weight,
        })
        .collect()
}

/// One probe result: predicted `P(concept | given)` and the target when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub concept: String,
    pub given: String,
    pub predicted: f64,
    pub target: Option<f64>,
}

/// Query entailments by name. With `normalize_within_family`, a prediction for
/// a family member is replaced by the softmax of its entailment over all
/// members of its family under the same conditioning concept.
pub fn probe(
    space: &ConceptSpace,
    pairs: &[(String, String)],
    normalize_within_family: bool,
    targets: Option<&dyn EntailmentTargets>,
) -> Result<Vec<ProbeRow>> {
    let vocab = &space.vocabulary;
    let mut out = Vec::with_capacity(pairs.len());
    for (c, g) in pairs {
        let a = vocab.require(c)?;
        let b = vocab.require(g)?;
        let mut predicted = space.entailment(a, b);
        if normalize_within_family {
            if let Some(members) = vocab.get(a).family.as_deref().and_then(|f| vocab.family_members(f)) {
                let scores: Vec<f64> = members.iter().map(|&m| space.entailment(m, b)).collect();
                let z = crate::math::log_sum_exp(&scores);
                predicted = (predicted - z).exp();
            }
        }
        let target = match targets {
            Some(t) => match t.target(a, b) {
                Ok(p) => p,
                Err(Error::UnsupportedConditioning(_)) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        out.push(ProbeRow {
            concept: c.clone(),
            given: g.clone(),
            predicted,
            target,
        });
    }
    Ok(out)
}
