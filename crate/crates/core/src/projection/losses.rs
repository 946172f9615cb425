//! Attribute and category losses of a projected box against a concept space.
//!
//! Attribute loss: weighted binary cross-entropy over every attribute concept,
//! `-w ln P(a|x)` for positives and `-ln(1 - P(a|x))` for negatives, averaged
//! over the attribute universe. Category loss: cross-entropy of a softmax taken
//! over the raw entailment probabilities of all categories.

use crate::boxes::{add_log_entailment_grad, clamp_prob, log_entailment_unchecked, BoxEmbedding, BoxGrad};
use crate::math::log_sum_exp;
use crate::store::{ConceptId, ConceptSpace};

/// Attribute loss from probabilities; `positive[i]` marks labelled attributes.
pub fn attr_loss_from_probs(probs: &[f64], positive: &[bool], w: f64, eps: f64) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let sum: f64 = probs
        .iter()
        .zip(positive)
        .map(|(&p, &pos)| {
            let p = clamp_prob(p, eps);
            if pos {
                -w * p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    sum / probs.len() as f64
}

/// Category loss from probabilities, `-P_true + ln sum_c exp(P_c)`.
pub fn cat_loss_from_probs(probs: &[f64], truth: usize) -> f64 {
    log_sum_exp(probs) - probs[truth]
}

/// Where to accumulate gradients of a projection loss.
pub struct LossGrads<'a> {
    /// Gradient with respect to the projected box.
    pub x: &'a mut BoxGrad,
    /// Gradients with respect to the concept boxes, when the space is trainable.
    pub space: Option<&'a mut [BoxGrad]>,
}

/// Attribute loss of box `x`. The positive term is evaluated from the
/// log-probability directly, which equals `-w ln P` wherever `P >= eps` and
/// keeps a gradient when a positive concept barely overlaps `x`.
pub fn attr_loss(
    positives: &[ConceptId],
    x: &BoxEmbedding,
    space: &ConceptSpace,
    w: f64,
    grads: Option<LossGrads<'_>>,
) -> f64 {
    let attrs: Vec<ConceptId> = space.vocabulary.attributes().collect();
    if attrs.is_empty() {
        return 0.0;
    }
    let eps = space.eps();
    let norm = 1.0 / attrs.len() as f64;
    let mut loss = 0.0;
    let mut grads = grads;
    for a in attrs {
        let ab = space.concept_box(a);
        let le = log_entailment_unchecked(ab, x);
        let (term, d_le) = if positives.contains(&a) {
            (-w * le, -w)
        } else {
            let p_raw = le.exp();
            let p = clamp_prob(p_raw, eps);
            let d = if p == p_raw { p / (1.0 - p) } else { 0.0 };
            (-(1.0 - p).ln(), d)
        };
        loss += norm * term;
        if let Some(g) = grads.as_mut() {
            let scale = norm * d_le;
            if scale != 0.0 {
                let ga = g.space.as_deref_mut().map(|s| &mut s[a.index()]);
                add_log_entailment_grad(ab, x, scale, ga, Some(&mut *g.x));
            }
        }
    }
    loss
}

/// Category loss of box `x` with true category `truth`; `None` when the space
/// has fewer than two categories.
pub fn cat_loss(truth: ConceptId, x: &BoxEmbedding, space: &ConceptSpace, grads: Option<LossGrads<'_>>) -> Option<f64> {
    let cats: Vec<ConceptId> = space.vocabulary.categories().collect();
    if cats.len() < 2 {
        return None;
    }
    let eps = space.eps();
    let ti = cats.iter().position(|&c| c == truth)?;
    let raw: Vec<f64> = cats
        .iter()
        .map(|&c| log_entailment_unchecked(space.concept_box(c), x).exp())
        .collect();
    let probs: Vec<f64> = raw.iter().map(|&p| clamp_prob(p, eps)).collect();
    let loss = cat_loss_from_probs(&probs, ti);
    if let Some(mut g) = grads {
        let z = log_sum_exp(&probs);
        for (k, &c) in cats.iter().enumerate() {
            if probs[k] != raw[k] {
                continue;
            }
            let d_p = (probs[k] - z).exp() - if k == ti { 1.0 } else { 0.0 };
            let scale = d_p * probs[k];
            if scale != 0.0 {
                let cb = space.concept_box(c);
                let gc = g.space.as_deref_mut().map(|s| &mut s[c.index()]);
                add_log_entailment_grad(cb, x, scale, gc, Some(&mut *g.x));
            }
        }
    }
    Some(loss)
}

/// Per-sample projection loss, split into its attribute and category parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProjectionLoss {
    pub attr: f64,
    /// `None` when the sample has no category label or the space has no categories.
    pub cat: Option<f64>,
}

impl ProjectionLoss {
    pub fn total(&self) -> f64 {
        self.attr + self.cat.unwrap_or(0.0)
    }
}

/// Attribute plus category loss of one labelled sample.
pub fn projection_loss(
    labels: &[ConceptId],
    x: &BoxEmbedding,
    space: &ConceptSpace,
    w: f64,
    mut grads: Option<LossGrads<'_>>,
) -> ProjectionLoss {
    let attr = attr_loss(
        labels,
        x,
        space,
        w,
        grads.as_mut().map(|g| LossGrads {
            x: &mut *g.x,
            space: g.space.as_deref_mut(),
        }),
    );
    let category = labels
        .iter()
        .copied()
        .find(|&c| space.vocabulary.get(c).kind == crate::store::ConceptKind::Category);
    let cat = category.and_then(|c| cat_loss(c, x, space, grads));
    ProjectionLoss { attr, cat }
}
