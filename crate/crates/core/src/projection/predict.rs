use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::boxes::BoxEmbedding;
use crate::error::{Error, Result};
use crate::math::argmax;
use crate::store::{ConceptId, ConceptSpace, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictRule {
    /// One value per attribute family, the most entailed one.
    PerFamilyArgmax,
    /// Every attribute over its threshold plus the most entailed category.
    ThresholdPlusCategoryArgmax,
}

impl std::str::FromStr for PredictRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "per_family_argmax" | "argmax" => Ok(PredictRule::PerFamilyArgmax),
            "threshold_plus_category_argmax" | "threshold" => Ok(PredictRule::ThresholdPlusCategoryArgmax),
            other => Err(format!("unknown prediction rule `{other}`")),
        }
    }
}

/// Decision threshold per attribute concept.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub thresholds: BTreeMap<ConceptId, f64>,
}

impl ThresholdTable {
    pub fn get(&self, c: ConceptId) -> Option<f64> {
        self.thresholds.get(&c).copied()
    }

    /// Thresholds keyed by concept name, for reports.
    pub fn by_name(&self, vocab: &Vocabulary) -> BTreeMap<String, f64> {
        self.thresholds
            .iter()
            .map(|(&c, &t)| (vocab.name(c).to_string(), t))
            .collect()
    }
}

/// Entailment `P(c | x)` for every concept, indexed by concept id.
pub fn concept_probabilities(x: &BoxEmbedding, space: &ConceptSpace) -> Result<Vec<f64>> {
    space.vocabulary.ids().map(|c| space.concept_given(c, x)).collect()
}

/// Member of `members` with the largest probability; ties go to the lowest id.
pub fn family_argmax(members: &[ConceptId], probs: &[f64]) -> ConceptId {
    let scores: Vec<f64> = members.iter().map(|c| probs[c.index()]).collect();
    members[argmax(&scores).expect("families are non-empty")]
}

/// Predicted label set from per-concept probabilities, sorted by id.
pub fn predict_from_probs(
    vocab: &Vocabulary,
    probs: &[f64],
    rule: PredictRule,
    thresholds: Option<&ThresholdTable>,
) -> Result<Vec<ConceptId>> {
    let mut out = Vec::new();
    match rule {
        PredictRule::PerFamilyArgmax => {
            for f in vocab.family_names() {
                let members = vocab.family_members(f).expect("listed family");
                out.push(family_argmax(members, probs));
            }
        }
        PredictRule::ThresholdPlusCategoryArgmax => {
            let table =
                thresholds.ok_or_else(|| Error::Config("threshold rule needs a calibrated threshold table".into()))?;
            for a in vocab.attributes() {
                let t = table
                    .get(a)
                    .ok_or_else(|| Error::Config(format!("no threshold for attribute `{}`", vocab.name(a))))?;
                if probs[a.index()] >= t {
                    out.push(a);
                }
            }
            let cats: Vec<ConceptId> = vocab.categories().collect();
            if !cats.is_empty() {
                out.push(family_argmax(&cats, probs));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn predict(
    x: &BoxEmbedding,
    space: &ConceptSpace,
    rule: PredictRule,
    thresholds: Option<&ThresholdTable>,
) -> Result<Vec<ConceptId>> {
    let probs = concept_probabilities(x, space)?;
    predict_from_probs(&space.vocabulary, &probs, rule, thresholds)
}

/// The threshold grid `0.05, 0.10, ..., 0.95`.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (1..=19).map(|k| k as f64 / 20.0)
}

pub fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Grid threshold maximising F1 of `score >= t`; ties go to the smallest
/// threshold, and an attribute without positives gets 0.5.
pub fn calibrate_one(scores: &[f64], labels: &[bool]) -> f64 {
    if !labels.iter().any(|&l| l) {
        return 0.5;
    }
    let mut best = (f64::NEG_INFINITY, 0.5);
    for t in threshold_grid() {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= t, l) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let score = f1(tp, fp, fn_);
        if score > best.0 {
            best = (score, t);
        }
    }
    best.1
}

/// Calibrate every attribute on a validation split given per-sample
/// probabilities (indexed by concept id) and label sets.
pub fn calibrate_thresholds(vocab: &Vocabulary, probs: &[Vec<f64>], labels: &[Vec<ConceptId>]) -> ThresholdTable {
    let mut thresholds = BTreeMap::new();
    for a in vocab.attributes() {
        let scores: Vec<f64> = probs.iter().map(|p| p[a.index()]).collect();
        let truth: Vec<bool> = labels.iter().map(|l| l.contains(&a)).collect();
        thresholds.insert(a, calibrate_one(&scores, &truth));
    }
    ThresholdTable { thresholds }
}

/// Held-out quality of predictions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evaluation {
    pub samples: usize,
    /// Accuracy of the per-family argmax, by family name.
    pub family_accuracy: BTreeMap<String, f64>,
    pub mean_family_accuracy: f64,
    pub category_accuracy: Option<f64>,
    pub attribute_micro_f1: Option<f64>,
    pub attribute_macro_f1: Option<f64>,
}

/// Score predictions from per-sample probabilities. Threshold metrics are
/// reported when a table is supplied.
pub fn evaluate_probs(
    vocab: &Vocabulary,
    probs: &[Vec<f64>],
    labels: &[Vec<ConceptId>],
    thresholds: Option<&ThresholdTable>,
) -> Evaluation {
    let n = probs.len();
    let mut ev = Evaluation {
        samples: n,
        ..Default::default()
    };
    if n == 0 {
        return ev;
    }
    for f in vocab.family_names() {
        let members = vocab.family_members(f).expect("listed family");
        let mut hit = 0usize;
        let mut total = 0usize;
        for (p, l) in probs.iter().zip(labels) {
            if let Some(truth) = members.iter().find(|m| l.contains(m)) {
                total += 1;
                if family_argmax(members, p) == *truth {
                    hit += 1;
                }
            }
        }
        if total > 0 {
            ev.family_accuracy.insert(f.clone(), hit as f64 / total as f64);
        }
    }
    if !ev.family_accuracy.is_empty() {
        ev.mean_family_accuracy = ev.family_accuracy.values().sum::<f64>() / ev.family_accuracy.len() as f64;
    }
    let cats: Vec<ConceptId> = vocab.categories().collect();
    if !cats.is_empty() {
        let mut hit = 0usize;
        let mut total = 0usize;
        for (p, l) in probs.iter().zip(labels) {
            if let Some(truth) = cats.iter().find(|c| l.contains(c)) {
                total += 1;
                if family_argmax(&cats, p) == *truth {
                    hit += 1;
                }
            }
        }
        if total > 0 {
            ev.category_accuracy = Some(hit as f64 / total as f64);
        }
    }
    if let Some(table) = thresholds {
        let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
        let mut per_attr = Vec::new();
        for a in vocab.attributes() {
            let t = table.get(a).unwrap_or(0.5);
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (p, l) in probs.iter().zip(labels) {
                match (p[a.index()] >= t, l.contains(&a)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            tp_all += tp;
            fp_all += fp;
            fn_all += fn_;
            if tp + fn_ > 0 {
                per_attr.push(f1(tp, fp, fn_));
            }
        }
        ev.attribute_micro_f1 = Some(f1(tp_all, fp_all, fn_all));
        if !per_attr.is_empty() {
            ev.attribute_macro_f1 = Some(per_attr.iter().sum::<f64>() / per_attr.len() as f64);
        }
    }
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::ConceptKind;

    #[test]
    fn calibration_examples() {
        assert_eq!(calibrate_one(&[0.9, 0.8, 0.2], &[true, true, false]), 0.25);
        assert_eq!(calibrate_one(&[0.9, 0.1, 0.3], &[true, true, true]), 0.05);
        assert_eq!(calibrate_one(&[0.9, 0.1], &[false, false]), 0.5);
    }

    #[test]
    fn threshold_rule_example() {
        let mut v = Vocabulary::new();
        let soft = v.push("soft", ConceptKind::Attribute, None).unwrap();
        let parked = v.push("parked", ConceptKind::Attribute, None).unwrap();
        let dog = v.push("dog", ConceptKind::Category, None).unwrap();
        let _car = v.push("car", ConceptKind::Category, None).unwrap();
        let table = ThresholdTable {
            thresholds: [(soft, 0.55), (parked, 0.45)].into_iter().collect(),
        };
        let got = predict_from_probs(
            &v,
            &[0.61, 0.40, 0.7, 0.7],
            PredictRule::ThresholdPlusCategoryArgmax,
            Some(&table),
        )
        .unwrap();
        assert_eq!(got, vec![soft, dog]);
        assert!(matches!(
            predict_from_probs(&v, &[0.0; 4], PredictRule::ThresholdPlusCategoryArgmax, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn per_family_argmax_with_ties() {
        let mut v = Vocabulary::new();
        let red = v.push("red", ConceptKind::Attribute, Some("color")).unwrap();
        let blue = v.push("blue", ConceptKind::Attribute, Some("color")).unwrap();
        let got = predict_from_probs(&v, &[0.7, 0.2], PredictRule::PerFamilyArgmax, None).unwrap();
        assert_eq!(got, vec![red]);
        let got = predict_from_probs(&v, &[0.4, 0.4], PredictRule::PerFamilyArgmax, None).unwrap();
        assert_eq!(got, vec![red]);
        let got = predict_from_probs(&v, &[0.1, 0.4], PredictRule::PerFamilyArgmax, None).unwrap();
        assert_eq!(got, vec![blue]);
    }
}
