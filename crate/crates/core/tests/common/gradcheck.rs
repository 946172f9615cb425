//! Finite-difference checks; each returns the worst relative error seen.

use super::*;
use rand::Rng;

use concept_space::boxes::{d_log_joint, d_log_measure, BoxGrad};
use concept_space::multimodal::{joint_loss_grad, JointLossForm};
use concept_space::projection::train::projection_batch;
use concept_space::projection::{attr_loss, cat_loss, EncoderShape, FeatureEncoder, LossGrads, Modality};
use concept_space::rng;
use concept_space::store::{AnnotatedSample, ConceptKind, GroundTruthStats};
use concept_space::trainer::{concept_loss, zero_grads, PairOrdering};
use concept_space::{BoxEmbedding, ConceptId, ConceptSpace, GlobalExtrema, KnowledgeSpaceConfig, Vocabulary};

const H: f64 = 1e-5;
const CASES: usize = 100;
pub const TOL: f64 = 1e-5;
pub const TOL_COMPOSITE: f64 = 1e-4;
const FLOOR: f64 = 1e-7;
const EPS: f64 = 1e-6;

fn extrema(dim: usize) -> GlobalExtrema {
    GlobalExtrema::new(vec![-2.0; dim], vec![4.0; dim]).unwrap()
}

fn grad_vec(g: &BoxGrad) -> Vec<f64> {
    g.min.iter().chain(&g.delta).copied().collect()
}

pub fn check_log_measure() -> f64 {
    let mut worst: f64 = 0.0;
    let mut r = rng::stream(11, "grad-measure");
    let ext = extrema(5);
    for _ in 0..CASES {
        let b = random_box(&mut r, 5, (-1.0, 1.0), (0.05, 2.0));
        let analytic = grad_vec(&d_log_measure(&b, &ext).unwrap());
        let numeric = numeric_grad(&flatten(&b), H, |x| {
            let b = unflatten(x);
            measure(&b.min, &b.delta, &ext.gmin, &ext.gmax).ln()
        });
        let err = max_rel_error(&analytic, &numeric, FLOOR);
        worst = worst.max(err);
    }
    worst
}

pub fn check_log_joint() -> f64 {
    let mut worst: f64 = 0.0;
    let mut r = rng::stream(12, "grad-joint");
    let ext = extrema(5);
    let mut done = 0;
    while done < CASES {
        let a = random_box(&mut r, 5, (-1.0, 1.0), (0.05, 2.0));
        let b = random_box(&mut r, 5, (-1.0, 1.0), (0.05, 2.0));
        if !no_ties(&a, &b, 1e-3) {
            continue;
        }
        let (ga, gb) = d_log_joint(&a, &b, &ext).unwrap();
        let mut analytic = grad_vec(&ga);
        analytic.extend(grad_vec(&gb));
        let mut x = flatten(&a);
        x.extend(flatten(&b));
        let numeric = numeric_grad(&x, H, |x| {
            let (a, b) = (unflatten(&x[..10]), unflatten(&x[10..]));
            joint_measure(&a, &b, &ext.gmin, &ext.gmax).ln()
        });
        let err = max_rel_error(&analytic, &numeric, FLOOR);
        worst = worst.max(err);
        done += 1;
    }
    worst
}

fn all_separated(boxes: &[BoxEmbedding]) -> bool {
    boxes
        .iter()
        .enumerate()
        .all(|(i, a)| boxes[i + 1..].iter().all(|b| no_ties(a, b, 1e-3)))
}

fn attribute_vocab(n: usize) -> Vocabulary {
    let mut v = Vocabulary::new();
    for i in 0..n {
        v.push(&format!("a{i}"), ConceptKind::Attribute, None).unwrap();
    }
    v
}

fn cfg(dim: usize) -> KnowledgeSpaceConfig {
    KnowledgeSpaceConfig {
        dim,
        prob_clamp_eps: EPS,
    }
}

fn flatten_space(space: &ConceptSpace) -> Vec<f64> {
    space.boxes.iter().flat_map(flatten).collect()
}

fn load_space(space: &mut ConceptSpace, x: &[f64]) {
    let w = 2 * space.dim();
    for (k, b) in space.boxes.iter_mut().enumerate() {
        *b = unflatten(&x[k * w..(k + 1) * w]);
    }
}

/// Oracle for the batch loss: Bernoulli KL from counted conditionals.
fn reference_concept_loss(space: &ConceptSpace, batch: &[Vec<ConceptId>]) -> f64 {
    let n = space.boxes.len();
    let mut count = vec![0.0; n];
    let mut pair = vec![vec![0.0; n]; n];
    for ls in batch {
        for &a in ls {
            count[a.index()] += 1.0;
            for &b in ls {
                if a != b {
                    pair[a.index()][b.index()] += 1.0;
                }
            }
        }
    }
    let mut total = 0.0;
    let mut used = 0.0;
    for ls in batch {
        let k = ls.len();
        if k < 2 {
            continue;
        }
        used += 1.0;
        let norm = (k * (k - 1)) as f64;
        for &a in ls {
            for &b in ls {
                if a == b {
                    continue;
                }
                let p = clamp(pair[a.index()][b.index()] / count[b.index()], EPS);
                let q = clamp(conditional(&space.boxes[a.index()], &space.boxes[b.index()]), EPS);
                total += (p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()) / norm;
            }
        }
    }
    total / used
}

pub fn check_concept_loss() -> f64 {
    let mut worst: f64 = 0.0;
    let mut r = rng::stream(13, "grad-concept");
    let vocab = attribute_vocab(6);
    let dim = 4;
    let mut done = 0;
    while done < CASES {
        let boxes: Vec<BoxEmbedding> = (0..6)
            .map(|_| random_box(&mut r, dim, (0.0, 1.0), (0.5, 1.5)))
            .collect();
        if !all_separated(&boxes) {
            continue;
        }
        let batch: Vec<Vec<ConceptId>> = (0..8)
            .map(|_| {
                let mut ls: Vec<ConceptId> = (0..6u32).filter(|_| r.random_bool(0.5)).map(ConceptId).collect();
                if ls.len() < 2 {
                    ls = vec![ConceptId(0), ConceptId(1 + r.random_range(0..5))];
                }
                ls
            })
            .collect();
        let stats = GroundTruthStats::extract(batch.iter().map(Vec::as_slice), &vocab).unwrap();
        let mut space = ConceptSpace::new(vocab.clone(), boxes, cfg(dim)).unwrap();
        let mut grads = zero_grads(&space);
        let mut skipped = 0;
        let value = concept_loss(
            &batch,
            &space,
            &stats,
            PairOrdering::Both,
            Some(&mut grads),
            &mut skipped,
        )
        .unwrap();
        assert_eq!(skipped, 0);
        let oracle = reference_concept_loss(&space, &batch);
        assert!(
            (value - oracle).abs() <= 1e-10 * oracle.abs().max(1.0),
            "{value} vs {oracle}"
        );

        let analytic: Vec<f64> = grads.iter().flat_map(grad_vec).collect();
        let x0 = flatten_space(&space);
        let numeric = numeric_grad(&x0, H, |x| {
            load_space(&mut space, x);
            let mut s = 0;
            concept_loss(&batch, &space, &stats, PairOrdering::Both, None, &mut s).unwrap()
        });
        let err = max_rel_error(&analytic, &numeric, FLOOR);
        worst = worst.max(err);
        done += 1;
    }
    worst
}

fn mixed_vocab() -> Vocabulary {
    let mut v = Vocabulary::new();
    for n in ["red", "blue"] {
        v.push(n, ConceptKind::Attribute, Some("color")).unwrap();
    }
    for n in ["shiny", "wet"] {
        v.push(n, ConceptKind::Attribute, None).unwrap();
    }
    for n in ["dog", "cat", "car"] {
        v.push(n, ConceptKind::Category, None).unwrap();
    }
    v
}

/// A space and a projected box with no corner ties and no probability
/// within reach of the clamp.
fn projection_case<R: Rng + ?Sized>(r: &mut R, dim: usize) -> (ConceptSpace, BoxEmbedding) {
    loop {
        let boxes: Vec<BoxEmbedding> = (0..7).map(|_| random_box(r, dim, (0.0, 1.0), (0.5, 1.5))).collect();
        let x = random_box(r, dim, (0.0, 1.0), (0.5, 1.5));
        let separated = all_separated(&boxes) && boxes.iter().all(|b| no_ties(b, &x, 1e-3));
        let interior = boxes.iter().all(|b| {
            let p = conditional(b, &x);
            p > 1e-4 && p < 1.0 - 1e-4
        });
        if separated && interior {
            return (ConceptSpace::new(mixed_vocab(), boxes, cfg(dim)).unwrap(), x);
        }
    }
}

fn check_projection_loss(name: &str, f: impl Fn(&BoxEmbedding, &ConceptSpace, Option<LossGrads<'_>>) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut r = rng::stream(14, name);
    let dim = 3;
    for _ in 0..CASES {
        let (mut space, x) = projection_case(&mut r, dim);
        let mut gx = BoxGrad::zeros(dim);
        let mut gs = zero_grads(&space);
        f(
            &x,
            &space,
            Some(LossGrads {
                x: &mut gx,
                space: Some(&mut gs),
            }),
        );
        let numeric_x = numeric_grad(&flatten(&x), H, |v| f(&unflatten(v), &space, None));
        let err = max_rel_error(&grad_vec(&gx), &numeric_x, FLOOR);
        worst = worst.max(err);

        let analytic: Vec<f64> = gs.iter().flat_map(grad_vec).collect();
        let numeric = numeric_grad(&flatten_space(&space), H, |v| {
            load_space(&mut space, v);
            f(&x, &space, None)
        });
        let err = max_rel_error(&analytic, &numeric, FLOOR);
        worst = worst.max(err);
    }
    worst
}

pub fn check_attr_loss() -> f64 {
    check_projection_loss("attr", |x, space, g| {
        let pos = [
            space.vocabulary.require("red").unwrap(),
            space.vocabulary.require("wet").unwrap(),
        ];
        attr_loss(&pos, x, space, 3.0, g)
    })
}

pub fn check_cat_loss() -> f64 {
    check_projection_loss("cat", |x, space, g| {
        cat_loss(space.vocabulary.require("cat").unwrap(), x, space, g).unwrap()
    })
}

pub fn check_joint_loss() -> f64 {
    let mut worst: f64 = 0.0;
    for form in [JointLossForm::Overlap, JointLossForm::NegLog] {
        let mut r = rng::stream(15, "grad-joint-loss");
        let mut done = 0;
        while done < CASES {
            let v = random_box(&mut r, 5, (0.0, 1.0), (0.5, 1.5));
            let t = random_box(&mut r, 5, (0.0, 1.0), (0.5, 1.5));
            if !no_ties(&v, &t, 1e-3) {
                continue;
            }
            let (mut gv, mut gt) = (BoxGrad::zeros(5), BoxGrad::zeros(5));
            let value = joint_loss_grad(&v, &t, EPS, form, 1.0, &mut gv, &mut gt);
            let oracle = |v: &BoxEmbedding, t: &BoxEmbedding| {
                let mean = 0.5 * (clamp(conditional(v, t), EPS) + clamp(conditional(t, v), EPS));
                match form {
                    JointLossForm::Overlap => 1.0 - mean,
                    JointLossForm::NegLog => -mean.ln(),
                }
            };
            assert!((value - oracle(&v, &t)).abs() < 1e-12);
            let mut analytic = grad_vec(&gv);
            analytic.extend(grad_vec(&gt));
            let mut x = flatten(&v);
            x.extend(flatten(&t));
            let numeric = numeric_grad(&x, H, |x| oracle(&unflatten(&x[..10]), &unflatten(&x[10..])));
            let err = max_rel_error(&analytic, &numeric, FLOOR);
            worst = worst.max(err);
            done += 1;
        }
    }
    worst
}

pub fn check_encoder_weights() -> f64 {
    let mut worst: f64 = 0.0;
    let mut r = rng::stream(16, "grad-encoder");
    let shape = EncoderShape {
        input: 4,
        embed: 8,
        dim: 3,
    };
    let mut done = 0;
    while done < CASES {
        let mut enc = FeatureEncoder::init(Modality::Vision, shape, None, &mut r).unwrap();
        let (space, _) = projection_case(&mut r, 3);
        let samples: Vec<AnnotatedSample> = (0..3)
            .map(|k| AnnotatedSample {
                id: k.to_string(),
                labels: vec![ConceptId(k as u32 % 2), ConceptId(3), ConceptId(4 + k as u32)],
                vision: (0..4).map(|_| r.random_range(-1.0..1.0)).collect(),
                text: String::new(),
                coords: None,
                scene: None,
            })
            .collect();
        let refs: Vec<&AnnotatedSample> = samples.iter().collect();
        let caches: Vec<_> = samples.iter().map(|s| enc.forward(s.vision.clone())).collect();
        let safe = caches.iter().all(|c| {
            c.pre_delta.iter().all(|v| v.abs() > 1e-3)
                && space.boxes.iter().all(|b| {
                    let p = conditional(b, &c.output);
                    no_ties(b, &c.output, 1e-3) && p > 1e-4 && p < 1.0 - 1e-4
                })
        });
        if !safe {
            continue;
        }
        let mut grad = vec![0.0; enc.params.len()];
        projection_batch(&enc, &space, &refs, 3.0, Some(&mut grad), None).unwrap();
        let p0 = enc.params.clone();
        let numeric = numeric_grad(&p0, H, |p| {
            enc.params.copy_from_slice(p);
            projection_batch(&enc, &space, &refs, 3.0, None, None).unwrap()
        });
        let err = max_rel_error(&grad, &numeric, FLOOR);
        worst = worst.max(err);
        done += 1;
    }
    worst
}
