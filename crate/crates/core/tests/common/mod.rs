//! Reference implementations shared by the integration tests. Nothing here
//! calls into the library's numeric code.

#![allow(dead_code)]

pub mod gradcheck;

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use concept_space::store::{AnnotatedSample, Dataset};
use concept_space::vqa::Program;
use concept_space::BoxEmbedding;

/// Plain `ln(1 + e^x)`.
pub fn sp(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Softplus volume ratio computed as a product.
pub fn measure(min: &[f64], delta: &[f64], gmin: &[f64], gmax: &[f64]) -> f64 {
    (0..min.len()).map(|i| sp(delta[i]) / sp(gmax[i] - gmin[i])).product()
}

pub fn joint_widths(a: &BoxEmbedding, b: &BoxEmbedding) -> Vec<f64> {
    (0..a.min.len())
        .map(|i| {
            let hi = (a.min[i] + a.delta[i]).min(b.min[i] + b.delta[i]);
            let lo = a.min[i].max(b.min[i]);
            hi - lo
        })
        .collect()
}

pub fn joint_measure(a: &BoxEmbedding, b: &BoxEmbedding, gmin: &[f64], gmax: &[f64]) -> f64 {
    let w = joint_widths(a, b);
    (0..w.len()).map(|i| sp(w[i]) / sp(gmax[i] - gmin[i])).product()
}

/// Unclamped `P(a | b)`.
pub fn conditional(a: &BoxEmbedding, b: &BoxEmbedding) -> f64 {
    let w = joint_widths(a, b);
    (0..w.len()).map(|i| sp(w[i]) / sp(b.delta[i])).product()
}

pub fn clamp(p: f64, eps: f64) -> f64 {
    p.max(eps).min(1.0 - eps)
}

pub fn random_box<R: Rng + ?Sized>(rng: &mut R, dim: usize, min: (f64, f64), delta: (f64, f64)) -> BoxEmbedding {
    BoxEmbedding {
        min: (0..dim).map(|_| rng.random_range(min.0..min.1)).collect(),
        delta: (0..dim).map(|_| rng.random_range(delta.0..delta.1)).collect(),
    }
}

/// No two corners of `a` and `b` closer than `gap` in any dimension.
pub fn no_ties(a: &BoxEmbedding, b: &BoxEmbedding, gap: f64) -> bool {
    (0..a.min.len())
        .all(|i| (a.min[i] - b.min[i]).abs() > gap && ((a.min[i] + a.delta[i]) - (b.min[i] + b.delta[i])).abs() > gap)
}

/// Central difference of `f` at every coordinate of `x`.
pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Worst relative error; entries where both sides are below `floor` count as equal.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale < floor {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

pub fn flatten(b: &BoxEmbedding) -> Vec<f64> {
    b.min.iter().chain(&b.delta).copied().collect()
}

pub fn unflatten(x: &[f64]) -> BoxEmbedding {
    let d = x.len() / 2;
    BoxEmbedding {
        min: x[..d].to_vec(),
        delta: x[d..].to_vec(),
    }
}

/// One object as the reference interpreter sees it: label names and position.
#[derive(Debug, Clone)]
pub struct RefObject {
    pub labels: Vec<String>,
    pub x: f64,
    pub y: f64,
}

pub fn reference_scenes(samples: &[AnnotatedSample], ds: &Dataset) -> BTreeMap<u64, Vec<RefObject>> {
    let mut out: BTreeMap<u64, Vec<RefObject>> = BTreeMap::new();
    for s in samples {
        let c = s.coords.expect("coords");
        out.entry(s.scene.expect("scene")).or_default().push(RefObject {
            labels: s.labels.iter().map(|&l| ds.vocabulary.name(l).to_string()).collect(),
            x: c[0],
            y: c[1],
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum RefValue {
    Set(Vec<bool>),
    Object(usize),
    Int(i64),
    Bool(bool),
    Word(String),
}

/// Evaluates programs by recursive descent over the step graph, working
/// directly on label names. Families come from the dataset header.
pub struct Reference<'a> {
    families: HashMap<&'a str, &'a [String]>,
}

impl<'a> Reference<'a> {
    pub fn new(ds: &'a Dataset) -> Self {
        Reference {
            families: ds
                .header
                .families
                .iter()
                .map(|f| (f.name.as_str(), f.values.as_slice()))
                .collect(),
        }
    }

    fn value_of(&self, obj: &RefObject, family: &str) -> Result<String, String> {
        let vals = self.families.get(family).ok_or(format!("no family {family}"))?;
        let hits: Vec<&String> = vals.iter().filter(|v| obj.labels.contains(v)).collect();
        match hits.as_slice() {
            [one] => Ok((*one).clone()),
            _ => Err(format!("object has {} values of {family}", hits.len())),
        }
    }

    pub fn answer(&self, program: &Program, scene: &[RefObject]) -> Result<String, String> {
        let last = program.steps.len() - 1;
        Ok(match self.eval(program, scene, last)? {
            RefValue::Int(n) => n.to_string(),
            RefValue::Bool(b) => if b { "yes" } else { "no" }.to_string(),
            RefValue::Word(w) => w,
            other => return Err(format!("program ends in {other:?}")),
        })
    }

    fn eval(&self, p: &Program, scene: &[RefObject], at: usize) -> Result<RefValue, String> {
        let step = &p.steps[at];
        let args: Vec<RefValue> = step
            .inputs
            .iter()
            .map(|&i| self.eval(p, scene, i))
            .collect::<Result<_, _>>()?;
        let set = |k: usize| match &args[k] {
            RefValue::Set(s) => Ok(s.clone()),
            v => Err(format!("expected a set, got {v:?}")),
        };
        let obj = |k: usize| match &args[k] {
            RefValue::Object(o) => Ok(*o),
            v => Err(format!("expected an object, got {v:?}")),
        };
        let int = |k: usize| match &args[k] {
            RefValue::Int(n) => Ok(*n),
            v => Err(format!("expected an integer, got {v:?}")),
        };
        let op = step.op.as_str();
        let value = step.value.as_deref();
        let out = match op {
            "scene" => RefValue::Set(vec![true; scene.len()]),
            "unique" => {
                let s = set(0)?;
                let members: Vec<usize> = (0..s.len()).filter(|&i| s[i]).collect();
                if members.len() != 1 {
                    return Err(format!("unique over {} objects", members.len()));
                }
                RefValue::Object(members[0])
            }
            "relate" => {
                let r = &scene[obj(0)?];
                let keep: Vec<bool> = scene
                    .iter()
                    .map(|o| match value {
                        Some("left") => o.x < r.x,
                        Some("right") => o.x > r.x,
                        Some("front") => o.y > r.y,
                        Some("behind") => o.y < r.y,
                        _ => false,
                    })
                    .collect();
                RefValue::Set(keep)
            }
            "count" => RefValue::Int(set(0)?.iter().filter(|&&b| b).count() as i64),
            "exist" => RefValue::Bool(set(0)?.iter().any(|&b| b)),
            "equal_integer" => RefValue::Bool(int(0)? == int(1)?),
            "greater_than" => RefValue::Bool(int(0)? > int(1)?),
            "less_than" => RefValue::Bool(int(0)? < int(1)?),
            "and" | "or" => {
                let (a, b) = (set(0)?, set(1)?);
                RefValue::Set(
                    a.iter()
                        .zip(&b)
                        .map(|(&x, &y)| if op == "and" { x && y } else { x || y })
                        .collect(),
                )
            }
            _ => {
                let (head, fam) = op.split_once('_').ok_or(format!("bad op {op}"))?;
                match head {
                    "filter" => {
                        let v = value.ok_or("filter without value")?;
                        let s = set(0)?;
                        RefValue::Set(
                            scene
                                .iter()
                                .zip(&s)
                                .map(|(o, &keep)| keep && o.labels.iter().any(|l| l == v))
                                .collect(),
                        )
                    }
                    "query" => RefValue::Word(self.value_of(&scene[obj(0)?], fam)?),
                    "same" => {
                        let r = obj(0)?;
                        let want = self.value_of(&scene[r], fam)?;
                        let mut keep = Vec::with_capacity(scene.len());
                        for (i, o) in scene.iter().enumerate() {
                            keep.push(i != r && self.value_of(o, fam)? == want);
                        }
                        RefValue::Set(keep)
                    }
                    "equal" => match (&args[0], &args[1]) {
                        (RefValue::Word(a), RefValue::Word(b)) => RefValue::Bool(a == b),
                        (RefValue::Object(a), RefValue::Object(b)) => {
                            RefValue::Bool(self.value_of(&scene[*a], fam)? == self.value_of(&scene[*b], fam)?)
                        }
                        v => return Err(format!("equal over {v:?}")),
                    },
                    _ => return Err(format!("bad op {op}")),
                }
            }
        };
        Ok(out)
    }
}
