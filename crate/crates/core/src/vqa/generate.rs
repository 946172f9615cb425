use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::exec::execute_steps;
use super::program::{Direction, Program, Step};
use super::scene::ResolvedObject;
use crate::store::Vocabulary;

/// Attempts per question before a template is given up on.
pub const MAX_RETRIES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Count,
    Exist,
    Query,
    Relate,
    Compare,
    Same,
    AndOr,
    Equal,
}

impl Template {
    pub const ALL: [Template; 8] = [
        Template::Count,
        Template::Exist,
        Template::Query,
        Template::Relate,
        Template::Compare,
        Template::Same,
        Template::AndOr,
        Template::Equal,
    ];
}

impl std::str::FromStr for Template {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "count" => Template::Count,
            "exist" => Template::Exist,
            "query" => Template::Query,
            "relate" => Template::Relate,
            "compare" => Template::Compare,
            "same" => Template::Same,
            "and_or" => Template::AndOr,
            "equal" => Template::Equal,
            other => return Err(format!("unknown template `{other}`")),
        })
    }
}

struct Builder<'a> {
    steps: Vec<Step>,
    vocab: &'a Vocabulary,
    scene: &'a [ResolvedObject],
}

impl<'a> Builder<'a> {
    fn new(vocab: &'a Vocabulary, scene: &'a [ResolvedObject]) -> Self {
        Builder {
            steps: vec![Step::new("scene", None, &[])],
            vocab,
            scene,
        }
    }

    fn push(&mut self, op: &str, value: Option<&str>, inputs: &[usize]) -> usize {
        self.steps.push(Step::new(op, value, inputs));
        self.steps.len() - 1
    }

    fn family(&self, f: usize) -> &'a str {
        &self.vocab.family_names()[f]
    }

    fn filter(&mut self, input: usize, f: usize, value: &str) -> usize {
        let op = format!("filter_{}", self.family(f));
        self.push(&op, Some(value), &[input])
    }

    fn random_value<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, String) {
        let f = rng.random_range(0..self.vocab.family_names().len());
        let members = self.vocab.family_members(self.family(f)).expect("listed family");
        (f, self.vocab.name(*members.choose(rng).expect("non-empty")).to_string())
    }

    /// Filters from the scene step that single out one object other than
    /// `exclude`; returns the `unique` step, the object and a noun phrase.
    fn unique_ref<R: Rng + ?Sized>(&mut self, rng: &mut R, exclude: Option<usize>) -> Option<(usize, usize, String)> {
        let candidates: Vec<usize> = (0..self.scene.len()).filter(|&o| Some(o) != exclude).collect();
        let &o = candidates.choose(rng)?;
        let nf = self.vocab.family_names().len();
        let mut fams: Vec<usize> = (0..nf).collect();
        fams.shuffle(rng);
        let matches = |fs: &[usize]| {
            self.scene
                .iter()
                .filter(|x| fs.iter().all(|&f| x.values[f] == self.scene[o].values[f]))
                .count()
        };
        let mut chosen: Option<Vec<usize>> = fams.iter().find(|&&f| matches(&[f]) == 1).map(|&f| vec![f]);
        if chosen.is_none() {
            'outer: for (i, &a) in fams.iter().enumerate() {
                for &b in &fams[i + 1..] {
                    if matches(&[a, b]) == 1 {
                        chosen = Some(vec![a, b]);
                        break 'outer;
                    }
                }
            }
        }
        let mut fs = chosen?;
        fs.sort_unstable();
        let mut cur = 0;
        let mut words = Vec::new();
        for &f in &fs {
            let v = self.vocab.name(self.scene[o].values[f]).to_string();
            cur = self.filter(cur, f, &v);
            words.push(v);
        }
        let u = self.push("unique", None, &[cur]);
        Some((u, o, format!("the {} object", words.join(" "))))
    }
}

fn one<R: Rng + ?Sized>(
    template: Template,
    scene: &[ResolvedObject],
    vocab: &Vocabulary,
    rng: &mut R,
) -> Option<(Vec<Step>, String)> {
    let mut b = Builder::new(vocab, scene);
    let question = match template {
        Template::Count | Template::Exist => {
            let (f, v) = b.random_value(rng);
            let s = b.filter(0, f, &v);
            if template == Template::Count {
                b.push("count", None, &[s]);
                format!("How many {v} objects are there?")
            } else {
                b.push("exist", None, &[s]);
                format!("Are there any {v} objects?")
            }
        }
        Template::Query => {
            let (u, _, phrase) = b.unique_ref(rng, None)?;
            let f = rng.random_range(0..vocab.family_names().len());
            let op = format!("query_{}", b.family(f));
            b.push(&op, None, &[u]);
            format!("What is the {} of {phrase}?", b.family(f))
        }
        Template::Relate => {
            let (u, o, phrase) = b.unique_ref(rng, None)?;
            let dir = *Direction::ALL.choose(rng).expect("non-empty");
            let r = b.push("relate", Some(dir.as_str()), &[u]);
            match rng.random_range(0..3) {
                0 => {
                    b.push("count", None, &[r]);
                    format!("How many objects are {dir} of {phrase}?")
                }
                1 => {
                    let (f, v) = b.random_value(rng);
                    let s = b.filter(r, f, &v);
                    b.push("exist", None, &[s]);
                    format!("Is there a {v} object {dir} of {phrase}?")
                }
                _ => {
                    let n = (0..scene.len())
                        .filter(|&x| x != o && dir.holds(scene[o].coords, scene[x].coords))
                        .count();
                    if n != 1 {
                        return None;
                    }
                    let u2 = b.push("unique", None, &[r]);
                    let f = rng.random_range(0..vocab.family_names().len());
                    let op = format!("query_{}", b.family(f));
                    b.push(&op, None, &[u2]);
                    format!("What is the {} of the object {dir} of {phrase}?", b.family(f))
                }
            }
        }
        Template::Compare => {
            let (f1, v1) = b.random_value(rng);
            let (f2, v2) = b.random_value(rng);
            let s1 = b.filter(0, f1, &v1);
            let c1 = b.push("count", None, &[s1]);
            let s2 = b.filter(0, f2, &v2);
            let c2 = b.push("count", None, &[s2]);
            let (op, text) = *[
                ("equal_integer", "the same number of"),
                ("greater_than", "more"),
                ("less_than", "fewer"),
            ]
            .choose(rng)
            .expect("non-empty");
            b.push(op, None, &[c1, c2]);
            if op == "equal_integer" {
                format!("Are there {text} {v1} objects and {v2} objects?")
            } else {
                format!("Are there {text} {v1} objects than {v2} objects?")
            }
        }
        Template::Same => {
            let (u, _, phrase) = b.unique_ref(rng, None)?;
            let f = rng.random_range(0..vocab.family_names().len());
            let op = format!("same_{}", b.family(f));
            let s = b.push(&op, None, &[u]);
            b.push("count", None, &[s]);
            format!("How many other objects have the same {} as {phrase}?", b.family(f))
        }
        Template::AndOr => {
            let (f1, v1) = b.random_value(rng);
            let (f2, v2) = b.random_value(rng);
            let s1 = b.filter(0, f1, &v1);
            let s2 = b.filter(0, f2, &v2);
            let word = if rng.random_bool(0.5) { "and" } else { "or" };
            let s = b.push(word, None, &[s1, s2]);
            b.push("count", None, &[s]);
            format!("How many objects are {v1} {word} {v2}?")
        }
        Template::Equal => {
            let (u1, o1, p1) = b.unique_ref(rng, None)?;
            let (u2, _, p2) = b.unique_ref(rng, Some(o1))?;
            let f = rng.random_range(0..vocab.family_names().len());
            let fam = b.family(f);
            let q1 = b.push(&format!("query_{fam}"), None, &[u1]);
            let q2 = b.push(&format!("query_{fam}"), None, &[u2]);
            b.push(&format!("equal_{fam}"), None, &[q1, q2]);
            format!("Do {p1} and {p2} have the same {fam}?")
        }
    };
    Some((b.steps, question))
}

/// Up to `n` questions about one scene, answered by oracle execution.
///
/// A template that cannot be instantiated after [`MAX_RETRIES`] attempts is
/// skipped, so fewer than `n` programs may come back.
pub fn generate_questions<R: Rng + ?Sized>(
    scene_id: Option<u64>,
    scene: &[ResolvedObject],
    vocab: &Vocabulary,
    templates: &[Template],
    rng: &mut R,
    n: usize,
) -> Vec<Program> {
    let mut out = Vec::with_capacity(n);
    if scene.is_empty() || templates.is_empty() || vocab.family_names().is_empty() {
        return out;
    }
    for _ in 0..n {
        let template = *templates.choose(rng).expect("non-empty");
        for _ in 0..MAX_RETRIES {
            let Some((steps, question)) = one(template, scene, vocab, rng) else {
                continue;
            };
            if let Ok(answer) = execute_steps(&steps, scene, vocab) {
                out.push(Program {
                    scene: scene_id,
                    question,
                    steps,
                    answer: answer.render(vocab),
                });
                break;
            }
        }
    }
    out
}
