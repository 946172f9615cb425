use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{ConceptId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
    Front,
    Behind,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Left, Direction::Right, Direction::Front, Direction::Behind];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Front => "front",
            Direction::Behind => "behind",
        }
    }

    /// Whether `other` lies in this direction of `reference`, strictly.
    pub fn holds(self, reference: [f64; 2], other: [f64; 2]) -> bool {
        match self {
            Direction::Left => other[0] < reference[0],
            Direction::Right => other[0] > reference[0],
            Direction::Front => other[1] > reference[1],
            Direction::Behind => other[1] < reference[1],
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown direction `{s}`")))
    }
}

/// One program operation with its family and value arguments resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Scene,
    Filter { family: usize, value: ConceptId },
    Unique,
    Relate(Direction),
    Count,
    Exist,
    Query(usize),
    Same(usize),
    Equal(usize),
    EqualInteger,
    GreaterThan,
    LessThan,
    And,
    Or,
}

/// Type of the value flowing out of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Set,
    Object,
    Integer,
    Boolean,
    /// An attribute value of the given family.
    Word(usize),
}

impl Op {
    pub fn input_kinds(&self) -> Vec<Kind> {
        use Kind::*;
        match self {
            Op::Scene => vec![],
            Op::Filter { .. } | Op::Unique | Op::Count | Op::Exist => vec![Set],
            Op::Relate(_) | Op::Query(_) | Op::Same(_) => vec![Object],
            Op::Equal(f) => vec![Word(*f), Word(*f)],
            Op::EqualInteger | Op::GreaterThan | Op::LessThan => vec![Integer, Integer],
            Op::And | Op::Or => vec![Set, Set],
        }
    }

    pub fn output_kind(&self) -> Kind {
        match self {
            Op::Scene | Op::Filter { .. } | Op::Relate(_) | Op::Same(_) | Op::And | Op::Or => Kind::Set,
            Op::Unique => Kind::Object,
            Op::Count => Kind::Integer,
            Op::Exist | Op::Equal(_) | Op::EqualInteger | Op::GreaterThan | Op::LessThan => Kind::Boolean,
            Op::Query(f) => Kind::Word(*f),
        }
    }
}

/// A program step as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default)]
    pub inputs: Vec<usize>,
}

impl Step {
    pub fn new(op: impl Into<String>, value: Option<&str>, inputs: &[usize]) -> Self {
        Step {
            op: op.into(),
            value: value.map(str::to_string),
            inputs: inputs.to_vec(),
        }
    }

    /// Resolve opcode, family and value against `vocab`.
    pub fn resolve(&self, vocab: &Vocabulary) -> Result<Op> {
        let family = |name: &str| {
            vocab
                .family_index(name)
                .ok_or_else(|| Error::Validation(format!("unknown attribute family `{name}` in `{}`", self.op)))
        };
        let no_value = |op: Op| {
            if self.value.is_some() {
                Err(Error::Validation(format!("`{}` takes no value", self.op)))
            } else {
                Ok(op)
            }
        };
        let need_value = || {
            self.value
                .as_deref()
                .ok_or_else(|| Error::Validation(format!("`{}` needs a value", self.op)))
        };
        match self.op.as_str() {
            "scene" => no_value(Op::Scene),
            "unique" => no_value(Op::Unique),
            "count" => no_value(Op::Count),
            "exist" => no_value(Op::Exist),
            "equal_integer" => no_value(Op::EqualInteger),
            "greater_than" => no_value(Op::GreaterThan),
            "less_than" => no_value(Op::LessThan),
            "and" => no_value(Op::And),
            "or" => no_value(Op::Or),
            "relate" => Ok(Op::Relate(need_value()?.parse()?)),
            op => {
                let (head, fam) = op
                    .split_once('_')
                    .ok_or_else(|| Error::Validation(format!("unknown opcode `{op}`")))?;
                let f = family(fam)?;
                match head {
                    "filter" => {
                        let v = need_value()?;
                        let c = vocab
                            .id(v)
                            .filter(|c| vocab.family_members(fam).is_some_and(|m| m.contains(c)))
                            .ok_or_else(|| Error::Validation(format!("`{v}` is not a value of `{fam}`")))?;
                        Ok(Op::Filter { family: f, value: c })
                    }
                    "query" => no_value(Op::Query(f)),
                    "same" => no_value(Op::Same(f)),
                    "equal" => no_value(Op::Equal(f)),
                    _ => Err(Error::Validation(format!("unknown opcode `{op}`"))),
                }
            }
        }
    }
}

/// A question with its program and expected answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Program {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<u64>,
    pub question: String,
    pub steps: Vec<Step>,
    pub answer: String,
}

impl Program {
    /// Check opcodes, wiring and types; returns the resolved operations.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<Vec<Op>> {
        validate_steps(&self.steps, vocab)
    }
}

pub fn validate_steps(steps: &[Step], vocab: &Vocabulary) -> Result<Vec<Op>> {
    if steps.first().map(|s| s.op.as_str()) != Some("scene") {
        return Err(Error::Validation("program must start with `scene`".into()));
    }
    let mut ops = Vec::with_capacity(steps.len());
    let mut kinds: Vec<Kind> = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        let op = step.resolve(vocab)?;
        let want = op.input_kinds();
        if want.len() != step.inputs.len() {
            return Err(Error::Validation(format!(
                "step {i} `{}` takes {} inputs, got {}",
                step.op,
                want.len(),
                step.inputs.len()
            )));
        }
        for (&j, w) in step.inputs.iter().zip(&want) {
            if j >= i {
                return Err(Error::Validation(format!(
                    "step {i} reads step {j}, which is not earlier"
                )));
            }
            if kinds[j] != *w {
                return Err(Error::Validation(format!(
                    "step {i} `{}` expects {:?} from step {j}, got {:?}",
                    step.op, w, kinds[j]
                )));
            }
        }
        kinds.push(op.output_kind());
        ops.push(op);
    }
    match kinds.last() {
        Some(Kind::Integer | Kind::Boolean | Kind::Word(_)) => Ok(ops),
        other => Err(Error::Validation(format!("program ends in {other:?}, not an answer"))),
    }
}

/// An answer value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Integer(usize),
    Boolean(bool),
    Word(ConceptId),
}

impl Answer {
    pub fn render(&self, vocab: &Vocabulary) -> String {
        match self {
            Answer::Integer(n) => n.to_string(),
            Answer::Boolean(b) => if *b { "yes" } else { "no" }.to_string(),
            Answer::Word(c) => vocab.name(*c).to_string(),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn read_programs(path: &Path) -> Result<Vec<Program>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(Some(i + 1), e.to_string()))?);
    }
    Ok(out)
}

pub fn write_programs(path: &Path, programs: &[Program]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for p in programs {
        serde_json::to_writer(&mut w, p).map_err(|e| Error::format(None, e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
