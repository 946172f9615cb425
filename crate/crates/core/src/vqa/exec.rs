use serde::{Deserialize, Serialize};

use super::program::{validate_steps, Answer, Op, Program, Step};
use super::scene::ResolvedObject;
use crate::error::{Error, Result};
use crate::store::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Attribute values from projected boxes.
    Projected,
    /// Ground-truth attribute values.
    Oracle,
}

impl std::str::FromStr for ExecMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "projected" => Ok(ExecMode::Projected),
            "oracle" => Ok(ExecMode::Oracle),
            other => Err(format!("unknown execution mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Set(Vec<usize>),
    Object(usize),
    Integer(usize),
    Boolean(bool),
    Word(crate::store::ConceptId),
}

/// Run validated operations over a resolved scene.
pub fn run_ops(ops: &[Op], steps: &[Step], scene: &[ResolvedObject]) -> Result<Answer> {
    let mut values: Vec<Value> = Vec::with_capacity(ops.len());
    for (op, step) in ops.iter().zip(steps) {
        let arg = |k: usize| &values[step.inputs[k]];
        let set = |k: usize| match arg(k) {
            Value::Set(s) => s.clone(),
            _ => unreachable!("validated"),
        };
        let object = |k: usize| match arg(k) {
            Value::Object(o) => *o,
            _ => unreachable!("validated"),
        };
        let integer = |k: usize| match arg(k) {
            Value::Integer(n) => *n,
            _ => unreachable!("validated"),
        };
        let v = match op {
            Op::Scene => Value::Set((0..scene.len()).collect()),
            Op::Filter { family, value } => Value::Set(
                set(0)
                    .into_iter()
                    .filter(|&o| scene[o].values[*family] == *value)
                    .collect(),
            ),
            Op::Unique => {
                let s = set(0);
                if s.len() != 1 {
                    return Err(Error::Execution(format!("non-unique: {} objects remain", s.len())));
                }
                Value::Object(s[0])
            }
            Op::Relate(dir) => {
                let r = object(0);
                Value::Set(
                    (0..scene.len())
                        .filter(|&o| o != r && dir.holds(scene[r].coords, scene[o].coords))
                        .collect(),
                )
            }
            Op::Count => Value::Integer(set(0).len()),
            Op::Exist => Value::Boolean(!set(0).is_empty()),
            Op::Query(f) => Value::Word(scene[object(0)].values[*f]),
            Op::Same(f) => {
                let r = object(0);
                Value::Set(
                    (0..scene.len())
                        .filter(|&o| o != r && scene[o].values[*f] == scene[r].values[*f])
                        .collect(),
                )
            }
            Op::Equal(_) => match (arg(0), arg(1)) {
                (Value::Word(a), Value::Word(b)) => Value::Boolean(a == b),
                _ => unreachable!("validated"),
            },
            Op::EqualInteger => Value::Boolean(integer(0) == integer(1)),
            Op::GreaterThan => Value::Boolean(integer(0) > integer(1)),
            Op::LessThan => Value::Boolean(integer(0) < integer(1)),
            Op::And => {
                let b = set(1);
                Value::Set(set(0).into_iter().filter(|o| b.contains(o)).collect())
            }
            Op::Or => {
                let mut s = set(0);
                s.extend(set(1));
                s.sort_unstable();
                s.dedup();
                Value::Set(s)
            }
        };
        values.push(v);
    }
    match values.pop() {
        Some(Value::Integer(n)) => Ok(Answer::Integer(n)),
        Some(Value::Boolean(b)) => Ok(Answer::Boolean(b)),
        Some(Value::Word(c)) => Ok(Answer::Word(c)),
        _ => unreachable!("validated"),
    }
}

/// Validate then execute `steps`; nothing runs when validation fails.
pub fn execute_steps(steps: &[Step], scene: &[ResolvedObject], vocab: &Vocabulary) -> Result<Answer> {
    let ops = validate_steps(steps, vocab)?;
    run_ops(&ops, steps, scene)
}

/// Execute a program and render its answer.
pub fn execute(program: &Program, scene: &[ResolvedObject], vocab: &Vocabulary) -> Result<String> {
    Ok(execute_steps(&program.steps, scene, vocab)?.render(vocab))
}
