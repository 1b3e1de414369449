//! JSON persistence for tasks, demonstrations and operator sets.
//!
//! Files carry a `schema_version` and the environment name. Maps are ordered,
//! so saving the same value twice yields identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Action, Demonstration, Environment, State, Task};
use crate::symbolic::{Atom, ControllerRef, GroundAtom, LiftedAtom, Object, Operator, Predicate, Variable};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("file is for environment '{found}', expected '{expected}'")]
    EnvMismatch { found: String, expected: String },
    #[error("file holds '{found}', expected '{expected}'")]
    KindMismatch { found: String, expected: String },
    #[error("unknown predicate '{0}'")]
    UnknownPredicate(String),
    #[error("unknown object '{0}'")]
    UnknownObject(String),
    #[error("unknown type '{0}'")]
    UnknownType(String),
    #[error("invalid content: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
struct ObjectJson {
    name: String,
    #[serde(rename = "type")]
    ty: String,
}

#[derive(Serialize, Deserialize)]
struct TaskJson {
    objects: Vec<ObjectJson>,
    init: BTreeMap<String, Vec<f64>>,
    goal: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct ActionJson {
    controller: String,
    args: Vec<String>,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DemoJson {
    task: TaskJson,
    states: Vec<BTreeMap<String, Vec<f64>>>,
    actions: Vec<ActionJson>,
}

#[derive(Serialize, Deserialize)]
struct ControllerJson {
    name: String,
    args: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    name: String,
    params: Vec<ObjectJson>,
    preconditions: Vec<Vec<String>>,
    add_effects: Vec<Vec<String>>,
    delete_effects: Vec<Vec<String>>,
    quantified_deletes: Vec<String>,
    controller: ControllerJson,
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    kind: String,
    env: String,
    items: T,
}

#[derive(Deserialize)]
struct Header {
    schema_version: u32,
    kind: String,
    env: String,
}

fn state_json(x: &State) -> BTreeMap<String, Vec<f64>> {
    x.iter().map(|(o, v)| (o.name.to_string(), v.clone())).collect()
}

fn atom_json<T: std::fmt::Display>(a: &Atom<T>) -> Vec<String> {
    std::iter::once(a.predicate.name.to_string())
        .chain(a.args.iter().map(|t| t.to_string()))
        .collect()
}

fn task_json(t: &Task) -> TaskJson {
    TaskJson {
        objects: t
            .objects
            .iter()
            .map(|o| ObjectJson {
                name: o.name.to_string(),
                ty: o.ty.to_string(),
            })
            .collect(),
        init: state_json(&t.init),
        goal: t.goal.iter().map(atom_json).collect(),
    }
}

fn demo_json(d: &Demonstration) -> DemoJson {
    DemoJson {
        task: task_json(&d.task),
        states: d.states.iter().map(state_json).collect(),
        actions: d
            .actions
            .iter()
            .map(|u| ActionJson {
                controller: u.controller.to_string(),
                args: u.args.iter().map(|o| o.name.to_string()).collect(),
                theta: u.theta.clone(),
            })
            .collect(),
    }
}

fn operator_json(op: &Operator) -> OperatorJson {
    OperatorJson {
        name: op.name.clone(),
        params: op
            .params
            .iter()
            .map(|v| ObjectJson {
                name: v.name.to_string(),
                ty: v.ty.to_string(),
            })
            .collect(),
        preconditions: op.preconditions.iter().map(atom_json).collect(),
        add_effects: op.add_effects.iter().map(atom_json).collect(),
        delete_effects: op.delete_effects.iter().map(atom_json).collect(),
        quantified_deletes: op.quantified_deletes.iter().map(|p| p.name.to_string()).collect(),
        controller: ControllerJson {
            name: op.controller.name.to_string(),
            args: op.controller.args.iter().map(|v| v.name.to_string()).collect(),
        },
    }
}

struct Resolver<'a> {
    env: &'a dyn Environment,
}

impl Resolver<'_> {
    fn predicate(&self, name: &str) -> Result<Arc<Predicate>, IoError> {
        self.env
            .predicate(name)
            .cloned()
            .ok_or_else(|| IoError::UnknownPredicate(name.to_string()))
    }

    fn atom<T: crate::symbolic::Term>(
        &self,
        parts: &[String],
        lookup: impl Fn(&str) -> Result<T, IoError>,
    ) -> Result<Atom<T>, IoError> {
        let (head, rest) = parts
            .split_first()
            .ok_or_else(|| IoError::Invalid("empty atom".into()))?;
        let pred = self.predicate(head)?;
        let args = rest.iter().map(|a| lookup(a)).collect::<Result<Vec<_>, _>>()?;
        Atom::try_new(&pred, args).map_err(|e| IoError::Invalid(e.to_string()))
    }

    fn task(&self, t: TaskJson) -> Result<Task, IoError> {
        let mut objects = Vec::with_capacity(t.objects.len());
        for o in &t.objects {
            if self.env.obj_type(&o.ty).is_none() {
                return Err(IoError::UnknownType(o.ty.clone()));
            }
            objects.push(Object::new(&o.name, &o.ty));
        }
        objects.sort();
        let init = state_from(&objects, t.init)?;
        let goal = t
            .goal
            .iter()
            .map(|g| self.atom(g, |n| find_object(&objects, n)))
            .collect::<Result<BTreeSet<GroundAtom>, _>>()?;
        Ok(Task { objects, init, goal })
    }

    fn demo(&self, d: DemoJson) -> Result<Demonstration, IoError> {
        let task = self.task(d.task)?;
        let states = d
            .states
            .into_iter()
            .map(|s| state_from(&task.objects, s))
            .collect::<Result<Vec<_>, _>>()?;
        let actions = d
            .actions
            .into_iter()
            .map(|u| {
                let args = u
                    .args
                    .iter()
                    .map(|n| find_object(&task.objects, n))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Action {
                    controller: u.controller.as_str().into(),
                    args,
                    theta: u.theta,
                })
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(Demonstration { task, states, actions })
    }

    fn operator(&self, o: OperatorJson) -> Result<Operator, IoError> {
        let params: Vec<Variable> = o.params.iter().map(|p| Variable::new(&p.name, &p.ty)).collect();
        let lookup = |n: &str| {
            params
                .iter()
                .find(|v| &*v.name == n)
                .cloned()
                .ok_or_else(|| IoError::Invalid(format!("operator {} has no parameter {n}", o.name)))
        };
        let atoms = |list: &[Vec<String>]| {
            list.iter()
                .map(|a| self.atom(a, lookup))
                .collect::<Result<BTreeSet<LiftedAtom>, _>>()
        };
        let op = Operator {
            name: o.name.clone(),
            preconditions: atoms(&o.preconditions)?,
            add_effects: atoms(&o.add_effects)?,
            delete_effects: atoms(&o.delete_effects)?,
            quantified_deletes: o
                .quantified_deletes
                .iter()
                .map(|p| self.predicate(p))
                .collect::<Result<_, _>>()?,
            controller: ControllerRef {
                name: o.controller.name.as_str().into(),
                args: o.controller.args.iter().map(|a| lookup(a)).collect::<Result<_, _>>()?,
            },
            params: params.clone(),
        };
        op.validate().map_err(|e| IoError::Invalid(e.to_string()))?;
        Ok(op)
    }
}

fn find_object(objects: &[Object], name: &str) -> Result<Object, IoError> {
    objects
        .iter()
        .find(|o| &*o.name == name)
        .cloned()
        .ok_or_else(|| IoError::UnknownObject(name.to_string()))
}

fn state_from(objects: &[Object], raw: BTreeMap<String, Vec<f64>>) -> Result<State, IoError> {
    let mut x = State::new();
    for (name, v) in raw {
        x.insert(find_object(objects, &name)?, v);
    }
    if x.len() != objects.len() {
        return Err(IoError::Invalid("state does not cover every task object".into()));
    }
    Ok(x)
}

pub(crate) fn to_string<T: Serialize>(kind: &str, env: &dyn Environment, items: T) -> String {
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        env: env.name().to_string(),
        items,
    };
    let mut s = serde_json::to_string_pretty(&envelope).expect("plain data serializes");
    s.push('\n');
    s
}

pub(crate) fn check_header(text: &str, kind: &str, env: &dyn Environment) -> Result<(), IoError> {
    let header: Header = serde_json::from_str(text)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(IoError::SchemaVersion {
            found: header.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    if header.kind != kind {
        return Err(IoError::KindMismatch {
            found: header.kind,
            expected: kind.to_string(),
        });
    }
    if header.env != env.name() {
        return Err(IoError::EnvMismatch {
            found: header.env,
            expected: env.name().to_string(),
        });
    }
    Ok(())
}

/// Checks the header, then decodes the items.
pub(crate) fn from_string<T: serde::de::DeserializeOwned>(
    text: &str,
    kind: &str,
    env: &dyn Environment,
) -> Result<T, IoError> {
    check_header(text, kind, env)?;
    let envelope: Envelope<T> = serde_json::from_str(text)?;
    Ok(envelope.items)
}

/// Reads only the environment name from a saved file.
pub fn peek_env(text: &str) -> Result<String, IoError> {
    let header: Header = serde_json::from_str(text)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(IoError::SchemaVersion {
            found: header.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(header.env)
}

pub fn demos_to_json(env: &dyn Environment, demos: &[Demonstration]) -> String {
    to_string("demonstrations", env, demos.iter().map(demo_json).collect::<Vec<_>>())
}

pub fn demos_from_json(env: &dyn Environment, text: &str) -> Result<Vec<Demonstration>, IoError> {
    check_header(text, "demonstrations", env)?;
    let envelope: Envelope<Vec<DemoJson>> = serde_json::from_str(text)?;
    let r = Resolver { env };
    envelope.items.into_iter().map(|d| r.demo(d)).collect()
}

pub fn tasks_to_json(env: &dyn Environment, tasks: &[Task]) -> String {
    to_string("tasks", env, tasks.iter().map(task_json).collect::<Vec<_>>())
}

pub fn tasks_from_json(env: &dyn Environment, text: &str) -> Result<Vec<Task>, IoError> {
    check_header(text, "tasks", env)?;
    let envelope: Envelope<Vec<TaskJson>> = serde_json::from_str(text)?;
    let r = Resolver { env };
    envelope.items.into_iter().map(|t| r.task(t)).collect()
}

pub fn operators_to_json<'a>(env: &dyn Environment, ops: impl IntoIterator<Item = &'a Operator>) -> String {
    let mut items: Vec<OperatorJson> = ops.into_iter().map(operator_json).collect();
    items.sort_by(|a, b| a.name.cmp(&b.name));
    to_string("operators", env, items)
}

pub fn operators_from_json(env: &dyn Environment, text: &str) -> Result<Vec<Operator>, IoError> {
    check_header(text, "operators", env)?;
    let envelope: Envelope<Vec<OperatorJson>> = serde_json::from_str(text)?;
    let r = Resolver { env };
    envelope.items.into_iter().map(|o| r.operator(o)).collect()
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| IoError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Cluttered1D, TaskScale};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn demo_round_trip_is_byte_stable() {
        let env = Cluttered1D::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let demos: Vec<_> = (0..3)
            .map(|_| env.oracle_solve(&env.sample_task(TaskScale::Train, &mut rng)).unwrap())
            .collect();
        let text = demos_to_json(&env, &demos);
        let back = demos_from_json(&env, &text).unwrap();
        assert_eq!(back, demos);
        assert_eq!(demos_to_json(&env, &back), text);
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let env = Cluttered1D::new();
        let text = demos_to_json(&env, &[]).replace("\"schema_version\": 1", "\"schema_version\": 7");
        match demos_from_json(&env, &text) {
            Err(IoError::SchemaVersion { found: 7, expected: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
