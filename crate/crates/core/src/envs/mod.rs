//! Deterministic low-level simulators with predicates, parameterized
//! controllers, task distributions and scripted demonstrators.

mod cluttered1d;
pub mod io;
mod micro;
mod satellites;
mod screws;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::symbolic::{for_each_binding, AbstractState, GroundAtom, Name, ObjType, Object, Predicate};

pub use cluttered1d::Cluttered1D;
pub use micro::Micro;
pub use satellites::Satellites;
pub use screws::Screws;

/// Per-object feature vectors, ordered by object.
pub type State = BTreeMap<Object, Vec<f64>>;

pub type Classifier = fn(&State, &[Object]) -> bool;

/// A predicate signature paired with its classifier.
#[derive(Clone)]
pub struct PredicateDef {
    pub predicate: Arc<Predicate>,
    pub holds: Classifier,
}

impl fmt::Debug for PredicateDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("PredicateDef").field(&self.predicate.name).finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControllerSpec {
    pub name: Name,
    pub arg_types: Vec<Name>,
    pub theta_dim: usize,
}

impl ControllerSpec {
    pub fn new(name: &str, arg_types: &[&str], theta_dim: usize) -> Self {
        Self {
            name: name.into(),
            arg_types: arg_types.iter().map(|t| Name::from(*t)).collect(),
            theta_dim,
        }
    }
}

/// A controller invocation: discrete object arguments plus continuous
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub controller: Name,
    pub args: Vec<Object>,
    pub theta: Vec<f64>,
}

impl Action {
    pub fn new(controller: &str, args: &[&Object], theta: Vec<f64>) -> Self {
        Self {
            controller: controller.into(),
            args: args.iter().map(|o| (*o).clone()).collect(),
            theta,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<&str> = self.args.iter().map(|o| &*o.name).collect();
        write!(f, "{}({})", self.controller, args.join(", "))?;
        if !self.theta.is_empty() {
            write!(f, " {:?}", self.theta)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskScale {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub objects: Vec<Object>,
    pub init: State,
    pub goal: BTreeSet<GroundAtom>,
}

impl Task {
    pub fn new(init: State, goal: BTreeSet<GroundAtom>) -> Self {
        Self {
            objects: init.keys().cloned().collect(),
            init,
            goal,
        }
    }

    pub fn object(&self, name: &str) -> Option<&Object> {
        self.objects.iter().find(|o| &*o.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    pub task: Task,
    pub states: Vec<State>,
    pub actions: Vec<Action>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown environment '{0}'")]
    UnknownEnv(String),
    #[error("unknown controller '{0}'")]
    UnknownController(String),
    #[error("controller {controller} expects {expected} arguments of types {types:?}, got {got:?}")]
    ArityMismatch {
        controller: String,
        expected: usize,
        types: Vec<String>,
        got: Vec<String>,
    },
    #[error("controller {controller} expects theta of length {expected}, got {got}")]
    ThetaLength {
        controller: String,
        expected: usize,
        got: usize,
    },
    #[error("object {0} is not part of the state")]
    UnknownObject(String),
    #[error("scripted demonstrator failed: {0}")]
    OracleFailure(String),
    #[error("demonstration does not replay: {0}")]
    ReplayMismatch(String),
}

/// A simulated environment. Implementors supply the raw dynamics; argument
/// validation, abstraction and demonstration replay are provided.
pub trait Environment: Send + Sync {
    fn name(&self) -> &str;
    fn types(&self) -> &[ObjType];
    fn predicates(&self) -> &[PredicateDef];
    fn controllers(&self) -> &[ControllerSpec];

    /// Applies an already validated action.
    fn step(&self, x: &State, u: &Action) -> State;

    fn sample_task(&self, scale: TaskScale, rng: &mut ChaCha8Rng) -> Task;

    /// Next scripted action towards the goal, or `None` if the script is stuck.
    /// Only called while the goal is unsatisfied.
    fn oracle_action(&self, task: &Task, x: &State) -> Option<Action>;

    /// Hand-picked candidate parameters for a controller invocation, used by
    /// oracle samplers.
    fn oracle_thetas(&self, x: &State, controller: &str, args: &[Object]) -> Vec<Vec<f64>>;

    fn controller(&self, name: &str) -> Option<&ControllerSpec> {
        self.controllers().iter().find(|c| &*c.name == name)
    }

    fn predicate(&self, name: &str) -> Option<&Arc<Predicate>> {
        self.predicates()
            .iter()
            .map(|p| &p.predicate)
            .find(|p| &*p.name == name)
    }

    fn obj_type(&self, name: &str) -> Option<&ObjType> {
        self.types().iter().find(|t| &*t.name == name)
    }

    fn validate_action(&self, x: &State, u: &Action) -> Result<(), EnvError> {
        let spec = self
            .controller(&u.controller)
            .ok_or_else(|| EnvError::UnknownController(u.controller.to_string()))?;
        let types_ok =
            u.args.len() == spec.arg_types.len() && u.args.iter().zip(&spec.arg_types).all(|(o, t)| o.ty == *t);
        if !types_ok {
            return Err(EnvError::ArityMismatch {
                controller: spec.name.to_string(),
                expected: spec.arg_types.len(),
                types: spec.arg_types.iter().map(|t| t.to_string()).collect(),
                got: u.args.iter().map(|o| format!("{}:{}", o.name, o.ty)).collect(),
            });
        }
        if u.theta.len() != spec.theta_dim {
            return Err(EnvError::ThetaLength {
                controller: spec.name.to_string(),
                expected: spec.theta_dim,
                got: u.theta.len(),
            });
        }
        if let Some(o) = u.args.iter().find(|o| !x.contains_key(*o)) {
            return Err(EnvError::UnknownObject(o.name.to_string()));
        }
        Ok(())
    }

    fn simulate(&self, x: &State, u: &Action) -> Result<State, EnvError> {
        self.validate_action(x, u)?;
        Ok(self.step(x, u))
    }

    /// The set of ground atoms whose classifier holds in `x`.
    fn abstract_state(&self, x: &State) -> AbstractState {
        abstract_state(self.predicates(), x)
    }

    fn goal_reached(&self, task: &Task, x: &State) -> bool {
        task.goal.is_subset(&self.abstract_state(x))
    }

    /// Runs the scripted demonstrator to the goal and checks the result.
    fn oracle_solve(&self, task: &Task) -> Result<Demonstration, EnvError> {
        let mut states = vec![task.init.clone()];
        let mut actions = Vec::new();
        let max_steps = 20 * (task.objects.len() + task.goal.len()) + 20;
        loop {
            let x = states.last().expect("nonempty");
            if self.goal_reached(task, x) {
                break;
            }
            if actions.len() >= max_steps {
                return Err(EnvError::OracleFailure(format!("no progress after {max_steps} steps")));
            }
            let u = self
                .oracle_action(task, x)
                .ok_or_else(|| EnvError::OracleFailure(format!("no scripted action from step {}", actions.len())))?;
            let next = self.simulate(x, &u)?;
            actions.push(u);
            states.push(next);
        }
        let demo = Demonstration {
            task: task.clone(),
            states,
            actions,
        };
        check_replay(self, &demo)?;
        Ok(demo)
    }
}

/// Evaluates every predicate over every type-correct object tuple in `x`.
pub fn abstract_state(predicates: &[PredicateDef], x: &State) -> AbstractState {
    let objects: Vec<Object> = x.keys().cloned().collect();
    let mut atoms = AbstractState::new();
    for def in predicates {
        let types: Vec<&str> = def.predicate.arg_types.iter().map(|t| &**t).collect();
        for_each_binding(&types, &objects, &[], |args| {
            if (def.holds)(x, args) {
                atoms.insert(GroundAtom::new(&def.predicate, args.to_vec()));
            }
        });
    }
    atoms
}

/// Checks that folding the actions over the initial state reproduces the
/// recorded states exactly and reaches the goal.
pub fn check_replay<E: Environment + ?Sized>(env: &E, demo: &Demonstration) -> Result<(), EnvError> {
    if demo.states.len() != demo.actions.len() + 1 {
        return Err(EnvError::ReplayMismatch(format!(
            "{} states for {} actions",
            demo.states.len(),
            demo.actions.len()
        )));
    }
    if demo.states[0] != demo.task.init {
        return Err(EnvError::ReplayMismatch("first state differs from task init".into()));
    }
    for (i, u) in demo.actions.iter().enumerate() {
        let next = env.simulate(&demo.states[i], u)?;
        if next != demo.states[i + 1] {
            return Err(EnvError::ReplayMismatch(format!("state {} differs", i + 1)));
        }
    }
    if !env.goal_reached(&demo.task, demo.states.last().expect("nonempty")) {
        return Err(EnvError::ReplayMismatch("goal not reached".into()));
    }
    Ok(())
}

/// Names of the built-in environments.
pub const ENV_NAMES: [&str; 4] = ["cluttered1d", "screws", "satellites", "micro"];

pub fn env_by_name(name: &str) -> Result<Arc<dyn Environment>, EnvError> {
    match name {
        "cluttered1d" => Ok(Arc::new(Cluttered1D::new())),
        "screws" => Ok(Arc::new(Screws::new())),
        "satellites" => Ok(Arc::new(Satellites::new())),
        "micro" => Ok(Arc::new(Micro::new())),
        other => Err(EnvError::UnknownEnv(other.to_string())),
    }
}

/// Feature lookup by index; panics on objects missing from the state, which
/// the validated entry points rule out.
pub(crate) fn feat(x: &State, o: &Object, i: usize) -> f64 {
    x[o][i]
}

pub(crate) fn objects_of<'a>(x: &'a State, ty: &'a str) -> impl Iterator<Item = &'a Object> + 'a {
    x.keys().filter(move |o| &*o.ty == ty)
}

/// Builds a ground atom by predicate name; panics on unknown names, which is a
/// programming error inside environment definitions.
pub(crate) fn atom(preds: &[PredicateDef], name: &str, args: &[&Object]) -> GroundAtom {
    let def = preds
        .iter()
        .find(|p| &*p.predicate.name == name)
        .unwrap_or_else(|| panic!("no predicate {name}"));
    GroundAtom::new(&def.predicate, args.iter().map(|o| (*o).clone()).collect())
}
