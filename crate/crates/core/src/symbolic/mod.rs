//! Typed first-order vocabulary, abstract states, lifted and ground operators,
//! and the abstract transition function.

mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use render::{render_operator, render_operator_set};

/// Shared, cheaply clonable identifier.
pub type Name = Arc<str>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolicError {
    #[error("precondition violation: {0} does not hold")]
    PreconditionViolation(String),
    #[error("predicate {predicate} expects {expected} arguments, got {got}")]
    ArityMismatch {
        predicate: String,
        expected: usize,
        got: usize,
    },
    #[error("argument {index} of {predicate} has type {got}, expected {expected}")]
    TypeMismatch {
        predicate: String,
        index: usize,
        expected: String,
        got: String,
    },
    #[error("operator {op}: {reason}")]
    InvalidOperator { op: String, reason: String },
}

/// An object type and the ordered names of its real-valued features.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjType {
    pub name: Name,
    pub features: Vec<Name>,
}

impl ObjType {
    pub fn new(name: &str, features: &[&str]) -> Self {
        Self {
            name: name.into(),
            features: features.iter().map(|f| Name::from(*f)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// A concrete object in a task. Ordered by name first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Object {
    pub name: Name,
    #[serde(rename = "type")]
    pub ty: Name,
}

impl Object {
    pub fn new(name: &str, ty: &str) -> Self {
        Self {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

impl fmt::Display for Object {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// A typed operator argument; names start with `?`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Variable {
    pub name: Name,
    #[serde(rename = "type")]
    pub ty: Name,
}

impl Variable {
    pub fn new(name: &str, ty: &str) -> Self {
        let name = if name.starts_with('?') {
            name.to_string()
        } else {
            format!("?{name}")
        };
        Self {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Anything that can fill a predicate slot.
pub trait Term: Clone + Ord + std::hash::Hash + fmt::Debug + fmt::Display {
    fn ty(&self) -> &str;
}

impl Term for Object {
    fn ty(&self) -> &str {
        &self.ty
    }
}

impl Term for Variable {
    fn ty(&self) -> &str {
        &self.ty
    }
}

/// Predicate signature. The classifier lives with the environment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Predicate {
    pub name: Name,
    pub arg_types: Vec<Name>,
}

impl Predicate {
    pub fn new(name: &str, arg_types: &[&str]) -> Arc<Self> {
        Arc::new(Self {
            name: name.into(),
            arg_types: arg_types.iter().map(|t| Name::from(*t)).collect(),
        })
    }

    pub fn arity(&self) -> usize {
        self.arg_types.len()
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// A predicate applied to terms. Ordered by predicate name, then arguments.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom<T> {
    pub predicate: Arc<Predicate>,
    pub args: Vec<T>,
}

pub type GroundAtom = Atom<Object>;
pub type LiftedAtom = Atom<Variable>;

/// A set of ground atoms; the abstraction of a low-level state.
pub type AbstractState = BTreeSet<GroundAtom>;

/// Mapping from operator variables to task objects.
pub type Substitution = BTreeMap<Variable, Object>;

impl<T: Term> Atom<T> {
    /// Builds an atom, checking arity and argument types.
    pub fn try_new(predicate: &Arc<Predicate>, args: Vec<T>) -> Result<Self, SymbolicError> {
        if args.len() != predicate.arity() {
            return Err(SymbolicError::ArityMismatch {
                predicate: predicate.name.to_string(),
                expected: predicate.arity(),
                got: args.len(),
            });
        }
        for (index, (arg, ty)) in args.iter().zip(&predicate.arg_types).enumerate() {
            if arg.ty() != &**ty {
                return Err(SymbolicError::TypeMismatch {
                    predicate: predicate.name.to_string(),
                    index,
                    expected: ty.to_string(),
                    got: arg.ty().to_string(),
                });
            }
        }
        Ok(Self {
            predicate: Arc::clone(predicate),
            args,
        })
    }

    /// Builds an atom without validation. Callers guarantee well-typedness.
    pub fn new(predicate: &Arc<Predicate>, args: Vec<T>) -> Self {
        debug_assert_eq!(args.len(), predicate.arity());
        Self {
            predicate: Arc::clone(predicate),
            args,
        }
    }
}

impl<T: fmt::Display> fmt::Display for Atom<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

impl LiftedAtom {
    pub fn ground(&self, sub: &Substitution) -> GroundAtom {
        GroundAtom {
            predicate: Arc::clone(&self.predicate),
            args: self.args.iter().map(|v| sub[v].clone()).collect(),
        }
    }
}

/// Controller identity plus the operator variables bound to its discrete
/// parameters, positionally.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ControllerRef {
    pub name: Name,
    pub args: Vec<Variable>,
}

/// A lifted STRIPS-style operator with atomic and quantified delete effects.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Operator {
    pub name: String,
    pub params: Vec<Variable>,
    pub preconditions: BTreeSet<LiftedAtom>,
    pub add_effects: BTreeSet<LiftedAtom>,
    pub delete_effects: BTreeSet<LiftedAtom>,
    /// Predicates all of whose atoms are deleted.
    pub quantified_deletes: BTreeSet<Arc<Predicate>>,
    pub controller: ControllerRef,
}

impl Operator {
    /// Checks that every mentioned variable is a parameter, parameter names are
    /// unique, and add and atomic delete effects are disjoint.
    pub fn validate(&self) -> Result<(), SymbolicError> {
        let invalid = |reason: String| SymbolicError::InvalidOperator {
            op: self.name.clone(),
            reason,
        };
        let params: BTreeSet<&Variable> = self.params.iter().collect();
        if params.len() != self.params.len() {
            return Err(invalid("duplicate parameter".into()));
        }
        let mentioned = self
            .preconditions
            .iter()
            .chain(&self.add_effects)
            .chain(&self.delete_effects)
            .flat_map(|a| a.args.iter())
            .chain(self.controller.args.iter());
        for v in mentioned {
            if !params.contains(v) {
                return Err(invalid(format!("variable {v} is not a parameter")));
            }
        }
        for atom in self
            .preconditions
            .iter()
            .chain(&self.add_effects)
            .chain(&self.delete_effects)
        {
            Atom::try_new(&atom.predicate, atom.args.clone())?;
        }
        if let Some(a) = self.add_effects.intersection(&self.delete_effects).next() {
            return Err(invalid(format!("{a} is both added and deleted")));
        }
        Ok(())
    }

    /// Preconditions that are also add effects.
    pub fn keep_atoms(&self) -> BTreeSet<LiftedAtom> {
        self.preconditions.intersection(&self.add_effects).cloned().collect()
    }

    /// Grounds the operator with objects given positionally per parameter.
    pub fn ground(self: &Arc<Self>, objects: &[Object]) -> Result<GroundOperator, SymbolicError> {
        if objects.len() != self.params.len() {
            return Err(SymbolicError::InvalidOperator {
                op: self.name.clone(),
                reason: format!("expected {} objects, got {}", self.params.len(), objects.len()),
            });
        }
        for (v, o) in self.params.iter().zip(objects) {
            if v.ty != o.ty {
                return Err(SymbolicError::InvalidOperator {
                    op: self.name.clone(),
                    reason: format!("{o} has type {}, {v} expects {}", o.ty, v.ty),
                });
            }
        }
        Ok(self.ground_unchecked(objects.to_vec()))
    }

    pub(crate) fn ground_unchecked(self: &Arc<Self>, objects: Vec<Object>) -> GroundOperator {
        let sub: Substitution = self.params.iter().cloned().zip(objects.iter().cloned()).collect();
        let ground = |set: &BTreeSet<LiftedAtom>| set.iter().map(|a| a.ground(&sub)).collect();
        GroundOperator {
            preconditions: ground(&self.preconditions),
            add_effects: ground(&self.add_effects),
            delete_effects: ground(&self.delete_effects),
            controller_args: self.controller.args.iter().map(|v| sub[v].clone()).collect(),
            objects,
            op: Arc::clone(self),
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_operator(self))
    }
}

/// An operator with its parameters substituted by objects.
#[derive(Clone, Debug)]
pub struct GroundOperator {
    pub op: Arc<Operator>,
    pub objects: Vec<Object>,
    pub preconditions: AbstractState,
    pub add_effects: AbstractState,
    pub delete_effects: AbstractState,
    pub controller_args: Vec<Object>,
}

impl PartialEq for GroundOperator {
    fn eq(&self, other: &Self) -> bool {
        self.op.name == other.op.name && self.objects == other.objects
    }
}

impl Eq for GroundOperator {}

impl GroundOperator {
    pub fn name(&self) -> &str {
        &self.op.name
    }

    pub fn substitution(&self) -> Substitution {
        self.op
            .params
            .iter()
            .cloned()
            .zip(self.objects.iter().cloned())
            .collect()
    }

    pub fn is_applicable(&self, s: &AbstractState) -> bool {
        self.preconditions.is_subset(s)
    }

    /// Whether `atom` is removed by the delete step (atomic or quantified).
    pub fn deletes(&self, atom: &GroundAtom) -> bool {
        self.delete_effects.contains(atom) || self.op.quantified_deletes.contains(&atom.predicate)
    }

    /// `(s \ deletes) ∪ adds` without checking preconditions.
    pub fn apply_unchecked(&self, s: &AbstractState) -> AbstractState {
        let mut next: AbstractState = s.iter().filter(|a| !self.deletes(a)).cloned().collect();
        next.extend(self.add_effects.iter().cloned());
        next
    }

    /// Preconditions that are also add effects.
    pub fn keep_atoms(&self) -> AbstractState {
        self.preconditions.intersection(&self.add_effects).cloned().collect()
    }
}

impl fmt::Display for GroundOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.op.name)?;
        for (i, o) in self.objects.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{o}")?;
        }
        f.write_str(")")
    }
}

/// The abstract transition function. Deletes are applied before adds, so add
/// effects survive quantified deletes.
pub fn apply(s: &AbstractState, g: &GroundOperator) -> Result<AbstractState, SymbolicError> {
    if let Some(missing) = g.preconditions.iter().find(|a| !s.contains(a)) {
        return Err(SymbolicError::PreconditionViolation(missing.to_string()));
    }
    Ok(g.apply_unchecked(s))
}

/// Objects grouped by type name, each group sorted by object name.
pub fn objects_by_type(objects: &[Object]) -> BTreeMap<&str, Vec<&Object>> {
    let mut by_type: BTreeMap<&str, Vec<&Object>> = BTreeMap::new();
    for o in objects {
        by_type.entry(&o.ty).or_default().push(o);
    }
    for group in by_type.values_mut() {
        group.sort();
        group.dedup();
    }
    by_type
}

/// All type-respecting substitutions of the operator's parameters, in
/// lexicographic order with the first parameter most significant.
pub fn enumerate_groundings(op: &Arc<Operator>, objects: &[Object]) -> Vec<GroundOperator> {
    let fixed = vec![None; op.params.len()];
    enumerate_groundings_with(op, objects, &fixed)
}

/// Like [`enumerate_groundings`], with some parameter slots pinned. The result
/// is the subsequence of the full enumeration that agrees with the pins.
pub fn enumerate_groundings_with(
    op: &Arc<Operator>,
    objects: &[Object],
    fixed: &[Option<Object>],
) -> Vec<GroundOperator> {
    let types: Vec<&str> = op.params.iter().map(|v| &*v.ty).collect();
    let mut out = Vec::new();
    for_each_binding(&types, objects, fixed, |binding| {
        out.push(op.ground_unchecked(binding.to_vec()));
    });
    out
}

/// Groundings from [`enumerate_groundings_with`] that bind distinct
/// parameters to distinct objects.
pub fn injective_groundings_with(
    op: &Arc<Operator>,
    objects: &[Object],
    fixed: &[Option<Object>],
) -> Vec<GroundOperator> {
    let types: Vec<&str> = op.params.iter().map(|v| &*v.ty).collect();
    let mut out = Vec::new();
    for_each_binding(&types, objects, fixed, |binding| {
        if is_injective(binding) {
            out.push(op.ground_unchecked(binding.to_vec()));
        }
    });
    out
}

pub fn is_injective(binding: &[Object]) -> bool {
    binding.iter().enumerate().all(|(i, o)| !binding[..i].contains(o))
}

/// Visits every object tuple matching `types`, honoring pins, in
/// lexicographic order.
pub fn for_each_binding(
    types: &[&str],
    objects: &[Object],
    fixed: &[Option<Object>],
    mut visit: impl FnMut(&[Object]),
) {
    let by_type = objects_by_type(objects);
    let mut domains: Vec<Vec<&Object>> = Vec::with_capacity(types.len());
    for (i, ty) in types.iter().enumerate() {
        match fixed.get(i).and_then(|f| f.as_ref()) {
            Some(o) => {
                if &*o.ty != *ty {
                    return;
                }
                domains.push(vec![o]);
            }
            None => match by_type.get(ty) {
                Some(group) => domains.push(group.clone()),
                None => return,
            },
        }
    }
    let mut idx = vec![0usize; domains.len()];
    let mut binding: Vec<Object> = domains.iter().map(|d| d[0].clone()).collect();
    loop {
        visit(&binding);
        // odometer increment, last slot fastest
        let mut slot = domains.len();
        loop {
            if slot == 0 {
                return;
            }
            slot -= 1;
            idx[slot] += 1;
            if idx[slot] < domains[slot].len() {
                binding[slot] = domains[slot][idx[slot]].clone();
                break;
            }
            idx[slot] = 0;
            binding[slot] = domains[slot][0].clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn robot_obj() -> (Arc<Predicate>, Variable, Variable) {
        let reach = Predicate::new("Reach", &["robot", "obj"]);
        (reach, Variable::new("?r", "robot"), Variable::new("?o", "obj"))
    }

    fn move_op() -> Arc<Operator> {
        let (reach, r, o) = robot_obj();
        Arc::new(Operator {
            name: "MoveOp".into(),
            params: vec![r.clone(), o.clone()],
            preconditions: BTreeSet::new(),
            add_effects: [Atom::new(&reach, vec![r.clone(), o.clone()])].into(),
            delete_effects: BTreeSet::new(),
            quantified_deletes: [reach.clone()].into(),
            controller: ControllerRef {
                name: "Move".into(),
                args: vec![r, o],
            },
        })
    }

    #[test]
    fn apply_identity_for_empty_operator() {
        let op = Arc::new(Operator {
            name: "Noop".into(),
            params: vec![],
            preconditions: BTreeSet::new(),
            add_effects: BTreeSet::new(),
            delete_effects: BTreeSet::new(),
            quantified_deletes: BTreeSet::new(),
            controller: ControllerRef {
                name: "Wait".into(),
                args: vec![],
            },
        });
        let p = Predicate::new("P", &["t"]);
        let s: AbstractState = [Atom::new(&p, vec![Object::new("a", "t")])].into();
        let g = op.ground(&[]).unwrap();
        assert_eq!(apply(&s, &g).unwrap(), s);
    }

    #[test]
    fn quantified_delete_then_add() {
        let (reach, _, _) = robot_obj();
        let op = move_op();
        let r = Object::new("r", "robot");
        let b1 = Object::new("b1", "obj");
        let b2 = Object::new("b2", "obj");
        let g = op.ground(&[r.clone(), b1.clone()]).unwrap();
        let s: AbstractState = [Atom::new(&reach, vec![r.clone(), b2])].into();
        let next = apply(&s, &g).unwrap();
        let expected: AbstractState = [Atom::new(&reach, vec![r, b1])].into();
        assert_eq!(next, expected);
    }

    #[test]
    fn precondition_violation() {
        let (reach, r, o) = robot_obj();
        let hold = Predicate::new("Hold", &["robot", "obj"]);
        let op = Arc::new(Operator {
            name: "PickOp".into(),
            params: vec![r.clone(), o.clone()],
            preconditions: [Atom::new(&reach, vec![r.clone(), o.clone()])].into(),
            add_effects: [Atom::new(&hold, vec![r.clone(), o.clone()])].into(),
            delete_effects: BTreeSet::new(),
            quantified_deletes: BTreeSet::new(),
            controller: ControllerRef {
                name: "Pick".into(),
                args: vec![r, o],
            },
        });
        let g = op
            .ground(&[Object::new("r", "robot"), Object::new("b1", "obj")])
            .unwrap();
        let err = apply(&AbstractState::new(), &g).unwrap_err();
        assert!(matches!(err, SymbolicError::PreconditionViolation(_)));
    }

    #[test]
    fn groundings_single_variable_ordered() {
        let d = Variable::new("?d", "dot");
        let p = Predicate::new("P", &["dot"]);
        let op = Arc::new(Operator {
            name: "Op".into(),
            params: vec![d.clone()],
            preconditions: BTreeSet::new(),
            add_effects: [Atom::new(&p, vec![d.clone()])].into(),
            delete_effects: BTreeSet::new(),
            quantified_deletes: BTreeSet::new(),
            controller: ControllerRef {
                name: "C".into(),
                args: vec![d],
            },
        });
        let objs = vec![Object::new("d2", "dot"), Object::new("d1", "dot")];
        let gs = enumerate_groundings(&op, &objs);
        let names: Vec<_> = gs.iter().map(|g| g.objects[0].name.to_string()).collect();
        assert_eq!(names, ["d1", "d2"]);
    }

    #[test]
    fn groundings_zero_variables_is_single_empty() {
        let op = Arc::new(Operator {
            name: "Op".into(),
            params: vec![],
            preconditions: BTreeSet::new(),
            add_effects: BTreeSet::new(),
            delete_effects: BTreeSet::new(),
            quantified_deletes: BTreeSet::new(),
            controller: ControllerRef {
                name: "C".into(),
                args: vec![],
            },
        });
        let gs = enumerate_groundings(&op, &[Object::new("a", "t")]);
        assert_eq!(gs.len(), 1);
        assert!(gs[0].objects.is_empty());
    }

    #[test]
    fn groundings_product_and_missing_type() {
        let op = move_op();
        let objs = vec![
            Object::new("r", "robot"),
            Object::new("b1", "obj"),
            Object::new("b2", "obj"),
        ];
        assert_eq!(enumerate_groundings(&op, &objs).len(), 2);
        assert!(enumerate_groundings(&op, &objs[1..]).is_empty());
    }

    #[test]
    fn validate_rejects_add_delete_overlap() {
        let (reach, r, o) = robot_obj();
        let mut op = (*move_op()).clone();
        op.delete_effects.insert(Atom::new(&reach, vec![r, o]));
        assert!(op.validate().is_err());
        assert!(move_op().validate().is_ok());
    }

    #[test]
    fn atom_type_checking() {
        let (reach, _, _) = robot_obj();
        let bad = Atom::try_new(&reach, vec![Object::new("b", "obj"), Object::new("r", "robot")]);
        assert!(matches!(bad, Err(SymbolicError::TypeMismatch { .. })));
        let short = Atom::try_new(&reach, vec![Object::new("r", "robot")]);
        assert!(matches!(short, Err(SymbolicError::ArityMismatch { .. })));
    }
}
