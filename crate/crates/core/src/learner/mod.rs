//! Operator learning: hill climbing on the coverage-plus-complexity
//! objective, and the cluster-and-intersect baseline.

mod cluster_intersect;
mod hill_climb;
mod induce;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{
    compute_coverage, find_best_consistent_op, AbstractDemo, CheckMode, CoverageReport, KeepBonus,
};
use crate::symbolic::{Atom, GroundAtom, LiftedAtom, Object, Operator, Variable};

pub use cluster_intersect::cluster_and_intersect;
pub use hill_climb::{hill_climb, improve_coverage, reduce_complexity, HillClimbTrace};
pub use induce::{ensure_nec_atoms_sat, induce_op_to_cover, induce_prec_and_del_effs, strip_prec_and_del_effs};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("coverage improvement did not finish within {0} iterations")]
    SafetyBoundExceeded(usize),
    #[error("coverage improvement stalled at {covered} covered transitions")]
    Stalled { covered: usize },
    #[error("no demonstrations to learn from")]
    NoData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Weight of the operator count, in units of normalized coverage; `None`
    /// means one over (demos × transitions). That is one over the number of
    /// transitions against the unnormalized coverage sum, and stays below the
    /// smallest coverage gain of a single transition.
    pub lambda: Option<f64>,
    pub keep_bonus: KeepBonus,
    /// Iteration cap for one coverage improvement; `None` means ten times the
    /// number of transitions.
    pub max_improve_iters: Option<usize>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            keep_bonus: KeepBonus::Kept,
            max_improve_iters: None,
        }
    }
}

impl LearnerConfig {
    pub fn lambda_for(&self, demos: &[AbstractDemo]) -> f64 {
        self.lambda.unwrap_or_else(|| {
            let n: usize = demos.iter().map(AbstractDemo::len).sum();
            if n == 0 {
                0.0
            } else {
                1.0 / (n as f64 * demos.len() as f64)
            }
        })
    }
}

/// `(1 - coverage) + λ·|ops|`.
pub fn objective(coverage: &CoverageReport, n_ops: usize, lambda: f64) -> f64 {
    (1.0 - coverage.normalized) + lambda * n_ops as f64
}

pub fn objective_j(ops: &[Arc<Operator>], demos: &[AbstractDemo], cfg: &LearnerConfig) -> f64 {
    let cov = compute_coverage(ops, demos, cfg.keep_bonus);
    objective(&cov, ops.len(), cfg.lambda_for(demos))
}

/// A transition assigned to an operator, with the objects bound to each
/// operator parameter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub demo: usize,
    pub index: usize,
    pub objects: Vec<Object>,
}

impl Assignment {
    pub fn substitution<'a>(&'a self, op: &'a Operator) -> impl Iterator<Item = (&'a Variable, &'a Object)> + 'a {
        op.params.iter().zip(&self.objects)
    }
}

/// Per-operator datasets, aligned with an operator list.
pub type Datasets = Vec<Vec<Assignment>>;

/// Assigns each transition to its best consistent operator, ignoring delete
/// effects but requiring ground add effects to be observed. Necessary atoms
/// come from `coverage` where known and are empty otherwise.
pub fn partition_data(
    ops: &[Arc<Operator>],
    demos: &[AbstractDemo],
    coverage: Option<&CoverageReport>,
    keep: KeepBonus,
) -> Datasets {
    let index: BTreeMap<&str, usize> = ops.iter().enumerate().map(|(i, o)| (o.name.as_str(), i)).collect();
    let mut datasets: Datasets = vec![Vec::new(); ops.len()];
    let empty = BTreeSet::new();
    for (d, demo) in demos.iter().enumerate() {
        for t in &demo.transitions {
            let alpha = coverage
                .and_then(|c| c.alpha_after(d, t.index, demo.len()))
                .unwrap_or(&empty);
            if let Some(best) = find_best_consistent_op(ops, t, alpha, &demo.objects, CheckMode::AddsObserved, keep) {
                datasets[index[best.ground.name()]].push(Assignment {
                    demo: d,
                    index: t.index,
                    objects: best.ground.objects,
                });
            }
        }
    }
    datasets
}

/// Lifts ground atoms through a substitution, discarding atoms that mention
/// objects outside it. An object bound to several variables yields every
/// combination.
pub fn lift_atoms<'a>(
    atoms: impl IntoIterator<Item = &'a GroundAtom>,
    params: &[Variable],
    objects: &[Object],
) -> BTreeSet<LiftedAtom> {
    let mut inverse: BTreeMap<&Object, Vec<&Variable>> = BTreeMap::new();
    for (v, o) in params.iter().zip(objects) {
        inverse.entry(o).or_default().push(v);
    }
    let mut out = BTreeSet::new();
    'atoms: for a in atoms {
        let mut choices: Vec<&Vec<&Variable>> = Vec::with_capacity(a.args.len());
        for o in &a.args {
            match inverse.get(o) {
                Some(vs) => choices.push(vs),
                None => continue 'atoms,
            }
        }
        let mut idx = vec![0usize; choices.len()];
        loop {
            let args: Vec<Variable> = idx.iter().zip(&choices).map(|(&i, vs)| vs[i].clone()).collect();
            out.insert(Atom::new(&a.predicate, args));
            let mut done = true;
            for slot in (0..choices.len()).rev() {
                idx[slot] += 1;
                if idx[slot] < choices[slot].len() {
                    done = false;
                    break;
                }
                idx[slot] = 0;
            }
            if done {
                break;
            }
        }
    }
    out
}

/// Issues fresh operator names.
#[derive(Debug, Default, Clone)]
pub struct Namer {
    next: usize,
}

impl Namer {
    pub fn fresh(&mut self, controller: &str) -> String {
        let name = format!("Op{:03}-{}", self.next, controller);
        self.next += 1;
        name
    }
}

/// Operator content without its name, for structural deduplication.
pub(crate) fn structure_key(op: &Operator) -> String {
    let mut renamed = op.clone();
    renamed.name = String::new();
    crate::symbolic::render_operator(&renamed)
}

/// The learned operators with the data each one explains.
#[derive(Clone, Debug)]
pub struct LearnedModel {
    pub ops: Vec<Arc<Operator>>,
    pub datasets: Datasets,
    pub coverage: f64,
}

impl LearnedModel {
    pub fn ops_sorted(&self) -> Vec<&Operator> {
        let mut ops: Vec<&Operator> = self.ops.iter().map(|o| &**o).collect();
        ops.sort_by(|a, b| a.name.cmp(&b.name));
        ops
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::Predicate;

    #[test]
    fn lifting_discards_foreign_objects_and_expands_aliases() {
        let p = Predicate::new("P", &["t", "t"]);
        let a = Object::new("a", "t");
        let b = Object::new("b", "t");
        let c = Object::new("c", "t");
        let atoms = [
            Atom::new(&p, vec![a.clone(), b.clone()]),
            Atom::new(&p, vec![a.clone(), c.clone()]),
        ];
        let x = Variable::new("?x", "t");
        let y = Variable::new("?y", "t");
        let lifted = lift_atoms(&atoms, &[x.clone(), y.clone()], &[a.clone(), b.clone()]);
        assert_eq!(lifted, [Atom::new(&p, vec![x.clone(), y.clone()])].into());

        let lifted = lift_atoms(
            &[Atom::new(&p, vec![a.clone(), a.clone()])],
            &[x.clone(), y.clone()],
            &[a.clone(), a],
        );
        assert_eq!(lifted.len(), 4);
    }
}
