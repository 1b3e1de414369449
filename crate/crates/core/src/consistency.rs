//! Necessary atoms, transition consistency, backward chaining over
//! demonstrations, and the coverage measure the learner optimizes.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{Action, Demonstration, Environment};
use crate::symbolic::{injective_groundings_with, AbstractState, GroundOperator, Object, Operator};

/// One abstract step of a demonstration.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub demo: usize,
    pub index: usize,
    pub s_prev: AbstractState,
    pub action: Action,
    pub s_next: AbstractState,
}

/// A demonstration with every state abstracted once up front.
#[derive(Clone, Debug)]
pub struct AbstractDemo {
    pub objects: Vec<Object>,
    pub goal: AbstractState,
    pub transitions: Vec<Transition>,
}

impl AbstractDemo {
    pub fn from_demo(env: &dyn Environment, id: usize, demo: &Demonstration) -> Self {
        let states: Vec<AbstractState> = demo.states.iter().map(|x| env.abstract_state(x)).collect();
        let transitions = demo
            .actions
            .iter()
            .enumerate()
            .map(|(i, u)| Transition {
                demo: id,
                index: i,
                s_prev: states[i].clone(),
                action: u.clone(),
                s_next: states[i + 1].clone(),
            })
            .collect();
        Self {
            objects: demo.task.objects.clone(),
            goal: demo.task.goal.clone(),
            transitions,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

pub fn abstract_demos(env: &dyn Environment, demos: &[Demonstration]) -> Vec<AbstractDemo> {
    demos
        .par_iter()
        .enumerate()
        .map(|(i, d)| AbstractDemo::from_demo(env, i, d))
        .collect()
}

/// Which atoms the unchanged-by-operator bonus rewards in [`score`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepBonus {
    /// Preconditions the operator re-asserts as adds.
    #[default]
    Kept,
    /// Adds that are not preconditions.
    Changed,
}

/// How strictly the predicted successor must match the observed one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckMode {
    /// The predicted successor must be contained in the observed one.
    Full,
    /// Predicted atoms may be missing from the observed successor.
    IgnoreDeletes,
    /// Like `IgnoreDeletes`, but ground add effects must be observed.
    AddsObserved,
}

/// `P ∪ (α \ E⁺)`: what must hold before `g` for `alpha_next` to hold after it.
pub fn necessary_atoms_step(alpha_next: &AbstractState, g: &GroundOperator) -> AbstractState {
    let mut alpha: AbstractState = alpha_next
        .iter()
        .filter(|a| !g.add_effects.contains(a))
        .cloned()
        .collect();
    alpha.extend(g.preconditions.iter().cloned());
    alpha
}

/// Whether the action matches the operator's controller under the grounding.
/// Continuous parameters are unconstrained.
pub fn action_matches(g: &GroundOperator, u: &Action) -> bool {
    g.op.controller.name == u.controller && g.controller_args == u.args
}

pub fn is_consistent(g: &GroundOperator, t: &Transition, alpha_next: &AbstractState, check_deletes: bool) -> bool {
    let mode = if check_deletes {
        CheckMode::Full
    } else {
        CheckMode::IgnoreDeletes
    };
    is_consistent_with(g, t, alpha_next, mode)
}

pub fn is_consistent_with(g: &GroundOperator, t: &Transition, alpha_next: &AbstractState, mode: CheckMode) -> bool {
    if !action_matches(g, &t.action) || !g.preconditions.is_subset(&t.s_prev) {
        return false;
    }
    if mode == CheckMode::AddsObserved && !g.add_effects.is_subset(&t.s_next) {
        return false;
    }
    let predicted = g.apply_unchecked(&t.s_prev);
    if !alpha_next.is_subset(&predicted) {
        return false;
    }
    mode != CheckMode::Full || predicted.is_subset(&t.s_next)
}

/// Partitioning heuristic; lower is better.
pub fn score(g: &GroundOperator, t: &Transition, keep: KeepBonus) -> i64 {
    let kept = g.keep_atoms();
    let changed: AbstractState = g.add_effects.difference(&kept).cloned().collect();
    let adds: AbstractState = t.s_next.difference(&t.s_prev).cloned().collect();
    let dels: AbstractState = t.s_prev.difference(&t.s_next).cloned().collect();
    let sym = |a: &AbstractState, b: &AbstractState| (a.difference(b).count() + b.difference(a).count()) as i64;
    let bonus = match keep {
        KeepBonus::Kept => kept.len(),
        KeepBonus::Changed => changed.len(),
    } as i64;
    sym(&changed, &adds) + sym(&g.delete_effects, &dels) - bonus
}

/// Injective groundings of `op` whose controller arguments agree with the
/// action, in enumeration order.
pub fn action_groundings(op: &Arc<Operator>, u: &Action, objects: &[Object]) -> Vec<GroundOperator> {
    if op.controller.name != u.controller || op.controller.args.len() != u.args.len() {
        return Vec::new();
    }
    let mut fixed: Vec<Option<Object>> = vec![None; op.params.len()];
    for (var, obj) in op.controller.args.iter().zip(&u.args) {
        let Some(slot) = op.params.iter().position(|p| p == var) else {
            return Vec::new();
        };
        match &fixed[slot] {
            Some(prev) if prev != obj => return Vec::new(),
            _ => fixed[slot] = Some(obj.clone()),
        }
    }
    injective_groundings_with(op, objects, &fixed)
}

/// Ops ordered by name, the deterministic tie-break order.
pub fn sorted_by_name(ops: &[Arc<Operator>]) -> Vec<&Arc<Operator>> {
    let mut sorted: Vec<&Arc<Operator>> = ops.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    sorted
}

#[derive(Clone, Debug)]
pub struct BestOp {
    pub ground: GroundOperator,
    pub score: i64,
    /// Number of consistent groundings considered.
    pub candidates: usize,
}

/// The minimum-score consistent grounding over all operators, ties broken by
/// operator name then enumeration order.
pub fn find_best_consistent_op(
    ops: &[Arc<Operator>],
    t: &Transition,
    alpha_next: &AbstractState,
    objects: &[Object],
    mode: CheckMode,
    keep: KeepBonus,
) -> Option<BestOp> {
    let mut best: Option<BestOp> = None;
    let mut candidates = 0;
    for op in sorted_by_name(ops) {
        for g in action_groundings(op, &t.action, objects) {
            if !is_consistent_with(&g, t, alpha_next, mode) {
                continue;
            }
            candidates += 1;
            let s = score(&g, t, keep);
            if best.as_ref().is_none_or(|b| s < b.score) {
                best = Some(BestOp {
                    ground: g,
                    score: s,
                    candidates: 0,
                });
            }
        }
    }
    best.map(|mut b| {
        b.candidates = candidates;
        b
    })
}

/// Result of chaining backwards from the goal through one demonstration.
#[derive(Clone, Debug)]
pub struct Backchain {
    /// Ground operators for the covered suffix, in forward order.
    pub suffix: Vec<GroundOperator>,
    /// Necessary atoms for states `n - η ..= n`; the last entry is the goal.
    pub alphas: Vec<AbstractState>,
    /// Every step had exactly one consistent grounding.
    pub unique: bool,
}

impl Backchain {
    pub fn covered(&self) -> usize {
        self.suffix.len()
    }
}

pub fn backchain(ops: &[Arc<Operator>], demo: &AbstractDemo, keep: KeepBonus) -> Backchain {
    let mut alpha = demo.goal.clone();
    let mut alphas = vec![alpha.clone()];
    let mut suffix = Vec::new();
    let mut unique = true;
    for t in demo.transitions.iter().rev() {
        let Some(best) = find_best_consistent_op(ops, t, &alpha, &demo.objects, CheckMode::Full, keep) else {
            break;
        };
        unique &= best.candidates == 1;
        alpha = necessary_atoms_step(&alpha, &best.ground);
        alphas.push(alpha.clone());
        suffix.push(best.ground);
    }
    suffix.reverse();
    alphas.reverse();
    Backchain { suffix, alphas, unique }
}

/// Coverage of a demonstration set by an operator set.
#[derive(Clone, Debug)]
pub struct CoverageReport {
    pub covered_count: usize,
    /// Covered suffix length per demonstration.
    pub eta: Vec<usize>,
    /// Per demonstration, necessary atoms for states `n - η ..= n`.
    pub alphas: Vec<Vec<AbstractState>>,
    /// Chosen ground operators for each covered suffix.
    pub suffixes: Vec<Vec<GroundOperator>>,
    /// First transition (dataset order) preceding an incomplete suffix, with
    /// the necessary atoms after it.
    pub uncovered: Option<(usize, usize, AbstractState)>,
    pub normalized: f64,
    pub total_transitions: usize,
}

impl CoverageReport {
    /// Necessary atoms after transition `index` of `demo` if that transition
    /// lies in the covered suffix or immediately precedes it.
    pub fn alpha_after(&self, demo: usize, index: usize, demo_len: usize) -> Option<&AbstractState> {
        let start = demo_len - self.eta[demo];
        if index + 1 >= start {
            self.alphas[demo].get(index + 1 - start)
        } else {
            None
        }
    }

    pub fn is_complete(&self) -> bool {
        self.uncovered.is_none()
    }
}

pub fn compute_coverage(ops: &[Arc<Operator>], demos: &[AbstractDemo], keep: KeepBonus) -> CoverageReport {
    let chains: Vec<Backchain> = demos.par_iter().map(|d| backchain(ops, d, keep)).collect();
    let eta: Vec<usize> = chains.iter().map(Backchain::covered).collect();
    let uncovered =
        demos.iter().zip(&chains).enumerate().find_map(|(i, (d, c))| {
            (c.covered() < d.len()).then(|| (i, d.len() - c.covered() - 1, c.alphas[0].clone()))
        });
    let normalized = if demos.is_empty() {
        1.0
    } else {
        demos
            .iter()
            .zip(&eta)
            .map(|(d, &e)| if d.is_empty() { 1.0 } else { e as f64 / d.len() as f64 })
            .sum::<f64>()
            / demos.len() as f64
    };
    let (alphas, suffixes) = chains.into_iter().map(|c| (c.alphas, c.suffix)).unzip();
    CoverageReport {
        covered_count: eta.iter().sum(),
        eta,
        alphas,
        suffixes,
        uncovered,
        normalized,
        total_transitions: demos.iter().map(AbstractDemo::len).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{Atom, ControllerRef, GroundAtom, Predicate, Variable};
    use std::collections::BTreeSet;

    struct World {
        reach: Arc<Predicate>,
        hold: Arc<Predicate>,
        r: Object,
        b1: Object,
        b2: Object,
    }

    fn world() -> World {
        World {
            reach: Predicate::new("Reach", &["robot", "obj"]),
            hold: Predicate::new("Hold", &["robot", "obj"]),
            r: Object::new("r", "robot"),
            b1: Object::new("b1", "obj"),
            b2: Object::new("b2", "obj"),
        }
    }

    fn op(
        name: &str,
        ctrl: &str,
        pre: &[&Arc<Predicate>],
        add: &[&Arc<Predicate>],
        qdel: &[&Arc<Predicate>],
    ) -> Arc<Operator> {
        let r = Variable::new("?r", "robot");
        let o = Variable::new("?o", "obj");
        let lift = |ps: &[&Arc<Predicate>]| -> BTreeSet<_> {
            ps.iter().map(|p| Atom::new(p, vec![r.clone(), o.clone()])).collect()
        };
        Arc::new(Operator {
            name: name.into(),
            params: vec![r.clone(), o.clone()],
            preconditions: lift(pre),
            add_effects: lift(add),
            delete_effects: BTreeSet::new(),
            quantified_deletes: qdel.iter().map(|p| Arc::clone(p)).collect(),
            controller: ControllerRef {
                name: ctrl.into(),
                args: vec![r, o],
            },
        })
    }

    fn ga(p: &Arc<Predicate>, a: &Object, b: &Object) -> GroundAtom {
        Atom::new(p, vec![a.clone(), b.clone()])
    }

    fn transition(s_prev: AbstractState, ctrl: &str, args: &[&Object], s_next: AbstractState) -> Transition {
        Transition {
            demo: 0,
            index: 0,
            s_prev,
            action: Action::new(ctrl, args, vec![]),
            s_next,
        }
    }

    #[test]
    fn necessary_atoms_examples() {
        let w = world();
        let pick = op("Pick", "Pick", &[&w.reach], &[&w.hold], &[]);
        let g = pick.ground(&[w.r.clone(), w.b1.clone()]).unwrap();
        let alpha: AbstractState = [ga(&w.hold, &w.r, &w.b1)].into();
        assert_eq!(necessary_atoms_step(&alpha, &g), [ga(&w.reach, &w.r, &w.b1)].into());
        let noop = op("Noop", "Pick", &[], &[], &[]);
        let g = noop.ground(&[w.r.clone(), w.b1.clone()]).unwrap();
        assert!(necessary_atoms_step(&AbstractState::new(), &g).is_empty());
    }

    #[test]
    fn consistency_clauses() {
        let w = world();
        let mv = op("MoveOp", "Move", &[], &[&w.reach], &[&w.reach]);
        let g = mv.ground(&[w.r.clone(), w.b1.clone()]).unwrap();
        let s_next: AbstractState = [ga(&w.reach, &w.r, &w.b1)].into();
        let t = transition(AbstractState::new(), "Move", &[&w.r, &w.b1], s_next.clone());
        assert!(is_consistent(&g, &t, &s_next, true));
        let t2 = transition(AbstractState::new(), "Move", &[&w.r, &w.b2], s_next.clone());
        assert!(!is_consistent(&g, &t2, &s_next, true));
        let t3 = transition(AbstractState::new(), "Move", &[&w.r, &w.b1], AbstractState::new());
        assert!(!is_consistent(&g, &t3, &AbstractState::new(), true));
        assert!(is_consistent(&g, &t3, &AbstractState::new(), false));
    }

    #[test]
    fn score_examples() {
        let w = world();
        let a = ga(&w.reach, &w.r, &w.b1);
        let b = ga(&w.reach, &w.r, &w.b2);
        let exact = op("MoveOp", "Move", &[], &[&w.reach], &[]);
        let g = exact.ground(&[w.r.clone(), w.b1.clone()]).unwrap();
        let t = transition(AbstractState::new(), "Move", &[&w.r, &w.b1], [a.clone()].into());
        assert_eq!(score(&g, &t, KeepBonus::Kept), 0);

        // changed = {A, B}, observed adds = {A}
        let mut two = (*exact).clone();
        two.params.push(Variable::new("?p", "obj"));
        two.add_effects.insert(Atom::new(
            &w.reach,
            vec![Variable::new("?r", "robot"), Variable::new("?p", "obj")],
        ));
        let two = Arc::new(two);
        let g = two.ground(&[w.r.clone(), w.b1.clone(), w.b2.clone()]).unwrap();
        assert_eq!(g.add_effects, [a.clone(), b].into());
        assert_eq!(score(&g, &t, KeepBonus::Kept), 1);

        let keep = op("Keep", "Move", &[&w.hold], &[&w.reach, &w.hold], &[]);
        let g = keep.ground(&[w.r.clone(), w.b1.clone()]).unwrap();
        let h = ga(&w.hold, &w.r, &w.b1);
        let t = transition([h.clone()].into(), "Move", &[&w.r, &w.b1], [h, a].into());
        assert_eq!(score(&g, &t, KeepBonus::Kept), -1);
    }

    #[test]
    fn best_op_prefers_fewer_spurious_adds() {
        let w = world();
        let a = ga(&w.reach, &w.r, &w.b1);
        let t = transition(AbstractState::new(), "Move", &[&w.r, &w.b1], [a.clone()].into());
        let objects = vec![w.r.clone(), w.b1.clone(), w.b2.clone()];
        assert!(find_best_consistent_op(
            &[],
            &t,
            &AbstractState::new(),
            &objects,
            CheckMode::IgnoreDeletes,
            KeepBonus::Kept
        )
        .is_none());
        let exact = op("B-exact", "Move", &[], &[&w.reach], &[]);
        let spurious = op("A-spurious", "Move", &[], &[&w.reach, &w.hold], &[]);
        let best = find_best_consistent_op(
            &[spurious, exact],
            &t,
            &AbstractState::new(),
            &objects,
            CheckMode::IgnoreDeletes,
            KeepBonus::Kept,
        )
        .unwrap();
        assert_eq!(best.ground.name(), "B-exact");
        assert_eq!(best.candidates, 2);
    }

    #[test]
    fn coverage_of_empty_operator_set() {
        let w = world();
        let demo = |n: usize| AbstractDemo {
            objects: vec![w.r.clone(), w.b1.clone()],
            goal: [ga(&w.hold, &w.r, &w.b1)].into(),
            transitions: (0..n)
                .map(|i| Transition {
                    index: i,
                    ..transition(AbstractState::new(), "Move", &[&w.r, &w.b1], AbstractState::new())
                })
                .collect(),
        };
        let demos = vec![demo(2), demo(3), demo(4)];
        let report = compute_coverage(&[], &demos, KeepBonus::Kept);
        assert_eq!(report.covered_count, 0);
        assert_eq!(report.normalized, 0.0);
        let (d, i, alpha) = report.uncovered.unwrap();
        assert_eq!((d, i), (0, 1));
        assert_eq!(alpha, demos[0].goal);
    }
}
