use std::collections::BTreeSet;
use std::sync::Arc;

use super::{lift_atoms, structure_key, Assignment, Datasets, Namer};
use crate::consistency::{AbstractDemo, CoverageReport, Transition};
use crate::symbolic::{AbstractState, ControllerRef, Object, Operator, Variable};

fn fresh_variables(objects: &[Object], start: usize) -> Vec<Variable> {
    objects
        .iter()
        .enumerate()
        .map(|(i, o)| Variable::new(&format!("?x{}", start + i), &o.ty))
        .collect()
}

/// A new operator whose controller is the transition's action and whose add
/// effects are the necessary atoms that became true. Returns the operator and
/// the objects its parameters bind to in `t`.
pub fn induce_op_to_cover(t: &Transition, alpha: &AbstractState, namer: &mut Namer) -> (Operator, Vec<Object>) {
    let adds: AbstractState = t
        .s_next
        .difference(&t.s_prev)
        .filter(|a| alpha.contains(a))
        .cloned()
        .collect();
    let mut objects: Vec<Object> = Vec::new();
    for o in t.action.args.iter().chain(adds.iter().flat_map(|a| a.args.iter())) {
        if !objects.contains(o) {
            objects.push(o.clone());
        }
    }
    let params = fresh_variables(&objects, 0);
    let var_of = |o: &Object| params[objects.iter().position(|p| p == o).expect("object bound")].clone();
    let op = Operator {
        name: namer.fresh(&t.action.controller),
        add_effects: lift_atoms(&adds, &params, &objects),
        preconditions: BTreeSet::new(),
        delete_effects: BTreeSet::new(),
        quantified_deletes: BTreeSet::new(),
        controller: ControllerRef {
            name: t.action.controller.clone(),
            args: t.action.args.iter().map(var_of).collect(),
        },
        params,
    };
    (op, objects)
}

/// Drops preconditions and delete effects, keeping preconditions that are
/// re-asserted as add effects.
pub fn strip_prec_and_del_effs(op: &Operator) -> Operator {
    Operator {
        preconditions: op.keep_atoms(),
        delete_effects: BTreeSet::new(),
        quantified_deletes: BTreeSet::new(),
        ..op.clone()
    }
}

fn transition<'a>(demos: &'a [AbstractDemo], a: &Assignment) -> &'a Transition {
    &demos[a.demo].transitions[a.index]
}

/// Re-derives preconditions (intersection of lifted prior states), atomic
/// deletes (lifted atoms that became false) and quantified deletes
/// (predicates of atoms still mispredicted) from each operator's data.
/// Operators with no data are dropped, together with their datasets.
pub fn induce_prec_and_del_effs(
    ops: &[Arc<Operator>],
    datasets: Datasets,
    demos: &[AbstractDemo],
) -> (Vec<Arc<Operator>>, Datasets) {
    let mut out_ops = Vec::new();
    let mut out_data = Vec::new();
    for (op, data) in ops.iter().zip(datasets) {
        if data.is_empty() {
            continue;
        }
        let mut pre: Option<BTreeSet<_>> = None;
        let mut dels = BTreeSet::new();
        for a in &data {
            let t = transition(demos, a);
            let lifted = lift_atoms(&t.s_prev, &op.params, &a.objects);
            pre = Some(match pre {
                None => lifted,
                Some(p) => p.intersection(&lifted).cloned().collect(),
            });
            let gone: AbstractState = t.s_prev.difference(&t.s_next).cloned().collect();
            dels.extend(lift_atoms(&gone, &op.params, &a.objects));
        }
        let dels: BTreeSet<_> = dels.difference(&op.add_effects).cloned().collect();
        let mut induced = Operator {
            preconditions: pre.unwrap_or_default(),
            delete_effects: dels,
            quantified_deletes: BTreeSet::new(),
            ..(**op).clone()
        };
        let partial = Arc::new(induced.clone());
        for a in &data {
            let t = transition(demos, a);
            let g = partial.ground_unchecked(a.objects.clone());
            for atom in g.apply_unchecked(&t.s_prev).difference(&t.s_next) {
                induced.quantified_deletes.insert(Arc::clone(&atom.predicate));
            }
        }
        out_ops.push(Arc::new(induced));
        out_data.push(data);
    }
    (out_ops, out_data)
}

/// For each transition of `new_op` whose necessary atoms its deletes would
/// destroy, a copy of `new_op` that requires and re-asserts the missing
/// atoms. Copies identical in structure to each other or to `existing` are
/// dropped.
pub fn ensure_nec_atoms_sat(
    new_op: &Arc<Operator>,
    data: &[Assignment],
    demos: &[AbstractDemo],
    coverage: &CoverageReport,
    existing: &[Arc<Operator>],
    namer: &mut Namer,
) -> Vec<Operator> {
    let mut seen: BTreeSet<String> = existing.iter().map(|o| structure_key(o)).collect();
    let mut copies = Vec::new();
    for a in data {
        let t = transition(demos, a);
        let Some(alpha) = coverage.alpha_after(a.demo, a.index, demos[a.demo].len()) else {
            continue;
        };
        let g = new_op.ground_unchecked(a.objects.clone());
        let missing: AbstractState = alpha
            .iter()
            .filter(|atom| {
                let survives = t.s_next.contains(atom) && !g.deletes(atom);
                !survives && !g.add_effects.contains(atom)
            })
            .cloned()
            .collect();
        if missing.is_empty() {
            continue;
        }
        let mut objects = a.objects.clone();
        let mut params = new_op.params.clone();
        let extra: BTreeSet<&Object> = missing
            .iter()
            .flat_map(|atom| atom.args.iter())
            .filter(|o| !objects.contains(o))
            .collect();
        let extra: Vec<Object> = extra.into_iter().cloned().collect();
        params.extend(fresh_variables(&extra, params.len()));
        objects.extend(extra);
        let lifted = lift_atoms(&missing, &params, &objects);
        let mut copy = (**new_op).clone();
        copy.params = params;
        copy.preconditions.extend(lifted.iter().cloned());
        copy.add_effects.extend(lifted.iter().cloned());
        copy.delete_effects = copy.delete_effects.difference(&lifted).cloned().collect();
        if seen.insert(structure_key(&copy)) {
            copy.name = namer.fresh(&copy.controller.name);
            copies.push(copy);
        }
    }
    copies
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Action;
    use crate::symbolic::{Atom, GroundAtom, Predicate};

    #[test]
    fn induced_adds_keep_only_necessary_changes() {
        let reach = Predicate::new("Reach", &["robot", "obj"]);
        let r = Object::new("r", "robot");
        let b1 = Object::new("b1", "obj");
        let b2 = Object::new("b2", "obj");
        let ga = |o: &Object| GroundAtom::new(&reach, vec![r.clone(), o.clone()]);
        let t = Transition {
            demo: 0,
            index: 0,
            s_prev: AbstractState::new(),
            action: Action::new("Move", &[&r, &b1], vec![0.3]),
            s_next: [ga(&b1), ga(&b2)].into(),
        };
        let mut namer = Namer::default();
        let (op, objects) = induce_op_to_cover(&t, &[ga(&b1)].into(), &mut namer);
        assert_eq!(objects, [r.clone(), b1.clone()]);
        assert_eq!(op.params.len(), 2);
        let x0 = Variable::new("?x0", "robot");
        let x1 = Variable::new("?x1", "obj");
        assert_eq!(op.add_effects, [Atom::new(&reach, vec![x0.clone(), x1.clone()])].into());
        assert_eq!(op.controller.args, [x0, x1]);

        let (op, _) = induce_op_to_cover(&t, &AbstractState::new(), &mut namer);
        assert!(op.add_effects.is_empty());
        assert_eq!(op.name, "Op001-Move");
    }
}
