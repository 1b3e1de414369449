use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{lift_atoms, Assignment, LearnedModel, Namer};
use crate::consistency::{compute_coverage, AbstractDemo, KeepBonus, Transition};
use crate::symbolic::{AbstractState, ControllerRef, LiftedAtom, Object, Operator, Variable};

/// Beyond this many non-controller objects, permutation search gives way to
/// first-appearance ordering.
const MAX_PERMUTED: usize = 7;

type EffectKey = (Vec<String>, BTreeSet<LiftedAtom>, BTreeSet<LiftedAtom>);

fn effect_key(params: &[Variable], objects: &[Object], adds: &AbstractState, dels: &AbstractState) -> EffectKey {
    (
        params.iter().map(|v| v.ty.to_string()).collect(),
        lift_atoms(adds, params, objects),
        lift_atoms(dels, params, objects),
    )
}

fn permutations(items: &[Object]) -> Vec<Vec<Object>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

/// Canonical lifting of one transition's full effects: controller objects
/// come first, the remaining objects are ordered to minimize the lifted
/// effect key.
fn canonical_lift(t: &Transition) -> (Vec<Object>, Vec<Variable>, EffectKey) {
    let adds: AbstractState = t.s_next.difference(&t.s_prev).cloned().collect();
    let dels: AbstractState = t.s_prev.difference(&t.s_next).cloned().collect();
    let mut head: Vec<Object> = Vec::new();
    for o in &t.action.args {
        if !head.contains(o) {
            head.push(o.clone());
        }
    }
    let mut others: Vec<Object> = Vec::new();
    for o in adds.iter().chain(&dels).flat_map(|a| a.args.iter()) {
        if !head.contains(o) && !others.contains(o) {
            others.push(o.clone());
        }
    }
    let params: Vec<Variable> = head
        .iter()
        .chain(&others)
        .enumerate()
        .map(|(i, o)| Variable::new(&format!("?x{i}"), &o.ty))
        .collect();
    let orders = if others.len() <= MAX_PERMUTED {
        permutations(&others)
    } else {
        vec![others]
    };
    orders
        .into_iter()
        .map(|order| {
            let objects: Vec<Object> = head.iter().chain(&order).cloned().collect();
            let params: Vec<Variable> = objects
                .iter()
                .enumerate()
                .map(|(i, o)| Variable::new(&format!("?x{i}"), &o.ty))
                .collect();
            let key = effect_key(&params, &objects, &adds, &dels);
            (objects, params, key)
        })
        .min_by(|a, b| a.2.cmp(&b.2))
        .unwrap_or_else(|| (head.clone(), params.clone(), effect_key(&params, &head, &adds, &dels)))
}

/// One operator per distinct (controller, lifted adds, lifted deletes)
/// signature, with preconditions intersected over the cluster and no
/// quantified deletes.
pub fn cluster_and_intersect(demos: &[AbstractDemo]) -> LearnedModel {
    struct Cluster {
        controller: Arc<str>,
        params: Vec<Variable>,
        key: EffectKey,
        members: Vec<Assignment>,
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut index: BTreeMap<(Arc<str>, Vec<usize>, EffectKey), usize> = BTreeMap::new();
    for (d, demo) in demos.iter().enumerate() {
        for t in &demo.transitions {
            let (objects, params, key) = canonical_lift(t);
            // positions of controller args among params
            let ctrl_slots: Vec<usize> = t
                .action
                .args
                .iter()
                .map(|o| objects.iter().position(|p| p == o).expect("controller object"))
                .collect();
            let k = (t.action.controller.clone(), ctrl_slots, key.clone());
            let c = *index.entry(k).or_insert_with(|| {
                clusters.push(Cluster {
                    controller: t.action.controller.clone(),
                    params: params.clone(),
                    key: key.clone(),
                    members: Vec::new(),
                });
                clusters.len() - 1
            });
            clusters[c].members.push(Assignment {
                demo: d,
                index: t.index,
                objects,
            });
        }
    }

    let mut namer = Namer::default();
    let mut ops = Vec::new();
    let mut datasets = Vec::new();
    for c in clusters {
        let first = &c.members[0];
        let ctrl_args: Vec<Variable> = demos[first.demo].transitions[first.index]
            .action
            .args
            .iter()
            .map(|o| c.params[first.objects.iter().position(|p| p == o).expect("bound")].clone())
            .collect();
        let mut pre: Option<BTreeSet<LiftedAtom>> = None;
        for a in &c.members {
            let t = &demos[a.demo].transitions[a.index];
            let lifted = lift_atoms(&t.s_prev, &c.params, &a.objects);
            pre = Some(match pre {
                None => lifted,
                Some(p) => p.intersection(&lifted).cloned().collect(),
            });
        }
        let (_, adds, dels) = c.key;
        let op = Operator {
            name: namer.fresh(&c.controller),
            params: c.params,
            preconditions: pre.unwrap_or_default(),
            add_effects: adds,
            delete_effects: dels,
            quantified_deletes: BTreeSet::new(),
            controller: ControllerRef {
                name: c.controller,
                args: ctrl_args,
            },
        };
        ops.push(Arc::new(op));
        datasets.push(c.members);
    }
    let coverage = compute_coverage(&ops, demos, KeepBonus::Kept).normalized;
    LearnedModel {
        ops,
        datasets,
        coverage,
    }
}
