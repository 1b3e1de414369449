//! Grounding into integer atoms and delete-relaxation heuristics.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::symbolic::{
    for_each_binding, is_injective, AbstractState, GroundAtom, GroundOperator, Object, Operator, Predicate,
};

pub type AtomId = u32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    /// Sum of relaxed achievement costs of the goal atoms.
    #[default]
    HAdd,
    /// Number of goal atoms not yet true.
    GoalCount,
}

/// Ground operators over interned atoms.
#[derive(Debug)]
pub struct GroundTask {
    pub atoms: Vec<GroundAtom>,
    index: HashMap<GroundAtom, AtomId>,
    atom_pred: Vec<u32>,
    pub ops: Vec<GroundOperator>,
    pub pre: Vec<Vec<AtomId>>,
    pub add: Vec<Vec<AtomId>>,
    pub del: Vec<Vec<AtomId>>,
    /// Predicate ids whose atoms every op removes.
    pub qdel: Vec<Vec<u32>>,
    consumers: Vec<Vec<usize>>,
    pub init: Vec<AtomId>,
    pub goal: Vec<AtomId>,
}

impl GroundTask {
    /// Grounds `ops` injectively over `objects`, keeping only groundings whose static
    /// preconditions hold in `s0` and whose preconditions are reachable in
    /// the delete relaxation.
    pub fn new(s0: &AbstractState, goal: &AbstractState, ops: &[Arc<Operator>], objects: &[Object]) -> Self {
        let dynamic: BTreeSet<&str> = ops
            .iter()
            .flat_map(|o| o.add_effects.iter().map(|a| &*a.predicate.name))
            .collect();
        let mut grounded: Vec<GroundOperator> = Vec::new();
        for op in ops {
            let statics: Vec<(&Arc<Predicate>, Vec<usize>)> = op
                .preconditions
                .iter()
                .filter(|a| !dynamic.contains(&*a.predicate.name))
                .map(|a| {
                    let slots = a
                        .args
                        .iter()
                        .map(|v| op.params.iter().position(|p| p == v).expect("validated operator"))
                        .collect();
                    (&a.predicate, slots)
                })
                .collect();
            let types: Vec<&str> = op.params.iter().map(|v| &*v.ty).collect();
            for_each_binding(&types, objects, &[], |binding| {
                let holds = statics.iter().all(|(p, slots)| {
                    let args = slots.iter().map(|&i| binding[i].clone()).collect();
                    s0.contains(&GroundAtom::new(p, args))
                });
                if holds && is_injective(binding) {
                    grounded.push(op.ground_unchecked(binding.to_vec()));
                }
            });
        }

        let mut reachable: BTreeSet<&GroundAtom> = s0.iter().collect();
        let mut live = vec![false; grounded.len()];
        loop {
            let mut changed = false;
            for (g, alive) in grounded.iter().zip(live.iter_mut()) {
                if !*alive && g.preconditions.iter().all(|a| reachable.contains(a)) {
                    *alive = true;
                    changed = true;
                    reachable.extend(g.add_effects.iter());
                }
            }
            if !changed {
                break;
            }
        }
        let grounded: Vec<GroundOperator> = grounded
            .into_iter()
            .zip(live)
            .filter(|(_, l)| *l)
            .map(|(g, _)| g)
            .collect();

        let mut task = GroundTask {
            atoms: Vec::new(),
            index: HashMap::new(),
            atom_pred: Vec::new(),
            ops: Vec::new(),
            pre: Vec::new(),
            add: Vec::new(),
            del: Vec::new(),
            qdel: Vec::new(),
            consumers: Vec::new(),
            init: Vec::new(),
            goal: Vec::new(),
        };
        let mut preds: BTreeMap<Arc<str>, u32> = BTreeMap::new();
        let mut pred_id = |p: &Predicate| -> u32 {
            let n = preds.len() as u32;
            *preds.entry(p.name.clone()).or_insert(n)
        };
        let intern = |task: &mut GroundTask, a: &GroundAtom, pred: u32| -> AtomId {
            if let Some(&id) = task.index.get(a) {
                return id;
            }
            let id = task.atoms.len() as AtomId;
            task.atoms.push(a.clone());
            task.index.insert(a.clone(), id);
            task.atom_pred.push(pred);
            id
        };
        let mut ids = |task: &mut GroundTask, set: &AbstractState| -> Vec<AtomId> {
            let mut v: Vec<AtomId> = set.iter().map(|a| intern(task, a, pred_id(&a.predicate))).collect();
            v.sort_unstable();
            v
        };
        task.init = ids(&mut task, s0);
        task.goal = ids(&mut task, goal);
        for g in &grounded {
            let pre = ids(&mut task, &g.preconditions);
            let add = ids(&mut task, &g.add_effects);
            let del = ids(&mut task, &g.delete_effects);
            task.pre.push(pre);
            task.add.push(add);
            task.del.push(del);
        }
        for g in &grounded {
            let q: Vec<u32> = g.op.quantified_deletes.iter().map(|p| pred_id(p)).collect();
            task.qdel.push(q);
        }
        task.ops = grounded;
        task.consumers = vec![Vec::new(); task.atoms.len()];
        for (i, pre) in task.pre.iter().enumerate() {
            for &a in pre {
                task.consumers[a as usize].push(i);
            }
        }
        task
    }

    pub fn applicable(&self, op: usize, state: &[AtomId]) -> bool {
        self.pre[op].iter().all(|a| state.binary_search(a).is_ok())
    }

    /// The successor under the operator semantics: deletes (atomic and
    /// quantified) first, then adds.
    pub fn apply(&self, op: usize, state: &[AtomId]) -> Vec<AtomId> {
        let q = &self.qdel[op];
        let del = &self.del[op];
        let mut next: Vec<AtomId> = state
            .iter()
            .copied()
            .filter(|a| del.binary_search(a).is_err() && !q.contains(&self.atom_pred[*a as usize]))
            .collect();
        next.extend(&self.add[op]);
        next.sort_unstable();
        next.dedup();
        next
    }

    pub fn is_goal(&self, state: &[AtomId]) -> bool {
        self.goal.iter().all(|a| state.binary_search(a).is_ok())
    }

    pub fn to_state(&self, ids: &[AtomId]) -> AbstractState {
        ids.iter().map(|&a| self.atoms[a as usize].clone()).collect()
    }

    /// Heuristic estimate of the distance to the goal; `None` when h_add
    /// proves the goal unreachable even ignoring deletes.
    pub fn estimate(&self, heuristic: Heuristic, state: &[AtomId]) -> Option<u64> {
        match heuristic {
            Heuristic::GoalCount => Some(self.goal.iter().filter(|a| state.binary_search(a).is_err()).count() as u64),
            Heuristic::HAdd => self.h_add(state),
        }
    }

    /// Additive delete-relaxation heuristic with unit operator costs.
    pub fn h_add(&self, state: &[AtomId]) -> Option<u64> {
        const INF: u64 = u64::MAX;
        if self.goal.is_empty() {
            return Some(0);
        }
        let mut dist = vec![INF; self.atoms.len()];
        let mut unsatisfied: Vec<usize> = self.pre.iter().map(Vec::len).collect();
        let mut op_cost = vec![0u64; self.ops.len()];
        let mut queue: BinaryHeap<Reverse<(u64, AtomId)>> = BinaryHeap::new();
        for &a in state {
            dist[a as usize] = 0;
            queue.push(Reverse((0, a)));
        }
        let fire = |op: usize, cost: u64, dist: &mut Vec<u64>, queue: &mut BinaryHeap<Reverse<(u64, AtomId)>>| {
            for &a in &self.add[op] {
                if cost < dist[a as usize] {
                    dist[a as usize] = cost;
                    queue.push(Reverse((cost, a)));
                }
            }
        };
        for op in 0..self.ops.len() {
            if self.pre[op].is_empty() {
                fire(op, 1, &mut dist, &mut queue);
            }
        }
        let mut goals_left = self.goal.len();
        let mut is_goal = vec![false; self.atoms.len()];
        for &g in &self.goal {
            is_goal[g as usize] = true;
        }
        while let Some(Reverse((c, a))) = queue.pop() {
            if c > dist[a as usize] {
                continue;
            }
            if is_goal[a as usize] {
                is_goal[a as usize] = false;
                goals_left -= 1;
                if goals_left == 0 {
                    break;
                }
            }
            for &op in &self.consumers[a as usize] {
                op_cost[op] = op_cost[op].saturating_add(c);
                unsatisfied[op] -= 1;
                if unsatisfied[op] == 0 {
                    fire(op, op_cost[op].saturating_add(1), &mut dist, &mut queue);
                }
            }
        }
        let mut total = 0u64;
        for &g in &self.goal {
            let d = dist[g as usize];
            if d == INF {
                return None;
            }
            total = total.saturating_add(d);
        }
        Some(total)
    }
}
