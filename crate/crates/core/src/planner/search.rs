//! Tree A* over abstract states that keeps yielding goal-reaching plans.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use super::heuristic::{AtomId, GroundTask, Heuristic};
use super::AbstractPlan;

struct Node {
    state: Arc<Vec<AtomId>>,
    g: u64,
    parent: Option<usize>,
    op: Option<usize>,
}

/// Why a search stopped producing plans.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchEnd {
    Exhausted,
    NodeLimit,
    Timeout,
}

/// Lazily enumerates distinct plans in the order A* reaches their goal
/// nodes. Each abstract state is expanded at most `max_expansions` times, so
/// alternative routes through a state survive but the search stays finite.
pub struct PlanSearch<'a> {
    task: &'a GroundTask,
    heuristic: Heuristic,
    nodes: Vec<Node>,
    open: BinaryHeap<Reverse<(u64, u64, usize)>>,
    expansions: HashMap<Arc<Vec<AtomId>>, usize>,
    seen_plans: HashSet<Vec<Arc<Vec<AtomId>>>>,
    h_cache: HashMap<Arc<Vec<AtomId>>, Option<u64>>,
    max_expansions: usize,
    max_nodes: usize,
    deadline: Option<Instant>,
    pub nodes_created: usize,
}

impl<'a> PlanSearch<'a> {
    pub fn new(
        task: &'a GroundTask,
        heuristic: Heuristic,
        max_expansions: usize,
        max_nodes: usize,
        deadline: Option<Instant>,
    ) -> Self {
        let mut search = Self {
            task,
            heuristic,
            nodes: Vec::new(),
            open: BinaryHeap::new(),
            expansions: HashMap::new(),
            seen_plans: HashSet::new(),
            h_cache: HashMap::new(),
            max_expansions: max_expansions.max(1),
            max_nodes,
            deadline,
            nodes_created: 0,
        };
        let init = Arc::new(task.init.clone());
        if let Some(h) = task.estimate(heuristic, &init) {
            search.push(init, 0, h, None, None);
        }
        search
    }

    fn push(&mut self, state: Arc<Vec<AtomId>>, g: u64, h: u64, parent: Option<usize>, op: Option<usize>) {
        let id = self.nodes.len();
        self.nodes.push(Node { state, g, parent, op });
        self.nodes_created += 1;
        // Ties: lower h first, then creation order.
        self.open.push(Reverse((g + h, h, id)));
    }

    fn extract(&self, mut id: usize) -> AbstractPlan {
        let mut steps = Vec::new();
        let mut states = Vec::new();
        loop {
            let node = &self.nodes[id];
            states.push(self.task.to_state(&node.state));
            match (node.op, node.parent) {
                (Some(op), Some(parent)) => {
                    steps.push(self.task.ops[op].clone());
                    id = parent;
                }
                _ => break,
            }
        }
        steps.reverse();
        states.reverse();
        AbstractPlan { steps, states }
    }

    fn state_sequence(&self, mut id: usize) -> Vec<Arc<Vec<AtomId>>> {
        let mut seq = vec![Arc::clone(&self.nodes[id].state)];
        while let Some(p) = self.nodes[id].parent {
            seq.push(Arc::clone(&self.nodes[p].state));
            id = p;
        }
        seq
    }

    /// The next plan whose state sequence differs from every earlier one.
    pub fn next_plan(&mut self) -> Result<AbstractPlan, SearchEnd> {
        while let Some(Reverse((_, _, id))) = self.open.pop() {
            if self.deadline.is_some_and(|d| Instant::now() >= d) {
                return Err(SearchEnd::Timeout);
            }
            let state = Arc::clone(&self.nodes[id].state);
            if self.task.is_goal(&state) {
                if self.seen_plans.insert(self.state_sequence(id)) {
                    return Ok(self.extract(id));
                }
                continue;
            }
            let count = self.expansions.entry(Arc::clone(&state)).or_insert(0);
            if *count >= self.max_expansions {
                continue;
            }
            *count += 1;
            let g = self.nodes[id].g + 1;
            // Steps reaching the same successor only differ in plans already
            // covered by the first one, so one child per successor.
            let mut children: HashSet<Vec<AtomId>> = HashSet::new();
            for op in 0..self.task.ops.len() {
                if !self.task.applicable(op, &state) {
                    continue;
                }
                let next = self.task.apply(op, &state);
                if next == *state || children.contains(&next) {
                    continue;
                }
                if self.deadline.is_some_and(|d| Instant::now() >= d) {
                    return Err(SearchEnd::Timeout);
                }
                if self.nodes_created >= self.max_nodes {
                    return Err(SearchEnd::NodeLimit);
                }
                children.insert(next.clone());
                let next = Arc::new(next);
                let h = match self.h_cache.get(&next) {
                    Some(&h) => h,
                    None => {
                        let h = self.task.estimate(self.heuristic, &next);
                        self.h_cache.insert(Arc::clone(&next), h);
                        h
                    }
                };
                if let Some(h) = h {
                    self.push(next, g, h, Some(id), Some(op));
                }
            }
        }
        Err(SearchEnd::Exhausted)
    }
}
