//! Randomized self-checks of the core invariants, driven by a seeded RNG so
//! every run checks the same cases. Instances come from the `micro`
//! environment with hand-written operators and random mutations of them.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{gen_demos, run_experiment, stream_rng, ExperimentConfig, Method};
use crate::consistency::{
    action_groundings, backchain, is_consistent, necessary_atoms_step, AbstractDemo, KeepBonus, Transition,
};
use crate::envs::{check_replay, env_by_name, Environment, Micro, TaskScale, ENV_NAMES};
use crate::learner::{hill_climb, LearnerConfig};
use crate::samplers::{fit_sampler, SamplerConfig, SamplerKind, SamplerTrainSet};
use crate::symbolic::{
    apply, AbstractState, Atom, ControllerRef, GroundAtom, LiftedAtom, Object, Operator, Predicate, Variable,
};

/// Failures kept per property; the count is always exact.
const MAX_REPORTED: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub failed: usize,
    pub examples: Vec<String>,
    /// What the random instances looked like.
    pub notes: String,
}

impl PropertyOutcome {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            failed: 0,
            examples: Vec::new(),
            notes: String::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failed += 1;
            if self.examples.len() < MAX_REPORTED {
                self.examples.push(what());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failed == 0 && self.cases > 0
    }
}

struct MicroWorld {
    env: Micro,
    at: Arc<Predicate>,
    holding: Arc<Predicate>,
    hand_empty: Arc<Predicate>,
    r: Variable,
    b: Variable,
    c: Variable,
}

impl MicroWorld {
    fn new() -> Self {
        let env = Micro::new();
        let pred = |n: &str| Arc::clone(env.predicate(n).expect("micro predicate"));
        Self {
            at: pred("At"),
            holding: pred("Holding"),
            hand_empty: pred("HandEmpty"),
            env,
            r: Variable::new("?r", "bot"),
            b: Variable::new("?b", "block"),
            c: Variable::new("?c", "block"),
        }
    }

    fn lifted_pool(&self, with_c: bool) -> Vec<LiftedAtom> {
        let mut pool = vec![
            Atom::new(&self.at, vec![self.r.clone(), self.b.clone()]),
            Atom::new(&self.holding, vec![self.r.clone(), self.b.clone()]),
            Atom::new(&self.hand_empty, vec![self.r.clone()]),
        ];
        if with_c {
            pool.push(Atom::new(&self.at, vec![self.r.clone(), self.c.clone()]));
            pool.push(Atom::new(&self.holding, vec![self.r.clone(), self.c.clone()]));
        }
        pool
    }

    #[allow(clippy::too_many_arguments)]
    fn op(
        &self,
        name: &str,
        controller: &str,
        pre: &[LiftedAtom],
        add: &[LiftedAtom],
        del: &[LiftedAtom],
        qdel: &[&Arc<Predicate>],
        with_c: bool,
    ) -> Operator {
        let mut params = vec![self.r.clone(), self.b.clone()];
        if with_c {
            params.push(self.c.clone());
        }
        Operator {
            name: name.to_string(),
            params,
            preconditions: pre.iter().cloned().collect(),
            add_effects: add.iter().cloned().collect(),
            delete_effects: del.iter().cloned().collect(),
            quantified_deletes: qdel.iter().map(|p| Arc::clone(p)).collect(),
            controller: ControllerRef {
                name: controller.into(),
                args: vec![self.r.clone(), self.b.clone()],
            },
        }
    }

    /// Operators that explain every demonstrator step.
    fn reference_ops(&self) -> Vec<Operator> {
        let [at, holding, empty] = [0, 1, 2].map(|i| self.lifted_pool(false)[i].clone());
        vec![
            self.op("Move", "Move", &[], std::slice::from_ref(&at), &[], &[&self.at], false),
            self.op(
                "Pick",
                "Pick",
                &[at, empty.clone()],
                std::slice::from_ref(&holding),
                std::slice::from_ref(&empty),
                &[],
                false,
            ),
            self.op(
                "Drop",
                "Drop",
                std::slice::from_ref(&holding),
                &[empty],
                std::slice::from_ref(&holding),
                &[],
                false,
            ),
        ]
    }

    fn random_op(&self, name: &str, rng: &mut ChaCha8Rng) -> Operator {
        let with_c = rng.random_bool(0.3);
        let pool = self.lifted_pool(with_c);
        let controller = *["Move", "Pick", "Drop"].choose(rng).expect("non-empty");
        let mut pre = Vec::new();
        let mut add = Vec::new();
        let mut del = Vec::new();
        for a in &pool {
            if rng.random_bool(0.3) {
                pre.push(a.clone());
            }
            if rng.random_bool(0.3) {
                add.push(a.clone());
            } else if rng.random_bool(0.2) {
                del.push(a.clone());
            }
        }
        let qdel: Vec<&Arc<Predicate>> = [&self.at, &self.holding, &self.hand_empty]
            .into_iter()
            .filter(|_| rng.random_bool(0.1))
            .collect();
        self.op(name, controller, &pre, &add, &del, &qdel, with_c)
    }

    /// Flips one atom in or out of one of an operator's sets.
    fn mutate(&self, op: &Operator, rng: &mut ChaCha8Rng) -> Operator {
        let mut op = op.clone();
        let pool = self.lifted_pool(false);
        let a = pool.choose(rng).expect("non-empty").clone();
        let toggle = |set: &mut BTreeSet<LiftedAtom>| {
            if !set.remove(&a) {
                set.insert(a.clone());
            }
        };
        match rng.random_range(0..4) {
            0 => toggle(&mut op.preconditions),
            1 => {
                toggle(&mut op.add_effects);
                op.delete_effects.remove(&a);
            }
            2 => {
                toggle(&mut op.delete_effects);
                op.add_effects.remove(&a);
            }
            _ => {
                let p = [&self.at, &self.holding, &self.hand_empty][rng.random_range(0..3)];
                if !op.quantified_deletes.remove(p) {
                    op.quantified_deletes.insert(Arc::clone(p));
                }
            }
        }
        op
    }

    /// A mix of reference, mutated and random operators.
    fn random_op_set(&self, rng: &mut ChaCha8Rng) -> Vec<Arc<Operator>> {
        let mut ops = Vec::new();
        for (i, op) in self.reference_ops().into_iter().enumerate() {
            let roll: f64 = rng.random();
            let op = if roll < 0.5 {
                op
            } else if roll < 0.8 {
                self.mutate(&op, rng)
            } else {
                continue;
            };
            ops.push(Operator {
                name: format!("Op{i}"),
                ..op
            });
        }
        for i in 0..rng.random_range(0..=2) {
            ops.push(self.random_op(&format!("Rand{i}"), rng));
        }
        ops.into_iter().map(Arc::new).collect()
    }

    fn random_demo(&self, rng: &mut ChaCha8Rng, id: usize) -> AbstractDemo {
        let task = self.env.sample_task(TaskScale::Train, rng);
        let demo = self
            .env
            .oracle_solve(&task)
            .expect("micro demonstrator solves train tasks");
        AbstractDemo::from_demo(&self.env, id, &demo)
    }

    fn objects(n_blocks: usize) -> Vec<Object> {
        let mut objs = vec![Object::new("bot", "bot")];
        objs.extend((0..n_blocks).map(|i| Object::new(&format!("b{i}"), "block")));
        objs
    }

    fn all_ground_atoms(&self, objects: &[Object]) -> Vec<GroundAtom> {
        let bot = &objects[0];
        let mut atoms = vec![Atom::new(&self.hand_empty, vec![bot.clone()])];
        for b in &objects[1..] {
            atoms.push(Atom::new(&self.at, vec![bot.clone(), b.clone()]));
            atoms.push(Atom::new(&self.holding, vec![bot.clone(), b.clone()]));
        }
        atoms
    }
}

fn show(s: &AbstractState) -> String {
    let atoms: Vec<String> = s.iter().map(|a| a.to_string()).collect();
    format!("{{{}}}", atoms.join(", "))
}

/// Re-checks every step of each backchained suffix: the chosen grounding is
/// consistent with its transition, the necessary atoms follow the regression
/// rule and hold in the demonstrated states, and the last ones are the goal.
pub fn backchain_soundness(n: usize, seed: u64) -> PropertyOutcome {
    let w = MicroWorld::new();
    let mut rng = stream_rng(seed, 101);
    let mut out = PropertyOutcome::new("backchain soundness");
    let (mut partial, mut full) = (0, 0);
    for case in 0..n {
        let ops = w.random_op_set(&mut rng);
        let demo = w.random_demo(&mut rng, 0);
        let chain = backchain(&ops, &demo, KeepBonus::Kept);
        let len = demo.len();
        let start = len - chain.covered();
        let mut ok = chain.alphas.len() == chain.covered() + 1 && chain.alphas[chain.covered()] == demo.goal;
        for (j, g) in chain.suffix.iter().enumerate() {
            let t = &demo.transitions[start + j];
            let (before, after) = (&chain.alphas[j], &chain.alphas[j + 1]);
            ok &= is_consistent(g, t, after, true);
            ok &= *before == necessary_atoms_step(after, g);
            ok &= before.is_subset(&t.s_prev);
        }
        if let Some(last) = demo.transitions.last() {
            ok &= demo.goal.is_subset(&last.s_next);
        }
        out.check(ok, || {
            format!(
                "case {case}: suffix of {} steps failed re-verification",
                chain.covered()
            )
        });
        if chain.covered() == len {
            full += 1;
        } else if chain.covered() > 0 {
            partial += 1;
        }
    }
    out.notes = format!("{full} fully and {partial} partly covered");
    out
}

/// Longest consistent suffix over every choice of grounding.
fn exhaustive_eta(ops: &[Arc<Operator>], ts: &[Transition], alpha: &AbstractState, objects: &[Object]) -> usize {
    let Some((t, rest)) = ts.split_last() else {
        return 0;
    };
    let mut best = 0;
    for op in ops {
        for g in action_groundings(op, &t.action, objects) {
            if is_consistent(&g, t, alpha, true) {
                best = best.max(1 + exhaustive_eta(ops, rest, &necessary_atoms_step(alpha, &g), objects));
            }
        }
    }
    best
}

/// Backchaining never covers more than the exhaustive optimum, and matches it
/// when every step had a single consistent grounding. Only demonstrations of
/// at most three steps are checked.
pub fn coverage_oracle(n: usize, seed: u64) -> PropertyOutcome {
    let w = MicroWorld::new();
    let mut rng = stream_rng(seed, 102);
    let mut out = PropertyOutcome::new("brute-force coverage oracle");
    let mut case = 0;
    let (mut ambiguous, mut nonzero) = (0, 0);
    while out.cases < n {
        case += 1;
        let ops = w.random_op_set(&mut rng);
        let demo = w.random_demo(&mut rng, 0);
        if demo.len() > 3 {
            continue;
        }
        let chain = backchain(&ops, &demo, KeepBonus::Kept);
        let best = exhaustive_eta(&ops, &demo.transitions, &demo.goal, &demo.objects);
        let ok = chain.covered() <= best && (!chain.unique || chain.covered() == best);
        out.check(ok, || {
            format!(
                "case {case}: backchain {} vs exhaustive {best} (unique {})",
                chain.covered(),
                chain.unique
            )
        });
        ambiguous += usize::from(!chain.unique);
        nonzero += usize::from(best > 0);
    }
    out.notes = format!("{nonzero} with a covered step, {ambiguous} with ambiguous groundings");
    out
}

/// Accepted objective values strictly decrease and learning terminates, on
/// small random datasets with random complexity weights.
pub fn hill_climb_monotone(n: usize, seed: u64) -> PropertyOutcome {
    let w = MicroWorld::new();
    let mut rng = stream_rng(seed, 103);
    let mut out = PropertyOutcome::new("hill-climbing monotonicity");
    let mut steps = 0;
    for case in 0..n {
        let k = rng.random_range(1..=5);
        let demos: Vec<AbstractDemo> = (0..k).map(|i| w.random_demo(&mut rng, i)).collect();
        let lambda = if rng.random_bool(0.5) {
            None
        } else {
            Some(rng.random_range(0.0..0.2))
        };
        let cfg = LearnerConfig {
            lambda,
            ..Default::default()
        };
        match hill_climb(&demos, &cfg) {
            Ok((_, trace)) => {
                let ok = trace.accepted_j.windows(2).all(|p| p[1] < p[0]);
                steps += trace.accepted_j.len() - 1;
                out.check(ok, || format!("case {case}: accepted J {:?}", trace.accepted_j));
            }
            Err(e) => out.check(false, || format!("case {case}: {e}")),
        }
    }
    out.notes = format!("{steps} accepted steps");
    out
}

/// Successor semantics: adds always hold afterwards; an atom survives exactly
/// when it is neither deleted nor of a quantified-deleted predicate; nothing
/// else appears; and applying checks the preconditions.
pub fn successor_semantics(n: usize, seed: u64) -> PropertyOutcome {
    let w = MicroWorld::new();
    let mut rng = stream_rng(seed, 104);
    let mut out = PropertyOutcome::new("successor semantics");
    let mut applicable = 0;
    let objects = MicroWorld::objects(3);
    let universe = w.all_ground_atoms(&objects);
    let blocks = &objects[1..];
    for case in 0..n {
        let op = Arc::new(w.random_op("Rand", &mut rng));
        let mut binding = vec![objects[0].clone()];
        binding.extend((1..op.params.len()).map(|_| blocks.choose(&mut rng).expect("blocks").clone()));
        let g = op.ground(&binding).expect("well-typed binding");
        let s: AbstractState = universe.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
        let next = g.apply_unchecked(&s);
        let qdel = |a: &GroundAtom| op.quantified_deletes.contains(&a.predicate);
        let mut ok = g.add_effects.is_subset(&next);
        for a in &s {
            let survives = !g.delete_effects.contains(a) && !qdel(a);
            ok &= !survives || next.contains(a);
        }
        for a in &next {
            let from_s = s.contains(a) && !g.delete_effects.contains(a) && !qdel(a);
            ok &= g.add_effects.contains(a) || from_s;
            ok &= !qdel(a) || g.add_effects.contains(a);
        }
        ok &= match apply(&s, &g) {
            Ok(x) => {
                applicable += 1;
                g.preconditions.is_subset(&s) && x == next
            }
            Err(_) => !g.preconditions.is_subset(&s),
        };
        out.check(ok, || format!("case {case}: {g} on {} gave {}", show(&s), show(&next)));
    }
    out.notes = format!("{applicable} applicable");
    out
}

/// Every generated demonstration replays in its simulator and ends at the goal.
pub fn demo_replay(per_env: usize, seed: u64) -> PropertyOutcome {
    let mut out = PropertyOutcome::new("demonstration replay");
    for name in ENV_NAMES {
        let env = env_by_name(name).expect("built-in environment");
        match gen_demos(&*env, per_env, seed) {
            Ok(demos) => {
                for (i, d) in demos.iter().enumerate() {
                    let r = check_replay(&*env, d);
                    out.check(r.is_ok(), || format!("{name} demo {i}: {}", r.unwrap_err()));
                }
            }
            Err(e) => out.check(false, || format!("{name}: {e}")),
        }
    }
    out
}

/// A generator fit to a constant parameter predicts it to within 1e-2.
pub fn sampler_mean_recovery(n: usize, seed: u64) -> PropertyOutcome {
    let w = MicroWorld::new();
    let op = w.reference_ops().remove(0);
    let mut rng = stream_rng(seed, 106);
    let mut out = PropertyOutcome::new("sampler mean recovery");
    for case in 0..n {
        let theta = rng.random_range(-5.0..5.0);
        let inputs: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        let set = SamplerTrainSet {
            positives: inputs.iter().map(|x| (x.clone(), vec![theta])).collect(),
            negatives: Vec::new(),
        };
        let fitted = fit_sampler(&op, 1, &set, &SamplerConfig::default(), &mut rng);
        let worst = match &fitted {
            Ok(m) => match &m.kind {
                SamplerKind::Learned { generator, .. } => inputs
                    .iter()
                    .map(|x| (generator.predict(x).0[0] - theta).abs())
                    .fold(0.0, f64::max),
                _ => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        };
        out.check(worst <= 1e-2, || {
            format!("case {case}: θ = {theta}, worst error {worst}")
        });
    }
    out
}

/// Two runs of the same small experiment give byte-identical CSV reports.
pub fn deterministic_reports(env: &str, seed: u64) -> PropertyOutcome {
    let mut out = PropertyOutcome::new("deterministic reports");
    let cfg = ExperimentConfig {
        num_train_demos: 10,
        num_eval_tasks: 10,
        seeds: vec![seed, seed + 1],
        ..ExperimentConfig::new(env, Method::Ours)
    };
    match (run_experiment(&cfg), run_experiment(&cfg)) {
        (Ok(a), Ok(b)) => {
            out.check(a.to_csv() == b.to_csv(), || "summary CSV differs".into());
            out.check(a.tasks_csv() == b.tasks_csv(), || "task CSV differs".into());
        }
        (Err(e), _) | (_, Err(e)) => out.check(false, || e.to_string()),
    }
    out
}

/// All suites at their standard sizes.
pub fn run_all(seed: u64) -> Vec<PropertyOutcome> {
    vec![
        backchain_soundness(200, seed),
        coverage_oracle(200, seed),
        hill_climb_monotone(50, seed),
        successor_semantics(1000, seed),
        demo_replay(50, seed),
        sampler_mean_recovery(5, seed),
        deterministic_reports("cluttered1d", seed),
    ]
}
