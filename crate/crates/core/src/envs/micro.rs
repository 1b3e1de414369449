use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{atom, feat, objects_of, Action, ControllerSpec, Environment, PredicateDef, State, Task, TaskScale};
use crate::symbolic::{ObjType, Object, Predicate};

const X: usize = 0;
const HELD: usize = 1;
const AT_RADIUS: f64 = 0.25;
const WORLD_MAX: f64 = 10.0;

fn at(x: &State, args: &[Object]) -> bool {
    (feat(x, &args[0], X) - feat(x, &args[1], X)).abs() <= AT_RADIUS
}

fn holding(x: &State, args: &[Object]) -> bool {
    feat(x, &args[1], HELD) > 0.5
}

fn hand_empty(x: &State, _args: &[Object]) -> bool {
    objects_of(x, "block").all(|b| feat(x, b, HELD) <= 0.5)
}

/// A tiny pick-and-carry domain used by tests and fixtures. `Jump` never
/// changes the state, which makes operators built on it unrefinable.
pub struct Micro {
    types: Vec<ObjType>,
    predicates: Vec<PredicateDef>,
    controllers: Vec<ControllerSpec>,
}

impl Default for Micro {
    fn default() -> Self {
        Self::new()
    }
}

impl Micro {
    pub fn new() -> Self {
        Self {
            types: vec![ObjType::new("bot", &["x"]), ObjType::new("block", &["x", "held"])],
            predicates: vec![
                PredicateDef {
                    predicate: Predicate::new("At", &["bot", "block"]),
                    holds: at,
                },
                PredicateDef {
                    predicate: Predicate::new("Holding", &["bot", "block"]),
                    holds: holding,
                },
                PredicateDef {
                    predicate: Predicate::new("HandEmpty", &["bot"]),
                    holds: hand_empty,
                },
            ],
            controllers: vec![
                ControllerSpec::new("Move", &["bot", "block"], 1),
                ControllerSpec::new("Pick", &["bot", "block"], 0),
                ControllerSpec::new("Drop", &["bot", "block"], 0),
                ControllerSpec::new("Jump", &["bot", "block"], 0),
            ],
        }
    }

    /// Builds a state with the bot at `bot_x` and unheld blocks at `blocks`.
    pub fn state(bot_x: f64, blocks: &[f64]) -> State {
        let mut s = State::new();
        s.insert(Object::new("bot", "bot"), vec![bot_x]);
        for (i, &x) in blocks.iter().enumerate() {
            s.insert(Object::new(&format!("b{i}"), "block"), vec![x, 0.0]);
        }
        s
    }
}

impl Environment for Micro {
    fn name(&self) -> &str {
        "micro"
    }

    fn types(&self) -> &[ObjType] {
        &self.types
    }

    fn predicates(&self) -> &[PredicateDef] {
        &self.predicates
    }

    fn controllers(&self) -> &[ControllerSpec] {
        &self.controllers
    }

    fn step(&self, x: &State, u: &Action) -> State {
        let mut next = x.clone();
        let (bot, block) = (&u.args[0], &u.args[1]);
        match &*u.controller {
            "Move" => {
                let target = u.theta[0];
                if (0.0..=WORLD_MAX).contains(&target) {
                    next.get_mut(bot).expect("bot")[X] = target;
                    for b in objects_of(x, "block") {
                        if feat(x, b, HELD) > 0.5 {
                            next.get_mut(b).expect("block")[X] = target;
                        }
                    }
                }
            }
            "Pick" => {
                if at(x, &u.args) && hand_empty(x, &[]) {
                    next.get_mut(block).expect("block")[HELD] = 1.0;
                }
            }
            "Drop" if holding(x, &u.args) => {
                next.get_mut(block).expect("block")[HELD] = 0.0;
            }
            _ => {}
        }
        next
    }

    fn sample_task(&self, scale: TaskScale, rng: &mut ChaCha8Rng) -> Task {
        let n_blocks = match scale {
            TaskScale::Train => rng.random_range(1..=2),
            TaskScale::Eval => rng.random_range(3..=4),
        };
        let mut xs: Vec<f64> = Vec::new();
        while xs.len() < n_blocks {
            let x = rng.random_range(0.5..WORLD_MAX - 0.5);
            if xs.iter().all(|o| (o - x).abs() >= 1.0) {
                xs.push(x);
            }
        }
        let mut bot_x = rng.random_range(0.5..WORLD_MAX - 0.5);
        if xs.iter().any(|b| (b - bot_x).abs() <= 2.0 * AT_RADIUS) {
            bot_x = (bot_x + 2.0 * AT_RADIUS + 0.1).min(WORLD_MAX);
        }
        let init = Self::state(bot_x, &xs);
        let bot = Object::new("bot", "bot");
        let blocks: Vec<Object> = objects_of(&init, "block").cloned().collect();
        let held = &blocks[rng.random_range(0..n_blocks)];
        let mut goal = BTreeSet::new();
        goal.insert(atom(&self.predicates, "Holding", &[&bot, held]));
        if n_blocks > 1 && rng.random_bool(0.5) {
            let other = blocks.iter().find(|b| *b != held).expect("two blocks");
            goal.insert(atom(&self.predicates, "At", &[&bot, other]));
        }
        Task::new(init, goal)
    }

    fn oracle_action(&self, task: &Task, x: &State) -> Option<Action> {
        let bot = objects_of(x, "bot").next()?;
        let mut wanted = None;
        let mut visit = None;
        for a in &task.goal {
            match &*a.predicate.name {
                "Holding" => wanted = Some(&a.args[1]),
                "At" => visit = Some(&a.args[1]),
                _ => {}
            }
        }
        if let Some(b) = wanted {
            if !holding(x, &[bot.clone(), b.clone()]) {
                if let Some(other) = objects_of(x, "block").find(|o| feat(x, o, HELD) > 0.5) {
                    return Some(Action::new("Drop", &[bot, other], vec![]));
                }
                if !at(x, &[bot.clone(), b.clone()]) {
                    return Some(Action::new("Move", &[bot, b], vec![feat(x, b, X)]));
                }
                return Some(Action::new("Pick", &[bot, b], vec![]));
            }
        }
        let b = visit?;
        Some(Action::new("Move", &[bot, b], vec![feat(x, b, X)]))
    }

    fn oracle_thetas(&self, x: &State, controller: &str, args: &[Object]) -> Vec<Vec<f64>> {
        match controller {
            "Move" => vec![vec![feat(x, &args[1], X)]],
            _ => vec![vec![]],
        }
    }
}
