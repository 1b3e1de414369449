use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{atom, feat, objects_of, Action, ControllerSpec, Environment, PredicateDef, State, Task, TaskScale};
use crate::symbolic::{ObjType, Object, Predicate};

const X: usize = 0;
const Y: usize = 1;
const HELD: usize = 2;
const MAGNETIZED: usize = 2;

pub const PICK_RADIUS: f64 = 0.8;
pub const RECEPTACLE_HALF_WIDTH: f64 = 0.6;
const WORLD_MAX: f64 = 10.0;

fn dist(x: &State, a: &Object, b: &Object) -> f64 {
    (feat(x, a, X) - feat(x, b, X)).hypot(feat(x, a, Y) - feat(x, b, Y))
}

fn in_rect(x: &State, o: &Object, r: &Object) -> bool {
    (feat(x, o, X) - feat(x, r, X)).abs() <= RECEPTACLE_HALF_WIDTH
        && (feat(x, o, Y) - feat(x, r, Y)).abs() <= RECEPTACLE_HALF_WIDTH
}

fn pickable(x: &State, args: &[Object]) -> bool {
    dist(x, &args[0], &args[1]) <= PICK_RADIUS
}

fn above_receptacle(x: &State, args: &[Object]) -> bool {
    in_rect(x, &args[0], &args[1])
}

fn holding_screw(x: &State, args: &[Object]) -> bool {
    feat(x, &args[1], HELD) > 0.5
}

fn screw_in_receptacle(x: &State, args: &[Object]) -> bool {
    feat(x, &args[0], HELD) <= 0.5 && in_rect(x, &args[0], &args[1])
}

/// A magnetic gripper in the plane that must deliver particular screws into a
/// receptacle. Magnetizing picks up every screw in range.
pub struct Screws {
    types: Vec<ObjType>,
    predicates: Vec<PredicateDef>,
    controllers: Vec<ControllerSpec>,
}

impl Default for Screws {
    fn default() -> Self {
        Self::new()
    }
}

impl Screws {
    pub fn new() -> Self {
        Self {
            types: vec![
                ObjType::new("gripper", &["x", "y", "magnetized"]),
                ObjType::new("receptacle", &["x", "y"]),
                ObjType::new("screw", &["x", "y", "held"]),
            ],
            predicates: vec![
                PredicateDef {
                    predicate: Predicate::new("Pickable", &["gripper", "screw"]),
                    holds: pickable,
                },
                PredicateDef {
                    predicate: Predicate::new("AboveReceptacle", &["gripper", "receptacle"]),
                    holds: above_receptacle,
                },
                PredicateDef {
                    predicate: Predicate::new("HoldingScrew", &["gripper", "screw"]),
                    holds: holding_screw,
                },
                PredicateDef {
                    predicate: Predicate::new("ScrewInReceptacle", &["screw", "receptacle"]),
                    holds: screw_in_receptacle,
                },
            ],
            controllers: vec![
                ControllerSpec::new("MoveToScrew", &["gripper", "screw"], 0),
                ControllerSpec::new("MoveToReceptacle", &["gripper", "receptacle"], 0),
                ControllerSpec::new("MagnetizeGripper", &["gripper"], 0),
                ControllerSpec::new("DemagnetizeGripper", &["gripper"], 0),
            ],
        }
    }

    fn move_gripper(x: &State, g: &Object, tx: f64, ty: f64) -> State {
        let mut next = x.clone();
        let (dx, dy) = (tx - feat(x, g, X), ty - feat(x, g, Y));
        let gv = next.get_mut(g).expect("gripper");
        gv[X] = tx;
        gv[Y] = ty;
        for s in objects_of(x, "screw") {
            if feat(x, s, HELD) > 0.5 {
                let sv = next.get_mut(s).expect("screw");
                sv[X] += dx;
                sv[Y] += dy;
            }
        }
        next
    }
}

fn far_from_receptacle(x: f64, y: f64, rx: f64, ry: f64) -> bool {
    let margin = RECEPTACLE_HALF_WIDTH + 1.0;
    (x - rx).abs() > margin || (y - ry).abs() > margin
}

impl Environment for Screws {
    fn name(&self) -> &str {
        "screws"
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
        let g = &u.args[0];
        match &*u.controller {
            "MoveToScrew" => {
                let s = &u.args[1];
                Self::move_gripper(x, g, feat(x, s, X), feat(x, s, Y))
            }
            "MoveToReceptacle" => {
                let r = &u.args[1];
                Self::move_gripper(x, g, feat(x, r, X), feat(x, r, Y))
            }
            "MagnetizeGripper" => {
                let mut next = x.clone();
                next.get_mut(g).expect("gripper")[MAGNETIZED] = 1.0;
                for s in objects_of(x, "screw") {
                    if pickable(x, &[g.clone(), s.clone()]) {
                        next.get_mut(s).expect("screw")[HELD] = 1.0;
                    }
                }
                next
            }
            "DemagnetizeGripper" => {
                let mut next = x.clone();
                next.get_mut(g).expect("gripper")[MAGNETIZED] = 0.0;
                let (gx, gy) = (feat(x, g, X), feat(x, g, Y));
                for s in objects_of(x, "screw") {
                    if feat(x, s, HELD) > 0.5 {
                        let sv = next.get_mut(s).expect("screw");
                        sv[X] = gx;
                        sv[Y] = gy;
                        sv[HELD] = 0.0;
                    }
                }
                next
            }
            _ => x.clone(),
        }
    }

    fn sample_task(&self, scale: TaskScale, rng: &mut ChaCha8Rng) -> Task {
        let (n_screws, n_goal) = match scale {
            TaskScale::Train => (rng.random_range(3..=5), 1),
            TaskScale::Eval => (rng.random_range(6..=10), 1),
        };
        let (rx, ry) = (rng.random_range(2.0..8.0), rng.random_range(2.0..8.0));
        let mut pos: Vec<(f64, f64)> = Vec::new();
        while pos.len() < n_screws {
            let near_earlier = !pos.is_empty() && rng.random_bool(0.5);
            let (x, y) = if near_earlier {
                let (ax, ay) = pos[rng.random_range(0..pos.len())];
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let r = rng.random_range(0.2..0.7);
                (ax + r * angle.cos(), ay + r * angle.sin())
            } else {
                (rng.random_range(0.5..9.5), rng.random_range(0.5..9.5))
            };
            let inside = (0.0..=WORLD_MAX).contains(&x) && (0.0..=WORLD_MAX).contains(&y);
            if inside && far_from_receptacle(x, y, rx, ry) {
                pos.push((x, y));
            }
        }
        let mut init = State::new();
        let receptacle = Object::new("receptacle", "receptacle");
        init.insert(receptacle.clone(), vec![rx, ry]);
        let screws: Vec<Object> = (0..n_screws)
            .map(|i| Object::new(&format!("screw{i}"), "screw"))
            .collect();
        for (s, &(x, y)) in screws.iter().zip(&pos) {
            init.insert(s.clone(), vec![x, y, 0.0]);
        }
        let mut goal_idx: Vec<usize> = Vec::new();
        while goal_idx.len() < n_goal {
            let i = rng.random_range(0..n_screws);
            if !goal_idx.contains(&i) {
                goal_idx.push(i);
            }
        }
        let (gx, gy) = match rng.random_range(0..3) {
            0 => (rx, ry),
            1 => {
                let others: Vec<usize> = (0..n_screws).filter(|i| !goal_idx.contains(i)).collect();
                let (sx, sy) = pos[others[rng.random_range(0..others.len())]];
                (sx, sy)
            }
            _ => (rng.random_range(0.5..9.5), rng.random_range(0.5..9.5)),
        };
        init.insert(Object::new("gripper", "gripper"), vec![gx, gy, 0.0]);
        let goal: BTreeSet<_> = goal_idx
            .iter()
            .map(|&i| atom(&self.predicates, "ScrewInReceptacle", &[&screws[i], &receptacle]))
            .collect();
        Task::new(init, goal)
    }

    fn oracle_action(&self, task: &Task, x: &State) -> Option<Action> {
        let g = objects_of(x, "gripper").next()?;
        let atom = task.goal.iter().find(|a| !screw_in_receptacle(x, &a.args))?;
        let (s, r) = (&atom.args[0], &atom.args[1]);
        if holding_screw(x, &[g.clone(), s.clone()]) {
            if above_receptacle(x, &[g.clone(), r.clone()]) {
                return Some(Action::new("DemagnetizeGripper", &[g], vec![]));
            }
            return Some(Action::new("MoveToReceptacle", &[g, r], vec![]));
        }
        if objects_of(x, "screw").any(|o| feat(x, o, HELD) > 0.5) {
            return Some(Action::new("DemagnetizeGripper", &[g], vec![]));
        }
        if pickable(x, &[g.clone(), s.clone()]) {
            return Some(Action::new("MagnetizeGripper", &[g], vec![]));
        }
        Some(Action::new("MoveToScrew", &[g, s], vec![]))
    }

    fn oracle_thetas(&self, _x: &State, _controller: &str, _args: &[Object]) -> Vec<Vec<f64>> {
        vec![vec![]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_state() -> State {
        let mut s = State::new();
        s.insert(Object::new("gripper", "gripper"), vec![1.0, 1.0, 0.0]);
        s.insert(Object::new("receptacle", "receptacle"), vec![8.0, 8.0]);
        s.insert(Object::new("screw0", "screw"), vec![5.0, 5.0, 0.0]);
        s.insert(Object::new("screw1", "screw"), vec![5.3, 5.2, 0.0]);
        s.insert(Object::new("screw2", "screw"), vec![2.0, 7.0, 0.0]);
        s
    }

    #[test]
    fn magnetize_far_from_screws_only_sets_flag() {
        let env = Screws::new();
        let s = base_state();
        let g = Object::new("gripper", "gripper");
        let next = env
            .simulate(&s, &Action::new("MagnetizeGripper", &[&g], vec![]))
            .unwrap();
        let mut expected = s.clone();
        expected.get_mut(&g).unwrap()[MAGNETIZED] = 1.0;
        assert_eq!(next, expected);
        assert!(env
            .abstract_state(&next)
            .iter()
            .all(|a| &*a.predicate.name != "HoldingScrew"));
    }

    #[test]
    fn magnetize_near_two_screws_holds_both() {
        let env = Screws::new();
        let g = Object::new("gripper", "gripper");
        let s0 = Object::new("screw0", "screw");
        let x = env
            .simulate(&base_state(), &Action::new("MoveToScrew", &[&g, &s0], vec![]))
            .unwrap();
        let x = env
            .simulate(&x, &Action::new("MagnetizeGripper", &[&g], vec![]))
            .unwrap();
        let held = env
            .abstract_state(&x)
            .iter()
            .filter(|a| &*a.predicate.name == "HoldingScrew")
            .count();
        assert_eq!(held, 2);
    }

    #[test]
    fn oracle_single_goal_is_four_steps_when_isolated() {
        let env = Screws::new();
        let init = base_state();
        let s2 = Object::new("screw2", "screw");
        let r = Object::new("receptacle", "receptacle");
        let goal = [atom(&env.predicates, "ScrewInReceptacle", &[&s2, &r])].into();
        let demo = env.oracle_solve(&Task::new(init, goal)).unwrap();
        let names: Vec<&str> = demo.actions.iter().map(|a| &*a.controller).collect();
        assert_eq!(
            names,
            [
                "MoveToScrew",
                "MagnetizeGripper",
                "MoveToReceptacle",
                "DemagnetizeGripper"
            ]
        );
    }
}
