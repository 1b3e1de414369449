use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{atom, feat, objects_of, Action, ControllerSpec, Environment, PredicateDef, State, Task, TaskScale};
use crate::symbolic::{ObjType, Object, Predicate};

const X: usize = 0;
const GRASPED: usize = 1;

pub const NEXT_TO_RADIUS: f64 = 0.5;
const WORLD_MIN: f64 = 0.0;
const WORLD_MAX: f64 = 20.0;
const GOAL_SEPARATION: f64 = 1.2;

fn next_to(x: &State, args: &[Object]) -> bool {
    (feat(x, &args[0], X) - feat(x, &args[1], X)).abs() <= NEXT_TO_RADIUS
}

fn next_to_nothing(x: &State, args: &[Object]) -> bool {
    let r = &args[0];
    objects_of(x, "dot").all(|d| !next_to(x, &[r.clone(), d.clone()]))
}

fn grasped(x: &State, args: &[Object]) -> bool {
    feat(x, &args[1], GRASPED) > 0.5
}

/// A robot on a line grasping dots among clutter. A single controller moves
/// (`move_or_grasp < 0.5`) or grasps every dot within reach of the target.
pub struct Cluttered1D {
    types: Vec<ObjType>,
    predicates: Vec<PredicateDef>,
    controllers: Vec<ControllerSpec>,
}

impl Default for Cluttered1D {
    fn default() -> Self {
        Self::new()
    }
}

impl Cluttered1D {
    pub fn new() -> Self {
        Self {
            types: vec![ObjType::new("robot", &["x"]), ObjType::new("dot", &["x", "grasped"])],
            predicates: vec![
                PredicateDef {
                    predicate: Predicate::new("NextTo", &["robot", "dot"]),
                    holds: next_to,
                },
                PredicateDef {
                    predicate: Predicate::new("NextToNothing", &["robot"]),
                    holds: next_to_nothing,
                },
                PredicateDef {
                    predicate: Predicate::new("Grasped", &["robot", "dot"]),
                    holds: grasped,
                },
            ],
            controllers: vec![ControllerSpec::new("MoveGrasp", &["robot", "dot"], 2)],
        }
    }
}

impl Environment for Cluttered1D {
    fn name(&self) -> &str {
        "cluttered1d"
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
        let (r, d) = (&u.args[0], &u.args[1]);
        if u.theta[0] < 0.5 {
            let target = u.theta[1];
            if (WORLD_MIN..=WORLD_MAX).contains(&target) {
                next.get_mut(r).expect("robot in state")[X] = target;
            }
        } else if next_to(x, &[r.clone(), d.clone()]) {
            for dot in objects_of(x, "dot") {
                if next_to(x, &[r.clone(), dot.clone()]) {
                    next.get_mut(dot).expect("dot in state")[GRASPED] = 1.0;
                }
            }
        }
        next
    }

    fn sample_task(&self, scale: TaskScale, rng: &mut ChaCha8Rng) -> Task {
        let (n_dots, n_goal) = match scale {
            TaskScale::Train => (rng.random_range(3..=5), rng.random_range(1..=2)),
            TaskScale::Eval => (rng.random_range(6..=10), rng.random_range(2..=4)),
        };
        let mut goal_x: Vec<f64> = Vec::new();
        while goal_x.len() < n_goal {
            let x = rng.random_range(0.5..WORLD_MAX - 0.5);
            if goal_x.iter().all(|g| (g - x).abs() >= GOAL_SEPARATION) {
                goal_x.push(x);
            }
        }
        let mut xs = goal_x.clone();
        for _ in n_goal..n_dots {
            let x = if rng.random_bool(0.5) {
                let anchor = goal_x[rng.random_range(0..n_goal)];
                let offset = rng.random_range(0.1..0.45);
                if rng.random_bool(0.5) {
                    anchor + offset
                } else {
                    anchor - offset
                }
            } else {
                rng.random_range(0.5..WORLD_MAX - 0.5)
            };
            xs.push(x);
        }
        // shuffle so goal dots are not always the lowest-numbered
        let mut order: Vec<usize> = (0..n_dots).collect();
        for i in (1..n_dots).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let robot = Object::new("robot", "robot");
        let mut init = State::new();
        init.insert(robot.clone(), vec![rng.random_range(0.5..WORLD_MAX - 0.5)]);
        let mut goal = BTreeSet::new();
        for (slot, &i) in order.iter().enumerate() {
            let d = Object::new(&format!("dot{slot}"), "dot");
            init.insert(d.clone(), vec![xs[i], 0.0]);
            if i < n_goal {
                goal.insert(atom(&self.predicates, "Grasped", &[&robot, &d]));
            }
        }
        Task::new(init, goal)
    }

    fn oracle_action(&self, task: &Task, x: &State) -> Option<Action> {
        let robot = objects_of(x, "robot").next()?;
        let target = task.goal.iter().find(|a| !grasped(x, &a.args)).map(|a| &a.args[1])?;
        if next_to(x, &[robot.clone(), target.clone()]) {
            Some(Action::new(
                "MoveGrasp",
                &[robot, target],
                vec![0.75, feat(x, robot, X)],
            ))
        } else {
            Some(Action::new(
                "MoveGrasp",
                &[robot, target],
                vec![0.25, feat(x, target, X)],
            ))
        }
    }

    fn oracle_thetas(&self, x: &State, _controller: &str, args: &[Object]) -> Vec<Vec<f64>> {
        vec![vec![0.25, feat(x, &args[1], X)], vec![0.75, feat(x, &args[0], X)]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn state(robot_x: f64, dots: &[(f64, f64)]) -> State {
        let mut s = State::new();
        s.insert(Object::new("robot", "robot"), vec![robot_x]);
        for (i, &(x, g)) in dots.iter().enumerate() {
            s.insert(Object::new(&format!("dot{i}"), "dot"), vec![x, g]);
        }
        s
    }

    #[test]
    fn next_to_classifier() {
        let env = Cluttered1D::new();
        let s = state(1.0, &[(1.0, 0.0), (3.0, 0.0)]);
        let abs = env.abstract_state(&s);
        let names: Vec<String> = abs.iter().map(|a| a.to_string()).collect();
        assert_eq!(names, ["NextTo(robot, dot0)"]);
    }

    #[test]
    fn move_branch_sets_position() {
        let env = Cluttered1D::new();
        let s = state(1.0, &[(1.0, 0.0)]);
        let r = Object::new("robot", "robot");
        let d = Object::new("dot0", "dot");
        let u = Action::new("MoveGrasp", &[&r, &d], vec![0.2, 3.5]);
        let next = env.simulate(&s, &u).unwrap();
        assert_eq!(next[&r], vec![3.5]);
        let out = Action::new("MoveGrasp", &[&r, &d], vec![0.2, 25.0]);
        assert_eq!(env.simulate(&s, &out).unwrap(), s);
    }

    #[test]
    fn grasp_takes_every_reachable_dot() {
        let env = Cluttered1D::new();
        let s = state(2.0, &[(2.2, 0.0), (1.7, 0.0), (5.0, 0.0)]);
        let r = Object::new("robot", "robot");
        let d = Object::new("dot0", "dot");
        let next = env
            .simulate(&s, &Action::new("MoveGrasp", &[&r, &d], vec![0.9, 0.0]))
            .unwrap();
        let grasped: Vec<f64> = next.values().filter(|v| v.len() == 2).map(|v| v[1]).collect();
        assert_eq!(grasped, [1.0, 1.0, 0.0]);
    }

    #[test]
    fn task_ranges() {
        let env = Cluttered1D::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = env.sample_task(TaskScale::Train, &mut rng);
            let dots = t.objects.iter().filter(|o| &*o.ty == "dot").count();
            assert!((3..=5).contains(&dots));
            assert!((1..=2).contains(&t.goal.len()));
            let t = env.sample_task(TaskScale::Eval, &mut rng);
            let dots = t.objects.iter().filter(|o| &*o.ty == "dot").count();
            assert!((6..=10).contains(&dots));
            assert!((2..=4).contains(&t.goal.len()));
        }
    }
}
