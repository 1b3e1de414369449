use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{atom, feat, objects_of, Action, ControllerSpec, Environment, PredicateDef, State, Task, TaskScale};
use crate::symbolic::{ObjType, Object, Predicate};

// satellite features
const SX: usize = 0;
const SY: usize = 1;
const INSTRUMENT: usize = 3;
const CALIBRATION_ID: usize = 4;
const IS_CALIBRATED: usize = 5;
const READ_ID: usize = 6;
const SHOOTS_X: usize = 7;
const SHOOTS_Y: usize = 8;
// object features
const ID: usize = 0;
const OX: usize = 1;
const OY: usize = 2;
const HAS_X: usize = 3;
const HAS_Y: usize = 4;

pub const SIGHT_RANGE: f64 = 1.2;
pub const SIGHT_CLEARANCE: f64 = 0.3;
pub const COLLISION_RADIUS: f64 = 0.5;
const VIEW_DISTANCE: f64 = 0.6;
const VIEW_ANGLES: usize = 12;
const WORLD_MAX: f64 = 10.0;
/// More than twice the sight range, so no position sees two objects.
const OBJECT_SEPARATION: f64 = 2.5;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Instrument {
    Camera,
    Infrared,
    Geiger,
}

impl Instrument {
    fn of(x: &State, s: &Object) -> Self {
        let v = feat(x, s, INSTRUMENT);
        if v < 0.25 {
            Instrument::Camera
        } else if v < 0.75 {
            Instrument::Infrared
        } else {
            Instrument::Geiger
        }
    }

    fn encode(self) -> f64 {
        match self {
            Instrument::Camera => 0.0,
            Instrument::Infrared => 0.5,
            Instrument::Geiger => 1.0,
        }
    }

    fn reading_predicate(self) -> &'static str {
        match self {
            Instrument::Camera => "CameraReadingTaken",
            Instrument::Infrared => "InfraredReadingTaken",
            Instrument::Geiger => "GeigerReadingTaken",
        }
    }
}

fn sat_pos(x: &State, s: &Object) -> (f64, f64) {
    (feat(x, s, SX), feat(x, s, SY))
}

fn obj_pos(x: &State, o: &Object) -> (f64, f64) {
    (feat(x, o, OX), feat(x, o, OY))
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - (a.0 + t * dx)).hypot(p.1 - (a.1 + t * dy))
}

fn sees_from(x: &State, s: &Object, from: (f64, f64), o: &Object) -> bool {
    let target = obj_pos(x, o);
    if (from.0 - target.0).hypot(from.1 - target.1) > SIGHT_RANGE {
        return false;
    }
    objects_of(x, "satellite")
        .filter(|other| *other != s)
        .all(|other| point_segment_distance(sat_pos(x, other), from, target) > SIGHT_CLEARANCE)
}

fn sees(x: &State, args: &[Object]) -> bool {
    sees_from(x, &args[0], sat_pos(x, &args[0]), &args[1])
}

fn calibration_target(x: &State, args: &[Object]) -> bool {
    feat(x, &args[0], CALIBRATION_ID) == feat(x, &args[1], ID)
}

fn is_calibrated(x: &State, args: &[Object]) -> bool {
    feat(x, &args[0], IS_CALIBRATED) > 0.5
}

fn has_camera(x: &State, args: &[Object]) -> bool {
    Instrument::of(x, &args[0]) == Instrument::Camera
}

fn has_infrared(x: &State, args: &[Object]) -> bool {
    Instrument::of(x, &args[0]) == Instrument::Infrared
}

fn has_geiger(x: &State, args: &[Object]) -> bool {
    Instrument::of(x, &args[0]) == Instrument::Geiger
}

fn shoots_chem_x(x: &State, args: &[Object]) -> bool {
    feat(x, &args[0], SHOOTS_X) > 0.5
}

fn shoots_chem_y(x: &State, args: &[Object]) -> bool {
    feat(x, &args[0], SHOOTS_Y) > 0.5
}

fn has_chem_x(x: &State, args: &[Object]) -> bool {
    feat(x, &args[0], HAS_X) > 0.5
}

fn has_chem_y(x: &State, args: &[Object]) -> bool {
    feat(x, &args[0], HAS_Y) > 0.5
}

fn reading_taken(x: &State, args: &[Object], instrument: Instrument) -> bool {
    Instrument::of(x, &args[0]) == instrument && feat(x, &args[0], READ_ID) == feat(x, &args[1], ID)
}

fn camera_reading(x: &State, args: &[Object]) -> bool {
    reading_taken(x, args, Instrument::Camera)
}

fn infrared_reading(x: &State, args: &[Object]) -> bool {
    reading_taken(x, args, Instrument::Infrared)
}

fn geiger_reading(x: &State, args: &[Object]) -> bool {
    reading_taken(x, args, Instrument::Geiger)
}

/// Satellites in the plane taking instrument readings of objects. Readings
/// need calibration, line of sight, and for some instruments a chemical shot
/// onto the object first.
pub struct Satellites {
    types: Vec<ObjType>,
    predicates: Vec<PredicateDef>,
    controllers: Vec<ControllerSpec>,
}

impl Default for Satellites {
    fn default() -> Self {
        Self::new()
    }
}

impl Satellites {
    pub fn new() -> Self {
        let def = |name: &str, types: &[&str], holds| PredicateDef {
            predicate: Predicate::new(name, types),
            holds,
        };
        Self {
            types: vec![
                ObjType::new(
                    "satellite",
                    &[
                        "x",
                        "y",
                        "theta",
                        "instrument",
                        "calibration_obj_id",
                        "is_calibrated",
                        "read_obj_id",
                        "shoots_chem_x",
                        "shoots_chem_y",
                    ],
                ),
                ObjType::new("object", &["id", "x", "y", "has_chem_x", "has_chem_y"]),
            ],
            predicates: vec![
                def("Sees", &["satellite", "object"], sees),
                def("CalibrationTarget", &["satellite", "object"], calibration_target),
                def("IsCalibrated", &["satellite"], is_calibrated),
                def("HasCamera", &["satellite"], has_camera),
                def("HasInfrared", &["satellite"], has_infrared),
                def("HasGeiger", &["satellite"], has_geiger),
                def("ShootsChemX", &["satellite"], shoots_chem_x),
                def("ShootsChemY", &["satellite"], shoots_chem_y),
                def("HasChemX", &["object"], has_chem_x),
                def("HasChemY", &["object"], has_chem_y),
                def("CameraReadingTaken", &["satellite", "object"], camera_reading),
                def("InfraredReadingTaken", &["satellite", "object"], infrared_reading),
                def("GeigerReadingTaken", &["satellite", "object"], geiger_reading),
            ],
            controllers: vec![
                ControllerSpec::new("MoveTo", &["satellite", "object"], 2),
                ControllerSpec::new("Calibrate", &["satellite", "object"], 0),
                ControllerSpec::new("ShootChemX", &["satellite", "object"], 0),
                ControllerSpec::new("ShootChemY", &["satellite", "object"], 0),
                ControllerSpec::new("UseInstrument", &["satellite", "object"], 0),
            ],
        }
    }
}

fn position_free(x: &State, s: &Object, p: (f64, f64)) -> bool {
    let in_bounds = (0.0..=WORLD_MAX).contains(&p.0) && (0.0..=WORLD_MAX).contains(&p.1);
    in_bounds
        && objects_of(x, "satellite").filter(|o| *o != s).all(|o| {
            let q = sat_pos(x, o);
            (q.0 - p.0).hypot(q.1 - p.1) >= COLLISION_RADIUS
        })
}

/// Valid viewing positions around `o` for `s`, nearest to the satellite's
/// line of approach first.
fn view_positions(x: &State, s: &Object, o: &Object) -> Vec<(f64, f64)> {
    let (ox, oy) = obj_pos(x, o);
    let (sx, sy) = sat_pos(x, s);
    let base = (sy - oy).atan2(sx - ox);
    let step = 2.0 * PI / VIEW_ANGLES as f64;
    (0..VIEW_ANGLES as i64)
        .map(|k| {
            // 0, +1, -1, +2, -2, ...
            let offset = if k % 2 == 1 { (k + 1) / 2 } else { -(k / 2) };
            let a = base + step * offset as f64;
            (ox + VIEW_DISTANCE * a.cos(), oy + VIEW_DISTANCE * a.sin())
        })
        .filter(|&p| position_free(x, s, p) && sees_from(x, s, p, o))
        .collect()
}

impl Environment for Satellites {
    fn name(&self) -> &str {
        "satellites"
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
        let (s, o) = (&u.args[0], &u.args[1]);
        match &*u.controller {
            "MoveTo" => {
                let p = (u.theta[0], u.theta[1]);
                if position_free(x, s, p) {
                    let sv = next.get_mut(s).expect("satellite");
                    sv[SX] = p.0;
                    sv[SY] = p.1;
                }
            }
            "Calibrate" => {
                if sees(x, &u.args) && calibration_target(x, &u.args) {
                    next.get_mut(s).expect("satellite")[IS_CALIBRATED] = 1.0;
                }
            }
            "ShootChemX" => {
                if sees(x, &u.args) && shoots_chem_x(x, &u.args) {
                    next.get_mut(o).expect("object")[HAS_X] = 1.0;
                }
            }
            "ShootChemY" => {
                if sees(x, &u.args) && shoots_chem_y(x, &u.args) {
                    next.get_mut(o).expect("object")[HAS_Y] = 1.0;
                }
            }
            "UseInstrument" => {
                let chem_ok = match Instrument::of(x, s) {
                    Instrument::Camera => has_chem_x(x, std::slice::from_ref(o)),
                    Instrument::Infrared => has_chem_y(x, std::slice::from_ref(o)),
                    Instrument::Geiger => true,
                };
                if sees(x, &u.args) && is_calibrated(x, &u.args) && chem_ok {
                    next.get_mut(s).expect("satellite")[READ_ID] = feat(x, o, ID);
                }
            }
            _ => {}
        }
        next
    }

    fn sample_task(&self, scale: TaskScale, rng: &mut ChaCha8Rng) -> Task {
        let (n_sats, n_objs, n_goal) = match scale {
            TaskScale::Train => (2, rng.random_range(2..=3), rng.random_range(1..=2)),
            TaskScale::Eval => (3, rng.random_range(3..=5), rng.random_range(2..=3)),
        };
        let mut obj_pos: Vec<(f64, f64)> = Vec::new();
        while obj_pos.len() < n_objs {
            let p = (
                rng.random_range(1.5..WORLD_MAX - 1.5),
                rng.random_range(1.5..WORLD_MAX - 1.5),
            );
            if obj_pos
                .iter()
                .all(|q| (q.0 - p.0).hypot(q.1 - p.1) >= OBJECT_SEPARATION)
            {
                obj_pos.push(p);
            }
        }
        let mut sat_pos: Vec<(f64, f64)> = Vec::new();
        while sat_pos.len() < n_sats {
            let p = (
                rng.random_range(0.5..WORLD_MAX - 0.5),
                rng.random_range(0.5..WORLD_MAX - 0.5),
            );
            let clear_sats = sat_pos.iter().all(|q| (q.0 - p.0).hypot(q.1 - p.1) >= 1.0);
            let clear_objs = obj_pos
                .iter()
                .all(|q| (q.0 - p.0).hypot(q.1 - p.1) > SIGHT_RANGE + SIGHT_CLEARANCE);
            if clear_sats && clear_objs {
                sat_pos.push(p);
            }
        }
        let instruments: Vec<Instrument> = (0..n_sats)
            .map(|_| match rng.random_range(0..3) {
                0 => Instrument::Camera,
                1 => Instrument::Infrared,
                _ => Instrument::Geiger,
            })
            .collect();
        let mut shoots: Vec<(bool, bool)> = (0..n_sats)
            .map(|_| (rng.random_bool(0.5), rng.random_bool(0.5)))
            .collect();
        let goal_sats: Vec<usize> = {
            let mut idx: Vec<usize> = (0..n_sats).collect();
            for i in (1..n_sats).rev() {
                idx.swap(i, rng.random_range(0..=i));
            }
            idx.truncate(n_goal);
            idx
        };
        if goal_sats.iter().any(|&i| instruments[i] == Instrument::Camera) && !shoots.iter().any(|s| s.0) {
            let i = rng.random_range(0..n_sats);
            shoots[i].0 = true;
        }
        if goal_sats.iter().any(|&i| instruments[i] == Instrument::Infrared) && !shoots.iter().any(|s| s.1) {
            let i = rng.random_range(0..n_sats);
            shoots[i].1 = true;
        }

        let objects: Vec<Object> = (0..n_objs).map(|i| Object::new(&format!("obj{i}"), "object")).collect();
        let sats: Vec<Object> = (0..n_sats)
            .map(|i| Object::new(&format!("sat{i}"), "satellite"))
            .collect();
        let mut init = State::new();
        for (i, (o, p)) in objects.iter().zip(&obj_pos).enumerate() {
            init.insert(o.clone(), vec![i as f64, p.0, p.1, 0.0, 0.0]);
        }
        for (i, s) in sats.iter().enumerate() {
            let calibration = rng.random_range(0..n_objs) as f64;
            let flag = |b: bool| if b { 1.0 } else { 0.0 };
            init.insert(
                s.clone(),
                vec![
                    sat_pos[i].0,
                    sat_pos[i].1,
                    0.0,
                    instruments[i].encode(),
                    calibration,
                    0.0,
                    -1.0,
                    flag(shoots[i].0),
                    flag(shoots[i].1),
                ],
            );
        }
        let goal: BTreeSet<_> = goal_sats
            .iter()
            .map(|&i| {
                let o = &objects[rng.random_range(0..n_objs)];
                atom(&self.predicates, instruments[i].reading_predicate(), &[&sats[i], o])
            })
            .collect();
        Task::new(init, goal)
    }

    fn oracle_action(&self, task: &Task, x: &State) -> Option<Action> {
        let goal_atom = task.goal.iter().find(|a| {
            let instrument = Instrument::of(x, &a.args[0]);
            !reading_taken(x, &a.args, instrument)
        })?;
        let (s, o) = (&goal_atom.args[0], &goal_atom.args[1]);
        let approach = |sat: &Object, target: &Object, controller: &str| -> Option<Action> {
            let pair = [sat.clone(), target.clone()];
            if sees(x, &pair) {
                return Some(Action::new(controller, &[sat, target], vec![]));
            }
            let p = *view_positions(x, sat, target).first()?;
            Some(Action::new("MoveTo", &[sat, target], vec![p.0, p.1]))
        };
        if !is_calibrated(x, std::slice::from_ref(s)) {
            let target = objects_of(x, "object").find(|c| calibration_target(x, &[s.clone(), (*c).clone()]))?;
            return approach(s, target, "Calibrate");
        }
        let chem = match Instrument::of(x, s) {
            Instrument::Camera if !has_chem_x(x, std::slice::from_ref(o)) => Some((SHOOTS_X, "ShootChemX")),
            Instrument::Infrared if !has_chem_y(x, std::slice::from_ref(o)) => Some((SHOOTS_Y, "ShootChemY")),
            _ => None,
        };
        if let Some((flag, controller)) = chem {
            let shooter = objects_of(x, "satellite").find(|c| feat(x, c, flag) > 0.5)?;
            return approach(shooter, o, controller);
        }
        approach(s, o, "UseInstrument")
    }

    fn oracle_thetas(&self, x: &State, controller: &str, args: &[Object]) -> Vec<Vec<f64>> {
        match controller {
            "MoveTo" => view_positions(x, &args[0], &args[1])
                .into_iter()
                .map(|p| vec![p.0, p.1])
                .collect(),
            _ => vec![vec![]],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn calibrate_requires_matching_target() {
        let env = Satellites::new();
        let mut x = State::new();
        let s = Object::new("sat0", "satellite");
        let o0 = Object::new("obj0", "object");
        let o1 = Object::new("obj1", "object");
        x.insert(s.clone(), vec![5.0, 5.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0]);
        x.insert(o0.clone(), vec![0.0, 5.5, 5.0, 0.0, 0.0]);
        x.insert(o1.clone(), vec![1.0, 4.5, 5.0, 0.0, 0.0]);
        let wrong = env.simulate(&x, &Action::new("Calibrate", &[&s, &o0], vec![])).unwrap();
        assert!(!is_calibrated(&wrong, std::slice::from_ref(&s)));
        let right = env.simulate(&x, &Action::new("Calibrate", &[&s, &o1], vec![])).unwrap();
        assert!(is_calibrated(&right, &[s]));
    }

    #[test]
    fn sight_blocked_by_other_satellite() {
        let mut x = State::new();
        let s0 = Object::new("sat0", "satellite");
        let s1 = Object::new("sat1", "satellite");
        let o = Object::new("obj0", "object");
        x.insert(s0.clone(), vec![3.0, 5.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        x.insert(s1.clone(), vec![4.0, 5.1, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        x.insert(o.clone(), vec![0.0, 4.8, 5.0, 0.0, 0.0]);
        assert!(!sees(&x, &[s0.clone(), o.clone()]));
        assert!(sees(&x, &[s1, o]));
    }

    #[test]
    fn oracle_solves_sampled_tasks() {
        let env = Satellites::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for scale in [TaskScale::Train, TaskScale::Eval] {
            for _ in 0..100 {
                let task = env.sample_task(scale, &mut rng);
                env.oracle_solve(&task).unwrap();
            }
        }
    }
}
