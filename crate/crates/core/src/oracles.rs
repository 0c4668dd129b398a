//! Scripted expert policies with privileged access to object poses, and a
//! harness that measures their success rate.
//!
//! Each oracle plans a full primitive sequence when it is built and then
//! replays it. If the world did not change after an emitted primitive, the
//! oracle replans from the observed poses.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::registry::{Registry, Shape};
use crate::seed;
use crate::simworld::{
    self, wrap_angle, ActionPrimitive, CameraConfig, ObjectPose, Observation, Pose2, SimConfig,
    SimError, WorldState,
};
use crate::tasks::TaskKind;
use crate::taskspec::{Referent, TaskSpec};

/// Primitive budget per harness episode.
pub const DEFAULT_MAX_STEPS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("NO_ACTION: the oracle has nothing left to do")]
    NoAction,
}

/// Static per-object facts the oracle reads once from the world.
#[derive(Debug, Clone, PartialEq)]
struct CatalogEntry {
    name: String,
    shape: Shape,
    color: [u8; 3],
    radius: f64,
    graspable: bool,
}

#[derive(Debug, Clone)]
pub struct OracleState {
    pub task_kind: TaskKind,
    pub plan: Vec<ActionPrimitive>,
    pub plan_cursor: usize,
    catalog: Vec<CatalogEntry>,
    spec: Arc<TaskSpec>,
    /// Poses observed when the previous primitive was emitted.
    last_poses: Option<Vec<ObjectPose>>,
}

impl OracleState {
    pub fn new(task_kind: TaskKind, world: &WorldState) -> Self {
        let catalog = world
            .objects
            .iter()
            .map(|o| CatalogEntry {
                name: o.name.clone(),
                shape: o.shape,
                color: o.color,
                radius: o.footprint_radius,
                graspable: o.graspable,
            })
            .collect();
        let mut oracle = Self {
            task_kind,
            plan: Vec::new(),
            plan_cursor: 0,
            catalog,
            spec: Arc::clone(&world.spec),
            last_poses: None,
        };
        let poses: Vec<ObjectPose> = world
            .objects
            .iter()
            .map(|o| ObjectPose {
                name: o.name.clone(),
                x: o.pose.x,
                y: o.pose.y,
                yaw: o.pose.yaw,
            })
            .collect();
        oracle.plan = oracle.make_plan(&poses);
        oracle
    }

    pub fn act(&mut self, obs: &Observation) -> Result<ActionPrimitive, OracleError> {
        if self.last_poses.as_ref() == Some(&obs.object_poses) {
            self.plan = self.make_plan(&obs.object_poses);
            self.plan_cursor = 0;
        }
        let action = *self
            .plan
            .get(self.plan_cursor)
            .ok_or(OracleError::NoAction)?;
        self.plan_cursor += 1;
        self.last_poses = Some(obs.object_poses.clone());
        Ok(action)
    }

    fn make_plan(&self, poses: &[ObjectPose]) -> Vec<ActionPrimitive> {
        let pose = |name: &str| {
            poses
                .iter()
                .find(|p| p.name == name)
                .map(|p| Pose2::new(p.x, p.y, p.yaw))
        };
        match self.task_kind {
            TaskKind::BlockInsertion => self.plan_insertion(&pose),
            TaskKind::PlaceRedInGreen => self.plan_red_in_green(&pose),
            TaskKind::TowersOfHanoi => self.plan_hanoi(&pose),
            TaskKind::StackBlockPyramid => self.plan_pyramid(&pose),
        }
    }

    fn plan_insertion(&self, pose: &dyn Fn(&str) -> Option<Pose2>) -> Vec<ActionPrimitive> {
        let find = |shape| self.catalog.iter().find(|c| c.shape == shape);
        let (Some(block), Some(slot)) = (find(Shape::LBlock), find(Shape::Slot)) else {
            return Vec::new();
        };
        let (Some(b), Some(s)) = (pose(&block.name), pose(&slot.name)) else {
            return Vec::new();
        };
        let seated = (b.x - s.x).hypot(b.y - s.y) < 1e-9 && wrap_angle(b.yaw - s.yaw).abs() < 1e-9;
        if seated {
            return Vec::new();
        }
        vec![ActionPrimitive {
            pick_pose: b,
            place_pose: s,
        }]
    }

    fn plan_red_in_green(&self, pose: &dyn Fn(&str) -> Option<Pose2>) -> Vec<ActionPrimitive> {
        let Some(bowl) = self
            .catalog
            .iter()
            .find(|c| c.shape == Shape::Container && is_green(c.color))
        else {
            return Vec::new();
        };
        let Some(center) = pose(&bowl.name) else {
            return Vec::new();
        };
        self.catalog
            .iter()
            .filter(|c| c.graspable && is_red(c.color))
            .filter_map(|c| pose(&c.name))
            .filter(|p| (p.x - center.x).hypot(p.y - center.y) > bowl.radius)
            .map(|p| ActionPrimitive {
                pick_pose: p,
                place_pose: Pose2::new(center.x, center.y, p.yaw),
            })
            .collect()
    }

    fn plan_hanoi(&self, pose: &dyn Fn(&str) -> Option<Pose2>) -> Vec<ActionPrimitive> {
        let pegs: Vec<Pose2> = self
            .catalog
            .iter()
            .filter(|c| c.shape == Shape::Peg)
            .filter_map(|c| pose(&c.name))
            .collect();
        if pegs.len() != 3 {
            return Vec::new();
        }
        // Disks smallest first.
        let mut disks: Vec<(&CatalogEntry, Pose2)> = self
            .catalog
            .iter()
            .filter(|c| c.shape == Shape::Disk)
            .filter_map(|c| pose(&c.name).map(|p| (c, p)))
            .collect();
        disks.sort_by(|a, b| a.0.radius.total_cmp(&b.0.radius));
        let nearest_peg = |p: &Pose2| {
            (0..3)
                .min_by(|&i, &j| {
                    let di = (pegs[i].x - p.x).hypot(pegs[i].y - p.y);
                    let dj = (pegs[j].x - p.x).hypot(pegs[j].y - p.y);
                    di.total_cmp(&dj)
                })
                .unwrap()
        };
        let Some(target) = self.goal_peg(&pegs) else {
            return Vec::new();
        };
        let mut at: Vec<usize> = disks.iter().map(|(_, p)| nearest_peg(p)).collect();
        let mut moves = Vec::new();
        move_tower(disks.len(), target, &mut at, &mut moves);

        let mut current: Vec<Pose2> = disks.iter().map(|(_, p)| *p).collect();
        moves
            .into_iter()
            .map(|(disk, to)| {
                let from = current[disk];
                let dest = Pose2::new(pegs[to].x, pegs[to].y, from.yaw);
                current[disk] = dest;
                ActionPrimitive {
                    pick_pose: from,
                    place_pose: dest,
                }
            })
            .collect()
    }

    /// The peg lying in (or named by) the first goal's target.
    fn goal_peg(&self, pegs: &[Pose2]) -> Option<usize> {
        let goal = self.spec.goal_conditions.first()?;
        let target = goal.target()?;
        match self.spec.resolve(target)? {
            Referent::Region(r) => pegs.iter().position(|p| r.ranges.contains(p.x, p.y)),
            Referent::Object(_) => {
                let named: Vec<&CatalogEntry> = self
                    .catalog
                    .iter()
                    .filter(|c| c.shape == Shape::Peg)
                    .collect();
                named.iter().position(|c| c.name == target)
            }
            Referent::Fixture(_) => None,
        }
    }

    /// Bottom row into the goal regions left to right, then each higher
    /// layer straddling the two supports beneath it.
    fn plan_pyramid(&self, pose: &dyn Fn(&str) -> Option<Pose2>) -> Vec<ActionPrimitive> {
        let mut layers: Vec<Vec<(String, f64, f64)>> = Vec::new();
        let mut bottom: Vec<(String, f64, f64)> = Vec::new();
        for g in &self.spec.goal_conditions {
            if let Some(Referent::Region(r)) = g.target().and_then(|t| self.spec.resolve(t)) {
                let (x, y) = r.ranges.center();
                bottom.push((g.subject().to_string(), x, y));
            }
        }
        bottom.sort_by(|a, b| a.1.total_cmp(&b.1));
        layers.push(bottom);
        loop {
            let below = layers.last().unwrap();
            let mut next: Vec<(String, f64, f64)> = Vec::new();
            for g in &self.spec.goal_conditions {
                let Some(support) = g.target() else { continue };
                let Some(k) = below.iter().position(|b| b.0 == support) else {
                    continue;
                };
                let (x, y) = match (below.get(k + 1), k.checked_sub(1).map(|j| &below[j])) {
                    (Some(right), _) => {
                        ((below[k].1 + right.1) / 2.0, (below[k].2 + right.2) / 2.0)
                    }
                    (None, Some(left)) => {
                        ((below[k].1 + left.1) / 2.0, (below[k].2 + left.2) / 2.0)
                    }
                    (None, None) => (below[k].1, below[k].2),
                };
                next.push((g.subject().to_string(), x, y));
            }
            if next.is_empty() {
                break;
            }
            next.sort_by(|a, b| a.1.total_cmp(&b.1));
            layers.push(next);
        }

        layers
            .into_iter()
            .flatten()
            .filter_map(|(name, x, y)| {
                let p = pose(&name)?;
                let placed = (p.x - x).hypot(p.y - y) < 1e-9 && p.yaw.abs() < 1e-9;
                (!placed).then_some(ActionPrimitive {
                    pick_pose: p,
                    place_pose: Pose2::new(x, y, 0.0),
                })
            })
            .collect()
    }
}

fn is_red(c: [u8; 3]) -> bool {
    let r = c[0] as f64;
    r >= 150.0 && (c[1] as f64) < 0.4 * r && (c[2] as f64) < 0.4 * r
}

fn is_green(c: [u8; 3]) -> bool {
    let g = c[1] as f64;
    g >= 120.0 && g > 1.5 * c[0].max(c[2]) as f64
}

/// Moves the `k` smallest disks onto `target` from any legal configuration.
fn move_tower(k: usize, target: usize, at: &mut [usize], moves: &mut Vec<(usize, usize)>) {
    if k == 0 {
        return;
    }
    let d = k - 1;
    if at[d] == target {
        move_tower(d, target, at, moves);
        return;
    }
    let spare = 3 - at[d] - target;
    move_tower(d, spare, at, moves);
    moves.push((d, target));
    at[d] = target;
    move_tower(d, target, at, moves);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub task_kind: TaskKind,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub success: bool,
    pub steps: usize,
    pub total_reward: f64,
}

/// Runs one oracle episode to completion or to `max_steps` primitives.
pub fn run_episode(
    task: TaskKind,
    spec: &TaskSpec,
    seed: u64,
    camera: &CameraConfig,
    registry: &Registry,
    max_steps: usize,
) -> Result<EpisodeSummary, SimError> {
    let (mut world, mut obs) =
        simworld::reset_with(spec, seed, camera, registry, &SimConfig::default())?;
    let mut oracle = OracleState::new(task, &world);
    let mut steps = 0;
    let mut total_reward = 0.0;
    let mut done = world.check_success();
    while !done && steps < max_steps {
        let Ok(action) = oracle.act(&obs) else { break };
        let out = world.step(&action)?;
        steps += 1;
        total_reward += out.reward;
        done = out.done;
        obs = out.observation;
    }
    Ok(EpisodeSummary {
        success: done,
        steps,
        total_reward,
    })
}

pub fn run_harness(task: TaskKind, episodes: usize, seed: u64) -> Result<HarnessReport, SimError> {
    run_harness_with(
        task,
        &task.spec(),
        episodes,
        seed,
        &CameraConfig::default(),
        &Registry::builtin(),
    )
}

pub fn run_harness_with(
    task: TaskKind,
    spec: &TaskSpec,
    episodes: usize,
    seed: u64,
    camera: &CameraConfig,
    registry: &Registry,
) -> Result<HarnessReport, SimError> {
    let results: Vec<EpisodeSummary> = (0..episodes as u64)
        .into_par_iter()
        .map(|ep| {
            let s = seed::episode_seed(seed, task.index(), ep);
            run_episode(task, spec, s, camera, registry, DEFAULT_MAX_STEPS)
        })
        .collect::<Result<_, _>>()?;
    let successes = results.iter().filter(|r| r.success).count();
    let steps: usize = results.iter().map(|r| r.steps).sum();
    let n = episodes.max(1) as f64;
    Ok(HarnessReport {
        task_kind: task,
        episodes,
        successes,
        success_rate: successes as f64 / n,
        mean_steps: steps as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskspec::parse_task_spec;

    fn start(task: TaskKind, seed: u64) -> (WorldState, Observation, OracleState) {
        let (w, o) = simworld::reset(&task.spec(), seed, &CameraConfig::with_size(32, 24)).unwrap();
        let oracle = OracleState::new(task, &w);
        (w, o, oracle)
    }

    fn hanoi_spec(n: usize) -> TaskSpec {
        let sizes = ["large", "medium", "small"];
        let used = &sizes[3 - n..];
        let objects: String = used
            .iter()
            .map(|s| format!("hanoi_disk_{s}_1 - hanoi_disk_{s}\n"))
            .collect();
        let mut init = format!("(On hanoi_disk_{}_1 hanoi_peg_1)\n", used[0]);
        for w in used.windows(2) {
            init += &format!("(On hanoi_disk_{}_1 hanoi_disk_{}_1)\n", w[1], w[0]);
        }
        let goal: String = used
            .iter()
            .map(|s| format!("(On hanoi_disk_{s}_1 table_peg_region_3)\n"))
            .collect();
        parse_task_spec(&format!(
            "(define (problem hanoi_{n}) (:domain tabletop)
               (:regions
                 (peg_region_1 (:target table) (:ranges ((-0.13 -0.06 -0.11 -0.04))))
                 (peg_region_2 (:target table) (:ranges ((-0.01 -0.06 0.01 -0.04))))
                 (peg_region_3 (:target table) (:ranges ((0.11 -0.06 0.13 -0.04)))))
               (:fixtures table - table)
               (:objects hanoi_peg_1 hanoi_peg_2 hanoi_peg_3 - hanoi_peg {objects})
               (:init (On hanoi_peg_1 table_peg_region_1) (On hanoi_peg_2 table_peg_region_2)
                      (On hanoi_peg_3 table_peg_region_3) {init})
               (:goal (And {goal})))"
        ))
        .unwrap()
    }

    fn no_disk_on_smaller(w: &WorldState) -> bool {
        w.objects
            .iter()
            .filter(|a| a.shape == Shape::Disk)
            .all(|a| {
                w.objects
                    .iter()
                    .filter(|b| b.shape == Shape::Disk)
                    .all(|b| {
                        let rests = (a.z - b.top()).abs() < 1e-9 && b.covers(a.pose.x, a.pose.y);
                        !rests || a.footprint_radius <= b.footprint_radius
                    })
            })
    }

    #[test]
    fn move_tower_closed_form() {
        for n in 1..=8 {
            let mut at = vec![0; n];
            let mut moves = Vec::new();
            move_tower(n, 2, &mut at, &mut moves);
            assert_eq!(moves.len(), (1 << n) - 1);
            assert!(at.iter().all(|&p| p == 2));
        }
    }

    #[test]
    fn hanoi_is_optimal_and_legal() {
        for n in 1..=3 {
            let spec = hanoi_spec(n);
            for seed in 0..5 {
                let (mut w, mut obs) =
                    simworld::reset(&spec, seed, &CameraConfig::with_size(32, 24)).unwrap();
                let mut oracle = OracleState::new(TaskKind::TowersOfHanoi, &w);
                let mut steps = 0;
                while let Ok(a) = oracle.act(&obs) {
                    let out = w.step(&a).unwrap();
                    assert!(out.effective);
                    assert!(no_disk_on_smaller(&w));
                    steps += 1;
                    obs = out.observation;
                    if out.done {
                        break;
                    }
                }
                assert!(w.check_success());
                assert_eq!(steps, (1 << n) - 1, "n = {n}");
            }
        }
    }

    #[test]
    fn block_insertion_in_one_primitive() {
        for seed in 0..20 {
            let (mut w, obs, mut oracle) = start(TaskKind::BlockInsertion, seed);
            let out = w.step(&oracle.act(&obs).unwrap()).unwrap();
            assert!(out.done && w.check_success());
            assert_eq!(oracle.act(&out.observation), Err(OracleError::NoAction));
        }
    }

    #[test]
    fn red_in_green_finishes_then_has_nothing_to_do() {
        let (mut w, mut obs, mut oracle) = start(TaskKind::PlaceRedInGreen, 11);
        while let Ok(a) = oracle.act(&obs) {
            obs = w.step(&a).unwrap().observation;
        }
        assert!(w.check_success());
        assert_eq!(w.step_index, 2);
        let mut fresh = OracleState::new(TaskKind::PlaceRedInGreen, &w);
        assert!(fresh.plan.is_empty());
        assert_eq!(fresh.act(&obs), Err(OracleError::NoAction));
    }

    #[test]
    fn pyramid_rewards_are_sixths() {
        let (mut w, mut obs, mut oracle) = start(TaskKind::StackBlockPyramid, 3);
        let mut rewards = Vec::new();
        while let Ok(a) = oracle.act(&obs) {
            let out = w.step(&a).unwrap();
            rewards.push(out.reward);
            obs = out.observation;
        }
        assert_eq!(rewards.len(), 6);
        for r in &rewards {
            assert!((r - 1.0 / 6.0).abs() < 1e-12);
        }
        assert!(w.check_success());
    }

    #[test]
    fn replans_after_a_wasted_primitive() {
        let (mut w, obs, mut oracle) = start(TaskKind::PlaceRedInGreen, 2);
        let first = oracle.act(&obs).unwrap();
        // The primitive "fails": execute a miss instead.
        let miss = Pose2::new(0.24, -0.24, 0.0);
        let out = w
            .step(&ActionPrimitive {
                pick_pose: miss,
                place_pose: miss,
            })
            .unwrap();
        assert!(!out.effective);
        let mut obs = out.observation;
        assert_eq!(oracle.act(&obs).unwrap(), first);
        assert_eq!(oracle.plan_cursor, 1);
        obs = w.step(&first).unwrap().observation;
        while let Ok(a) = oracle.act(&obs) {
            obs = w.step(&a).unwrap().observation;
        }
        assert!(w.check_success());
    }

    #[test]
    fn identical_worlds_give_identical_plans() {
        for task in TaskKind::ALL {
            let (w, _, a) = start(task, 8);
            let b = OracleState::new(task, &w);
            assert_eq!(a.plan, b.plan);
        }
    }

    #[test]
    fn harness_is_deterministic_and_succeeds() {
        for task in TaskKind::ALL {
            let a = run_harness(task, 20, 42).unwrap();
            assert_eq!(a, run_harness(task, 20, 42).unwrap());
            assert_eq!(a.success_rate, 1.0, "{task}");
        }
        let one = run_harness(TaskKind::BlockInsertion, 1, 0).unwrap();
        assert!(one.success_rate == 0.0 || one.success_rate == 1.0);
        assert_eq!(
            run_harness(TaskKind::StackBlockPyramid, 10, 5)
                .unwrap()
                .mean_steps,
            6.0
        );
    }
}
