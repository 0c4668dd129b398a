//! Deterministic 2.5-D tabletop world.
//!
//! Objects are rigid footprints resting on the table or on each other.
//! Pick-and-place primitives transport objects kinematically: a pick within
//! `grasp_tolerance` of a graspable object's center moves it to the place
//! pose, where it comes to rest on whatever is underneath.

mod render;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use render::{render, CameraConfig, CameraMode};

use crate::registry::{Registry, Shape};
use crate::seed;
use crate::taskspec::{
    self, has_errors, sample_scene, Diagnostic, PlacementError, Predicate, Referent, Relation,
    TaskSpec,
};

/// Height comparisons for "rests on".
const Z_EPS: f64 = 1e-6;
const XY_EPS: f64 = 1e-9;

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a - 2.0 * PI * ((a + PI) / (2.0 * PI)).floor();
    if r <= -PI {
        r += 2.0 * PI;
    }
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        (
            x.clamp(self.x_min, self.x_max),
            y.clamp(self.y_min, self.y_max),
        )
    }
}

/// 0.5 m x 0.5 m centered at the origin.
pub const DEFAULT_WORKSPACE: Rect = Rect {
    x_min: -0.25,
    y_min: -0.25,
    x_max: 0.25,
    y_max: 0.25,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grasp_tolerance: f64,
    pub clearance: f64,
    /// Allowed yaw error for insertion into a slot.
    pub yaw_tolerance: f64,
    pub workspace: Rect,
    pub z_max: f64,
    pub home: Gripper,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grasp_tolerance: 0.02,
            clearance: taskspec::DEFAULT_CLEARANCE,
            yaw_tolerance: 0.05,
            workspace: DEFAULT_WORKSPACE,
            z_max: 0.3,
            home: Gripper {
                x: 0.0,
                y: -0.2,
                z: 0.25,
                yaw: 0.0,
                closed: false,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub name: String,
    pub class: String,
    pub shape: Shape,
    pub pose: Pose2,
    /// Height of the object's base above the table.
    pub z: f64,
    pub footprint_radius: f64,
    pub height: f64,
    pub color: [u8; 3],
    pub graspable: bool,
}

impl ObjectInstance {
    pub fn top(&self) -> f64 {
        self.z + self.height
    }

    pub fn covers(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.pose.x, y - self.pose.y);
        dx * dx + dy * dy <= self.footprint_radius * self.footprint_radius + XY_EPS
    }

    fn distance_to(&self, x: f64, y: f64) -> f64 {
        (x - self.pose.x).hypot(y - self.pose.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gripper {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionPrimitive {
    pub pick_pose: Pose2,
    pub place_pose: Pose2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grip {
    Open,
    Close,
    Hold,
}

/// Continuous end-effector command used by teleoperation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperCommand {
    pub dpos: [f64; 3],
    pub drot: [f64; 3],
    pub grip: Grip,
}

impl GripperCommand {
    pub const IDLE: GripperCommand = GripperCommand {
        dpos: [0.0; 3],
        drot: [0.0; 3],
        grip: Grip::Hold,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub width: usize,
    pub height: usize,
    /// Row-major (height, width, 3).
    pub rgb: Vec<u8>,
    /// Row-major (height, width), meters from the camera.
    pub depth: Vec<f32>,
    pub object_poses: Vec<ObjectPose>,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// Whether the action changed any object.
    pub effective: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("task spec failed validation: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidSpec(Vec<Diagnostic>),
    #[error("UNKNOWN_CLASS: '{0}' is not in the object registry")]
    UnknownClass(String),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error("action pose ({x}, {y}) lies outside the workspace")]
    OutOfWorkspace { x: f64, y: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub objects: Vec<ObjectInstance>,
    pub gripper: Gripper,
    pub held: Option<String>,
    pub step_index: u64,
    pub seed: u64,
    pub rng: ChaCha8Rng,
    pub spec: Arc<TaskSpec>,
    pub config: Arc<SimConfig>,
    pub camera: CameraConfig,
    /// Most goal predicates ever satisfied at once this episode.
    progress: usize,
}

/// Resets with the built-in registry and default simulator settings.
pub fn reset(
    spec: &TaskSpec,
    seed: u64,
    camera: &CameraConfig,
) -> Result<(WorldState, Observation), SimError> {
    reset_with(
        spec,
        seed,
        camera,
        &Registry::builtin(),
        &SimConfig::default(),
    )
}

pub fn reset_with(
    spec: &TaskSpec,
    seed: u64,
    camera: &CameraConfig,
    registry: &Registry,
    config: &SimConfig,
) -> Result<(WorldState, Observation), SimError> {
    let diags = taskspec::validate(spec);
    if has_errors(&diags) {
        return Err(SimError::InvalidSpec(
            diags.into_iter().filter(Diagnostic::is_error).collect(),
        ));
    }
    let scene = sample_scene(spec, seed, config.clearance)?;

    let mut objects = Vec::with_capacity(spec.objects.len());
    for inst in &spec.objects {
        let info = registry
            .get(&inst.class)
            .ok_or_else(|| SimError::UnknownClass(inst.class.clone()))?;
        let pose = scene
            .get(&inst.name)
            .map(|p| Pose2::new(p.x, p.y, p.yaw))
            .unwrap_or(Pose2::new(0.0, 0.0, 0.0));
        objects.push(ObjectInstance {
            name: inst.name.clone(),
            class: inst.class.clone(),
            shape: info.shape,
            pose,
            z: 0.0,
            footprint_radius: info.footprint_radius,
            height: info.height,
            color: info.color,
            graspable: info.is_graspable(),
        });
    }

    // Stacked objects take their support's pose; validation rules out cycles.
    let mut settled: Vec<bool> = spec
        .objects
        .iter()
        .map(|o| scene.get(&o.name).is_some())
        .collect();
    while settled.iter().any(|s| !s) {
        let mut progressed = false;
        for i in 0..objects.len() {
            if settled[i] {
                continue;
            }
            let target = spec
                .init_placement(&objects[i].name)
                .and_then(Predicate::target)
                .expect("validated placement");
            let j = objects
                .iter()
                .position(|o| o.name == target)
                .expect("validated support");
            if settled[j] {
                objects[i].pose = objects[j].pose;
                objects[i].z = objects[j].top();
                settled[i] = true;
                progressed = true;
            }
        }
        assert!(progressed, "validated placements are acyclic");
    }

    let mut state = WorldState {
        objects,
        gripper: config.home,
        held: None,
        step_index: 0,
        seed,
        rng: seed::rng(seed::splitmix64(seed)),
        spec: Arc::new(spec.clone()),
        config: Arc::new(config.clone()),
        camera: camera.clone(),
        progress: 0,
    };
    state.progress = state.satisfied_count();
    let obs = state.observe();
    Ok((state, obs))
}

pub fn check_success(state: &WorldState) -> bool {
    state.check_success()
}

impl WorldState {
    pub fn object(&self, name: &str) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn object_mut(&mut self, name: &str) -> Option<&mut ObjectInstance> {
        self.objects.iter_mut().find(|o| o.name == name)
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    pub fn observe(&self) -> Observation {
        let (rgb, depth) = render(self, &self.camera);
        Observation {
            width: self.camera.width,
            height: self.camera.height,
            rgb,
            depth,
            object_poses: self
                .objects
                .iter()
                .map(|o| ObjectPose {
                    name: o.name.clone(),
                    x: o.pose.x,
                    y: o.pose.y,
                    yaw: o.pose.yaw,
                })
                .collect(),
            instruction: self.spec.language_instruction.clone(),
        }
    }

    /// Draws a fresh seed from the world's generator.
    pub fn next_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Highest top surface covering (x, y), ignoring `exclude`; the table is 0.
    fn support_at(&self, x: f64, y: f64, exclude: Option<usize>) -> (f64, Option<usize>) {
        let mut best = (0.0, None);
        for (i, o) in self.objects.iter().enumerate() {
            if Some(i) == exclude || self.held.as_deref() == Some(o.name.as_str()) {
                continue;
            }
            if o.covers(x, y) && o.top() > best.0 {
                best = (o.top(), Some(i));
            }
        }
        best
    }

    fn rests_on(&self, upper: &ObjectInstance, lower: &ObjectInstance) -> bool {
        (upper.z - lower.top()).abs() <= Z_EPS && lower.covers(upper.pose.x, upper.pose.y)
    }

    fn is_clear(&self, i: usize) -> bool {
        let lower = &self.objects[i];
        self.objects
            .iter()
            .enumerate()
            .all(|(j, o)| j == i || !self.rests_on(o, lower))
    }

    /// The top-most graspable object within grasp tolerance of (x, y).
    fn grasp_candidate(&self, x: f64, y: f64) -> Option<usize> {
        let tol = self.config.grasp_tolerance;
        self.objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.graspable && o.distance_to(x, y) <= tol + XY_EPS)
            .max_by(|(ia, a), (ib, b)| {
                a.top()
                    .total_cmp(&b.top())
                    .then(b.distance_to(x, y).total_cmp(&a.distance_to(x, y)))
                    .then(ib.cmp(ia))
            })
            .map(|(i, _)| i)
            .filter(|&i| self.is_clear(i))
    }

    /// A larger disk may never rest on a smaller one.
    fn placement_allowed(&self, moving: usize, support: Option<usize>) -> bool {
        let m = &self.objects[moving];
        match support.map(|s| &self.objects[s]) {
            Some(s) if m.shape == Shape::Disk && s.shape == Shape::Disk => {
                m.footprint_radius <= s.footprint_radius
            }
            _ => true,
        }
    }

    fn transport(&mut self, action: &ActionPrimitive) -> bool {
        let Some(i) = self.grasp_candidate(action.pick_pose.x, action.pick_pose.y) else {
            return false;
        };
        let o = &self.objects[i];
        let dyaw = action.place_pose.yaw - action.pick_pose.yaw;
        let (s, c) = dyaw.sin_cos();
        let (ox, oy) = (o.pose.x - action.pick_pose.x, o.pose.y - action.pick_pose.y);
        let nx = action.place_pose.x + c * ox - s * oy;
        let ny = action.place_pose.y + s * ox + c * oy;
        let (z, support) = self.support_at(nx, ny, Some(i));
        if !self.placement_allowed(i, support) {
            return false;
        }
        let o = &mut self.objects[i];
        o.pose = Pose2::new(nx, ny, wrap_angle(o.pose.yaw + dyaw));
        o.z = z;
        true
    }

    fn finish_step(&mut self, effective: bool) -> StepOutcome {
        let total = self.spec.goal_conditions.len();
        let satisfied = self.satisfied_count();
        let reward = if satisfied > self.progress && total > 0 {
            let r = (satisfied - self.progress) as f64 / total as f64;
            self.progress = satisfied;
            r
        } else {
            0.0
        };
        StepOutcome {
            observation: self.observe(),
            reward,
            done: self.check_success(),
            effective,
        }
    }

    /// Executes one pick-and-place primitive. A pick that misses every
    /// object, or a placement that breaks the disk-ordering rule, leaves the
    /// scene unchanged and earns no reward.
    pub fn step(&mut self, action: &ActionPrimitive) -> Result<StepOutcome, SimError> {
        for p in [action.pick_pose, action.place_pose] {
            if !self.config.workspace.contains(p.x, p.y) {
                return Err(SimError::OutOfWorkspace { x: p.x, y: p.y });
            }
        }
        self.step_index += 1;
        let effective = self.transport(action);
        self.gripper = Gripper {
            x: action.place_pose.x,
            y: action.place_pose.y,
            z: self.gripper.z,
            yaw: action.place_pose.yaw,
            closed: false,
        };
        Ok(self.finish_step(effective))
    }

    /// Applies a continuous gripper command (one control tick). Closing the
    /// gripper within grasp tolerance of a free object attaches it; opening
    /// releases it onto whatever lies underneath.
    pub fn apply_command(&mut self, cmd: &GripperCommand) -> StepOutcome {
        self.step_index += 1;
        let ws = self.config.workspace;
        let (x, y) = ws.clamp(self.gripper.x + cmd.dpos[0], self.gripper.y + cmd.dpos[1]);
        let z = (self.gripper.z + cmd.dpos[2]).clamp(0.0, self.config.z_max);
        let dyaw = cmd.drot[2];
        self.gripper.x = x;
        self.gripper.y = y;
        self.gripper.z = z;
        self.gripper.yaw = wrap_angle(self.gripper.yaw + dyaw);

        let mut effective = false;
        if let Some(i) = self.held.as_deref().and_then(|h| self.index_of(h)) {
            let (support, _) = self.support_at(x, y, Some(i));
            let o = &mut self.objects[i];
            o.pose = Pose2::new(x, y, wrap_angle(o.pose.yaw + dyaw));
            o.z = z.max(support);
            effective = true;
        }

        match cmd.grip {
            Grip::Close if !self.gripper.closed => {
                self.gripper.closed = true;
                if let Some(i) = self.grasp_candidate(x, y) {
                    let o = &mut self.objects[i];
                    o.pose.x = x;
                    o.pose.y = y;
                    self.held = Some(o.name.clone());
                    effective = true;
                }
            }
            Grip::Open if self.gripper.closed => {
                match self.held.as_deref().and_then(|h| self.index_of(h)) {
                    Some(i) => {
                        let (o_x, o_y) = (self.objects[i].pose.x, self.objects[i].pose.y);
                        let (support_z, support) = self.support_at(o_x, o_y, Some(i));
                        if self.placement_allowed(i, support) {
                            self.objects[i].z = support_z;
                            self.held = None;
                            self.gripper.closed = false;
                            effective = true;
                        }
                    }
                    None => self.gripper.closed = false,
                }
            }
            _ => {}
        }
        self.finish_step(effective)
    }

    pub fn check_success(&self) -> bool {
        self.spec.goal_conditions.iter().all(|p| self.holds(p))
    }

    pub fn satisfied_count(&self) -> usize {
        self.spec
            .goal_conditions
            .iter()
            .filter(|p| self.holds(p))
            .count()
    }

    /// Only On and In are evaluated; other relations never hold.
    pub fn holds(&self, pred: &Predicate) -> bool {
        if !matches!(pred.relation, Relation::On | Relation::In) {
            return false;
        }
        let Some(subject) = self.object(pred.subject()) else {
            return false;
        };
        if self.held.as_deref() == Some(subject.name.as_str()) {
            return false;
        }
        let Some(target) = pred.target() else {
            return false;
        };
        match self.spec.resolve(target) {
            Some(Referent::Region(r)) => r.ranges.contains(subject.pose.x, subject.pose.y),
            Some(Referent::Object(_)) => {
                let Some(base) = self.object(target) else {
                    return false;
                };
                if self.held.as_deref() == Some(base.name.as_str())
                    || !base.covers(subject.pose.x, subject.pose.y)
                {
                    return false;
                }
                match pred.relation {
                    Relation::On => (subject.z - base.top()).abs() <= Z_EPS,
                    _ if base.shape == Shape::Slot => {
                        wrap_angle(subject.pose.yaw - base.pose.yaw).abs()
                            <= self.config.yaw_tolerance
                    }
                    _ => true,
                }
            }
            Some(Referent::Fixture(_)) => pred.relation == Relation::On && subject.z <= Z_EPS,
            None => false,
        }
    }
}
