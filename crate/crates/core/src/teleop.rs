//! Human teleoperation sessions.
//!
//! A session owns one world and advances it one control tick at a time from
//! operator input. The episode is kept in memory until the goal has held
//! for `debounce_steps` consecutive ticks, at which point it is written to
//! `<session>/tmp/` in the recorder layout. Network code talks to a session
//! only through the message types at the bottom of this module.

use std::fs;
use std::path::{Path, PathBuf};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::generate::ENV_CONFIG_FILE;
use crate::recorder::{self, canonical_json, RecorderError, StepRecord};
use crate::registry::Registry;
use crate::simworld::{
    self, CameraConfig, Grip, Gripper, GripperCommand, Observation, Rect, SimConfig, SimError,
    WorldState,
};
use crate::taskspec::TaskSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleopConfig {
    /// Control ticks per simulated second.
    pub control_freq: f64,
    /// Meters per unit of translational input.
    pub pos_sensitivity: f64,
    /// Radians per unit of rotational input.
    pub rot_sensitivity: f64,
    pub debounce_steps: u32,
    /// Largest translation per tick along any axis, meters.
    pub max_step: f64,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        Self {
            control_freq: 20.0,
            pos_sensitivity: 0.01,
            rot_sensitivity: 0.05,
            debounce_steps: 10,
            max_step: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("control_freq must be positive")]
    ControlFreq,
    #[error("debounce_steps must be at least 1")]
    Debounce,
    #[error("max_step must be positive")]
    MaxStep,
}

impl TeleopConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.control_freq > 0.0) {
            return Err(ConfigError::ControlFreq);
        }
        if self.debounce_steps < 1 {
            return Err(ConfigError::Debounce);
        }
        if !(self.max_step > 0.0) {
            return Err(ConfigError::MaxStep);
        }
        Ok(())
    }

    pub fn tick_seconds(&self) -> f64 {
        1.0 / self.control_freq
    }
}

/// One sample of operator input; every axis is in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceInput {
    pub dpos: [f64; 3],
    pub drot: [f64; 3],
    pub grip: Grip,
}

impl DeviceInput {
    pub const IDLE: DeviceInput = DeviceInput {
        dpos: [0.0; 3],
        drot: [0.0; 3],
        grip: Grip::Hold,
    };

    /// Clamps every axis into [-1, 1]; non-finite values become 0.
    pub fn sanitized(self) -> Self {
        let fix = |v: f64| {
            if v.is_finite() {
                v.clamp(-1.0, 1.0)
            } else {
                0.0
            }
        };
        Self {
            dpos: self.dpos.map(fix),
            drot: self.drot.map(fix),
            grip: self.grip,
        }
    }
}

/// Scales input into a gripper command. Each translation component is
/// clamped to `max_step` and the resulting position to the workspace.
pub fn input_to_action(
    input: &DeviceInput,
    config: &TeleopConfig,
    gripper: &Gripper,
    workspace: &Rect,
    z_max: f64,
) -> GripperCommand {
    let input = input.sanitized();
    let d = input
        .dpos
        .map(|v| (v * config.pos_sensitivity).clamp(-config.max_step, config.max_step));
    let (x, y) = workspace.clamp(gripper.x + d[0], gripper.y + d[1]);
    let z = (gripper.z + d[2]).clamp(0.0, z_max);
    GripperCommand {
        dpos: [x - gripper.x, y - gripper.y, z - gripper.z],
        drot: input.drot.map(|v| v * config.rot_sensitivity),
        grip: input.grip,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Running,
    Debouncing,
    Saved,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlCmd {
    Reset,
    Discard,
    SaveRequest,
}

#[derive(Debug, thiserror::Error)]
pub enum TeleopError {
    #[error("INVALID_TRANSITION: {cmd:?} is not allowed in phase {phase:?}")]
    InvalidTransition { phase: Phase, cmd: ControlCmd },
    #[error("INVALID_TRANSITION: cannot tick in phase {0:?}")]
    NotRunning(Phase),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Record(#[from] RecorderError),
    #[error("IO_FAILURE: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// The control transition table. Reset is always allowed; discard only
/// while an episode is in progress; a save request only once saved.
pub fn transition(phase: Phase, cmd: ControlCmd) -> Result<Phase, TeleopError> {
    use ControlCmd::*;
    use Phase::*;
    match (phase, cmd) {
        (_, Reset) => Ok(Running),
        (Running | Debouncing, Discard) => Ok(Discarded),
        (Saved, SaveRequest) => Ok(Saved),
        _ => Err(TeleopError::InvalidTransition { phase, cmd }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub phase: Phase,
    pub success_streak: u32,
    pub tick: u64,
    pub episode_buffer: Vec<StepRecord>,
}

impl Default for SessionState {
    fn default() -> Self {
        Self {
            phase: Phase::Idle,
            success_streak: 0,
            tick: 0,
            episode_buffer: Vec::new(),
        }
    }
}

impl SessionState {
    /// Feeds one success flag to the debouncer. Returns true on the tick
    /// the episode becomes saved.
    pub fn observe_success(&mut self, success: bool, debounce_steps: u32) -> bool {
        if !matches!(self.phase, Phase::Running | Phase::Debouncing) {
            return false;
        }
        if !success {
            self.success_streak = 0;
            self.phase = Phase::Running;
            return false;
        }
        self.success_streak += 1;
        if self.success_streak >= debounce_steps {
            self.phase = Phase::Saved;
            true
        } else {
            self.phase = Phase::Debouncing;
            false
        }
    }
}

/// A live teleoperation session bound to one task and one output folder.
pub struct TeleopSession {
    pub config: TeleopConfig,
    pub spec: TaskSpec,
    pub camera: CameraConfig,
    pub state: SessionState,
    pub world: WorldState,
    pub observation: Observation,
    /// Reward earned by the most recent tick.
    pub last_reward: f64,
    dir: PathBuf,
    sim: SimConfig,
    registry: Registry,
    next_episode: u64,
    last_saved: Option<u64>,
}

impl TeleopSession {
    pub fn new(
        spec: TaskSpec,
        config: TeleopConfig,
        camera: CameraConfig,
        session_dir: impl Into<PathBuf>,
        seed: u64,
    ) -> Result<Self, TeleopError> {
        Self::with_registry(spec, config, camera, session_dir, seed, Registry::builtin())
    }

    pub fn with_registry(
        spec: TaskSpec,
        config: TeleopConfig,
        camera: CameraConfig,
        session_dir: impl Into<PathBuf>,
        seed: u64,
        registry: Registry,
    ) -> Result<Self, TeleopError> {
        let sim = SimConfig::default();
        let (world, observation) = simworld::reset_with(&spec, seed, &camera, &registry, &sim)?;
        Ok(Self {
            config,
            spec,
            camera,
            state: SessionState::default(),
            world,
            observation,
            last_reward: 0.0,
            dir: session_dir.into(),
            sim,
            registry,
            next_episode: 0,
            last_saved: None,
        })
    }

    /// Where saved episodes are written, in the recorder layout.
    pub fn tmp_dir(&self) -> PathBuf {
        self.dir.join("tmp")
    }

    pub fn last_saved_episode(&self) -> Option<u64> {
        self.last_saved
    }

    pub fn sim_time(&self) -> f64 {
        self.state.tick as f64 / self.config.control_freq
    }

    fn info(&self, success: bool) -> Value {
        json!({
            "source": "teleop",
            "spec_name": self.spec.problem_name,
            "seed": self.world.seed,
            "episode": self.next_episode,
            "step": self.state.tick,
            "tick": self.state.tick,
            "sim_time": self.sim_time(),
            "instruction": self.observation.instruction,
            "object_poses": self.observation.object_poses,
            "gripper": self.world.gripper,
            "success": success,
        })
    }

    /// Advances the world by one control tick.
    pub fn tick(&mut self, input: &DeviceInput) -> Result<&Observation, TeleopError> {
        if !matches!(self.state.phase, Phase::Running | Phase::Debouncing) {
            return Err(TeleopError::NotRunning(self.state.phase));
        }
        let cmd = input_to_action(
            input,
            &self.config,
            &self.world.gripper,
            &self.sim.workspace,
            self.sim.z_max,
        );
        let success_before = self.world.check_success();
        let record = StepRecord::from_observation(
            self.next_episode,
            self.state.tick as u32,
            &self.observation,
            Some(cmd.into()),
            self.last_reward as f32,
            self.info(success_before),
        );
        self.state.episode_buffer.push(record);

        let out = self.world.apply_command(&cmd);
        self.observation = out.observation;
        self.last_reward = out.reward;
        self.state.tick += 1;
        if self
            .state
            .observe_success(self.world.check_success(), self.config.debounce_steps)
        {
            self.flush()?;
        }
        Ok(&self.observation)
    }

    fn flush(&mut self) -> Result<(), TeleopError> {
        let terminal = StepRecord::from_observation(
            self.next_episode,
            self.state.tick as u32,
            &self.observation,
            None,
            self.last_reward as f32,
            self.info(true),
        );
        self.state.episode_buffer.push(terminal);
        let tmp = self.tmp_dir();
        fs::create_dir_all(&tmp).map_err(|source| TeleopError::Io {
            path: tmp.clone(),
            source,
        })?;
        let env_path = tmp.join(ENV_CONFIG_FILE);
        if !env_path.exists() {
            let env = json!({
                "source": "teleop",
                "teleop": self.config,
                "camera": self.camera,
                "sim": self.sim,
                "spec_name": self.spec.problem_name,
            });
            fs::write(&env_path, canonical_json(&env)).map_err(|source| TeleopError::Io {
                path: env_path.clone(),
                source,
            })?;
        }
        for r in &self.state.episode_buffer {
            recorder::save_step(&tmp, r)?;
        }
        self.last_saved = Some(self.next_episode);
        self.next_episode += 1;
        Ok(())
    }

    pub fn control(&mut self, cmd: ControlCmd) -> Result<Phase, TeleopError> {
        let next = transition(self.state.phase, cmd)?;
        match cmd {
            ControlCmd::Reset => {
                let seed = self.world.next_seed();
                let (world, obs) = simworld::reset_with(
                    &self.spec,
                    seed,
                    &self.camera,
                    &self.registry,
                    &self.sim,
                )?;
                self.world = world;
                self.observation = obs;
                self.last_reward = 0.0;
                self.state = SessionState {
                    phase: next,
                    ..SessionState::default()
                };
            }
            ControlCmd::Discard => {
                self.state.episode_buffer.clear();
                self.state.success_streak = 0;
                self.state.phase = next;
            }
            ControlCmd::SaveRequest => {}
        }
        Ok(next)
    }

    pub fn frame(&self) -> ServerMessage {
        let colors = |name: &str| {
            self.world
                .object(name)
                .map(|o| o.color)
                .unwrap_or([0, 0, 0])
        };
        ServerMessage::Frame(Frame {
            tick: self.state.tick,
            rgb_png_b64: png_base64(
                self.observation.width,
                self.observation.height,
                &self.observation.rgb,
            ),
            objects: self
                .observation
                .object_poses
                .iter()
                .map(|p| FrameObject {
                    name: p.name.clone(),
                    x: p.x,
                    y: p.y,
                    yaw: p.yaw,
                    color: colors(&p.name),
                })
                .collect(),
            reward: self.last_reward,
            success_streak: self.state.success_streak,
            debounce_steps: self.config.debounce_steps,
            phase: self.state.phase,
            instruction: self.observation.instruction.clone(),
            gripper: self.world.gripper,
            sim_time: self.sim_time(),
        })
    }

    pub fn session_dir(&self) -> &Path {
        &self.dir
    }
}

pub fn png_base64(width: usize, height: usize, rgb: &[u8]) -> String {
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("in-memory png");
        w.write_image_data(rgb).expect("in-memory png");
    }
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObject {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub tick: u64,
    pub rgb_png_b64: String,
    pub objects: Vec<FrameObject>,
    pub reward: f64,
    pub success_streak: u32,
    pub debounce_steps: u32,
    pub phase: Phase,
    pub instruction: String,
    pub gripper: Gripper,
    pub sim_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame(Frame),
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Input(DeviceInput),
    Control { cmd: ControlCmd },
}

/// Drives place-red-in-green from frame messages alone: hover over the next
/// red object outside the green container, close, carry it to the container
/// center, open. Used by demos and protocol tests.
#[derive(Debug, Clone)]
pub struct ScriptedOperator {
    pub pos_sensitivity: f64,
    /// Distance at which the gripper counts as arrived, meters.
    pub tolerance: f64,
}

impl ScriptedOperator {
    pub fn new(config: &TeleopConfig) -> Self {
        Self {
            pos_sensitivity: config.pos_sensitivity,
            tolerance: 1e-6,
        }
    }

    fn steer(&self, frame: &Frame, x: f64, y: f64) -> Option<DeviceInput> {
        let (dx, dy) = (x - frame.gripper.x, y - frame.gripper.y);
        if dx.hypot(dy) <= self.tolerance {
            return None;
        }
        let axis = |d: f64| (d / self.pos_sensitivity).clamp(-1.0, 1.0);
        Some(DeviceInput {
            dpos: [axis(dx), axis(dy), 0.0],
            ..DeviceInput::IDLE
        })
    }

    pub fn next_input(&self, frame: &Frame) -> DeviceInput {
        let bowl = frame.objects.iter().find(|o| {
            let [r, g, b] = o.color.map(f64::from);
            g >= 120.0 && g > 1.5 * r.max(b)
        });
        let Some(bowl) = bowl else {
            return DeviceInput::IDLE;
        };
        let grip = |grip| DeviceInput {
            grip,
            ..DeviceInput::IDLE
        };
        if frame.gripper.closed {
            return self
                .steer(frame, bowl.x, bowl.y)
                .unwrap_or(grip(Grip::Open));
        }
        let pending = frame.objects.iter().find(|o| {
            let [r, g, b] = o.color.map(f64::from);
            let red = r >= 150.0 && g < 0.4 * r && b < 0.4 * r;
            red && (o.x - bowl.x).hypot(o.y - bowl.y) > 0.01
        });
        match pending {
            Some(o) => self.steer(frame, o.x, o.y).unwrap_or(grip(Grip::Close)),
            None => DeviceInput::IDLE,
        }
    }
}
