//! Core library for building manipulation demonstration datasets: task
//! specifications, a deterministic tabletop world, scripted oracles,
//! per-step episode recording, teleoperation sessions, dataset containers
//! and cross-embodiment action normalization.

pub mod aggregator;
pub mod array;
pub mod generate;
pub mod oracles;
pub mod recorder;
pub mod registry;
pub mod seed;
pub mod simworld;
pub mod tasks;
pub mod taskspec;
pub mod teleop;
pub mod xembody;

pub use registry::{ClassInfo, Registry, Shape};
pub use simworld::{ActionPrimitive, CameraConfig, Observation, Pose2, WorldState};
pub use tasks::TaskKind;
pub use taskspec::{Diagnostic, TaskSpec};
