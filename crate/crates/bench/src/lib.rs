//! Shared fixtures for the criterion benchmarks.

use std::path::Path;

use demoforge_core::generate::record_episode;
use demoforge_core::recorder::{load_episode, StepRecord};
use demoforge_core::{CameraConfig, Registry, TaskKind};

/// Records one pyramid episode under `root` and loads it back.
pub fn pyramid_records(root: &Path, camera: &CameraConfig) -> Vec<StepRecord> {
    let spec = TaskKind::StackBlockPyramid.spec();
    record_episode(
        root,
        TaskKind::StackBlockPyramid,
        &spec,
        0,
        1,
        camera,
        &Registry::builtin(),
        32,
    )
    .expect("oracle episode");
    load_episode(root, 0).expect("recorded episode")
}

/// A smooth joint trajectory of `steps` rows for an `n`-link chain.
pub fn joint_sweep(n: usize, steps: usize) -> Vec<Vec<f64>> {
    (0..steps)
        .map(|t| (0..n).map(|j| ((t + j) as f64 * 0.05).sin()).collect())
        .collect()
}
