//! Oracle demonstration generation: for each task and episode, reset the
//! world, let the oracle act until the goal holds, and record every step.
//!
//! Step `t` stores the observation at `t`, the action taken from it and the
//! reward that led to it, so an episode of `n` primitives has `n + 1`
//! records: the first with reward 0 and the last with no action.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::oracles::{EpisodeSummary, HarnessReport, OracleState, DEFAULT_MAX_STEPS};
use crate::recorder::{self, canonical_json, RecorderError, StepRecord};
use crate::registry::Registry;
use crate::seed;
use crate::simworld::{self, CameraConfig, SimConfig, SimError};
use crate::tasks::TaskKind;
use crate::taskspec::{render_task_spec, TaskSpec};

/// Written next to each task's episodes; read back by aggregation.
pub const ENV_CONFIG_FILE: &str = "env_config.json";
pub const TASK_FILE: &str = "task.bddl";

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub tasks: Vec<TaskKind>,
    pub episodes: usize,
    pub seed: u64,
    pub camera: CameraConfig,
    pub out: PathBuf,
    /// Replacement task files, keyed by task.
    pub specs: BTreeMap<TaskKind, TaskSpec>,
    pub max_steps: usize,
    pub registry: Registry,
}

impl GenConfig {
    pub fn new(tasks: Vec<TaskKind>, episodes: usize, seed: u64, out: impl Into<PathBuf>) -> Self {
        Self {
            tasks,
            episodes,
            seed,
            camera: CameraConfig::default(),
            out: out.into(),
            specs: BTreeMap::new(),
            max_steps: DEFAULT_MAX_STEPS,
            registry: Registry::builtin(),
        }
    }

    pub fn spec_for(&self, task: TaskKind) -> TaskSpec {
        self.specs
            .get(&task)
            .cloned()
            .unwrap_or_else(|| task.spec())
    }

    pub fn task_dir(&self, task: TaskKind) -> PathBuf {
        self.out.join(task.name())
    }

    /// Environment description stored alongside the episodes of `task`.
    pub fn env_config(&self, task: TaskKind) -> Value {
        json!({
            "task": task.name(),
            "root_seed": self.seed,
            "episodes": self.episodes,
            "max_steps": self.max_steps,
            "camera": self.camera,
            "sim": SimConfig::default(),
            "seed_derivation": "splitmix64(splitmix64(splitmix64(root) ^ task_index) ^ episode_index)",
            "task_index": task.index(),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("no tasks requested")]
    NoTasks,
    #[error("episode count must be at least 1")]
    NoEpisodes,
    #[error("{task} episode {episode}: {source}")]
    Episode {
        task: TaskKind,
        episode: u64,
        source: EpisodeError,
    },
    #[error("IO_FAILURE: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Record(#[from] RecorderError),
}

fn step_info(
    task: TaskKind,
    spec: &TaskSpec,
    seed: u64,
    episode: u64,
    step: u32,
    obs: &simworld::Observation,
    success: bool,
) -> Value {
    json!({
        "task": task.name(),
        "spec_name": spec.problem_name,
        "seed": seed,
        "episode": episode,
        "step": step,
        "instruction": obs.instruction,
        "object_poses": obs.object_poses,
        "success": success,
    })
}

/// Generates and records one oracle episode under `root`.
pub fn record_episode(
    root: &Path,
    task: TaskKind,
    spec: &TaskSpec,
    episode: u64,
    seed: u64,
    camera: &CameraConfig,
    registry: &Registry,
    max_steps: usize,
) -> Result<EpisodeSummary, EpisodeError> {
    let (mut world, mut obs) =
        simworld::reset_with(spec, seed, camera, registry, &SimConfig::default())?;
    let mut oracle = OracleState::new(task, &world);
    let mut reward_in = 0.0f32;
    let mut total_reward = 0.0;
    let mut done = world.check_success();
    let mut step = 0u32;
    loop {
        let action = if done || step as usize >= max_steps {
            None
        } else {
            oracle.act(&obs).ok()
        };
        let info = step_info(task, spec, seed, episode, step, &obs, done);
        let record = StepRecord::from_observation(
            episode,
            step,
            &obs,
            action.map(Into::into),
            reward_in,
            info,
        );
        recorder::save_step(root, &record)?;
        let Some(action) = action else { break };
        let out = world.step(&action)?;
        reward_in = out.reward as f32;
        total_reward += out.reward;
        done = out.done;
        obs = out.observation;
        step += 1;
    }
    Ok(EpisodeSummary {
        success: done,
        steps: step as usize,
        total_reward,
    })
}

/// Runs every requested task; returns one report per task in request order.
pub fn generate(config: &GenConfig) -> Result<Vec<HarnessReport>, GenError> {
    if config.tasks.is_empty() {
        return Err(GenError::NoTasks);
    }
    if config.episodes == 0 {
        return Err(GenError::NoEpisodes);
    }
    let mut reports = Vec::new();
    for &task in &config.tasks {
        let spec = config.spec_for(task);
        let dir = config.task_dir(task);
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| GenError::Io { path, source }
        };
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let env_path = dir.join(ENV_CONFIG_FILE);
        fs::write(&env_path, canonical_json(&config.env_config(task))).map_err(io(&env_path))?;
        let task_path = dir.join(TASK_FILE);
        fs::write(&task_path, render_task_spec(&spec)).map_err(io(&task_path))?;

        let results: Vec<EpisodeSummary> = (0..config.episodes as u64)
            .into_par_iter()
            .map(|ep| {
                let s = seed::episode_seed(config.seed, task.index(), ep);
                record_episode(
                    &dir,
                    task,
                    &spec,
                    ep,
                    s,
                    &config.camera,
                    &config.registry,
                    config.max_steps,
                )
                .map_err(|source| GenError::Episode {
                    task,
                    episode: ep,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        let successes = results.iter().filter(|r| r.success).count();
        let steps: usize = results.iter().map(|r| r.steps).sum();
        reports.push(HarnessReport {
            task_kind: task,
            episodes: config.episodes,
            successes,
            success_rate: successes as f64 / config.episodes as f64,
            mean_steps: steps as f64 / config.episodes as f64,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recorder::{load_episode, verify_sync};

    #[test]
    fn pyramid_episode_has_seven_records() {
        let dir = tempfile::tempdir().unwrap();
        let spec = TaskKind::StackBlockPyramid.spec();
        let cam = CameraConfig::with_size(32, 24);
        let summary = record_episode(
            dir.path(),
            TaskKind::StackBlockPyramid,
            &spec,
            0,
            99,
            &cam,
            &Registry::builtin(),
            32,
        )
        .unwrap();
        assert!(summary.success);
        assert_eq!(summary.steps, 6);
        let eps = load_episode(dir.path(), 0).unwrap();
        assert_eq!(eps.len(), 7);
        assert_eq!(eps[0].reward, 0.0);
        for r in &eps[1..] {
            assert_eq!(r.reward, (1.0f64 / 6.0) as f32);
        }
        assert!(eps[6].action.is_none());
        assert!(eps[..6].iter().all(|r| r.action.is_some()));
        assert!(verify_sync(dir.path(), 0).unwrap().ok);
    }

    #[test]
    fn rejects_empty_requests() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            generate(&GenConfig::new(vec![], 1, 0, dir.path())),
            Err(GenError::NoTasks)
        ));
        assert!(matches!(
            generate(&GenConfig::new(
                vec![TaskKind::BlockInsertion],
                0,
                0,
                dir.path()
            )),
            Err(GenError::NoEpisodes)
        ));
    }

    #[test]
    fn generation_reports_per_task() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = GenConfig::new(
            vec![TaskKind::BlockInsertion, TaskKind::TowersOfHanoi],
            3,
            42,
            dir.path(),
        );
        cfg.camera = CameraConfig::with_size(32, 24);
        let reports = generate(&cfg).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].mean_steps, 1.0);
        assert_eq!(reports[1].mean_steps, 7.0);
        assert!(reports.iter().all(|r| r.success_rate == 1.0));
        let hanoi = dir.path().join("towers-of-hanoi");
        assert_eq!(recorder::list_episodes(&hanoi).unwrap(), vec![0, 1, 2]);
        assert!(hanoi.join(ENV_CONFIG_FILE).is_file());
    }
}
