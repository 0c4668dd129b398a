//! Per-step episode storage, one file per modality:
//!
//! ```text
//! <root>/{color,depth,action,reward,info}/EEEEEE-SSSS.dfs
//! ```
//!
//! Episode ids are zero-padded to six digits and step ids to four, so
//! lexicographic order matches numeric order. Action and info are stored as
//! canonical JSON text (sorted keys, no whitespace).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::array::{ArrayFile, DType};
use crate::simworld::{ActionPrimitive, Grip, GripperCommand, Observation, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Color,
    Depth,
    Action,
    Reward,
    Info,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Color,
        Modality::Depth,
        Modality::Action,
        Modality::Reward,
        Modality::Info,
    ];

    pub fn dir(self) -> &'static str {
        match self {
            Modality::Color => "color",
            Modality::Depth => "depth",
            Modality::Action => "action",
            Modality::Reward => "reward",
            Modality::Info => "info",
        }
    }
}

/// What the agent did at a step: an oracle primitive or a teleop command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordedAction {
    Primitive {
        pick_pose: Pose2,
        place_pose: Pose2,
    },
    Teleop {
        dpos: [f64; 3],
        drot: [f64; 3],
        grip: Grip,
    },
}

impl From<ActionPrimitive> for RecordedAction {
    fn from(a: ActionPrimitive) -> Self {
        RecordedAction::Primitive {
            pick_pose: a.pick_pose,
            place_pose: a.place_pose,
        }
    }
}

impl From<GripperCommand> for RecordedAction {
    fn from(c: GripperCommand) -> Self {
        RecordedAction::Teleop {
            dpos: c.dpos,
            drot: c.drot,
            grip: c.grip,
        }
    }
}

/// One synchronized timestep. `reward` is the reward that led to this
/// observation; `action` is what was done from it (absent at the end).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub episode_id: u64,
    pub step_id: u32,
    pub height: u32,
    pub width: u32,
    /// Row-major (height, width, 3).
    pub rgb: Vec<u8>,
    /// Row-major (height, width), meters.
    pub depth: Vec<f32>,
    pub action: Option<RecordedAction>,
    pub reward: f32,
    pub info: Value,
}

impl StepRecord {
    pub fn from_observation(
        episode_id: u64,
        step_id: u32,
        obs: &Observation,
        action: Option<RecordedAction>,
        reward: f32,
        info: Value,
    ) -> Self {
        Self {
            episode_id,
            step_id,
            height: obs.height as u32,
            width: obs.width as u32,
            rgb: obs.rgb.clone(),
            depth: obs.depth.clone(),
            action,
            reward,
            info,
        }
    }

    pub fn encode(&self, modality: Modality) -> ArrayFile {
        match modality {
            Modality::Color => {
                ArrayFile::from_u8(vec![self.height, self.width, 3], self.rgb.clone())
            }
            Modality::Depth => ArrayFile::from_f32(vec![self.height, self.width], &self.depth),
            Modality::Action => ArrayFile::from_text(&canonical_json(&self.action)),
            Modality::Reward => ArrayFile::scalar_f32(self.reward),
            Modality::Info => ArrayFile::from_text(&canonical_json(&self.info)),
        }
    }
}

/// JSON with object keys sorted and no insignificant whitespace.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    // Going through Value sorts struct fields as well as map keys.
    let v = serde_json::to_value(value).expect("serializable");
    serde_json::to_string(&v).expect("serializable")
}

#[derive(Debug, thiserror::Error)]
pub enum RecorderError {
    #[error("IO_FAILURE: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("DUPLICATE_STEP: episode {episode} step {step} already exists")]
    DuplicateStep { episode: u64, step: u32 },
    #[error("MISSING_MODALITY: {} missing for episode {episode} step {step}", .modality.dir())]
    MissingModality {
        modality: Modality,
        episode: u64,
        step: u32,
    },
    #[error("CORRUPT_FILE: {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
}

impl RecorderError {
    pub fn code(&self) -> &'static str {
        match self {
            RecorderError::Io { .. } => "IO_FAILURE",
            RecorderError::DuplicateStep { .. } => "DUPLICATE_STEP",
            RecorderError::MissingModality { .. } => "MISSING_MODALITY",
            RecorderError::CorruptFile { .. } => "CORRUPT_FILE",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RecorderError + '_ {
    move |source| RecorderError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn file_name(episode: u64, step: u32) -> String {
    format!("{episode:06}-{step:04}.dfs")
}

pub fn parse_file_name(name: &str) -> Option<(u64, u32)> {
    let stem = name.strip_suffix(".dfs")?;
    let (e, s) = stem.split_once('-')?;
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    if !digits(e) || !digits(s) || e.len() < 6 || s.len() < 4 {
        return None;
    }
    Some((e.parse().ok()?, s.parse().ok()?))
}

pub fn step_path(root: &Path, modality: Modality, episode: u64, step: u32) -> PathBuf {
    root.join(modality.dir()).join(file_name(episode, step))
}

/// Writes all five modality files for one step.
pub fn save_step(root: &Path, record: &StepRecord) -> Result<(), RecorderError> {
    let (e, s) = (record.episode_id, record.step_id);
    for m in Modality::ALL {
        if step_path(root, m, e, s).exists() {
            return Err(RecorderError::DuplicateStep {
                episode: e,
                step: s,
            });
        }
    }
    for m in Modality::ALL {
        let dir = root.join(m.dir());
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = step_path(root, m, e, s);
        let mut f = match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(f) => f,
            Err(err) if err.kind() == ErrorKind::AlreadyExists => {
                return Err(RecorderError::DuplicateStep {
                    episode: e,
                    step: s,
                })
            }
            Err(err) => return Err(io_err(&path)(err)),
        };
        f.write_all(&record.encode(m).encode())
            .map_err(io_err(&path))?;
    }
    Ok(())
}

/// Step ids present for `episode` in one modality directory.
pub fn step_ids(
    root: &Path,
    modality: Modality,
    episode: u64,
) -> Result<BTreeSet<u32>, RecorderError> {
    let dir = root.join(modality.dir());
    let mut ids = BTreeSet::new();
    let entries = match fs::read_dir(&dir) {
        Ok(entries) => entries,
        Err(err) if err.kind() == ErrorKind::NotFound => return Ok(ids),
        Err(err) => return Err(io_err(&dir)(err)),
    };
    for entry in entries {
        let entry = entry.map_err(io_err(&dir))?;
        if let Some((e, s)) = entry.file_name().to_str().and_then(parse_file_name) {
            if e == episode {
                ids.insert(s);
            }
        }
    }
    Ok(ids)
}

/// Every episode id with at least one file in any modality.
pub fn list_episodes(root: &Path) -> Result<Vec<u64>, RecorderError> {
    let mut eps = BTreeSet::new();
    for m in Modality::ALL {
        let dir = root.join(m.dir());
        let Ok(entries) = fs::read_dir(&dir) else {
            continue;
        };
        for entry in entries {
            let entry = entry.map_err(io_err(&dir))?;
            if let Some((e, _)) = entry.file_name().to_str().and_then(parse_file_name) {
                eps.insert(e);
            }
        }
    }
    Ok(eps.into_iter().collect())
}

fn read_array(path: &Path) -> Result<ArrayFile, RecorderError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    ArrayFile::decode(&bytes).map_err(|e| corrupt(path, e))
}

fn corrupt(path: &Path, reason: impl ToString) -> RecorderError {
    RecorderError::CorruptFile {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, RecorderError> {
    let a = read_array(path)?;
    let text = a.to_text().map_err(|e| corrupt(path, e))?;
    serde_json::from_str(text).map_err(|e| corrupt(path, e))
}

/// Reads one step; every modality file must exist.
pub fn load_step(root: &Path, episode: u64, step: u32) -> Result<StepRecord, RecorderError> {
    for m in Modality::ALL {
        if !step_path(root, m, episode, step).exists() {
            return Err(RecorderError::MissingModality {
                modality: m,
                episode,
                step,
            });
        }
    }
    let color_path = step_path(root, Modality::Color, episode, step);
    let color = read_array(&color_path)?;
    if color.dtype != DType::U8 || color.ndim() != 3 || color.shape[2] != 3 {
        return Err(corrupt(
            &color_path,
            format!("unexpected color shape {:?}", color.shape),
        ));
    }
    let (height, width) = (color.shape[0], color.shape[1]);

    let depth_path = step_path(root, Modality::Depth, episode, step);
    let depth = read_array(&depth_path)?;
    if depth.shape != [height, width] {
        return Err(corrupt(
            &depth_path,
            format!("depth shape {:?} does not match color", depth.shape),
        ));
    }
    let depth = depth.to_f32().map_err(|e| corrupt(&depth_path, e))?;

    let reward_path = step_path(root, Modality::Reward, episode, step);
    let reward = read_array(&reward_path)?;
    if reward.ndim() != 0 {
        return Err(corrupt(&reward_path, "reward must be a scalar"));
    }
    let reward = reward.to_f32().map_err(|e| corrupt(&reward_path, e))?[0];

    Ok(StepRecord {
        episode_id: episode,
        step_id: step,
        height,
        width,
        rgb: color.payload,
        depth,
        action: read_json(&step_path(root, Modality::Action, episode, step))?,
        reward,
        info: read_json(&step_path(root, Modality::Info, episode, step))?,
    })
}

/// All steps of an episode sorted by step id; empty if nothing was recorded.
pub fn load_episode(root: &Path, episode: u64) -> Result<Vec<StepRecord>, RecorderError> {
    let mut all = BTreeSet::new();
    for m in Modality::ALL {
        all.extend(step_ids(root, m, episode)?);
    }
    all.into_iter()
        .map(|s| load_step(root, episode, s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncReport {
    pub episode_id: u64,
    /// Number of steps found per modality.
    pub counts: BTreeMap<Modality, usize>,
    pub ok: bool,
}

pub fn verify_sync(root: &Path, episode: u64) -> Result<SyncReport, RecorderError> {
    let mut counts = BTreeMap::new();
    let mut sets = Vec::new();
    for m in Modality::ALL {
        let ids = step_ids(root, m, episode)?;
        counts.insert(m, ids.len());
        sets.push(ids);
    }
    let ok = sets.windows(2).all(|w| w[0] == w[1]);
    Ok(SyncReport {
        episode_id: episode,
        counts,
        ok,
    })
}
