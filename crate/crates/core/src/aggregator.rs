//! Episode validation and the single-file dataset container.
//!
//! ```text
//! "DFAR1" | entry_count u64
//! entry_count x { path_len u16 | path utf8 | dtype u8 | ndim u8 |
//!                 shape ndim x u32 | offset u64 | length u64 }
//! payload
//! ```
//!
//! Offsets are absolute. Payloads are laid out back to back in index order
//! and must exactly fill the rest of the file, so any truncation is caught
//! when the index is read.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, Cursor, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::array::{payload_len, ArrayFile, DType};
use crate::generate::ENV_CONFIG_FILE;
use crate::recorder::{self, canonical_json, RecorderError, StepRecord};

pub const MAGIC: &[u8; 5] = b"DFAR1";
pub const TOOL_VERSION: &str = concat!("demoforge ", env!("CARGO_PKG_VERSION"));
pub const DEMO_ARRAYS: [&str; 5] = ["rgb", "depth", "actions", "rewards", "info"];

#[derive(Debug, thiserror::Error)]
pub enum AggregateError {
    #[error("BAD_MAGIC: not a dataset container")]
    BadMagic,
    #[error("CORRUPT_INDEX: {0}")]
    CorruptIndex(String),
    #[error("IO_FAILURE: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("EMPTY_DATASET: no episode was accepted")]
    EmptyDataset,
    #[error("no entry named '{0}'")]
    NoSuchEntry(String),
    #[error(transparent)]
    Recorder(#[from] RecorderError),
}

impl AggregateError {
    pub fn code(&self) -> &'static str {
        match self {
            AggregateError::BadMagic => "BAD_MAGIC",
            AggregateError::CorruptIndex(_) => "CORRUPT_INDEX",
            AggregateError::Io { .. } => "IO_FAILURE",
            AggregateError::EmptyDataset => "EMPTY_DATASET",
            AggregateError::NoSuchEntry(_) => "NO_SUCH_ENTRY",
            AggregateError::Recorder(e) => e.code(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AggregateError + '_ {
    move |source| AggregateError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(msg: impl Into<String>) -> AggregateError {
    AggregateError::CorruptIndex(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryInfo {
    pub path: String,
    pub dtype: DType,
    pub shape: Vec<u32>,
    pub offset: u64,
    pub length: u64,
}

fn index_len(entries: &[(String, ArrayFile)]) -> usize {
    MAGIC.len()
        + 8
        + entries
            .iter()
            .map(|(p, a)| 2 + p.len() + 2 + 4 * a.ndim() + 16)
            .sum::<usize>()
}

/// Serializes named arrays into container bytes. Panics on duplicate paths.
pub fn encode_container(entries: &[(String, ArrayFile)]) -> Vec<u8> {
    let mut seen = HashSet::new();
    for (p, _) in entries {
        assert!(seen.insert(p.as_str()), "duplicate path {p}");
        assert!(p.len() <= u16::MAX as usize, "path too long");
    }
    let mut offset = index_len(entries) as u64;
    let total = offset as usize + entries.iter().map(|(_, a)| a.payload.len()).sum::<usize>();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (path, a) in entries {
        out.extend_from_slice(&(path.len() as u16).to_le_bytes());
        out.extend_from_slice(path.as_bytes());
        out.push(a.dtype.code());
        out.push(a.ndim() as u8);
        for d in &a.shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(a.payload.len() as u64).to_le_bytes());
        offset += a.payload.len() as u64;
    }
    for (_, a) in entries {
        out.extend_from_slice(&a.payload);
    }
    debug_assert_eq!(out.len(), total);
    out
}

/// Random-access reader over a container. The index is read and checked up
/// front; payloads are fetched on demand.
pub struct ContainerReader<R> {
    source: R,
    entries: Vec<EntryInfo>,
    by_path: BTreeMap<String, usize>,
}

impl ContainerReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, AggregateError> {
        let f = File::open(path).map_err(io_err(path))?;
        Self::new(BufReader::new(f))
    }
}

impl ContainerReader<Cursor<Vec<u8>>> {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, AggregateError> {
        Self::new(Cursor::new(bytes))
    }
}

impl<R: Read + Seek> ContainerReader<R> {
    pub fn new(mut source: R) -> Result<Self, AggregateError> {
        let io = |e: std::io::Error| AggregateError::Io {
            path: PathBuf::from("<container>"),
            source: e,
        };
        let file_len = source.seek(SeekFrom::End(0)).map_err(io)?;
        source.seek(SeekFrom::Start(0)).map_err(io)?;

        let mut magic = [0u8; 5];
        if file_len < 5 {
            return Err(AggregateError::BadMagic);
        }
        source.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(AggregateError::BadMagic);
        }
        let mut pos = 5u64;
        let mut take = |n: usize, what: &str| -> Result<Vec<u8>, AggregateError> {
            if pos + n as u64 > file_len {
                return Err(corrupt(format!("index truncated while reading {what}")));
            }
            let mut buf = vec![0u8; n];
            source
                .read_exact(&mut buf)
                .map_err(|e| AggregateError::Io {
                    path: PathBuf::from("<container>"),
                    source: e,
                })?;
            pos += n as u64;
            Ok(buf)
        };
        let count = u64::from_le_bytes(take(8, "entry count")?.try_into().unwrap());
        // Each index record is at least 20 bytes.
        if count > (file_len - 13) / 20 {
            return Err(corrupt(format!(
                "entry count {count} cannot fit in {file_len} bytes"
            )));
        }
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let plen = u16::from_le_bytes(take(2, "path length")?.try_into().unwrap()) as usize;
            let path = String::from_utf8(take(plen, "path")?)
                .map_err(|_| corrupt("entry path is not UTF-8"))?;
            let head = take(2, "dtype")?;
            let dtype = DType::from_code(head[0])
                .ok_or_else(|| corrupt(format!("{path}: unknown dtype {}", head[0])))?;
            let ndim = head[1] as usize;
            let shape: Vec<u32> = take(4 * ndim, "shape")?
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tail = take(16, "offset")?;
            let offset = u64::from_le_bytes(tail[..8].try_into().unwrap());
            let length = u64::from_le_bytes(tail[8..].try_into().unwrap());
            entries.push(EntryInfo {
                path,
                dtype,
                shape,
                offset,
                length,
            });
        }
        let index_end = pos;

        let mut by_path = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if by_path.insert(e.path.clone(), i).is_some() {
                return Err(corrupt(format!("duplicate path {}", e.path)));
            }
            if payload_len(e.dtype, &e.shape).map(|n| n as u64) != Some(e.length) {
                return Err(corrupt(format!("{}: length does not match shape", e.path)));
            }
            let end = e.offset.checked_add(e.length);
            if e.offset < index_end || end.is_none_or(|end| end > file_len) {
                return Err(corrupt(format!("{}: payload out of bounds", e.path)));
            }
        }
        let mut spans: Vec<(u64, u64)> = entries.iter().map(|e| (e.offset, e.length)).collect();
        spans.sort();
        let mut cursor = index_end;
        for (offset, length) in spans {
            if offset < cursor {
                return Err(corrupt("overlapping payloads"));
            }
            if offset > cursor {
                return Err(corrupt("gap between payloads"));
            }
            cursor = offset + length;
        }
        if cursor != file_len {
            return Err(corrupt(format!(
                "payload region ends at {cursor} but the file has {file_len} bytes"
            )));
        }
        Ok(Self {
            source,
            entries,
            by_path,
        })
    }

    pub fn entries(&self) -> &[EntryInfo] {
        &self.entries
    }

    pub fn contains(&self, path: &str) -> bool {
        self.by_path.contains_key(path)
    }

    pub fn read(&mut self, path: &str) -> Result<ArrayFile, AggregateError> {
        let i = *self
            .by_path
            .get(path)
            .ok_or_else(|| AggregateError::NoSuchEntry(path.to_string()))?;
        let e = &self.entries[i];
        let mut payload = vec![0u8; e.length as usize];
        let io = |source| AggregateError::Io {
            path: PathBuf::from(path),
            source,
        };
        self.source.seek(SeekFrom::Start(e.offset)).map_err(io)?;
        self.source.read_exact(&mut payload).map_err(io)?;
        Ok(ArrayFile::new(e.dtype, e.shape.clone(), payload))
    }

    pub fn read_text(&mut self, path: &str) -> Result<String, AggregateError> {
        let a = self.read(path)?;
        a.to_text()
            .map(str::to_string)
            .map_err(|e| corrupt(format!("{path}: {e}")))
    }

    /// Demo group names (`demo_0`, `demo_1`, ...) in numeric order.
    pub fn demos(&self) -> Vec<String> {
        let mut ks: Vec<u64> = self
            .by_path
            .keys()
            .filter_map(|p| {
                p.strip_prefix("data/demo_")?
                    .split_once('/')?
                    .0
                    .parse()
                    .ok()
            })
            .collect();
        ks.sort_unstable();
        ks.dedup();
        ks.into_iter().map(|k| format!("demo_{k}")).collect()
    }

    /// The five arrays of one demo group.
    pub fn demo(&mut self, name: &str) -> Result<BTreeMap<String, ArrayFile>, AggregateError> {
        DEMO_ARRAYS
            .iter()
            .map(|a| Ok((a.to_string(), self.read(&format!("data/{name}/{a}"))?)))
            .collect()
    }

    /// Every attribute under `attrs/`, keyed by name.
    pub fn attrs(&mut self) -> Result<BTreeMap<String, ArrayFile>, AggregateError> {
        let names: Vec<String> = self
            .by_path
            .keys()
            .filter_map(|p| p.strip_prefix("attrs/").map(str::to_string))
            .collect();
        names
            .into_iter()
            .map(|n| {
                let a = self.read(&format!("attrs/{n}"))?;
                Ok((n, a))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    ModalityMismatch,
    TooShort,
    Incomplete,
    MissingInfo,
    Corrupt,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::ModalityMismatch => "MODALITY_MISMATCH",
            RejectReason::TooShort => "TOO_SHORT",
            RejectReason::Incomplete => "INCOMPLETE",
            RejectReason::MissingInfo => "MISSING_INFO",
            RejectReason::Corrupt => "CORRUPT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum Verdict {
    Accepted,
    Rejected(RejectReason),
}

/// Checks a loaded episode: consistent frame shapes, at least two steps,
/// cumulative reward of one, and an info object at every step.
pub fn validate_episode(episode: &[StepRecord]) -> Verdict {
    let Some(first) = episode.first() else {
        return Verdict::Rejected(RejectReason::TooShort);
    };
    let consistent = episode.iter().all(|r| {
        let n = (r.height * r.width) as usize;
        r.height == first.height
            && r.width == first.width
            && r.rgb.len() == 3 * n
            && r.depth.len() == n
    });
    if !consistent {
        return Verdict::Rejected(RejectReason::ModalityMismatch);
    }
    if episode.len() < 2 {
        return Verdict::Rejected(RejectReason::TooShort);
    }
    let total: f64 = episode.iter().map(|r| r.reward as f64).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Verdict::Rejected(RejectReason::Incomplete);
    }
    if !episode
        .iter()
        .all(|r| r.info.as_object().is_some_and(|m| !m.is_empty()))
    {
        return Verdict::Rejected(RejectReason::MissingInfo);
    }
    Verdict::Accepted
}

/// Loads and validates a recorded episode; a modality count mismatch or a
/// missing step file rejects it before the records are inspected.
pub fn validate_recorded(root: &Path, episode: u64) -> (Verdict, Option<Vec<StepRecord>>) {
    match recorder::verify_sync(root, episode) {
        Ok(sync) if sync.ok => {}
        Ok(_) => return (Verdict::Rejected(RejectReason::ModalityMismatch), None),
        Err(_) => return (Verdict::Rejected(RejectReason::Corrupt), None),
    }
    match recorder::load_episode(root, episode) {
        Ok(records) => (validate_episode(&records), Some(records)),
        Err(RecorderError::MissingModality { .. }) => {
            (Verdict::Rejected(RejectReason::ModalityMismatch), None)
        }
        Err(_) => (Verdict::Rejected(RejectReason::Corrupt), None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeVerdict {
    pub source: String,
    pub episode_id: u64,
    #[serde(flatten)]
    pub verdict: Verdict,
    /// Demo group the episode was stored as, if accepted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demo: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub episodes: Vec<EpisodeVerdict>,
    pub scanned: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub reasons: BTreeMap<RejectReason, usize>,
}

impl ValidationReport {
    fn from_verdicts(episodes: Vec<EpisodeVerdict>) -> Self {
        let mut reasons = BTreeMap::new();
        for e in &episodes {
            if let Verdict::Rejected(r) = e.verdict {
                *reasons.entry(r).or_insert(0) += 1;
            }
        }
        let accepted = episodes
            .iter()
            .filter(|e| e.verdict == Verdict::Accepted)
            .count();
        Self {
            scanned: episodes.len(),
            accepted,
            rejected: episodes.len() - accepted,
            reasons,
            episodes,
        }
    }
}

/// Validates every episode under each root without writing anything.
pub fn validate_roots(inputs: &[PathBuf]) -> Result<ValidationReport, AggregateError> {
    Ok(ValidationReport::from_verdicts(
        scan(inputs)?.into_iter().map(|(v, _)| v).collect(),
    ))
}

fn scan(
    inputs: &[PathBuf],
) -> Result<Vec<(EpisodeVerdict, Option<Vec<StepRecord>>)>, AggregateError> {
    let mut jobs = Vec::new();
    for root in inputs {
        for ep in recorder::list_episodes(root)? {
            jobs.push((root.clone(), ep));
        }
    }
    Ok(jobs
        .into_par_iter()
        .map(|(root, ep)| {
            let (verdict, records) = validate_recorded(&root, ep);
            let records = records.filter(|_| verdict == Verdict::Accepted);
            (
                EpisodeVerdict {
                    source: root.display().to_string(),
                    episode_id: ep,
                    verdict,
                    demo: None,
                },
                records,
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatherConfig {
    pub created_at: String,
    pub control_freq: f64,
    /// Overrides the env_config.json found next to the episodes.
    pub env_config: Option<Value>,
    pub tool_version: String,
}

impl GatherConfig {
    pub fn new(created_at: impl Into<String>) -> Self {
        Self {
            created_at: created_at.into(),
            control_freq: 20.0,
            env_config: None,
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

/// Stacks an accepted episode into its demo arrays.
pub fn demo_arrays(records: &[StepRecord]) -> Vec<(&'static str, ArrayFile)> {
    let t = records.len() as u32;
    let (h, w) = (records[0].height, records[0].width);
    let rgb: Vec<u8> = records.iter().flat_map(|r| r.rgb.iter().copied()).collect();
    let depth: Vec<f32> = records
        .iter()
        .flat_map(|r| r.depth.iter().copied())
        .collect();
    let rewards: Vec<f32> = records.iter().map(|r| r.reward).collect();
    let actions: Vec<_> = records.iter().map(|r| r.action).collect();
    let info: Vec<&Value> = records.iter().map(|r| &r.info).collect();
    vec![
        ("rgb", ArrayFile::from_u8(vec![t, h, w, 3], rgb)),
        ("depth", ArrayFile::from_f32(vec![t, h, w], &depth)),
        ("actions", ArrayFile::from_text(&canonical_json(&actions))),
        ("rewards", ArrayFile::from_f32(vec![t], &rewards)),
        ("info", ArrayFile::from_text(&canonical_json(&info))),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatherSummary {
    pub path: String,
    pub demos: usize,
    pub total_steps: usize,
    pub entries: usize,
    pub bytes: u64,
}

/// Packs every accepted episode under `inputs` into one container at `out`.
///
/// The container is written to a temporary file next to `out`, read back and
/// compared entry by entry, and only then renamed into place.
pub fn gather(
    inputs: &[PathBuf],
    spec_text: &str,
    config: &GatherConfig,
    out: &Path,
) -> Result<(GatherSummary, ValidationReport), AggregateError> {
    let scanned = scan(inputs)?;
    let env_config = match &config.env_config {
        Some(v) => v.clone(),
        None => inputs
            .iter()
            .find_map(|r| fs::read_to_string(r.join(ENV_CONFIG_FILE)).ok())
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or(Value::Object(Default::default())),
    };

    let mut entries: Vec<(String, ArrayFile)> = vec![
        (
            "attrs/created_at".into(),
            ArrayFile::from_text(&config.created_at),
        ),
        (
            "attrs/control_freq".into(),
            ArrayFile::scalar_f64(config.control_freq),
        ),
        (
            "attrs/task_spec_text".into(),
            ArrayFile::from_text(spec_text),
        ),
        (
            "attrs/env_config".into(),
            ArrayFile::from_text(&canonical_json(&env_config)),
        ),
        (
            "attrs/tool_version".into(),
            ArrayFile::from_text(&config.tool_version),
        ),
    ];
    let mut verdicts = Vec::with_capacity(scanned.len());
    let mut k = 0usize;
    let mut total_steps = 0usize;
    for (mut verdict, records) in scanned {
        if let Some(records) = records {
            let demo = format!("demo_{k}");
            for (name, a) in demo_arrays(&records) {
                entries.push((format!("data/{demo}/{name}"), a));
            }
            total_steps += records.len();
            verdict.demo = Some(demo);
            k += 1;
        }
        verdicts.push(verdict);
    }
    let report = ValidationReport::from_verdicts(verdicts);
    if k == 0 {
        return Err(AggregateError::EmptyDataset);
    }

    let bytes = encode_container(&entries);
    let dir = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        out.file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("container"),
        std::process::id()
    ));
    let result = (|| {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        drop(f);
        let mut reader = ContainerReader::open(&tmp)?;
        for (path, a) in &entries {
            if &reader.read(path)? != a {
                return Err(corrupt(format!("read-back mismatch at {path}")));
            }
        }
        fs::rename(&tmp, out).map_err(io_err(out))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result?;
    Ok((
        GatherSummary {
            path: out.display().to_string(),
            demos: k,
            total_steps,
            entries: entries.len(),
            bytes: bytes.len() as u64,
        },
        report,
    ))
}
