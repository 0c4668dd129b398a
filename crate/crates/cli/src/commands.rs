use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use demoforge_core::aggregator::{gather, validate_roots, ContainerReader, GatherConfig};
use demoforge_core::array::{ArrayFile, DType};
use demoforge_core::generate::{generate, GenConfig, TASK_FILE};
use demoforge_core::oracles::run_harness_with;
use demoforge_core::taskspec::{self, has_errors, parse_task_spec, render_task_spec};
use demoforge_core::teleop::TeleopConfig;
use demoforge_core::xembody::{dataset_stats, normalize_trajectory, EmbodimentSpec};
use demoforge_core::{CameraConfig, Registry, TaskKind, TaskSpec};
use serde::Serialize;
use serde_json::json;

use crate::{Cli, Command, Render, TaskspecCmd};

fn emit<T: Serialize + ?Sized>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn registry(assets: Option<&Path>) -> Result<Registry> {
    let Some(path) = assets else {
        return Ok(Registry::builtin());
    };
    let file = if path.is_dir() {
        path.join("objects.json")
    } else {
        path.to_path_buf()
    };
    Registry::load(&file).with_context(|| format!("loading object registry {}", file.display()))
}

fn camera(render: &Render) -> CameraConfig {
    CameraConfig::scaled(render.render_scale as usize)
}

fn load_spec(path: &Path) -> Result<(TaskSpec, String)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = parse_task_spec(&text).map_err(|diags| {
        let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        anyhow::anyhow!("{}: {}", path.display(), lines.join("; "))
    })?;
    Ok((spec, text))
}

fn spec_override(tasks: &[TaskKind], spec: Option<&Path>) -> Result<Option<TaskSpec>> {
    let Some(path) = spec else { return Ok(None) };
    ensure!(tasks.len() == 1, "--spec applies to exactly one --task");
    Ok(Some(load_spec(path)?.0))
}

fn created_at(flag: Option<String>) -> String {
    flag.unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let seed = cli.seed;
    let assets = cli.assets.as_deref();
    match cli.command {
        Command::Gen {
            tasks,
            episodes,
            out,
            spec,
            render,
        } => {
            let mut config = GenConfig::new(tasks.clone(), episodes as usize, seed, out);
            config.camera = camera(&render);
            config.registry = registry(assets)?;
            if let Some(s) = spec_override(&tasks, spec.as_deref())? {
                config.specs.insert(tasks[0], s);
            }
            for report in generate(&config)? {
                emit(&report);
            }
        }
        Command::Harness {
            tasks,
            episodes,
            spec,
            render,
        } => {
            let over = spec_override(&tasks, spec.as_deref())?;
            let reg = registry(assets)?;
            for task in tasks {
                let spec = over.clone().unwrap_or_else(|| task.spec());
                emit(&run_harness_with(
                    task,
                    &spec,
                    episodes as usize,
                    seed,
                    &camera(&render),
                    &reg,
                )?);
            }
        }
        Command::Validate { inputs } => emit(&validate_roots(&inputs)?),
        Command::Aggregate {
            inputs,
            spec,
            out,
            created_at: stamp,
            control_freq,
        } => {
            let text =
                fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let mut config = GatherConfig::new(created_at(stamp));
            config.control_freq = control_freq;
            let (summary, report) = gather(&inputs, &text, &config, &out)?;
            emit(&json!({ "container": summary, "report": report }));
        }
        Command::Inspect { input } => {
            let reader = ContainerReader::open(&input)?;
            for entry in reader.entries() {
                emit(entry);
            }
        }
        Command::Teleop {
            spec,
            port,
            host,
            pos_sensitivity,
            rot_sensitivity,
            control_freq,
            debounce_steps,
            session,
            render,
        } => {
            let (spec, _) = load_spec(&spec)?;
            let config = TeleopConfig {
                control_freq,
                pos_sensitivity,
                rot_sensitivity,
                debounce_steps,
                ..TeleopConfig::default()
            };
            config.validate()?;
            let opts = crate::server::ServeOptions {
                addr: format!("{host}:{port}"),
                spec,
                config,
                camera: camera(&render),
                session,
                seed,
                registry: registry(assets)?,
            };
            crate::server::serve(opts)?;
        }
        Command::Normalize {
            embodiment,
            traj,
            gripper,
            out,
        } => {
            let text = fs::read_to_string(&embodiment)
                .with_context(|| format!("reading {}", embodiment.display()))?;
            let emb = EmbodimentSpec::from_json(&text)?;
            let joints = read_array(&traj)?;
            ensure!(
                joints.ndim() == 2,
                "{} must have shape (T, n_joints)",
                traj.display()
            );
            let grip = read_array(&gripper)?;
            ensure!(
                grip.ndim() == 1,
                "{} must have shape (T,)",
                gripper.display()
            );
            let cols = joints.shape[1] as usize;
            let flat = as_f64(&joints)?;
            let rows: Vec<Vec<f64>> = (0..joints.shape[0] as usize)
                .map(|t| flat[t * cols..(t + 1) * cols].to_vec())
                .collect();
            let actions = normalize_trajectory(&emb, &rows, &as_f64(&grip)?)?;
            let data: Vec<f64> = actions.iter().flatten().copied().collect();
            let array = ArrayFile::from_f64(vec![actions.len() as u32, 7], &data);
            fs::write(&out, array.encode())
                .with_context(|| format!("writing {}", out.display()))?;
            emit(&json!({ "embodiment": emb.name, "steps": actions.len(), "out": out }));
        }
        Command::Stats { input } => emit(&dataset_stats(&input)?),
        Command::Pipeline {
            task,
            episodes,
            out,
            spec,
            created_at: stamp,
            render,
        } => {
            let work = work_dir(&out);
            ensure!(
                !work.exists(),
                "work directory {} already exists",
                work.display()
            );
            let had_out = out.exists();
            let result = pipeline(
                task,
                episodes,
                seed,
                &out,
                &work,
                spec.as_deref(),
                stamp,
                &render,
                assets,
            );
            let _ = fs::remove_dir_all(&work);
            if result.is_err() && !had_out {
                let _ = fs::remove_file(&out);
            }
            emit(&result?);
        }
        Command::Taskspec(cmd) => return taskspec_cmd(cmd, seed),
    }
    Ok(ExitCode::SUCCESS)
}

fn read_array(path: &Path) -> Result<ArrayFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    ArrayFile::decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}

/// Trajectories are f32 on disk; f64 input is accepted as well.
fn as_f64(array: &ArrayFile) -> Result<Vec<f64>> {
    Ok(match array.dtype {
        DType::F32 => array.to_f32()?.into_iter().map(f64::from).collect(),
        _ => array.to_f64()?,
    })
}

fn work_dir(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!(".{name}.episodes"))
}

#[allow(clippy::too_many_arguments)]
fn pipeline(
    task: TaskKind,
    episodes: u64,
    seed: u64,
    out: &Path,
    work: &Path,
    spec: Option<&Path>,
    stamp: Option<String>,
    render: &Render,
    assets: Option<&Path>,
) -> Result<serde_json::Value> {
    let mut config = GenConfig::new(vec![task], episodes as usize, seed, work);
    config.camera = camera(render);
    config.registry = registry(assets)?;
    let mut spec_text = None;
    if let Some(path) = spec {
        let (s, text) = load_spec(path)?;
        config.specs.insert(task, s);
        spec_text = Some(text);
    }
    let reports = generate(&config)?;
    let dir = config.task_dir(task);
    let spec_text = match spec_text {
        Some(t) => t,
        None => fs::read_to_string(dir.join(TASK_FILE))?,
    };
    let (summary, report) = gather(
        &[dir],
        &spec_text,
        &GatherConfig::new(created_at(stamp)),
        out,
    )?;
    Ok(json!({ "harness": reports[0], "container": summary, "report": report }))
}

fn taskspec_cmd(cmd: TaskspecCmd, seed: u64) -> Result<ExitCode> {
    match cmd {
        TaskspecCmd::Lint { file } => {
            let text =
                fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let diagnostics = match parse_task_spec(&text) {
                Ok(spec) => taskspec::validate_source(&spec, &text),
                Err(diags) => diags,
            };
            let ok = !has_errors(&diagnostics);
            emit(&json!({ "file": file, "ok": ok, "diagnostics": diagnostics }));
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        TaskspecCmd::Fmt { file } => {
            let (spec, _) = load_spec(&file)?;
            print!("{}", render_task_spec(&spec));
            Ok(ExitCode::SUCCESS)
        }
        TaskspecCmd::Sample { file, clearance } => {
            let (spec, _) = load_spec(&file)?;
            emit(&taskspec::sample_scene(&spec, seed, clearance)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
