//! Drives the teleop server through its WebSocket protocol with a scripted
//! operator, the way a browser client would.

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use demoforge_core::aggregator::{
    gather, validate_episode, ContainerReader, GatherConfig, Verdict,
};
use demoforge_core::generate::{generate, GenConfig};
use demoforge_core::recorder::{list_episodes, load_episode, verify_sync};
use demoforge_core::teleop::{
    ClientMessage, ControlCmd, DeviceInput, Phase, ScriptedOperator, ServerMessage, TeleopConfig,
};
use demoforge_core::TaskKind;
use futures::{SinkExt, StreamExt};
use serde_json::Value;
use tokio_tungstenite::tungstenite::Message;

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_server(dir: &Path, control_freq: f64) -> (Server, String) {
    let spec = dir.join("task.bddl");
    std::fs::write(&spec, TaskKind::PlaceRedInGreen.source()).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_demoforge"))
        .args(["teleop", "--port", "0", "--seed", "5", "--control-freq"])
        .arg(control_freq.to_string())
        .arg("--spec")
        .arg(&spec)
        .arg("--session")
        .arg(dir.join("session"))
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let v: Value = serde_json::from_str(&line).unwrap();
    let url = format!(
        "ws://{}{}",
        v["listening"].as_str().unwrap(),
        v["path"].as_str().unwrap()
    );
    (Server(child), url)
}

/// Every outgoing message must parse back as a protocol message.
fn checked(msg: &ClientMessage) -> Message {
    let text = serde_json::to_string(msg).unwrap();
    let raw: Value = serde_json::from_str(&text).unwrap();
    match raw["type"].as_str().unwrap() {
        "input" => {
            assert_eq!(raw["dpos"].as_array().unwrap().len(), 3);
            assert_eq!(raw["drot"].as_array().unwrap().len(), 3);
            assert!(["open", "close", "hold"].contains(&raw["grip"].as_str().unwrap()));
        }
        "control" => {
            assert!(["reset", "discard", "save_request"].contains(&raw["cmd"].as_str().unwrap()));
        }
        other => panic!("unexpected type {other}"),
    }
    assert_eq!(&serde_json::from_str::<ClientMessage>(&text).unwrap(), msg);
    Message::Text(text.into())
}

#[tokio::test(flavor = "multi_thread")]
async fn scripted_client_completes_place_red_in_green() {
    let dir = tempfile::tempdir().unwrap();
    let (_server, url) = start_server(dir.path(), 50.0);
    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    ws.send(checked(&ClientMessage::Control {
        cmd: ControlCmd::Reset,
    }))
    .await
    .unwrap();

    let op = ScriptedOperator::new(&TeleopConfig::default());
    let mut last_tick = None;
    let mut streak_at_save = None;
    let deadline = tokio::time::Instant::now() + Duration::from_secs(60);
    while tokio::time::Instant::now() < deadline {
        let Some(Ok(Message::Text(text))) = ws.next().await else {
            panic!("socket closed")
        };
        let raw: Value = serde_json::from_str(&text).unwrap();
        for key in [
            "type",
            "tick",
            "rgb_png_b64",
            "objects",
            "reward",
            "success_streak",
            "phase",
            "instruction",
        ] {
            assert!(raw.get(key).is_some(), "frame lacks {key}");
        }
        let ServerMessage::Frame(frame) = serde_json::from_str(&text).unwrap() else {
            panic!("unexpected error message: {text}")
        };
        match frame.phase {
            Phase::Saved => {
                streak_at_save = Some(frame.success_streak);
                break;
            }
            Phase::Running | Phase::Debouncing if last_tick != Some(frame.tick) => {
                last_tick = Some(frame.tick);
                let input = ClientMessage::Input(op.next_input(&frame));
                ws.send(checked(&input)).await.unwrap();
            }
            _ => {}
        }
    }
    assert_eq!(streak_at_save, Some(10), "episode was not saved in time");
    ws.send(checked(&ClientMessage::Control {
        cmd: ControlCmd::SaveRequest,
    }))
    .await
    .unwrap();
    ws.close(None).await.unwrap();

    let tmp = dir.path().join("session").join("tmp");
    assert_eq!(list_episodes(&tmp).unwrap(), vec![0]);
    let records = load_episode(&tmp, 0).unwrap();
    assert!(verify_sync(&tmp, 0).unwrap().ok);
    assert_eq!(validate_episode(&records), Verdict::Accepted);
    assert!(records.last().unwrap().info["success"].as_bool().unwrap());

    // The teleop container has the same layout as one built from oracle runs.
    let teleop_out = dir.path().join("teleop.dfar");
    gather(&[tmp], "spec", &GatherConfig::new("t"), &teleop_out).unwrap();
    let config = GenConfig::new(
        vec![TaskKind::PlaceRedInGreen],
        1,
        5,
        dir.path().join("oracle"),
    );
    generate(&config).unwrap();
    let oracle_out = dir.path().join("oracle.dfar");
    gather(
        &[config.task_dir(TaskKind::PlaceRedInGreen)],
        "spec",
        &GatherConfig::new("t"),
        &oracle_out,
    )
    .unwrap();
    let layout = |path: &Path| {
        let reader = ContainerReader::open(path).unwrap();
        reader
            .entries()
            .iter()
            .filter(|e| e.path.starts_with("data/"))
            .map(|e| {
                (
                    e.path.clone(),
                    e.dtype,
                    e.shape.len(),
                    e.shape.get(1..).map(<[u32]>::to_vec),
                )
            })
            .map(|(p, d, n, tail)| (p, d, n, if n >= 3 { tail } else { None }))
            .collect::<Vec<_>>()
    };
    assert_eq!(layout(&teleop_out), layout(&oracle_out));
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_messages_get_an_error_reply() {
    let dir = tempfile::tempdir().unwrap();
    let (_server, url) = start_server(dir.path(), 50.0);
    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    ws.send(Message::Text(r#"{"type":"input","dpos":[1,2]}"#.into()))
        .await
        .unwrap();
    let mut saw_error = false;
    for _ in 0..200 {
        let Some(Ok(Message::Text(text))) = ws.next().await else {
            break;
        };
        if let ServerMessage::Error { message } = serde_json::from_str(&text).unwrap() {
            assert!(message.contains("bad message"));
            saw_error = true;
            break;
        }
    }
    assert!(saw_error);

    // Input before any reset is ignored and the session stays idle.
    let idle = ClientMessage::Input(DeviceInput::IDLE);
    ws.send(checked(&idle)).await.unwrap();
    let Some(Ok(Message::Text(text))) = ws.next().await else {
        panic!()
    };
    let ServerMessage::Frame(frame) = serde_json::from_str(&text).unwrap() else {
        panic!()
    };
    assert_eq!((frame.phase, frame.tick), (Phase::Idle, 0));
}
