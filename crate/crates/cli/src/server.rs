//! Live teleoperation over WebSocket.
//!
//! One simulation task owns the session and ticks at the control frequency.
//! Clients write device input into a single-slot mailbox (the newest input
//! wins, and each tick consumes it) and control commands into a queue.
//! Every tick's frame is broadcast to all connected clients.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use demoforge_core::teleop::{
    ClientMessage, ControlCmd, DeviceInput, Phase, ServerMessage, TeleopConfig, TeleopSession,
};
use demoforge_core::{CameraConfig, Registry, TaskSpec};
use futures::{SinkExt, StreamExt};
use tokio::sync::{broadcast, mpsc};

pub struct ServeOptions {
    pub addr: String,
    pub spec: TaskSpec,
    pub config: TeleopConfig,
    pub camera: CameraConfig,
    pub session: PathBuf,
    pub seed: u64,
    pub registry: Registry,
}

#[derive(Clone)]
struct Shared {
    mailbox: Arc<Mutex<Option<DeviceInput>>>,
    controls: mpsc::UnboundedSender<ControlCmd>,
    frames: broadcast::Sender<String>,
    latest: Arc<Mutex<String>>,
}

fn encode(msg: &ServerMessage) -> String {
    serde_json::to_string(msg).expect("serializable")
}

pub fn serve(opts: ServeOptions) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(run(opts))
}

async fn run(opts: ServeOptions) -> Result<()> {
    let tick = Duration::from_secs_f64(opts.config.tick_seconds());
    let mut session = TeleopSession::with_registry(
        opts.spec,
        opts.config,
        opts.camera,
        opts.session,
        opts.seed,
        opts.registry,
    )?;
    let (controls, mut control_rx) = mpsc::unbounded_channel();
    let (frames, _) = broadcast::channel(64);
    let shared = Shared {
        mailbox: Arc::new(Mutex::new(None)),
        controls,
        frames: frames.clone(),
        latest: Arc::new(Mutex::new(encode(&session.frame()))),
    };

    let listener = tokio::net::TcpListener::bind(&opts.addr)
        .await
        .with_context(|| format!("binding {}", opts.addr))?;
    let local = listener.local_addr()?;
    println!(
        "{}",
        serde_json::json!({ "listening": local.to_string(), "path": "/ws" })
    );

    let app = Router::new()
        .route("/ws", get(upgrade))
        .with_state(shared.clone());
    let server = tokio::spawn(async move { axum::serve(listener, app).await });

    let mut interval = tokio::time::interval(tick);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        if server.is_finished() {
            break;
        }
        while let Ok(cmd) = control_rx.try_recv() {
            if let Err(e) = session.control(cmd) {
                let _ = frames.send(encode(&ServerMessage::Error {
                    message: e.to_string(),
                }));
            }
        }
        if matches!(session.state.phase, Phase::Running | Phase::Debouncing) {
            let input = shared
                .mailbox
                .lock()
                .unwrap()
                .take()
                .unwrap_or(DeviceInput::IDLE);
            if let Err(e) = session.tick(&input) {
                let _ = frames.send(encode(&ServerMessage::Error {
                    message: e.to_string(),
                }));
            }
        }
        let frame = encode(&session.frame());
        *shared.latest.lock().unwrap() = frame.clone();
        let _ = frames.send(frame);
    }
    server.await??;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(socket: WebSocket, shared: Shared) {
    let (mut tx, mut rx) = socket.split();
    let mut frames = shared.frames.subscribe();
    // Replies meant for this client only, such as parse errors.
    let (direct, mut direct_rx) = mpsc::unbounded_channel::<String>();
    let first = shared.latest.lock().unwrap().clone();

    let writer = tokio::spawn(async move {
        if tx.send(Message::Text(first.into())).await.is_err() {
            return;
        }
        loop {
            let text = tokio::select! {
                f = frames.recv() => match f {
                    Ok(t) => t,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                d = direct_rx.recv() => match d {
                    Some(t) => t,
                    None => break,
                },
            };
            if tx.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });

    while let Some(Ok(msg)) = rx.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        match serde_json::from_str::<ClientMessage>(&text) {
            Ok(ClientMessage::Input(input)) => {
                *shared.mailbox.lock().unwrap() = Some(input.sanitized());
            }
            Ok(ClientMessage::Control { cmd }) => {
                let _ = shared.controls.send(cmd);
            }
            Err(e) => {
                let msg = ServerMessage::Error {
                    message: format!("bad message: {e}"),
                };
                let _ = direct.send(encode(&msg));
            }
        }
    }
    writer.abort();
}
