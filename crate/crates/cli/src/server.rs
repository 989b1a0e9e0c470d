//! WebSocket play server and read-only leaderboard endpoint. One tick loop
//! steps the active session at 50 Hz and broadcasts its messages; clients
//! only latch input between ticks.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::Result;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{IntoResponse, Json};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::sync::broadcast;

use pitlane::env::Control;
use pitlane::harness::{
    append_recordings, Agent, ClientMessage, EntryKind, EvalSummary, Leaderboard, LeaderboardEntry, PlayMode,
    PlaySession, RunConfig, RunDir, ServerMessage, Trainer, HUMAN_REFERENCE, TICK_HZ,
};

pub struct ServerSettings {
    /// Env settings for human sessions.
    pub config: RunConfig,
    /// Restored trainer whose greedy policy drives agent mode.
    pub agent: Option<Box<dyn Trainer + Send>>,
    pub leaderboard: PathBuf,
    pub recordings: Option<PathBuf>,
    pub runs: Vec<PathBuf>,
}

/// Greedy policy of an owned trainer.
struct TrainerAgent(Arc<Mutex<Box<dyn Trainer + Send>>>);

impl Agent for TrainerAgent {
    fn act(&mut self, obs: &[f32]) -> pitlane::Result<Control> {
        let t = self.0.lock().unwrap();
        let mut agent = t.greedy_agent();
        agent.act(obs)
    }
}

#[derive(Default)]
struct Hub {
    session: Option<PlaySession>,
    mode: Option<PlayMode>,
    /// Client id of the human driver.
    driver: Option<u64>,
    next_id: u64,
    sessions_started: u64,
}

struct Shared {
    hub: Mutex<Hub>,
    tx: broadcast::Sender<Arc<str>>,
    config: RunConfig,
    agent: Option<Arc<Mutex<Box<dyn Trainer + Send>>>>,
    leaderboard: PathBuf,
    recordings: Option<PathBuf>,
    runs: Vec<PathBuf>,
}

pub fn router(settings: ServerSettings) -> Router {
    let (tx, _) = broadcast::channel(1024);
    let shared = Arc::new(Shared {
        hub: Mutex::new(Hub::default()),
        tx,
        config: settings.config,
        agent: settings.agent.map(|a| Arc::new(Mutex::new(a))),
        leaderboard: settings.leaderboard,
        recordings: settings.recordings,
        runs: settings.runs,
    });
    tokio::spawn(tick_loop(shared.clone()));
    Router::new()
        .route("/ws", get(ws_handler))
        .route("/leaderboard", get(leaderboard))
        .with_state(shared)
}

pub async fn serve(listener: tokio::net::TcpListener, settings: ServerSettings) -> Result<()> {
    axum::serve(listener, router(settings)).await?;
    Ok(())
}

async fn tick_loop(shared: Arc<Shared>) {
    let mut interval = tokio::time::interval(Duration::from_micros(1_000_000 / TICK_HZ as u64));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        let (messages, finished, agent_ends) = {
            let mut hub = shared.hub.lock().unwrap();
            let mode = hub.mode;
            let Some(session) = hub.session.as_mut() else {
                continue;
            };
            let messages = match session.tick() {
                Ok(m) => m,
                Err(e) => {
                    hub.session = None;
                    hub.mode = None;
                    hub.driver = None;
                    vec![ServerMessage::Error {
                        message: format!("session stopped: {e}"),
                    }]
                }
            };
            let finished = hub.session.as_mut().map(|s| s.take_finished()).unwrap_or_default();
            let agent_ends: Vec<LeaderboardEntry> = if mode == Some(PlayMode::Agent) {
                messages
                    .iter()
                    .filter_map(|m| match m {
                        ServerMessage::EpisodeEnd { total, frames, .. } => Some(LeaderboardEntry {
                            kind: EntryKind::Agent,
                            label: "agent".into(),
                            score: *total,
                            frames: *frames,
                            track_seed: None,
                        }),
                        _ => None,
                    })
                    .collect()
            } else {
                Vec::new()
            };
            (messages, finished, agent_ends)
        };
        for m in messages {
            let _ = shared.tx.send(m.to_json().into());
        }
        if !finished.is_empty() {
            let entries: Vec<LeaderboardEntry> = finished
                .iter()
                .map(|r| LeaderboardEntry {
                    kind: EntryKind::Human,
                    label: "human".into(),
                    score: r.total,
                    frames: r.frames,
                    track_seed: Some(r.track_seed),
                })
                .collect();
            if let Err(e) = Leaderboard::append(&shared.leaderboard, &entries) {
                eprintln!("leaderboard write failed: {e}");
            }
            if let Some(path) = &shared.recordings {
                if let Err(e) = append_recordings(path, &finished) {
                    eprintln!("recording write failed: {e}");
                }
            }
        }
        if !agent_ends.is_empty() {
            if let Err(e) = Leaderboard::append(&shared.leaderboard, &agent_ends) {
                eprintln!("leaderboard write failed: {e}");
            }
        }
    }
}

#[derive(Serialize)]
struct RunSummary {
    run: String,
    summary: EvalSummary,
}

#[derive(Serialize)]
struct LeaderboardView {
    human_reference: f64,
    entries: Vec<LeaderboardEntry>,
    runs: Vec<RunSummary>,
}

async fn leaderboard(State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    let entries = Leaderboard::read(&shared.leaderboard).unwrap_or_default();
    let runs = shared
        .runs
        .iter()
        .filter_map(|r| {
            let text = std::fs::read_to_string(RunDir::new(r).eval_summary()).ok()?;
            Some(RunSummary {
                run: r.display().to_string(),
                summary: serde_json::from_str(&text).ok()?,
            })
        })
        .collect();
    Json(LeaderboardView {
        human_reference: HUMAN_REFERENCE,
        entries,
        runs,
    })
}

async fn ws_handler(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

enum Role {
    Driver,
    Viewer,
}

/// Admits a client after its hello. Returns the role and, for a viewer of a
/// running session, the config message to send first.
fn admit(shared: &Shared, id: u64, mode: PlayMode) -> std::result::Result<(Role, Option<ServerMessage>), String> {
    let mut hub = shared.hub.lock().unwrap();
    let seed = shared.config.seed.wrapping_add(hub.sessions_started);
    match mode {
        PlayMode::Human if hub.driver.is_none() => {
            let mut session = PlaySession::human(shared.config.env.clone(), seed).map_err(|e| e.to_string())?;
            session.request_reset(None);
            hub.session = Some(session);
            hub.mode = Some(PlayMode::Human);
            hub.driver = Some(id);
            hub.sessions_started += 1;
            return Ok((Role::Driver, None));
        }
        PlayMode::Agent if hub.driver.is_none() && hub.mode != Some(PlayMode::Agent) => {
            let Some(trainer) = &shared.agent else {
                return Err("agent mode needs the server started with --checkpoint".into());
            };
            let cfg = trainer.lock().unwrap().config().clone();
            let agent = Box::new(TrainerAgent(trainer.clone()));
            let mut session = PlaySession::agent(cfg.env, cfg.observe, cfg.obs_mode, agent, seed)
                .map_err(|e| e.to_string())?;
            session.request_reset(None);
            hub.session = Some(session);
            hub.mode = Some(PlayMode::Agent);
            hub.sessions_started += 1;
            return Ok((Role::Viewer, None));
        }
        PlayMode::Agent if shared.agent.is_none() => {
            return Err("agent mode needs the server started with --checkpoint".into());
        }
        _ => {}
    }
    Ok((Role::Viewer, hub.session.as_ref().map(|s| s.config_message())))
}

async fn client(socket: WebSocket, shared: Arc<Shared>) {
    let (mut sink, mut stream) = socket.split();
    let id = {
        let mut hub = shared.hub.lock().unwrap();
        hub.next_id += 1;
        hub.next_id
    };
    let mut rx = shared.tx.subscribe();

    async fn fail(sink: &mut futures::stream::SplitSink<WebSocket, Message>, message: String) {
        let _ = sink.send(Message::Text(ServerMessage::Error { message }.to_json())).await;
        let _ = sink.send(Message::Close(None)).await;
    }

    let role = loop {
        match stream.next().await {
            Some(Ok(Message::Text(text))) => match ClientMessage::parse(&text) {
                Ok(ClientMessage::Hello { mode }) => match admit(&shared, id, mode) {
                    Ok((role, first)) => {
                        if let Some(m) = first {
                            if sink.send(Message::Text(m.to_json())).await.is_err() {
                                return;
                            }
                        }
                        break role;
                    }
                    Err(e) => return fail(&mut sink, e).await,
                },
                Ok(_) => return fail(&mut sink, "first message must be hello".into()).await,
                Err(e) => return fail(&mut sink, e).await,
            },
            Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
            Some(Ok(Message::Binary(_))) => return fail(&mut sink, "binary frames are not part of the protocol".into()).await,
            _ => return,
        }
    };

    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(text) => {
                    if sink.send(Message::Text(text.to_string())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => match ClientMessage::parse(&text) {
                    Ok(ClientMessage::Input { steer, gas, brake, .. }) => {
                        if matches!(role, Role::Driver) {
                            let mut hub = shared.hub.lock().unwrap();
                            if let Some(s) = hub.session.as_mut() {
                                s.latch(Control::new(steer, gas, brake));
                            }
                        }
                    }
                    Ok(ClientMessage::Reset { seed }) => {
                        if matches!(role, Role::Driver) {
                            let mut hub = shared.hub.lock().unwrap();
                            if let Some(s) = hub.session.as_mut() {
                                s.request_reset(seed);
                            }
                        }
                    }
                    Ok(ClientMessage::Hello { .. }) => {
                        fail(&mut sink, "hello may only be sent once".into()).await;
                        break;
                    }
                    Err(e) => {
                        fail(&mut sink, e).await;
                        break;
                    }
                },
                Some(Ok(Message::Binary(_))) => {
                    fail(&mut sink, "binary frames are not part of the protocol".into()).await;
                    break;
                }
                Some(Ok(_)) => continue,
                _ => break,
            },
        }
    }

    if matches!(role, Role::Driver) {
        let mut hub = shared.hub.lock().unwrap();
        if hub.driver == Some(id) {
            hub.driver = None;
            hub.session = None;
            hub.mode = None;
        }
    }
}
