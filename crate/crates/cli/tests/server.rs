use std::path::PathBuf;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use pitlane::env::episode_score_oracle;
use pitlane::harness::{new_trainer, Leaderboard, RunConfig};
use pitlane_cli::server::{router, ServerSettings};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Server {
    addr: std::net::SocketAddr,
    leaderboard: PathBuf,
    recordings: PathBuf,
    _dir: tempfile::TempDir,
}

/// Short episodes keep the 50 Hz wall clock from dominating the test time.
fn config(frame_budget: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.env.frame_budget = frame_budget;
    cfg
}

async fn start(cfg: RunConfig, with_agent: bool) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let leaderboard = dir.path().join("leaderboard.jsonl");
    let recordings = dir.path().join("recordings.jsonl");
    let agent = with_agent.then(|| new_trainer(&cfg).unwrap());
    let settings = ServerSettings {
        config: cfg,
        agent,
        leaderboard: leaderboard.clone(),
        recordings: Some(recordings.clone()),
        runs: Vec::new(),
    };
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(settings);
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Server {
        addr,
        leaderboard,
        recordings,
        _dir: dir,
    }
}

async fn connect(s: &Server) -> Ws {
    connect_async(format!("ws://{}/ws", s.addr)).await.unwrap().0
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string())).await.unwrap();
}

/// Next text frame as JSON; `None` once the server closes.
async fn recv(ws: &mut Ws) -> Option<Value> {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("server went quiet");
        match msg {
            Some(Ok(Message::Text(t))) => return Some(serde_json::from_str(&t).unwrap()),
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return None,
            Some(Ok(_)) => continue,
        }
    }
}

async fn recv_type(ws: &mut Ws, ty: &str) -> Value {
    loop {
        let v = recv(ws).await.unwrap_or_else(|| panic!("closed while waiting for {ty}"));
        if v["type"] == ty {
            return v;
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn human_episode_round_trip() {
    let server = start(config(120), false).await;
    let mut ws = connect(&server).await;
    send(&mut ws, json!({"type": "hello", "mode": "human"})).await;

    let cfg = recv_type(&mut ws, "config").await;
    assert_eq!(cfg["tick_hz"], 50);
    let tiles = cfg["track"]["tiles"].as_array().unwrap();
    assert!(tiles.len() >= 50);
    assert_eq!(tiles[0].as_array().unwrap().len(), 4);
    assert_eq!(cfg["track"]["centerline"].as_array().unwrap().len(), tiles.len());
    let first = recv_type(&mut ws, "state").await;
    assert_eq!(first["frame"], 0);
    assert_eq!(first["done"], false);

    send(&mut ws, json!({"type": "input", "steer": 0.0, "gas": 1.0, "brake": 0.0, "seq": 1})).await;
    let mut speeds = Vec::new();
    let mut last_state = first;
    let end = loop {
        let v = recv(&mut ws).await.expect("closed mid-episode");
        match v["type"].as_str().unwrap() {
            "state" => {
                speeds.push(v["car"]["speed"].as_f64().unwrap());
                last_state = v;
            }
            "episode_end" => break v,
            other => panic!("unexpected {other}"),
        }
    };
    // Gas held on the opening straight: speed climbs.
    let moving: Vec<f64> = speeds.into_iter().filter(|s| *s > 0.0).collect();
    assert!(moving.len() > 20);
    assert!(moving.windows(2).take(20).all(|w| w[1] > w[0]), "{moving:?}");

    let frames = end["frames"].as_u64().unwrap();
    assert_eq!(frames, last_state["frame"].as_u64().unwrap());
    assert_eq!(last_state["done"], true);
    let died = end["cause"] == "died";
    let oracle = episode_score_oracle(
        frames,
        last_state["tiles_visited"].as_u64().unwrap() as usize,
        last_state["tile_count"].as_u64().unwrap() as usize,
        died,
    );
    assert_eq!(end["total"].as_f64().unwrap(), oracle);
    assert_eq!(last_state["total"].as_f64().unwrap(), oracle);

    // The finished episode lands in the recordings and on the leaderboard.
    tokio::time::sleep(Duration::from_millis(100)).await;
    let board = Leaderboard::read(&server.leaderboard).unwrap();
    assert_eq!(board.len(), 1);
    assert_eq!(board[0].score, oracle);
    let recs = pitlane::harness::read_recordings(&server.recordings).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].frames, frames);

    // Reset starts a fresh episode with its own config message.
    send(&mut ws, json!({"type": "reset", "seed": 4})).await;
    recv_type(&mut ws, "config").await;
    let fresh = recv_type(&mut ws, "state").await;
    assert_eq!(fresh["frame"], 0);
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_messages_get_error_then_close() {
    let server = start(config(1000), false).await;
    for bad in [
        "{not json",
        r#"{"type":"input","steer":0,"gas":1,"brake":0,"seq":1}"#,
        r#"{"type":"hello","mode":"pilot"}"#,
    ] {
        let mut ws = connect(&server).await;
        ws.send(Message::Text(bad.into())).await.unwrap();
        let v = recv(&mut ws).await.expect("error frame");
        assert_eq!(v["type"], "error", "{bad}");
        assert!(recv(&mut ws).await.is_none(), "{bad} should close");
    }

    // After a valid hello a malformed frame also closes the connection.
    let mut ws = connect(&server).await;
    send(&mut ws, json!({"type": "hello", "mode": "human"})).await;
    recv_type(&mut ws, "config").await;
    send(&mut ws, json!({"type": "input", "steer": "left"})).await;
    recv_type(&mut ws, "error").await;
    while recv(&mut ws).await.is_some() {}
}

#[tokio::test(flavor = "multi_thread")]
async fn second_human_becomes_spectator() {
    let server = start(config(1000), false).await;
    let mut driver = connect(&server).await;
    send(&mut driver, json!({"type": "hello", "mode": "human"})).await;
    recv_type(&mut driver, "config").await;
    recv_type(&mut driver, "state").await;

    let mut viewer = connect(&server).await;
    send(&mut viewer, json!({"type": "hello", "mode": "human"})).await;
    let cfg = recv_type(&mut viewer, "config").await;
    assert!(cfg["track"]["tiles"].as_array().unwrap().len() >= 50);
    // Viewer input is ignored: the car stays at rest until the driver presses gas.
    send(&mut viewer, json!({"type": "input", "steer": 0.0, "gas": 1.0, "brake": 0.0, "seq": 1})).await;
    for _ in 0..15 {
        let s = recv_type(&mut viewer, "state").await;
        assert_eq!(s["car"]["speed"], 0.0);
    }
    send(&mut driver, json!({"type": "input", "steer": 0.0, "gas": 1.0, "brake": 0.0, "seq": 1})).await;
    loop {
        let s = recv_type(&mut viewer, "state").await;
        if s["car"]["speed"].as_f64().unwrap() > 0.0 {
            break;
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn agent_mode_needs_a_checkpoint() {
    let server = start(config(1000), false).await;
    let mut ws = connect(&server).await;
    send(&mut ws, json!({"type": "hello", "mode": "agent"})).await;
    let v = recv(&mut ws).await.unwrap();
    assert_eq!(v["type"], "error");
    assert!(v["message"].as_str().unwrap().contains("checkpoint"));
    assert!(recv(&mut ws).await.is_none());
}

#[tokio::test(flavor = "multi_thread")]
async fn agent_episodes_are_broadcast_and_scored() {
    let server = start(config(120), true).await;
    let mut ws = connect(&server).await;
    send(&mut ws, json!({"type": "hello", "mode": "agent"})).await;
    recv_type(&mut ws, "config").await;
    let end = recv_type(&mut ws, "episode_end").await;
    assert!(end["frames"].as_u64().unwrap() <= 120);
    // Agent episodes restart by themselves.
    recv_type(&mut ws, "config").await;

    let mut spectator = connect(&server).await;
    send(&mut spectator, json!({"type": "hello", "mode": "spectate"})).await;
    recv_type(&mut spectator, "config").await;
    recv_type(&mut spectator, "state").await;

    tokio::time::sleep(Duration::from_millis(100)).await;
    let board = Leaderboard::read(&server.leaderboard).unwrap();
    assert!(board.iter().any(|e| e.score == end["total"].as_f64().unwrap()));
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).await.unwrap();
    let status = buf.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = buf.split_once("\r\n\r\n").unwrap().1.to_string();
    (status, body)
}

#[tokio::test(flavor = "multi_thread")]
async fn leaderboard_endpoint_serves_entries_and_reference() {
    let server = start(config(1000), false).await;
    let (status, body) = http_get(server.addr, "/leaderboard").await;
    assert_eq!(status, 200);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["human_reference"], 800.0);
    assert_eq!(v["entries"].as_array().unwrap().len(), 0);

    Leaderboard::append(
        &server.leaderboard,
        &[pitlane::harness::LeaderboardEntry {
            kind: pitlane::harness::EntryKind::Human,
            label: "tester".into(),
            score: 612.5,
            frames: 875,
            track_seed: Some(3),
        }],
    )
    .unwrap();
    let (_, body) = http_get(server.addr, "/leaderboard").await;
    let v: Value = serde_json::from_str(&body).unwrap();
    let e = &v["entries"][0];
    assert_eq!((e["label"].as_str(), e["score"].as_f64()), (Some("tester"), Some(612.5)));
}
