use std::time::Duration;

use camo_core::simulator::{builtin, plan_trajectory, synthesize_imu, PatternSpec};
use camo_service::protocol::{ClientMessage, ErrorCode, MapSpec, ServerMessage, SessionConfig};
use camo_service::ServerConfig;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn start(cfg: ServerConfig) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("ws://{}/ws", listener.local_addr().unwrap());
    tokio::spawn(camo_service::serve(listener, cfg));
    url
}

async fn connect(url: &str) -> Ws {
    tokio_tungstenite::connect_async(url).await.unwrap().0
}

async fn send(ws: &mut Ws, msg: &ClientMessage) {
    ws.send(Message::text(serde_json::to_string(msg).unwrap()))
        .await
        .unwrap();
}

async fn recv(ws: &mut Ws) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("server reply")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

fn config(id: &str) -> ClientMessage {
    let mut cfg = SessionConfig::new(id);
    cfg.map = MapSpec::Simulate(PatternSpec {
        width_mm: 100.0,
        height_mm: 100.0,
        ..PatternSpec::default()
    });
    cfg.decimation = Some(1);
    ClientMessage::Init { config: Box::new(cfg) }
}

async fn open(url: &str, id: &str) -> Ws {
    let mut ws = connect(url).await;
    send(&mut ws, &config(id)).await;
    match recv(&mut ws).await {
        ServerMessage::Ack { session_id, .. } => assert_eq!(session_id, id),
        other => panic!("{other:?}"),
    }
    ws
}

fn error_code(m: &ServerMessage) -> Option<ErrorCode> {
    match m {
        ServerMessage::Error { code, .. } => Some(*code),
        _ => None,
    }
}

#[tokio::test]
async fn duplicate_ids_and_capacity() {
    let url = start(ServerConfig {
        max_sessions: 2,
        ..ServerConfig::default()
    })
    .await;
    let _a = open(&url, "a").await;

    let mut dup = connect(&url).await;
    send(&mut dup, &config("a")).await;
    assert_eq!(error_code(&recv(&mut dup).await), Some(ErrorCode::DuplicateId));

    let b = open(&url, "b").await;
    let mut full = connect(&url).await;
    send(&mut full, &config("c")).await;
    match recv(&mut full).await {
        ServerMessage::Error {
            code: ErrorCode::Capacity,
            retry_after_ms,
            ..
        } => assert!(retry_after_ms.is_some()),
        other => panic!("{other:?}"),
    }

    // Closing a connection frees its slot.
    drop(b);
    let mut opened = false;
    for _ in 0..50 {
        send(&mut full, &config("c")).await;
        if matches!(recv(&mut full).await, ServerMessage::Ack { .. }) {
            opened = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert!(opened);
}

#[tokio::test]
async fn messages_before_init_and_garbage() {
    let url = start(ServerConfig::default()).await;
    let mut ws = connect(&url).await;
    send(&mut ws, &ClientMessage::Reset).await;
    assert_eq!(error_code(&recv(&mut ws).await), Some(ErrorCode::NotInitialized));
    ws.send(Message::text("{nope")).await.unwrap();
    assert_eq!(error_code(&recv(&mut ws).await), Some(ErrorCode::BadMessage));
}

#[tokio::test]
async fn sessions_are_isolated() {
    let url = start(ServerConfig::default()).await;
    let s = builtin::straight_line();
    let imu = synthesize_imu(&plan_trajectory(&s).unwrap(), &s);
    let mut good = open(&url, "good").await;
    let mut bad = open(&url, "bad").await;

    let mut broken = imu[..20].to_vec();
    broken[10].t = -1.0;
    send(&mut bad, &ClientMessage::Imu { samples: broken }).await;
    send(
        &mut good,
        &ClientMessage::Imu {
            samples: imu[..20].to_vec(),
        },
    )
    .await;

    let mut bad_states = 0;
    loop {
        let m = recv(&mut bad).await;
        if error_code(&m) == Some(ErrorCode::Stream) {
            break;
        }
        bad_states += usize::from(matches!(m, ServerMessage::State { .. }));
    }
    assert_eq!(bad_states, 10);

    for expect in 1..=20u64 {
        match recv(&mut good).await {
            ServerMessage::State { seq, .. } => assert_eq!(seq, expect),
            other => panic!("{other:?}"),
        }
    }

    send(&mut bad, &ClientMessage::Reset).await;
    assert!(matches!(recv(&mut bad).await, ServerMessage::Ack { .. }));
    send(
        &mut bad,
        &ClientMessage::Imu {
            samples: imu[..1].to_vec(),
        },
    )
    .await;
    assert!(matches!(recv(&mut bad).await, ServerMessage::State { seq: 11, .. }));
}

#[tokio::test]
async fn frame_request_returns_png() {
    let url = start(ServerConfig::default()).await;
    let mut ws = open(&url, "frames").await;
    send(&mut ws, &ClientMessage::FrameRequest).await;
    match recv(&mut ws).await {
        ServerMessage::Frame { seq, png_base64 } => {
            assert_eq!(seq, 0);
            assert!(png_base64.starts_with("iVBORw0KGgo"));
        }
        other => panic!("{other:?}"),
    }
}
