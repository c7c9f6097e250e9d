mod support;

use std::time::Duration;

use flowclass_core::samples;
use flowclass_server::client::Client;
use flowclass_server::events::EventMessage;
use flowclass_server::ServerConfig;
use support::{boot, boot_with, loop_game, take_frames, SECRET};

const EPOCH_1: u64 = 1 << 32;
const EPOCH_2: u64 = 2 << 32;
const WAIT: Duration = Duration::from_secs(5);

fn message(f: &flowclass_server::client::SseFrame) -> EventMessage {
    serde_json::from_str(&f.data).expect("event json")
}

#[tokio::test(flavor = "multi_thread")]
async fn reconnecting_with_the_last_id_skips_what_was_seen() {
    let dir = tempfile::tempdir().unwrap();
    let server = boot(dir.path()).await;
    let prof = Client::professor(server.url(), SECRET);
    let student = Client::new(server.url());
    let game = prof.create_game(&loop_game("ALPHA1")).await.unwrap().game_id;
    prof.open_game(&game).await.unwrap();
    let token = student.join("ALPHA1", "AM1", 1).await.unwrap().session_token;
    student
        .submit_diagram(&token, &samples::loop_with_branch().diagram)
        .await
        .unwrap();
    prof.advance_game(&game).await.unwrap();

    let mut first = student.session_events(&token, None).await.unwrap();
    let frames = take_frames(&mut first, 1, WAIT).await;
    assert_eq!(frames.len(), 1);
    assert_eq!(frames[0].event.as_deref(), Some("phase_advanced"));
    assert_eq!(frames[0].id.as_deref(), Some("4294967297"));
    let seen = message(&frames[0]).sequence_number;
    assert_eq!(seen, EPOCH_1 | 1);
    drop(first);

    let mut again = student.session_events(&token, Some(seen)).await.unwrap();
    prof.close_game(&game).await.unwrap();
    let frames = take_frames(&mut again, 1, WAIT).await;
    assert_eq!(frames[0].event.as_deref(), Some("game_closed"));
    assert_eq!(message(&frames[0]).sequence_number, EPOCH_1 | 2);
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn a_restart_starts_a_new_epoch_and_asks_for_resync() {
    let dir = tempfile::tempdir().unwrap();
    let server = boot(dir.path()).await;
    assert_eq!(server.epoch, 1);
    let prof = Client::professor(server.url(), SECRET);
    let student = Client::new(server.url());
    let game = prof.create_game(&loop_game("ALPHA1")).await.unwrap().game_id;
    prof.open_game(&game).await.unwrap();
    let token = student.join("ALPHA1", "AM1", 1).await.unwrap().session_token;
    student
        .submit_diagram(&token, &samples::loop_with_branch().diagram)
        .await
        .unwrap();
    prof.advance_game(&game).await.unwrap();
    let seen = student.poll_session(&token, None).await.unwrap().cursor;
    assert_eq!(seen, EPOCH_1 | 1);
    server.shutdown().await.unwrap();

    let server = boot(dir.path()).await;
    assert_eq!(server.epoch, 2);
    let prof = Client::professor(server.url(), SECRET);
    let student = Client::new(server.url());
    let mut stream = student.session_events(&token, Some(seen)).await.unwrap();
    let frames = take_frames(&mut stream, 1, WAIT).await;
    assert_eq!(frames[0].event.as_deref(), Some("resync"));
    assert_eq!(frames[0].id, None);
    let body: serde_json::Value = serde_json::from_str(&frames[0].data).unwrap();
    assert_eq!(body, serde_json::json!({ "type": "resync", "epoch": 2 }));

    prof.close_game(&game).await.unwrap();
    let frames = take_frames(&mut stream, 1, WAIT).await;
    assert_eq!(frames[0].event.as_deref(), Some("game_closed"));
    assert_eq!(message(&frames[0]).sequence_number, EPOCH_2 | 1);

    // polling from the old epoch resyncs too, and state comes along
    let polled = student.poll_session(&token, Some(seen)).await.unwrap();
    assert!(polled.batch.resync);
    assert_eq!(polled.batch.events.len(), 1);
    assert_eq!(polled.cursor, EPOCH_2 | 1);
    assert_eq!(polled.state.unwrap()["game_phase"], "closed");
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn a_reader_that_fell_behind_gets_resync_and_the_buffer() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServerConfig::new(0, dir.path(), SECRET);
    config.mailbox_capacity = 4;
    let server = boot_with(config).await;
    let prof = Client::professor(server.url(), SECRET);
    let student = Client::new(server.url());
    let game = prof.create_game(&loop_game("ALPHA1")).await.unwrap().game_id;
    prof.open_game(&game).await.unwrap();
    let first = prof.poll_professor(None).await.unwrap();
    assert!(!first.batch.resync);
    let cursor = first.cursor;
    for i in 0..5 {
        student.join("ALPHA1", &format!("AM{i}"), 1).await.unwrap();
    }
    let behind = prof.poll_professor(Some(cursor)).await.unwrap();
    assert!(behind.batch.resync);
    assert_eq!(behind.batch.events.len(), 4);
    let seqs: Vec<u64> = behind.batch.events.iter().map(|e| e.sequence_number).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1));
    assert_eq!(behind.cursor, *seqs.last().unwrap());

    let current = prof.poll_professor(Some(behind.cursor)).await.unwrap();
    assert!(!current.batch.resync);
    assert!(current.batch.events.is_empty());
    assert_eq!(current.cursor, behind.cursor);
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn browsers_can_authenticate_streams_in_the_query() {
    let dir = tempfile::tempdir().unwrap();
    let server = boot(dir.path()).await;
    let http = reqwest::Client::new();
    let ok = http
        .get(format!("{}/api/prof/events?secret={SECRET}", server.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(ok.status(), 200);
    assert_eq!(ok.headers()["content-type"], "text/event-stream");
    drop(ok);
    let denied = http
        .get(format!("{}/api/prof/events?secret=wrong", server.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(denied.status(), 401);

    let prof = Client::professor(server.url(), SECRET);
    let game = prof.create_game(&loop_game("ALPHA1")).await.unwrap().game_id;
    prof.open_game(&game).await.unwrap();
    let token = Client::new(server.url())
        .join("ALPHA1", "AM1", 1)
        .await
        .unwrap()
        .session_token;
    let student = http
        .get(format!("{}/api/session/events?token={}", server.url(), token.as_str()))
        .send()
        .await
        .unwrap();
    assert_eq!(student.status(), 200);
    drop(student);
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn late_joiners_are_told_they_are_in_phase_two() {
    let dir = tempfile::tempdir().unwrap();
    let server = boot(dir.path()).await;
    let prof = Client::professor(server.url(), SECRET);
    let student = Client::new(server.url());
    let game = prof.create_game(&loop_game("ALPHA1")).await.unwrap().game_id;
    prof.open_game(&game).await.unwrap();
    prof.advance_game(&game).await.unwrap();
    let joined = student.join("ALPHA1", "AM9", 1).await.unwrap();
    let polled = student.poll_session(&joined.session_token, None).await.unwrap();
    let kinds: Vec<&str> = polled.batch.events.iter().map(|e| e.kind.as_str()).collect();
    assert_eq!(kinds, ["phase_advanced"]);
    server.shutdown().await.unwrap();
}
