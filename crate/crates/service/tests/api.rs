use std::path::Path;

use psm_core::dataset::save_dataset;
use psm_core::rational::int;
use psm_core::session::{SessionConfig, SessionState};
use psm_core::space::Answer;
use psm_service::{serve_on, AppState, RoundDescriptor, SessionSummary};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tokio::task::JoinHandle;

struct Server {
    base: String,
    client: Client,
    task: JoinHandle<()>,
}

impl Server {
    async fn start(store: &Path) -> Self {
        let state = AppState::open(store).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let task = tokio::spawn(async move {
            serve_on(listener, state).await.unwrap();
        });
        Self { base, client: Client::new(), task }
    }

    async fn stop(self) {
        self.task.abort();
        let _ = self.task.await;
    }

    async fn create(&self, body: Value) -> (StatusCode, Value) {
        let r = self.client.post(format!("{}/sessions", self.base)).json(&body).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn round(&self, id: &str) -> (StatusCode, Value) {
        let r = self.client.get(format!("{}/sessions/{id}/round", self.base)).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn answer(&self, id: &str, round: usize, answer: &[u32]) -> (StatusCode, Value) {
        let r = self
            .client
            .post(format!("{}/sessions/{id}/answer", self.base))
            .json(&json!({"round": round, "answer": answer}))
            .send()
            .await
            .unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn export(&self, id: &str) -> (StatusCode, Vec<u8>) {
        let r = self.client.get(format!("{}/sessions/{id}/export", self.base)).send().await.unwrap();
        (r.status(), r.bytes().await.unwrap().to_vec())
    }

    async fn list(&self) -> Vec<SessionSummary> {
        let r = self.client.get(format!("{}/sessions", self.base)).send().await.unwrap();
        r.json().await.unwrap()
    }
}

fn seeded(seed: u64) -> SessionConfig {
    SessionConfig { shuffle_seed: seed, ..SessionConfig::default() }
}

/// Scripted choice: the last affordable grid point in enumeration order.
fn scripted(state: &SessionState, index: usize) -> Answer {
    let set = &state.round(index).unwrap().set;
    state.space().points().filter(|q| set.contains_in(state.space(), q)).last().unwrap()
}

fn descriptor(v: &Value) -> RoundDescriptor {
    serde_json::from_value(v.clone()).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn scripted_walkthrough_exports_the_offline_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&dir.path().join("events.ndjson")).await;

    let (status, body) = server.create(json!({"shuffle_seed": 7})).await;
    assert_eq!(status, StatusCode::CREATED);
    let first = descriptor(&body);
    assert!(first.unconstrained && first.budget.is_none() && first.index == 0);
    assert_eq!(first.questions.iter().map(|q| q.scale).collect::<Vec<_>>(), vec![10, 10]);
    assert_eq!(first.questions[1].label, "Question 2");
    let id = first.session_id.clone();
    assert_eq!(id.len(), 32);

    let mut offline = SessionState::new(seeded(7)).unwrap();
    let (status, _) = server.answer(&id, 0, &[5, 5]).await;
    assert_eq!(status, StatusCode::OK);
    offline.submit(0, vec![5, 5]).unwrap();

    let mut seen = 0;
    while let Some(index) = offline.current_round() {
        let (status, body) = server.round(&id).await;
        assert_eq!(status, StatusCode::OK);
        let d = descriptor(&body);
        seen += 1;
        let round = offline.round(index).unwrap();
        assert_eq!((d.index, d.position, d.rounds_total), (index, seen, 8));
        assert_eq!(d.corner.as_deref(), Some(round.set.corner.coords()));
        assert!(!d.excluded);
        // q0 = (5,5) costs 5 + 10 at corner (0,0) under p = (1,2), so R = 13
        let step: Vec<_> = d.questions.iter().map(|q| q.step_price.unwrap()).collect();
        if d.corner == Some(vec![0, 0]) && step == vec![[1, 1], [2, 1]] {
            assert_eq!(d.budget, Some([13, 1]));
        }
        let q = scripted(&offline, index);
        let (status, reply) = server.answer(&id, index, q.values()).await;
        assert_eq!(status, StatusCode::OK, "{reply}");
        offline.submit(index, q.into_values()).unwrap();
        assert_eq!(reply["next_round"], json!(offline.current_round()));
    }
    assert_eq!(seen, 8);

    let (status, bytes) = server.export(&id).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, save_dataset(&offline.to_dataset().unwrap()).unwrap());

    let (status, body) = server.round(&id).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "session_complete");
    assert_eq!(body["details"]["export"], format!("/sessions/{id}/export"));
    let (status, body) = server.answer(&id, 8, &[0, 0]).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::CONFLICT, Some("session_complete")));

    let listed = server.list().await;
    assert_eq!(listed.len(), 1);
    assert_eq!(listed[0].session_id, id);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn rejected_answers_carry_structured_errors() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&dir.path().join("events.ndjson")).await;
    let (_, body) = server.create(json!({"shuffle_seed": 3})).await;
    let id = body["session_id"].as_str().unwrap().to_string();

    let (status, body) = server.export(&id).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(body["code"], "session_incomplete");

    let (status, body) = server.answer(&id, 0, &[11, 0]).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("out_of_range")));
    let (status, body) = server.answer(&id, 0, &[1, 2, 3]).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("dimension_mismatch")));
    let (status, body) = server.answer(&id, 2, &[1, 1]).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["details"], json!({"expected": 0, "found": 2}));

    server.answer(&id, 0, &[5, 5]).await;
    let (_, body) = server.round(&id).await;
    let d = descriptor(&body);
    let mut offline = SessionState::new(seeded(3)).unwrap();
    offline.submit(0, vec![5, 5]).unwrap();
    let set = &offline.round(d.index).unwrap().set;
    // the full opposite corner is never affordable after q0 = (5,5)
    let far: Vec<u32> = set.corner.coords().iter().map(|&c| 10 - c).collect();
    let shortfall = set.cost_in(offline.space(), &offline.space().answer(far.clone()).unwrap()) - &set.budget;
    assert!(shortfall > int(0));
    let (status, body) = server.answer(&id, d.index, &far).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "over_budget");
    assert_eq!(body["details"]["round"], d.index);
    let expected = psm_core::rational::to_pair(&shortfall).unwrap();
    assert_eq!(body["details"]["shortfall"], json!(expected));
    assert!(body["message"].is_string());

    let malformed = server
        .client
        .post(format!("{}/sessions/{id}/answer", server.base))
        .header("content-type", "application/json")
        .body("{\"round\": 1")
        .send()
        .await
        .unwrap();
    assert_eq!(malformed.status(), StatusCode::BAD_REQUEST);
    let body: Value = malformed.json().await.unwrap();
    assert_eq!(body["code"], "malformed_request");

    let (status, body) = server.round("0000").await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_session")));
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn config_overrides_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&dir.path().join("events.ndjson")).await;

    let (status, body) = server.create(json!({"budget_slack": [-1, 1]})).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_config")));
    let (status, body) = server.create(json!({"colour": "red"})).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("malformed_request")));
    let (status, _) = server.create(json!({"labels": ["only one"]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = server.create(json!({"rounds_per_corner": 1, "labels": ["Tax", "Health"]})).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["questions"][0]["label"], "Tax");
    let id = body["session_id"].as_str().unwrap();
    server.answer(id, 0, &[4, 6]).await;
    let (_, body) = server.round(id).await;
    assert_eq!(descriptor(&body).rounds_total, 4);

    // an empty body takes every default
    let r = server.client.post(format!("{}/sessions", server.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    assert_eq!(server.list().await.len(), 2);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn excluded_rounds_never_reach_the_client() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&dir.path().join("events.ndjson")).await;
    let (_, body) = server.create(json!({"shuffle_seed": 11})).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    // q0 at the origin costs nothing from corner (0,0): those rounds drop out
    server.answer(&id, 0, &[0, 0]).await;
    let mut offline = SessionState::new(seeded(11)).unwrap();
    offline.submit(0, vec![0, 0]).unwrap();
    let included = offline.rounds().iter().filter(|r| !r.excluded).count();
    assert!(included < 8);
    let mut positions = Vec::new();
    while let Some(index) = offline.current_round() {
        let d = descriptor(&server.round(&id).await.1);
        assert!(!d.excluded && d.rounds_total == included);
        positions.push(d.position);
        let q = scripted(&offline, index);
        server.answer(&id, index, q.values()).await;
        offline.submit(index, q.into_values()).unwrap();
    }
    assert_eq!(positions, (1..=included).collect::<Vec<_>>());
    let (_, bytes) = server.export(&id).await;
    assert_eq!(bytes, save_dataset(&offline.to_dataset().unwrap()).unwrap());
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn server_and_session_module_accept_the_same_answers() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&dir.path().join("events.ndjson")).await;
    let mut rng = StdRng::seed_from_u64(99);
    for seed in 0..4u64 {
        let (_, body) = server.create(json!({"shuffle_seed": seed})).await;
        let id = body["session_id"].as_str().unwrap().to_string();
        let mut offline = SessionState::new(seeded(seed)).unwrap();
        let mut attempts = 0;
        while let Some(index) = offline.current_round() {
            attempts += 1;
            let round = if rng.random_bool(0.1) { rng.random_range(0..10) } else { index };
            let answer: Vec<u32> = (0..2).map(|_| rng.random_range(0..=11)).collect();
            let (status, _) = server.answer(&id, round, &answer).await;
            let accepted = offline.submit(round, answer).is_ok();
            assert_eq!(status == StatusCode::OK, accepted, "round {round} attempt {attempts}");
        }
        let (_, bytes) = server.export(&id).await;
        assert_eq!(bytes, save_dataset(&offline.to_dataset().unwrap()).unwrap());
    }
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_rebuilds_state_after_any_kill_point() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("events.ndjson");
    let server = Server::start(&store).await;

    // two interleaved sessions, the second left half done
    let mut ids = Vec::new();
    let mut offline = Vec::new();
    for seed in [21u64, 22] {
        let (_, body) = server.create(json!({"shuffle_seed": seed})).await;
        ids.push(body["session_id"].as_str().unwrap().to_string());
        offline.push(SessionState::new(seeded(seed)).unwrap());
    }
    let mut script: Vec<(usize, usize, Vec<u32>)> = Vec::new();
    for (s, q0) in [(0, vec![3, 7]), (1, vec![6, 2])] {
        server.answer(&ids[s], 0, &q0).await;
        offline[s].submit(0, q0.clone()).unwrap();
        script.push((s, 0, q0));
    }
    for step in 0..12 {
        let s = if step < 8 { step % 2 } else { 0 };
        let Some(index) = offline[s].current_round() else { continue };
        let q = scripted(&offline[s], index);
        server.answer(&ids[s], index, q.values()).await;
        offline[s].submit(index, q.values().to_vec()).unwrap();
        script.push((s, index, q.into_values()));
    }
    server.stop().await;

    let log = std::fs::read_to_string(&store).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 2 + script.len());

    // kill after each complete event, with a torn half record behind it
    for cut in 0..=lines.len() {
        let mut text: String = lines[..cut].iter().map(|l| format!("{l}\n")).collect();
        if let Some(next) = lines.get(cut) {
            text.push_str(&next[..next.len() / 2]);
        }
        let path = dir.path().join(format!("cut{cut}.ndjson"));
        std::fs::write(&path, text).unwrap();
        let server = Server::start(&path).await;

        let created = cut.min(2);
        let applied = cut.saturating_sub(2);
        let mut expected: Vec<SessionState> =
            [21u64, 22].iter().map(|&seed| SessionState::new(seeded(seed)).unwrap()).collect();
        for (s, round, answer) in &script[..applied] {
            expected[*s].submit(*round, answer.clone()).unwrap();
        }
        let listed = server.list().await;
        assert_eq!(listed.len(), created);
        for s in 0..created {
            let (status, body) = server.round(&ids[s]).await;
            match expected[s].current_round() {
                Some(index) => {
                    assert_eq!(status, StatusCode::OK);
                    assert_eq!(descriptor(&body).index, index, "cut {cut} session {s}");
                }
                None => assert_eq!(body["code"], "session_complete"),
            }
            let summary = listed.iter().find(|l| l.session_id == ids[s]).unwrap();
            assert_eq!(summary.status, expected[s].status());
        }
        server.stop().await;
    }

    // the restarted service finishes the open session as if nothing happened
    let server = Server::start(&store).await;
    let (status, bytes) = server.export(&ids[0]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, save_dataset(&offline[0].to_dataset().unwrap()).unwrap());
    while let Some(index) = offline[1].current_round() {
        let q = scripted(&offline[1], index);
        let (status, _) = server.answer(&ids[1], index, q.values()).await;
        assert_eq!(status, StatusCode::OK);
        offline[1].submit(index, q.into_values()).unwrap();
    }
    let (_, bytes) = server.export(&ids[1]).await;
    assert_eq!(bytes, save_dataset(&offline[1].to_dataset().unwrap()).unwrap());
    server.stop().await;
}
