use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use tokio::sync::oneshot;

use elitepol_client::ReviewClient;
use elitepol_core::corpus::Speech;
use elitepol_core::extraction::Mention;
use elitepol_core::gateway::Verdict;
use elitepol_core::review::api::ResolutionInput;
use elitepol_core::review::{ReviewInputs, TaskKind, TaskStatus};
use elitepol_core::validation::{CorrectionOp, Provenance, SupergoldStatus};
use elitepol_service::{bind, serve, Service, ServiceError};

fn speech(id: &str) -> Speech {
    Speech {
        speech_id: id.into(),
        country: "HU".into(),
        date: NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
        speaker_name: "Tóth Bertalan".into(),
        speaker_party: Some("MSZP".into()),
        chamber: None,
        text: "Orban and Brussels were mentioned.".into(),
        source: "fixture".into(),
        address_stripped: false,
        excluded: false,
    }
}

fn mention(speech: &str, row: usize, actor: &str, sentiment: i8) -> Mention {
    Mention {
        speech_id: speech.into(),
        row,
        actor_surface: actor.into(),
        context_description: String::new(),
        political_rationale: String::new(),
        sentiment,
        sentiment_rounded: false,
    }
}

fn inputs() -> ReviewInputs {
    ReviewInputs {
        sample: vec![speech("s1"), speech("s2")],
        ai_findings: vec![mention("s1", 0, "Orban", -2), mention("s1", 1, "Brussels", -1)],
        gold: vec![],
        verdicts: [("s1.a1".to_string(), Verdict::Yes)].into(),
        resolution_queue: vec![],
        threshold: 0.85,
    }
}

struct Running {
    base: String,
    stop: Option<oneshot::Sender<()>>,
    handle: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Running {
    fn client(&self, coder: &str) -> ReviewClient {
        ReviewClient::new(&self.base, coder)
    }

    async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.handle.await.unwrap().unwrap();
    }
}

async fn start(service: Service) -> Running {
    let listener = bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = oneshot::channel();
    let handle = tokio::spawn(serve(listener, Arc::new(service), async {
        let _ = rx.await;
    }));
    Running {
        base,
        stop: Some(tx),
        handle,
    }
}

#[tokio::test]
async fn health_reports_version() {
    let srv = start(Service::in_memory(inputs())).await;
    let h = srv.client("ann").health().await.unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.version, env!("CARGO_PKG_VERSION"));
    srv.stop().await;
}

#[tokio::test]
async fn posting_gold_returns_created_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("review_journal.jsonl");
    let srv = start(Service::open(inputs(), &journal).unwrap()).await;
    let resp = post_raw(
        &srv.base,
        "/gold",
        r#"{"speech_id":"s1","actor":"Viktor Orbán","sentiment":-3}"#,
        Some("ann"),
    )
    .await;
    assert_eq!(resp.0, 201);
    let c = srv.client("ann");
    assert_eq!(c.gold().await.unwrap().len(), 1);
    srv.stop().await;

    let lines = std::fs::read_to_string(&journal).unwrap();
    assert_eq!(lines.lines().count(), 1);
    assert!(lines.contains("\"event\":\"gold-added\""));
    let reopened = start(Service::open(inputs(), &journal).unwrap()).await;
    let gold = reopened.client("ann").gold().await.unwrap();
    assert_eq!(gold[0].actor_surface, "Viktor Orbán");
    assert_eq!(gold[0].coder, "ann");
    reopened.stop().await;
}

#[tokio::test]
async fn invalid_writes_are_rejected() {
    let srv = start(Service::in_memory(inputs())).await;
    let outside = post_raw(
        &srv.base,
        "/gold",
        r#"{"speech_id":"s9","actor":"Orban","sentiment":-3}"#,
        Some("ann"),
    )
    .await;
    assert_eq!(outside.0, 422);
    let range = post_raw(
        &srv.base,
        "/gold",
        r#"{"speech_id":"s1","actor":"Orban","sentiment":7}"#,
        Some("ann"),
    )
    .await;
    assert_eq!(range.0, 422);
    let anonymous = post_raw(
        &srv.base,
        "/gold",
        r#"{"speech_id":"s1","actor":"Orban","sentiment":-3}"#,
        None,
    )
    .await;
    assert_eq!(anonymous.0, 400);
    let missing = srv
        .client("ann")
        .decide_supergold("s1.a7", true, None)
        .await
        .unwrap_err();
    assert_eq!(missing.status().map(|s| s.as_u16()), Some(404));
    assert!(srv.client("ann").gold().await.unwrap().is_empty());
    srv.stop().await;
}

#[tokio::test]
async fn task_queue_filters_and_rejects_unknown_kinds() {
    let srv = start(Service::in_memory(inputs())).await;
    let c = srv.client("ann");
    assert_eq!(get_raw(&srv.base, "/tasks?kind=bogus").await.0, 400);
    assert_eq!(get_raw(&srv.base, "/tasks?status=closed").await.0, 400);
    assert!(c
        .tasks(Some(TaskKind::ApproveResolution), None)
        .await
        .unwrap()
        .is_empty());

    c.skip_task("code:s1", 0).await.unwrap();
    let open = c
        .tasks(Some(TaskKind::CodeSpeech), Some(TaskStatus::Open))
        .await
        .unwrap();
    assert_eq!(open.iter().map(|t| t.task_id.as_str()).collect::<Vec<_>>(), ["code:s2"]);
    let all = c.tasks(Some(TaskKind::CodeSpeech), None).await.unwrap();
    assert_eq!(
        all.iter().map(|t| t.task_id.as_str()).collect::<Vec<_>>(),
        ["code:s2", "code:s1"]
    );
    assert_eq!(all[1].status, TaskStatus::Skipped);
    assert_eq!(all[1].completed_by.as_deref(), Some("ann"));
    srv.stop().await;
}

#[tokio::test]
async fn match_correction_changes_metrics() {
    let srv = start(Service::in_memory(inputs())).await;
    let c = srv.client("ann");
    c.add_gold("s1", "Orbán", -3).await.unwrap();
    c.add_gold("s1", "Viktor Orbán", -3).await.unwrap();

    let ms = c.matches().await.unwrap();
    let ids: Vec<&str> = ms.triples.iter().map(|t| t.id.as_str()).collect();
    assert_eq!(ids, ["s1.a0.g0", "s1.a1", "s1.g1"]);
    assert!(ms.triples[0].duplicate && ms.triples[2].duplicate);
    let fixes = c.tasks(Some(TaskKind::FixMatch), Some(TaskStatus::Open)).await.unwrap();
    assert_eq!(fixes.len(), 2);

    let before = c.metrics().await.unwrap();
    assert!(!before.complete);
    assert_eq!(before.pending, 3);

    let ms = c
        .correct_match("s1.a0.g0", CorrectionOp::Merge { with: "s1.g1".into() }, Some(0))
        .await
        .unwrap();
    assert_eq!(ms.triples.len(), 2);
    assert_eq!(ms.audit.len(), 1);
    assert_eq!(ms.audit[0].coder, "ann");
    assert_eq!(c.metrics().await.unwrap().pending, 2);

    let view = c.supergold_record("s1.a1").await.unwrap();
    assert_eq!(view.record.provenance, Provenance::AiVerified);
    let rev = view.task.unwrap().revision;
    c.decide_supergold("s1.a1", true, Some(rev)).await.unwrap();
    let done = c.decide_supergold("s1.a0.g0", true, Some(0)).await.unwrap();
    assert_eq!(done.record.status, SupergoldStatus::Confirmed);
    assert_eq!(done.record.provenance, Provenance::Both);

    let view = c.metrics().await.unwrap();
    assert!(view.complete);
    let m = view.metrics.unwrap();
    assert_eq!(m.supergold_size, 2);
    assert_eq!(m.sensitivity_vs_supergold, 100.0);
    assert_eq!(m.sensitivity_vs_human, Some(200.0));
    assert_eq!(m.mean_signed_diff, Some(1.0));
    assert_eq!(m.mean_abs_diff, Some(1.0));
    assert_eq!(m.fdr, Some(0.0));
    // Same inputs, same answer.
    assert_eq!(c.metrics().await.unwrap().metrics.unwrap(), m);
    srv.stop().await;
}

#[tokio::test]
async fn two_clients_racing_for_one_task() {
    let srv = start(Service::in_memory(inputs())).await;
    let (a, b) = (srv.client("ann"), srv.client("bela"));
    let (ra, rb) = tokio::join!(a.complete_task("code:s2", 0), b.complete_task("code:s2", 0));
    let wins = [ra.is_ok(), rb.is_ok()];
    assert_eq!(wins.iter().filter(|w| **w).count(), 1, "{ra:?} {rb:?}");
    let loser = ra.err().or(rb.err()).expect("one conflict");
    assert!(loser.is_conflict(), "{loser}");
    let winner = if wins[0] { "ann" } else { "bela" };
    let task = a
        .tasks(Some(TaskKind::CodeSpeech), Some(TaskStatus::Done))
        .await
        .unwrap();
    assert_eq!(task[0].completed_by.as_deref(), Some(winner));
    // The winner repeating itself is harmless.
    let again = if wins[0] {
        a.complete_task("code:s2", 0).await
    } else {
        b.complete_task("code:s2", 0).await
    };
    assert!(again.is_ok());
    srv.stop().await;
}

#[tokio::test]
async fn concurrent_supergold_decisions_conflict() {
    let srv = start(Service::in_memory(inputs())).await;
    let (a, b) = (srv.client("ann"), srv.client("bela"));
    let (ra, rb) = tokio::join!(
        a.decide_supergold("s1.a1", true, Some(0)),
        b.decide_supergold("s1.a1", false, Some(0))
    );
    assert_eq!([ra.is_ok(), rb.is_ok()].iter().filter(|w| **w).count(), 1);
    srv.stop().await;
}

#[tokio::test]
async fn journal_replay_rebuilds_state() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("j.jsonl");
    let srv = start(Service::open(inputs(), &journal).unwrap()).await;
    let c = srv.client("ann");
    c.add_gold("s1", "Orbán", -3).await.unwrap();
    c.add_gold("s1", "Viktor Orbán", -3).await.unwrap();
    c.correct_match("s1.a0.g0", CorrectionOp::Merge { with: "s1.g1".into() }, None)
        .await
        .unwrap();
    c.decide_supergold("s1.a1", true, None).await.unwrap();
    c.decide_supergold("s1.a1", true, None).await.unwrap();
    c.skip_task("code:s2", 0).await.unwrap();
    let live = (
        c.matches().await.unwrap(),
        c.supergold().await.unwrap(),
        c.tasks(None, None).await.unwrap(),
        c.metrics().await.unwrap(),
    );
    srv.stop().await;
    assert_eq!(std::fs::read_to_string(&journal).unwrap().lines().count(), 5);

    let again = start(Service::open(inputs(), &journal).unwrap()).await;
    let c = again.client("other");
    let replayed = (
        c.matches().await.unwrap(),
        c.supergold().await.unwrap(),
        c.tasks(None, None).await.unwrap(),
        c.metrics().await.unwrap(),
    );
    assert_eq!(live, replayed);
    again.stop().await;
}

#[tokio::test]
async fn resolution_queue_decisions() {
    let entry: elitepol_core::resolution::QueueEntry = serde_json::from_value(serde_json::json!({
        "id": "s1:1", "speech_id": "s1", "row": 1, "alias": "the State Audit Office", "country": "HU",
        "date": "2020-03-02", "candidates": [], "suggested": "State Audit Office"
    }))
    .unwrap();
    let mut inp = inputs();
    inp.resolution_queue = vec![entry];
    let srv = start(Service::in_memory(inp)).await;
    let c = srv.client("ann");
    let approve = ResolutionInput {
        approve: true,
        canonical_entity: None,
        revision: Some(0),
    };
    assert_eq!(
        c.decide_resolution("s1:1", &approve)
            .await
            .unwrap_err()
            .status()
            .unwrap()
            .as_u16(),
        422
    );
    let approve = ResolutionInput {
        canonical_entity: Some("State Audit Office".into()),
        ..approve
    };
    let item = c.decide_resolution("s1:1", &approve).await.unwrap();
    assert_eq!(item.decided_by.as_deref(), Some("ann"));
    assert!(item.decision.unwrap().approve);
    let q = c.resolution_queue().await.unwrap();
    assert_eq!(q.len(), 1);
    let task = c.tasks(Some(TaskKind::ApproveResolution), None).await.unwrap();
    assert_eq!(task[0].status, TaskStatus::Done);
    let reject = ResolutionInput {
        approve: false,
        canonical_entity: None,
        revision: None,
    };
    assert!(srv
        .client("bela")
        .decide_resolution("s1:1", &reject)
        .await
        .unwrap_err()
        .is_conflict());
    srv.stop().await;
}

#[tokio::test]
async fn busy_port_is_reported() {
    let first = bind("127.0.0.1:0").await.unwrap();
    let addr = first.local_addr().unwrap().to_string();
    match bind(&addr).await {
        Err(e @ ServiceError::PortBusy { .. }) => assert!(e.to_string().contains("already in use")),
        other => panic!("expected PortBusy, got {other:?}"),
    }
}

#[test]
fn corrupt_journal_fails_to_open() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("j.jsonl");
    std::fs::write(&journal, r#"{"event":"task-closed","task_id":"code:nope","revision":0,"status":"done","coder":"a","at":"2020-01-01T00:00:00Z"}"#.to_owned() + "\n").unwrap();
    let err = Service::open(inputs(), Path::new(&journal)).err().unwrap();
    assert!(matches!(err, ServiceError::Replay { line: 1, .. }), "{err}");
}

async fn post_raw(base: &str, path: &str, body: &str, coder: Option<&str>) -> (u16, String) {
    raw(base, "POST", path, Some(body), coder).await
}

async fn get_raw(base: &str, path: &str) -> (u16, String) {
    raw(base, "GET", path, None, None).await
}

/// Minimal HTTP/1.1 exchange for requests the typed client cannot produce.
async fn raw(base: &str, method: &str, path: &str, body: Option<&str>, coder: Option<&str>) -> (u16, String) {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let host = base.trim_start_matches("http://");
    let mut s = tokio::net::TcpStream::connect(host).await.unwrap();
    let body = body.unwrap_or("");
    let mut req = format!("{method} {path} HTTP/1.1\r\nhost: {host}\r\nconnection: close\r\ncontent-type: application/json\r\ncontent-length: {}\r\n", body.len());
    if let Some(c) = coder {
        req.push_str(&format!("x-coder: {c}\r\n"));
    }
    req.push_str("\r\n");
    req.push_str(body);
    s.write_all(req.as_bytes()).await.unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).await.unwrap();
    let status = out.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, out)
}
