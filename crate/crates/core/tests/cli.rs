mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture_path;
use secbelief::rules::{builtin_catalog, install_builtin, RulesConfig};
use secbelief::service::{router, system_clock, AppState, ServiceConfig};
use secbelief::KnowledgeBase;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secbelief"))
        .args(args)
        .env_remove("SECBELIEF_SERVER")
        .env_remove("SECBELIEF_DATA_DIR")
        .output()
        .unwrap()
}

fn local(dir: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--data-dir", dir.to_str().unwrap()];
    all.extend_from_slice(args);
    bin(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fx(name: &str) -> String {
    fixture_path(name).to_string_lossy().into_owned()
}

fn first_issue_key(json: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(json).unwrap();
    v[0]["issue_key"].as_str().unwrap().to_string()
}

#[test]
fn ingest_prints_summary_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = local(dir.path(), &["ingest", &fx("sarif_small.json")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("3 findings, 0 skipped"), "{}", stdout(&out));

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "not a report").unwrap();
    let out = local(dir.path(), &["ingest", &fx("dast_small.json"), bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("2 findings"));

    assert_eq!(local(dir.path(), &["ingest"]).status.code(), Some(2));
    assert_eq!(local(dir.path(), &["ingest", "--format", "pdf", &fx("dast_small.json")]).status.code(), Some(2));
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["ingest", "issues", "assess", "explain", "export", "replay", "serve"] {
        let out = bin(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(stdout(&out).contains("Usage"));
    }
}

#[test]
fn issues_json_matches_http_and_assessment_unranks() {
    let dir = tempfile::tempdir().unwrap();
    local(dir.path(), &["ingest", &fx("sarif_small.json")]);
    let json = stdout(&local(dir.path(), &["issues", "--json"]));

    let kb = KnowledgeBase::open(dir.path(), builtin_catalog()).unwrap();
    let api = common::api::Api::new(kb);
    let (_, body) = api.get("/issues");
    assert_eq!(json.trim_end().as_bytes(), &body[..]);
    drop(api);

    let key = first_issue_key(&json);
    let out = local(dir.path(), &["assess", &key, "false_positive", "--rationale", "test code", "--author", "alice"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("retracted"));
    let fp = stdout(&local(dir.path(), &["issues", "--json", "--status", "false_positive"]));
    assert_eq!(first_issue_key(&fp), key);
    assert!(!fp.contains("\"rank\""));

    let out = local(dir.path(), &["assess", "0123456789abcdef0123456789abcdef", "confirmed"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(local(dir.path(), &["assess", &key, "maybe"]).status.code(), Some(2));
}

#[test]
fn explain_renders_tree() {
    let dir = tempfile::tempdir().unwrap();
    local(dir.path(), &["ingest", &fx("dedup_chain.json")]);
    let key = first_issue_key(&stdout(&local(dir.path(), &["issues", "--json"])));
    let out = local(dir.path(), &["explain", &key]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("IssueExists"));
    assert!(text.contains("  DuplicateOf"));
    assert!(text.contains("ToolReport"));
    assert_eq!(local(dir.path(), &["explain", "nope"]).status.code(), Some(1));
}

#[test]
fn export_then_replay_reproduces_issues() {
    let dir = tempfile::tempdir().unwrap();
    local(dir.path(), &["ingest", &fx("sarif_small.json"), &fx("dedup_chain.json"), &fx("vst_small.json")]);
    let key = first_issue_key(&stdout(&local(dir.path(), &["issues", "--json"])));
    local(dir.path(), &["assess", &key, "confirmed"]);
    let before = stdout(&local(dir.path(), &["issues", "--json"]));

    let export = dir.path().join("events.out.jsonl");
    assert_eq!(local(dir.path(), &["export", "-o", export.to_str().unwrap()]).status.code(), Some(0));
    let on_disk = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    assert_eq!(std::fs::read_to_string(&export).unwrap(), on_disk);

    let fresh = tempfile::tempdir().unwrap();
    assert_eq!(local(fresh.path(), &["replay", export.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(stdout(&local(fresh.path(), &["issues", "--json"])), before);
    // A second replay into a populated directory is refused.
    assert_eq!(local(fresh.path(), &["replay", export.to_str().unwrap()]).status.code(), Some(1));

    let tail = stdout(&local(dir.path(), &["export", "--since-seq", "5", "-o", "-"]));
    let lines: Vec<&str> = on_disk.lines().skip(5).collect();
    assert_eq!(tail.lines().collect::<Vec<_>>(), lines);
}

/// Starts the service on an ephemeral port and returns its base URL.
fn spawn_server(dir: &Path) -> String {
    let mut kb = KnowledgeBase::open(dir, builtin_catalog()).unwrap();
    install_builtin(&mut kb, &RulesConfig::default(), 0).unwrap();
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = router(AppState::new(kb, ServiceConfig::default(), system_clock()));
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

#[test]
fn remote_mode_matches_embedded_mode() {
    let embedded = tempfile::tempdir().unwrap();
    let served = tempfile::tempdir().unwrap();
    let url = spawn_server(served.path());
    let remote = |args: &[&str]| {
        let mut all = vec!["--server", url.as_str()];
        all.extend_from_slice(args);
        bin(&all)
    };

    let files = [fx("sarif_small.json"), fx("dedup_chain.json")];
    let a = local(embedded.path(), &["ingest", &files[0], &files[1]]);
    let b = remote(&["ingest", &files[0], &files[1]]);
    assert_eq!(b.status.code(), Some(0), "{}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(stdout(&a), stdout(&b));

    let ja = stdout(&local(embedded.path(), &["issues", "--json"]));
    let jb = stdout(&remote(&["issues", "--json"]));
    assert_eq!(ja, jb);
    assert_eq!(
        stdout(&local(embedded.path(), &["issues", "--min-severity", "medium"])),
        stdout(&remote(&["issues", "--min-severity", "medium"]))
    );

    let key = first_issue_key(&ja);
    let a = local(embedded.path(), &["assess", &key, "severity=low"]);
    let b = remote(&["assess", &key, "severity=low"]);
    assert_eq!(b.status.code(), Some(0), "{}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(stdout(&a).lines().count(), stdout(&b).lines().count());
    assert_eq!(
        stdout(&local(embedded.path(), &["issues", "--json"])),
        stdout(&remote(&["issues", "--json"]))
    );
    assert_eq!(stdout(&local(embedded.path(), &["explain", &key])), stdout(&remote(&["explain", &key])));

    let out = remote(&["export", "-o", "-"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).lines().count() > 10);
    assert_eq!(remote(&["assess", "0123456789abcdef0123456789abcdef", "confirmed"]).status.code(), Some(1));
    assert_eq!(remote(&["serve"]).status.code(), Some(2));
}

#[test]
fn serve_answers_health() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_secbelief"))
        .args(["--data-dir", dir.path().to_str().unwrap(), "serve", "--listen", &addr])
        .env("RUST_LOG", "warn")
        .spawn()
        .unwrap();
    let url = format!("http://{addr}/health");
    let mut status = None;
    for _ in 0..100 {
        if let Ok(response) = ureq::post(&url).send_empty() {
            status = Some(response.status().as_u16());
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(status, Some(200));
}
