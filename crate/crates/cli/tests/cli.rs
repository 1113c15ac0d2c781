use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use soundscape_core::audio::{encode_wav_pcm16, PcmBuffer};
use soundscape_core::project::Project;
use soundscape_core::store::ProjectStore;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_soundscape"));
    cmd.env_remove("SOUNDSCAPE_STORE").env("RUST_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/e2e")
}

fn fixture_project() -> PathBuf {
    fixture().join("projects/prj-fixture/project.json")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn render_matches_golden_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let golden = fs::read(fixture().join("golden.wav")).unwrap();
    for i in 0..2 {
        let out = dir.path().join(format!("out{i}.wav"));
        let o = run(&["render", p(&fixture_project()), "-o", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout(&o).trim(), p(&out));
        assert!(fs::read(&out).unwrap() == golden, "run {i} differs from golden");
    }
    let normalized = dir.path().join("n.wav");
    let o = run(&["render", p(&fixture_project()), "-o", p(&normalized), "--normalize"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&normalized).unwrap().len(), golden.len());
}

#[test]
fn render_rejects_invalid_projects() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.wav");
    let catalog = fixture().join("catalog");

    let empty = dir.path().join("empty.json");
    fs::write(&empty, serde_json::to_vec(&Project::new("prj-empty", 0)).unwrap()).unwrap();
    let o = run(&["render", p(&empty), "-o", p(&out), "--catalog", p(&catalog)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());

    let garbage = dir.path().join("garbage.json");
    fs::write(&garbage, b"{\"id\": 3}").unwrap();
    assert_eq!(code(&run(&["render", p(&garbage), "-o", p(&out)])), 2);
    assert_eq!(code(&run(&["render", p(&dir.path().join("none.json")), "-o", p(&out)])), 2);
}

#[test]
fn render_reports_missing_assets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.wav");
    let text = fs::read_to_string(fixture_project()).unwrap();
    let dangling = dir.path().join("dangling.json");
    fs::write(&dangling, text.replace("snd-000004", "snd-999999")).unwrap();
    let catalog = fixture().join("catalog");
    let o = run(&["render", p(&dangling), "-o", p(&out), "--catalog", p(&catalog)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    // no catalog reachable from a temp dir
    let lonely = dir.path().join("lonely.json");
    fs::copy(fixture_project(), &lonely).unwrap();
    assert_eq!(code(&run(&["render", p(&lonely), "-o", p(&out)])), 3);
}

fn write_wav(path: &Path) {
    let pcm = PcmBuffer::mono(48_000, (0..4800).map(|i| (i % 10) as f64 / 20.0).collect());
    fs::write(path, encode_wav_pcm16(&pcm, false)).unwrap();
}

#[test]
fn catalog_add_and_list() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let wav = dir.path().join("bark.wav");
    write_wav(&wav);
    let args = ["catalog-add", p(&wav), "--role", "effect", "--labels", "dog,bark", "--store", p(&store)];
    let first = run(&args);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let second = run(&args);
    let (a, b) = (stdout(&first).trim().to_string(), stdout(&second).trim().to_string());
    assert_eq!(a, "snd-000001");
    assert_eq!(b, "snd-000002");

    let list = run(&["catalog-list", "--store", p(&store)]);
    assert_eq!(code(&list), 0);
    let lines: Vec<String> = stdout(&list).lines().map(String::from).collect();
    assert_eq!(lines, ["snd-000001\teffect\t100ms\tdog,bark", "snd-000002\teffect\t100ms\tdog,bark"]);
    assert_eq!(stdout(&run(&["catalog-list", "--store", p(&store), "--role", "music"])), "");
    assert_eq!(stdout(&run(&["catalog-list", "--store", p(&store), "--label", "bark"])).lines().count(), 2);

    // SOUNDSCAPE_STORE reaches the same catalog
    let via_env = bin().args(["catalog-list"]).env("SOUNDSCAPE_STORE", &store).output().unwrap();
    assert_eq!(stdout(&via_env).lines().count(), 2);
}

#[test]
fn catalog_add_rejects_corrupt_wav() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.wav");
    fs::write(&bad, b"RIFF\x04\x00\x00\x00WAVE").unwrap();
    let o = run(&["catalog-add", p(&bad), "--role", "effect", "--labels", "x", "--store", p(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn project_export_prints_canonical_json() {
    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    let project = store.create(42).unwrap();
    let o = run(&["project-export", &project.id, "--store", p(dir.path())]);
    assert_eq!(code(&o), 0);
    let on_disk = fs::read(store.project_dir(&project.id).join("project.json")).unwrap();
    assert_eq!(o.stdout, on_disk);
    assert_eq!(code(&run(&["project-export", "prj-missing", "--store", p(dir.path())])), 2);
}

#[test]
fn stats_commands() {
    let o = run(&["stats", "verify-table2", "--builtin"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).ends_with("consistent\n"));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains("MISMATCH")).count(), 0);

    let table = run(&["stats", "table2", "--builtin"]);
    assert_eq!(code(&table), 0);
    assert_eq!(stdout(&table).lines().count(), 12);
    assert!(stdout(&table).contains("PQW"));

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("scores.csv");
    let mut text = String::from("a_item1,a_item2,a_item3,a_item4,a_item5,a_item6,a_item7,a_item8,a_pqw,b_item1,b_item2,b_item3,b_item4,b_item5,b_item6,b_item7,b_item8,b_pqw\n");
    for row in [
        "3,2,3,2,3,3,3,3,3,0,-1,0,0,1,0,-1,-1,0",
        "2,1,2,1,2,2,2,2,2,1,0,-1,0,0,0,-2,-1,-1",
        "1,0,2,3,2,3,3,2,1,1,1,1,-1,-1,0,0,0,1",
        "2,2,1,2,3,2,1,2,2,0,0,0,1,0,1,0,-1,0",
    ] {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(&csv, text).unwrap();
    let o = run(&["stats", "verify-table2", "--csv", p(&csv)]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("alpha:"));

    fs::write(&csv, "a_item1\nfour\n").unwrap();
    assert_eq!(code(&run(&["stats", "verify-table2", "--csv", p(&csv)])), 2);
    assert_ne!(code(&run(&["stats", "verify-table2"])), 0);
}

#[test]
fn unknown_subcommand_fails_with_usage() {
    let o = run(&["frobnicate"]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn serve_rejects_bad_address() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["serve", "--addr", "not-an-address", "--store", p(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not-an-address"));
}

#[test]
fn serve_creates_store_and_answers_health() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("fresh/store");
    let mut child = bin()
        .args(["serve", "--addr", "127.0.0.1:0", "--backend", "mock", "--store", p(&store)])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("listening line").to_string();
    assert!(store.join("catalog").is_dir());

    let mut stream = TcpStream::connect(&addr).unwrap();
    stream
        .write_all(b"GET / HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    let _ = child.wait();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"status\":\"ok\""));
}

#[test]
fn serve_config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"addr": "bogus:addr:here"}"#).unwrap();
    let o = run(&["serve", "--config", p(&config), "--store", p(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus:addr:here"));
    fs::write(&config, "{").unwrap();
    assert_eq!(code(&run(&["serve", "--config", p(&config)])), 1);
}
