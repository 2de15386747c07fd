use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

const CONFIG: &str = r#"
seed = 3
[synth]
skills = 3
frames = 150
[graph]
cross_stride = 5
d_max = 3.0
[eval]
trials = 4
levels = ["easy", "hard"]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skillgraph"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn skillgraph")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
        Work { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn graph(&self) -> &Self {
        ok(self.path(), &["--config", "run.toml", "synth", "--out", "ds.json"]);
        ok(
            self.path(),
            &[
                "--config",
                "run.toml",
                "build-graph",
                "--dataset",
                "ds.json",
                "--out",
                "g.json",
            ],
        );
        self
    }
}

fn count(line: &str, key: &str) -> usize {
    let words: Vec<&str> = line.split_whitespace().collect();
    let i = words
        .iter()
        .position(|w| *w == key)
        .unwrap_or_else(|| panic!("{key} in {line}"));
    words[i + 1].parse().unwrap()
}

#[test]
fn build_graph_reports_counts() {
    let w = Work::new();
    ok(w.path(), &["--config", "run.toml", "synth", "--out", "ds.json"]);
    let line = ok(
        w.path(),
        &[
            "--config",
            "run.toml",
            "build-graph",
            "--dataset",
            "ds.json",
            "--out",
            "g.json",
        ],
    );
    let nodes = count(&line, "nodes");
    let buffers = count(&line, "buffers");
    assert!(count(&line, "edges") >= nodes - buffers - 3);
    assert!(nodes >= 450);
    assert!(w.file("g.json").is_file());
}

#[test]
fn plan_from_target_prefix_costs_nothing() {
    let w = Work::new();
    w.graph();
    for planner in ["graph", "nn"] {
        let text = ok(
            w.path(),
            &[
                "--config",
                "run.toml",
                "plan",
                "--graph",
                "g.json",
                "--from",
                "kick:0",
                "--to",
                "kick",
                "--planner",
                planner,
            ],
        );
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema"], "sgplan/1");
        assert_eq!(v["cost"], 0.0);
        assert_eq!(v["path"].as_array().unwrap().len(), 1);
        assert_eq!(v["path"][0], "kick:0");
    }
}

#[test]
fn plan_writes_file_and_reaches_target() {
    let w = Work::new();
    w.graph();
    ok(
        w.path(),
        &[
            "--config", "run.toml", "plan", "--graph", "g.json", "--from", "kick:40", "--to", "dance", "--out",
            "p.json",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(w.file("p.json")).unwrap()).unwrap();
    let last = v["path"]
        .as_array()
        .unwrap()
        .last()
        .unwrap()
        .as_str()
        .unwrap()
        .to_string();
    assert!(last.starts_with("dance:"), "{last}");
    assert!(v["cost"].as_f64().unwrap() > 0.0);
}

#[test]
fn same_seed_gives_identical_files() {
    let a = Work::new();
    let b = Work::new();
    for w in [&a, &b] {
        w.graph();
        ok(
            w.path(),
            &["--config", "run.toml", "eval", "--graph", "g.json", "--out", "r.json"],
        );
        ok(
            w.path(),
            &[
                "--config", "run.toml", "simulate", "--graph", "g.json", "--level", "medium", "--out", "ep.jsonl",
            ],
        );
        ok(w.path(), &["export-dot", "--graph", "g.json", "--out", "g.dot"]);
    }
    for f in ["ds.json", "g.json", "r.json", "ep.jsonl", "g.dot"] {
        let x = std::fs::read(a.file(f)).unwrap();
        let y = std::fs::read(b.file(f)).unwrap();
        assert!(!x.is_empty(), "{f} is empty");
        assert!(x == y, "{f} differs between runs");
    }

    ok(
        a.path(),
        &["--config", "run.toml", "--seed", "4", "synth", "--out", "ds4.json"],
    );
    assert_ne!(
        std::fs::read(a.file("ds.json")).unwrap(),
        std::fs::read(a.file("ds4.json")).unwrap()
    );
}

#[test]
fn eval_fails_on_unserved_commands() {
    let w = Work::new();
    w.graph();
    let out = run(
        w.path(),
        &[
            "--config",
            "run.toml",
            "eval",
            "--graph",
            "g.json",
            "--no-cross-edges",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("could not be served"));
    // the report is still written
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(w.file("r.json")).unwrap()).unwrap();
    assert!(v.is_object());

    ok(
        w.path(),
        &[
            "--config",
            "run.toml",
            "eval",
            "--graph",
            "g.json",
            "--no-cross-edges",
            "--allow-failures",
            "--out",
            "r.json",
        ],
    );
    let text = ok(
        w.path(),
        &[
            "--config",
            "run.toml",
            "eval",
            "--graph",
            "g.json",
            "--trials",
            "2",
            "--levels",
            "easy,medium",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v.is_object());
}

#[test]
fn missing_input_is_a_usage_error() {
    let w = Work::new();
    let out = run(
        w.path(),
        &["build-graph", "--dataset", "missing.json", "--out", "g.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    assert!(!w.file("g.json").exists());

    let out = run(w.path(), &["--config", "nope.toml", "synth", "--out", "d.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));

    let out = run(w.path(), &["synth", "--out", "no/such/dir/d.json"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(w.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_inputs_exit_with_two() {
    let w = Work::new();
    w.graph();
    std::fs::write(w.file("junk.json"), "{not json").unwrap();
    let cases: &[&[&str]] = &[
        &["plan", "--graph", "g.json", "--from", "kick:99999", "--to", "dance"],
        &["plan", "--graph", "g.json", "--from", "kick", "--to", "dance"],
        &["plan", "--graph", "g.json", "--from", "kick:0", "--to", "nope"],
        &["plan", "--graph", "junk.json", "--from", "kick:0", "--to", "dance"],
        &[
            "simulate",
            "--graph",
            "g.json",
            "--script",
            "junk.json",
            "--out",
            "e.jsonl",
        ],
        &["eval", "--graph", "g.json", "--levels", "brutal"],
    ];
    for args in cases {
        let out = run(w.path(), args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn serve_reports_an_occupied_port() {
    let w = Work::new();
    w.graph();
    let held = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = held.local_addr().unwrap().to_string();
    let out = run(w.path(), &["serve", "--graph", "g.json", "--serve-addr", &addr]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot bind"));
}

#[test]
fn serve_answers_graph_requests() {
    let w = Work::new();
    w.graph();
    let mut child = bin()
        .current_dir(w.path())
        .args([
            "--config",
            "run.toml",
            "serve",
            "--graph",
            "g.json",
            "--serve-addr",
            "127.0.0.1:0",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let host = line
        .trim()
        .strip_prefix("serving on http://")
        .and_then(|s| s.strip_suffix("/api"))
        .unwrap_or_else(|| panic!("banner: {line}"))
        .to_string();

    let mut s = TcpStream::connect(&host).unwrap();
    write!(
        s,
        "GET /api/graph HTTP/1.1\r\nHost: {host}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"sgapi/1\""));
}
