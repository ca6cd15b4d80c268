#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Output;
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

pub fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn script(name: &str) -> PathBuf {
    core_fixtures().join("scripts").join(format!("{name}.json"))
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            if entry.file_name() != "__pycache__" {
                copy_dir(&entry.path(), &target);
            }
        } else {
            std::fs::copy(entry.path(), &target).unwrap();
        }
    }
}

/// A bundle directory built from the median fixture.
pub fn bundle() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let f = core_fixtures();
    copy_dir(&f.join("median_repo"), &dir.path().join("repo"));
    for name in ["issue.md", "manifest.json", "gold.patch", "stub_shim.py"] {
        std::fs::copy(f.join(name), dir.path().join(name)).unwrap();
    }
    write_descriptor(dir.path(), |_| {});
    dir
}

pub fn write_descriptor(dir: &Path, edit: impl FnOnce(&mut Value)) {
    let mut d = json!({
        "issue_file": "issue.md",
        "repo": "repo",
        "manifest": "manifest.json",
        "gold_patch": "gold.patch",
        "test_command": "python3 run_tests.py {test_name}",
        "debugger_command": "python3 {bundle_dir}/stub_shim.py {test_name}",
    });
    edit(&mut d);
    std::fs::write(dir.join("instance.json"), serde_json::to_string_pretty(&d).unwrap()).unwrap();
}

/// Keeps only regression tests in the bundle's manifest.
pub fn drop_reproduction_tests(dir: &Path) {
    let path = dir.join("manifest.json");
    let mut m: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    m["tests"].as_array_mut().unwrap().retain(|t| t["kind"] == "regression");
    std::fs::write(&path, serde_json::to_string_pretty(&m).unwrap()).unwrap();
}

pub fn testfix(args: &[&str]) -> Output {
    testfix_env(args, &[])
}

pub fn testfix_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_testfix"));
    cmd.args(args).env_remove("TESTFIX_API_KEY");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn fast_config(dir: &Path) -> PathBuf {
    let path = dir.join("fast.json");
    std::fs::write(&path, r#"{"provider_backoff_ms": 0}"#).unwrap();
    path
}

/// Minimal HTTP server answering every request with the same status and body.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<(String, Value)>>>,
}

impl MockServer {
    pub fn start(status: u16, body: Value) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut auth = String::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    if lower.starts_with("authorization:") {
                        auth = line["authorization:".len()..].trim().to_string();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                let request: Value = serde_json::from_slice(&buf).unwrap_or(Value::Null);
                seen.lock().unwrap().push((auth, request));
                let text = body.to_string();
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        MockServer { url, requests }
    }
}
