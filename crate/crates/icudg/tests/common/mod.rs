#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SMOKE: &str = r#"
name = "smoke"
output_dir = "out"
seed = 7
task = "mortality"
folds = [0, 1]

[synth]
seed = 11

[[synth.profiles]]
domain_id = "a"
n_stays = 300

[[synth.profiles]]
domain_id = "b"
n_stays = 300

[train]
max_epochs = 2
hidden_dim = 8
batch_size = 64
"#;

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn icudg(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icudg"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env("ICUDG_WORKERS", "1")
        .output()
        .expect("binary runs")
}

pub fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), read(&path)));
            }
        }
    }
    out.sort();
    out
}
