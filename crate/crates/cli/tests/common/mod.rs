#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures().join(name)
}

pub fn negcamp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_negcamp"))
        .args(args)
        .env_remove("NEGCAMP_API_KEY")
        .env_remove("NEGCAMP_ENDPOINT")
        .output()
        .expect("spawn negcamp")
}

pub fn status(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Runs annotate, evaluate and study with the fixture config into `out`.
pub fn full_run(out: &Path, extra: &[&str]) -> Vec<i32> {
    let config = fixture("run.toml");
    let out = out.to_str().unwrap();
    ["annotate", "evaluate", "study"]
        .iter()
        .map(|cmd| {
            let mut args = vec![*cmd, "--config", config.to_str().unwrap(), "--out", out];
            args.extend_from_slice(extra);
            status(&negcamp(&args))
        })
        .collect()
}

/// File name -> bytes for every file in `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}
