//! Run manifests: the full parameter record written next to each output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::Failure;

#[derive(Serialize)]
pub struct Manifest<'a, P: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub params: &'a P,
    pub outputs: Vec<String>,
}

/// `<path>.json` unless overridden.
pub fn default_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write<P: Serialize>(path: &Path, command: &str, params: &P, outputs: &[&Path]) -> Result<(), Failure> {
    let m = Manifest {
        tool: "dbi",
        version: env!("CARGO_PKG_VERSION"),
        command,
        params,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let mut text = serde_json::to_string_pretty(&m).map_err(|e| Failure::io(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

/// Wall-clock stage timings; kept out of the reports so those stay
/// bit-reproducible.
pub struct Timings {
    start: Instant,
    last: Instant,
    rows: Vec<(String, f64)>,
}

impl Timings {
    pub fn new() -> Self {
        let now = Instant::now();
        Timings { start: now, last: now, rows: Vec::new() }
    }

    pub fn mark(&mut self, stage: &str) {
        let now = Instant::now();
        self.rows.push((stage.to_string(), (now - self.last).as_secs_f64()));
        self.last = now;
    }

    pub fn save(mut self, path: &Path) -> Result<(), Failure> {
        let total = self.start.elapsed().as_secs_f64();
        self.rows.push(("total".into(), total));
        let mut text = String::from("stage,seconds\n");
        for (s, t) in &self.rows {
            text.push_str(&format!("{s},{t:.6}\n"));
        }
        write_text(path, &text)
    }
}
