use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::{CliResult, Failure};

/// 17 significant digits; parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Comma-separated table built row by row.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Flat JSON document with keys in sorted order.
#[derive(Default)]
pub struct Flat(Map<String, Value>);

impl Flat {
    pub fn set(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        self.0.insert(key.to_string(), v.into());
        self
    }

    /// Non-finite numbers become `null`.
    pub fn num(&mut self, key: &str, x: f64) -> &mut Self {
        self.set(key, serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number))
    }

    pub fn to_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.0).expect("flat JSON serializes");
        s.push('\n');
        s
    }
}

/// Output directory that records a checksum for every file written.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
    started: Instant,
}

impl Outputs {
    pub fn create(dir: &std::path::Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::io(&path, e))?;
        self.files.push((name.to_string(), sha256_hex(contents.as_bytes())));
        Ok(())
    }

    /// Writes manifest.json; `extra` carries command-specific fields.
    pub fn finish(mut self, command: &str, config_json: &str, seed: Option<u64>, mut extra: Flat) -> CliResult<()> {
        extra
            .set("command", command)
            .set("version", env!("CARGO_PKG_VERSION"))
            .set("config_sha256", sha256_hex(config_json.as_bytes()))
            .set("seed", seed.map_or(Value::Null, Value::from))
            .num("elapsed_seconds", self.started.elapsed().as_secs_f64())
            .set(
                "outputs",
                self.files.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(","),
            );
        for (name, sum) in std::mem::take(&mut self.files) {
            extra.set(&format!("sha256:{name}"), sum);
        }
        self.write("manifest.json", &extra.to_pretty())
    }
}
