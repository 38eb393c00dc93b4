//! Structured output: JSON-lines records with provenance plus CSV
//! artifacts. Records carry no timestamps, so reruns with the same
//! config and seed are byte-identical.

use serde::Serialize;
use std::fs::{self, File};
use std::io::Write;
use std::path::PathBuf;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Format {
    Csv,
    Jsonl,
    Both,
}

impl Format {
    pub fn parse(s: &str) -> Option<Format> {
        match s {
            "csv" => Some(Format::Csv),
            "jsonl" => Some(Format::Jsonl),
            "both" => Some(Format::Both),
            _ => None,
        }
    }

    fn jsonl(self) -> bool {
        matches!(self, Format::Jsonl | Format::Both)
    }

    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    observable: &'a str,
    version: &'a str,
    config_hash: &'a str,
    seed: u64,
    params: serde_json::Value,
    data: T,
}

pub struct Emitter {
    dir: PathBuf,
    format: Format,
    jsonl: Option<File>,
    pub config_hash: String,
    pub seed: u64,
}

impl Emitter {
    pub fn create(
        dir: &str,
        name: &str,
        format: Format,
        config_hash: String,
        seed: u64,
    ) -> std::io::Result<Emitter> {
        let dir = PathBuf::from(dir);
        fs::create_dir_all(&dir)?;
        let jsonl = if format.jsonl() {
            Some(File::create(dir.join(format!("{name}.jsonl")))?)
        } else {
            None
        };
        Ok(Emitter { dir, format, jsonl, config_hash, seed })
    }

    /// Append one JSON-lines record.
    pub fn record<T: Serialize>(
        &mut self,
        observable: &str,
        params: serde_json::Value,
        data: &T,
    ) -> std::io::Result<()> {
        let env = Envelope {
            observable,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: &self.config_hash,
            seed: self.seed,
            params,
            data,
        };
        let line = serde_json::to_string(&env).expect("serializable record");
        println!("{line}");
        if let Some(f) = &mut self.jsonl {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }

    /// Write a CSV artifact when the format requests CSV output.
    pub fn csv(&self, name: &str, content: &str) -> std::io::Result<()> {
        if self.format.csv() {
            fs::write(self.dir.join(format!("{name}.csv")), content)?;
        }
        Ok(())
    }
}
