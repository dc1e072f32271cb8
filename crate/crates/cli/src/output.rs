//! Output files with metadata headers.
//!
//! CSV files start with `# key: value` comment lines, JSON files wrap the
//! result as `{"metadata": ..., "result": ...}`. In both the generation
//! timestamp sits alone on one line so reruns can be compared by dropping it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use eo_transducer::params::SystemParams;
use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

pub const TOOL: &str = concat!("eotx ", env!("CARGO_PKG_VERSION"));

pub struct Meta {
    pub kind: &'static str,
    pub generated: String,
    pub config: Option<String>,
    pub overrides: Vec<String>,
    pub system: Option<SystemParams>,
    pub options: Value,
}

impl Meta {
    fn json(&self) -> Value {
        json!({
            "tool": TOOL,
            "generated": self.generated,
            "kind": self.kind,
            "config": self.config,
            "overrides": self.overrides,
            "system": self.system,
            "options": self.options,
        })
    }
}

pub struct Writer<'a> {
    pub prefix: &'a str,
    pub meta: &'a Meta,
    pub written: Vec<PathBuf>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl<'a> Writer<'a> {
    pub fn new(prefix: &'a str, meta: &'a Meta) -> Self {
        Self {
            prefix,
            meta,
            written: Vec::new(),
        }
    }

    fn create(&mut self, suffix: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = PathBuf::from(format!("{}_{suffix}", self.prefix));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let f = File::create(&path).map_err(|e| io_err(&path, e))?;
        Ok((path, BufWriter::new(f)))
    }

    pub fn csv<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let (path, mut w) = self.create(&format!("{name}.csv"))?;
        let m = self.meta;
        let go = || -> std::io::Result<()> {
            writeln!(w, "# tool: {TOOL}")?;
            writeln!(w, "# generated: {}", m.generated)?;
            writeln!(w, "# kind: {}", m.kind)?;
            if let Some(c) = &m.config {
                writeln!(w, "# config: {c}")?;
            }
            for o in &m.overrides {
                writeln!(w, "# set: {o}")?;
            }
            if let Some(s) = &m.system {
                writeln!(w, "# system: {}", serde_json::to_string(s).unwrap())?;
            }
            writeln!(w, "# options: {}", serde_json::to_string(&m.options).unwrap())?;
            body(&mut w)?;
            w.flush()
        };
        go().map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<(), CliError> {
        let (path, mut w) = self.create(&format!("{name}.json"))?;
        let doc = json!({ "metadata": self.meta.json(), "result": result });
        let text = serde_json::to_string_pretty(&doc).expect("report serializes");
        writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}
