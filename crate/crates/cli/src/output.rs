//! Atomic file output with a versioned JSON envelope.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::failure::Failure;

pub const SCHEMA: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: u32,
    version: &'static str,
    command: &'a str,
    config: &'a serde_json::Value,
    overrides: &'a serde_json::Value,
    result: &'a T,
}

pub struct Output {
    dir: PathBuf,
    command: String,
    config: serde_json::Value,
    overrides: serde_json::Value,
}

impl Output {
    pub fn new(dir: &Path, command: &str, config: serde_json::Value, overrides: serde_json::Value) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::io(format!("creating {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), command: command.into(), config, overrides })
    }

    /// Writes `<dir>/<name>` through a temporary file and a rename.
    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.{}.tmp", std::process::id()));
        let io = |e: std::io::Error| Failure::io(format!("writing {}: {e}", path.display()));
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(contents.as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        drop(f);
        fs::rename(&tmp, &path).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            io(e)
        })?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, result: &T) -> Result<PathBuf, Failure> {
        let env = Envelope {
            schema: SCHEMA,
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config: &self.config,
            overrides: &self.overrides,
            result,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(|e| Failure::io(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }
}
