//! File writers. Result files are deterministic; wall-clock time only ever
//! appears in the `meta.json` sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `<file>.<suffix>` next to a file output.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: Vec<String>,
    jobs: Option<usize>,
    created: String,
}

/// Writes run metadata to `meta.json` inside `dir`, or to `<file>.meta.json`.
pub fn write_meta(target: &Path, is_dir: bool, command: &str, jobs: Option<usize>) -> Result<()> {
    let path = if is_dir {
        target.join("meta.json")
    } else {
        sidecar(target, "meta.json")
    };
    write_json(
        &path,
        &Meta {
            tool: "agfusion",
            version: env!("CARGO_PKG_VERSION"),
            command,
            args: std::env::args().collect(),
            jobs,
            created: chrono::Utc::now().to_rfc3339(),
        },
    )
}

/// Writes CSV to `path`, or to stdout when there is none.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
