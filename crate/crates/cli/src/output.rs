use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::failure::Failure;

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

/// Renders CSV produced by one of the library's writers.
pub fn csv_with(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv writers emit utf-8")
}
