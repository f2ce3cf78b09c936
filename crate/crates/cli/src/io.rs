//! File helpers with the `-` convention for stdin/stdout.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use duolens::corpus::{parse_jsonl, Sample};

pub fn is_std(p: &Path) -> bool {
    p.as_os_str() == "-"
}

pub fn read_text(p: &Path) -> Result<String> {
    if is_std(p) {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).context("reading stdin")?;
        Ok(s)
    } else {
        fs::read_to_string(p).map_err(|e| duolens::Error::io(p, e).into())
    }
}

pub fn read_samples(p: &Path) -> Result<Vec<Sample>> {
    let origin = if is_std(p) { Path::new("<stdin>") } else { p };
    Ok(parse_jsonl(&read_text(p)?, origin)?)
}

pub fn write_bytes(p: &Path, bytes: &[u8]) -> Result<()> {
    if is_std(p) {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes)?;
        out.flush()?;
        Ok(())
    } else {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| duolens::Error::io(dir, e))?;
        }
        fs::write(p, bytes).map_err(|e| duolens::Error::io(p, e).into())
    }
}

pub fn write_json<T: serde::Serialize>(p: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(p, s.as_bytes())
}

pub fn jsonl<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// `path` with `suffix` appended to its file name (`head.dlt` → `head.dlt.log.json`).
pub fn sidecar(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}
