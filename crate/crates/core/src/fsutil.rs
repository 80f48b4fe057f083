use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write to a sibling temp file, fsync, then rename over `path`.
///
/// Readers see either the old file or the complete new one.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = tmp_path(path);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub(crate) fn tmp_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Append one line with a single `write` call so concurrent appenders
/// never interleave within a line. A torn previous tail is closed off first
/// so the new record never fuses with it.
pub fn append_line(path: &Path, line: &str) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).read(true).append(true).open(path)?;
    let len = f.metadata()?.len();
    let mut buf = String::with_capacity(line.len() + 2);
    if len > 0 {
        let mut last = [0u8; 1];
        f.seek(SeekFrom::Start(len - 1))?;
        f.read_exact(&mut last)?;
        if last[0] != b'\n' {
            buf.push('\n');
        }
    }
    buf.push_str(line);
    buf.push('\n');
    f.write_all(buf.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line_no: usize,
    pub torn_tail: bool,
    pub reason: String,
}

/// Parse a JSON-lines file. Lines that fail to parse are skipped and
/// reported; a trailing line without a newline is treated as torn.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> io::Result<(Vec<T>, Vec<SkippedLine>)> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Vec::new(), Vec::new())),
        Err(e) => return Err(e),
    };
    Ok(parse_jsonl(&text))
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> (Vec<T>, Vec<SkippedLine>) {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    let ends_clean = text.is_empty() || text.ends_with('\n');
    let lines: Vec<&str> = text.split('\n').collect();
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(line) {
            Ok(v) => out.push(v),
            Err(e) => skipped.push(SkippedLine {
                line_no: i + 1,
                torn_tail: i == last && !ends_clean,
                reason: e.to_string(),
            }),
        }
    }
    (out, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_tail_is_reported_and_skipped() {
        let (rows, skipped): (Vec<serde_json::Value>, _) = parse_jsonl("{\"a\":1}\n{\"a\":2}\n{\"a\":");
        assert_eq!(rows.len(), 2);
        assert_eq!(skipped.len(), 1);
        assert!(skipped[0].torn_tail);
    }

    #[test]
    fn append_after_torn_tail_starts_a_new_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        fs::write(&p, "{\"a\":1}\n{\"a\":").unwrap();
        append_line(&p, "{\"a\":3}").unwrap();
        let (rows, skipped): (Vec<serde_json::Value>, _) = read_jsonl(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(skipped.len(), 1);
        assert!(!skipped[0].torn_tail);
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        atomic_write(&p, b"x").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"x");
        assert!(!tmp_path(&p).exists());
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
