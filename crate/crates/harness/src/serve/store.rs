//! Append-only JSON Lines vote log. Every append is flushed to disk before
//! the vote is acknowledged; a torn final line left by a crash is moved to
//! `<log>.quarantine` on reload.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Left,
    Right,
}

/// One stored judgement. The presentation order (`left_model`,
/// `right_model`) and the underlying pairing (`candidate`, `alternative`)
/// are both kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub pair_id: String,
    pub candidate: String,
    pub alternative: String,
    pub left_model: String,
    pub right_model: String,
    pub choice: Choice,
    pub rater_id: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonce: Option<String>,
}

impl VoteRecord {
    pub fn chosen_model(&self) -> &str {
        match self.choice {
            Choice::Left => &self.left_model,
            Choice::Right => &self.right_model,
        }
    }

    pub fn chose_candidate(&self) -> bool {
        self.chosen_model() == self.candidate
    }
}

pub struct VoteLog {
    path: PathBuf,
    file: File,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replay {
    pub votes: Vec<VoteRecord>,
    /// Bytes moved to the quarantine file, if any.
    pub quarantined: Option<String>,
}

pub fn quarantine_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".quarantine");
    path.with_file_name(name)
}

impl VoteLog {
    /// Opens (creating if needed) the log and replays its votes.
    ///
    /// A malformed final line is quarantined and cut from the log; a
    /// malformed line anywhere else is an error, since it cannot come from
    /// an interrupted append.
    pub fn open(path: &Path) -> Result<(Self, Replay)> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
        };
        let mut votes = Vec::new();
        let mut good_len = 0usize;
        let mut quarantined = None;
        let mut offset = 0usize;
        while offset < bytes.len() {
            let end = bytes[offset..].iter().position(|&b| b == b'\n').map(|p| offset + p);
            let line = &bytes[offset..end.unwrap_or(bytes.len())];
            let next = end.map_or(bytes.len(), |e| e + 1);
            if line.iter().all(u8::is_ascii_whitespace) {
                offset = next;
                good_len = next;
                continue;
            }
            match serde_json::from_slice::<VoteRecord>(line) {
                Ok(v) if end.is_some() => {
                    votes.push(v);
                    good_len = next;
                }
                parsed if next == bytes.len() => {
                    // last line: unterminated or unparsable, so a torn append
                    if let Ok(v) = parsed {
                        // complete record missing only its newline
                        votes.push(v);
                        good_len = next;
                    } else {
                        quarantined = Some(String::from_utf8_lossy(&bytes[offset..]).into_owned());
                    }
                }
                Ok(_) => unreachable!("a line without newline is always last"),
                Err(e) => bail!("{}: corrupt vote record at byte {offset}: {e}", path.display()),
            }
            offset = next;
        }

        if let Some(torn) = &quarantined {
            let qpath = quarantine_path(path);
            let mut q = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&qpath)
                .with_context(|| format!("opening {}", qpath.display()))?;
            q.write_all(torn.as_bytes())?;
            q.write_all(b"\n")?;
            q.sync_all()?;
            tracing::warn!(
                log = %path.display(),
                quarantine = %qpath.display(),
                bytes = torn.len(),
                "vote log ended with a torn record; moved it to quarantine"
            );
        }
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(false)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let mut log = Self {
            path: path.to_path_buf(),
            file,
        };
        log.file.set_len(good_len as u64)?;
        // a complete final record written without its newline gets one now
        if good_len > 0 && bytes[good_len - 1] != b'\n' {
            log.write_raw(b"\n")?;
        }
        log.file.sync_all()?;
        Ok((log, Replay { votes, quarantined }))
    }

    fn write_raw(&mut self, bytes: &[u8]) -> Result<()> {
        use std::io::Seek;
        self.file.seek(std::io::SeekFrom::End(0))?;
        self.file.write_all(bytes)?;
        Ok(())
    }

    /// Appends one record and syncs it to disk.
    pub fn append(&mut self, vote: &VoteRecord) -> Result<()> {
        let mut line = serde_json::to_vec(vote)?;
        line.push(b'\n');
        self.write_raw(&line)
            .and_then(|()| self.file.sync_data().map_err(Into::into))
            .with_context(|| format!("appending to {}", self.path.display()))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Reads every complete record of a log without modifying it. An
/// unparsable final line is skipped, matching what `VoteLog::open` keeps.
pub fn read_votes(path: &Path) -> Result<Vec<VoteRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut votes = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(v) => votes.push(v),
            Err(_) if i + 1 == lines.len() => {}
            Err(e) => bail!("{}: corrupt vote record on line {}: {e}", path.display(), i + 1),
        }
    }
    Ok(votes)
}
