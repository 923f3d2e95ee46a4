//! On-disk layout: `<dir>/wal.log` plus `<dir>/snapshots/NNNN`.
//!
//! Each WAL line is one committed batch, `<crc32 hex> <json>\n`. A line is
//! either fully applied on recovery or not at all: the first line that is
//! torn or fails its checksum ends the log and is truncated away.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::state::{Dump, Op, State};

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct Batch {
    pub seq: u64,
    pub ops: Vec<Op>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotFile {
    wal_seq: u64,
    dump: Dump,
}

pub(crate) struct Wal {
    dir: PathBuf,
    file: File,
    sync: bool,
}

pub(crate) struct Recovered {
    pub state: State,
    pub last_seq: u64,
    /// Bytes cut from the end of the log because they did not form a
    /// complete, valid record.
    pub truncated_bytes: u64,
}

impl Wal {
    pub fn open(dir: &Path, sync: bool) -> io::Result<(Self, Recovered)> {
        fs::create_dir_all(dir.join("snapshots"))?;
        let (mut state, snapshot_seq) = match latest_snapshot(dir)? {
            Some((_, path)) => {
                let file: SnapshotFile = serde_json::from_slice(&fs::read(&path)?)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
                let state = State::from_dump(file.dump)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
                (state, file.wal_seq)
            }
            None => (State::default(), 0),
        };

        let wal_path = dir.join("wal.log");
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&wal_path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        let mut last_seq = snapshot_seq;
        let mut valid_len = 0usize;
        for line in bytes.split_inclusive(|&b| b == b'\n') {
            let Some(batch) = decode_line(line) else { break };
            if batch.seq > snapshot_seq {
                for op in batch.ops {
                    state.apply(op);
                }
                last_seq = batch.seq;
            }
            valid_len += line.len();
        }
        let truncated_bytes = (bytes.len() - valid_len) as u64;
        if truncated_bytes > 0 {
            tracing::warn!(truncated_bytes, "discarding incomplete tail of {}", wal_path.display());
            file.set_len(valid_len as u64)?;
            file.sync_all()?;
        }

        Ok((
            Self {
                dir: dir.to_path_buf(),
                file,
                sync,
            },
            Recovered {
                state,
                last_seq,
                truncated_bytes,
            },
        ))
    }

    pub fn append(&mut self, batch: &Batch) -> io::Result<()> {
        let line = encode_line(batch)?;
        self.file.write_all(&line)?;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(())
    }

    /// Writes a full snapshot covering everything up to `wal_seq`, then
    /// empties the log. Keeps the previous snapshot as a fallback.
    pub fn checkpoint(&mut self, state: &State, wal_seq: u64) -> io::Result<()> {
        let snapshots = self.dir.join("snapshots");
        let number = latest_snapshot(&self.dir)?.map_or(1, |(n, _)| n + 1);
        let body = serde_json::to_vec(&SnapshotFile {
            wal_seq,
            dump: state.to_dump(),
        })?;
        let tmp = snapshots.join(format!("{number:04}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&body)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, snapshots.join(format!("{number:04}")))?;
        if let Ok(d) = File::open(&snapshots) {
            let _ = d.sync_all();
        }
        self.file.set_len(0)?;
        self.file.sync_all()?;

        for (n, path) in list_snapshots(&self.dir)? {
            if n + 1 < number {
                let _ = fs::remove_file(path);
            }
        }
        Ok(())
    }
}

fn encode_line(batch: &Batch) -> io::Result<Vec<u8>> {
    let json = serde_json::to_vec(batch)?;
    let mut line = format!("{:08x} ", crc32fast::hash(&json)).into_bytes();
    line.extend_from_slice(&json);
    line.push(b'\n');
    Ok(line)
}

fn decode_line(line: &[u8]) -> Option<Batch> {
    let body = line.strip_suffix(b"\n")?;
    if body.len() < 9 || body[8] != b' ' {
        return None;
    }
    let crc = u32::from_str_radix(std::str::from_utf8(&body[..8]).ok()?, 16).ok()?;
    let json = &body[9..];
    if crc32fast::hash(json) != crc {
        return None;
    }
    serde_json::from_slice(json).ok()
}

fn list_snapshots(dir: &Path) -> io::Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir.join("snapshots"))? {
        let entry = entry?;
        if let Some(n) = entry.file_name().to_str().and_then(|s| s.parse::<u64>().ok()) {
            out.push((n, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn latest_snapshot(dir: &Path) -> io::Result<Option<(u64, PathBuf)>> {
    Ok(list_snapshots(dir)?.pop())
}
