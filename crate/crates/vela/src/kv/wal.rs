//! Append-only write-ahead log with CRC-framed batch records.
//!
//! Record framing: `len u32 BE ‖ crc32 u32 BE ‖ payload`, where the
//! payload is `seq u64 ‖ op_count u32 ‖ ops…` and each op is
//! `op u8 ‖ key_len u32 ‖ key ‖ val_len u32 ‖ val` (deletes carry an
//! empty value). Replay stops at the first truncated or corrupt record,
//! so a batch is either fully durable or absent.

use super::{KvError, WriteOp};

/// Where WAL bytes live. The in-memory backend models fsync as a
/// buffer-flush barrier: `crash` drops everything not yet flushed.
pub trait WalBackend: Send + Sync {
    fn append(&mut self, bytes: &[u8]);
    fn flush(&mut self) -> Result<(), KvError>;
    fn durable_bytes(&self) -> Result<Vec<u8>, KvError>;
    fn truncate(&mut self) -> Result<(), KvError>;
    /// Drop unflushed bytes (test hook; no-op for real files).
    fn drop_unflushed(&mut self);
}

#[derive(Default)]
pub struct MemWal {
    durable: Vec<u8>,
    buffer: Vec<u8>,
}

impl WalBackend for MemWal {
    fn append(&mut self, bytes: &[u8]) {
        self.buffer.extend_from_slice(bytes);
    }

    fn flush(&mut self) -> Result<(), KvError> {
        self.durable.append(&mut self.buffer);
        Ok(())
    }

    fn durable_bytes(&self) -> Result<Vec<u8>, KvError> {
        Ok(self.durable.clone())
    }

    fn truncate(&mut self) -> Result<(), KvError> {
        self.durable.clear();
        self.buffer.clear();
        Ok(())
    }

    fn drop_unflushed(&mut self) {
        self.buffer.clear();
    }
}

pub struct FileWal {
    path: std::path::PathBuf,
    file: std::fs::File,
}

impl FileWal {
    pub fn open(path: impl Into<std::path::PathBuf>) -> Result<FileWal, KvError> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(&path)?;
        Ok(FileWal { path, file })
    }
}

impl WalBackend for FileWal {
    fn append(&mut self, bytes: &[u8]) {
        use std::io::Write;
        let _ = self.file.write_all(bytes);
    }

    fn flush(&mut self) -> Result<(), KvError> {
        use std::io::Write;
        self.file.flush()?;
        self.file.sync_data()?;
        Ok(())
    }

    fn durable_bytes(&self) -> Result<Vec<u8>, KvError> {
        Ok(std::fs::read(&self.path)?)
    }

    fn truncate(&mut self) -> Result<(), KvError> {
        self.file = std::fs::OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .read(true)
            .open(&self.path)?;
        Ok(())
    }

    fn drop_unflushed(&mut self) {}
}

pub struct Wal {
    backend: Box<dyn WalBackend>,
}

pub struct WalRecord {
    pub seq: u64,
    pub ops: Vec<WriteOp>,
}

impl Wal {
    pub fn new(backend: Box<dyn WalBackend>) -> Wal {
        Wal { backend }
    }

    pub fn in_memory() -> Wal {
        Wal::new(Box::new(MemWal::default()))
    }

    /// Appends one batch record and flushes; the mutation is durable
    /// once this returns.
    pub fn append_batch(&mut self, seq: u64, ops: &[WriteOp]) -> Result<(), KvError> {
        let mut payload = Vec::with_capacity(16 + ops.len() * 16);
        payload.extend_from_slice(&seq.to_be_bytes());
        payload.extend_from_slice(&(ops.len() as u32).to_be_bytes());
        for op in ops {
            match op {
                WriteOp::Put { key, value } => {
                    payload.push(1);
                    payload.extend_from_slice(&(key.len() as u32).to_be_bytes());
                    payload.extend_from_slice(key);
                    payload.extend_from_slice(&(value.len() as u32).to_be_bytes());
                    payload.extend_from_slice(value);
                }
                WriteOp::Delete { key } => {
                    payload.push(2);
                    payload.extend_from_slice(&(key.len() as u32).to_be_bytes());
                    payload.extend_from_slice(key);
                    payload.extend_from_slice(&0u32.to_be_bytes());
                }
            }
        }
        let mut framed = Vec::with_capacity(8 + payload.len());
        framed.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        framed.extend_from_slice(&crc32fast::hash(&payload).to_be_bytes());
        framed.extend_from_slice(&payload);
        self.backend.append(&framed);
        self.backend.flush()
    }

    /// Replays durable records in order. Stops cleanly at a torn tail.
    pub fn replay(&self) -> Result<Vec<WalRecord>, KvError> {
        let bytes = self.backend.durable_bytes()?;
        let mut records = Vec::new();
        let mut pos = 0usize;
        while pos + 8 <= bytes.len() {
            let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            let crc = u32::from_be_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
            if pos + 8 + len > bytes.len() {
                break; // torn write at the tail
            }
            let payload = &bytes[pos + 8..pos + 8 + len];
            if crc32fast::hash(payload) != crc {
                break;
            }
            records.push(parse_record(payload)?);
            pos += 8 + len;
        }
        Ok(records)
    }

    pub fn truncate(&mut self) -> Result<(), KvError> {
        self.backend.truncate()
    }

    pub fn drop_unflushed(&mut self) {
        self.backend.drop_unflushed();
    }
}

fn parse_record(payload: &[u8]) -> Result<WalRecord, KvError> {
    if payload.len() < 12 {
        return Err(KvError::Corrupt("wal record header".into()));
    }
    let seq = u64::from_be_bytes(payload[..8].try_into().unwrap());
    let count = u32::from_be_bytes(payload[8..12].try_into().unwrap()) as usize;
    let mut ops = Vec::with_capacity(count);
    let mut pos = 12usize;
    for _ in 0..count {
        if pos + 5 > payload.len() {
            return Err(KvError::Corrupt("wal op header".into()));
        }
        let op = payload[pos];
        let key_len = u32::from_be_bytes(payload[pos + 1..pos + 5].try_into().unwrap()) as usize;
        pos += 5;
        if pos + key_len + 4 > payload.len() {
            return Err(KvError::Corrupt("wal op key".into()));
        }
        let key = payload[pos..pos + key_len].to_vec();
        pos += key_len;
        let val_len = u32::from_be_bytes(payload[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if pos + val_len > payload.len() {
            return Err(KvError::Corrupt("wal op value".into()));
        }
        let value = payload[pos..pos + val_len].to_vec();
        pos += val_len;
        ops.push(match op {
            1 => WriteOp::Put { key, value },
            2 => WriteOp::Delete { key },
            other => return Err(KvError::Corrupt(format!("wal op tag {}", other))),
        });
    }
    Ok(WalRecord { seq, ops })
}
