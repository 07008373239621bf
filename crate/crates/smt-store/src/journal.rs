//! Append-only, version-segmented storage of raw key/value payloads.
//!
//! Each version gets its own segment. A segment is strictly append-only
//! while open and immutable once sealed. Appends buffer in memory; sealing
//! flushes a segment to stable storage when the journal is disk-backed, so
//! the hot update path never blocks on I/O.
//!
//! Segment file layout (all integers little-endian):
//!
//! ```text
//! magic        8  b"SMTJRNL\0"
//! format       4  u32, currently 1
//! version      8  u64 journal version
//! records      .. key_len u32 | key | value_len u32 | value, repeated
//! record count 8  u64
//! payload len  8  u64 byte length of the record stream
//! checksum    32  unsalted digest of the record stream
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::StoreError;
use crate::hash::{hash_data, DefaultHash, Version};

pub const JOURNAL_MAGIC: &[u8; 8] = b"SMTJRNL\0";
pub const JOURNAL_FORMAT: u32 = 1;

/// 52-bit byte offset of a record within a version segment.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, PartialOrd, Ord, Hash)]
pub struct JournalOffset(u64);

pub const MAX_JOURNAL_OFFSET: u64 = (1 << 52) - 1;

impl JournalOffset {
    pub fn new(v: u64) -> Result<Self, StoreError> {
        if v > MAX_JOURNAL_OFFSET {
            return Err(StoreError::JournalCapacity);
        }
        Ok(JournalOffset(v))
    }

    pub fn get(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSummary {
    pub version: Version,
    pub records: u64,
    pub payload_len: u64,
}

struct Segment {
    /// Record stream only; header and footer are materialized at seal time.
    payload: Vec<u8>,
    records: u64,
    sealed: bool,
}

impl Segment {
    fn new() -> Self {
        Segment { payload: Vec::new(), records: 0, sealed: false }
    }
}

/// Version-segmented append-only journal. Disk-backed when opened with a
/// directory, otherwise purely in-memory with identical semantics.
pub struct Journal {
    dir: Option<PathBuf>,
    segments: BTreeMap<Version, Segment>,
}

impl Journal {
    /// RAM-backed journal; used when the historical component is disabled.
    pub fn in_memory() -> Self {
        Journal { dir: None, segments: BTreeMap::new() }
    }

    /// Disk-backed journal writing one file per version into `dir`.
    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Journal { dir: Some(dir), segments: BTreeMap::new() })
    }

    pub fn segment_path(dir: &Path, version: Version) -> PathBuf {
        dir.join(format!("journal-{version}.seg"))
    }

    /// Appends one record to the segment of `version`, opening it if needed.
    pub fn append(
        &mut self,
        version: Version,
        key: &[u8],
        value: &[u8],
    ) -> Result<JournalOffset, StoreError> {
        let seg = self.segments.entry(version).or_insert_with(|| Segment::new());
        if seg.sealed {
            return Err(StoreError::SegmentSealed(version));
        }
        let offset = JournalOffset::new(seg.payload.len() as u64)?;
        let record_len = 8 + key.len() as u64 + value.len() as u64;
        if offset.get() + record_len > MAX_JOURNAL_OFFSET {
            return Err(StoreError::JournalCapacity);
        }
        seg.payload.extend_from_slice(&(key.len() as u32).to_le_bytes());
        seg.payload.extend_from_slice(key);
        seg.payload.extend_from_slice(&(value.len() as u32).to_le_bytes());
        seg.payload.extend_from_slice(value);
        seg.records += 1;
        Ok(offset)
    }

    /// Reads back the record at `offset` in the segment of `version`.
    pub fn read(
        &self,
        version: Version,
        offset: JournalOffset,
    ) -> Result<(Vec<u8>, Vec<u8>), StoreError> {
        let seg = self.segments.get(&version).ok_or(StoreError::NoSegment(version))?;
        decode_record(&seg.payload, offset.get() as usize)
    }

    /// Seals the segment of `version`: no further appends, flushed to disk
    /// when the journal is disk-backed.
    pub fn seal(&mut self, version: Version) -> Result<SegmentSummary, StoreError> {
        let seg = self.segments.get_mut(&version).ok_or(StoreError::NoSegment(version))?;
        if seg.sealed {
            return Err(StoreError::DoubleSeal(version));
        }
        seg.sealed = true;
        let summary = SegmentSummary {
            version,
            records: seg.records,
            payload_len: seg.payload.len() as u64,
        };
        if let Some(dir) = &self.dir {
            let mut f = std::fs::File::create(Self::segment_path(dir, version))?;
            f.write_all(JOURNAL_MAGIC)?;
            f.write_all(&JOURNAL_FORMAT.to_le_bytes())?;
            f.write_all(&version.to_le_bytes())?;
            f.write_all(&seg.payload)?;
            f.write_all(&seg.records.to_le_bytes())?;
            f.write_all(&(seg.payload.len() as u64).to_le_bytes())?;
            f.write_all(&hash_data::<DefaultHash>(&seg.payload).0)?;
            f.sync_all()?;
        }
        Ok(summary)
    }

    /// Loads a sealed segment file back into the journal, verifying the
    /// header, footer, and checksum.
    pub fn load_segment(&mut self, path: &Path) -> Result<SegmentSummary, StoreError> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 20 + 48 {
            return Err(StoreError::corrupt("segment file shorter than header + footer"));
        }
        if &bytes[..8] != JOURNAL_MAGIC {
            return Err(StoreError::format("bad journal magic"));
        }
        let format = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if format != JOURNAL_FORMAT {
            return Err(StoreError::format(format!("unsupported journal format {format}")));
        }
        let version = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let footer_at = bytes.len() - 48;
        let payload = &bytes[20..footer_at];
        let records = u64::from_le_bytes(bytes[footer_at..footer_at + 8].try_into().unwrap());
        let payload_len =
            u64::from_le_bytes(bytes[footer_at + 8..footer_at + 16].try_into().unwrap());
        if payload_len != payload.len() as u64 {
            return Err(StoreError::corrupt("payload length mismatch"));
        }
        let checksum = &bytes[footer_at + 16..];
        if checksum != hash_data::<DefaultHash>(payload).0 {
            return Err(StoreError::corrupt("journal checksum mismatch"));
        }
        self.segments.insert(
            version,
            Segment { payload: payload.to_vec(), records, sealed: true },
        );
        Ok(SegmentSummary { version, records, payload_len })
    }

    pub fn is_sealed(&self, version: Version) -> bool {
        self.segments.get(&version).map(|s| s.sealed).unwrap_or(false)
    }

    pub fn payload_len(&self, version: Version) -> u64 {
        self.segments.get(&version).map(|s| s.payload.len() as u64).unwrap_or(0)
    }
}

fn decode_record(payload: &[u8], at: usize) -> Result<(Vec<u8>, Vec<u8>), StoreError> {
    let take = |from: usize, len: usize| -> Result<&[u8], StoreError> {
        payload
            .get(from..from + len)
            .ok_or_else(|| StoreError::corrupt("record extends past segment end"))
    };
    let key_len = u32::from_le_bytes(take(at, 4)?.try_into().unwrap()) as usize;
    let key = take(at + 4, key_len)?.to_vec();
    let value_len =
        u32::from_le_bytes(take(at + 4 + key_len, 4)?.try_into().unwrap()) as usize;
    let value = take(at + 8 + key_len, value_len)?.to_vec();
    Ok((key, value))
}
