//! Proof extraction from snapshots and stateless verification.
//!
//! A proof answers "what did the store say about this key at version `v`"
//! with one of three verdicts, all bound to the global root digest:
//!
//! - [`Verdict::Inclusion`]: the key held a value, identified by its digest
//!   and write version;
//! - [`Verdict::Exclusion`]: the key was absent;
//! - [`Verdict::ExternalVersion`]: this snapshot only proves the key's
//!   region is unchanged since an earlier version, whose snapshot can
//!   settle the query.
//!
//! Extraction scans one subtree's entry body backward from the end,
//! following jump tags past sibling bodies; verification replays the salted
//! hashes from the bottom frame up through the recorded siblings and the
//! implicit-level bridge, then compares against the trusted root. A root
//! mismatch or malformed structure is an error, never a verdict.

use crate::dispatch::{route, Topology};
use crate::error::StoreError;
use crate::hash::{
    hash_data, hash_internal, hash_leaf, key_bit, DefaultHash, Depth, Hash256, Version,
    LEAF_DEPTH,
};
use crate::snapshot::{Entry, EntryKind, SnapshotReader, ENTRY_LEN, MAX_TAG};

pub const PROOF_MAGIC: &[u8; 4] = b"SMTP";
pub const PROOF_FORMAT: u8 = 1;

/// A sibling digest on the path from the bottom frame to the subtree root.
///
/// `version` is the sibling subtree's last-write version: the snapshot
/// version for siblings serialized in the snapshot, the recorded external
/// version otherwise. Parent salts take the maximum version seen so far, so
/// these feed directly into verification.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PathStep {
    pub hash: Hash256,
    pub is_right: bool,
    pub depth: Depth,
    pub version: Version,
}

/// Where the backward scan stopped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProofFrame {
    /// The leaf occupying the key's lookup position (not necessarily the
    /// key's own leaf; exclusion is a position filled by a different key).
    Leaf { key_hash: Hash256, value_hash: Hash256, version: Version },
    /// The scan hit a node whose children were both serialized as bare
    /// digests; this is one child, the last path step is the other.
    ExternalBreak { hash: Hash256, is_right: bool, depth: Depth, version: Version },
    /// The subtree had no entry body; the digest comes from the directory.
    SubtreeRoot { hash: Hash256, version: Version },
}

/// Outcome of verifying a structurally valid proof against a trusted root.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Verdict {
    Inclusion { value_hash: Hash256, version: Version },
    Exclusion,
    /// The key's region is unchanged since this version; consult that
    /// version's snapshot to settle the query.
    ExternalVersion(Version),
}

/// Self-contained evidence for one key against one snapshot root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub snapshot_version: Version,
    pub shard_bits: u8,
    pub subtree_bits: u8,
    /// Version latched where the key's path left the serialized spine;
    /// verification recomputes this and rejects a mismatch.
    pub external: Option<Version>,
    pub frame: ProofFrame,
    pub key: Vec<u8>,
    /// Siblings ordered root-to-bottom.
    pub path: Vec<PathStep>,
    /// Implicit-level siblings, deepest (adjacent subtree) first.
    pub bridge: Vec<Hash256>,
}

/// Extracts a proof for `key` from a parsed snapshot.
pub fn build_proof(reader: &SnapshotReader, key: &[u8]) -> Result<Proof, StoreError> {
    let topology = *reader.topology();
    let key_hash = hash_data::<DefaultHash>(key);
    let (shard, subtree) = route(&key_hash, &topology);
    let global = topology.global_index(shard, subtree);
    let row = reader.directory()[global];

    let (frame, path, external) = if row.entry_count == 0 {
        let external =
            if row.root_hash == Hash256::ZERO { None } else { Some(row.root_version) };
        (
            ProofFrame::SubtreeRoot { hash: row.root_hash, version: row.root_version },
            Vec::new(),
            external,
        )
    } else {
        traverse(reader, &key_hash, row.entry_start, row.entry_count)?
    };

    let levels = topology.implicit_levels() as usize;
    let mut bridge = Vec::with_capacity(levels);
    for level in 0..levels {
        bridge.push(reader.fold_level(level)[(global >> level) ^ 1]);
    }

    Ok(Proof {
        snapshot_version: reader.version(),
        shard_bits: topology.shard_bits,
        subtree_bits: topology.subtree_bits,
        external,
        frame,
        key: key.to_vec(),
        path,
        bridge,
    })
}

/// Backward scan of one subtree body. Jump tags and index decrements both
/// move strictly toward `start`, so the scan always terminates.
fn traverse(
    reader: &SnapshotReader,
    key_hash: &Hash256,
    start: u64,
    count: u64,
) -> Result<(ProofFrame, Vec<PathStep>, Option<Version>), StoreError> {
    let entries = reader.entries();
    let start = start as usize;
    let end = start + count as usize;
    let mut at = end - 1;
    let mut path: Vec<PathStep> = Vec::new();
    let mut external: Option<Version> = None;
    let mut found_key: Option<Hash256> = None;

    let frame = loop {
        let entry = entries[at];
        if found_key.is_some() && entry.kind != EntryKind::Leaf {
            return Err(StoreError::corrupt("key entry not preceded by its leaf entry"));
        }
        match entry.kind {
            EntryKind::Key => {
                found_key = Some(entry.hash);
            }
            EntryKind::Leaf => {
                let key_hash = found_key
                    .ok_or_else(|| StoreError::corrupt("leaf entry without a key entry"))?;
                break ProofFrame::Leaf {
                    key_hash,
                    value_hash: entry.hash,
                    version: entry.tag,
                };
            }
            EntryKind::Internal => {
                let bit = key_bit(key_hash, entry.depth);
                if bit == entry.is_right {
                    // the stored digest is our own child; jump to the
                    // marker in front of its body
                    let target = entry.tag as usize;
                    if target < start || target >= at {
                        return Err(StoreError::corrupt("jump tag outside subtree range"));
                    }
                    at = target;
                    continue;
                }
                path.push(PathStep {
                    hash: entry.hash,
                    is_right: entry.is_right,
                    depth: entry.depth,
                    version: reader.version(),
                });
            }
            EntryKind::External => {
                let bit = key_bit(key_hash, entry.depth);
                if path.last().is_some_and(|last| last.depth == entry.depth) {
                    // second bare digest at the same depth: both children
                    // of one node, nothing below is serialized
                    if bit == entry.is_right && external.is_none() {
                        external = Some(entry.tag);
                    }
                    break ProofFrame::ExternalBreak {
                        hash: entry.hash,
                        is_right: entry.is_right,
                        depth: entry.depth,
                        version: entry.tag,
                    };
                }
                if bit == entry.is_right && external.is_none() {
                    external = Some(entry.tag);
                }
                path.push(PathStep {
                    hash: entry.hash,
                    is_right: entry.is_right,
                    depth: entry.depth,
                    version: entry.tag,
                });
            }
        }
        if at == start {
            return Err(StoreError::corrupt("traversal ran off the subtree range"));
        }
        at -= 1;
    };
    Ok((frame, path, external))
}

/// Checks a proof against a trusted root, returning the verdict it
/// establishes. Any structural defect or digest mismatch is an error.
pub fn verify(proof: &Proof, expected_root: &Hash256) -> Result<Verdict, StoreError> {
    let topology = Topology::new(proof.shard_bits, proof.subtree_bits)?;
    let levels = topology.implicit_levels();
    let key_hash = hash_data::<DefaultHash>(&proof.key);
    let (shard, subtree) = route(&key_hash, &topology);
    let global = topology.global_index(shard, subtree);

    // structural checks: depths strictly increase root-to-bottom, stay in
    // the explicit region, and siblings sit where the key's bits say
    let mut prev: i32 = levels as i32 - 1;
    for step in &proof.path {
        if (step.depth as i32) <= prev || step.depth >= LEAF_DEPTH {
            return Err(StoreError::InvalidProof("path depths not strictly increasing".into()));
        }
        prev = step.depth as i32;
    }

    // where (if anywhere) the key's path leaves the serialized spine
    let mut external: Option<Version> = None;
    for step in &proof.path {
        if key_bit(&key_hash, step.depth) == step.is_right {
            external = Some(step.version);
            break;
        }
    }

    let mut path = proof.path.clone();
    let (mut current, mut version) = match &proof.frame {
        ProofFrame::Leaf { key_hash: found, value_hash, version } => {
            (hash_leaf::<DefaultHash>(found, value_hash, *version)?, *version)
        }
        ProofFrame::ExternalBreak { hash, is_right, depth, version } => {
            let sibling = path
                .pop()
                .ok_or_else(|| StoreError::InvalidProof("dangling external break".into()))?;
            if sibling.depth != *depth || sibling.is_right == *is_right {
                return Err(StoreError::InvalidProof("external break siblings disagree".into()));
            }
            if external.is_none() && key_bit(&key_hash, *depth) == *is_right {
                external = Some(*version);
            }
            let ver = sibling.version.max(*version);
            let (left, right) =
                if *is_right { (&sibling.hash, hash) } else { (hash, &sibling.hash) };
            (hash_internal::<DefaultHash>(left, right, ver, *depth)?, ver)
        }
        ProofFrame::SubtreeRoot { hash, version } => {
            if !path.is_empty() {
                return Err(StoreError::InvalidProof("directory frame with path steps".into()));
            }
            if *hash != Hash256::ZERO {
                external = Some(*version);
            }
            (*hash, *version)
        }
    };

    if external != proof.external {
        return Err(StoreError::InvalidProof("recorded external version disagrees".into()));
    }

    for step in path.iter().rev() {
        version = version.max(step.version);
        let (left, right) =
            if step.is_right { (&current, &step.hash) } else { (&step.hash, &current) };
        current = hash_internal::<DefaultHash>(left, right, version, step.depth)?;
    }

    if proof.bridge.len() != levels as usize {
        return Err(StoreError::InvalidProof("bridge length mismatch".into()));
    }
    for (level, sibling) in proof.bridge.iter().enumerate() {
        let depth = levels - 1 - level as Depth;
        let (left, right) = if (global >> level) & 1 == 1 {
            (sibling, &current)
        } else {
            (&current, sibling)
        };
        current = hash_internal::<DefaultHash>(left, right, proof.snapshot_version, depth)?;
    }

    if current != *expected_root {
        return Err(StoreError::InvalidProof("root digest mismatch".into()));
    }

    if let Some(ver) = external {
        return Ok(Verdict::ExternalVersion(ver));
    }
    match &proof.frame {
        ProofFrame::Leaf { key_hash: found, value_hash, version } if *found == key_hash => {
            Ok(Verdict::Inclusion { value_hash: *value_hash, version: *version })
        }
        _ => Ok(Verdict::Exclusion),
    }
}

impl Proof {
    /// Wire encoding, terminated by a digest of the body so transport
    /// corruption surfaces at decode time.
    pub fn encode(&self) -> Result<Vec<u8>, StoreError> {
        let mut out = Vec::new();
        out.extend_from_slice(PROOF_MAGIC);
        out.push(PROOF_FORMAT);
        out.extend_from_slice(&self.snapshot_version.to_le_bytes());
        out.push(self.shard_bits);
        out.push(self.subtree_bits);
        match self.external {
            None => {
                out.push(0);
                out.extend_from_slice(&0u64.to_le_bytes());
            }
            Some(v) => {
                out.push(1);
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        match &self.frame {
            ProofFrame::Leaf { key_hash, value_hash, version } => {
                out.push(0);
                out.extend_from_slice(&key_hash.0);
                out.extend_from_slice(&value_hash.0);
                out.extend_from_slice(&version.to_le_bytes());
            }
            ProofFrame::ExternalBreak { hash, is_right, depth, version } => {
                out.push(1);
                out.extend_from_slice(&hash.0);
                out.push(*is_right as u8);
                out.extend_from_slice(&depth.to_le_bytes());
                out.extend_from_slice(&version.to_le_bytes());
            }
            ProofFrame::SubtreeRoot { hash, version } => {
                out.push(2);
                out.extend_from_slice(&hash.0);
                out.extend_from_slice(&version.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.key.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.key);
        out.extend_from_slice(&(self.path.len() as u32).to_le_bytes());
        for step in &self.path {
            if step.version > MAX_TAG {
                return Err(StoreError::EntryOverflow);
            }
            let entry = Entry {
                hash: step.hash,
                kind: EntryKind::Internal,
                is_right: step.is_right,
                next_is_leaf: false,
                depth: step.depth,
                tag: step.version,
            };
            out.extend_from_slice(&entry.pack()?);
        }
        out.extend_from_slice(&(self.bridge.len() as u32).to_le_bytes());
        for hash in &self.bridge {
            out.extend_from_slice(&hash.0);
        }
        let checksum = hash_data::<DefaultHash>(&out);
        out.extend_from_slice(&checksum.0);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Proof, StoreError> {
        if bytes.len() < 32 {
            return Err(StoreError::format("proof shorter than its checksum"));
        }
        let body_len = bytes.len() - 32;
        let checksum = Hash256(bytes[body_len..].try_into().unwrap());
        if hash_data::<DefaultHash>(&bytes[..body_len]) != checksum {
            return Err(StoreError::format("proof checksum mismatch"));
        }
        let mut cur = Reader { bytes: &bytes[..body_len], pos: 0 };
        if cur.take(4)? != PROOF_MAGIC {
            return Err(StoreError::format("bad proof magic"));
        }
        if cur.u8()? != PROOF_FORMAT {
            return Err(StoreError::format("unsupported proof format"));
        }
        let snapshot_version = cur.u64()?;
        let shard_bits = cur.u8()?;
        let subtree_bits = cur.u8()?;
        let external = match cur.u8()? {
            0 => {
                cur.u64()?;
                None
            }
            1 => Some(cur.u64()?),
            _ => return Err(StoreError::format("bad external flag")),
        };
        let frame = match cur.u8()? {
            0 => ProofFrame::Leaf {
                key_hash: cur.hash()?,
                value_hash: cur.hash()?,
                version: cur.u64()?,
            },
            1 => ProofFrame::ExternalBreak {
                hash: cur.hash()?,
                is_right: cur.u8()? != 0,
                depth: cur.u16()?,
                version: cur.u64()?,
            },
            2 => ProofFrame::SubtreeRoot { hash: cur.hash()?, version: cur.u64()? },
            _ => return Err(StoreError::format("bad frame kind")),
        };
        let key_len = cur.u32()? as usize;
        let key = cur.take(key_len)?.to_vec();
        let step_count = cur.u32()? as usize;
        let mut path = Vec::with_capacity(step_count);
        for _ in 0..step_count {
            let entry = Entry::unpack(cur.take(ENTRY_LEN)?)?;
            path.push(PathStep {
                hash: entry.hash,
                is_right: entry.is_right,
                depth: entry.depth,
                version: entry.tag,
            });
        }
        let bridge_count = cur.u32()? as usize;
        let mut bridge = Vec::with_capacity(bridge_count);
        for _ in 0..bridge_count {
            bridge.push(cur.hash()?);
        }
        if cur.pos != body_len {
            return Err(StoreError::format("trailing bytes in proof"));
        }
        Ok(Proof {
            snapshot_version,
            shard_bits,
            subtree_bits,
            external,
            frame,
            key,
            path,
            bridge,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        if self.pos + n > self.bytes.len() {
            return Err(StoreError::format("proof truncated"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, StoreError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn hash(&mut self) -> Result<Hash256, StoreError> {
        Ok(Hash256(self.take(32)?.try_into().unwrap()))
    }
}
