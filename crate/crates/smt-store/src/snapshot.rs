//! Compact snapshot encoding and reading.
//!
//! A snapshot at version `v` serializes, per subtree, exactly the node
//! entries reachable by a verifier: the spine of nodes written at `v`, the
//! digests of unchanged siblings hanging off that spine, and the key/value
//! identities of the leaves at the bottom. Subtrees untouched at `v` appear
//! only in the directory with their root digest and last-write version, so a
//! verifier can either settle a query directly or learn which earlier
//! snapshot to consult.
//!
//! Entries are written children-before-parents, so a reader resolves a key
//! by scanning backward from the end of a subtree's range, following jump
//! tags to skip over sibling bodies (see [`crate::proof`]).

use crate::dispatch::{fold_levels, Store, Topology};
use crate::error::StoreError;
use crate::hash::{hash_data, DefaultHash, Depth, Hash256, HashScheme, Version, LEAF_DEPTH};
use crate::tree::{Child, Shard};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"SMTSNAP\0";
pub const SNAPSHOT_FORMAT: u32 = 1;

/// Serialized entries are 40 bytes: a digest plus one packed word.
pub const ENTRY_LEN: usize = 40;

/// Tags are 48-bit: entry indices, key-region offsets, and versions stored
/// in snapshot entries must all fit.
pub const MAX_TAG: u64 = (1 << 48) - 1;

/// What an entry's digest refers to.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EntryKind {
    /// Digest of one child of a node written at the snapshot version. The
    /// tag is an absolute entry index: on the closing entry of a node whose
    /// children were both serialized it points at the marker entry sitting
    /// between the two child bodies; on the marker itself it is zero.
    Internal = 0,
    /// Digest of a child not written at the snapshot version. The tag is
    /// that child's version.
    External = 1,
    /// Key digest of a serialized leaf. The tag is the byte offset of the
    /// leaf's identity record in the key region.
    Key = 2,
    /// Value digest of a serialized leaf. The tag is the leaf version.
    Leaf = 3,
}

/// One decoded 40-byte entry.
///
/// Packed word layout, low to high: kind (2 bits), is_right (1),
/// next_is_leaf (1), depth (12), tag (48).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Entry {
    pub hash: Hash256,
    pub kind: EntryKind,
    pub is_right: bool,
    pub next_is_leaf: bool,
    pub depth: Depth,
    pub tag: u64,
}

impl Entry {
    pub fn pack(&self) -> Result<[u8; ENTRY_LEN], StoreError> {
        if self.tag > MAX_TAG || self.depth > LEAF_DEPTH {
            return Err(StoreError::EntryOverflow);
        }
        let word = self.kind as u64
            | (self.is_right as u64) << 2
            | (self.next_is_leaf as u64) << 3
            | (self.depth as u64) << 4
            | self.tag << 16;
        let mut out = [0u8; ENTRY_LEN];
        out[..32].copy_from_slice(&self.hash.0);
        out[32..].copy_from_slice(&word.to_le_bytes());
        Ok(out)
    }

    pub fn unpack(bytes: &[u8]) -> Result<Entry, StoreError> {
        if bytes.len() != ENTRY_LEN {
            return Err(StoreError::format("entry must be 40 bytes"));
        }
        let mut hash = [0u8; 32];
        hash.copy_from_slice(&bytes[..32]);
        let word = u64::from_le_bytes(bytes[32..].try_into().unwrap());
        let kind = match word & 0b11 {
            0 => EntryKind::Internal,
            1 => EntryKind::External,
            2 => EntryKind::Key,
            _ => EntryKind::Leaf,
        };
        Ok(Entry {
            hash: Hash256(hash),
            kind,
            is_right: word & 0b100 != 0,
            next_is_leaf: word & 0b1000 != 0,
            depth: ((word >> 4) & 0xfff) as Depth,
            tag: word >> 16,
        })
    }
}

/// Directory row for one subtree.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct DirectoryEntry {
    /// First entry index of the subtree's body; the body is empty for
    /// subtrees not written at the snapshot version.
    pub entry_start: u64,
    pub entry_count: u64,
    pub root_hash: Hash256,
    /// Version of the subtree's last write; zero for never-written.
    pub root_version: Version,
}

struct Writer<'a> {
    entries: Vec<Entry>,
    key_region: Vec<u8>,
    shard: &'a Shard,
}

impl Writer<'_> {
    fn next_index(&self) -> u64 {
        self.entries.len() as u64
    }

    /// Serializes a child written at the snapshot version, emitting its
    /// body so that the child's closing entry lands at the end.
    fn save(&mut self, child: Child, version: Version) -> Result<(), StoreError> {
        match child {
            Child::Leaf(l) => {
                let leaf = self.shard.leaves.get(l);
                let key_offset = self.key_region.len() as u64;
                if key_offset > MAX_TAG || leaf.version > MAX_TAG {
                    return Err(StoreError::EntryOverflow);
                }
                self.key_region.extend_from_slice(&leaf.value_offset.get().to_le_bytes());
                self.key_region.extend_from_slice(&(leaf.key_bytes.len() as u32).to_le_bytes());
                self.key_region.extend_from_slice(&leaf.key_bytes);
                self.entries.push(Entry {
                    hash: leaf.value_hash,
                    kind: EntryKind::Leaf,
                    is_right: false,
                    next_is_leaf: false,
                    depth: LEAF_DEPTH,
                    tag: leaf.version,
                });
                self.entries.push(Entry {
                    hash: leaf.key_hash,
                    kind: EntryKind::Key,
                    is_right: false,
                    next_is_leaf: false,
                    depth: LEAF_DEPTH,
                    tag: key_offset,
                });
                Ok(())
            }
            Child::Node(n) => {
                let node = self.shard.nodes.get(n);
                let (left, right) = (node.left, node.right);
                let (h_l, h_r) = (self.shard.child_hash(left), self.shard.child_hash(right));
                let (v_l, v_r) =
                    (self.shard.child_version(left), self.shard.child_version(right));
                if v_l.max(v_r) > MAX_TAG {
                    return Err(StoreError::EntryOverflow);
                }
                if v_l == version {
                    self.save(left, version)?;
                    if v_r == version {
                        let marker = self.next_index();
                        self.entries.push(Entry {
                            hash: h_r,
                            kind: EntryKind::Internal,
                            is_right: true,
                            next_is_leaf: matches!(right, Child::Leaf(_)),
                            depth: node.depth,
                            tag: 0,
                        });
                        self.save(right, version)?;
                        self.entries.push(Entry {
                            hash: h_l,
                            kind: EntryKind::Internal,
                            is_right: false,
                            next_is_leaf: matches!(left, Child::Leaf(_)),
                            depth: node.depth,
                            tag: marker,
                        });
                    } else {
                        self.entries.push(Entry {
                            hash: h_r,
                            kind: EntryKind::External,
                            is_right: true,
                            next_is_leaf: false,
                            depth: node.depth,
                            tag: v_r,
                        });
                    }
                } else if v_r == version {
                    self.save(right, version)?;
                    self.entries.push(Entry {
                        hash: h_l,
                        kind: EntryKind::External,
                        is_right: false,
                        next_is_leaf: false,
                        depth: node.depth,
                        tag: v_l,
                    });
                } else {
                    // reachable only when a delete aged this node's whole
                    // subtree while an ancestor stayed current
                    self.entries.push(Entry {
                        hash: h_r,
                        kind: EntryKind::External,
                        is_right: true,
                        next_is_leaf: false,
                        depth: node.depth,
                        tag: v_r,
                    });
                    self.entries.push(Entry {
                        hash: h_l,
                        kind: EntryKind::External,
                        is_right: false,
                        next_is_leaf: false,
                        depth: node.depth,
                        tag: v_l,
                    });
                }
                Ok(())
            }
        }
    }
}

/// Serializes the store's committed state at its current version.
///
/// Subtrees whose root carries the current version get a full body; all
/// others appear only in the directory. Call after [`Store::commit`].
pub fn write_snapshot(store: &Store) -> Result<Vec<u8>, StoreError> {
    let topology = *store.topology();
    let version = store.version();
    let mut entries: Vec<Entry> = Vec::new();
    let mut key_region: Vec<u8> = Vec::new();
    let mut directory: Vec<DirectoryEntry> = Vec::with_capacity(topology.total_subtrees());

    for shard_id in 0..topology.shard_count() {
        let shard = store.shard(shard_id);
        for subtree in 0..topology.subtrees_per_shard() {
            let st = shard.subtree(subtree);
            let entry_start = entries.len() as u64;
            let row = match st.root {
                None => DirectoryEntry {
                    entry_start,
                    entry_count: 0,
                    root_hash: Hash256::ZERO,
                    root_version: st.last_touched,
                },
                Some(root) => {
                    let root_version = shard.child_version(root);
                    let root_hash = shard.child_hash(root);
                    if root_version == version {
                        let mut w = Writer { entries, key_region, shard };
                        w.save(root, version)?;
                        entries = w.entries;
                        key_region = w.key_region;
                    } else if st.last_touched == version {
                        // A delete at this version rebuilt the root from
                        // older children, so the root digest is new but its
                        // version is not. Serialize the child digests so a
                        // reader can still open the root one level.
                        if let Child::Node(n) = root {
                            let node = shard.nodes.get(n);
                            for (child, is_right) in [(node.right, true), (node.left, false)] {
                                let tag = shard.child_version(child);
                                if tag > MAX_TAG {
                                    return Err(StoreError::EntryOverflow);
                                }
                                entries.push(Entry {
                                    hash: shard.child_hash(child),
                                    kind: EntryKind::External,
                                    is_right,
                                    next_is_leaf: false,
                                    depth: node.depth,
                                    tag,
                                });
                            }
                        }
                    }
                    DirectoryEntry {
                        entry_start,
                        entry_count: entries.len() as u64 - entry_start,
                        root_hash,
                        root_version,
                    }
                }
            };
            directory.push(row);
        }
    }

    let roots: Vec<Hash256> = directory.iter().map(|d| d.root_hash).collect();
    let global_root = *fold_levels(&roots, version, &topology)?
        .last()
        .expect("fold yields a root")
        .first()
        .expect("root level is nonempty");

    let mut out = Vec::new();
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_FORMAT.to_le_bytes());
    out.extend_from_slice(&DefaultHash::ID.to_le_bytes());
    out.extend_from_slice(&version.to_le_bytes());
    out.push(topology.shard_bits);
    out.push(topology.subtree_bits);
    out.extend_from_slice(&[0u8; 6]);
    for row in &directory {
        out.extend_from_slice(&row.entry_start.to_le_bytes());
        out.extend_from_slice(&row.entry_count.to_le_bytes());
        out.extend_from_slice(&row.root_hash.0);
        out.extend_from_slice(&row.root_version.to_le_bytes());
    }
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for entry in &entries {
        out.extend_from_slice(&entry.pack()?);
    }
    out.extend_from_slice(&(key_region.len() as u64).to_le_bytes());
    out.extend_from_slice(&key_region);
    out.extend_from_slice(&global_root.0);
    let checksum = hash_data::<DefaultHash>(&out);
    out.extend_from_slice(&checksum.0);
    Ok(out)
}

/// Identity record of a serialized leaf, resolved from a Key entry's tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyRecord {
    pub value_offset: u64,
    pub key: Vec<u8>,
}

/// Parsed, checksum-verified snapshot.
pub struct SnapshotReader {
    version: Version,
    topology: Topology,
    directory: Vec<DirectoryEntry>,
    entries: Vec<Entry>,
    key_region: Vec<u8>,
    root: Hash256,
    fold: Vec<Vec<Hash256>>,
}

impl SnapshotReader {
    /// Parses a snapshot, verifying magic, format, hash scheme, checksum,
    /// range bounds, and that the directory folds to the recorded root.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if bytes.len() < 32 {
            return Err(StoreError::corrupt("snapshot shorter than its checksum"));
        }
        let body_len = bytes.len() - 32;
        let checksum = Hash256(bytes[body_len..].try_into().unwrap());
        if hash_data::<DefaultHash>(&bytes[..body_len]) != checksum {
            return Err(StoreError::corrupt("snapshot checksum mismatch"));
        }

        if cur.take(8)? != SNAPSHOT_MAGIC {
            return Err(StoreError::format("bad snapshot magic"));
        }
        let format = cur.u32()?;
        if format != SNAPSHOT_FORMAT {
            return Err(StoreError::format(format!("unsupported snapshot format {format}")));
        }
        let hash_id = cur.u32()?;
        if hash_id != DefaultHash::ID {
            return Err(StoreError::format(format!("unsupported hash scheme {hash_id}")));
        }
        let version = cur.u64()?;
        let shard_bits = cur.u8()?;
        let subtree_bits = cur.u8()?;
        cur.take(6)?;
        let topology = Topology::new(shard_bits, subtree_bits)?;

        let mut directory = Vec::with_capacity(topology.total_subtrees());
        for _ in 0..topology.total_subtrees() {
            directory.push(DirectoryEntry {
                entry_start: cur.u64()?,
                entry_count: cur.u64()?,
                root_hash: cur.hash()?,
                root_version: cur.u64()?,
            });
        }
        let entry_count = cur.u64()? as usize;
        let mut entries = Vec::with_capacity(entry_count);
        for _ in 0..entry_count {
            entries.push(Entry::unpack(cur.take(ENTRY_LEN)?)?);
        }
        let key_region_len = cur.u64()? as usize;
        let key_region = cur.take(key_region_len)?.to_vec();
        let root = cur.hash()?;
        if cur.pos != body_len {
            return Err(StoreError::corrupt("trailing bytes after snapshot root"));
        }

        for row in &directory {
            let end = row.entry_start.checked_add(row.entry_count);
            if end.is_none() || end.unwrap() as usize > entries.len() {
                return Err(StoreError::corrupt("directory range out of bounds"));
            }
        }
        let roots: Vec<Hash256> = directory.iter().map(|d| d.root_hash).collect();
        let fold = fold_levels(&roots, version, &topology)?;
        if fold.last().unwrap()[0] != root {
            return Err(StoreError::corrupt("directory does not fold to recorded root"));
        }

        Ok(SnapshotReader { version, topology, directory, entries, key_region, root, fold })
    }

    pub fn version(&self) -> Version {
        self.version
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn root(&self) -> Hash256 {
        self.root
    }

    pub fn directory(&self) -> &[DirectoryEntry] {
        &self.directory
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Fold level `i` holds the implicit-level digests with `2^(L-i)`
    /// nodes; level 0 is the subtree roots, the last level is the root.
    pub fn fold_level(&self, level: usize) -> &[Hash256] {
        &self.fold[level]
    }

    /// Resolves a Key entry's tag to the leaf identity record.
    pub fn key_record(&self, offset: u64) -> Result<KeyRecord, StoreError> {
        let region = &self.key_region;
        let at = offset as usize;
        if at + 12 > region.len() {
            return Err(StoreError::corrupt("key record offset out of bounds"));
        }
        let value_offset = u64::from_le_bytes(region[at..at + 8].try_into().unwrap());
        let key_len = u32::from_le_bytes(region[at + 8..at + 12].try_into().unwrap()) as usize;
        if at + 12 + key_len > region.len() {
            return Err(StoreError::corrupt("key record overruns key region"));
        }
        Ok(KeyRecord { value_offset, key: region[at + 12..at + 12 + key_len].to_vec() })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        if self.pos + n > self.bytes.len() {
            return Err(StoreError::corrupt("snapshot truncated"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::Update;

    fn store_with(n: u32, version: Version) -> Store {
        let mut store = Store::new(Topology::new(1, 2).unwrap());
        let updates = (0..n)
            .map(|i| Update::Put {
                key: format!("key-{i}").into_bytes(),
                value: format!("val-{i}").into_bytes(),
            })
            .collect();
        store.apply_batch(updates, version).unwrap();
        store.commit(version).unwrap();
        store
    }

    #[test]
    fn entry_pack_roundtrip() {
        let entry = Entry {
            hash: hash_data::<DefaultHash>(b"x"),
            kind: EntryKind::External,
            is_right: true,
            next_is_leaf: false,
            depth: 0x7ab,
            tag: MAX_TAG,
        };
        assert_eq!(Entry::unpack(&entry.pack().unwrap()).unwrap(), entry);
    }

    #[test]
    fn entry_rejects_oversized_tag() {
        let entry = Entry {
            hash: Hash256::ZERO,
            kind: EntryKind::Leaf,
            is_right: false,
            next_is_leaf: false,
            depth: 0,
            tag: MAX_TAG + 1,
        };
        assert!(matches!(entry.pack(), Err(StoreError::EntryOverflow)));
    }

    #[test]
    fn snapshot_roundtrip_preserves_header_and_root() {
        let store = store_with(100, 1);
        let root = store.subtree_roots();
        let bytes = write_snapshot(&store).unwrap();
        let reader = SnapshotReader::from_bytes(&bytes).unwrap();
        assert_eq!(reader.version(), 1);
        assert_eq!(reader.topology(), store.topology());
        assert_eq!(reader.fold_level(0), &root[..]);
    }

    #[test]
    fn snapshot_root_matches_commit_root() {
        let mut store = Store::new(Topology::new(1, 2).unwrap());
        store
            .apply_batch(
                (0..64u32)
                    .map(|i| Update::Put {
                        key: i.to_le_bytes().to_vec(),
                        value: b"v".to_vec(),
                    })
                    .collect(),
                1,
            )
            .unwrap();
        let commit = store.commit(1).unwrap();
        let reader = SnapshotReader::from_bytes(&write_snapshot(&store).unwrap()).unwrap();
        assert_eq!(reader.root(), commit.root);
    }

    #[test]
    fn any_single_bit_flip_is_rejected() {
        let store = store_with(8, 1);
        let bytes = write_snapshot(&store).unwrap();
        // one flip in each structural region: header, directory, entries,
        // key region, trailer
        for at in [2usize, 40, bytes.len() / 2, bytes.len() - 40, bytes.len() - 1] {
            let mut broken = bytes.clone();
            broken[at] ^= 0x40;
            assert!(SnapshotReader::from_bytes(&broken).is_err(), "flip at {at} accepted");
        }
    }

    #[test]
    fn truncation_is_rejected() {
        let store = store_with(8, 1);
        let bytes = write_snapshot(&store).unwrap();
        assert!(SnapshotReader::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(SnapshotReader::from_bytes(&bytes[..16]).is_err());
    }

    #[test]
    fn untouched_subtrees_have_empty_bodies() {
        let mut store = store_with(32, 1);
        // touch a single key at version 2: only its subtree gets a body
        store
            .apply_batch(vec![Update::Put { key: b"key-0".to_vec(), value: b"x".to_vec() }], 2)
            .unwrap();
        store.commit(2).unwrap();
        let reader = SnapshotReader::from_bytes(&write_snapshot(&store).unwrap()).unwrap();
        let with_bodies =
            reader.directory().iter().filter(|d| d.entry_count > 0).count();
        assert_eq!(with_bodies, 1);
        let stale = reader
            .directory()
            .iter()
            .filter(|d| d.entry_count == 0 && d.root_hash != Hash256::ZERO)
            .count();
        assert!(stale > 0);
        for row in reader.directory().iter().filter(|d| d.entry_count == 0) {
            assert!(row.root_version < 2);
        }
    }

    #[test]
    fn leaf_entries_precede_their_key_entries() {
        let store = store_with(40, 1);
        let reader = SnapshotReader::from_bytes(&write_snapshot(&store).unwrap()).unwrap();
        let entries = reader.entries();
        for (i, e) in entries.iter().enumerate() {
            if e.kind == EntryKind::Key {
                assert_eq!(entries[i - 1].kind, EntryKind::Leaf);
                let record = reader.key_record(e.tag).unwrap();
                assert_eq!(hash_data::<DefaultHash>(&record.key), e.hash);
            }
        }
    }

    #[test]
    fn empty_store_snapshot_is_all_directory() {
        let mut store = Store::new(Topology::new(1, 1).unwrap());
        store.commit(1).unwrap();
        let reader = SnapshotReader::from_bytes(&write_snapshot(&store).unwrap()).unwrap();
        assert!(reader.entries().is_empty());
        assert!(reader.directory().iter().all(|d| d.root_hash == Hash256::ZERO));
    }
}
