//! In-memory versioned sparse binary Merkle tree for one shard.
//!
//! A shard owns a fixed set of subtrees (statically assigned key ranges)
//! plus two slab arenas, one for internal nodes and one for leaves. Updates
//! mark the touched path dirty; hashes are only recomputed up to subtree
//! roots when [`Shard::recompute_subtree_root`] runs at the epoch barrier.

use crate::dispatch::{route, Topology};
use crate::error::StoreError;
use crate::hash::{
    batch_hash, first_diff_bit, hash_data, hash_leaf, key_bit, make_salt, BatchJob, DefaultHash,
    Depth, Hash256, Version, EMPTY_SUBTREE_HASH, LEAF_DEPTH,
};
use crate::journal::{Journal, JournalOffset};

/// Growable slab with slot reuse. Slots are allocated in creation order so
/// nodes created together stay adjacent in memory.
pub(crate) struct Arena<T> {
    slots: Vec<Option<T>>,
    free: Vec<u32>,
}

impl<T> Arena<T> {
    fn new() -> Self {
        Arena { slots: Vec::new(), free: Vec::new() }
    }

    fn alloc(&mut self, value: T) -> u32 {
        if let Some(slot) = self.free.pop() {
            self.slots[slot as usize] = Some(value);
            slot
        } else {
            self.slots.push(Some(value));
            (self.slots.len() - 1) as u32
        }
    }

    fn release(&mut self, slot: u32) {
        self.slots[slot as usize] = None;
        self.free.push(slot);
    }

    pub(crate) fn get(&self, slot: u32) -> &T {
        self.slots[slot as usize].as_ref().expect("live slot")
    }

    fn get_mut(&mut self, slot: u32) -> &mut T {
        self.slots[slot as usize].as_mut().expect("live slot")
    }
}

/// Reference to a child node; internal nodes always have two live children.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Child {
    Leaf(u32),
    Node(u32),
}

/// A stored key/value binding.
pub struct LeafRecord {
    pub key_hash: Hash256,
    /// Full key bytes; a sparse Merkle tree may map several keys to the
    /// same leaf position, so pre-images must be disambiguated.
    pub key_bytes: Vec<u8>,
    pub value_hash: Hash256,
    pub value_offset: JournalOffset,
    pub version: Version,
    pub hash: Hash256,
}

/// A branching point at the first differing key-hash bit of its leaf set.
pub struct InternalNode {
    pub depth: Depth,
    pub left: Child,
    pub right: Child,
    pub version: Version,
    pub hash: Hash256,
    pub dirty: bool,
}

/// Per-subtree bookkeeping.
pub struct SubtreeState {
    pub root: Option<Child>,
    pub leaf_count: usize,
    pub dirty: bool,
    /// Highest version ever applied to this subtree.
    pub max_version: Version,
    /// Version of the most recent structural or value change.
    pub last_touched: Version,
    /// Root digest as of the last recomputation.
    pub root_hash: Hash256,
}

impl SubtreeState {
    fn new() -> Self {
        SubtreeState {
            root: None,
            leaf_count: 0,
            dirty: false,
            max_version: 0,
            last_touched: 0,
            root_hash: EMPTY_SUBTREE_HASH,
        }
    }
}

/// Outcome of a put.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PutOutcome {
    Inserted,
    Updated,
}

/// Outcome of a delete.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DeleteOutcome {
    Deleted,
    Absent,
}

/// A node yielded by [`Shard::dirty_nodes_of_version`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TouchedNode {
    Internal { depth: Depth, version: Version, hash: Hash256 },
    Leaf { key_hash: Hash256, version: Version, hash: Hash256 },
}

/// One shard: a single-writer slice of the key space.
pub struct Shard {
    pub id: u32,
    topology: Topology,
    pub(crate) leaves: Arena<LeafRecord>,
    pub(crate) nodes: Arena<InternalNode>,
    pub(crate) subtrees: Vec<SubtreeState>,
    prefetch: bool,
}

impl Shard {
    pub fn new(id: u32, topology: Topology) -> Self {
        let subtrees = (0..topology.subtrees_per_shard()).map(|_| SubtreeState::new()).collect();
        Shard { id, topology, leaves: Arena::new(), nodes: Arena::new(), subtrees, prefetch: false }
    }

    pub fn set_prefetch(&mut self, enabled: bool) {
        self.prefetch = enabled;
    }

    pub fn subtree(&self, index: u32) -> &SubtreeState {
        &self.subtrees[index as usize]
    }

    pub(crate) fn child_hash(&self, c: Child) -> Hash256 {
        match c {
            Child::Leaf(l) => self.leaves.get(l).hash,
            Child::Node(n) => self.nodes.get(n).hash,
        }
    }

    pub(crate) fn child_version(&self, c: Child) -> Version {
        match c {
            Child::Leaf(l) => self.leaves.get(l).version,
            Child::Node(n) => self.nodes.get(n).version,
        }
    }

    fn check_route(&self, key_hash: &Hash256, subtree: u32) -> Result<(), StoreError> {
        let (shard, sub) = route(key_hash, &self.topology);
        if shard != self.id || sub != subtree {
            return Err(StoreError::RoutingViolation {
                expected_shard: self.id,
                expected_subtree: subtree,
                actual_shard: shard,
                actual_subtree: sub,
            });
        }
        Ok(())
    }

    /// Advisory cache warm-up for the nodes on `key_hash`'s path.
    /// No-op on platforms without prefetch hints; never affects semantics.
    fn prefetch_path(&self, subtree: u32, key_hash: &Hash256) {
        if !self.prefetch {
            return;
        }
        let mut cur = match self.subtrees[subtree as usize].root {
            Some(c) => c,
            None => return,
        };
        loop {
            match cur {
                Child::Node(n) => {
                    let node = self.nodes.get(n);
                    prefetch_hint(node as *const InternalNode as *const u8);
                    cur = if key_bit(key_hash, node.depth) { node.right } else { node.left };
                }
                Child::Leaf(l) => {
                    prefetch_hint(self.leaves.get(l) as *const LeafRecord as *const u8);
                    return;
                }
            }
        }
    }

    /// Walks from the subtree root to the leaf selected by `key_hash`'s
    /// bits, returning the internal nodes passed and the terminal leaf.
    fn descend(&self, subtree: u32, key_hash: &Hash256) -> Option<(Vec<u32>, u32)> {
        let mut cur = self.subtrees[subtree as usize].root?;
        let mut path = Vec::new();
        loop {
            match cur {
                Child::Node(n) => {
                    let node = self.nodes.get(n);
                    path.push(n);
                    cur = if key_bit(key_hash, node.depth) { node.right } else { node.left };
                }
                Child::Leaf(l) => return Some((path, l)),
            }
        }
    }

    /// Inserts or updates a key, journaling the value.
    pub fn put(
        &mut self,
        subtree: u32,
        key: &[u8],
        value: &[u8],
        version: Version,
        journal: &mut Journal,
    ) -> Result<PutOutcome, StoreError> {
        let key_hash = hash_data::<DefaultHash>(key);
        let value_hash = hash_data::<DefaultHash>(value);
        let offset = journal.append(version, key, value)?;
        self.apply_put(subtree, key, key_hash, value_hash, offset, version)
    }

    /// Applies a put whose value is already journaled.
    pub fn apply_put(
        &mut self,
        subtree: u32,
        key: &[u8],
        key_hash: Hash256,
        value_hash: Hash256,
        value_offset: JournalOffset,
        version: Version,
    ) -> Result<PutOutcome, StoreError> {
        self.check_route(&key_hash, subtree)?;
        let st = &self.subtrees[subtree as usize];
        if version < st.max_version {
            return Err(StoreError::VersionRegression { given: version, current: st.max_version });
        }
        self.prefetch_path(subtree, &key_hash);
        let leaf_hash = hash_leaf::<DefaultHash>(&key_hash, &value_hash, version)?;

        let outcome = match self.descend(subtree, &key_hash) {
            None => {
                let leaf = self.leaves.alloc(LeafRecord {
                    key_hash,
                    key_bytes: key.to_vec(),
                    value_hash,
                    value_offset,
                    version,
                    hash: leaf_hash,
                });
                let st = &mut self.subtrees[subtree as usize];
                st.root = Some(Child::Leaf(leaf));
                st.leaf_count = 1;
                PutOutcome::Inserted
            }
            Some((path, leaf_id)) => {
                let existing = self.leaves.get(leaf_id);
                if existing.key_hash == key_hash {
                    if existing.key_bytes != key {
                        // Full 256-bit digest collision between distinct
                        // keys; unreachable under the cryptographic
                        // assumption, fatal if observed.
                        return Err(StoreError::KeyHashCollision);
                    }
                    let leaf = self.leaves.get_mut(leaf_id);
                    leaf.value_hash = value_hash;
                    leaf.value_offset = value_offset;
                    leaf.version = version;
                    leaf.hash = leaf_hash;
                    for &n in &path {
                        self.nodes.get_mut(n).dirty = true;
                    }
                    PutOutcome::Updated
                } else {
                    let split = first_diff_bit(&key_hash, &existing.key_hash)
                        .expect("distinct key hashes differ somewhere");
                    let new_leaf = self.leaves.alloc(LeafRecord {
                        key_hash,
                        key_bytes: key.to_vec(),
                        value_hash,
                        value_offset,
                        version,
                        hash: leaf_hash,
                    });
                    // Splice the new branching node above the first node
                    // deeper than the split bit; depths along the path are
                    // strictly increasing and never equal the split bit.
                    let pos = path.iter().position(|&n| self.nodes.get(n).depth > split);
                    let (displaced, parent) = match pos {
                        Some(i) => {
                            (Child::Node(path[i]), if i == 0 { None } else { Some(path[i - 1]) })
                        }
                        None => (Child::Leaf(leaf_id), path.last().copied()),
                    };
                    let (left, right) = if key_bit(&key_hash, split) {
                        (displaced, Child::Leaf(new_leaf))
                    } else {
                        (Child::Leaf(new_leaf), displaced)
                    };
                    let branch = self.nodes.alloc(InternalNode {
                        depth: split,
                        left,
                        right,
                        version,
                        hash: Hash256::ZERO,
                        dirty: true,
                    });
                    match parent {
                        None => self.subtrees[subtree as usize].root = Some(Child::Node(branch)),
                        Some(p) => {
                            let pd = self.nodes.get(p).depth;
                            let go_right = key_bit(&key_hash, pd);
                            let parent = self.nodes.get_mut(p);
                            if go_right {
                                parent.right = Child::Node(branch);
                            } else {
                                parent.left = Child::Node(branch);
                            }
                        }
                    }
                    let dirty_upto = pos.unwrap_or(path.len());
                    for &n in &path[..dirty_upto] {
                        self.nodes.get_mut(n).dirty = true;
                    }
                    self.subtrees[subtree as usize].leaf_count += 1;
                    PutOutcome::Inserted
                }
            }
        };

        let st = &mut self.subtrees[subtree as usize];
        st.dirty = true;
        st.max_version = st.max_version.max(version);
        st.last_touched = version;
        Ok(outcome)
    }

    /// Removes a key; a surviving single-child parent collapses so that
    /// every internal node keeps two children.
    pub fn delete(
        &mut self,
        subtree: u32,
        key: &[u8],
        version: Version,
    ) -> Result<DeleteOutcome, StoreError> {
        let key_hash = hash_data::<DefaultHash>(key);
        self.check_route(&key_hash, subtree)?;
        let st = &self.subtrees[subtree as usize];
        if version < st.max_version {
            return Err(StoreError::VersionRegression { given: version, current: st.max_version });
        }
        let (path, leaf_id) = match self.descend(subtree, &key_hash) {
            Some(found) => found,
            None => return Ok(DeleteOutcome::Absent),
        };
        {
            let leaf = self.leaves.get(leaf_id);
            if leaf.key_hash != key_hash || leaf.key_bytes != key {
                return Ok(DeleteOutcome::Absent);
            }
        }
        match path.last() {
            None => self.subtrees[subtree as usize].root = None,
            Some(&parent) => {
                let p = self.nodes.get(parent);
                let sibling = if p.left == Child::Leaf(leaf_id) { p.right } else { p.left };
                if path.len() == 1 {
                    self.subtrees[subtree as usize].root = Some(sibling);
                } else {
                    let gp = path[path.len() - 2];
                    let gp_node = self.nodes.get_mut(gp);
                    if gp_node.left == Child::Node(parent) {
                        gp_node.left = sibling;
                    } else {
                        gp_node.right = sibling;
                    }
                }
                self.nodes.release(parent);
            }
        }
        self.leaves.release(leaf_id);
        for &n in &path[..path.len().saturating_sub(1)] {
            self.nodes.get_mut(n).dirty = true;
        }
        let st = &mut self.subtrees[subtree as usize];
        st.leaf_count -= 1;
        st.dirty = true;
        st.max_version = st.max_version.max(version);
        st.last_touched = version;
        Ok(DeleteOutcome::Deleted)
    }

    /// Current value and version for a key, reading the payload back from
    /// the journal. A key-hash match with different key bytes is absent.
    pub fn get(
        &self,
        subtree: u32,
        key: &[u8],
        journal: &Journal,
    ) -> Result<Option<(Vec<u8>, Version)>, StoreError> {
        let key_hash = hash_data::<DefaultHash>(key);
        self.check_route(&key_hash, subtree)?;
        self.prefetch_path(subtree, &key_hash);
        let (_, leaf_id) = match self.descend(subtree, &key_hash) {
            Some(found) => found,
            None => return Ok(None),
        };
        let leaf = self.leaves.get(leaf_id);
        if leaf.key_hash != key_hash || leaf.key_bytes != key {
            return Ok(None);
        }
        let (_, value) = journal.read(leaf.version, leaf.value_offset)?;
        Ok(Some((value, leaf.version)))
    }

    /// Rehashes all dirty paths bottom-up and returns the subtree root
    /// digest plus the number of internal nodes rehashed. Sibling groups at
    /// equal dirty-height are hashed through the batch interface.
    pub fn recompute_subtree_root(&mut self, subtree: u32) -> Result<(Hash256, u64), StoreError> {
        let root = match self.subtrees[subtree as usize].root {
            None => {
                let st = &mut self.subtrees[subtree as usize];
                st.dirty = false;
                st.root_hash = EMPTY_SUBTREE_HASH;
                return Ok((EMPTY_SUBTREE_HASH, 0));
            }
            Some(c) => c,
        };
        let mut groups: Vec<Vec<u32>> = Vec::new();
        if let Child::Node(n) = root {
            if self.nodes.get(n).dirty {
                collect_dirty_heights(&self.nodes, n, &mut groups);
            }
        }
        let mut rehashed = 0u64;
        for group in &groups {
            let mut inputs = Vec::with_capacity(group.len());
            let mut versions = Vec::with_capacity(group.len());
            for &id in group {
                let node = self.nodes.get(id);
                let version = self.child_version(node.left).max(self.child_version(node.right));
                let mut buf = [0u8; 64];
                buf[..32].copy_from_slice(&self.child_hash(node.left).0);
                buf[32..].copy_from_slice(&self.child_hash(node.right).0);
                inputs.push((make_salt(version, node.depth)?, buf));
                versions.push(version);
            }
            let jobs: Vec<BatchJob<'_>> = inputs
                .iter()
                .map(|(salt, buf)| BatchJob { salt: *salt, input: &buf[..] })
                .collect();
            let digests = batch_hash::<DefaultHash>(&jobs);
            for ((&id, digest), &version) in group.iter().zip(digests).zip(&versions) {
                let node = self.nodes.get_mut(id);
                node.hash = digest;
                node.version = version;
                node.dirty = false;
                rehashed += 1;
            }
        }
        let root_hash = self.child_hash(root);
        let st = &mut self.subtrees[subtree as usize];
        st.dirty = false;
        st.root_hash = root_hash;
        Ok((root_hash, rehashed))
    }

    /// Nodes and leaves whose version equals `version`, in depth-first
    /// pre-order (node, then left, then right). Assumes the subtree has
    /// been recomputed for this version.
    pub fn dirty_nodes_of_version(&self, subtree: u32, version: Version) -> Vec<TouchedNode> {
        let mut out = Vec::new();
        if let Some(root) = self.subtrees[subtree as usize].root {
            self.collect_of_version(root, version, &mut out);
        }
        out
    }

    fn collect_of_version(&self, c: Child, version: Version, out: &mut Vec<TouchedNode>) {
        match c {
            Child::Leaf(l) => {
                let leaf = self.leaves.get(l);
                if leaf.version == version {
                    out.push(TouchedNode::Leaf {
                        key_hash: leaf.key_hash,
                        version: leaf.version,
                        hash: leaf.hash,
                    });
                }
            }
            Child::Node(n) => {
                let node = self.nodes.get(n);
                // children of an older node are at most as old
                if node.version != version {
                    return;
                }
                out.push(TouchedNode::Internal {
                    depth: node.depth,
                    version: node.version,
                    hash: node.hash,
                });
                self.collect_of_version(node.left, version, out);
                self.collect_of_version(node.right, version, out);
            }
        }
    }

    /// Sanity check used in tests: depths strictly increase root-to-leaf
    /// and terminate at the reserved leaf level.
    pub fn check_depth_monotonicity(&self, subtree: u32) -> bool {
        fn walk(shard: &Shard, c: Child, floor: i32) -> bool {
            match c {
                Child::Leaf(_) => floor < LEAF_DEPTH as i32,
                Child::Node(n) => {
                    let node = shard.nodes.get(n);
                    let d = node.depth as i32;
                    d > floor
                        && d < LEAF_DEPTH as i32
                        && walk(shard, node.left, d)
                        && walk(shard, node.right, d)
                }
            }
        }
        match self.subtrees[subtree as usize].root {
            None => true,
            Some(c) => walk(self, c, -1),
        }
    }
}

/// Post-order pass grouping dirty nodes by dirty-height so each group only
/// depends on already-clean digests.
fn collect_dirty_heights(
    nodes: &Arena<InternalNode>,
    id: u32,
    groups: &mut Vec<Vec<u32>>,
) -> usize {
    let node = nodes.get(id);
    let mut child_height = 0usize;
    for c in [node.left, node.right] {
        if let Child::Node(n) = c {
            if nodes.get(n).dirty {
                child_height = child_height.max(collect_dirty_heights(nodes, n, groups));
            }
        }
    }
    let height = child_height + 1;
    if groups.len() < height {
        groups.resize_with(height, Vec::new);
    }
    groups[height - 1].push(id);
    height
}

#[cfg(target_arch = "x86_64")]
#[inline]
fn prefetch_hint(p: *const u8) {
    unsafe { core::arch::x86_64::_mm_prefetch(p as *const i8, core::arch::x86_64::_MM_HINT_T0) }
}

#[cfg(not(target_arch = "x86_64"))]
#[inline]
fn prefetch_hint(_p: *const u8) {}
