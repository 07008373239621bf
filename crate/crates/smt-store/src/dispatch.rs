//! Key-space partitioning, per-shard batch application, and the per-commit
//! fold of subtree digests through the implicit top levels.
//!
//! The first `shard_bits` key-hash bits select the owning shard and the next
//! `subtree_bits` select the subtree within it. Those implicit levels are
//! never materialized as nodes; commit folds the subtree digests pairwise,
//! salting every implicit-level hash with the epoch version.

use std::collections::HashMap;

use crate::error::StoreError;
use crate::hash::{
    hash_data, hash_internal, key_bit, DefaultHash, Depth, Hash256, Version, MAX_VERSION,
};
use crate::journal::{Journal, JournalOffset};
use crate::tree::{DeleteOutcome, PutOutcome, Shard};

/// Static partition of the key space.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Topology {
    pub shard_bits: u8,
    pub subtree_bits: u8,
}

impl Default for Topology {
    /// Desk-scale default: 8 shards of 256 subtrees.
    fn default() -> Self {
        Topology { shard_bits: 3, subtree_bits: 8 }
    }
}

impl Topology {
    pub fn new(shard_bits: u8, subtree_bits: u8) -> Result<Self, StoreError> {
        if shard_bits as u32 + subtree_bits as u32 > 24 {
            return Err(StoreError::format("shard_bits + subtree_bits must be at most 24"));
        }
        Ok(Topology { shard_bits, subtree_bits })
    }

    pub fn shard_count(&self) -> u32 {
        1 << self.shard_bits
    }

    pub fn subtrees_per_shard(&self) -> u32 {
        1 << self.subtree_bits
    }

    /// Tree levels folded per commit instead of being materialized.
    pub fn implicit_levels(&self) -> u16 {
        self.shard_bits as u16 + self.subtree_bits as u16
    }

    pub fn total_subtrees(&self) -> usize {
        1usize << self.implicit_levels()
    }

    pub fn global_index(&self, shard: u32, subtree: u32) -> usize {
        ((shard as usize) << self.subtree_bits) | subtree as usize
    }
}

/// Shard and subtree owning a key hash. Bit `d` of the hash steers the
/// branch at implicit depth `d`, so bit 0 is the most significant position
/// of the global subtree index.
pub fn route(key_hash: &Hash256, topology: &Topology) -> (u32, u32) {
    let mut index = 0u32;
    for d in 0..topology.implicit_levels() {
        index = (index << 1) | key_bit(key_hash, d as Depth) as u32;
    }
    (index >> topology.subtree_bits, index & (topology.subtrees_per_shard() - 1))
}

/// One element of an update batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Update {
    Put { key: Vec<u8>, value: Vec<u8> },
    Delete { key: Vec<u8> },
}

impl Update {
    pub fn key(&self) -> &[u8] {
        match self {
            Update::Put { key, .. } => key,
            Update::Delete { key } => key,
        }
    }
}

/// Counters from one batch application.
#[derive(Debug, Default)]
pub struct ApplyStats {
    pub applied: u64,
    pub inserted: u64,
    pub updated: u64,
    pub deleted: u64,
    pub absent_deletes: u64,
    /// Per-key failures, reported with the offending key.
    pub key_errors: Vec<(Vec<u8>, StoreError)>,
}

/// Result of folding one epoch.
#[derive(Debug, Clone)]
pub struct CommitResult {
    pub root: Hash256,
    pub version: Version,
    /// Subtree root digests in global index order.
    pub subtree_roots: Vec<Hash256>,
    pub updates_applied: u64,
    pub nodes_rehashed: u64,
}

enum PreparedAction {
    Put { key_hash: Hash256, value_hash: Hash256, offset: JournalOffset },
    Delete,
}

struct PreparedOp {
    key: Vec<u8>,
    subtree: u32,
    action: PreparedAction,
}

/// The sharded store: shards, journal, and commit state.
pub struct Store {
    topology: Topology,
    shards: Vec<Shard>,
    journal: Journal,
    version: Version,
    threads: usize,
    pending_updates: u64,
}

impl Store {
    pub fn new(topology: Topology) -> Self {
        Self::with_journal(topology, Journal::in_memory())
    }

    pub fn with_journal(topology: Topology, journal: Journal) -> Self {
        let shards = (0..topology.shard_count()).map(|id| Shard::new(id, topology)).collect();
        Store { topology, shards, journal, version: 0, threads: 1, pending_updates: 0 }
    }

    /// Worker threads used by `apply_batch` and `commit` (capped at the
    /// shard count). Determinism does not depend on this setting.
    pub fn set_threads(&mut self, threads: usize) {
        self.threads = threads.max(1);
    }

    pub fn set_prefetch(&mut self, enabled: bool) {
        for shard in &mut self.shards {
            shard.set_prefetch(enabled);
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn version(&self) -> Version {
        self.version
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn journal_mut(&mut self) -> &mut Journal {
        &mut self.journal
    }

    pub fn shard(&self, id: u32) -> &Shard {
        &self.shards[id as usize]
    }

    /// Applies one epoch's updates. Duplicate keys within the batch resolve
    /// last-writer-wins before touching the tree; values are journaled up
    /// front so shard writers stay free of I/O and shared state.
    pub fn apply_batch(
        &mut self,
        updates: Vec<Update>,
        version: Version,
    ) -> Result<ApplyStats, StoreError> {
        if version > MAX_VERSION {
            return Err(StoreError::VersionOutOfRange(version));
        }
        if version < self.version {
            return Err(StoreError::VersionRegression { given: version, current: self.version });
        }

        // last-writer-wins, keeping first-occurrence order
        let mut resolved: Vec<Update> = Vec::with_capacity(updates.len());
        let mut by_key: HashMap<Vec<u8>, usize> = HashMap::with_capacity(updates.len());
        for update in updates {
            match by_key.entry(update.key().to_vec()) {
                std::collections::hash_map::Entry::Occupied(slot) => {
                    resolved[*slot.get()] = update;
                }
                std::collections::hash_map::Entry::Vacant(slot) => {
                    slot.insert(resolved.len());
                    resolved.push(update);
                }
            }
        }

        let mut per_shard: Vec<Vec<PreparedOp>> =
            (0..self.topology.shard_count()).map(|_| Vec::new()).collect();
        for update in resolved {
            let key_hash = hash_data::<DefaultHash>(update.key());
            let (shard, subtree) = route(&key_hash, &self.topology);
            let op = match update {
                Update::Put { key, value } => {
                    let value_hash = hash_data::<DefaultHash>(&value);
                    let offset = self.journal.append(version, &key, &value)?;
                    PreparedOp {
                        key,
                        subtree,
                        action: PreparedAction::Put { key_hash, value_hash, offset },
                    }
                }
                Update::Delete { key } => {
                    PreparedOp { key, subtree, action: PreparedAction::Delete }
                }
            };
            per_shard[shard as usize].push(op);
        }

        let workers = self.threads.min(self.shards.len()).max(1);
        let stats = if workers <= 1 {
            let mut stats = ApplyStats::default();
            for (shard, ops) in self.shards.iter_mut().zip(&per_shard) {
                apply_to_shard(shard, ops, version, &mut stats);
            }
            stats
        } else {
            let chunk = self.shards.len().div_ceil(workers);
            let mut partials: Vec<ApplyStats> = Vec::new();
            std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for (shard_chunk, ops_chunk) in
                    self.shards.chunks_mut(chunk).zip(per_shard.chunks(chunk))
                {
                    handles.push(scope.spawn(move || {
                        let mut stats = ApplyStats::default();
                        for (shard, ops) in shard_chunk.iter_mut().zip(ops_chunk) {
                            apply_to_shard(shard, ops, version, &mut stats);
                        }
                        stats
                    }));
                }
                for handle in handles {
                    partials.push(handle.join().expect("shard writer panicked"));
                }
            });
            let mut stats = ApplyStats::default();
            for partial in partials {
                stats.applied += partial.applied;
                stats.inserted += partial.inserted;
                stats.updated += partial.updated;
                stats.deleted += partial.deleted;
                stats.absent_deletes += partial.absent_deletes;
                stats.key_errors.extend(partial.key_errors);
            }
            stats
        };
        self.pending_updates += stats.applied;
        Ok(stats)
    }

    /// Epoch barrier: recomputes every dirty subtree, folds the implicit
    /// top levels with the epoch version, and returns the global root.
    pub fn commit(&mut self, version: Version) -> Result<CommitResult, StoreError> {
        if version > MAX_VERSION {
            return Err(StoreError::VersionOutOfRange(version));
        }
        if version < self.version {
            return Err(StoreError::VersionRegression { given: version, current: self.version });
        }

        let workers = self.threads.min(self.shards.len()).max(1);
        let mut nodes_rehashed = 0u64;
        if workers <= 1 {
            for shard in &mut self.shards {
                nodes_rehashed += recompute_shard(shard)?;
            }
        } else {
            let chunk = self.shards.len().div_ceil(workers);
            let mut partials: Vec<Result<u64, StoreError>> = Vec::new();
            std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for shard_chunk in self.shards.chunks_mut(chunk) {
                    handles.push(scope.spawn(move || {
                        let mut rehashed = 0u64;
                        for shard in shard_chunk {
                            rehashed += recompute_shard(shard)?;
                        }
                        Ok(rehashed)
                    }));
                }
                for handle in handles {
                    partials.push(handle.join().expect("recompute worker panicked"));
                }
            });
            for partial in partials {
                nodes_rehashed += partial?;
            }
        }

        let subtree_roots = self.subtree_roots();
        let root = fold_subtree_roots(&subtree_roots, version, &self.topology)?;
        self.version = version;
        let updates_applied = std::mem::take(&mut self.pending_updates);
        Ok(CommitResult { root, version, subtree_roots, updates_applied, nodes_rehashed })
    }

    /// Current subtree root digests in global index order. Valid after
    /// commit; dirty subtrees report their last recomputed digest.
    pub fn subtree_roots(&self) -> Vec<Hash256> {
        let mut roots = Vec::with_capacity(self.topology.total_subtrees());
        for shard in &self.shards {
            for subtree in &shard.subtrees {
                roots.push(subtree.root_hash);
            }
        }
        roots
    }

    /// Point lookup through the routing layer.
    pub fn get(&self, key: &[u8]) -> Result<Option<(Vec<u8>, Version)>, StoreError> {
        let key_hash = hash_data::<DefaultHash>(key);
        let (shard, subtree) = route(&key_hash, &self.topology);
        self.shards[shard as usize].get(subtree, key, &self.journal)
    }
}

fn apply_to_shard(shard: &mut Shard, ops: &[PreparedOp], version: Version, stats: &mut ApplyStats) {
    for op in ops {
        let result = match &op.action {
            PreparedAction::Put { key_hash, value_hash, offset } => shard
                .apply_put(op.subtree, &op.key, *key_hash, *value_hash, *offset, version)
                .map(|outcome| match outcome {
                    PutOutcome::Inserted => {
                        stats.inserted += 1;
                    }
                    PutOutcome::Updated => {
                        stats.updated += 1;
                    }
                }),
            PreparedAction::Delete => {
                shard.delete(op.subtree, &op.key, version).map(|outcome| match outcome {
                    DeleteOutcome::Deleted => {
                        stats.deleted += 1;
                    }
                    DeleteOutcome::Absent => {
                        stats.absent_deletes += 1;
                    }
                })
            }
        };
        match result {
            Ok(()) => stats.applied += 1,
            Err(err) => stats.key_errors.push((op.key.clone(), err)),
        }
    }
}

fn recompute_shard(shard: &mut Shard) -> Result<u64, StoreError> {
    let mut rehashed = 0u64;
    for subtree in 0..shard.subtrees.len() as u32 {
        if shard.subtrees[subtree as usize].dirty {
            let (_, n) = shard.recompute_subtree_root(subtree)?;
            rehashed += n;
        }
    }
    Ok(rehashed)
}

/// Pairwise fold of `2^implicit_levels` subtree digests down to the global
/// root, salting depth `d` hashes with `(version, d)`.
pub fn fold_subtree_roots(
    roots: &[Hash256],
    version: Version,
    topology: &Topology,
) -> Result<Hash256, StoreError> {
    let levels = fold_levels(roots, version, topology)?;
    Ok(levels.last().expect("fold always yields a root")[0])
}

/// All intermediate fold levels: `levels[0]` is the input digests, each
/// following level halves, `levels[implicit_levels]` is `[root]`.
pub fn fold_levels(
    roots: &[Hash256],
    version: Version,
    topology: &Topology,
) -> Result<Vec<Vec<Hash256>>, StoreError> {
    if roots.len() != topology.total_subtrees() {
        return Err(StoreError::format(format!(
            "expected {} subtree digests, got {}",
            topology.total_subtrees(),
            roots.len()
        )));
    }
    let mut levels = vec![roots.to_vec()];
    for depth in (0..topology.implicit_levels()).rev() {
        let prev = levels.last().unwrap();
        let mut next = Vec::with_capacity(prev.len() / 2);
        for pair in prev.chunks(2) {
            next.push(hash_internal::<DefaultHash>(&pair[0], &pair[1], version, depth)?);
        }
        levels.push(next);
    }
    Ok(levels)
}
