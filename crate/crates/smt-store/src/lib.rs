//! Authenticated key-value store over a versioned, sharded sparse binary
//! Merkle tree.
//!
//! Keys hash to 256-bit paths; internal nodes branch at the first bit where
//! the key hashes under them differ, so tree depth tracks the log of the key
//! count rather than the hash width. Every node digest is salted with the
//! version of the last write below it and its depth, which pins proofs to a
//! specific committed state and blocks cross-version and cross-level replay.
//!
//! The key space splits across independent shards, each holding a fixed
//! number of subtrees; an epoch-level commit folds the subtree digests into
//! one global root. Snapshots serialize exactly the entries a verifier can
//! reach, and proofs extracted from them distinguish inclusion, exclusion,
//! and "unchanged since version V" without revealing unrelated keys.

pub mod bench;
pub mod dispatch;
pub mod error;
pub mod hash;
pub mod journal;
pub mod proof;
pub mod snapshot;
pub mod tree;

pub use dispatch::{fold_levels, fold_subtree_roots, route, CommitResult, Store, Topology, Update};
pub use error::StoreError;
pub use hash::{
    hash_data, hash_internal, hash_leaf, Blake2sScheme, DefaultHash, Depth, Hash256, HashScheme,
    Version, EMPTY_SUBTREE_HASH, LEAF_DEPTH, MAX_VERSION,
};
pub use bench::{RunReport, WorkloadConfig};
pub use journal::Journal;
pub use proof::{build_proof, verify, Proof, ProofFrame, Verdict};
pub use snapshot::{write_snapshot, SnapshotReader};
