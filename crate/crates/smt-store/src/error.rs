use thiserror::Error;

use crate::hash::{Depth, Version};

/// Errors surfaced by the store.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("version {0} exceeds the 52-bit range")]
    VersionOutOfRange(Version),

    #[error("depth {0:#x} is out of range for this operation")]
    DepthOutOfRange(Depth),

    #[error("key routes to shard {actual_shard}/subtree {actual_subtree}, not {expected_shard}/{expected_subtree}")]
    RoutingViolation {
        expected_shard: u32,
        expected_subtree: u32,
        actual_shard: u32,
        actual_subtree: u32,
    },

    #[error("version {given} regresses below the subtree's high-water mark {current}")]
    VersionRegression { given: Version, current: Version },

    #[error("full 256-bit key-hash collision between distinct keys; store integrity lost")]
    KeyHashCollision,

    #[error("journal offset exceeds the 52-bit capacity")]
    JournalCapacity,

    #[error("journal segment for version {0} is sealed")]
    SegmentSealed(Version),

    #[error("journal segment for version {0} was already sealed")]
    DoubleSeal(Version),

    #[error("no journal segment for version {0}")]
    NoSegment(Version),

    #[error("corrupt data: {0}")]
    Corruption(String),

    #[error("malformed file or stream: {0}")]
    Format(String),

    #[error("snapshot entry count exceeds the 48-bit tag range")]
    EntryOverflow,

    #[error("proof does not verify: {0}")]
    InvalidProof(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl StoreError {
    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        StoreError::Corruption(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        StoreError::Format(msg.into())
    }
}
