//! Salted, domain-separated hash primitives.
//!
//! Every digest in the store is salted with an 8-byte word packing the
//! version (52 bits) and the tree depth (12 bits). Leaf hashes always use
//! the reserved depth `0xfff`, which keeps internal and leaf digests in
//! disjoint domains. The hash function is pluggable through [`HashScheme`];
//! the default is BLAKE2s-256 with its native salt input.

use blake2::digest::consts::U32;
use blake2::digest::{Digest, FixedOutput, Update};
use blake2::{Blake2s256, Blake2sMac};

use crate::error::StoreError;

/// Length in bytes of every digest.
pub const HASH_LEN: usize = 32;

/// 32-byte digest, compared bytewise.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash256(pub [u8; HASH_LEN]);

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0u8; HASH_LEN]);

    pub fn as_bytes(&self) -> &[u8; HASH_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Hash256({})", self.to_hex())
    }
}

impl std::fmt::Display for Hash256 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl From<[u8; HASH_LEN]> for Hash256 {
    fn from(bytes: [u8; HASH_LEN]) -> Self {
        Hash256(bytes)
    }
}

/// Monotonically increasing epoch number. Valid values are below 2^52.
pub type Version = u64;

/// Largest representable version.
pub const MAX_VERSION: Version = (1 << 52) - 1;

/// Tree level of a node. Valid values are `0..=0xfff`.
pub type Depth = u16;

/// Reserved depth that all leaves inhabit; unreachable for internal nodes.
pub const LEAF_DEPTH: Depth = 0xfff;

/// Digest of the empty subtree. Reserved; cannot collide with a salted
/// digest except with negligible probability.
pub const EMPTY_SUBTREE_HASH: Hash256 = Hash256::ZERO;

/// Packs `(version << 12) | depth` as an 8-byte little-endian word.
pub fn make_salt(version: Version, depth: Depth) -> Result<[u8; 8], StoreError> {
    if version > MAX_VERSION {
        return Err(StoreError::VersionOutOfRange(version));
    }
    if depth > LEAF_DEPTH {
        return Err(StoreError::DepthOutOfRange(depth));
    }
    Ok(((version << 12) | depth as u64).to_le_bytes())
}

/// A 256-bit hash function usable for node digests.
///
/// Implementations must be deterministic and must keep salted and unsalted
/// digests in disjoint domains. A scheme without a native salt input can
/// conform by prepending the 8-byte salt to the input stream.
pub trait HashScheme {
    /// Stable identifier recorded in snapshot headers.
    const ID: u32;

    /// Unsalted digest over the concatenation of `parts`.
    fn hash(parts: &[&[u8]]) -> Hash256;

    /// Salted digest over the concatenation of `parts`.
    fn hash_salted(salt: &[u8; 8], parts: &[&[u8]]) -> Hash256;
}

/// BLAKE2s-256 using the native 8-byte salt parameter.
pub struct Blake2sScheme;

impl HashScheme for Blake2sScheme {
    const ID: u32 = 1;

    fn hash(parts: &[&[u8]]) -> Hash256 {
        let mut h = Blake2s256::new();
        for p in parts {
            Digest::update(&mut h, p);
        }
        Hash256(h.finalize().into())
    }

    fn hash_salted(salt: &[u8; 8], parts: &[&[u8]]) -> Hash256 {
        // An empty key makes the MAC construction coincide with plain
        // BLAKE2s-256 parameterized by the salt.
        let mut h = Blake2sMac::<U32>::new_with_salt_and_personal(&[], salt, &[])
            .expect("8-byte salt is always accepted");
        for p in parts {
            Update::update(&mut h, p);
        }
        Hash256(h.finalize_fixed().into())
    }
}

/// Default hash scheme for this build. All frozen test vectors in the
/// repository are generated against it.
pub type DefaultHash = Blake2sScheme;

/// Unsalted digest of raw bytes; used for key and value digests.
pub fn hash_data<H: HashScheme>(data: &[u8]) -> Hash256 {
    H::hash(&[data])
}

/// Leaf digest: salted with `(version, 0xfff)` over `key_hash || value_hash`.
pub fn hash_leaf<H: HashScheme>(
    key_hash: &Hash256,
    value_hash: &Hash256,
    version: Version,
) -> Result<Hash256, StoreError> {
    let salt = make_salt(version, LEAF_DEPTH)?;
    Ok(H::hash_salted(&salt, &[&key_hash.0, &value_hash.0]))
}

/// Internal-node digest: salted with `(version, depth)` over `left || right`.
/// The operand order is fixed by tree position and never normalized.
pub fn hash_internal<H: HashScheme>(
    left: &Hash256,
    right: &Hash256,
    version: Version,
    depth: Depth,
) -> Result<Hash256, StoreError> {
    if depth >= LEAF_DEPTH {
        return Err(StoreError::DepthOutOfRange(depth));
    }
    let salt = make_salt(version, depth)?;
    Ok(H::hash_salted(&salt, &[&left.0, &right.0]))
}

/// One batch hashing job: a salt plus the bytes to digest.
#[derive(Clone, Copy)]
pub struct BatchJob<'a> {
    pub salt: [u8; 8],
    pub input: &'a [u8],
}

/// Hashes every job; `output[i]` is bit-identical to hashing job `i` alone.
///
/// This is the scalar conformance implementation of the throughput-batched
/// hashing contract. Jobs are grouped in lanes of 16 so a vectorized backend
/// can slot in without changing the interface.
pub fn batch_hash<H: HashScheme>(jobs: &[BatchJob<'_>]) -> Vec<Hash256> {
    let mut out = Vec::with_capacity(jobs.len());
    for lane in jobs.chunks(16) {
        for job in lane {
            out.push(H::hash_salted(&job.salt, &[job.input]));
        }
    }
    out
}

/// Extracts bit `d` of a key hash: `h[d/8] & (1 << (d % 8))`.
#[inline]
pub fn key_bit(h: &Hash256, d: Depth) -> bool {
    h.0[(d / 8) as usize] & (1 << (d % 8)) != 0
}

/// Index of the first bit at which two key hashes differ.
/// Returns `None` when equal.
pub fn first_diff_bit(a: &Hash256, b: &Hash256) -> Option<Depth> {
    for i in 0..HASH_LEN {
        let x = a.0[i] ^ b.0[i];
        if x != 0 {
            return Some((i * 8) as Depth + x.trailing_zeros() as Depth);
        }
    }
    None
}
