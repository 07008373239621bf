//! Shared test infrastructure: a from-scratch root oracle that never touches
//! the incremental tree code, a reference key-value model, and a proof
//! mutation corpus.

use std::collections::BTreeMap;

use smt_store::hash::{
    hash_data, hash_internal, hash_leaf, key_bit, DefaultHash, Depth, Hash256, Version,
    EMPTY_SUBTREE_HASH,
};
use smt_store::proof::{Proof, ProofFrame};
use smt_store::{route, Topology};

/// Reference state: key -> (value, version of last write).
pub type Model = BTreeMap<Vec<u8>, (Vec<u8>, Version)>;

/// Recomputes the global root from the model alone, building each subtree
/// recursively by partitioning key hashes at their first differing bit.
/// Shares only the hash primitives with the store.
pub fn oracle_root(model: &Model, topology: &Topology, commit_version: Version) -> Hash256 {
    let mut buckets: Vec<Vec<(Hash256, Hash256, Version)>> =
        (0..topology.total_subtrees()).map(|_| Vec::new()).collect();
    for (key, (value, version)) in model {
        let key_hash = hash_data::<DefaultHash>(key);
        let (shard, subtree) = route(&key_hash, topology);
        buckets[topology.global_index(shard, subtree)].push((
            key_hash,
            hash_data::<DefaultHash>(value),
            *version,
        ));
    }
    let mut level: Vec<Hash256> = buckets
        .iter()
        .map(|items| subtree_root(items, topology.implicit_levels()).0)
        .collect();
    let mut depth = topology.implicit_levels();
    while level.len() > 1 {
        depth -= 1;
        level = level
            .chunks(2)
            .map(|pair| {
                hash_internal::<DefaultHash>(&pair[0], &pair[1], commit_version, depth).unwrap()
            })
            .collect();
    }
    level[0]
}

fn subtree_root(items: &[(Hash256, Hash256, Version)], floor: Depth) -> (Hash256, Version) {
    match items.len() {
        0 => (EMPTY_SUBTREE_HASH, 0),
        1 => {
            let (key_hash, value_hash, version) = &items[0];
            (hash_leaf::<DefaultHash>(key_hash, value_hash, *version).unwrap(), *version)
        }
        _ => {
            let mut depth = floor;
            loop {
                let (zeros, ones): (Vec<_>, Vec<_>) =
                    items.iter().copied().partition(|(kh, _, _)| !key_bit(kh, depth));
                if !zeros.is_empty() && !ones.is_empty() {
                    let (left, v_l) = subtree_root(&zeros, depth + 1);
                    let (right, v_r) = subtree_root(&ones, depth + 1);
                    let version = v_l.max(v_r);
                    return (
                        hash_internal::<DefaultHash>(&left, &right, version, depth).unwrap(),
                        version,
                    );
                }
                depth += 1;
            }
        }
    }
}

/// Structured tamperings of a proof. Every returned variant differs from
/// the original and must fail verification.
#[allow(dead_code)] // each integration binary compiles this module separately
pub fn mutations(proof: &Proof) -> Vec<(String, Proof)> {
    let mut out: Vec<(String, Proof)> = Vec::new();
    let mut push = |name: &str, p: Proof| {
        if p != *proof {
            out.push((name.to_string(), p));
        }
    };

    // permutation attack: reorder recorded siblings
    if proof.path.len() >= 2 {
        for at in 0..proof.path.len() - 1 {
            let mut p = proof.clone();
            p.path.swap(at, at + 1);
            push("path-step swap", p);
        }
    }

    // truncation attack: drop siblings from either end
    if !proof.path.is_empty() {
        let mut p = proof.clone();
        p.path.pop();
        push("path truncation (bottom)", p);
        let mut p = proof.clone();
        p.path.remove(0);
        push("path truncation (top)", p);
    }

    // duplication attack: substitute one sibling's digest with another's
    if proof.path.len() >= 2 {
        for at in 1..proof.path.len() {
            let mut p = proof.clone();
            p.path[at].hash = p.path[at - 1].hash;
            push("sibling value substitution", p);
        }
    }
    for at in 0..proof.path.len() {
        let mut p = proof.clone();
        p.path[at].hash.0[0] ^= 0x01;
        push("sibling digest flip", p);
    }

    // direction flips
    for at in 0..proof.path.len() {
        let mut p = proof.clone();
        p.path[at].is_right = !p.path[at].is_right;
        push("direction flip", p);
    }

    // depth shifts
    for at in 0..proof.path.len() {
        let mut p = proof.clone();
        p.path[at].depth += 1;
        push("depth shift", p);
    }

    // version inflation: raising any recorded version changes a salt
    // (lowering one below the running maximum is absorbed by design)
    for at in 0..proof.path.len() {
        let mut p = proof.clone();
        p.path[at].version = p.snapshot_version + 1;
        push("version inflation (step)", p);
    }
    {
        let mut p = proof.clone();
        p.snapshot_version += 1;
        push("version inflation (snapshot)", p);
    }

    // bridge tampering
    for at in 0..proof.bridge.len() {
        let mut p = proof.clone();
        p.bridge[at].0[31] ^= 0x80;
        push("bridge digest flip", p);
        if proof.bridge.len() >= 2 {
            let mut p = proof.clone();
            let other = (at + 1) % p.bridge.len();
            p.bridge[at] = p.bridge[other];
            push("bridge substitution", p);
        }
    }
    if !proof.bridge.is_empty() {
        let mut p = proof.clone();
        p.bridge.pop();
        push("bridge truncation", p);
    }

    // bottom frame tampering
    match &proof.frame {
        ProofFrame::Leaf { .. } => {
            let mut p = proof.clone();
            if let ProofFrame::Leaf { value_hash, .. } = &mut p.frame {
                value_hash.0[0] ^= 0x01;
            }
            push("leaf value digest flip", p);
            let mut p = proof.clone();
            if let ProofFrame::Leaf { key_hash, .. } = &mut p.frame {
                key_hash.0[0] ^= 0x01;
            }
            push("leaf key digest flip", p);
            let mut p = proof.clone();
            if let ProofFrame::Leaf { version, .. } = &mut p.frame {
                *version += 1;
            }
            push("leaf version inflation", p);
        }
        ProofFrame::ExternalBreak { .. } => {
            let mut p = proof.clone();
            if let ProofFrame::ExternalBreak { hash, .. } = &mut p.frame {
                hash.0[0] ^= 0x01;
            }
            push("break digest flip", p);
            let mut p = proof.clone();
            if let ProofFrame::ExternalBreak { is_right, .. } = &mut p.frame {
                *is_right = !*is_right;
            }
            push("break direction flip", p);
        }
        ProofFrame::SubtreeRoot { .. } => {
            let mut p = proof.clone();
            if let ProofFrame::SubtreeRoot { hash, .. } = &mut p.frame {
                hash.0[0] ^= 0x01;
            }
            push("directory digest flip", p);
        }
    }

    out
}
