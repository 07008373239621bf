//! End-to-end gate: one test per release criterion, each printing a
//! PASS/SKIP line when it holds and panicking with context when it does
//! not.

mod common;

use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use common::{mutations, oracle_root, Model};
use smt_store::bench::{self, WorkloadConfig};
use smt_store::hash::{batch_hash, hash_data, make_salt, BatchJob, DefaultHash, HashScheme};
use smt_store::proof::{build_proof, verify, Verdict};
use smt_store::snapshot::write_snapshot;
use smt_store::{SnapshotReader, Store, Topology, Update};

/// Serializes the two throughput criteria so they don't contend.
static PERF_LOCK: Mutex<()> = Mutex::new(());

fn random_key(rng: &mut ChaCha12Rng) -> Vec<u8> {
    let k: [u8; 32] = rng.gen();
    k.to_vec()
}

#[test]
fn criterion_1_oracle_root_equivalence() {
    let started = Instant::now();
    let keys: Vec<Vec<u8>> = (0..1024).map(|i| format!("key-{i:04}").into_bytes()).collect();
    for shard_bits in [0u8, 1, 2, 3] {
        let topology = Topology::new(shard_bits, 4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7 + shard_bits as u64);
        let mut store = Store::new(topology);
        let mut model = Model::new();
        let mut version = 0;
        for _epoch in 0..10 {
            version += 1;
            let mut batch = Vec::new();
            for _ in 0..1_000 {
                let key = keys[rng.gen_range(0..keys.len())].clone();
                match rng.gen_range(0..100u32) {
                    r if r < 90 => {
                        let value: [u8; 24] = rng.gen();
                        model.insert(key.clone(), (value.to_vec(), version));
                        batch.push(Update::Put { key, value: value.to_vec() });
                    }
                    r if r < 95 => {
                        let _ = store.get(&key).unwrap();
                    }
                    _ => {
                        model.remove(&key);
                        batch.push(Update::Delete { key });
                    }
                }
            }
            store.apply_batch(batch, version).unwrap();
            let root = store.commit(version).unwrap().root;
            let expected = oracle_root(&model, &topology, version);
            assert_eq!(
                root, expected,
                "criterion 1: FAIL (root diverged from rebuild oracle at \
                 {} shards, epoch {version})",
                1 << shard_bits
            );
        }
    }
    assert!(started.elapsed().as_secs() < 10, "criterion 1: FAIL (took too long)");
    println!("criterion 1 (oracle root equivalence): PASS");
}

#[test]
fn criterion_2_proof_completeness() {
    let started = Instant::now();
    let mut store = Store::new(Topology::default());
    let keys: Vec<Vec<u8>> = (0..1024).map(|i| format!("key-{i:04}").into_bytes()).collect();
    store
        .apply_batch(
            keys.iter()
                .map(|k| Update::Put { key: k.clone(), value: k.clone() })
                .collect(),
            1,
        )
        .unwrap();
    let root = store.commit(1).unwrap().root;
    let reader = SnapshotReader::from_bytes(&write_snapshot(&store).unwrap()).unwrap();

    for key in &keys {
        let proof = build_proof(&reader, key).unwrap();
        match verify(&proof, &root).unwrap() {
            Verdict::Inclusion { value_hash, version } => {
                assert_eq!(value_hash, hash_data::<DefaultHash>(key));
                assert_eq!(version, 1);
            }
            other => panic!("criterion 2: FAIL (present key got {other:?})"),
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    for _ in 0..1024 {
        let absent = random_key(&mut rng);
        if store.get(&absent).unwrap().is_some() {
            continue;
        }
        let proof = build_proof(&reader, &absent).unwrap();
        match verify(&proof, &root).unwrap() {
            Verdict::Exclusion => {}
            other => panic!("criterion 2: FAIL (absent key got {other:?})"),
        }
    }
    assert!(started.elapsed().as_secs() < 10, "criterion 2: FAIL (took too long)");
    println!("criterion 2 (proof completeness): PASS");
}

#[test]
fn criterion_3_attack_corpus_soundness() {
    // two versions of writes so the corpus covers external siblings and
    // delete-aged structure, not just fresh spines
    let mut store = Store::new(Topology::new(2, 3).unwrap());
    let keys: Vec<Vec<u8>> = (0..512).map(|i| format!("key-{i:03}").into_bytes()).collect();
    store
        .apply_batch(
            keys.iter()
                .map(|k| Update::Put { key: k.clone(), value: k.clone() })
                .collect(),
            1,
        )
        .unwrap();
    store.commit(1).unwrap();
    let mut second = Vec::new();
    for key in keys.iter().step_by(3) {
        second.push(Update::Put { key: key.clone(), value: b"revised".to_vec() });
    }
    for key in keys.iter().skip(1).step_by(7) {
        second.push(Update::Delete { key: key.clone() });
    }
    store.apply_batch(second, 2).unwrap();
    let root = store.commit(2).unwrap().root;
    let reader = SnapshotReader::from_bytes(&write_snapshot(&store).unwrap()).unwrap();

    let mut rng = ChaCha12Rng::seed_from_u64(13);
    let mut corpus = 0u64;
    let mut rejected = 0u64;
    let mut subjects: Vec<Vec<u8>> = keys.clone();
    for _ in 0..128 {
        subjects.push(random_key(&mut rng));
    }
    for key in &subjects {
        let proof = build_proof(&reader, key).unwrap();
        verify(&proof, &root).unwrap_or_else(|e| {
            panic!("criterion 3: FAIL (untampered proof rejected: {e})")
        });
        for (name, mutated) in mutations(&proof) {
            corpus += 1;
            match verify(&mutated, &root) {
                Err(_) => rejected += 1,
                Ok(verdict) => panic!(
                    "criterion 3: FAIL (mutation `{name}` accepted with {verdict:?})"
                ),
            }
        }
    }
    assert!(corpus >= 1_000, "criterion 3: FAIL (corpus too small: {corpus})");
    assert_eq!(rejected, corpus);
    println!("criterion 3 (attack corpus soundness): PASS ({rejected}/{corpus} rejected)");
}

#[test]
fn criterion_4_snapshot_round_trip() {
    let started = Instant::now();
    let mut store = Store::new(Topology::default());
    let keys: Vec<Vec<u8>> = (0..1u32 << 12).map(|i| i.to_le_bytes().to_vec()).collect();
    store
        .apply_batch(
            keys.iter()
                .map(|k| Update::Put { key: k.clone(), value: k.repeat(3) })
                .collect(),
            1,
        )
        .unwrap();
    let root = store.commit(1).unwrap().root;

    let bytes = write_snapshot(&store).unwrap();
    let again = write_snapshot(&store).unwrap();
    assert_eq!(bytes, again, "criterion 4: FAIL (serialization not deterministic)");

    let reader = SnapshotReader::from_bytes(&bytes).unwrap();
    assert_eq!(reader.root(), root);
    for key in &keys {
        let proof = build_proof(&reader, key).unwrap();
        match verify(&proof, &root).unwrap() {
            Verdict::Inclusion { .. } => {}
            other => panic!("criterion 4: FAIL (key got {other:?} after round trip)"),
        }
    }
    assert!(started.elapsed().as_secs() < 10, "criterion 4: FAIL (took too long)");
    println!("criterion 4 (snapshot round trip): PASS");
}

#[test]
fn criterion_5_batch_hash_conformance() {
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    let inputs: Vec<(Vec<u8>, [u8; 8])> = (0..10_000)
        .map(|_| {
            let len = rng.gen_range(0..200usize);
            let mut data = vec![0u8; len];
            rng.fill(&mut data[..]);
            let salt = make_salt(rng.gen_range(0..1 << 52), rng.gen_range(0..0xfff)).unwrap();
            (data, salt)
        })
        .collect();
    let jobs: Vec<BatchJob<'_>> = inputs
        .iter()
        .map(|(data, salt)| BatchJob { salt: *salt, input: data })
        .collect();
    let batched = batch_hash::<DefaultHash>(&jobs);
    for (job, digest) in jobs.iter().zip(&batched) {
        let sequential = DefaultHash::hash_salted(&job.salt, &[job.input]);
        assert_eq!(
            *digest, sequential,
            "criterion 5: FAIL (batched digest diverged from sequential)"
        );
    }
    println!("criterion 5 (batch-hash conformance): PASS");
}

#[test]
fn criterion_6_version_salting() {
    // identical content, different commit versions
    let build = |version| {
        let mut store = Store::new(Topology::new(1, 2).unwrap());
        store
            .apply_batch(
                vec![Update::Put { key: b"k".to_vec(), value: b"v".to_vec() }],
                version,
            )
            .unwrap();
        store.commit(version).unwrap().root
    };
    assert_ne!(build(1), build(2), "criterion 6: FAIL (version not distinguishable)");

    // A -> B -> A across versions stays distinguishable from the original
    let mut store = Store::new(Topology::new(1, 2).unwrap());
    store
        .apply_batch(vec![Update::Put { key: b"k".to_vec(), value: b"A".to_vec() }], 1)
        .unwrap();
    let original = store.commit(1).unwrap().root;
    store
        .apply_batch(vec![Update::Put { key: b"k".to_vec(), value: b"B".to_vec() }], 2)
        .unwrap();
    store.commit(2).unwrap();
    store
        .apply_batch(vec![Update::Put { key: b"k".to_vec(), value: b"A".to_vec() }], 3)
        .unwrap();
    let replayed = store.commit(3).unwrap().root;
    assert_ne!(original, replayed, "criterion 6: FAIL (ABA root collision)");
    println!("criterion 6 (version salting / ABA): PASS");
}

#[test]
fn criterion_7_shard_scaling() {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if cores < 4 {
        println!("criterion 7 (shard scaling): SKIP ({cores} cores available)");
        return;
    }
    let _guard = PERF_LOCK.lock().unwrap();
    let base = WorkloadConfig {
        keys: 1 << 17,
        ops: 1 << 20,
        value_size: 128,
        seed: 42,
        ..WorkloadConfig::default()
    };
    let best = |config: &WorkloadConfig| -> f64 {
        (0..2)
            .map(|_| bench::run(config).unwrap().ops_per_sec)
            .fold(0.0f64, f64::max)
    };
    let single = best(&WorkloadConfig { shard_bits: 0, subtree_bits: 10, threads: 1, ..base.clone() });
    let sharded = best(&WorkloadConfig { shard_bits: 2, subtree_bits: 8, threads: 4, ..base });
    println!(
        "criterion 7 note: 1-shard {:.0} ops/s, 4-shard {:.0} ops/s \
         (soft floor 500000 ops/s reported, not asserted)",
        single, sharded
    );
    assert!(
        sharded >= 2.0 * single,
        "criterion 7: FAIL (4-shard {sharded:.0} < 2x 1-shard {single:.0})"
    );
    println!(
        "criterion 7 (shard scaling): PASS ({:.2}x speedup)",
        sharded / single
    );
}

#[test]
fn criterion_8_snapshot_period_direction() {
    let _guard = PERF_LOCK.lock().unwrap();
    let dir = tempfile::tempdir().unwrap();
    // small values keep per-op cost low so the snapshot work is a
    // meaningful share of each run
    let base = WorkloadConfig {
        keys: 1 << 16,
        ops: 1 << 20,
        value_size: 32,
        seed: 42,
        shard_bits: 2,
        subtree_bits: 8,
        threads: 1,
        ..WorkloadConfig::default()
    };
    let periodic = WorkloadConfig {
        snapshot_period_ms: 500,
        snapshot_dir: Some(dir.path().to_path_buf()),
        ..base.clone()
    };
    // throwaway run to warm caches and the allocator, then interleaved
    // pairs in alternating order so load drift hits both configurations
    bench::run(&base).unwrap();
    let mut no_snapshot = Vec::new();
    let mut with_snapshot = Vec::new();
    for pair in 0..4 {
        if pair % 2 == 0 {
            no_snapshot.push(bench::run(&base).unwrap().ops_per_sec);
            with_snapshot.push(bench::run(&periodic).unwrap().ops_per_sec);
        } else {
            with_snapshot.push(bench::run(&periodic).unwrap().ops_per_sec);
            no_snapshot.push(bench::run(&base).unwrap().ops_per_sec);
        }
    }
    let mean = |samples: &[f64]| samples.iter().sum::<f64>() / samples.len() as f64;
    let without = mean(&no_snapshot);
    let with = mean(&with_snapshot);
    assert!(
        without > with,
        "criterion 8: FAIL (no-snapshot {without:.0} ops/s not above periodic {with:.0})"
    );
    println!(
        "criterion 8 (snapshot period direction): PASS \
         (no snapshots {without:.0} ops/s > 500ms period {with:.0} ops/s)"
    );
}

#[test]
fn criterion_9_external_version_chaining() {
    let started = Instant::now();
    let topology = Topology::new(2, 3).unwrap();
    let mut store = Store::new(topology);
    let keys: Vec<Vec<u8>> = (0..128).map(|i| format!("key-{i:03}").into_bytes()).collect();
    store
        .apply_batch(
            keys.iter()
                .map(|k| Update::Put { key: k.clone(), value: k.clone() })
                .collect(),
            1,
        )
        .unwrap();
    let root_v1 = store.commit(1).unwrap().root;
    let snap_v1 = SnapshotReader::from_bytes(&write_snapshot(&store).unwrap()).unwrap();

    // one write at v2, leaving most subtrees untouched
    store
        .apply_batch(vec![Update::Put { key: b"key-000".to_vec(), value: b"new".to_vec() }], 2)
        .unwrap();
    let root_v2 = store.commit(2).unwrap().root;
    let snap_v2 = SnapshotReader::from_bytes(&write_snapshot(&store).unwrap()).unwrap();

    let mut chained = 0;
    for key in keys.iter().skip(1) {
        let proof = build_proof(&snap_v2, key).unwrap();
        match verify(&proof, &root_v2).unwrap() {
            Verdict::ExternalVersion(v) => {
                assert_eq!(v, 1, "criterion 9: FAIL (redirected to version {v})");
                let settled = build_proof(&snap_v1, key).unwrap();
                match verify(&settled, &root_v1).unwrap() {
                    Verdict::Inclusion { value_hash, version } => {
                        assert_eq!(value_hash, hash_data::<DefaultHash>(key));
                        assert_eq!(version, 1);
                        chained += 1;
                    }
                    other => panic!("criterion 9: FAIL (v1 snapshot said {other:?})"),
                }
            }
            Verdict::Inclusion { .. } => {} // shares key-000's subtree
            Verdict::Exclusion => panic!("criterion 9: FAIL (present key excluded)"),
        }
    }
    assert!(chained > 0, "criterion 9: FAIL (no key exercised the chain)");
    assert!(started.elapsed().as_secs() < 1, "criterion 9: FAIL (took too long)");
    println!("criterion 9 (external-version chaining): PASS ({chained} keys chained)");
}
