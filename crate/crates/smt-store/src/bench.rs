//! Deterministic workload generator and measured run harness.
//!
//! A run seeds a fixed key population at version 1, then applies epochs of
//! mixed put/get/delete traffic, committing once per epoch. All randomness
//! comes from one seeded ChaCha12 stream, so two runs with the same
//! configuration produce identical batches, identical roots, and identical
//! final snapshots regardless of thread count.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::dispatch::{Store, Topology, Update};
use crate::error::StoreError;
use crate::hash::{Hash256, Version};
use crate::proof::{build_proof, verify, Verdict};
use crate::snapshot::{write_snapshot, SnapshotReader};

/// Operations per epoch; one commit (hence one root) per epoch.
pub const EPOCH_OPS: u64 = 1 << 16;

/// Fraction of leading operations excluded from throughput measurement.
pub const WARMUP_FRACTION: f64 = 0.10;

#[derive(Clone, Debug)]
pub struct WorkloadConfig {
    /// Size of the seeded key population.
    pub keys: u64,
    /// Operations applied after seeding.
    pub ops: u64,
    /// Percentages of puts, gets, and deletes; must sum to 100.
    pub mix: (u32, u32, u32),
    pub value_size: usize,
    pub seed: u64,
    pub shard_bits: u8,
    pub subtree_bits: u8,
    /// Minimum milliseconds between snapshots; zero disables snapshotting
    /// during the run (a final snapshot is always taken).
    pub snapshot_period_ms: u64,
    /// Where periodic snapshots are written; in-memory only when unset.
    pub snapshot_dir: Option<PathBuf>,
    pub threads: usize,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            keys: 1 << 14,
            ops: 1 << 18,
            mix: (90, 5, 5),
            value_size: 128,
            seed: 42,
            shard_bits: 3,
            subtree_bits: 8,
            snapshot_period_ms: 0,
            snapshot_dir: None,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub config_line: String,
    pub rng: &'static str,
    pub epochs: u64,
    pub warmup_ops: u64,
    pub measured_ops: u64,
    pub elapsed: Duration,
    pub ops_per_sec: f64,
    pub puts: u64,
    pub gets: u64,
    pub deletes: u64,
    pub final_version: Version,
    pub final_root: Hash256,
    pub snapshots_written: u64,
    pub snapshot_bytes: u64,
    pub proofs_checked: u64,
}

impl RunReport {
    /// One `key=value` pair per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.config_line);
        let rest = [
            format!("rng={}", self.rng),
            format!("epochs={}", self.epochs),
            format!("warmup_ops={}", self.warmup_ops),
            format!("measured_ops={}", self.measured_ops),
            format!("elapsed_s={:.3}", self.elapsed.as_secs_f64()),
            format!("ops_per_sec={:.1}", self.ops_per_sec),
            format!("puts={}", self.puts),
            format!("gets={}", self.gets),
            format!("deletes={}", self.deletes),
            format!("final_version={}", self.final_version),
            format!("final_root={}", self.final_root.to_hex()),
            format!("snapshots_written={}", self.snapshots_written),
            format!("snapshot_bytes={}", self.snapshot_bytes),
            format!("proofs_checked={}", self.proofs_checked),
        ];
        for line in rest {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

enum Op {
    Put(usize),
    Get(usize),
    Delete(usize),
}

/// Runs the configured workload and verifies a sample of proofs against
/// the final snapshot before returning.
pub fn run(config: &WorkloadConfig) -> Result<RunReport, StoreError> {
    let (p, g, d) = config.mix;
    if p + g + d != 100 {
        return Err(StoreError::format("mix percentages must sum to 100"));
    }
    if config.keys == 0 {
        return Err(StoreError::format("key population must be nonzero"));
    }
    let topology = Topology::new(config.shard_bits, config.subtree_bits)?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);

    // fixed key population: 32 random bytes each
    let pool: Vec<[u8; 32]> = (0..config.keys).map(|_| rng.gen()).collect();

    let mut store = Store::new(topology);
    store.set_threads(config.threads);
    store.set_prefetch(true);

    // seed phase at version 1, outside the measured window
    let seed_batch: Vec<Update> = pool
        .iter()
        .map(|key| Update::Put { key: key.to_vec(), value: random_value(&mut rng, config) })
        .collect();
    store.apply_batch(seed_batch, 1)?;
    store.commit(1)?;

    // warmup rounds down to whole epochs; single-epoch runs measure fully
    let total_epochs = config.ops.div_ceil(EPOCH_OPS).max(1);
    let warmup_epochs = if total_epochs == 1 {
        0
    } else {
        (((config.ops as f64 * WARMUP_FRACTION) / EPOCH_OPS as f64).ceil() as u64)
            .min(total_epochs - 1)
    };
    let warmup_ops = warmup_epochs * EPOCH_OPS;
    let period = Duration::from_millis(config.snapshot_period_ms);
    let mut report_puts = 0u64;
    let mut report_gets = 0u64;
    let mut report_deletes = 0u64;
    let mut snapshots_written = 0u64;
    let mut snapshot_bytes = 0u64;
    let mut epochs = 0u64;
    let mut done = 0u64;
    let mut measured_ops = 0u64;
    let mut version: Version = 1;
    let mut last_snapshot = Instant::now();
    let mut measured_started: Option<Instant> = None;
    let mut measured_elapsed = Duration::ZERO;

    if let Some(dir) = &config.snapshot_dir {
        std::fs::create_dir_all(dir)?;
    }

    while done < config.ops {
        let epoch_len = EPOCH_OPS.min(config.ops - done);
        version += 1;
        epochs += 1;

        // generate the epoch before starting its clock
        let ops: Vec<Op> = (0..epoch_len)
            .map(|_| {
                let index = rng.gen_range(0..pool.len());
                match rng.gen_range(0..100u32) {
                    r if r < p => Op::Put(index),
                    r if r < p + g => Op::Get(index),
                    _ => Op::Delete(index),
                }
            })
            .collect();
        let values: Vec<Option<Vec<u8>>> = ops
            .iter()
            .map(|op| match op {
                Op::Put(_) => Some(random_value(&mut rng, config)),
                _ => None,
            })
            .collect();

        let measuring = epochs > warmup_epochs;
        if measuring && measured_started.is_none() {
            measured_started = Some(Instant::now());
        }
        let epoch_start = Instant::now();

        let mut batch = Vec::with_capacity(ops.len());
        for (op, value) in ops.iter().zip(values) {
            match op {
                Op::Put(i) => {
                    report_puts += 1;
                    batch.push(Update::Put {
                        key: pool[*i].to_vec(),
                        value: value.expect("put has a value"),
                    });
                }
                Op::Get(i) => {
                    report_gets += 1;
                    let _ = store.get(&pool[*i])?;
                }
                Op::Delete(i) => {
                    report_deletes += 1;
                    batch.push(Update::Delete { key: pool[*i].to_vec() });
                }
            }
        }
        let stats = store.apply_batch(batch, version)?;
        if let Some((key, err)) = stats.key_errors.into_iter().next() {
            return Err(StoreError::format(format!(
                "update rejected for key {}: {err}",
                Hash256(key.try_into().unwrap_or([0u8; 32])).to_hex()
            )));
        }
        store.commit(version)?;

        if config.snapshot_period_ms > 0 && last_snapshot.elapsed() >= period {
            let bytes = write_snapshot(&store)?;
            snapshot_bytes += bytes.len() as u64;
            snapshots_written += 1;
            if let Some(dir) = &config.snapshot_dir {
                std::fs::write(dir.join(format!("snapshot-{version}.bin")), &bytes)?;
            }
            last_snapshot = Instant::now();
        }

        if measuring {
            measured_elapsed += epoch_start.elapsed();
            measured_ops += epoch_len;
        }
        done += epoch_len;
    }

    // final snapshot, always: the run's externally checkable artifact
    let final_bytes = write_snapshot(&store)?;
    snapshot_bytes += final_bytes.len() as u64;
    snapshots_written += 1;
    if let Some(dir) = &config.snapshot_dir {
        std::fs::write(dir.join(format!("snapshot-{version}.bin")), &final_bytes)?;
    }

    let final_root = store.commit(version)?.root;
    let proofs_checked = spot_check(&final_bytes, &final_root, &pool, &mut rng)?;

    let elapsed = measured_elapsed;
    let ops_per_sec = if elapsed.is_zero() {
        0.0
    } else {
        measured_ops as f64 / elapsed.as_secs_f64()
    };

    Ok(RunReport {
        config_line: config_line(config),
        rng: "chacha12",
        epochs,
        warmup_ops: warmup_ops.min(config.ops),
        measured_ops,
        elapsed,
        ops_per_sec,
        puts: report_puts,
        gets: report_gets,
        deletes: report_deletes,
        final_version: version,
        final_root,
        snapshots_written,
        snapshot_bytes,
        proofs_checked,
    })
}

/// Proves and verifies a sample of present and absent keys against the
/// final snapshot; any failed verdict is an error.
fn spot_check(
    snapshot: &[u8],
    root: &Hash256,
    pool: &[[u8; 32]],
    rng: &mut ChaCha12Rng,
) -> Result<u64, StoreError> {
    let reader = SnapshotReader::from_bytes(snapshot)?;
    if reader.root() != *root {
        return Err(StoreError::corrupt("final snapshot root disagrees with commit"));
    }
    let mut checked = 0u64;
    for _ in 0..64 {
        let key = pool[rng.gen_range(0..pool.len())];
        let proof = build_proof(&reader, &key)?;
        match verify(&proof, root)? {
            Verdict::Inclusion { .. } | Verdict::Exclusion | Verdict::ExternalVersion(_) => {}
        }
        checked += 1;
    }
    for _ in 0..64 {
        let absent: [u8; 32] = rng.gen();
        let proof = build_proof(&reader, &absent)?;
        if let Verdict::Inclusion { .. } = verify(&proof, root)? {
            return Err(StoreError::corrupt("random absent key proved included"));
        }
        checked += 1;
    }
    Ok(checked)
}

fn random_value(rng: &mut ChaCha12Rng, config: &WorkloadConfig) -> Vec<u8> {
    let mut value = vec![0u8; config.value_size.max(1)];
    rng.fill(&mut value[..]);
    value
}

fn config_line(config: &WorkloadConfig) -> String {
    format!(
        "keys={}\nops={}\nmix={},{},{}\nvalue_size={}\nseed={}\nshard_bits={}\nsubtree_bits={}\nsnapshot_period_ms={}\nthreads={}\n",
        config.keys,
        config.ops,
        config.mix.0,
        config.mix.1,
        config.mix.2,
        config.value_size,
        config.seed,
        config.shard_bits,
        config.subtree_bits,
        config.snapshot_period_ms,
        config.threads,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorkloadConfig {
        WorkloadConfig {
            keys: 256,
            ops: 2_000,
            value_size: 16,
            ..WorkloadConfig::default()
        }
    }

    #[test]
    fn same_seed_same_root() {
        let r1 = run(&small()).unwrap();
        let r2 = run(&small()).unwrap();
        assert_eq!(r1.final_root, r2.final_root);
        assert_eq!(r1.puts, r2.puts);
    }

    #[test]
    fn different_seed_different_root() {
        let r1 = run(&small()).unwrap();
        let r2 = run(&WorkloadConfig { seed: 43, ..small() }).unwrap();
        assert_ne!(r1.final_root, r2.final_root);
    }

    #[test]
    fn thread_count_does_not_change_final_root() {
        let r1 = run(&small()).unwrap();
        let r4 = run(&WorkloadConfig { threads: 4, ..small() }).unwrap();
        assert_eq!(r1.final_root, r4.final_root);
    }

    #[test]
    fn mix_must_sum_to_one_hundred() {
        let bad = WorkloadConfig { mix: (90, 5, 6), ..small() };
        assert!(run(&bad).is_err());
    }

    #[test]
    fn report_renders_expected_fields() {
        let report = run(&small()).unwrap();
        let text = report.render();
        for field in ["keys=", "ops_per_sec=", "final_root=", "rng=chacha12", "mix=90,5,5"] {
            assert!(text.contains(field), "missing {field} in report:\n{text}");
        }
    }

    #[test]
    fn snapshot_dir_receives_final_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let config = WorkloadConfig {
            snapshot_period_ms: 1,
            snapshot_dir: Some(dir.path().to_path_buf()),
            ..small()
        };
        let report = run(&config).unwrap();
        assert!(report.snapshots_written >= 1);
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert!(!files.is_empty());
    }
}
