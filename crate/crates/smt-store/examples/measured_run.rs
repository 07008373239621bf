//! Drive the workload harness programmatically instead of through the
//! `smt-bench` binary.

use smt_store::WorkloadConfig;

fn main() {
    let config = WorkloadConfig {
        keys: 1 << 12,
        ops: 1 << 16,
        mix: (90, 5, 5),
        value_size: 64,
        seed: 1,
        threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        ..WorkloadConfig::default()
    };
    let report = smt_store::bench::run(&config).unwrap();
    print!("{}", report.render());

    // identical configuration, identical final root
    let again = smt_store::bench::run(&config).unwrap();
    assert_eq!(report.final_root, again.final_root);
    println!("deterministic: repeat run reproduced {}", report.final_root);
}
