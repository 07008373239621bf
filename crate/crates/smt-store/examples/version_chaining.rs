//! Snapshots are deltas: a query against the latest snapshot may answer
//! "unchanged since version V" and redirect to V's snapshot.

use smt_store::{
    build_proof, verify, write_snapshot, SnapshotReader, Store, Topology, Update, Verdict,
};

fn main() {
    let mut store = Store::new(Topology::new(2, 4).unwrap());

    // version 1: bulk load
    store
        .apply_batch(
            (0..200u32)
                .map(|i| Update::Put {
                    key: format!("item-{i}").into_bytes(),
                    value: format!("v1-{i}").into_bytes(),
                })
                .collect(),
            1,
        )
        .unwrap();
    let root_v1 = store.commit(1).unwrap().root;
    let snap_v1 = SnapshotReader::from_bytes(&write_snapshot(&store).unwrap()).unwrap();

    // version 2: one small write; most subtrees stay untouched
    store
        .apply_batch(vec![Update::Put { key: b"item-0".to_vec(), value: b"v2".to_vec() }], 2)
        .unwrap();
    let root_v2 = store.commit(2).unwrap().root;
    let snap_v2 = SnapshotReader::from_bytes(&write_snapshot(&store).unwrap()).unwrap();

    // querying the latest snapshot for an old key
    let key = b"item-137";
    let proof = build_proof(&snap_v2, key).unwrap();
    match verify(&proof, &root_v2).unwrap() {
        Verdict::ExternalVersion(v) => {
            println!("latest snapshot: {} unchanged since version {v}", "item-137");
            // follow the redirect into that version's snapshot
            assert_eq!(v, snap_v1.version());
            let settled = build_proof(&snap_v1, key).unwrap();
            match verify(&settled, &root_v1).unwrap() {
                Verdict::Inclusion { version, .. } => {
                    println!("version-{v} snapshot settles it: included (written at {version})");
                }
                other => panic!("unexpected verdict {other:?}"),
            }
        }
        other => println!("key shares a subtree with the v2 write: {other:?}"),
    }
}
