//! Prove key presence and absence against a snapshot, ship the proof as
//! bytes, and verify it with nothing but the trusted root.

use smt_store::{
    build_proof, verify, write_snapshot, Proof, SnapshotReader, Store, Topology, Update,
    Verdict,
};

fn main() {
    let mut store = Store::new(Topology::default());
    store
        .apply_batch(
            (0..1000u32)
                .map(|i| Update::Put {
                    key: format!("user:{i}").into_bytes(),
                    value: format!("profile-{i}").into_bytes(),
                })
                .collect(),
            1,
        )
        .unwrap();
    let root = store.commit(1).unwrap().root;
    let reader = SnapshotReader::from_bytes(&write_snapshot(&store).unwrap()).unwrap();

    // inclusion: the verifier learns the value digest and write version
    let proof = build_proof(&reader, b"user:123").unwrap();
    let wire = proof.encode().unwrap();
    println!("inclusion proof: {} bytes on the wire", wire.len());
    let received = Proof::decode(&wire).unwrap();
    match verify(&received, &root).unwrap() {
        Verdict::Inclusion { value_hash, version } => {
            println!("user:123 present, value digest {value_hash}, version {version}");
        }
        other => panic!("unexpected verdict {other:?}"),
    }

    // exclusion: the position a missing key would occupy holds another key
    let proof = build_proof(&reader, b"user:9999").unwrap();
    assert_eq!(verify(&proof, &root).unwrap(), Verdict::Exclusion);
    println!("user:9999 provably absent");

    // a proof is bound to the root: verifying against any other root fails
    let mut other_root = root;
    other_root.0[0] ^= 1;
    assert!(verify(&proof, &other_root).is_err());
    println!("proof rejected against a different root");
}
