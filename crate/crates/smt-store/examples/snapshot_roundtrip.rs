//! Serialize a committed version to a snapshot file and read it back.

use smt_store::{write_snapshot, SnapshotReader, Store, Topology, Update};

fn main() {
    let mut store = Store::new(Topology::new(1, 4).unwrap());
    store
        .apply_batch(
            (0..500u32)
                .map(|i| Update::Put {
                    key: format!("key-{i}").into_bytes(),
                    value: format!("value-{i}").into_bytes(),
                })
                .collect(),
            1,
        )
        .unwrap();
    let commit = store.commit(1).unwrap();

    let bytes = write_snapshot(&store).unwrap();
    let path = std::env::temp_dir().join("example-snapshot.bin");
    std::fs::write(&path, &bytes).unwrap();
    println!("wrote {} bytes to {}", bytes.len(), path.display());

    let reader = SnapshotReader::from_bytes(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(reader.root(), commit.root);
    assert_eq!(reader.version(), 1);

    let bodies = reader.directory().iter().filter(|d| d.entry_count > 0).count();
    println!(
        "version {} root {} | {} subtrees, {} with bodies, {} entries",
        reader.version(),
        reader.root(),
        reader.directory().len(),
        bodies,
        reader.entries().len(),
    );

    // the format is integrity-checked end to end: any flipped bit fails
    let mut corrupt = bytes.clone();
    corrupt[bytes.len() / 2] ^= 1;
    assert!(SnapshotReader::from_bytes(&corrupt).is_err());
    println!("corrupted copy rejected");

    std::fs::remove_file(&path).ok();
}
