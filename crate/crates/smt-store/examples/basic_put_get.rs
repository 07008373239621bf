//! Put a few keys, commit an epoch, and read them back.

use smt_store::{Store, Topology, Update};

fn main() {
    let mut store = Store::new(Topology::default());

    store
        .apply_batch(
            vec![
                Update::Put { key: b"alice".to_vec(), value: b"42".to_vec() },
                Update::Put { key: b"bob".to_vec(), value: b"7".to_vec() },
                // within one batch the last write for a key wins
                Update::Put { key: b"bob".to_vec(), value: b"8".to_vec() },
            ],
            1,
        )
        .unwrap();
    let commit = store.commit(1).unwrap();
    println!("version {} root {}", commit.version, commit.root);

    let (value, version) = store.get(b"bob").unwrap().unwrap();
    println!("bob = {} (written at version {version})", String::from_utf8(value).unwrap());
    assert!(store.get(b"carol").unwrap().is_none());

    store.apply_batch(vec![Update::Delete { key: b"alice".to_vec() }], 2).unwrap();
    let commit = store.commit(2).unwrap();
    println!("version {} root {}", commit.version, commit.root);
    assert!(store.get(b"alice").unwrap().is_none());
}
