//! How the root digest behaves: insertion order doesn't matter within an
//! epoch, but the epoch version and every value do.

use smt_store::{Store, Topology, Update};

fn updates() -> Vec<Update> {
    (0..100u32)
        .map(|i| Update::Put {
            key: format!("account-{i}").into_bytes(),
            value: format!("balance-{i}").into_bytes(),
        })
        .collect()
}

fn main() {
    let topology = Topology::new(2, 6).unwrap();

    // same keys, opposite order: identical root
    let mut forward = Store::new(topology);
    forward.apply_batch(updates(), 1).unwrap();
    let mut backward = Store::new(topology);
    backward.apply_batch(updates().into_iter().rev().collect(), 1).unwrap();
    let f = forward.commit(1).unwrap().root;
    let b = backward.commit(1).unwrap().root;
    assert_eq!(f, b);
    println!("order-independent root: {f}");

    // same content committed as version 2 instead of 1: different root,
    // because the version salts every digest
    let mut later = Store::new(topology);
    later.apply_batch(updates(), 2).unwrap();
    let l = later.commit(2).unwrap().root;
    assert_ne!(f, l);
    println!("same content at version 2: {l}");

    // an A -> B -> A round trip does not restore the original root
    let mut store = Store::new(topology);
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
    assert_ne!(original, replayed);
    println!("ABA detected: {original} != {replayed}");
}
