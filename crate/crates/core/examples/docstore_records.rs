//! A file-backed document store: signed writes, exports and the pending list.
//!
//! `cargo run --example docstore_records`

use std::collections::HashSet;

use credchain::crypto::KeyPair;
use credchain::docstore::{fixtures, record_hash, AccessControl, DocStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("records.jsonl");
    let admin = KeyPair::dev("admin", 0);
    let acl = AccessControl::new([], [admin.address()]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let students: Vec<KeyPair> = (0..3).map(|i| KeyPair::dev("student", i)).collect();
    let mut anchored = HashSet::new();
    {
        let mut docs = DocStore::open(&path, acl.clone()).expect("open");
        for s in &students {
            let rec = fixtures::random_record(&mut rng, s.address());
            anchored.insert(record_hash(&rec));
            docs.put_record(rec, &admin).expect("admin write");
        }
        // a professor changes one mark after anchoring
        let mut rec = docs.get_record(&students[1].address()).expect("present").clone();
        rec.subjects[0].mark = "10".into();
        docs.put_record(rec, &admin).expect("admin write");
        let outsider = KeyPair::dev("outsider", 0);
        let rec = fixtures::random_record(&mut rng, outsider.address());
        println!("outsider write: {:?}", docs.put_record(rec, &outsider).err());
    }

    let docs = DocStore::open(&path, acl).expect("reopen");
    println!("{} ops replayed from {}", docs.log().len(), path.display());
    for (student, h) in docs.list_pending(|h| anchored.contains(h)) {
        println!("pending {student} {h}");
    }
    let export = docs.export_ar(&students[0].address()).expect("export");
    println!("{}", String::from_utf8_lossy(&export));
}
