//! Login, first issue, an update approved in batch, and public verification
//! on a simulated one-sealer chain.
//!
//! `cargo run --example issue_and_verify`

use credchain::chain::DEFAULT_BLOCK_GAS_LIMIT;
use credchain::service::demo::DemoEnv;

fn main() {
    let env = DemoEnv::new(3, DEFAULT_BLOCK_GAS_LIMIT, 11);
    let admin = env.login(&env.admin).expect("admin login");
    for s in &env.students {
        let tx = env.svc.issue_first(&admin.token, s.address()).expect("issue");
        println!("issued {} in tx {tx}", s.address());
    }
    assert!(env.settle());

    let student = env.login(&env.students[0]).expect("student login");
    let view = env.svc.get_record(&student.token, None).expect("own record");
    println!("anchored {} in block {:?}", view.anchored, view.anchored_in_block);

    {
        let mut docs = env.svc.docs();
        for s in &env.students[1..] {
            let mut rec = docs.get_record(&s.address()).expect("present").clone();
            rec.subjects[0].mark = "9.9".into();
            docs.put_record(rec, &env.admin).expect("admin write");
        }
    }
    let pending: Vec<_> = env.svc.pending_updates(&admin.token).expect("admin").into_iter().map(|p| p.student).collect();
    println!("{} pending updates", pending.len());
    let txs = env.svc.approve_updates(&admin.token, &pending, true).expect("approve");
    println!("approved in {} batch transaction(s)", txs.len());
    assert!(env.settle());

    let file = env.svc.export_record(&student.token).expect("export");
    let ok = env.svc.verify_document(&file);
    println!("verify original: valid={} block={:?}", ok.valid, ok.anchored_in_block);
    let mut forged = file.clone();
    let pos = forged.iter().position(|&b| b.is_ascii_digit()).expect("a digit");
    forged[pos] = if forged[pos] == b'9' { b'8' } else { b'9' };
    println!("verify forged:   valid={}", env.svc.verify_document(&forged).valid);
}
