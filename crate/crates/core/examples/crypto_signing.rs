//! Keys, addresses, signatures and a signed transaction.
//!
//! `cargo run --example crypto_signing`

use credchain::chain::{validate_tx_static, TxRequest};
use credchain::crypto::{canonicalize_str, keccak256, recover_address, KeyPair};

fn main() {
    let alice = KeyPair::dev("alice", 0);
    let bob = KeyPair::dev("bob", 0);
    println!("alice {}", alice.address());
    println!("bob   {}", bob.address());

    println!("keccak256(\"\") = {}", keccak256(b""));

    let msg = keccak256(b"Sign in to credchain");
    let sig = alice.sign(&msg);
    println!("signature {}", sig.to_hex());
    println!("recovers to alice: {}", recover_address(&msg, &sig) == Some(alice.address()));

    let tx = TxRequest::transfer(alice.address(), 0, bob.address(), 5).sign(&alice, 1337);
    println!("tx {} gas {}", tx.hash(), tx.tx().intrinsic_gas());
    println!("valid on chain 1337: {}", validate_tx_static(tx.tx(), 1337).is_ok());
    println!("valid on chain 1: {}", validate_tx_static(tx.tx(), 1).is_ok());

    let canon = canonicalize_str(r#"{ "b": [1, 2], "a": "x" }"#).expect("json");
    println!("canonical {}", String::from_utf8_lossy(&canon));
}
