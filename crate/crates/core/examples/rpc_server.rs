//! A node with the JSON-RPC service, driven by a client that logs in by
//! signing the challenge locally.
//!
//! `cargo run --example rpc_server -- [seconds to keep serving]`

use std::time::Duration;

use serde_json::json;

use credchain::bench::devnet::{devnet_admin, DevnetSpec};
use credchain::bench::RpcClient;
use credchain::crypto::{keccak256, KeyPair};
use credchain::node::runtime::NodeConfig;
use credchain::service::launch::{demo_student, NodeService, ServiceOptions};

fn login(client: &RpcClient, key: &KeyPair) -> String {
    let c = client.call_value("auth_challenge", json!({ "address": key.address() })).expect("challenge");
    let sig = key.sign(&keccak256(c["message"].as_str().expect("message").as_bytes()));
    let s = client
        .call_value("auth_verify", json!({ "address": key.address(), "nonce": c["nonce"], "signature": sig }))
        .expect("verify");
    s["token"].as_str().expect("token").to_string()
}

fn main() {
    let serve_s: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = DevnetSpec {
        period_s: 1,
        ..DevnetSpec::default()
    };
    let path = spec.write(dir.path(), "127.0.0.1:0".parse().unwrap()).expect("write devnet");
    let (cfg, genesis) = NodeConfig::load(&path).expect("load");
    let opts = ServiceOptions {
        admin_keys: vec![devnet_admin()],
        seed_records: 2,
        cors_origin: Some("*".into()),
        ..ServiceOptions::default()
    };
    let ns = NodeService::start(&cfg, genesis, &opts).expect("start");
    println!("serving {}", ns.url());
    let client = RpcClient::new(ns.url());

    let admin = login(&client, &devnet_admin());
    let student = demo_student(0);
    let r = client
        .call_value("ar_issueFirst", json!({ "token": admin, "student": student.address() }))
        .expect("issue");
    println!("issued in {}", r["tx_hash"]);
    let token = login(&client, &student);
    for _ in 0..50 {
        let v = client.call_value("ar_get", json!({ "token": token })).expect("ar_get");
        if v["anchored"] == json!(true) && v["record"]["tx_hash"] != json!("") {
            println!("anchored in block {}", v["anchored_in_block"]);
            let check = client.call_value("ar_verify", json!({ "file_text": v["export"] })).expect("verify");
            println!("verification {check}");
            break;
        }
        std::thread::sleep(Duration::from_millis(200));
    }
    let denied = client.call_value("ar_pending", json!({ "token": token }));
    println!("student asking for the pending list: {}", denied.unwrap_err());

    std::thread::sleep(Duration::from_secs(serve_s));
    ns.shutdown();
}
