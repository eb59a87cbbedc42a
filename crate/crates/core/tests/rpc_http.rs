use std::time::Duration;

use serde_json::{json, Value};

use credchain::bench::devnet::{devnet_admin, DevnetSpec};
use credchain::bench::{RpcCallError, RpcClient};
use credchain::crypto::keccak256;
use credchain::node::runtime::NodeConfig;
use credchain::service::launch::{demo_student, NodeService, ServiceOptions};
use credchain::service::rpc::METHODS;

fn start(dir: &std::path::Path) -> NodeService {
    let spec = DevnetSpec {
        period_s: 1,
        ..DevnetSpec::default()
    };
    let path = spec.write(dir, "127.0.0.1:0".parse().unwrap()).unwrap();
    let (cfg, genesis) = NodeConfig::load(&path).unwrap();
    let opts = ServiceOptions {
        admin_keys: vec![devnet_admin()],
        seed_records: 3,
        cors_origin: Some("http://ui.example".into()),
        docstore: Some(dir.join("records.jsonl")),
        ..ServiceOptions::default()
    };
    NodeService::start(&cfg, genesis, &opts).unwrap()
}

fn login(c: &RpcClient, key: &credchain::crypto::KeyPair) -> String {
    let ch = c.call_value("auth_challenge", json!({ "address": key.address() })).unwrap();
    let sig = key.sign(&keccak256(ch["message"].as_str().unwrap().as_bytes()));
    let s = c
        .call_value("auth_verify", json!({ "address": key.address(), "nonce": ch["nonce"], "signature": sig }))
        .unwrap();
    s["token"].as_str().unwrap().to_string()
}

fn code(r: Result<Value, RpcCallError>) -> i64 {
    match r {
        Err(RpcCallError::Rpc { code, .. }) => code,
        other => panic!("expected an rpc error, got {other:?}"),
    }
}

#[test]
fn workflow_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let ns = start(dir.path());
    let c = RpcClient::new(ns.url());
    let admin = login(&c, &devnet_admin());
    let students: Vec<_> = (0..3).map(demo_student).collect();

    let r = c.call_value("ar_issueFirst", json!({ "token": admin, "student": students[0].address() })).unwrap();
    let tx = r["tx_hash"].clone();
    let token = login(&c, &students[0]);
    let mut view = Value::Null;
    for _ in 0..100 {
        view = c.call_value("ar_get", json!({ "token": token })).unwrap();
        if view["record"]["tx_hash"] == tx {
            break;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    assert_eq!(view["record"]["tx_hash"], tx, "confirmation written back");
    assert_eq!(view["anchored"], json!(true));
    let receipt = c.call_value("tx_getReceipt", json!({ "tx_hash": tx })).unwrap();
    assert_eq!(receipt["block_number"], view["anchored_in_block"]);

    let v = c.call_value("ar_verify", json!({ "file_text": view["export"] })).unwrap();
    assert_eq!(v["valid"], json!(true));
    let mut forged = view["export"].as_str().unwrap().to_string();
    forged = forged.replacen("\"name\":\"", "\"name\":\"X", 1);
    let v = c.call_value("ar_verify", json!({ "file_text": forged })).unwrap();
    assert_eq!(v["valid"], json!(false));

    assert_eq!(code(c.call_value("ar_pending", json!({ "token": token }))), 1002);
    assert_eq!(code(c.call_value("ar_pending", json!({ "token": "nope" }))), 1001);
    let pending = c.call_value("ar_pending", json!({ "token": admin })).unwrap();
    let pending: Vec<Value> = pending.as_array().unwrap().iter().map(|p| p["student"].clone()).collect();
    assert_eq!(pending.len(), 2);
    assert_eq!(
        code(c.call_value("ar_approve", json!({ "token": admin, "students": [students[0].address()], "batch": true }))),
        1005
    );
    let r = c.call_value("ar_approve", json!({ "token": admin, "students": pending, "batch": true })).unwrap();
    assert_eq!(r["tx_hashes"].as_array().unwrap().len(), 1);
    assert_eq!(code(c.call_value("auth_verify", json!({
        "address": students[1].address(), "nonce": "00", "signature": students[1].sign(&keccak256(b"x"))
    }))), 1010);
    ns.shutdown();

    // the docstore log and chain survive a restart
    let ns = start(dir.path());
    let c = RpcClient::new(ns.url());
    let admin = login(&c, &devnet_admin());
    let again = c.call_value("ar_issueFirst", json!({ "token": admin, "student": students[0].address() }));
    assert_eq!(code(again), 1004);
    ns.shutdown();
}

#[test]
fn transport_level_behaviour() {
    let dir = tempfile::tempdir().unwrap();
    let ns = start(dir.path());
    let http = reqwest::blocking::Client::new();
    let url = ns.url();

    let r = http.post(&url).body("{not json").send().unwrap();
    assert_eq!(r.status(), 200);
    assert_eq!(r.json::<Value>().unwrap()["error"]["code"], json!(-32700));

    let r = http
        .post(&url)
        .json(&json!({ "jsonrpc": "2.0", "method": "registry_count" }))
        .send()
        .unwrap();
    assert_eq!(r.status(), 204);

    let r = http
        .post(&url)
        .header("Origin", "http://ui.example")
        .json(&json!({ "jsonrpc": "2.0", "id": 1, "method": "registry_count" }))
        .send()
        .unwrap();
    assert_eq!(r.headers()["access-control-allow-origin"], "http://ui.example");

    let c = RpcClient::new(url);
    let calls: Vec<(&str, Value)> = vec![("chain_getHead", json!({})), ("nope", json!({})), ("registry_count", json!({}))];
    let out = c.batch(&calls).unwrap();
    assert!(out[0].is_ok());
    assert!(matches!(out[1], Err(RpcCallError::Rpc { code: -32601, .. })));
    assert_eq!(out[2].as_ref().unwrap(), &json!(0));

    // every method exists: a wrong-shaped call is never "method not found"
    for m in METHODS {
        let e = c.call_value(m, json!({ "bogus": 1 }));
        assert_eq!(code(e), -32602, "{m}");
    }
    ns.shutdown();
}
