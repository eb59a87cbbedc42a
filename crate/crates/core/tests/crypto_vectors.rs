mod common;

use proptest::prelude::*;
use serde_json::Value;

use credchain::crypto::{canonical_json, canonicalize_str, keccak256};

#[test]
fn keccak_matches_reference_on_200_inputs() {
    assert_eq!(common::check_keccak(200, 1), Ok(203));
}

#[test]
fn signatures_match_libsecp256k1_on_128_keys() {
    assert_eq!(common::check_signatures(128, 2), Ok(129));
}

#[test]
fn canonical_json_on_1000_documents() {
    assert_eq!(common::check_canonical(1000, 3), Ok(1000));
}

fn arb_json() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        (-1e15f64..1e15).prop_map(|x| serde_json::Number::from_f64(x).map(Value::Number).unwrap()),
        "\\PC{0,6}".prop_map(Value::String),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
            prop::collection::btree_map("\\PC{0,5}", inner, 0..6)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

proptest! {
    #[test]
    fn canonical_is_idempotent(doc in arb_json()) {
        let c = canonical_json(&doc);
        prop_assert_eq!(canonicalize_str(std::str::from_utf8(&c).unwrap()).unwrap(), c.clone());
        let back: Value = serde_json::from_slice(&c).unwrap();
        prop_assert_eq!(back, doc);
    }

    #[test]
    fn keccak_agrees_with_reference(data in prop::collection::vec(any::<u8>(), 0..700)) {
        prop_assert_eq!(keccak256(&data).0, common::ref_keccak(&data));
    }
}
