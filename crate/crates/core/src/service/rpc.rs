//! JSON-RPC 2.0 dispatch over [`Service`]. Params are a single object of
//! named arguments.

use base64::Engine;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::chain::SealedTx;
use crate::crypto::{Address, Digest32, Signature};

use super::{Service, ServiceError};

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;

pub const METHODS: [&str; 14] = [
    "auth_challenge",
    "auth_verify",
    "ar_get",
    "ar_issueFirst",
    "ar_pending",
    "ar_approve",
    "ar_verify",
    "tx_getReceipt",
    "chain_getHead",
    "chain_getBlock",
    "registry_check",
    "registry_count",
    "tx_submitRaw",
    "account_getNonce",
];

pub fn error_object(code: i64, message: &str, data: Option<Value>) -> Value {
    let mut e = json!({ "code": code, "message": message });
    if let Some(d) = data {
        e["data"] = d;
    }
    e
}

fn response_err(id: Value, code: i64, message: &str, data: Option<Value>) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "error": error_object(code, message, data) })
}

/// Handles a raw request body: a single call or a batch.
pub fn handle_bytes(svc: &Service, body: &[u8]) -> Option<Value> {
    match serde_json::from_slice::<Value>(body) {
        Ok(v) => handle_value(svc, v),
        Err(e) => Some(response_err(Value::Null, PARSE_ERROR, &format!("parse error: {e}"), None)),
    }
}

pub fn handle_value(svc: &Service, v: Value) -> Option<Value> {
    match v {
        Value::Array(items) if items.is_empty() => {
            Some(response_err(Value::Null, INVALID_REQUEST, "empty batch", None))
        }
        Value::Array(items) => {
            let out: Vec<Value> = items.into_iter().filter_map(|i| handle_one(svc, i)).collect();
            (!out.is_empty()).then_some(Value::Array(out))
        }
        other => handle_one(svc, other),
    }
}

/// Returns `None` for notifications (requests without an id).
fn handle_one(svc: &Service, v: Value) -> Option<Value> {
    let Value::Object(mut obj) = v else {
        return Some(response_err(Value::Null, INVALID_REQUEST, "request must be an object", None));
    };
    let id = obj.remove("id");
    let reply_id = id.clone().unwrap_or(Value::Null);
    let valid_id = matches!(&id, None | Some(Value::Null | Value::Number(_) | Value::String(_)));
    if obj.get("jsonrpc") != Some(&Value::String("2.0".into())) || !valid_id {
        return Some(response_err(reply_id, INVALID_REQUEST, "invalid request", None));
    }
    let Some(Value::String(method)) = obj.remove("method") else {
        return Some(response_err(reply_id, INVALID_REQUEST, "missing method", None));
    };
    let params = match obj.remove("params") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m,
        // a one-element positional array holding the named-argument object
        Some(Value::Array(mut a)) if a.len() == 1 && a[0].is_object() => match a.remove(0) {
            Value::Object(m) => m,
            _ => unreachable!(),
        },
        Some(_) => {
            return id.map(|_| response_err(reply_id, INVALID_PARAMS, "params must be an object", None));
        }
    };
    let result = call(svc, &method, params);
    id.as_ref()?;
    Some(match result {
        Ok(r) => json!({ "jsonrpc": "2.0", "id": reply_id, "result": r }),
        Err(CallError::NoMethod) => response_err(reply_id, METHOD_NOT_FOUND, &format!("unknown method {method}"), None),
        Err(CallError::Service(e)) => response_err(reply_id, e.code(), &e.to_string(), e.data()),
    })
}

enum CallError {
    NoMethod,
    Service(ServiceError),
}

impl From<ServiceError> for CallError {
    fn from(e: ServiceError) -> Self {
        CallError::Service(e)
    }
}

fn parse<T: DeserializeOwned>(params: Map<String, Value>) -> Result<T, ServiceError> {
    serde_json::from_value(Value::Object(params)).map_err(|e| ServiceError::InvalidParams(e.to_string()))
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, CallError> {
    serde_json::to_value(v).map_err(|e| CallError::Service(ServiceError::Internal(e.to_string())))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AddressParam {
    address: Address,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyParams {
    address: Address,
    nonce: String,
    signature: Signature,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenParam {
    token: String,
    #[serde(default)]
    student: Option<Address>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IssueParams {
    token: String,
    student: Address,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ApproveParams {
    token: String,
    students: Vec<Address>,
    #[serde(default)]
    batch: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileParams {
    #[serde(default)]
    file_base64: Option<String>,
    #[serde(default)]
    file_text: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TxHashParam {
    tx_hash: Digest32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockParams {
    #[serde(default)]
    number: Option<u64>,
    #[serde(default)]
    hash: Option<Digest32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HashParam {
    hash: Digest32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTxParam {
    tx: SealedTx,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Empty {}

fn call(svc: &Service, method: &str, params: Map<String, Value>) -> Result<Value, CallError> {
    match method {
        "auth_challenge" => {
            let p: AddressParam = parse(params)?;
            let c = svc.auth_challenge(p.address);
            Ok(json!({
                "address": c.address,
                "nonce": c.nonce,
                "message": c.message(),
                "issued_at": c.issued_at,
                "expires_at": c.expires_at(),
            }))
        }
        "auth_verify" => {
            let p: VerifyParams = parse(params)?;
            to_value(&svc.auth_verify(p.address, &p.nonce, &p.signature)?)
        }
        "ar_get" => {
            let p: TokenParam = parse(params)?;
            svc.poll_confirmations();
            let view = svc.get_record(&p.token, p.student)?;
            let export = String::from_utf8(crate::docstore::export_bytes(&view.record)).expect("canonical JSON is UTF-8");
            let mut v = to_value(&view)?;
            v["export"] = Value::String(export);
            Ok(v)
        }
        "ar_issueFirst" => {
            let p: IssueParams = parse(params)?;
            Ok(json!({ "tx_hash": svc.issue_first(&p.token, p.student)? }))
        }
        "ar_pending" => {
            let p: TokenParam = parse(params)?;
            svc.poll_confirmations();
            to_value(&svc.pending_updates(&p.token)?)
        }
        "ar_approve" => {
            let p: ApproveParams = parse(params)?;
            Ok(json!({ "tx_hashes": svc.approve_updates(&p.token, &p.students, p.batch)? }))
        }
        "ar_verify" => {
            let p: FileParams = parse(params)?;
            let bytes = match (p.file_base64, p.file_text) {
                (Some(b), None) => base64::engine::general_purpose::STANDARD
                    .decode(b.as_bytes())
                    .map_err(|e| ServiceError::InvalidParams(format!("file_base64: {e}")))?,
                (None, Some(t)) => t.into_bytes(),
                _ => {
                    return Err(ServiceError::InvalidParams("exactly one of file_base64, file_text".into()).into());
                }
            };
            to_value(&svc.verify_document(&bytes))
        }
        "tx_getReceipt" => {
            let p: TxHashParam = parse(params)?;
            to_value(&svc.backend().receipt(&p.tx_hash))
        }
        "chain_getHead" => {
            let _: Empty = parse(params)?;
            to_value(&svc.backend().head())
        }
        "chain_getBlock" => {
            let p: BlockParams = parse(params)?;
            let b = match (p.number, p.hash) {
                (Some(n), None) => svc.backend().block_by_number(n),
                (None, Some(h)) => svc.backend().block_by_hash(&h),
                _ => return Err(ServiceError::InvalidParams("exactly one of number, hash".into()).into()),
            };
            let b = b.ok_or_else(|| ServiceError::NotFound("block".into()))?;
            Ok(json!({ "hash": b.hash(), "block": to_value(&b)? }))
        }
        "registry_check" => {
            let p: HashParam = parse(params)?;
            let n = svc.backend().anchored_in(&p.hash);
            Ok(json!({ "anchored": n.is_some(), "block_number": n }))
        }
        "registry_count" => {
            let _: Empty = parse(params)?;
            Ok(json!(svc.backend().registry_count()))
        }
        "tx_submitRaw" => {
            let p: RawTxParam = parse(params)?;
            let h = svc.backend().submit_tx(p.tx).map_err(ServiceError::from)?;
            Ok(json!({ "tx_hash": h }))
        }
        "account_getNonce" => {
            let p: AddressParam = parse(params)?;
            Ok(json!(svc.backend().next_nonce(&p.address)))
        }
        _ => Err(CallError::NoMethod),
    }
}
