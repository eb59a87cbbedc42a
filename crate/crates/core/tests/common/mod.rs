//! Independent reference implementations shared by the vector tests and
//! the acceptance run: tiny-keccak for hashing, libsecp256k1 for signatures.
#![allow(dead_code)]

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secp256k1::ecdsa::{RecoverableSignature, RecoveryId};
use secp256k1::{Message, Secp256k1, SecretKey};
use serde_json::{Map, Value};
use tiny_keccak::{Hasher, Keccak};

use credchain::crypto::{canonical_json, keccak256, recover_address, verify, Digest32, KeyPair, Signature};

pub fn ref_keccak(data: &[u8]) -> [u8; 32] {
    let mut k = Keccak::v256();
    k.update(data);
    let mut out = [0u8; 32];
    k.finalize(&mut out);
    out
}

/// Messages around the 136-byte rate boundary plus random lengths.
pub fn keccak_inputs(n: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lens: Vec<usize> = vec![0, 1, 31, 32, 33, 135, 136, 137, 271, 272, 273, 1000, 4096];
    while lens.len() < n {
        lens.push(rng.gen_range(0..600));
    }
    lens.into_iter()
        .map(|l| {
            let mut m = vec![0u8; l];
            rng.fill_bytes(&mut m);
            m
        })
        .collect()
}

/// Published digests (empty string, "abc", the 448-bit NIST message).
pub const KECCAK_PUBLISHED: [(&str, &str); 3] = [
    ("", "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"),
    ("abc", "4e03657aea45a94fc7d47ba826c8d667c0d1e6e33a64a036ec44f58fa12d6c45"),
    (
        "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
        "45d3b367a6904e6e8d502ee04999a7c27647f91fa845d456525fd352ae3d7371",
    ),
];

/// Returns the number of cases checked, or the first mismatch.
pub fn check_keccak(n: usize, seed: u64) -> Result<usize, String> {
    for (msg, hex_digest) in KECCAK_PUBLISHED {
        let got = keccak256(msg.as_bytes());
        if hex::encode(got.0) != hex_digest {
            return Err(format!("published vector {msg:?}: got {got}"));
        }
    }
    let inputs = keccak_inputs(n, seed);
    for m in &inputs {
        if keccak256(m).0 != ref_keccak(m) {
            return Err(format!("length {} disagrees with reference", m.len()));
        }
    }
    Ok(inputs.len() + KECCAK_PUBLISHED.len())
}

fn ref_address(sk: &SecretKey) -> [u8; 20] {
    let pk = secp256k1::PublicKey::from_secret_key(&Secp256k1::new(), sk).serialize_uncompressed();
    let h = ref_keccak(&pk[1..]);
    let mut a = [0u8; 20];
    a.copy_from_slice(&h[12..]);
    a
}

/// Cross-checks key derivation, signing, verification and recovery in
/// both directions. Returns the number of cases checked.
pub fn check_signatures(n: usize, seed: u64) -> Result<usize, String> {
    let secp = Secp256k1::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // secret key 1 has a well-known address
    let one = {
        let mut b = [0u8; 32];
        b[31] = 1;
        KeyPair::from_secret(&b).map_err(|e| e.to_string())?
    };
    if one.address().to_hex() != "0x7e5f4552091a69125d5dfcb7b8c2659029395bdf" {
        return Err(format!("address of key 1 is {}", one.address()));
    }
    for i in 0..n {
        let mut sk_bytes = [0u8; 32];
        rng.fill_bytes(&mut sk_bytes);
        let Ok(sk) = SecretKey::from_slice(&sk_bytes) else { continue };
        let ours = KeyPair::from_secret(&sk_bytes).map_err(|e| e.to_string())?;
        if ours.address().0 != ref_address(&sk) {
            return Err(format!("case {i}: address differs"));
        }
        let mut digest = [0u8; 32];
        rng.fill_bytes(&mut digest);
        let msg = Message::from_digest(digest);

        // both sides use deterministic nonces, so the signatures must be identical
        let sig = ours.sign(&Digest32(digest));
        let (rid, compact) = secp.sign_ecdsa_recoverable(&msg, &sk).serialize_compact();
        if sig.r[..] != compact[..32] || sig.s[..] != compact[32..] || i32::from(sig.v) != rid.to_i32() {
            return Err(format!("case {i}: signature differs from reference"));
        }

        let ref_sig = RecoverableSignature::from_compact(&sig.to_bytes()[..64], RecoveryId::from_i32(sig.v.into()).unwrap())
            .map_err(|e| format!("case {i}: {e}"))?;
        let recovered = secp.recover_ecdsa(&msg, &ref_sig).map_err(|e| format!("case {i}: {e}"))?;
        if recovered != secp256k1::PublicKey::from_secret_key(&secp, &sk) {
            return Err(format!("case {i}: reference recovers a different key"));
        }
        if secp.verify_ecdsa(&msg, &ref_sig.to_standard(), &recovered).is_err() {
            return Err(format!("case {i}: reference rejects our signature"));
        }

        let theirs = Signature::from_bytes(&{
            let mut b = [0u8; 65];
            b[..64].copy_from_slice(&compact);
            b[64] = rid.to_i32() as u8;
            b
        })
        .map_err(|e| e.to_string())?;
        if !verify(ours.public(), &Digest32(digest), &theirs)
            || recover_address(&Digest32(digest), &theirs) != Some(ours.address())
        {
            return Err(format!("case {i}: reference signature not accepted"));
        }
        let mut other = digest;
        other[0] ^= 1;
        if verify(ours.public(), &Digest32(other), &theirs) {
            return Err(format!("case {i}: signature verifies for another digest"));
        }
    }
    Ok(n + 1)
}

pub fn random_json<R: Rng>(rng: &mut R, depth: u32) -> Value {
    let pick = if depth == 0 { rng.gen_range(0..5) } else { rng.gen_range(0..7) };
    match pick {
        0 => Value::Null,
        1 => Value::Bool(rng.gen()),
        2 => Value::from(rng.gen::<i64>() >> rng.gen_range(0..63)),
        3 => serde_json::Number::from_f64(rng.gen::<f64>() * 10f64.powi(rng.gen_range(-8..12)))
            .map(Value::Number)
            .unwrap_or(Value::Null),
        4 => Value::String(random_string(rng)),
        5 => Value::Array((0..rng.gen_range(0..5)).map(|_| random_json(rng, depth - 1)).collect()),
        _ => {
            let mut m = Map::new();
            for _ in 0..rng.gen_range(0..6) {
                m.insert(random_string(rng), random_json(rng, depth - 1));
            }
            Value::Object(m)
        }
    }
}

fn random_string<R: Rng>(rng: &mut R) -> String {
    const POOL: &[char] = &['a', 'Z', '0', ' ', '"', '\\', '\n', '\u{1}', 'é', '€', '𝄞', '\u{7f}', '/'];
    (0..rng.gen_range(0..8)).map(|_| POOL[rng.gen_range(0..POOL.len())]).collect()
}

/// Idempotence, semantic round trip and key-order independence.
pub fn check_canonical(n: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let doc = random_json(&mut rng, 4);
        let c1 = canonical_json(&doc);
        let back: Value = serde_json::from_slice(&c1).map_err(|e| format!("doc {i}: {e}"))?;
        if back != doc {
            return Err(format!("doc {i}: canonical form parses to a different value"));
        }
        if canonical_json(&back) != c1 {
            return Err(format!("doc {i}: not idempotent"));
        }
        let reparsed: Value = serde_json::from_str(&reversed_text(&doc)).map_err(|e| format!("doc {i}: {e}"))?;
        if canonical_json(&reparsed) != c1 {
            return Err(format!("doc {i}: depends on key order or whitespace"));
        }
    }
    Ok(n)
}

/// JSON text with object keys in descending order and extra whitespace.
fn reversed_text(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let parts: Vec<String> = m
                .iter()
                .rev()
                .map(|(k, x)| format!("{} : {}", serde_json::to_string(k).unwrap(), reversed_text(x)))
                .collect();
            format!("{{ {} }}", parts.join(" ,\n "))
        }
        Value::Array(a) => format!("[ {} ]", a.iter().map(reversed_text).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}
