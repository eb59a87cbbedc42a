//! Hashing, secp256k1 keys and signatures, and canonical JSON.
//!
//! Every textual hex value in the system is lowercase and accepts an
//! optional `0x` prefix on parse.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use k256::ecdsa::{RecoveryId, Signature as EcdsaSignature, SigningKey, VerifyingKey};
use k256::elliptic_curve::scalar::IsHigh;
use parking_lot::Mutex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha3::{Digest, Keccak256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("invalid hex: {0}")]
    InvalidHex(String),
    #[error("expected {expected} bytes, got {got}")]
    InvalidLength { expected: usize, got: usize },
    #[error("invalid secret key")]
    InvalidKey,
    #[error("public key is not a valid curve point")]
    InvalidPoint,
    #[error("malformed signature")]
    InvalidSignature,
    #[error("document cannot be canonicalized: {0}")]
    NonCanonicalizable(String),
}

fn decode_hex(s: &str, expected: usize) -> Result<Vec<u8>, CryptoError> {
    let body = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    let bytes = hex::decode(body).map_err(|e| CryptoError::InvalidHex(e.to_string()))?;
    if bytes.len() != expected {
        return Err(CryptoError::InvalidLength {
            expected,
            got: bytes.len(),
        });
    }
    Ok(bytes)
}

macro_rules! hex_newtype {
    ($name:ident, $len:expr) => {
        impl $name {
            pub const LEN: usize = $len;

            pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
                let arr: [u8; $len] =
                    bytes.try_into().map_err(|_| CryptoError::InvalidLength {
                        expected: $len,
                        got: bytes.len(),
                    })?;
                Ok(Self(arr))
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                format!("0x{}", hex::encode(self.0))
            }
        }

        impl FromStr for $name {
            type Err = CryptoError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::from_slice(&decode_hex(s, $len)?)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

/// A 32-byte hash value (AR hash, transaction hash, block hash).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest32(pub [u8; 32]);
hex_newtype!(Digest32, 32);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0u8; 32]);
}

/// A 20-byte account address: the last 20 bytes of keccak256 of the public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; 20]);
hex_newtype!(Address, 20);

/// An uncompressed secp256k1 point without the 0x04 tag.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(pub [u8; 64]);
hex_newtype!(PublicKey, 64);

pub fn keccak256(data: &[u8]) -> Digest32 {
    Digest32(Keccak256::digest(data).into())
}

/// Keccak-256 over the concatenation of several slices.
pub fn keccak256_concat(parts: &[&[u8]]) -> Digest32 {
    let mut h = Keccak256::new();
    for p in parts {
        h.update(p);
    }
    Digest32(h.finalize().into())
}

pub fn derive_address(pk: &PublicKey) -> Result<Address, CryptoError> {
    let mut sec1 = [0u8; 65];
    sec1[0] = 0x04;
    sec1[1..].copy_from_slice(&pk.0);
    VerifyingKey::from_sec1_bytes(&sec1).map_err(|_| CryptoError::InvalidPoint)?;
    Ok(address_of_point(pk))
}

fn address_of_point(pk: &PublicKey) -> Address {
    let h = keccak256(&pk.0);
    let mut a = [0u8; 20];
    a.copy_from_slice(&h.0[12..]);
    Address(a)
}

fn public_key_of(vk: &VerifyingKey) -> PublicKey {
    let point = vk.to_encoded_point(false);
    let mut pk = [0u8; 64];
    pk.copy_from_slice(&point.as_bytes()[1..]);
    PublicKey(pk)
}

/// ECDSA signature with a recovery id; `s` is always in the lower half of the order.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    pub r: [u8; 32],
    pub s: [u8; 32],
    pub v: u8,
}

impl Signature {
    pub fn to_bytes(&self) -> [u8; 65] {
        let mut out = [0u8; 65];
        out[..32].copy_from_slice(&self.r);
        out[32..64].copy_from_slice(&self.s);
        out[64] = self.v;
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != 65 {
            return Err(CryptoError::InvalidLength {
                expected: 65,
                got: bytes.len(),
            });
        }
        let mut r = [0u8; 32];
        let mut s = [0u8; 32];
        r.copy_from_slice(&bytes[..32]);
        s.copy_from_slice(&bytes[32..64]);
        let v = bytes[64];
        if v > 1 {
            return Err(CryptoError::InvalidSignature);
        }
        Ok(Signature { r, s, v })
    }

    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(self.to_bytes()))
    }

    fn to_ecdsa(self) -> Option<(EcdsaSignature, RecoveryId)> {
        let sig = EcdsaSignature::from_scalars(self.r, self.s).ok()?;
        // canonical-s
        if bool::from(sig.s().is_high()) {
            return None;
        }
        let recid = RecoveryId::from_byte(self.v)?;
        Some((sig, recid))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", self.to_hex())
    }
}

impl FromStr for Signature {
    type Err = CryptoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Signature::from_bytes(&decode_hex(s, 65)?)
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
    address: Address,
}

impl KeyPair {
    pub fn from_secret(sk: &[u8; 32]) -> Result<Self, CryptoError> {
        let signing = SigningKey::from_slice(sk).map_err(|_| CryptoError::InvalidKey)?;
        let public = public_key_of(signing.verifying_key());
        let address = address_of_point(&public);
        Ok(KeyPair {
            signing,
            public,
            address,
        })
    }

    pub fn from_secret_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = decode_hex(s, 32)?;
        let mut sk = [0u8; 32];
        sk.copy_from_slice(&bytes);
        Self::from_secret(&sk)
    }

    pub fn random<R: rand::RngCore + rand::CryptoRng>(rng: &mut R) -> Self {
        loop {
            let mut sk = [0u8; 32];
            rng.fill_bytes(&mut sk);
            if let Ok(kp) = Self::from_secret(&sk) {
                return kp;
            }
        }
    }

    /// Deterministic development key: secret = keccak256(label || index).
    pub fn dev(label: &str, index: u64) -> Self {
        let mut counter = 0u64;
        loop {
            let d = keccak256_concat(&[
                label.as_bytes(),
                &index.to_be_bytes(),
                &counter.to_be_bytes(),
            ]);
            if let Ok(kp) = Self::from_secret(&d.0) {
                return kp;
            }
            counter += 1;
        }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes().into()
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn sign(&self, digest: &Digest32) -> Signature {
        sign(&self.signing, digest)
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("address", &self.address)
            .finish_non_exhaustive()
    }
}

fn sign(key: &SigningKey, digest: &Digest32) -> Signature {
    // RFC 6979 nonce; k256 normalizes s to the low half.
    let (sig, recid) = key
        .sign_prehash_recoverable(&digest.0)
        .expect("32-byte prehash is always accepted");
    let mut v = recid.to_byte();
    let sig = match sig.normalize_s() {
        // negating s flips the parity of the recovered point
        Some(low) => {
            v ^= 1;
            low
        }
        None => sig,
    };
    let (r, s) = sig.split_bytes();
    Signature {
        r: r.into(),
        s: s.into(),
        v,
    }
}

/// Sign `digest` with a raw 32-byte secret.
pub fn sign_with_secret(sk: &[u8; 32], digest: &Digest32) -> Result<Signature, CryptoError> {
    let key = SigningKey::from_slice(sk).map_err(|_| CryptoError::InvalidKey)?;
    Ok(sign(&key, digest))
}

pub fn verify(pk: &PublicKey, digest: &Digest32, sig: &Signature) -> bool {
    let Some((ecdsa, _)) = sig.to_ecdsa() else {
        return false;
    };
    let mut sec1 = [0u8; 65];
    sec1[0] = 0x04;
    sec1[1..].copy_from_slice(&pk.0);
    let Ok(vk) = VerifyingKey::from_sec1_bytes(&sec1) else {
        return false;
    };
    use k256::ecdsa::signature::hazmat::PrehashVerifier;
    vk.verify_prehash(&digest.0, &ecdsa).is_ok()
}

pub fn recover_public_key(digest: &Digest32, sig: &Signature) -> Option<PublicKey> {
    let (ecdsa, recid) = sig.to_ecdsa()?;
    let vk = VerifyingKey::recover_from_prehash(&digest.0, &ecdsa, recid).ok()?;
    Some(public_key_of(&vk))
}

const RECOVERY_CACHE_SIZE: usize = 1 << 16;

fn recovery_cache() -> &'static Mutex<lru::LruCache<(Digest32, [u8; 65]), Option<Address>>> {
    static CACHE: OnceLock<Mutex<lru::LruCache<(Digest32, [u8; 65]), Option<Address>>>> =
        OnceLock::new();
    CACHE.get_or_init(|| {
        Mutex::new(lru::LruCache::new(
            std::num::NonZeroUsize::new(RECOVERY_CACHE_SIZE).unwrap(),
        ))
    })
}

/// Recovers the signer address. Results are memoized process-wide, since
/// every node in a simulation re-checks the same transactions.
pub fn recover_address(digest: &Digest32, sig: &Signature) -> Option<Address> {
    let key = (*digest, sig.to_bytes());
    if let Some(hit) = recovery_cache().lock().get(&key) {
        return *hit;
    }
    let addr = recover_public_key(digest, sig).map(|pk| address_of_point(&pk));
    recovery_cache().lock().put(key, addr);
    addr
}

/// Canonical JSON: keys sorted by code point, no whitespace, shortest
/// round-trip numbers, minimal string escaping.
pub fn canonical_json(value: &Value) -> Vec<u8> {
    let mut out = Vec::with_capacity(128);
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            out.push(b'{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                serde_json::to_writer(&mut *out, k).expect("string serialization");
                out.push(b':');
                write_canonical(&map[k], out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(v, out);
            }
            out.push(b']');
        }
        scalar => serde_json::to_writer(&mut *out, scalar).expect("scalar serialization"),
    }
}

/// Canonicalizes any serializable value.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CryptoError> {
    let v = serde_json::to_value(value)
        .map_err(|e| CryptoError::NonCanonicalizable(e.to_string()))?;
    Ok(canonical_json(&v))
}

/// Parses JSON text and re-emits it canonically. NaN, Infinity and numbers
/// outside the f64 range are rejected.
pub fn canonicalize_str(text: &str) -> Result<Vec<u8>, CryptoError> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| CryptoError::NonCanonicalizable(e.to_string()))?;
    Ok(canonical_json(&v))
}

/// Builds a JSON number from an f64, refusing non-finite values.
pub fn json_number(x: f64) -> Result<Value, CryptoError> {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .ok_or_else(|| CryptoError::NonCanonicalizable(format!("{x} is not finite")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keccak_published_vectors() {
        assert_eq!(
            keccak256(b"").to_hex(),
            "0xc5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
        );
        assert_eq!(
            keccak256(b"abc").to_hex(),
            "0x4e03657aea45a94fc7d47ba826c8d667c0d1e6e33a64a036ec44f58fa12d6c45"
        );
    }

    #[test]
    fn digest_hex_parse_accepts_prefix_and_rejects_bad_length() {
        let d = keccak256(b"x");
        let plain = hex::encode(d.0);
        assert_eq!(plain.parse::<Digest32>().unwrap(), d);
        assert_eq!(d.to_hex().parse::<Digest32>().unwrap(), d);
        assert!(matches!(
            "0x1234".parse::<Digest32>(),
            Err(CryptoError::InvalidLength { .. })
        ));
        assert!("0xzz".parse::<Digest32>().is_err());
        assert_eq!(d.to_hex(), d.to_hex().to_lowercase());
        assert_eq!(d.to_hex().len(), 66);
    }

    #[test]
    fn address_of_secret_one() {
        let mut sk = [0u8; 32];
        sk[31] = 1;
        let kp = KeyPair::from_secret(&sk).unwrap();
        // well-known address of the generator point
        assert_eq!(
            kp.address().to_hex(),
            "0x7e5f4552091a69125d5dfcb7b8c2659029395bdf"
        );
        assert_eq!(derive_address(kp.public()).unwrap(), kp.address());
    }

    #[test]
    fn derive_address_rejects_off_curve_point() {
        let pk = PublicKey([7u8; 64]);
        assert_eq!(derive_address(&pk), Err(CryptoError::InvalidPoint));
    }

    #[test]
    fn zero_secret_is_invalid() {
        assert_eq!(
            KeyPair::from_secret(&[0u8; 32]).unwrap_err(),
            CryptoError::InvalidKey
        );
    }

    #[test]
    fn sign_verify_roundtrip_and_tamper() {
        let kp = KeyPair::dev("test", 1);
        let d = keccak256(b"hello");
        let sig = kp.sign(&d);
        assert!(verify(kp.public(), &d, &sig));
        assert_eq!(sig, kp.sign(&d));
        assert!(!verify(kp.public(), &keccak256(b"hellp"), &sig));
        let other = KeyPair::dev("test", 2);
        assert!(!verify(other.public(), &d, &sig));
        assert_eq!(recover_address(&d, &sig), Some(kp.address()));
    }

    #[test]
    fn high_s_signature_is_rejected() {
        let kp = KeyPair::dev("test", 3);
        let d = keccak256(b"malleable");
        let sig = kp.sign(&d);
        // s' = n - s
        let order = num_bigint::BigUint::parse_bytes(
            b"FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141",
            16,
        )
        .unwrap();
        let s = num_bigint::BigUint::from_bytes_be(&sig.s);
        let flipped = (order - s).to_bytes_be();
        let mut s2 = [0u8; 32];
        s2[32 - flipped.len()..].copy_from_slice(&flipped);
        let high = Signature {
            r: sig.r,
            s: s2,
            v: sig.v ^ 1,
        };
        assert!(!verify(kp.public(), &d, &high));
        assert_eq!(recover_address(&d, &high), None);
    }

    #[test]
    fn canonical_json_sorts_keys() {
        assert_eq!(canonical_json(&json!({"b":1,"a":2})), br#"{"a":2,"b":1}"#);
        assert_eq!(canonical_json(&json!({})), b"{}");
        let x = canonicalize_str(r#"{ "z": [1, {"y":true, "x":null}], "a": "é\n" }"#).unwrap();
        assert_eq!(
            String::from_utf8(x).unwrap(),
            "{\"a\":\"é\\n\",\"z\":[1,{\"x\":null,\"y\":true}]}"
        );
    }

    #[test]
    fn canonical_json_rejects_non_finite() {
        assert!(matches!(
            canonicalize_str("NaN"),
            Err(CryptoError::NonCanonicalizable(_))
        ));
        assert!(canonicalize_str("1e999").is_err());
        assert!(json_number(f64::INFINITY).is_err());
        assert!(json_number(1.5).is_ok());
    }
}
