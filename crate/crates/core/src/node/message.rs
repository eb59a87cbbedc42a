use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::chain::{SealedBlock, SealedTx};
use crate::crypto::{canonical_json, Digest32};

/// Hard cap on an encoded message.
pub const MAX_MESSAGE_BYTES: usize = 4 * 1024 * 1024;

/// Upper bound on blocks per `Blocks` reply.
pub const MAX_BLOCKS_PER_REPLY: u64 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusBody {
    pub chain_id: u64,
    pub genesis_hash: Digest32,
    pub head_hash: Digest32,
    pub head_number: u64,
    #[serde(serialize_with = "ser_u128", deserialize_with = "de_u128")]
    pub total_difficulty: u128,
}

fn ser_u128<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn de_u128<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
    String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum NetMessage {
    NewTx(SealedTx),
    NewBlock(SealedBlock),
    GetBlocks { from_number: u64, count: u64 },
    Blocks { list: Vec<SealedBlock> },
    Status(StatusBody),
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("message of {0} bytes exceeds limit")]
    TooLarge(usize),
    #[error("malformed message: {0}")]
    Malformed(String),
}

impl NetMessage {
    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        let v = serde_json::to_value(self).map_err(|e| CodecError::Malformed(e.to_string()))?;
        let bytes = canonical_json(&v);
        if bytes.len() > MAX_MESSAGE_BYTES {
            return Err(CodecError::TooLarge(bytes.len()));
        }
        Ok(bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() > MAX_MESSAGE_BYTES {
            return Err(CodecError::TooLarge(bytes.len()));
        }
        serde_json::from_slice(bytes).map_err(|e| CodecError::Malformed(e.to_string()))
    }

    /// Content hash used for gossip dedup, for the kinds that are flooded.
    pub fn gossip_id(&self) -> Option<Digest32> {
        match self {
            NetMessage::NewTx(tx) => Some(tx.hash()),
            NetMessage::NewBlock(b) => Some(b.hash()),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            NetMessage::NewTx(_) => "new_tx",
            NetMessage::NewBlock(_) => "new_block",
            NetMessage::GetBlocks { .. } => "get_blocks",
            NetMessage::Blocks { .. } => "blocks",
            NetMessage::Status(_) => "status",
        }
    }
}
