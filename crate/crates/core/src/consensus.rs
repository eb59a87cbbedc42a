//! Sealing engines: a single-keccak proof-of-work puzzle and a Clique-style
//! round-robin proof-of-authority, plus heaviest-chain fork choice.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{BlockHeader, ChainConfig, Seal};
use crate::crypto::{keccak256_concat, recover_address, Address, Digest32, KeyPair};

/// Cancellation is polled once per this many nonces.
pub const POW_CANCEL_CHECK_INTERVAL: u64 = 4096;

/// PoA in-turn / out-of-turn difficulties.
pub const DIFF_IN_TURN: u64 = 2;
pub const DIFF_NO_TURN: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("difficulty must be at least 1")]
    ZeroDifficulty,
    #[error("sealer set is empty")]
    EmptySealerSet,
    #[error("key is not an authorized sealer")]
    NotAuthorized,
    #[error("block period has not elapsed since parent")]
    TooEarly,
}

/// `floor(2^256 / difficulty)`.
pub fn pow_target(difficulty: u64) -> Result<BigUint, ConsensusError> {
    if difficulty == 0 {
        return Err(ConsensusError::ZeroDifficulty);
    }
    Ok((BigUint::from(1u8) << 256usize) / BigUint::from(difficulty))
}

/// Big-endian 32-byte target, or `None` when every hash passes (difficulty 1).
fn target_bytes(difficulty: u64) -> Result<Option<[u8; 32]>, ConsensusError> {
    let t = pow_target(difficulty)?;
    let bytes = t.to_bytes_be();
    if bytes.len() > 32 {
        return Ok(None);
    }
    let mut out = [0u8; 32];
    out[32 - bytes.len()..].copy_from_slice(&bytes);
    Ok(Some(out))
}

fn below(mix: &Digest32, target: &Option<[u8; 32]>) -> bool {
    match target {
        None => true,
        Some(t) => mix.0 < *t,
    }
}

pub fn pow_mix(seal_hash: &Digest32, nonce: u64) -> Digest32 {
    keccak256_concat(&[&seal_hash.0, &nonce.to_be_bytes()])
}

/// Outcome of a bounded nonce search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowSolution {
    pub nonce: u64,
    pub mix: Digest32,
    /// Nonces tried, including the successful one.
    pub attempts: u64,
}

/// Linear search over at most `max_attempts` nonces starting at `start_nonce`.
pub fn pow_search(
    seal_hash: &Digest32,
    difficulty: u64,
    start_nonce: u64,
    max_attempts: u64,
) -> Result<Option<PowSolution>, ConsensusError> {
    let target = target_bytes(difficulty)?;
    let mut nonce = start_nonce;
    for attempts in 1..=max_attempts {
        let mix = pow_mix(seal_hash, nonce);
        if below(&mix, &target) {
            return Ok(Some(PowSolution {
                nonce,
                mix,
                attempts,
            }));
        }
        nonce = nonce.wrapping_add(1);
    }
    Ok(None)
}

/// Seals `header` at `difficulty`, searching from `start_nonce` until a
/// solution is found or `cancel` is raised.
pub fn pow_seal(
    header: &BlockHeader,
    difficulty: u64,
    start_nonce: u64,
    cancel: Option<&AtomicBool>,
) -> Result<Option<(BlockHeader, PowSolution)>, ConsensusError> {
    let mut h = header.clone();
    h.difficulty = difficulty;
    h.seal = Seal::None;
    let seal_hash = h.seal_hash();
    let mut nonce = start_nonce;
    let mut tried = 0u64;
    loop {
        if cancel.is_some_and(|c| c.load(AtomicOrdering::Relaxed)) {
            return Ok(None);
        }
        if let Some(mut sol) = pow_search(&seal_hash, difficulty, nonce, POW_CANCEL_CHECK_INTERVAL)? {
            sol.attempts += tried;
            h.seal = Seal::Pow {
                nonce: sol.nonce,
                mix: sol.mix,
            };
            return Ok(Some((h, sol)));
        }
        nonce = nonce.wrapping_add(POW_CANCEL_CHECK_INTERVAL);
        tried += POW_CANCEL_CHECK_INTERVAL;
    }
}

pub fn pow_verify(header: &BlockHeader) -> bool {
    let Seal::Pow { nonce, mix } = header.seal else {
        return false;
    };
    let Ok(target) = target_bytes(header.difficulty) else {
        return false;
    };
    let recomputed = pow_mix(&header.seal_hash(), nonce);
    recomputed == mix && below(&mix, &target)
}

/// Raises difficulty by 1/16 when blocks come faster than the target,
/// lowers it by 1/16 when slower than twice the target. The step is at
/// least 1 so small difficulties can move; the result never drops below 1.
pub fn pow_retarget(parent_difficulty: u64, parent_interval_s: u64, target_block_s: u64) -> u64 {
    let step = (parent_difficulty / 16).max(1);
    let next = if parent_interval_s < target_block_s {
        parent_difficulty.saturating_add(step)
    } else if parent_interval_s > 2 * target_block_s {
        parent_difficulty.saturating_sub(step)
    } else {
        parent_difficulty
    };
    next.max(1)
}

/// Difficulty a PoW block must carry given its ancestry.
pub fn pow_expected_difficulty(
    parent: &BlockHeader,
    grandparent: Option<&BlockHeader>,
    config: &ChainConfig,
) -> u64 {
    match grandparent {
        Some(gp) if parent.number >= 1 => pow_retarget(
            parent.difficulty,
            parent.timestamp.saturating_sub(gp.timestamp),
            config.pow_target_block_s,
        ),
        _ => config.pow_initial_difficulty.max(1),
    }
}

/// Difficulty at which `pow_retarget` is balanced for a network hashing
/// `hashrate` per second. Block intervals are exponential, so a raise
/// (1 - e^(-λT)) is as likely as a drop (e^(-2λT)) when e^(-λT) = (√5 - 1)/2.
pub fn pow_equilibrium_difficulty(hashrate: f64, target_block_s: u64) -> u64 {
    let lambda_t = -((5f64.sqrt() - 1.0) / 2.0).ln();
    (hashrate * target_block_s as f64 / lambda_t).ceil().max(1.0) as u64
}

pub fn poa_expected_sealer(block_number: u64, sealers: &[Address]) -> Result<Address, ConsensusError> {
    if sealers.is_empty() {
        return Err(ConsensusError::EmptySealerSet);
    }
    Ok(sealers[(block_number % sealers.len() as u64) as usize])
}

/// Number of immediately preceding blocks a sealer must not have signed.
pub fn poa_recent_window(sealers: &[Address]) -> usize {
    sealers.len() / 2
}

pub fn poa_difficulty(block_number: u64, signer: &Address, sealers: &[Address]) -> u64 {
    match poa_expected_sealer(block_number, sealers) {
        Ok(expected) if expected == *signer => DIFF_IN_TURN,
        _ => DIFF_NO_TURN,
    }
}

/// Signs `header` as `key`, setting the sealer and in-turn difficulty.
pub fn poa_seal(
    header: &BlockHeader,
    parent: &BlockHeader,
    key: &KeyPair,
    config: &ChainConfig,
) -> Result<BlockHeader, ConsensusError> {
    let signer = key.address();
    if config.poa_sealers.is_empty() {
        return Err(ConsensusError::EmptySealerSet);
    }
    if !config.poa_sealers.contains(&signer) {
        return Err(ConsensusError::NotAuthorized);
    }
    if header.timestamp < parent.timestamp + config.poa_period_s {
        return Err(ConsensusError::TooEarly);
    }
    let mut h = header.clone();
    h.sealer = signer;
    h.difficulty = poa_difficulty(h.number, &signer, &config.poa_sealers);
    h.seal = Seal::None;
    let signature = key.sign(&h.seal_hash());
    h.seal = Seal::Poa { signature };
    Ok(h)
}

/// Recovers the PoA signer from the seal, if well formed.
pub fn poa_signer(header: &BlockHeader) -> Option<Address> {
    match header.seal {
        Seal::Poa { signature } => recover_address(&header.seal_hash(), &signature),
        _ => None,
    }
}

/// `recent_signers` are the sealers of the blocks immediately preceding
/// `header`, most recent first; only the first `poa_recent_window` count.
pub fn poa_verify(
    header: &BlockHeader,
    parent: &BlockHeader,
    recent_signers: &[Address],
    config: &ChainConfig,
) -> bool {
    let Some(signer) = poa_signer(header) else {
        return false;
    };
    if signer != header.sealer || !config.poa_sealers.contains(&signer) {
        return false;
    }
    if header.difficulty != poa_difficulty(header.number, &signer, &config.poa_sealers) {
        return false;
    }
    if header.timestamp < parent.timestamp + config.poa_period_s {
        return false;
    }
    let window = poa_recent_window(&config.poa_sealers);
    !recent_signers.iter().take(window).any(|s| *s == signer)
}

/// Total difficulty of a chain up to some head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct ChainWeight {
    pub total_difficulty: u128,
}

/// Orders heads: heavier first, then lexicographically smaller hash.
/// `Ordering::Greater` means `a` is preferred.
pub fn compare_heads(a: (ChainWeight, Digest32), b: (ChainWeight, Digest32)) -> Ordering {
    a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1))
}

pub fn fork_choice<I>(candidates: I) -> Option<(ChainWeight, Digest32)>
where
    I: IntoIterator<Item = (ChainWeight, Digest32)>,
{
    candidates.into_iter().max_by(|a, b| compare_heads(*a, *b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Genesis;
    use crate::crypto::keccak256;
    use std::collections::BTreeMap;

    #[test]
    fn retarget_settles_near_equilibrium() {
        use rand::{Rng, SeedableRng};
        // monte carlo oracle: exponential intervals at rate hashrate / difficulty
        let (hashrate, target) = (1000.0, 4u64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut d = 1000u64;
        let mut ts = 0f64;
        let mut tail = Vec::new();
        for i in 0..40_000 {
            let dt = -(1.0 - rng.gen::<f64>()).ln() * d as f64 / hashrate;
            let prev = ts.floor() as u64;
            ts += dt;
            d = pow_retarget(d, ts.floor() as u64 - prev, target);
            if i > 2_000 {
                tail.push(d);
            }
        }
        tail.sort_unstable();
        let median = tail[tail.len() / 2] as f64;
        let eq = pow_equilibrium_difficulty(hashrate, target) as f64;
        assert!((median / eq - 1.0).abs() < 0.25, "median {median} equilibrium {eq}");
    }

    fn header() -> BlockHeader {
        let g = Genesis {
            config: ChainConfig::pow(1, 1, 4),
            timestamp: 0,
            alloc: BTreeMap::new(),
        };
        let mut h = g.block().header().clone();
        h.number = 1;
        h.parent_hash = g.block().hash();
        h.timestamp = 4;
        h
    }

    #[test]
    fn target_values() {
        let two_256 = BigUint::from(1u8) << 256usize;
        assert_eq!(pow_target(1).unwrap(), two_256.clone());
        assert_eq!(pow_target(2).unwrap(), two_256.clone() >> 1usize);
        for k in 0..20usize {
            let t = pow_target(1 << k).unwrap();
            let t_next = pow_target(1 << (k + 1)).unwrap();
            assert_eq!(t_next, t / 2u8);
        }
        assert_eq!(pow_target(0), Err(ConsensusError::ZeroDifficulty));
    }

    #[test]
    fn seal_then_verify() {
        for d in [1u64, 2, 16, 256] {
            let (sealed, sol) = pow_seal(&header(), d, 0, None).unwrap().unwrap();
            assert!(pow_verify(&sealed), "difficulty {d}");
            if d == 1 {
                assert_eq!(sol.attempts, 1);
                assert_eq!(sol.nonce, 0);
            }
        }
    }

    #[test]
    fn tampered_seals_fail() {
        let (sealed, _) = pow_seal(&header(), 256, 0, None).unwrap().unwrap();
        let Seal::Pow { nonce, mix } = sealed.seal else {
            unreachable!()
        };
        for n in [nonce.wrapping_add(1), nonce.wrapping_sub(1)] {
            let mut h = sealed.clone();
            h.seal = Seal::Pow { nonce: n, mix };
            assert!(!pow_verify(&h));
        }
        // raise difficulty until the existing mix no longer passes
        let mut h = sealed.clone();
        h.difficulty = u64::MAX;
        assert!(!pow_verify(&h));
        let mut h = sealed.clone();
        h.seal = Seal::None;
        assert!(!pow_verify(&h));
    }

    #[test]
    fn cancellation_stops_search() {
        let cancel = AtomicBool::new(true);
        assert_eq!(pow_seal(&header(), u64::MAX, 0, Some(&cancel)).unwrap(), None);
    }

    #[test]
    fn retarget_examples() {
        assert_eq!(pow_retarget(1600, 1, 15), 1700);
        assert_eq!(pow_retarget(1600, 15, 15), 1600);
        assert_eq!(pow_retarget(1600, 30, 15), 1600);
        assert_eq!(pow_retarget(16, 60, 15), 15);
        assert_eq!(pow_retarget(1, 60, 15), 1);
        assert_eq!(pow_retarget(1, 0, 15), 2);
    }

    #[test]
    fn expected_sealer_rotation() {
        let s: Vec<Address> = (0..3).map(|i| KeyPair::dev("s", i).address()).collect();
        assert_eq!(poa_expected_sealer(4, &s).unwrap(), s[1]);
        assert_eq!(poa_expected_sealer(0, &s).unwrap(), s[0]);
        assert_eq!(poa_expected_sealer(17, &s[..1]).unwrap(), s[0]);
        assert_eq!(poa_expected_sealer(1, &[]), Err(ConsensusError::EmptySealerSet));
    }

    fn poa_setup() -> (Vec<KeyPair>, ChainConfig, BlockHeader) {
        let keys: Vec<KeyPair> = (0..3).map(|i| KeyPair::dev("s", i)).collect();
        let cfg = ChainConfig::poa(1, keys.iter().map(|k| k.address()).collect());
        let g = Genesis {
            config: cfg.clone(),
            timestamp: 0,
            alloc: BTreeMap::new(),
        };
        (keys, cfg, g.block().header().clone())
    }

    fn child(parent: &BlockHeader, ts: u64) -> BlockHeader {
        let mut h = parent.clone();
        h.number = parent.number + 1;
        h.parent_hash = parent.hash();
        h.timestamp = ts;
        h.seal = Seal::None;
        h
    }

    #[test]
    fn poa_seal_difficulties_and_errors() {
        let (keys, cfg, genesis) = poa_setup();
        let h1 = child(&genesis, 4);
        let in_turn = poa_seal(&h1, &genesis, &keys[1], &cfg).unwrap();
        assert_eq!(in_turn.difficulty, 2);
        assert!(poa_verify(&in_turn, &genesis, &[], &cfg));
        let out_turn = poa_seal(&h1, &genesis, &keys[2], &cfg).unwrap();
        assert_eq!(out_turn.difficulty, 1);
        assert!(poa_verify(&out_turn, &genesis, &[], &cfg));

        let stranger = KeyPair::dev("x", 9);
        assert_eq!(
            poa_seal(&h1, &genesis, &stranger, &cfg),
            Err(ConsensusError::NotAuthorized)
        );
        assert_eq!(
            poa_seal(&child(&genesis, 3), &genesis, &keys[1], &cfg),
            Err(ConsensusError::TooEarly)
        );
    }

    #[test]
    fn poa_anti_monopoly_and_forgery() {
        let (keys, cfg, genesis) = poa_setup();
        let b1 = poa_seal(&child(&genesis, 4), &genesis, &keys[1], &cfg).unwrap();
        let b2 = poa_seal(&child(&b1, 8), &b1, &keys[1], &cfg).unwrap();
        assert!(!poa_verify(&b2, &b1, &[keys[1].address()], &cfg));
        let b2ok = poa_seal(&child(&b1, 8), &b1, &keys[2], &cfg).unwrap();
        assert!(poa_verify(&b2ok, &b1, &[keys[1].address()], &cfg));

        // claim another sealer's identity
        let mut forged = b2ok.clone();
        forged.sealer = keys[0].address();
        assert!(!poa_verify(&forged, &b1, &[keys[1].address()], &cfg));
        // difficulty must match turn
        let mut inflated = b2ok.clone();
        inflated.difficulty = 1;
        assert!(!poa_verify(&inflated, &b1, &[keys[1].address()], &cfg));
        // garbage signature
        let mut garbage = b2ok.clone();
        garbage.seal = Seal::Poa {
            signature: keys[2].sign(&keccak256(b"other")),
        };
        assert!(!poa_verify(&garbage, &b1, &[keys[1].address()], &cfg));
    }

    #[test]
    fn fork_choice_rules() {
        let a = keccak256(b"a");
        let b = keccak256(b"b");
        let single = (ChainWeight { total_difficulty: 5 }, a);
        assert_eq!(fork_choice([single]), Some(single));
        let heavy = (ChainWeight { total_difficulty: 7 }, b);
        assert_eq!(fork_choice([single, heavy]), Some(heavy));
        let tie_a = (ChainWeight { total_difficulty: 7 }, a);
        let winner = if a < b { tie_a } else { heavy };
        assert_eq!(fork_choice([heavy, tie_a]), Some(winner));
        assert_eq!(fork_choice([tie_a, heavy]), Some(winner));
    }
}
