//! Key-commitment hashing: maps an n-bit key to an m-bit digest.
//!
//! The protocol needs only determinism and avalanche (a one-bit input change
//! scrambles the output), so the default is SHA-256 truncated to m bits. A
//! deliberately weak arithmetic hash is provided behind the same contract
//! for exhaustive small-instance tests where collisions must be reasoned
//! about by hand.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::BitString;

/// Which digest backs [`hash_key`].
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashKind {
    #[default]
    Sha256Truncated,
    /// Multiply-xor mixer; trivial quality, test use only.
    ToyMix,
}

/// Hashes a key to exactly `m` bits.
///
/// The input is length-prefixed before hashing so keys that differ only by
/// trailing zero bits cannot collide by packing. Outputs longer than one
/// digest are produced by counter chaining.
pub fn hash_key(key: &BitString, m: usize, kind: HashKind) -> BitString {
    assert!(m >= 1, "hash length must be at least one bit");
    match kind {
        HashKind::Sha256Truncated => sha256_truncated(key, m),
        HashKind::ToyMix => toy_mix(key, m),
    }
}

fn packed_with_length(key: &BitString) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(8 + key.len().div_ceil(8));
    bytes.extend_from_slice(&(key.len() as u64).to_le_bytes());
    let mut acc = 0u8;
    for (i, &bit) in key.bits().iter().enumerate() {
        acc |= bit << (7 - i % 8);
        if i % 8 == 7 {
            bytes.push(acc);
            acc = 0;
        }
    }
    if key.len() % 8 != 0 {
        bytes.push(acc);
    }
    bytes
}

fn sha256_truncated(key: &BitString, m: usize) -> BitString {
    let packed = packed_with_length(key);
    let mut out = BitString::zeros(0);
    let mut counter = 0u64;
    while out.len() < m {
        let mut hasher = Sha256::new();
        hasher.update(counter.to_le_bytes());
        hasher.update(&packed);
        let digest = hasher.finalize();
        for byte in digest {
            for shift in (0..8).rev() {
                if out.len() == m {
                    return out;
                }
                out.push((byte >> shift) & 1);
            }
        }
        counter += 1;
    }
    out
}

fn toy_mix(key: &BitString, m: usize) -> BitString {
    // splitmix64-style finalizer over the packed bytes; weak on purpose.
    let mut state = 0x9e37_79b9_7f4a_7c15u64 ^ (key.len() as u64);
    for &byte in &packed_with_length(key) {
        state = state.wrapping_add(byte as u64);
        state ^= state >> 30;
        state = state.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        state ^= state >> 27;
        state = state.wrapping_mul(0x94d0_49bb_1331_11eb);
        state ^= state >> 31;
    }
    let mut out = BitString::zeros(0);
    let mut word = state;
    while out.len() < m {
        for shift in (0..64).rev() {
            if out.len() == m {
                return out;
            }
            out.push(((word >> shift) & 1) as u8);
        }
        word = word.wrapping_mul(0xd128_5e59_1bc9_8ef5).rotate_left(17) ^ state;
    }
    out
}
