//! Bit strings and index permutations used by the protocol layers.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::RunRng;

/// A key or hash value as an explicit sequence of bits (each entry 0 or 1).
///
/// Keys here are short (a few hundred bits) and are inspected bit by bit all
/// over the protocol code, so an unpacked representation is the right
/// trade-off.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString(vec![0; len])
    }

    /// Builds from a slice of 0/1 values.
    pub fn from_bits(bits: &[u8]) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "bit values must be 0 or 1");
        BitString(bits.to_vec())
    }

    /// Draws `len` uniformly random bits.
    pub fn random(len: usize, rng: &mut RunRng) -> Self {
        BitString((0..len).map(|_| rng.random_range(0..2u8)).collect())
    }

    /// Parses a string of '0'/'1' characters; handy in tests and the CLI.
    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(0),
                '1' => Some(1),
                _ => None,
            })
            .collect::<Option<Vec<u8>>>()
            .map(BitString)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> u8 {
        self.0[index]
    }

    pub fn set(&mut self, index: usize, bit: u8) {
        assert!(bit <= 1);
        self.0[index] = bit;
    }

    pub fn flip(&mut self, index: usize) {
        self.0[index] ^= 1;
    }

    pub fn push(&mut self, bit: u8) {
        assert!(bit <= 1);
        self.0.push(bit);
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    /// Bitwise XOR. Lengths must agree; a mismatch is a programming error.
    pub fn xor(&self, other: &BitString) -> BitString {
        assert_eq!(
            self.len(),
            other.len(),
            "xor of bit strings with different lengths"
        );
        BitString(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a ^ b)
                .collect(),
        )
    }

    pub fn hamming_distance(&self, other: &BitString) -> usize {
        assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(other.0.iter())
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    /// Packs bits MSB-first into bytes (the final byte is zero-padded) and
    /// renders them as lowercase hex. This is the CLI key format.
    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.0.len().div_ceil(8)];
        for (i, &bit) in self.0.iter().enumerate() {
            bytes[i / 8] |= bit << (7 - i % 8);
        }
        hex::encode(bytes)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in &self.0 {
            write!(f, "{bit}")?;
        }
        Ok(())
    }
}

// Debug matches Display so keys print as plain bit strings in assertions.
impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("not a permutation: {0}")]
pub struct InvalidPermutation(pub String);

/// A bijection on `{0..n-1}` describing a particle reordering.
///
/// `apply` produces the sent order: `out[i] = input[self[i]]`, i.e. position
/// `i` of the reordered sequence carries original position `self[i]`.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    /// Uniform draw over the symmetric group via Fisher–Yates.
    pub fn random(n: usize, rng: &mut RunRng) -> Self {
        let mut v: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            v.swap(i, j);
        }
        Permutation(v)
    }

    /// Uniform draw over permutations different from `avoid`.
    ///
    /// Rejection sampling; for n = 1 there is no other permutation and the
    /// identity is returned.
    pub fn random_not_equal(n: usize, avoid: &Permutation, rng: &mut RunRng) -> Self {
        if n <= 1 {
            return Permutation::identity(n);
        }
        loop {
            let p = Permutation::random(n, rng);
            if p != *avoid {
                return p;
            }
        }
    }

    /// The transposition swapping `i` and `j`.
    pub fn transposition(n: usize, i: usize, j: usize) -> Self {
        assert!(i < n && j < n);
        let mut v: Vec<usize> = (0..n).collect();
        v.swap(i, j);
        Permutation(v)
    }

    /// Validates an announced ordering: every index in `0..n` exactly once.
    pub fn from_vec(v: Vec<usize>) -> Result<Self, InvalidPermutation> {
        let n = v.len();
        let mut seen = vec![false; n];
        for &x in &v {
            if x >= n {
                return Err(InvalidPermutation(format!("index {x} out of range 0..{n}")));
            }
            if seen[x] {
                return Err(InvalidPermutation(format!("index {x} appears twice")));
            }
            seen[x] = true;
        }
        Ok(Permutation(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Reorders a sequence: `out[i] = input[self[i]]`.
    pub fn apply<T: Clone>(&self, input: &[T]) -> Vec<T> {
        assert_eq!(input.len(), self.0.len());
        self.0.iter().map(|&src| input[src].clone()).collect()
    }

    /// Inverse of [`Permutation::apply`]: `out[self[i]] = input[i]`.
    pub fn unapply<T: Clone + Default>(&self, input: &[T]) -> Vec<T> {
        assert_eq!(input.len(), self.0.len());
        let mut out = vec![T::default(); input.len()];
        for (i, &dst) in self.0.iter().enumerate() {
            out[dst] = input[i].clone();
        }
        out
    }

    pub fn apply_bits(&self, bits: &BitString) -> BitString {
        BitString(self.apply(bits.bits()))
    }

    pub fn unapply_bits(&self, bits: &BitString) -> BitString {
        BitString(self.unapply(bits.bits()))
    }
}
