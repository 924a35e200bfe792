//! Privacy amplification: compresses a raw key with a seeded random Toeplitz
//! matrix over GF(2), the standard universal-hashing construction.
//!
//! Both parties derive the same matrix from a public seed, so equal raw keys
//! amplify to equal final keys while an eavesdropper's partial information
//! about the raw key is diluted across the shorter output.

use rand::{Rng, SeedableRng};

use crate::bits::BitString;
use crate::RunRng;

/// Output length `r = ⌈ratio·n⌉`.
///
/// The epsilon guard keeps binary floating point from bumping an exact
/// product over the next integer (0.8·10 must give 8, not 9).
pub fn amplified_len(n: usize, ratio: f64) -> usize {
    assert!(ratio > 0.0 && ratio <= 1.0, "ratio must be in (0, 1]");
    ((ratio * n as f64) - 1e-9).ceil() as usize
}

/// An r×n binary Toeplitz matrix: constant along each diagonal, so it is
/// fully described by its first column and first row (r + n − 1 bits).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToeplitzMatrix {
    rows: usize,
    cols: usize,
    /// diag[k] holds the value of every entry with i − j + (cols − 1) = k.
    diag: Vec<u8>,
}

impl ToeplitzMatrix {
    /// Matrix with uniform random entries derived from a public seed.
    pub fn from_seed(seed: u64, rows: usize, cols: usize) -> ToeplitzMatrix {
        assert!(rows >= 1 && cols >= 1);
        let mut rng = RunRng::seed_from_u64(seed);
        let diag = (0..rows + cols - 1)
            .map(|_| rng.random_range(0..2u8))
            .collect();
        ToeplitzMatrix { rows, cols, diag }
    }

    /// The first `rows` rows of the identity, so that applying the matrix
    /// returns the input unchanged (truncated). Testing aid.
    pub fn identity(rows: usize, cols: usize) -> ToeplitzMatrix {
        assert!(rows >= 1 && rows <= cols);
        let mut diag = vec![0u8; rows + cols - 1];
        diag[cols - 1] = 1;
        ToeplitzMatrix { rows, cols, diag }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn entry(&self, i: usize, j: usize) -> u8 {
        assert!(i < self.rows && j < self.cols);
        self.diag[i + (self.cols - 1) - j]
    }

    /// Matrix-vector product over GF(2).
    pub fn apply(&self, input: &BitString) -> BitString {
        assert_eq!(input.len(), self.cols, "input length must match columns");
        let mut out = BitString::zeros(self.rows);
        for i in 0..self.rows {
            let mut acc = 0u8;
            for (j, &bit) in input.bits().iter().enumerate() {
                acc ^= self.entry(i, j) & bit;
            }
            out.set(i, acc);
        }
        out
    }
}
