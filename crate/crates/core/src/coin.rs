//! The 4-dimensional discrete Fourier transform coin.
//!
//! Entry `(j, k)` is `½·i^((j−1)(k−1))`. Every entry is one of `±½`, `±i/2`, so
//! multiplication by an entry is a component swap, sign flip and halving, all
//! exact in binary floating point.

use num_complex::Complex64;

/// Quarter-turn exponent `m` of the entry `(j, k)`, i.e. the entry is `½·i^m`.
#[inline]
pub fn coin_phase(j: usize, k: usize) -> u8 {
    debug_assert!((1..=4).contains(&j) && (1..=4).contains(&k));
    (((j - 1) * (k - 1)) % 4) as u8
}

/// Multiplies `z` by `i^m` without rounding.
#[inline]
pub fn rotate_quarter(z: Complex64, m: u8) -> Complex64 {
    match m & 3 {
        0 => z,
        1 => Complex64::new(-z.im, z.re),
        2 => Complex64::new(-z.re, -z.im),
        _ => Complex64::new(z.im, -z.re),
    }
}

/// `coin_entry(j, k)` for 1-based chirality indices.
pub fn coin_entry(j: usize, k: usize) -> Complex64 {
    assert!(
        (1..=4).contains(&j) && (1..=4).contains(&k),
        "chirality index out of range"
    );
    rotate_quarter(Complex64::new(0.5, 0.0), coin_phase(j, k))
}

/// `coin_entry(j, k) · z`, exactly.
#[inline]
pub fn coin_times(j: usize, k: usize, z: Complex64) -> Complex64 {
    rotate_quarter(z * 0.5, coin_phase(j, k))
}

/// Output `j` is `Σ_k coin_entry(j, k)·input[k]`.
pub fn coin_apply(input: [Complex64; 4]) -> [Complex64; 4] {
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (j, slot) in out.iter_mut().enumerate() {
        for (k, &z) in input.iter().enumerate() {
            *slot += coin_times(j + 1, k + 1, z);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinMatrix {
    pub entries: [[Complex64; 4]; 4],
}

impl CoinMatrix {
    pub fn dft4() -> CoinMatrix {
        let mut entries = [[Complex64::new(0.0, 0.0); 4]; 4];
        for (j, row) in entries.iter_mut().enumerate() {
            for (k, e) in row.iter_mut().enumerate() {
                *e = coin_entry(j + 1, k + 1);
            }
        }
        CoinMatrix { entries }
    }
}
