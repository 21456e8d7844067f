//! Deterministic reductions.
//!
//! Every reduction over paths goes through a fixed pairwise tree so results do
//! not depend on how work is partitioned.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

/// Leaf size of the summation tree.
pub const LEAF: usize = 64;

/// Pairwise (tree) summation of a slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = split_point(xs.len());
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise summation of `f(0), …, f(n-1)`.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= LEAF {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            return s;
        }
        let mid = lo + split_point(hi - lo);
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, n, &f)
}

/// Pairwise accumulation of vector-valued terms: `add(i, acc)` adds term `i`
/// into a zero-initialised accumulator of length `width`.
pub fn pairwise_accumulate<F: Fn(usize, &mut [f64])>(n: usize, width: usize, add: F) -> Vec<f64> {
    fn rec<F: Fn(usize, &mut [f64])>(lo: usize, hi: usize, width: usize, add: &F) -> Vec<f64> {
        if hi - lo <= LEAF * 4 {
            let mut acc = vec![0.0; width];
            for i in lo..hi {
                add(i, &mut acc);
            }
            return acc;
        }
        let mid = lo + split_point(hi - lo);
        let mut left = rec(lo, mid, width, add);
        let right = rec(mid, hi, width, add);
        for (l, r) in left.iter_mut().zip(right) {
            *l += r;
        }
        left
    }
    rec(0, n, width, &add)
}

// Split on a multiple of the leaf size so the tree shape depends only on n.
fn split_point(len: usize) -> usize {
    let half = len / 2;
    let aligned = (half / LEAF) * LEAF;
    if aligned == 0 {
        half
    } else {
        aligned
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// `|value − target| ≤ k·stderr`.
    pub fn within_sigmas(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample mean with the standard error `s/√n` (unbiased sample variance).
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    mean_estimate_by(xs.len(), |i| xs[i])
}

pub fn mean_estimate_by<F: Fn(usize) -> f64>(n: usize, f: F) -> Estimate {
    if n == 0 {
        return Estimate { value: f64::NAN, stderr: f64::NAN };
    }
    let m = pairwise_sum_by(n, &f) / n as f64;
    if n == 1 {
        return Estimate { value: m, stderr: 0.0 };
    }
    let ss = pairwise_sum_by(n, |i| {
        let d = f(i) - m;
        d * d
    });
    let var = ss / (n - 1) as f64;
    Estimate { value: m, stderr: libm::sqrt(var / n as f64) }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = libm::ceil(pos) as usize;
    let w = pos - lo as f64;
    v[lo] * (1.0 - w) + v[hi] * w
}

/// Hex SHA-256 of the bit patterns of a sequence of floats.
pub fn digest_f64s<'a, I: IntoIterator<Item = &'a [f64]>>(parts: I) -> String {
    let mut h = Sha256::new();
    for part in parts {
        for x in part {
            h.update(x.to_bits().to_le_bytes());
        }
        h.update(b"|");
    }
    to_hex(&h.finalize())
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

fn to_hex(bytes: &[u8]) -> String {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(HEX[(b >> 4) as usize] as char);
        s.push(HEX[(b & 0xf) as usize] as char);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 49_995_000.0);
        assert_eq!(pairwise_sum_by(xs.len(), |i| xs[i]), 49_995_000.0);
    }

    #[test]
    fn accumulate_matches_scalar_tree() {
        let n = 5000;
        let acc = pairwise_accumulate(n, 2, |i, a| {
            a[0] += i as f64 * 0.1;
            a[1] += 1.0;
        });
        assert_eq!(acc[1], n as f64);
        assert!((acc[0] - 0.1 * (n * (n - 1) / 2) as f64).abs() < 1e-6);
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        let e = mean_estimate(&[2.5; 100]);
        assert_eq!(e.value, 2.5);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[0.0, 10.0], 0.9), 9.0);
    }
}
