//! Counter-based random numbers (Philox4x32-10).
//!
//! A draw is a pure function of `(seed, counter)`, so Brownian increments are
//! addressed by `(path, step, dim, stream)` and can be regenerated in any order.

use core::f64::consts::PI;

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

/// Stream used for the base increments of an ensemble.
pub const STREAM_INCREMENTS: u32 = 0;
/// First stream used by Brownian-bridge refinements (level `k` uses `+ k`).
pub const STREAM_BRIDGE: u32 = 1;
/// First stream reserved for samplers outside the path ensemble.
pub const STREAM_SAMPLERS: u32 = 0x4000_0000;
/// Stream for synthetic inputs of diagnostic self-tests.
pub const STREAM_DIAGNOSTICS: u32 = 0x6000_0000;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 bijection with 10 rounds.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

#[inline]
fn seed_key(seed: u64) -> [u32; 2] {
    [seed as u32, (seed >> 32) as u32]
}

// Open interval (0, 1) from 64 random bits, 53 significant.
#[inline]
fn unit_open(hi: u32, lo: u32) -> f64 {
    let bits = (((hi as u64) << 32) | lo as u64) >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variate addressed by `(seed; a, b, c, stream)`.
#[inline]
pub fn normal_at(seed: u64, a: u32, b: u32, c: u32, stream: u32) -> f64 {
    let w = philox4x32([a, b, c, stream], seed_key(seed));
    let u1 = unit_open(w[0], w[1]);
    let u2 = unit_open(w[2], w[3]);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

/// Sequential generator over one stream, for samplers that do not need random
/// access.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: [u32; 2],
    stream: u32,
    counter: u64,
    buf: [u32; 4],
    pos: usize,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u32) -> Self {
        Self { key: seed_key(seed), stream, counter: 0, buf: [0; 4], pos: 4 }
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.pos == 4 {
            let ctr = [self.counter as u32, (self.counter >> 32) as u32, 0, self.stream];
            self.buf = philox4x32(ctr, self.key);
            self.counter += 1;
            self.pos = 0;
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        let hi = self.next_u32();
        let lo = self.next_u32();
        unit_open(hi, lo)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
    }

    /// Random sign.
    pub fn sign(&mut self) -> f64 {
        if self.next_u32() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}
