//! Counter-based random streams.
//!
//! Every random draw in a simulation is addressed by a key
//! `(master_seed, realization, entity, purpose)` and a position counter.
//! The output at a position is a pure function of the key and the counter,
//! so the draws seen by one synapse or neuron never depend on the order in
//! which other entities are processed.

use rand::RngCore;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// What a stream is used for. Distinct purposes on the same entity are
/// independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u64)]
pub enum Purpose {
    Topology = 1,
    DeviceInit = 2,
    WriteNoise = 3,
    ReadNoise = 4,
    Stimulus = 5,
    Failure = 6,
    Protocol = 7,
    Shuffle = 8,
}

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key shared by all entities of one purpose within one realization.
pub fn base_key(master_seed: u64, realization: u64, purpose: Purpose) -> u64 {
    let mut h = mix64(master_seed ^ GOLDEN);
    h = mix64(h ^ realization.wrapping_mul(GOLDEN).wrapping_add(0x1234_5678));
    mix64(h ^ (purpose as u64).wrapping_mul(0xA076_1D64_78BD_642F))
}

/// Key of one entity's stream under a base key.
#[inline(always)]
pub fn entity_key(base: u64, entity: u64) -> u64 {
    mix64(base ^ entity.wrapping_add(1).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Derives the 64-bit key of a stream.
pub fn stream_key(master_seed: u64, realization: u64, entity: u64, purpose: Purpose) -> u64 {
    entity_key(base_key(master_seed, realization, purpose), entity)
}

/// Standard normal variate at the current position of a keyed stream;
/// advances `counter` past the words consumed.
#[inline]
pub fn normal_at(key: u64, counter: &mut u32) -> f64 {
    use rand::Rng;
    let mut s = RandomStream::from_key(key, u64::from(*counter));
    let z: f64 = s.sample(rand_distr::StandardNormal);
    *counter = s.position() as u32;
    z
}

/// Value at position `counter` of the stream with key `key`.
#[inline(always)]
pub fn draw_u64(key: u64, counter: u64) -> u64 {
    let z = mix64(key.wrapping_add(counter.wrapping_mul(GOLDEN)));
    mix64(z ^ key.rotate_left(29))
}

/// A positioned view of a keyed stream. Implements [`RngCore`] so the
/// `rand_distr` samplers can be used directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomStream {
    key: u64,
    counter: u64,
}

impl RandomStream {
    pub fn new(master_seed: u64, realization: u64, entity: u64, purpose: Purpose) -> Self {
        Self::from_key(stream_key(master_seed, realization, entity, purpose), 0)
    }

    pub fn from_key(key: u64, counter: u64) -> Self {
        Self { key, counter }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Number of 64-bit words consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }
}

impl RngCore for RandomStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let v = draw_u64(self.key, self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_sequence() {
        let mut a = RandomStream::new(7, 1, 42, Purpose::WriteNoise);
        let mut b = RandomStream::new(7, 1, 42, Purpose::WriteNoise);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn resuming_from_position_matches() {
        let mut a = RandomStream::new(3, 0, 9, Purpose::ReadNoise);
        for _ in 0..17 {
            a.next_u64();
        }
        let mut b = RandomStream::from_key(a.key(), a.position());
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn distinct_keys_differ() {
        let keys = [
            stream_key(1, 0, 0, Purpose::WriteNoise),
            stream_key(1, 0, 0, Purpose::ReadNoise),
            stream_key(1, 0, 1, Purpose::WriteNoise),
            stream_key(1, 1, 0, Purpose::WriteNoise),
            stream_key(2, 0, 0, Purpose::WriteNoise),
        ];
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                assert_ne!(keys[i], keys[j]);
            }
        }
    }

    #[test]
    fn uniform_moments_are_plausible() {
        let mut s = RandomStream::new(11, 0, 0, Purpose::Protocol);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let u: f64 = s.random();
            sum += u;
            sq += u * u;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.002, "var {var}");
    }

    #[test]
    fn neighbouring_entities_are_uncorrelated() {
        let n = 50_000;
        let mut a = RandomStream::new(5, 0, 100, Purpose::WriteNoise);
        let mut b = RandomStream::new(5, 0, 101, Purpose::WriteNoise);
        let mut cov = 0.0;
        for _ in 0..n {
            let x: f64 = a.random::<f64>() - 0.5;
            let y: f64 = b.random::<f64>() - 0.5;
            cov += x * y;
        }
        let corr = cov / n as f64 * 12.0;
        assert!(corr.abs() < 0.02, "corr {corr}");
    }
}
