//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream selected by `(master seed, lane, batch)`:
//! the seed picks the key, `lane` and `batch` pick the 64-bit stream id. Work
//! split into fixed-size batches therefore draws the same numbers no matter
//! which thread runs which batch.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Lanes at or above this value are reserved for auxiliary draws (random
/// initial data, exit-time walks) so they never collide with mode lanes.
pub const AUX_LANE_BASE: u64 = 0xFFFF_0000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub lane: u64,
    pub batch: u64,
}

impl StreamKey {
    pub fn new(seed: u64, lane: u64, batch: u64) -> Self {
        assert!(lane < (1 << 32) && batch < (1 << 32), "lane and batch must fit in 32 bits");
        Self { seed, lane, batch }
    }

    pub fn aux(seed: u64, tag: u64, batch: u64) -> Self {
        Self::new(seed, AUX_LANE_BASE + tag, batch)
    }

    pub fn stream_id(&self) -> u64 {
        (self.lane << 32) | self.batch
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id());
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Buffered source of fair random signs.
pub struct SignSource<R> {
    rng: R,
    bits: u64,
    left: u32,
}

impl<R: RngCore> SignSource<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, bits: 0, left: 0 }
    }

    /// `true` means `+1`.
    #[inline]
    pub fn next_bit(&mut self) -> bool {
        if self.left == 0 {
            self.bits = self.rng.next_u64();
            self.left = 64;
        }
        let b = self.bits & 1 == 1;
        self.bits >>= 1;
        self.left -= 1;
        b
    }

    #[inline]
    pub fn next_sign(&mut self) -> i8 {
        if self.next_bit() {
            1
        } else {
            -1
        }
    }

    pub fn into_inner(self) -> R {
        self.rng
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}
