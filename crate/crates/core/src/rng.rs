//! Reproducible random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 keystream. The
//! key is derived from `(master_seed, stream_id)`, and the 64-bit ChaCha
//! stream number selects a replicate. Within a replicate the keystream is
//! addressed by word position, so a noise variate attached to a lattice cell
//! can be regenerated from the cell index alone. Results therefore never
//! depend on how work is split across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifies a family of random streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec {
            master_seed,
            stream_id,
        }
    }

    /// A sub-family of streams, independent of `self` and of every other child id.
    pub fn child(&self, id: u64) -> SeedSpec {
        let mut state = self.master_seed ^ 0x6A09_E667_F3BC_C908;
        let a = splitmix64(&mut state);
        let mut s2 = self.stream_id.wrapping_add(a);
        let b = splitmix64(&mut s2);
        let mut s3 = id ^ b;
        SeedSpec {
            master_seed: splitmix64(&mut s3),
            stream_id: id,
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut state = self.master_seed;
        // fold the stream id in before expanding, so distinct ids give unrelated keys
        let mut mix = self.stream_id ^ 0xD1B5_4A32_D192_ED03;
        state ^= splitmix64(&mut mix);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        key
    }

    /// The generator for one replicate, positioned at the start of its keystream.
    pub fn replicate_rng(&self, replicate: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(replicate);
        rng
    }
}

/// Uniform variate on the open interval (0, 1) built from the top 52 bits.
#[inline]
pub fn open01(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Offset used to map signed lattice indices onto keystream addresses.
const OFFSET_1D: i128 = 1 << 62;
const OFFSET_2D: i64 = 1 << 31;

/// Linear address of a lattice cell in the keystream of a replicate.
///
/// In two dimensions the last axis is contiguous, so a row of cells maps to a
/// contiguous range of addresses.
pub fn cell_address(index: &[i64]) -> u64 {
    match index.len() {
        1 => (index[0] as i128 + OFFSET_1D) as u64,
        2 => {
            let hi = (index[0] + OFFSET_2D) as u64;
            let lo = (index[1] + OFFSET_2D) as u64;
            (hi << 32) | lo
        }
        d => panic!("lattice dimension {d} is not supported"),
    }
}

/// Largest absolute lattice coordinate accepted by [`cell_address`].
pub fn max_coordinate(dim: usize) -> i64 {
    if dim == 1 {
        (1i64 << 61) - 1
    } else {
        (1i64 << 31) - 1
    }
}

/// Positions `rng` at the first word of cell `address` when each cell uses
/// `u64s_per_cell` 64-bit draws.
#[inline]
pub fn seek_cell(rng: &mut ChaCha8Rng, address: u64, u64s_per_cell: u32) {
    rng.set_word_pos(address as u128 * 2 * u64s_per_cell as u128);
}

pub(crate) fn next_u64(rng: &mut ChaCha8Rng) -> u64 {
    rng.next_u64()
}
