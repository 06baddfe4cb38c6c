//! SplitMix64, the deterministic generator behind audit sampling and
//! permutation nulls.
//!
//! The sequence is fixed bit-exactly so other implementations can reproduce
//! the same audit sample:
//!
//! ```text
//! state  <- state + 0x9E3779B97F4A7C15            (wrapping)
//! z      <- state
//! z      <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9  (wrapping)
//! z      <- (z ^ (z >> 27)) * 0x94D049BB133111EB  (wrapping)
//! output    z ^ (z >> 31)
//! ```
//!
//! The initial state is the user seed reinterpreted as `u64`. A bounded draw
//! in `[0, m)` is `(next_u64() as u128 * m as u128) >> 64`.
//!
//! Substream `i` of seed `s` starts from state `mix(s ^ mix(i + 1))`, where
//! `mix` is the output function above applied to its argument.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream for work item `index`, so parallel consumers do not
    /// depend on scheduling order.
    pub fn substream(seed: u64, index: u64) -> Self {
        Self::new(mix(seed ^ mix(index.wrapping_add(1))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform integer in `[0, bound)` by multiply-shift. `bound` must be > 0.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// In-place Fisher–Yates shuffle, front to back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let len = items.len();
        for i in 0..len.saturating_sub(1) {
            let j = i + self.below((len - i) as u64) as usize;
            items.swap(i, j);
        }
    }
}
