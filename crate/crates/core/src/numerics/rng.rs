//! Portable seeded generator.
//!
//! SplitMix64: the state advances by the constant `0x9E3779B97F4A7C15`
//! per draw and each output is the state passed through the standard
//! SplitMix64 finalizer. Derived distributions are built only from
//! `next_u64`, so any implementation of the same recipes reproduces the
//! same streams:
//!
//! * `next_f64`: top 53 bits scaled by 2⁻⁵³, in `[0, 1)`.
//! * `normal`: Box–Muller cosine branch from two `next_f64` draws
//!   (`u1` mapped to `1 - u1` so the log argument is never zero).
//! * `below(n)`: rejection sampling on `next_u64` with zone
//!   `u64::MAX - (u64::MAX % n)`.
//! * `shuffle`: Fisher–Yates from the last index down, using `below(i + 1)`.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for a named pipeline component: FNV-1a of the name, xored with
/// the global seed, then finalized.
pub fn derive_seed(seed: u64, component: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in component.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix(h ^ seed)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    state: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, state: seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a named sub-component.
    pub fn fork(&self, component: &str) -> RngState {
        RngState::new(derive_seed(self.seed, component))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        mean + std * r * (std::f64::consts::TAU * u2).cos()
    }

    /// Normal draw redrawn until it lies within two standard deviations.
    pub fn truncated_normal(&mut self, mean: f64, std: f64) -> f64 {
        loop {
            let z = self.normal(0.0, 1.0);
            if z.abs() <= 2.0 {
                return mean + std * z;
            }
        }
    }

    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
