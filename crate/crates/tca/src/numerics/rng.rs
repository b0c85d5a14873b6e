//! Counter-based deterministic PRNG.
//!
//! The generator is splitmix64: the state is a counter advanced by a fixed
//! increment and each output is a finalizer applied to the counter. The
//! constants below are the whole contract — any implementation using the
//! same three constants and the same derivation rule produces the same
//! stream bit for bit, on any platform.

/// Counter increment (golden-ratio constant).
pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
/// First finalizer multiplier.
pub const MIX_M1: u64 = 0xBF58_476D_1CE4_E5B9;
/// Second finalizer multiplier.
pub const MIX_M2: u64 = 0x94D0_49BB_1331_11EB;

/// splitmix64 finalizer; also used on its own to derive seeds.
pub fn mix(z: u64) -> u64 {
    let z = (z ^ (z >> 30)).wrapping_mul(MIX_M1);
    let z = (z ^ (z >> 27)).wrapping_mul(MIX_M2);
    z ^ (z >> 31)
}

/// Seeded deterministic generator. Single-owner mutable state; create one
/// per logical stream instead of sharing.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Independent stream for a (seed, tag) pair. Pure function of its
    /// inputs: `derive(s, t)` never aliases `new(s)` or another tag's
    /// stream. Used to give every token position / class / channel its own
    /// generator without threading one Rng through in a fixed order.
    pub fn derive(seed: u64, tag: u64) -> Self {
        Rng::new(mix(seed ^ mix(tag.wrapping_add(GAMMA))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller (one draw per pair of uniforms).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
