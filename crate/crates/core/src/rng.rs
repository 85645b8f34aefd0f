//! Counter-based deterministic random streams.
//!
//! Every random draw in the crate comes from a stream keyed by
//! `(seed, domain, member, step, pixel)`. Streams are independent of
//! execution order and thread count, so parallel runs, serial runs, and
//! checkpoint-resumed runs produce bit-identical results. The generator is
//! the splitmix64 sequence seeded with a hash of the key.

use rand_core::RngCore;

/// Purpose tag separating otherwise identically keyed streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    /// Initial-condition white noise.
    Init,
    /// Supergranular random-walk displacements.
    Diffusion,
    /// Random background flux emergence.
    Emergence,
    /// Synthetic observation noise.
    ObsNoise,
}

impl StreamDomain {
    fn tag(self) -> u64 {
        match self {
            StreamDomain::Init => 0x494e_4954,
            StreamDomain::Diffusion => 0x4449_4646,
            StreamDomain::Emergence => 0x454d_4552,
            StreamDomain::ObsNoise => 0x4f42_534e,
        }
    }
}

/// Member id reserved for the hidden truth trajectory.
pub const TRUTH_MEMBER: u64 = u64::MAX;

/// splitmix64 finalizer; bijective with full avalanche.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream context for one `(member, step)` slice of a run.
#[derive(Debug, Clone, Copy)]
pub struct StepStream {
    pub seed: u64,
    pub member: u64,
    pub step: u64,
}

impl StepStream {
    pub fn new(seed: u64, member: u64, step: u64) -> Self {
        StepStream { seed, member, step }
    }

    /// Per-pixel generator within this slice.
    pub fn pixel(&self, domain: StreamDomain, pixel: u64) -> CounterRng {
        let mut h = self.seed;
        h = mix(h ^ domain.tag());
        h = mix(h ^ self.member);
        h = mix(h ^ self.step);
        h = mix(h ^ pixel);
        CounterRng { state: h }
    }
}

/// splitmix64 generator over a hashed key.
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix(self.state)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        rand_core::impls::fill_bytes_via_next(self, dest)
    }
}

/// Uniform draw in `[0, 1)`.
impl CounterRng {
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Position of a run within its seeded random sequence; stored in
/// checkpoints so a resumed run replays the remaining draws exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngCursor {
    pub seed: u64,
    pub step: u64,
}
