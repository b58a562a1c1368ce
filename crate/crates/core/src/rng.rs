//! SplitMix64 scalar stream with Box–Muller normal deviates.
//!
//! The bit-level contract is fixed so that independent implementations
//! reproduce the same trajectories:
//!
//! * `next_u64` is the reference SplitMix64 step (golden-gamma increment,
//!   two xor-shift-multiply rounds).
//! * uniforms use the top 53 bits: `u = (x >> 11) * 2^-53`, in `[0, 1)`.
//! * normals consume two consecutive draws `(x1, x2)`; with
//!   `u1 = ((x1 >> 11) + 1) * 2^-53` in `(0, 1]` and `u2` as above,
//!   `r = sqrt(-2 ln u1)` yields `r cos(2πu2)` first and `r sin(2πu2)` on
//!   the following call.

use std::f64::consts::TAU;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
    spare: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed, spare: None }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * INV_2_53
    }

    /// Standard normal deviate.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * INV_2_53;
        let u2 = (self.next_u64() >> 11) as f64 * INV_2_53;
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal(&mut self, std_dev: f64) -> f64 {
        std_dev * self.next_gaussian()
    }
}
