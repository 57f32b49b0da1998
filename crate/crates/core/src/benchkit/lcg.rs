//! The pseudo-random generator the randomized benchmarks run in guest code.

pub const LCG_MULTIPLIER: u32 = 1_103_515_245;
pub const LCG_INCREMENT: u32 = 12_345;
pub const LCG_MASK: u32 = 0x7fff_ffff;
pub const LCG_SEED: u32 = 1;

/// `x' = (a * x + c) mod 2^31`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lcg {
    state: u32,
}

impl Lcg {
    pub fn new(seed: u32) -> Self {
        Self {
            state: seed & LCG_MASK,
        }
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> u32 {
        self.state = self
            .state
            .wrapping_mul(LCG_MULTIPLIER)
            .wrapping_add(LCG_INCREMENT)
            & LCG_MASK;
        self.state
    }
}

impl Default for Lcg {
    fn default() -> Self {
        Self::new(LCG_SEED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_values() {
        let mut g = Lcg::default();
        // (1103515245 + 12345) mod 2^31
        assert_eq!(g.next(), 1_103_527_590);
        let expect = (1_103_527_590u64 * 1_103_515_245 + 12_345) % (1 << 31);
        assert_eq!(u64::from(g.next()), expect);
    }
}
