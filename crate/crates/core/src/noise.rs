//! Counter-based noise: every draw is a pure function of
//! `(seed, sample index, channel)`, so streams can be synthesized in any
//! order, in parallel, or partially replayed and still agree bit for bit.

use std::f64::consts::TAU;

/// Noise channels of the synthetic sensor stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    AccX,
    AccY,
    AccZ,
    GyroX,
    GyroY,
    GyroZ,
    MagX,
    MagY,
    MagZ,
    Lum,
    BiasAccX,
    BiasAccY,
    BiasGyroZ,
    /// Free-form channels used outside the sensor stream (textures, test
    /// fixtures). The payload keeps them disjoint from the sensor channels.
    Aux(u16),
}

impl Channel {
    fn key(self) -> u64 {
        match self {
            Channel::AccX => 0,
            Channel::AccY => 1,
            Channel::AccZ => 2,
            Channel::GyroX => 3,
            Channel::GyroY => 4,
            Channel::GyroZ => 5,
            Channel::MagX => 6,
            Channel::MagY => 7,
            Channel::MagZ => 8,
            Channel::Lum => 9,
            Channel::BiasAccX => 10,
            Channel::BiasAccY => 11,
            Channel::BiasGyroZ => 12,
            Channel::Aux(k) => 0x1_0000 + u64::from(k),
        }
    }
}

/// SplitMix64 output function.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// 64 random bits for `(index, channel, draw)`.
    pub fn bits(&self, index: u64, channel: Channel, draw: u32) -> u64 {
        let h = mix(self.seed.wrapping_add(GOLDEN));
        let h = mix(h ^ index.wrapping_mul(GOLDEN));
        mix(h ^ (channel.key() << 32 | u64::from(draw)).wrapping_add(GOLDEN))
    }

    /// Uniform in the open interval (0, 1).
    pub fn uniform(&self, index: u64, channel: Channel, draw: u32) -> f64 {
        ((self.bits(index, channel, draw) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (-1, 1).
    pub fn symmetric(&self, index: u64, channel: Channel) -> f64 {
        2.0 * self.uniform(index, channel, 0) - 1.0
    }

    /// Standard normal via Box-Muller on two independent draws.
    pub fn gaussian(&self, index: u64, channel: Channel) -> f64 {
        let u1 = self.uniform(index, channel, 0);
        let u2 = self.uniform(index, channel, 1);
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }
}
