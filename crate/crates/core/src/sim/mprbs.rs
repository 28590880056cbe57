//! Multilevel pseudo-random excitation: piecewise-constant signals with
//! uniformly drawn levels and dwell times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationChannel {
    pub low: f64,
    pub high: f64,
    /// Dwell bounds in samples, inclusive.
    pub hold_min: usize,
    pub hold_max: usize,
}

impl ExcitationChannel {
    pub fn new(low: f64, high: f64, hold_min: usize, hold_max: usize) -> Self {
        ExcitationChannel {
            low,
            high,
            hold_min,
            hold_max,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite() && self.low < self.high) {
            return Err(Error::Config(format!("degenerate excitation range {self:?}")));
        }
        if self.hold_min < 1 || self.hold_max < self.hold_min {
            return Err(Error::Config(format!("bad hold bounds {self:?}")));
        }
        Ok(())
    }
}

/// One sequence of `n` samples per channel. Each channel draws from its own
/// ChaCha stream, so adding a channel leaves the others untouched.
pub fn generate_mprbs(channels: &[ExcitationChannel], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    channels
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            ch.check()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let level = rng.random_range(ch.low..=ch.high);
                let hold = rng.random_range(ch.hold_min..=ch.hold_max);
                let take = hold.min(n - out.len());
                out.extend(std::iter::repeat_n(level, take));
            }
            Ok(out)
        })
        .collect()
}
