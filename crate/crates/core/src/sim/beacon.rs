use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Independent random stream for `(seed, label, index)`.
///
/// The key is derived from the seed and a label, and `index` selects the
/// ChaCha stream, so every draw is a pure function of its coordinates.
pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    rng.set_stream(index);
    rng
}

/// Shared randomness: one uniform draw per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Beacon {
    seed: u64,
}

impl Beacon {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Uniform draw in `[0, 1)` for round `t`.
    pub fn draw(&self, t: u64) -> f64 {
        stream(self.seed, "beacon", t).gen()
    }

    /// Interact in round `t` at probability `s`.
    pub fn decide(&self, t: u64, s: f64) -> bool {
        self.draw(t) < s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_pure_functions_of_seed_and_round() {
        let a = Beacon::new(3);
        let b = Beacon::new(3);
        for t in [0, 1, 17, 1 << 40] {
            assert_eq!(a.draw(t), b.draw(t));
        }
        assert_ne!(a.draw(0), a.draw(1));
        assert_ne!(a.draw(5), Beacon::new(4).draw(5));
    }

    #[test]
    fn decision_frequency_matches_probability() {
        let b = Beacon::new(9);
        let n = 20_000;
        let hits = (0..n).filter(|&t| b.decide(t, 0.3)).count() as f64 / n as f64;
        let sigma = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((hits - 0.3).abs() < 4.0 * sigma);
    }
}
