use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};

use crate::error::{Error, Result};

/// Seeded random stream backed by a counter-based generator.
///
/// Identical seeds give bit-identical draw sequences on every platform, and
/// the stream position can be captured and restored, which is what makes
/// snapshot/resume byte-exact.
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for chain `chain` of a multi-chain run.
    pub fn for_chain(base_seed: u64, chain: u64) -> Self {
        Self::new(base_seed.wrapping_add(chain))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Position of the generator within its stream, for snapshots.
    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn restore(seed: u64, word_pos: u128) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(word_pos);
        RandomStream { seed, rng }
    }

    /// Uniform draw on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Uniform draw on (0, 1]; safe to take the logarithm of.
    pub fn uniform_open(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    pub fn uniform_usize(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    /// Gamma draw in the shape/rate parameterization (mean = shape / rate).
    pub fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        let g = Gamma::new(shape, 1.0 / rate).expect("gamma parameters must be positive");
        g.sample(&mut self.rng)
    }

    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        let d = Beta::new(a, b).expect("beta parameters must be positive");
        d.sample(&mut self.rng)
    }
}

impl std::fmt::Debug for RandomStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RandomStream(seed={}, pos={})", self.seed, self.word_pos())
    }
}

/// Draw an index proportionally to a vector of non-negative weights.
///
/// Faults on all-zero or non-finite weights; callers attach the token being
/// updated to the error message.
pub fn draw_categorical(weights: &[f64], rng: &mut RandomStream) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::fault(format!(
                "invalid categorical weight {w} in {weights:?}"
            )));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::fault("all-zero categorical weights"));
    }
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if target < acc {
                return Ok(i);
            }
        }
    }
    // Round-off can leave `target` marginally above the final accumulation.
    Ok(last_positive.expect("at least one positive weight"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seeds_reproduce() {
        let mut a = RandomStream::new(42);
        let mut b = RandomStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn restore_resumes_stream() {
        let mut a = RandomStream::new(7);
        for _ in 0..13 {
            a.uniform();
        }
        let pos = a.word_pos();
        let tail: Vec<f64> = (0..20).map(|_| a.uniform()).collect();

        let mut b = RandomStream::restore(7, pos);
        let tail2: Vec<f64> = (0..20).map(|_| b.uniform()).collect();
        assert_eq!(tail, tail2);
    }

    #[test]
    fn categorical_degenerate_mass() {
        let mut rng = RandomStream::new(1);
        for _ in 0..50 {
            assert_eq!(draw_categorical(&[0.0, 5.0, 0.0], &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn categorical_symmetry() {
        let mut rng = RandomStream::new(2);
        let n = 100_000;
        let mut zero = 0usize;
        for _ in 0..n {
            if draw_categorical(&[1.0, 1.0], &mut rng).unwrap() == 0 {
                zero += 1;
            }
        }
        let freq = zero as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.015, "freq = {freq}");
    }

    #[test]
    fn categorical_one_three() {
        // P(index 1) = 3/4 by hand normalization.
        let mut rng = RandomStream::new(3);
        let n = 100_000;
        let mut ones = 0usize;
        for _ in 0..n {
            if draw_categorical(&[1.0, 3.0], &mut rng).unwrap() == 1 {
                ones += 1;
            }
        }
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.015, "freq = {freq}");
    }

    #[test]
    fn categorical_rejects_bad_weights() {
        let mut rng = RandomStream::new(4);
        assert!(draw_categorical(&[0.0, 0.0], &mut rng).is_err());
        assert!(draw_categorical(&[1.0, f64::NAN], &mut rng).is_err());
        assert!(draw_categorical(&[1.0, f64::INFINITY], &mut rng).is_err());
    }

    #[test]
    fn gamma_moments() {
        let mut rng = RandomStream::new(5);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| rng.gamma(2.0, 1.0)).sum::<f64>() / n as f64;
        // Gamma(2,1) has mean 2, variance 2; 3 standard errors of the mean.
        assert!((mean - 2.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "mean = {mean}");
    }
}
