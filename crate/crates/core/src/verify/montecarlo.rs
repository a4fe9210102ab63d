use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Trials per independently seeded chunk. Fixed so that the estimate does not
/// depend on the number of worker threads.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalEstimate {
    pub estimate: f64,
    /// Binomial standard error of `estimate`.
    pub stderr: f64,
    pub samples: usize,
}

/// Estimates the probability that every line survives when line `i` fails
/// independently with probability `q[i]`. Chunk `c` draws from stream `c` of
/// a ChaCha8 generator seeded with `seed`.
pub fn monte_carlo_survival(q: &[f64], samples: usize, seed: u64) -> SurvivalEstimate {
    assert!(samples >= 1, "at least one sample is required");
    let chunks = samples.div_ceil(CHUNK);
    let survived: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let trials = CHUNK.min(samples - c * CHUNK);
            (0..trials)
                .filter(|_| q.iter().all(|&qe| rng.gen::<f64>() >= qe))
                .count() as u64
        })
        .sum();
    let estimate = survived as f64 / samples as f64;
    SurvivalEstimate {
        estimate,
        stderr: (estimate * (1.0 - estimate) / samples as f64).sqrt(),
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_outcomes() {
        let sure = monte_carlo_survival(&[0.0; 5], 1000, 1);
        assert_eq!((sure.estimate, sure.stderr), (1.0, 0.0));
        assert_eq!(monte_carlo_survival(&[0.0, 1.0], 1000, 1).estimate, 0.0);
        assert_eq!(monte_carlo_survival(&[], 10, 1).estimate, 1.0);
    }

    #[test]
    fn reproducible_and_close() {
        let a = monte_carlo_survival(&[0.1; 3], 100_000, 42);
        assert_eq!(a, monte_carlo_survival(&[0.1; 3], 100_000, 42));
        assert!((a.estimate - 0.729).abs() < 3.0 * a.stderr);
        assert_ne!(a, monte_carlo_survival(&[0.1; 3], 100_000, 43));
    }
}
