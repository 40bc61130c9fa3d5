use rand_distr::{Distribution, Normal};

use super::{Judge, JudgeError, JudgeVerdict, TaskContext, Trail, Winner};
use crate::error::{Error, Result};
use crate::rng::SearchRng;

/// One noisy performance draw around a contestant's true utility.
pub fn oracle_performance_sample(true_utility: f64, sigma: f64, rng: &mut SearchRng) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("oracle noise must be positive, got {sigma}")));
    }
    let normal =
        Normal::new(true_utility, sigma).map_err(|e| Error::invalid(format!("bad oracle distribution: {e}")))?;
    Ok(normal.sample(rng))
}

/// Simulated judge: each contestant performs at a Gaussian draw around its
/// hidden utility and the better draw wins.
///
/// The two draws are handed out by the trails' text order rather than by
/// presentation slot, so swapping the candidates under the same random state
/// yields the mirrored verdict.
#[derive(Debug, Clone)]
pub struct OracleJudge {
    sigma: f64,
}

impl OracleJudge {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!("oracle noise must be positive, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Judge for OracleJudge {
    fn name(&self) -> &str {
        "oracle"
    }

    fn compare(
        &mut self,
        _context: &TaskContext,
        first: &Trail,
        second: &Trail,
        rng: &mut SearchRng,
    ) -> Result<JudgeVerdict, JudgeError> {
        let noise = |rng: &mut SearchRng| {
            oracle_performance_sample(0.0, self.sigma, rng).map_err(|e| JudgeError::InvalidInput(e.to_string()))
        };
        let draw_a = noise(rng)?;
        let draw_b = noise(rng)?;
        let (noise_first, noise_second) = if first.text <= second.text {
            (draw_a, draw_b)
        } else {
            (draw_b, draw_a)
        };
        let perf_first = first.utility + noise_first;
        let perf_second = second.utility + noise_second;
        let winner = if perf_first > perf_second {
            Winner::First
        } else if perf_second > perf_first {
            Winner::Second
        } else {
            Winner::Abstain
        };
        Ok(JudgeVerdict::instant(winner))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

    fn trail(text: &str, utility: f64) -> Trail {
        Trail {
            text: text.into(),
            utility,
        }
    }

    fn ctx() -> TaskContext {
        TaskContext::new("task", "query")
    }

    #[test]
    fn degenerate_noise_returns_mean() {
        let mut rng = stream(1, Stream::Judge);
        let v = oracle_performance_sample(3.25, 1e-12, &mut rng).unwrap();
        assert!((v - 3.25).abs() < 1e-9);
        assert!(oracle_performance_sample(0.0, 0.0, &mut rng).is_err());
        assert!(oracle_performance_sample(0.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn sample_mean_converges() {
        let mut rng = stream(2, Stream::Judge);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| oracle_performance_sample(0.0, 1.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn noise_free_dominance() {
        let mut j = OracleJudge::new(1e-9).unwrap();
        let mut rng = stream(3, Stream::Judge);
        let v = j.compare(&ctx(), &trail("a", 1.0), &trail("b", 0.0), &mut rng).unwrap();
        assert_eq!(v.winner, Winner::First);
        let v = j.compare(&ctx(), &trail("b", 0.0), &trail("a", 1.0), &mut rng).unwrap();
        assert_eq!(v.winner, Winner::Second);
    }

    #[test]
    fn equal_utilities_are_a_coin_flip() {
        let mut j = OracleJudge::new(1.0).unwrap();
        let mut rng = stream(4, Stream::Judge);
        let n = 10_000;
        let firsts = (0..n)
            .filter(|_| {
                j.compare(&ctx(), &trail("a", 0.5), &trail("b", 0.5), &mut rng)
                    .unwrap()
                    .winner
                    == Winner::First
            })
            .count();
        let f = firsts as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.02, "{f}");
    }

    #[test]
    fn win_probability_matches_normal_difference() {
        // Independent oracle: P(N(1,1) > N(0,1)) = Phi(1/sqrt 2) = 0.76025 (mpmath).
        let phi = StatNormal::new(0.0, 1.0).unwrap().cdf(1.0 / 2f64.sqrt());
        assert!((phi - 0.760_249_938_9).abs() < 1e-9);
        let mut j = OracleJudge::new(1.0).unwrap();
        let mut rng = stream(5, Stream::Judge);
        let n = 100_000;
        let wins = (0..n)
            .filter(|_| {
                j.compare(&ctx(), &trail("a", 1.0), &trail("b", 0.0), &mut rng)
                    .unwrap()
                    .winner
                    == Winner::First
            })
            .count();
        let p = wins as f64 / n as f64;
        assert!((p - phi).abs() < 0.01, "{p}");
    }

    #[test]
    fn closed_form_within_two_percent_across_gaps() {
        let sigma = 0.7;
        let normal = StatNormal::new(0.0, 1.0).unwrap();
        let mut j = OracleJudge::new(sigma).unwrap();
        for (k, gap) in [-3.0, -1.5, -0.4, 0.0, 0.9, 2.0, 3.0].into_iter().enumerate() {
            let mut rng = stream(100 + k as u64, Stream::Judge);
            let n = 100_000;
            let wins = (0..n)
                .filter(|_| {
                    j.compare(&ctx(), &trail("a", gap * sigma), &trail("b", 0.0), &mut rng)
                        .unwrap()
                        .winner
                        == Winner::First
                })
                .count();
            let expected = normal.cdf(gap / 2f64.sqrt());
            let p = wins as f64 / n as f64;
            assert!((p - expected).abs() < 0.02, "gap {gap}: {p} vs {expected}");
        }
    }

    #[test]
    fn swapping_under_identical_seed_mirrors() {
        let mut j = OracleJudge::new(1.0).unwrap();
        for seed in 0..200 {
            let a = trail("alpha", 0.3);
            let b = trail("beta", 0.1);
            let v1 = j
                .compare(&ctx(), &a, &b, &mut stream(seed, Stream::Judge))
                .unwrap()
                .winner;
            let v2 = j
                .compare(&ctx(), &b, &a, &mut stream(seed, Stream::Judge))
                .unwrap()
                .winner;
            let mirrored = match v1 {
                Winner::First => Winner::Second,
                Winner::Second => Winner::First,
                Winner::Abstain => Winner::Abstain,
            };
            assert_eq!(v2, mirrored);
        }
    }
}
