//! Rating arithmetic shared by the search engine, the judges and the harness.
//!
//! Scores live on an unbounded real line. The expected score of `x` over `y`
//! is the logistic function of the score gap divided by the coefficient `r`,
//! and a pairwise result moves both scores by `K * (actual - expected)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rating and selection constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EloConfig {
    /// Logistic scale of the expected-score curve.
    pub elo_coefficient_r: f64,
    /// Step size of a single rating update.
    pub update_step_k: f64,
    /// Score given to every freshly created decision step.
    pub initial_score: f64,
    /// Fixed score of the "reject and branch here" option during selection.
    pub rejection_score: f64,
    /// Softmax temperature of a node that has never been updated.
    pub default_temperature_tau0: f64,
}

impl Default for EloConfig {
    fn default() -> Self {
        Self {
            elo_coefficient_r: 173.72,
            update_step_k: 50.0,
            initial_score: 0.0,
            rejection_score: 0.0,
            default_temperature_tau0: 100.0,
        }
    }
}

impl EloConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("elo_coefficient_r", self.elo_coefficient_r),
            ("update_step_k", self.update_step_k),
            ("default_temperature_tau0", self.default_temperature_tau0),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be a positive finite number, got {value}"
                )));
            }
        }
        for (name, value) in [
            ("initial_score", self.initial_score),
            ("rejection_score", self.rejection_score),
        ] {
            if !value.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {value}")));
            }
        }
        Ok(())
    }
}

/// Probability that the first contestant beats the second.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExpectedScore(f64);

impl ExpectedScore {
    pub fn value(self) -> f64 {
        self.0
    }

    /// The same expectation seen from the other contestant.
    pub fn complement(self) -> Self {
        ExpectedScore(1.0 - self.0)
    }
}

/// Result of a pairwise comparison, from the first-named contestant's side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonOutcome {
    Loss,
    Draw,
    Win,
}

impl ComparisonOutcome {
    pub fn value(self) -> f64 {
        match self {
            ComparisonOutcome::Loss => 0.0,
            ComparisonOutcome::Draw => 0.5,
            ComparisonOutcome::Win => 1.0,
        }
    }

    /// Outcome for the second contestant.
    pub fn complement(self) -> Self {
        match self {
            ComparisonOutcome::Loss => ComparisonOutcome::Win,
            ComparisonOutcome::Draw => ComparisonOutcome::Draw,
            ComparisonOutcome::Win => ComparisonOutcome::Loss,
        }
    }

    pub fn from_value(value: f64) -> Result<Self> {
        if value == 0.0 {
            Ok(ComparisonOutcome::Loss)
        } else if value == 0.5 {
            Ok(ComparisonOutcome::Draw)
        } else if value == 1.0 {
            Ok(ComparisonOutcome::Win)
        } else {
            Err(Error::invalid(format!(
                "comparison outcome must be 0, 0.5 or 1, got {value}"
            )))
        }
    }
}

/// `1 / (1 + exp(-(v_x - v_y) / r))`.
///
/// Only the non-negative gap is evaluated directly; the other half of the
/// curve is its complement, so swapping the arguments sums to exactly 1.
pub fn expected_score(v_x: f64, v_y: f64, config: &EloConfig) -> Result<ExpectedScore> {
    if !v_x.is_finite() || !v_y.is_finite() {
        return Err(Error::invalid(format!("scores must be finite, got ({v_x}, {v_y})")));
    }
    let gap = v_x - v_y;
    if gap >= 0.0 {
        Ok(ExpectedScore(logistic(gap, config.elo_coefficient_r)))
    } else {
        Ok(ExpectedScore(1.0 - logistic(-gap, config.elo_coefficient_r)))
    }
}

fn logistic(gap: f64, r: f64) -> f64 {
    1.0 / (1.0 + (-gap / r).exp())
}

/// Applies one pairwise result to both scores.
///
/// `outcome_x` is `x`'s result; `y` receives the complement. The two deltas
/// are exact negations of each other, so the pair's total is conserved.
pub fn update_pair(v_x: f64, v_y: f64, outcome_x: ComparisonOutcome, config: &EloConfig) -> Result<(f64, f64)> {
    let expected_x = expected_score(v_x, v_y, config)?;
    let delta = config.update_step_k * (outcome_x.value() - expected_x.value());
    Ok((v_x + delta, v_y - delta))
}

/// Combines two order-swapped trials into one outcome for `a`.
///
/// Each trial winner is `Some(id)` or `None` for an abstaining judge. `a`
/// must win both trials to score a win, `b` both to score a loss; anything
/// else is a draw.
pub fn double_comparison_outcome<T: PartialEq + std::fmt::Debug>(
    first_trial_winner: Option<&T>,
    second_trial_winner: Option<&T>,
    a: &T,
    b: &T,
) -> Result<ComparisonOutcome> {
    for winner in [first_trial_winner, second_trial_winner].into_iter().flatten() {
        if winner != a && winner != b {
            return Err(Error::invalid(format!(
                "trial winner {winner:?} is neither {a:?} nor {b:?}"
            )));
        }
    }
    let outcome = match (first_trial_winner, second_trial_winner) {
        (Some(w1), Some(w2)) if w1 == a && w2 == a => ComparisonOutcome::Win,
        (Some(w1), Some(w2)) if w1 == b && w2 == b => ComparisonOutcome::Loss,
        _ => ComparisonOutcome::Draw,
    };
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> EloConfig {
        EloConfig::default()
    }

    #[test]
    fn defaults() {
        let c = cfg();
        assert_eq!(c.elo_coefficient_r, 173.72);
        assert_eq!(c.update_step_k, 50.0);
        assert_eq!(c.initial_score, 0.0);
        assert_eq!(c.rejection_score, 0.0);
        assert_eq!(c.default_temperature_tau0, 100.0);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = cfg();
        c.elo_coefficient_r = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.update_step_k = -1.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.default_temperature_tau0 = f64::NAN;
        assert!(c.validate().is_err());
    }

    #[test]
    fn expected_score_examples() {
        assert_eq!(expected_score(0.0, 0.0, &cfg()).unwrap().value(), 0.5);
        // mpmath, 30 digits: 0.909088491209491913...
        let e = expected_score(400.0, 0.0, &cfg()).unwrap().value();
        assert!((e - 0.909_088_491_209_492).abs() < 1e-6, "{e}");
        let sum =
            expected_score(100.0, 50.0, &cfg()).unwrap().value() + expected_score(50.0, 100.0, &cfg()).unwrap().value();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn non_finite_scores_rejected() {
        assert!(expected_score(f64::NAN, 0.0, &cfg()).is_err());
        assert!(expected_score(0.0, f64::INFINITY, &cfg()).is_err());
        assert!(update_pair(f64::NAN, 0.0, ComparisonOutcome::Win, &cfg()).is_err());
    }

    #[test]
    fn update_pair_examples() {
        let (x, y) = update_pair(0.0, 0.0, ComparisonOutcome::Win, &cfg()).unwrap();
        assert_eq!((x, y), (25.0, -25.0));
        let (x, y) = update_pair(0.0, 0.0, ComparisonOutcome::Draw, &cfg()).unwrap();
        assert_eq!((x, y), (0.0, 0.0));
        // mpmath: 404.5455754395254, -4.5455754395254
        let (x, y) = update_pair(400.0, 0.0, ComparisonOutcome::Win, &cfg()).unwrap();
        assert!((x - 404.545_575_439_525).abs() < 1e-3, "{x}");
        assert!((y + 4.545_575_439_525).abs() < 1e-3, "{y}");
    }

    #[test]
    fn update_matches_both_sided_formula() {
        let c = cfg();
        let (vx, vy) = (120.0, -35.0);
        for outcome in [ComparisonOutcome::Loss, ComparisonOutcome::Draw, ComparisonOutcome::Win] {
            let (x, y) = update_pair(vx, vy, outcome, &c).unwrap();
            let exy = 1.0 / (1.0 + (-(vx - vy) / c.elo_coefficient_r).exp());
            let eyx = 1.0 / (1.0 + (-(vy - vx) / c.elo_coefficient_r).exp());
            assert!((x - (vx + c.update_step_k * (outcome.value() - exy))).abs() < 1e-9);
            assert!((y - (vy + c.update_step_k * (outcome.complement().value() - eyx))).abs() < 1e-9);
        }
    }

    #[test]
    fn double_comparison_cases() {
        let (a, b) = ("a", "b");
        let f = |w1, w2| double_comparison_outcome(w1, w2, &a, &b).unwrap();
        assert_eq!(f(Some(&a), Some(&a)), ComparisonOutcome::Win);
        assert_eq!(f(Some(&b), Some(&b)), ComparisonOutcome::Loss);
        assert_eq!(f(Some(&a), Some(&b)), ComparisonOutcome::Draw);
        assert_eq!(f(Some(&b), Some(&a)), ComparisonOutcome::Draw);
        assert_eq!(f(None, Some(&a)), ComparisonOutcome::Draw);
        assert_eq!(f(None, None), ComparisonOutcome::Draw);
        assert!(double_comparison_outcome(Some(&"c"), Some(&a), &a, &b).is_err());
    }

    #[test]
    fn outcome_value_round_trip() {
        for o in [ComparisonOutcome::Loss, ComparisonOutcome::Draw, ComparisonOutcome::Win] {
            assert_eq!(ComparisonOutcome::from_value(o.value()).unwrap(), o);
            assert_eq!(o.value() + o.complement().value(), 1.0);
        }
        assert!(ComparisonOutcome::from_value(0.3).is_err());
    }

    proptest! {
        #[test]
        fn complementarity(x in -5000.0f64..5000.0, y in -5000.0f64..5000.0) {
            let s = expected_score(x, y, &cfg()).unwrap().value() + expected_score(y, x, &cfg()).unwrap().value();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn monotone_in_gap(y in -1000.0f64..1000.0, a in -1000.0f64..1000.0, d in 0.01f64..300.0) {
            let lo = expected_score(a, y, &cfg()).unwrap();
            let hi = expected_score(a + d, y, &cfg()).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn zero_sum(x in -5000.0f64..5000.0, y in -5000.0f64..5000.0, o in 0usize..3) {
            let outcome = [ComparisonOutcome::Loss, ComparisonOutcome::Draw, ComparisonOutcome::Win][o];
            let (nx, ny) = update_pair(x, y, outcome, &cfg()).unwrap();
            prop_assert!(((nx + ny) - (x + y)).abs() <= 1e-9);
        }
    }

    #[test]
    fn fixed_point_when_result_equals_expectation() {
        // Equal scores expect 0.5; a draw delivers exactly that.
        for v in [-300.0, 0.0, 42.5] {
            let (x, y) = update_pair(v, v, ComparisonOutcome::Draw, &cfg()).unwrap();
            assert_eq!((x, y), (v, v));
        }
    }
}
