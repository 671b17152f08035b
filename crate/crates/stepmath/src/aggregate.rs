//! Final-score aggregation: weighted process/answer scoring, the rounding
//! operator, and the derived 0/1 answer-level score.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::ProblemType;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("scores must be non-empty")]
    EmptyScores,
    #[error("step scores must be 0 or 1 (got {0})")]
    InvalidStepScore(u8),
    #[error("invalid policy: weights must be >= 0 and sum to the scale")]
    InvalidPolicy,
}

/// Weighting between the process steps and the final answer.
///
/// The default is frozen at 6 (process) : 4 (answer) on a 0-10 scale; gold
/// computation always uses the default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationPolicy {
    pub process_weight: f64,
    pub answer_weight: f64,
    pub scale: f64,
}

impl Default for AggregationPolicy {
    fn default() -> Self {
        AggregationPolicy {
            process_weight: 6.0,
            answer_weight: 4.0,
            scale: 10.0,
        }
    }
}

impl AggregationPolicy {
    pub fn new(process_weight: f64, answer_weight: f64, scale: f64) -> Result<Self, AggregateError> {
        let policy = AggregationPolicy {
            process_weight,
            answer_weight,
            scale,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), AggregateError> {
        let ok = self.process_weight >= 0.0
            && self.answer_weight >= 0.0
            && self.scale >= 0.0
            && (self.process_weight + self.answer_weight - self.scale).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(AggregateError::InvalidPolicy)
        }
    }
}

/// Rounds to the nearest integer, ties away from zero.
pub fn round_half_away(x: f64) -> i64 {
    // f64::round already rounds half-way cases away from zero.
    x.round() as i64
}

/// True when the score formula is degenerate for this input: a single-step
/// calculation response has no process prefix to weight.
pub fn degenerate_calculation(problem_type: ProblemType, step_count: usize) -> bool {
    problem_type == ProblemType::Calculation && step_count == 1
}

/// Aggregates per-step 0/1 scores into the final grade.
///
/// Calculation splits the weight between the process prefix and the final
/// step; proof and open-ended weight all steps uniformly. A single-step
/// calculation falls back to scaling its only score, see
/// [`degenerate_calculation`].
pub fn aggregate_score(
    problem_type: ProblemType,
    scores: &[u8],
    policy: &AggregationPolicy,
) -> Result<u8, AggregateError> {
    if scores.is_empty() {
        return Err(AggregateError::EmptyScores);
    }
    if let Some(&bad) = scores.iter().find(|&&s| s > 1) {
        return Err(AggregateError::InvalidStepScore(bad));
    }
    let n = scores.len();
    let raw = match problem_type {
        ProblemType::Calculation if n == 1 => policy.scale * scores[0] as f64,
        ProblemType::Calculation => {
            let prefix: u32 = scores[..n - 1].iter().map(|&s| s as u32).sum();
            let answer = scores[n - 1] as f64;
            policy.process_weight * (prefix as f64 / (n - 1) as f64)
                + policy.answer_weight * answer
        }
        ProblemType::Proof | ProblemType::OpenEnded => {
            let total: u32 = scores.iter().map(|&s| s as u32).sum();
            policy.scale * (total as f64 / n as f64)
        }
    };
    Ok(round_half_away(raw) as u8)
}

/// Derives the answer-level 0/1 grade. For calculation problems this is the
/// final step's score; for proof and open-ended problems any final grade of
/// 5 or less maps to 0.
pub fn binary_score(
    problem_type: ProblemType,
    scores: &[u8],
    final_score: u8,
) -> Result<u8, AggregateError> {
    match problem_type {
        ProblemType::Calculation => {
            let last = scores.last().ok_or(AggregateError::EmptyScores)?;
            if *last > 1 {
                return Err(AggregateError::InvalidStepScore(*last));
            }
            Ok(*last)
        }
        ProblemType::Proof | ProblemType::OpenEnded => Ok(if final_score <= 5 { 0 } else { 1 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn agg(pt: ProblemType, scores: &[u8]) -> u8 {
        aggregate_score(pt, scores, &AggregationPolicy::default()).unwrap()
    }

    /// Integer-only evaluation of the scoring formula, used as an oracle.
    /// Half-away rounding of p/q computed as (2p + q) / (2q).
    fn oracle(pt: ProblemType, scores: &[u8]) -> u8 {
        let n = scores.len() as u64;
        let (p, q) = match pt {
            ProblemType::Calculation if n == 1 => (10 * scores[0] as u64, 1),
            ProblemType::Calculation => {
                let k: u64 = scores[..scores.len() - 1].iter().map(|&s| s as u64).sum();
                let g = scores[scores.len() - 1] as u64;
                (6 * k + 4 * g * (n - 1), n - 1)
            }
            _ => {
                let k: u64 = scores.iter().map(|&s| s as u64).sum();
                (10 * k, n)
            }
        };
        ((2 * p + q) / (2 * q)) as u8
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_half_away(6.5), 7);
        assert_eq!(round_half_away(6.4999), 6);
        assert_eq!(round_half_away(10.0), 10);
        assert_eq!(round_half_away(-0.5), -1);
        assert_eq!(round_half_away(0.0), 0);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(agg(ProblemType::Calculation, &[1, 1, 0, 0, 1]), 7);
        assert_eq!(agg(ProblemType::Proof, &[1, 1, 1]), 10);
        assert_eq!(agg(ProblemType::Proof, &[1, 1, 0]), 7);
        assert_eq!(agg(ProblemType::Calculation, &[0, 0, 0, 0]), 0);
    }

    #[test]
    fn degenerate_single_step_calculation() {
        assert!(degenerate_calculation(ProblemType::Calculation, 1));
        assert!(!degenerate_calculation(ProblemType::Calculation, 2));
        assert!(!degenerate_calculation(ProblemType::Proof, 1));
        assert_eq!(agg(ProblemType::Calculation, &[1]), 10);
        assert_eq!(agg(ProblemType::Calculation, &[0]), 0);
    }

    #[test]
    fn binary_examples() {
        assert_eq!(binary_score(ProblemType::Calculation, &[1, 0, 0], 2).unwrap(), 0);
        assert_eq!(binary_score(ProblemType::Proof, &[], 5).unwrap(), 0);
        assert_eq!(binary_score(ProblemType::Proof, &[], 6).unwrap(), 1);
        assert_eq!(binary_score(ProblemType::OpenEnded, &[], 5).unwrap(), 0);
        assert!(binary_score(ProblemType::Calculation, &[], 0).is_err());
    }

    #[test]
    fn rejects_invalid_inputs() {
        let policy = AggregationPolicy::default();
        assert!(matches!(
            aggregate_score(ProblemType::Proof, &[], &policy),
            Err(AggregateError::EmptyScores)
        ));
        assert!(matches!(
            aggregate_score(ProblemType::Proof, &[1, 2], &policy),
            Err(AggregateError::InvalidStepScore(2))
        ));
        assert!(AggregationPolicy::new(7.0, 4.0, 10.0).is_err());
        assert!(AggregationPolicy::new(-1.0, 11.0, 10.0).is_err());
        assert!(AggregationPolicy::new(5.0, 5.0, 10.0).is_ok());
    }

    fn score_vec() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0..=1u8, 1..=12)
    }

    fn problem_type() -> impl Strategy<Value = ProblemType> {
        prop_oneof![
            Just(ProblemType::Calculation),
            Just(ProblemType::Proof),
            Just(ProblemType::OpenEnded),
        ]
    }

    proptest! {
        #[test]
        fn result_in_range(pt in problem_type(), scores in score_vec()) {
            let g = agg(pt, &scores);
            prop_assert!(g <= 10);
        }

        #[test]
        fn matches_integer_oracle(pt in problem_type(), scores in score_vec()) {
            prop_assert_eq!(agg(pt, &scores), oracle(pt, &scores));
        }

        #[test]
        fn extremes(pt in problem_type(), n in 2usize..=12) {
            prop_assert_eq!(agg(pt, &vec![1u8; n]), 10);
            prop_assert_eq!(agg(pt, &vec![0u8; n]), 0);
        }

        #[test]
        fn flipping_final_answer_adds_four(prefix in proptest::collection::vec(0..=1u8, 1..=11)) {
            let mut wrong = prefix.clone();
            wrong.push(0);
            let mut right = prefix;
            right.push(1);
            let delta = agg(ProblemType::Calculation, &right) as i32
                - agg(ProblemType::Calculation, &wrong) as i32;
            prop_assert_eq!(delta, 4);
        }

        #[test]
        fn permutation_invariance(scores in proptest::collection::vec(0..=1u8, 2..=10), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

            // Calculation: permuting the prefix leaves the result unchanged.
            let mut permuted = scores.clone();
            let last = permuted.len() - 1;
            permuted[..last].shuffle(&mut rng);
            prop_assert_eq!(
                agg(ProblemType::Calculation, &scores),
                agg(ProblemType::Calculation, &permuted)
            );

            // Proof / open-ended: any permutation.
            let mut full = scores.clone();
            full.shuffle(&mut rng);
            prop_assert_eq!(agg(ProblemType::Proof, &scores), agg(ProblemType::Proof, &full));
            prop_assert_eq!(
                agg(ProblemType::OpenEnded, &scores),
                agg(ProblemType::OpenEnded, &full)
            );
        }

        #[test]
        fn monotone_under_fixes(pt in problem_type(), scores in score_vec(), idx in 0usize..12) {
            let idx = idx % scores.len();
            if scores[idx] == 0 {
                let mut fixed = scores.clone();
                fixed[idx] = 1;
                prop_assert!(agg(pt, &fixed) >= agg(pt, &scores));
            }
        }
    }
}
