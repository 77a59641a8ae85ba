//! Alignment scoring: normalized Euclidean agreement on [0, 100].

use super::EvalError;

/// Largest possible Euclidean distance between two answer vectors over
/// questions with the given option counts: sqrt(sum((K_i - 1)^2)).
pub fn max_distance(option_counts: &[u32]) -> Result<f64, EvalError> {
    if option_counts.is_empty() {
        return Err(EvalError::EmptyInput { what: "option_counts" });
    }
    for (i, &k) in option_counts.iter().enumerate() {
        if k < 2 {
            return Err(EvalError::OptionCountTooSmall { index: i, k });
        }
    }
    Ok(option_counts
        .iter()
        .map(|&k| {
            let span = f64::from(k - 1);
            span * span
        })
        .sum::<f64>()
        .sqrt())
}

/// Agreement between an answer vector and a reference vector:
/// `(1 - ||a - r||_2 / max_distance) * 100`. 100 means identical answers;
/// 0 means maximal disagreement on every question.
pub fn alignment_score(
    answers: &[u32],
    reference: &[u32],
    option_counts: &[u32],
) -> Result<f64, EvalError> {
    if answers.len() != reference.len() || answers.len() != option_counts.len() {
        return Err(EvalError::LengthMismatch {
            answers: answers.len(),
            reference: reference.len(),
            counts: option_counts.len(),
        });
    }
    let denominator = max_distance(option_counts)?;
    let mut sum_sq = 0.0;
    for (i, ((&a, &r), &k)) in answers
        .iter()
        .zip(reference.iter())
        .zip(option_counts.iter())
        .enumerate()
    {
        for value in [a, r] {
            if value < 1 || value > k {
                return Err(EvalError::AnswerOutOfRange { index: i, value, k });
            }
        }
        let diff = f64::from(a) - f64::from(r);
        sum_sq += diff * diff;
    }
    Ok((1.0 - sum_sq.sqrt() / denominator) * 100.0)
}

/// The in-range answer farthest from `reference`; lower index wins ties.
/// Used to substitute for completions that never yield a parseable answer.
pub fn worst_case_answer(reference: u32, k: u32) -> u32 {
    if reference - 1 >= k - reference {
        1
    } else {
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_distance_matches_hand_values() {
        assert!((max_distance(&[4, 4]).unwrap() - 4.242640687119285).abs() < 1e-12);
        assert_eq!(max_distance(&[2]).unwrap(), 1.0);
        // N identical K-option questions give (K-1) * sqrt(N).
        let n = 9;
        let k = 7;
        let expected = f64::from(k - 1) * f64::from(n as u32).sqrt();
        assert!((max_distance(&vec![k; n]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn max_distance_input_errors() {
        assert!(matches!(
            max_distance(&[]),
            Err(EvalError::EmptyInput { .. })
        ));
        assert!(matches!(
            max_distance(&[4, 1]),
            Err(EvalError::OptionCountTooSmall { index: 1, k: 1 })
        ));
    }

    #[test]
    fn score_matches_hand_oracle() {
        let s = alignment_score(&[1, 2, 3], &[4, 2, 3], &[4, 4, 4]).unwrap();
        assert!((s - 42.26497308103742).abs() < 1e-9, "got {s}");
    }

    #[test]
    fn score_endpoints() {
        assert_eq!(alignment_score(&[2, 3, 1], &[2, 3, 1], &[4, 4, 2]).unwrap(), 100.0);
        assert_eq!(alignment_score(&[1, 1], &[4, 4], &[4, 4]).unwrap(), 0.0);
        assert_eq!(alignment_score(&[4, 4], &[1, 1], &[4, 4]).unwrap(), 0.0);
    }

    #[test]
    fn score_rejects_bad_shapes() {
        assert!(matches!(
            alignment_score(&[1, 2], &[1], &[4, 4]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            alignment_score(&[5], &[1], &[4]),
            Err(EvalError::AnswerOutOfRange { index: 0, value: 5, k: 4 })
        ));
        assert!(matches!(
            alignment_score(&[0], &[1], &[4]),
            Err(EvalError::AnswerOutOfRange { value: 0, .. })
        ));
    }

    #[test]
    fn distance_monotonicity() {
        // Widening the gap on one coordinate strictly lowers the score.
        let counts = [6, 6, 6];
        let reference = [3, 3, 3];
        let mut last = alignment_score(&[3, 3, 3], &reference, &counts).unwrap();
        for a in [4, 5, 6] {
            let s = alignment_score(&[a, 3, 3], &reference, &counts).unwrap();
            assert!(s < last, "score did not decrease at a={a}");
            last = s;
        }
    }

    #[test]
    fn permutation_invariance() {
        let a = [1, 4, 2, 5];
        let r = [2, 2, 2, 3];
        let k = [5, 5, 4, 6];
        let base = alignment_score(&a, &r, &k).unwrap();
        let perm = [2, 0, 3, 1];
        let pa: Vec<u32> = perm.iter().map(|&i| a[i]).collect();
        let pr: Vec<u32> = perm.iter().map(|&i| r[i]).collect();
        let pk: Vec<u32> = perm.iter().map(|&i| k[i]).collect();
        assert!((alignment_score(&pa, &pr, &pk).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn worst_case_picks_far_end() {
        assert_eq!(worst_case_answer(1, 4), 4);
        assert_eq!(worst_case_answer(4, 4), 1);
        assert_eq!(worst_case_answer(2, 4), 4); // 1 and 4 are 1 and 2 away
        assert_eq!(worst_case_answer(3, 4), 1);
        assert_eq!(worst_case_answer(2, 3), 1); // tie: both ends 1 away
        assert_eq!(worst_case_answer(1, 2), 2);
        assert_eq!(worst_case_answer(2, 2), 1);
    }
}
