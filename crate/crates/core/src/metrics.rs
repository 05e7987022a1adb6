//! Quadratic Weighted Kappa and supporting agreement statistics.
//!
//! QWK is computed over the full declared score range, not just the observed
//! scores, matching the evaluation published with the ASAP competition:
//!
//! κ = 1 − (Σᵢⱼ wᵢⱼ·Oᵢⱼ) / (Σᵢⱼ wᵢⱼ·Eᵢⱼ)
//!
//! with wᵢⱼ = (i−j)²/(N−1)², O the observed contingency matrix (actual on
//! rows, predicted on columns), and E the outer product of the marginals
//! scaled to O's total.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {predicted} predicted vs {actual} actual")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("empty score vectors")]
    Empty,
    #[error("score {score} outside declared range {min}..={max}")]
    OutOfRange { score: i64, min: i64, max: i64 },
    #[error("degenerate range {min}..={max}: kappa undefined for a single category")]
    SingleCategory { min: i64, max: i64 },
}

/// Kappa value plus a degeneracy marker for the constant-vector edge cases,
/// which an unattended cross-validation run must tolerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    pub degenerate: bool,
}

fn check_inputs(
    predicted: &[i64],
    actual: &[i64],
    min_score: i64,
    max_score: i64,
) -> Result<(), MetricsError> {
    if predicted.len() != actual.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    if min_score >= max_score {
        return Err(MetricsError::SingleCategory {
            min: min_score,
            max: max_score,
        });
    }
    for &s in predicted.iter().chain(actual) {
        if s < min_score || s > max_score {
            return Err(MetricsError::OutOfRange {
                score: s,
                min: min_score,
                max: max_score,
            });
        }
    }
    Ok(())
}

/// Contingency matrix over the declared range: entry `(i, j)` counts pairs
/// with `actual = i + min` and `predicted = j + min`.
pub fn confusion_matrix(
    predicted: &[i64],
    actual: &[i64],
    min_score: i64,
    max_score: i64,
) -> Result<Vec<Vec<u64>>, MetricsError> {
    check_inputs(predicted, actual, min_score, max_score)?;
    let n = (max_score - min_score + 1) as usize;
    let mut matrix = vec![vec![0u64; n]; n];
    for (&p, &a) in predicted.iter().zip(actual) {
        matrix[(a - min_score) as usize][(p - min_score) as usize] += 1;
    }
    Ok(matrix)
}

/// Quadratic Weighted Kappa in [−1, 1].
///
/// When both vectors are constant the chance-agreement denominator vanishes;
/// the result is totalized as 1.0 for equal constants and 0.0 for unequal
/// ones, flagged as degenerate either way.
pub fn qwk(
    predicted: &[i64],
    actual: &[i64],
    min_score: i64,
    max_score: i64,
) -> Result<Kappa, MetricsError> {
    let observed = confusion_matrix(predicted, actual, min_score, max_score)?;
    let n = observed.len();
    let total = predicted.len() as f64;

    // Both vectors constant: chance agreement is ill-defined (the expected
    // matrix weights vanish when the constants coincide), so totalize.
    let predicted_constant = predicted.iter().all(|&s| s == predicted[0]);
    let actual_constant = actual.iter().all(|&s| s == actual[0]);
    if predicted_constant && actual_constant {
        let value = if predicted[0] == actual[0] { 1.0 } else { 0.0 };
        return Ok(Kappa {
            value,
            degenerate: true,
        });
    }

    let mut actual_marginal = vec![0.0; n];
    let mut predicted_marginal = vec![0.0; n];
    for (i, row) in observed.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            actual_marginal[i] += count as f64;
            predicted_marginal[j] += count as f64;
        }
    }

    let denom_scale = ((n - 1) * (n - 1)) as f64;
    let mut weighted_observed = 0.0;
    let mut weighted_expected = 0.0;
    for i in 0..n {
        for j in 0..n {
            let weight = ((i as f64) - (j as f64)).powi(2) / denom_scale;
            weighted_observed += weight * observed[i][j] as f64;
            weighted_expected += weight * actual_marginal[i] * predicted_marginal[j] / total;
        }
    }

    Ok(Kappa {
        value: 1.0 - weighted_observed / weighted_expected,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent reference: explicit double loops over score pairs, no
    /// shared code with the implementation above.
    pub(crate) fn qwk_brute_force(
        predicted: &[i64],
        actual: &[i64],
        min: i64,
        max: i64,
    ) -> f64 {
        let n = (max - min + 1) as usize;
        let count = predicted.len() as f64;
        let mut o = vec![vec![0.0f64; n]; n];
        for k in 0..predicted.len() {
            o[(actual[k] - min) as usize][(predicted[k] - min) as usize] += 1.0;
        }
        let mut hist_a = vec![0.0f64; n];
        let mut hist_p = vec![0.0f64; n];
        for k in 0..predicted.len() {
            hist_a[(actual[k] - min) as usize] += 1.0;
            hist_p[(predicted[k] - min) as usize] += 1.0;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for j in 0..n {
                let w = ((i as f64 - j as f64) * (i as f64 - j as f64))
                    / ((n as f64 - 1.0) * (n as f64 - 1.0));
                num += w * o[i][j];
                den += w * hist_a[i] * hist_p[j] / count;
            }
        }
        1.0 - num / den
    }

    #[test]
    fn perfect_agreement_is_exactly_one() {
        let scores = vec![1, 4, 2, 0, 4, 3];
        let kappa = qwk(&scores, &scores, 0, 4).unwrap();
        assert_eq!(kappa.value, 1.0);
        assert!(!kappa.degenerate);
    }

    #[test]
    fn two_element_anti_diagonal_is_minus_one() {
        // Hand computation: O is purely off-diagonal, E is uniform over the
        // 2x2 grid, so the ratio is 2 and kappa is exactly -1.
        let kappa = qwk(&[1, 2], &[2, 1], 1, 2).unwrap();
        assert_eq!(kappa.value, -1.0);
    }

    #[test]
    fn matches_brute_force_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..200 {
            let len = rng.gen_range(2..=300);
            let min = rng.gen_range(-3..=2);
            let max = min + rng.gen_range(1..=10);
            let predicted: Vec<i64> = (0..len).map(|_| rng.gen_range(min..=max)).collect();
            let actual: Vec<i64> = (0..len).map(|_| rng.gen_range(min..=max)).collect();
            let kappa = qwk(&predicted, &actual, min, max).unwrap();
            if kappa.degenerate {
                continue;
            }
            let reference = qwk_brute_force(&predicted, &actual, min, max);
            assert!(
                (kappa.value - reference).abs() < 1e-12,
                "qwk {} vs brute force {}",
                kappa.value,
                reference
            );
        }
    }

    #[test]
    fn constant_vector_conventions() {
        let equal = qwk(&[3, 3, 3], &[3, 3, 3], 0, 4).unwrap();
        assert_eq!(equal.value, 1.0);
        assert!(equal.degenerate);
        let unequal = qwk(&[3, 3, 3], &[1, 1, 1], 0, 4).unwrap();
        assert_eq!(unequal.value, 0.0);
        assert!(unequal.degenerate);
    }

    #[test]
    fn errors_on_bad_inputs() {
        assert!(matches!(
            qwk(&[1], &[1, 2], 0, 4),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            qwk(&[5], &[1], 0, 4),
            Err(MetricsError::OutOfRange { score: 5, .. })
        ));
        assert!(matches!(
            qwk(&[0], &[0], 0, 0),
            Err(MetricsError::SingleCategory { .. })
        ));
        assert!(matches!(qwk(&[], &[], 0, 4), Err(MetricsError::Empty)));
    }

    #[test]
    fn confusion_matrix_counts_and_row_sums() {
        let matrix = confusion_matrix(&[3], &[3], 0, 4).unwrap();
        assert_eq!(matrix[3][3], 1);
        assert_eq!(matrix.iter().flatten().sum::<u64>(), 1);

        let predicted = vec![0, 1, 2, 2, 1];
        let actual = vec![0, 1, 1, 2, 2];
        let matrix = confusion_matrix(&predicted, &actual, 0, 2).unwrap();
        // Row sums reproduce the actual-score histogram.
        for score in 0..=2i64 {
            let expected = actual.iter().filter(|&&a| a == score).count() as u64;
            let row_sum: u64 = matrix[score as usize].iter().sum();
            assert_eq!(row_sum, expected, "row {score}");
        }
    }

    #[test]
    fn confusion_matrix_matches_pairwise_tally_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let len = rng.gen_range(1..=80);
            let min = rng.gen_range(-4..=0);
            let max = min + rng.gen_range(1..=9);
            let predicted: Vec<i64> = (0..len).map(|_| rng.gen_range(min..=max)).collect();
            let actual: Vec<i64> = (0..len).map(|_| rng.gen_range(min..=max)).collect();
            let matrix = confusion_matrix(&predicted, &actual, min, max).unwrap();
            for a in min..=max {
                for p in min..=max {
                    let tally = predicted
                        .iter()
                        .zip(&actual)
                        .filter(|&(&pi, &ai)| pi == p && ai == a)
                        .count() as u64;
                    assert_eq!(matrix[(a - min) as usize][(p - min) as usize], tally);
                }
            }
            assert_eq!(
                matrix.iter().flatten().sum::<u64>() as usize,
                predicted.len()
            );
        }
    }

    proptest::proptest! {
        #[test]
        fn kappa_is_symmetric_and_shift_invariant(
            seed in 0u64..5000,
            len in 2usize..40,
            width in 1i64..8,
            shift in -5i64..5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<i64> = (0..len).map(|_| rng.gen_range(0..=width)).collect();
            let b: Vec<i64> = (0..len).map(|_| rng.gen_range(0..=width)).collect();
            let ab = qwk(&a, &b, 0, width).unwrap();
            let ba = qwk(&b, &a, 0, width).unwrap();
            proptest::prop_assert!((ab.value - ba.value).abs() < 1e-12);

            let a2: Vec<i64> = a.iter().map(|s| s + shift).collect();
            let b2: Vec<i64> = b.iter().map(|s| s + shift).collect();
            let shifted = qwk(&a2, &b2, shift, width + shift).unwrap();
            proptest::prop_assert!((ab.value - shifted.value).abs() < 1e-12);
        }
    }
}
