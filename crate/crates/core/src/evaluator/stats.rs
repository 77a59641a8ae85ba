//! Paired significance testing over per-country score means.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EvalError;

/// Two-sided paired t-test result. `degenerate` marks the zero-variance
/// cases where the statistic is defined by rule rather than computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
    pub degenerate: bool,
}

/// Two-sided paired t-test on per-country means. Inputs pair by position.
/// Zero-variance differences resolve by rule: all-zero differences give
/// p = 1.0; a constant nonzero difference gives the p -> 0 limit.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::SampleLengthMismatch { a: a.len(), b: b.len() });
    }
    if a.len() < 2 {
        return Err(EvalError::SampleTooShort { len: a.len() });
    }
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;

    if var == 0.0 {
        return Ok(if mean == 0.0 {
            PairedTTest { t: 0.0, p: 1.0, df, mean_diff: 0.0, degenerate: true }
        } else {
            PairedTTest {
                t: if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p: 0.0,
                df,
                mean_diff: mean,
                degenerate: true,
            }
        });
    }

    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1 and unit scale are always valid");
    let p = 2.0 * dist.cdf(-t.abs());
    Ok(PairedTTest { t, p, df, mean_diff: mean, degenerate: false })
}
