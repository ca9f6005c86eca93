//! Evaluation metrics and cosine-similarity summaries.

use serde::{Deserialize, Serialize};

use crate::losses::LossError;

pub const COSINE_HISTOGRAM_BINS: usize = 50;

fn check(y: &[f64], yhat: &[f64]) -> Result<(), LossError> {
    if y.len() != yhat.len() {
        return Err(LossError::LengthMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(LossError::Empty);
    }
    Ok(())
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, LossError> {
    check(y, yhat)?;
    Ok((y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt())
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64, LossError> {
    check(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Counts over 50 equal bins spanning `[−1, 1]`; 1 falls in the last bin.
    pub histogram: Vec<usize>,
}

pub fn cosine_distribution(values: &[f64]) -> Result<CosineSummary, LossError> {
    if values.is_empty() {
        return Err(LossError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 { sorted[mid] } else { 0.5 * (sorted[mid - 1] + sorted[mid]) };
    let mut histogram = vec![0usize; COSINE_HISTOGRAM_BINS];
    let width = 2.0 / COSINE_HISTOGRAM_BINS as f64;
    for v in values {
        let k = (((v + 1.0) / width).floor().max(0.0) as usize).min(COSINE_HISTOGRAM_BINS - 1);
        histogram[k] += 1;
    }
    Ok(CosineSummary { count: values.len(), mean, median, std, min: sorted[0], max: sorted[sorted.len() - 1], histogram })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let (y, yh) = ([0.0, 0.0], [3.0, 4.0]);
        assert!((rmse(&y, &yh).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&y, &yh).unwrap(), 3.5);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0], &[]), Err(LossError::LengthMismatch(1, 0)));
    }

    #[test]
    fn cosine_summaries() {
        let c = cosine_distribution(&[0.7; 5]).unwrap();
        assert_eq!((c.std, c.min, c.max, c.median), (0.0, 0.7, 0.7, 0.7));
        assert!((c.mean - 0.7).abs() < 1e-15);
        let two = cosine_distribution(&[0.0, 1.0]).unwrap();
        assert_eq!((two.mean, two.median), (0.5, 0.5));
        assert_eq!(two.histogram[25], 1);
        assert_eq!(two.histogram[49], 1);
        assert_eq!(cosine_distribution(&[]), Err(LossError::Empty));
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..100)) {
            let (y, yh): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            prop_assert!(rmse(&y, &yh).unwrap() + 1e-9 >= mae(&y, &yh).unwrap());
        }

        #[test]
        fn metrics_match_naive_loops(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..100)) {
            let (y, yh): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let mut se = 0.0;
            let mut ae = 0.0;
            for i in 0..y.len() {
                se += (y[i] - yh[i]) * (y[i] - yh[i]);
                ae += (y[i] - yh[i]).abs();
            }
            let n = y.len() as f64;
            prop_assert!((rmse(&y, &yh).unwrap() - (se / n).sqrt()).abs() <= 1e-12 * (se / n).sqrt().max(1.0));
            prop_assert!((mae(&y, &yh).unwrap() - ae / n).abs() <= 1e-12 * (ae / n).max(1.0));
        }

        #[test]
        fn histogram_conserves_count(v in prop::collection::vec(-1.0f64..=1.0, 1..300)) {
            let c = cosine_distribution(&v).unwrap();
            prop_assert_eq!(c.histogram.iter().sum::<usize>(), v.len());
            prop_assert!(c.min <= c.median && c.median <= c.max);
        }
    }
}
