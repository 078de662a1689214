//! Split-based Inception Score over classifier probability rows.

use super::classifier::ShapeClassifier;
use super::MetricsError;
use crate::shapegen::ShapeImage;

/// N x C matrix of per-image class probabilities p(y|x).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    n: usize,
    c: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    pub fn new(n: usize, c: usize, data: Vec<f64>) -> Result<Self, MetricsError> {
        if data.len() != n * c {
            return Err(MetricsError::Contract(format!(
                "{} entries for a {n}x{c} matrix",
                data.len()
            )));
        }
        Ok(Self { n, c, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MetricsError> {
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(MetricsError::Contract("ragged probability rows".into()));
        }
        Self::new(rows.len(), c, rows.concat())
    }

    pub fn num_rows(&self) -> usize {
        self.n
    }

    pub fn num_classes(&self) -> usize {
        self.c
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.c..(i + 1) * self.c]
    }

    pub fn rows(&self) -> Vec<&[f64]> {
        (0..self.n).map(|i| self.row(i)).collect()
    }

    /// Every entry nonnegative, every row summing to 1 within 1e-9.
    pub fn validate(&self) -> Result<(), MetricsError> {
        for i in 0..self.n {
            let row = self.row(i);
            if row.iter().any(|&p| p < -1e-12) {
                return Err(MetricsError::Contract(format!("negative probability in row {i}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(MetricsError::Contract(format!(
                    "row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Split-based score: the mean and population standard deviation of
/// exp(mean KL(p(y|x) || p(y))) over the splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ISResult {
    pub is_avg: f64,
    pub is_std: f64,
    pub per_split_scores: Vec<f64>,
    pub n_splits: usize,
}

/// KL(p || q) in nats with the 0 * log(0/q) = 0 convention.
fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 })
        .sum()
}

/// Rows are partitioned in order into `n_splits` near-equal splits; the
/// marginal p(y) is computed within each split.
pub fn inception_score(probs: &ProbMatrix, n_splits: usize) -> Result<ISResult, MetricsError> {
    if n_splits == 0 {
        return Err(MetricsError::Config("n_splits must be positive".into()));
    }
    if probs.num_rows() < n_splits {
        return Err(MetricsError::Config(format!(
            "{} rows cannot fill {n_splits} splits",
            probs.num_rows()
        )));
    }
    probs.validate()?;

    let n = probs.num_rows();
    let c = probs.num_classes();
    let base = n / n_splits;
    let extra = n % n_splits;

    let mut per_split_scores = Vec::with_capacity(n_splits);
    let mut start = 0;
    for s in 0..n_splits {
        let len = base + usize::from(s < extra);
        let rows: Vec<&[f64]> = (start..start + len).map(|i| probs.row(i)).collect();
        start += len;

        let mut marginal = vec![0.0; c];
        for row in &rows {
            for (m, &p) in marginal.iter_mut().zip(*row) {
                *m += p;
            }
        }
        for m in &mut marginal {
            *m /= rows.len() as f64;
        }
        let mean_kl: f64 =
            rows.iter().map(|row| kl_divergence(row, &marginal)).sum::<f64>() / rows.len() as f64;
        per_split_scores.push(mean_kl.exp());
    }

    let is_avg = per_split_scores.iter().sum::<f64>() / n_splits as f64;
    let is_std = (per_split_scores
        .iter()
        .map(|s| (s - is_avg).powi(2))
        .sum::<f64>()
        / n_splits as f64)
        .sqrt();
    Ok(ISResult {
        is_avg,
        is_std,
        per_split_scores,
        n_splits,
    })
}

/// Scores an image collection: predict probabilities, then the split score.
pub fn score_collection(
    classifier: &ShapeClassifier,
    images: &[ShapeImage],
    n_splits: usize,
) -> Result<ISResult, MetricsError> {
    let probs = classifier.predict_probs(images)?;
    inception_score(&probs, n_splits)
}
