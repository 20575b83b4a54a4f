//! Chance-corrected partition agreement and stream summaries.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("labelings have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("labelings are empty")]
    Empty,
    #[error("need at least {needed} stages, got {got}")]
    TooFewStages { needed: usize, got: usize },
    #[error("stage score R[{0}][{1}] is missing")]
    MissingScore(usize, usize),
}

/// Contingency table with row and column marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    pub n: u64,
    pub cells: Vec<Vec<u64>>,
    pub rows: Vec<u64>,
    pub cols: Vec<u64>,
}

fn dense_codes<T: Eq + Hash + Copy>(labels: &[T]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let codes = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (codes, map.len())
}

impl Contingency {
    pub fn new<A: Eq + Hash + Copy, B: Eq + Hash + Copy>(truth: &[A], pred: &[B]) -> Result<Self, MetricError> {
        if truth.len() != pred.len() {
            return Err(MetricError::LengthMismatch(truth.len(), pred.len()));
        }
        if truth.is_empty() {
            return Err(MetricError::Empty);
        }
        let (u, nu) = dense_codes(truth);
        let (v, nv) = dense_codes(pred);
        let mut cells = vec![vec![0u64; nv]; nu];
        for (&a, &b) in u.iter().zip(&v) {
            cells[a][b] += 1;
        }
        let rows = cells.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..nv).map(|j| cells.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            n: truth.len() as u64,
            cells,
            rows,
            cols,
        })
    }
}

fn pairs(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert and Arabie).
///
/// Returns 1 when the expected and maximal indices coincide, which only
/// happens for identical trivial partitions.
pub fn ari<A: Eq + Hash + Copy, B: Eq + Hash + Copy>(truth: &[A], pred: &[B]) -> Result<f64, MetricError> {
    let t = Contingency::new(truth, pred)?;
    let index: f64 = t.cells.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = t.rows.iter().map(|&c| pairs(c)).sum();
    let b: f64 = t.cols.iter().map(|&c| pairs(c)).sum();
    let total = pairs(t.n);
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = 0.5 * (a + b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

fn entropy_of(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information in nats.
pub fn mutual_information(t: &Contingency) -> f64 {
    let n = t.n as f64;
    let mut mi = 0.0;
    for (i, row) in t.cells.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (t.rows[i] as f64 * t.cols[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Expected mutual information under the hypergeometric model with fixed marginals.
pub fn expected_mutual_information(t: &Contingency) -> f64 {
    let n = t.n as usize;
    let mut log_fact = vec![0.0f64; n + 1];
    for k in 1..=n {
        log_fact[k] = log_fact[k - 1] + (k as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &t.rows {
        let a = a as usize;
        for &b in &t.cols {
            let b = b as usize;
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                let log_p = log_fact[a] + log_fact[b] + log_fact[n - a] + log_fact[n - b]
                    - log_fact[n]
                    - log_fact[nij]
                    - log_fact[a - nij]
                    - log_fact[b - nij]
                    - log_fact[n + nij - a - b];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with `max(H(U), H(V))` normalisation.
///
/// Two single-cluster labelings score 1. When the normaliser vanishes the
/// score is 1 for equal partitions and 0 otherwise.
pub fn ami<A: Eq + Hash + Copy, B: Eq + Hash + Copy>(truth: &[A], pred: &[B]) -> Result<f64, MetricError> {
    let t = Contingency::new(truth, pred)?;
    if t.rows.len() == 1 && t.cols.len() == 1 {
        return Ok(1.0);
    }
    let n = t.n as f64;
    let h = entropy_of(&t.rows, n).max(entropy_of(&t.cols, n));
    let mi = mutual_information(&t);
    let emi = expected_mutual_information(&t);
    let denom = h - emi;
    if denom.abs() < 1e-15 {
        let same = t.rows.len() == t.cols.len() && t.cells.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1);
        return Ok(if same { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / denom)
}

/// Mean of the per-stage summaries.
pub fn avg_inc(per_stage: &[f64]) -> Result<f64, MetricError> {
    if per_stage.is_empty() {
        return Err(MetricError::TooFewStages { needed: 1, got: 0 });
    }
    Ok(per_stage.iter().sum::<f64>() / per_stage.len() as f64)
}

/// `R[i][j]`: score on stage `i` after training through stage `j`, for `j >= i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageScoreMatrix {
    values: Vec<Vec<Option<f64>>>,
}

impl StageScoreMatrix {
    pub fn new(stages: usize) -> Self {
        Self {
            values: vec![vec![None; stages]; stages],
        }
    }

    pub fn stages(&self) -> usize {
        self.values.len()
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(j >= i, "score matrix is upper triangular");
        self.values[i][j] = Some(value);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values.get(i).and_then(|r| r.get(j)).copied().flatten()
    }
}

/// Backward transfer `1/(J-1) * sum_{i<J} (R[i][J] - R[i][i])`.
pub fn bwt(matrix: &StageScoreMatrix) -> Result<f64, MetricError> {
    let j = matrix.stages();
    if j < 2 {
        return Err(MetricError::TooFewStages { needed: 2, got: j });
    }
    let last = j - 1;
    let mut sum = 0.0;
    for i in 0..last {
        let end = matrix.get(i, last).ok_or(MetricError::MissingScore(i, last))?;
        let start = matrix.get(i, i).ok_or(MetricError::MissingScore(i, i))?;
        sum += end - start;
    }
    Ok(sum / last as f64)
}
