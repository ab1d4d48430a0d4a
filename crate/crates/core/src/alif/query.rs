//! The depth matrix H and the two query policies.

use crate::{Error, Result};
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Relative tolerance under which two row statistics count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryStrategy {
    /// Smallest mean effective depth, i.e. highest current anomaly score.
    MostAnomalous,
    /// Largest spread of effective depth across trees.
    MaxUncertainty,
}

impl QueryStrategy {
    pub const ALL: [QueryStrategy; 2] = [QueryStrategy::MostAnomalous, QueryStrategy::MaxUncertainty];

    pub fn name(self) -> &'static str {
        match self {
            QueryStrategy::MostAnomalous => "most-anomalous",
            QueryStrategy::MaxUncertainty => "max-uncertainty",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            QueryStrategy::MostAnomalous => "anom",
            QueryStrategy::MaxUncertainty => "unc",
        }
    }
}

impl fmt::Display for QueryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "most-anomalous" | "anomalous" | "anom" => Ok(QueryStrategy::MostAnomalous),
            "max-uncertainty" | "uncertainty" | "unc" => Ok(QueryStrategy::MaxUncertainty),
            _ => Err(Error::Config(format!(
                "unknown query strategy {s:?} (valid: most-anomalous, max-uncertainty)"
            ))),
        }
    }
}

/// Effective path lengths of the unlabeled pool: one row per pool point
/// (ascending pool index), one column per tree.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMatrix {
    indices: Vec<usize>,
    values: Array2<f64>,
}

impl DepthMatrix {
    pub fn new(indices: Vec<usize>, values: Array2<f64>) -> Result<Self> {
        if indices.len() != values.nrows() {
            return Err(Error::Format(format!(
                "{} row indices for a matrix with {} rows",
                indices.len(),
                values.nrows()
            )));
        }
        if values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::Domain("depth matrix entries must be >= 0".into()));
        }
        Ok(Self { indices, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_trees(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    /// Pool index of every row.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.row(j)
    }

    pub fn row_mean(&self, j: usize) -> f64 {
        mean(self.values.row(j))
    }

    /// Population standard deviation (divides by the number of trees).
    pub fn row_std(&self, j: usize) -> f64 {
        let row = self.values.row(j);
        let mu = mean(row);
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / row.len() as f64;
        var.sqrt()
    }

    pub fn row_stats(&self, j: usize) -> RowStats {
        let row = self.values.row(j);
        RowStats {
            mean: self.row_mean(j),
            std: self.row_std(j),
            min: row.iter().copied().fold(f64::INFINITY, f64::min),
            max: row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

fn mean(row: ArrayView1<'_, f64>) -> f64 {
    row.sum() / row.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// The point chosen by a query policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    /// Row of H.
    pub row: usize,
    /// Pool (training set) index of the point.
    pub index: usize,
    pub stats: RowStats,
}

fn strictly_better(candidate: f64, best: f64, larger_wins: bool) -> bool {
    let margin = TIE_TOLERANCE * candidate.abs().max(best.abs()).max(f64::MIN_POSITIVE);
    if larger_wins {
        candidate > best + margin
    } else {
        candidate < best - margin
    }
}

/// Picks the next point to label. Ties go to the lowest pool index.
pub fn select_query(strategy: QueryStrategy, h: &DepthMatrix) -> Result<Selection> {
    if h.is_empty() {
        return Err(Error::BudgetExhausted("the unlabeled pool is empty".into()));
    }
    let key = |j: usize| match strategy {
        QueryStrategy::MostAnomalous => h.row_mean(j),
        QueryStrategy::MaxUncertainty => h.row_std(j),
    };
    let larger_wins = strategy == QueryStrategy::MaxUncertainty;

    let mut best_row = 0;
    let mut best = key(0);
    for j in 1..h.n_rows() {
        let v = key(j);
        let better = strictly_better(v, best, larger_wins);
        let tied = !better && !strictly_better(best, v, larger_wins);
        if better || (tied && h.indices[j] < h.indices[best_row]) {
            best_row = j;
            best = v;
        }
    }
    Ok(Selection {
        row: best_row,
        index: h.indices[best_row],
        stats: h.row_stats(best_row),
    })
}
