//! Ranking metrics with anomalies as the positive class.
//!
//! Both metrics walk the ranking in descending score order and treat a run
//! of equal scores as a single step.

use crate::{Error, Label, Result};

#[derive(Debug, Clone, Copy)]
pub struct ScoredLabels<'a> {
    scores: &'a [f64],
    labels: &'a [Label],
}

impl<'a> ScoredLabels<'a> {
    pub fn new(scores: &'a [f64], labels: &'a [Label]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Domain(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::Domain("no scored points".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Domain("scores contain NaN".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_anomalies(&self) -> usize {
        self.labels.iter().filter(|l| l.is_anomaly()).count()
    }

    /// `(n_anomalies, n_normals)` per distinct score, highest score first.
    fn tie_groups(&self) -> Vec<(u64, u64)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut groups: Vec<(u64, u64)> = Vec::new();
        let mut last = None;
        for i in order {
            let s = self.scores[i];
            // -0.0 and 0.0 are the same score
            if last != Some(s) {
                groups.push((0, 0));
                last = Some(s);
            }
            let g = groups.last_mut().expect("group pushed");
            if self.labels[i].is_anomaly() {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        groups
    }
}

/// `Σ_k (R_k − R_{k−1})·P_k` over the descending tie groups.
pub fn average_precision(sl: &ScoredLabels<'_>) -> Result<f64> {
    let positives = sl.n_anomalies() as u64;
    if positives == 0 {
        return Err(Error::Domain(
            "average precision needs at least one anomaly".into(),
        ));
    }
    let mut tp = 0u64;
    let mut seen = 0u64;
    let mut ap = 0.0;
    for (pos, neg) in sl.tie_groups() {
        tp += pos;
        seen += pos + neg;
        if pos > 0 {
            ap += (pos as f64 / positives as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

/// Mann–Whitney form of the ROC AUC: `P(s_a > s_n) + ½·P(s_a = s_n)`.
pub fn roc_auc(sl: &ScoredLabels<'_>) -> Result<f64> {
    let positives = sl.n_anomalies() as u64;
    let negatives = sl.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Domain(
            "ROC AUC needs both anomalies and normal points".into(),
        ));
    }
    // Twice the U statistic, accumulated as an integer.
    let mut twice_u: u128 = 0;
    let mut negatives_below = negatives;
    for (pos, neg) in sl.tie_groups() {
        negatives_below -= neg;
        twice_u += u128::from(pos) * (2 * u128::from(negatives_below) + u128::from(neg));
    }
    Ok(twice_u as f64 / (2.0 * positives as f64 * negatives as f64))
}
