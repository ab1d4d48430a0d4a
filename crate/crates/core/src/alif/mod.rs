//! Active learning on top of a fitted forest.
//!
//! A [`Session`] owns the training points, the unlabeled pool and the
//! supervised leaf overlay. Each step builds the depth matrix of the pool,
//! picks a point with the configured [`QueryStrategy`], asks an [`Oracle`]
//! for its label and rewrites the depth of the leaf holding it in every tree.

mod checkpoint;
mod depth;
mod query;

pub use checkpoint::{Checkpoint, ForestRef, LeafRecord};
pub use depth::{
    leaf_color, supervised_depth_linear, supervised_depth_log, LeafState, SupervisedForest,
    TouchedLeaf, UpdateStrategy,
};
pub use query::{select_query, DepthMatrix, QueryStrategy, RowStats, Selection};

use crate::iforest::Forest;
use crate::{Error, Label, Result};
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::Arc;

/// Answer of a label source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Answer {
    Label(Label),
    /// The labeler declined; the point stays in the pool.
    Abstain,
}

/// A source of labels: a human behind the service, or ground truth.
pub trait Oracle {
    fn label(&mut self, index: usize, point: &[f64]) -> Result<Answer>;
}

impl<F> Oracle for F
where
    F: FnMut(usize, &[f64]) -> Result<Answer>,
{
    fn label(&mut self, index: usize, point: &[f64]) -> Result<Answer> {
        self(index, point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    pub ap: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// 1-based iteration number.
    pub iteration: usize,
    pub index: usize,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub query_strategy: QueryStrategy,
    pub update_strategy: UpdateStrategy,
    pub budget: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            query_strategy: QueryStrategy::MostAnomalous,
            update_strategy: UpdateStrategy::PiecewiseLinear,
            budget: 25,
        }
    }
}

/// Result of applying one label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelOutcome {
    pub entry: HistoryEntry,
    pub previous_score: f64,
    pub score: f64,
    pub touched: Vec<TouchedLeaf>,
}

pub(crate) fn with_slice<R>(row: ArrayView1<'_, f64>, f: impl FnOnce(&[f64]) -> R) -> R {
    match row.as_slice() {
        Some(s) => f(s),
        None => f(&row.to_vec()),
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    model: SupervisedForest,
    data: Arc<Array2<f64>>,
    pool: BTreeSet<usize>,
    labels: Vec<Option<Label>>,
    config: SessionConfig,
    history: Vec<HistoryEntry>,
}

impl Session {
    /// Starts a session with every training point unlabeled.
    pub fn new(forest: Arc<Forest>, data: Arc<Array2<f64>>, config: SessionConfig) -> Result<Self> {
        if data.ncols() != forest.n_features() {
            return Err(Error::FeatureMismatch {
                expected: forest.n_features(),
                got: data.ncols(),
            });
        }
        Ok(Self {
            model: SupervisedForest::new(forest, config.update_strategy),
            pool: (0..data.nrows()).collect(),
            labels: vec![None; data.nrows()],
            data,
            config,
            history: Vec::new(),
        })
    }

    pub fn model(&self) -> &SupervisedForest {
        &self.model
    }

    pub fn forest(&self) -> &Arc<Forest> {
        self.model.forest()
    }

    pub fn data(&self) -> &Arc<Array2<f64>> {
        &self.data
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn pool(&self) -> &BTreeSet<usize> {
        &self.pool
    }

    pub fn label_of(&self, index: usize) -> Option<Label> {
        self.labels.get(index).copied().flatten()
    }

    /// Labeled points in labeling order.
    pub fn labeled(&self) -> impl Iterator<Item = (usize, Label)> + '_ {
        self.history.iter().map(|e| (e.index, e.label))
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn remaining_budget(&self) -> usize {
        self.config.budget.saturating_sub(self.history.len())
    }

    pub fn point(&self, index: usize) -> ArrayView1<'_, f64> {
        self.data.row(index)
    }

    pub fn effective_path_length(&self, tree: usize, x: &[f64]) -> f64 {
        self.model.effective_path_length(tree, x)
    }

    pub fn anomaly_score(&self, x: &[f64]) -> f64 {
        self.model.anomaly_score(x)
    }

    /// Current scores of all training points.
    pub fn training_scores(&self) -> Vec<f64> {
        self.data
            .outer_iter()
            .map(|row| with_slice(row, |x| self.model.anomaly_score(x)))
            .collect()
    }

    /// Scores of arbitrary rows under the current overlay.
    pub fn score_rows(&self, rows: &Array2<f64>) -> Vec<f64> {
        rows.outer_iter()
            .map(|row| with_slice(row, |x| self.model.anomaly_score(x)))
            .collect()
    }

    /// H over the current pool, routing every pool point through every tree.
    pub fn depth_matrix(&self) -> Result<DepthMatrix> {
        if self.pool.is_empty() {
            return Err(Error::BudgetExhausted("the unlabeled pool is empty".into()));
        }
        let n_trees = self.model.forest().n_trees();
        let indices: Vec<usize> = self.pool.iter().copied().collect();
        let mut values = Array2::zeros((indices.len(), n_trees));
        for (j, &i) in indices.iter().enumerate() {
            with_slice(self.data.row(i), |x| {
                for t in 0..n_trees {
                    values[[j, t]] = self.model.effective_path_length(t, x);
                }
            });
        }
        DepthMatrix::new(indices, values)
    }

    fn check_budget(&self) -> Result<()> {
        if self.remaining_budget() == 0 {
            return Err(Error::BudgetExhausted(format!(
                "all {} queries have been used",
                self.config.budget
            )));
        }
        Ok(())
    }

    /// Selects the next point to label without changing the session.
    pub fn next_query(&self) -> Result<Selection> {
        self.check_budget()?;
        let h = self.depth_matrix()?;
        select_query(self.config.query_strategy, &h)
    }

    /// Applies the label of a pool point and moves it to the labeled set.
    pub fn apply_label(&mut self, index: usize, label: Label) -> Result<LabelOutcome> {
        self.check_budget()?;
        if index >= self.data.nrows() {
            return Err(Error::Protocol(format!(
                "point {index} is not in the training set ({} points)",
                self.data.nrows()
            )));
        }
        if !self.pool.contains(&index) {
            return Err(Error::Protocol(format!("point {index} is already labeled")));
        }
        let data = Arc::clone(&self.data);
        let (previous_score, touched, score) = with_slice(data.row(index), |x| {
            let before = self.model.anomaly_score(x);
            let touched = self.model.apply_label(x, label);
            (before, touched, self.model.anomaly_score(x))
        });
        self.pool.remove(&index);
        self.labels[index] = Some(label);
        let entry = HistoryEntry {
            iteration: self.history.len() + 1,
            index,
            label,
            metrics: None,
        };
        self.history.push(entry.clone());
        Ok(LabelOutcome {
            entry,
            previous_score,
            score,
            touched,
        })
    }

    /// One active-learning iteration: query, ask the oracle, update.
    ///
    /// If the oracle abstains or fails, the session is left unchanged.
    pub fn step(&mut self, oracle: &mut dyn Oracle) -> Result<LabelOutcome> {
        let selection = self.next_query()?;
        let answer = with_slice(self.data.row(selection.index), |x| {
            oracle.label(selection.index, x)
        })?;
        match answer {
            Answer::Label(label) => self.apply_label(selection.index, label),
            Answer::Abstain => Err(Error::Abstained(selection.index)),
        }
    }

    /// Attaches test metrics to the most recent history entry.
    pub fn record_metrics(&mut self, metrics: MetricSnapshot) -> Result<()> {
        let last = self
            .history
            .last_mut()
            .ok_or_else(|| Error::Protocol("no label has been applied yet".into()))?;
        last.metrics = Some(metrics);
        Ok(())
    }

    /// Training points routed, in at least one tree, to a leaf that `index`
    /// also reaches. Only these points can change score when `index` is
    /// labeled.
    pub fn co_located(&self, index: usize) -> Vec<usize> {
        let forest = self.model.forest();
        let target = with_slice(self.data.row(index), |x| {
            forest.trees().iter().map(|t| t.route(x).leaf_id).collect::<Vec<_>>()
        });
        (0..self.data.nrows())
            .filter(|&i| {
                with_slice(self.data.row(i), |x| {
                    forest
                        .trees()
                        .iter()
                        .zip(&target)
                        .any(|(t, &leaf)| t.route(x).leaf_id == leaf)
                })
            })
            .collect()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_session(self)
    }

    /// Rebuilds a session from a checkpoint taken on the same forest and
    /// training data.
    pub fn restore(forest: Arc<Forest>, data: Arc<Array2<f64>>, checkpoint: &Checkpoint) -> Result<Self> {
        checkpoint.verify_forest(&forest)?;
        let mut session = Session::new(forest, data, checkpoint.config())?;
        session.model = checkpoint.overlay(Arc::clone(session.model.forest()))?;
        for entry in &checkpoint.history {
            if !session.pool.remove(&entry.index) {
                return Err(Error::Format(format!(
                    "checkpoint labels point {} twice or out of range",
                    entry.index
                )));
            }
            session.labels[entry.index] = Some(entry.label);
        }
        session.history = checkpoint.history.clone();
        if session.history.len() > session.config.budget {
            return Err(Error::Format("checkpoint history exceeds its budget".into()));
        }
        Ok(session)
    }
}
