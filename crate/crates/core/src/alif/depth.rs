//! Leaf colors and the supervised depth rules.

use crate::iforest::{score_from_path_length, Forest};
use crate::{Error, Label, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Fraction of anomalies among the labeled points of a leaf:
/// `½·((L_o − L_i)/(L_o + L_i) + 1) = L_o/(L_o + L_i)`.
///
/// Evaluated in the reduced form so the result is the correctly rounded
/// fraction.
pub fn leaf_color(n_outlier: u32, n_inlier: u32) -> Result<f64> {
    let total = u64::from(n_outlier) + u64::from(n_inlier);
    if total == 0 {
        return Err(Error::Domain(
            "leaf color is undefined for a leaf without labels".into(),
        ));
    }
    Ok(f64::from(n_outlier) / total as f64)
}

/// Piece-wise linear depth: `h_max` at `k = 0`, `c` at `k = ½`, `h_min` at
/// `k = 1`. `c_psi` is clamped into `[h_min, h_max]` first.
pub fn supervised_depth_linear(k: f64, c_psi: f64, h_min: f64, h_max: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&k), "color {k} outside [0, 1]");
    let c = c_psi.clamp(h_min, h_max);
    let depth = if k < 0.5 {
        2.0 * k * (c - h_max) + h_max
    } else {
        2.0 * k * (h_min - c) + 2.0 * c - h_min
    };
    depth.clamp(h_min, h_max)
}

/// Logarithmic depth `−c·log2(k)`, saturated to `[h_min, h_max]`. `k = 0`
/// maps to `h_max`.
pub fn supervised_depth_log(k: f64, c_psi: f64, h_min: f64, h_max: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&k), "color {k} outside [0, 1]");
    let c = c_psi.clamp(h_min, h_max);
    if k <= 0.0 {
        return h_max;
    }
    // -c * log2(1) is -0.0; clamp handles it.
    (-c * k.log2()).clamp(h_min, h_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateStrategy {
    PiecewiseLinear,
    Logarithmic,
}

impl UpdateStrategy {
    pub const ALL: [UpdateStrategy; 2] = [UpdateStrategy::PiecewiseLinear, UpdateStrategy::Logarithmic];

    pub fn depth(self, k: f64, c_psi: f64, h_min: f64, h_max: f64) -> f64 {
        match self {
            UpdateStrategy::PiecewiseLinear => supervised_depth_linear(k, c_psi, h_min, h_max),
            UpdateStrategy::Logarithmic => supervised_depth_log(k, c_psi, h_min, h_max),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UpdateStrategy::PiecewiseLinear => "piecewise-linear",
            UpdateStrategy::Logarithmic => "logarithmic",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            UpdateStrategy::PiecewiseLinear => "lin",
            UpdateStrategy::Logarithmic => "log",
        }
    }
}

impl fmt::Display for UpdateStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UpdateStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "piecewise-linear" | "linear" | "lin" => Ok(UpdateStrategy::PiecewiseLinear),
            "logarithmic" | "log" => Ok(UpdateStrategy::Logarithmic),
            _ => Err(Error::Config(format!(
                "unknown update strategy {s:?} (valid: piecewise-linear, logarithmic)"
            ))),
        }
    }
}

/// Supervised bookkeeping of one leaf.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LeafState {
    pub n_inlier: u32,
    pub n_outlier: u32,
    /// Present once the leaf has received at least one label.
    pub supervised_depth: Option<f64>,
}

impl LeafState {
    pub fn is_touched(&self) -> bool {
        self.n_inlier + self.n_outlier > 0
    }
}

/// A leaf touched by a label update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TouchedLeaf {
    pub tree: usize,
    pub leaf_id: usize,
}

/// A fitted forest plus the per-leaf supervised overlay.
///
/// Reads never see a partially applied label as long as callers hold the
/// usual `&`/`&mut` discipline; [`SupervisedForest::apply_label`] updates every
/// tree before returning.
#[derive(Debug, Clone)]
pub struct SupervisedForest {
    forest: Arc<Forest>,
    update: UpdateStrategy,
    leaves: Vec<Vec<LeafState>>,
    c_clamp_events: u64,
}

impl SupervisedForest {
    pub fn new(forest: Arc<Forest>, update: UpdateStrategy) -> Self {
        let leaves = forest
            .trees()
            .iter()
            .map(|t| vec![LeafState::default(); t.n_leaves()])
            .collect();
        Self {
            forest,
            update,
            leaves,
            c_clamp_events: 0,
        }
    }

    pub fn forest(&self) -> &Arc<Forest> {
        &self.forest
    }

    pub fn update_strategy(&self) -> UpdateStrategy {
        self.update
    }

    pub fn leaf_state(&self, tree: usize, leaf_id: usize) -> &LeafState {
        &self.leaves[tree][leaf_id]
    }

    /// How many times `c(psi)` had to be clamped into a tree's depth range.
    pub fn c_clamp_events(&self) -> u64 {
        self.c_clamp_events
    }

    /// `(tree, leaf_id, state)` for every leaf carrying labels.
    pub fn touched_leaves(&self) -> impl Iterator<Item = (usize, usize, &LeafState)> + '_ {
        self.leaves.iter().enumerate().flat_map(|(t, leaves)| {
            leaves
                .iter()
                .enumerate()
                .filter(|(_, s)| s.is_touched())
                .map(move |(id, s)| (t, id, s))
        })
    }

    /// The leaf's supervised depth when it has one, otherwise its
    /// unsupervised path length.
    pub fn effective_path_length(&self, tree: usize, x: &[f64]) -> f64 {
        let leaf = self.forest.tree(tree).route(x);
        self.leaves[tree][leaf.leaf_id]
            .supervised_depth
            .unwrap_or_else(|| leaf.path_length())
    }

    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        let n = self.forest.n_trees();
        let total: f64 = (0..n).map(|t| self.effective_path_length(t, x)).sum();
        total / n as f64
    }

    pub fn anomaly_score(&self, x: &[f64]) -> f64 {
        score_from_path_length(self.mean_path_length(x), self.forest.c_psi())
    }

    /// Routes `x` once through every tree, bumps the leaf's label count and
    /// rewrites its depth. No other leaf changes.
    pub fn apply_label(&mut self, x: &[f64], label: Label) -> Vec<TouchedLeaf> {
        let c_psi = self.forest.c_psi();
        let forest = Arc::clone(&self.forest);
        forest
            .trees()
            .iter()
            .enumerate()
            .map(|(t, tree)| {
                let leaf_id = tree.route(x).leaf_id;
                let state = &mut self.leaves[t][leaf_id];
                match label {
                    Label::Anomaly => state.n_outlier += 1,
                    Label::Normal => state.n_inlier += 1,
                }
                let k = leaf_color(state.n_outlier, state.n_inlier).expect("leaf has a label");
                let (h_min, h_max) = (tree.h_min(), tree.h_max());
                if !(h_min..=h_max).contains(&c_psi) {
                    self.c_clamp_events += 1;
                }
                state.supervised_depth = Some(self.update.depth(k, c_psi, h_min, h_max));
                TouchedLeaf { tree: t, leaf_id }
            })
            .collect()
    }

    pub(crate) fn restore_leaf(&mut self, tree: usize, leaf_id: usize, state: LeafState) -> Result<()> {
        let slot = self
            .leaves
            .get_mut(tree)
            .and_then(|l| l.get_mut(leaf_id))
            .ok_or_else(|| Error::Format(format!("no leaf {leaf_id} in tree {tree}")))?;
        if state.is_touched() != state.supervised_depth.is_some() {
            return Err(Error::Format(format!(
                "leaf {leaf_id} of tree {tree}: supervised depth must be present iff labeled"
            )));
        }
        *slot = state;
        Ok(())
    }

    pub(crate) fn set_c_clamp_events(&mut self, n: u64) {
        self.c_clamp_events = n;
    }
}
