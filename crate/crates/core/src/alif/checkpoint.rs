use super::{HistoryEntry, LeafState, QueryStrategy, Session, SessionConfig, SupervisedForest, UpdateStrategy};
use crate::iforest::Forest;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

const FORMAT_TAG: &str = "alif-session/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRef {
    /// SHA-256 of the serialized model.
    pub fingerprint: String,
    pub n_trees: usize,
    pub psi: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafRecord {
    pub tree_id: usize,
    pub leaf_id: usize,
    pub n_inlier: u32,
    pub n_outlier: u32,
    pub supervised_depth: f64,
}

/// Serializable session state: touched leaves only, plus strategies, budget
/// and history. Stored depths are reused verbatim on load, so restored
/// scores match bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub forest: ForestRef,
    pub query_strategy: QueryStrategy,
    pub update_strategy: UpdateStrategy,
    pub budget: usize,
    pub leaves: Vec<LeafRecord>,
    pub history: Vec<HistoryEntry>,
    #[serde(default)]
    pub c_clamp_events: u64,
}

impl Checkpoint {
    pub(crate) fn from_session(session: &Session) -> Self {
        let config = session.config();
        let mut checkpoint = Checkpoint::from_overlay(session.model());
        checkpoint.query_strategy = config.query_strategy;
        checkpoint.budget = config.budget;
        checkpoint.history = session.history().to_vec();
        checkpoint
    }

    /// A checkpoint carrying only the leaf overlay of `model`.
    pub fn from_overlay(model: &SupervisedForest) -> Self {
        let forest = model.forest();
        Checkpoint {
            format: FORMAT_TAG.to_string(),
            forest: ForestRef {
                fingerprint: forest.fingerprint(),
                n_trees: forest.n_trees(),
                psi: forest.psi(),
                path: None,
            },
            query_strategy: QueryStrategy::MostAnomalous,
            update_strategy: model.update_strategy(),
            budget: 0,
            leaves: model
                .touched_leaves()
                .map(|(tree_id, leaf_id, s)| LeafRecord {
                    tree_id,
                    leaf_id,
                    n_inlier: s.n_inlier,
                    n_outlier: s.n_outlier,
                    supervised_depth: s.supervised_depth.expect("touched leaf has a depth"),
                })
                .collect(),
            history: Vec::new(),
            c_clamp_events: model.c_clamp_events(),
        }
    }

    pub fn with_forest_path(mut self, path: impl Into<String>) -> Self {
        self.forest.path = Some(path.into());
        self
    }

    pub fn config(&self) -> SessionConfig {
        SessionConfig {
            query_strategy: self.query_strategy,
            update_strategy: self.update_strategy,
            budget: self.budget,
        }
    }

    pub fn verify_forest(&self, forest: &Forest) -> Result<()> {
        if self.format != FORMAT_TAG {
            return Err(Error::Format(format!(
                "unsupported checkpoint format {:?}",
                self.format
            )));
        }
        if self.forest.fingerprint != forest.fingerprint() {
            return Err(Error::Format(
                "checkpoint was taken on a different forest".into(),
            ));
        }
        Ok(())
    }

    /// Rebuilds the supervised overlay on `forest`.
    pub fn overlay(&self, forest: Arc<Forest>) -> Result<SupervisedForest> {
        self.verify_forest(&forest)?;
        let mut model = SupervisedForest::new(forest, self.update_strategy);
        for leaf in &self.leaves {
            model.restore_leaf(
                leaf.tree_id,
                leaf.leaf_id,
                LeafState {
                    n_inlier: leaf.n_inlier,
                    n_outlier: leaf.n_outlier,
                    supervised_depth: Some(leaf.supervised_depth),
                },
            )?;
        }
        model.set_c_clamp_events(self.c_clamp_events);
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_json(&std::fs::read_to_string(path)?)
    }
}
