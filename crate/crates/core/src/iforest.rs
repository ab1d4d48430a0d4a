//! Unsupervised Isolation Forest.
//!
//! Trees are stored as flat node arenas (root at index 0) so that a fitted
//! forest serializes to per-tree node arrays and can be shared read-only
//! across threads. Leaves are numbered `0..n_leaves` within their tree; the
//! active-learning overlay in [`crate::alif`] indexes its per-leaf state by
//! that id.

use crate::{Error, Result};
use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

/// Euler–Mascheroni constant, truncated as in the reference implementation.
pub const EULER_GAMMA: f64 = 0.5772156649;

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_PSI: usize = 256;

const FORMAT_TAG: &str = "alif-forest/1";

/// `H(i) ≈ ln(i) + γ`, used for every `i ≥ 1`.
pub fn harmonic(i: f64) -> f64 {
    i.ln() + EULER_GAMMA
}

/// Average path length of an unsuccessful search in a binary search tree
/// built over `psi` points: `2·H(psi−1) − 2(psi−1)/psi`.
pub fn c_factor(psi: usize) -> Result<f64> {
    if psi < 2 {
        return Err(Error::Domain(format!("c(psi) needs psi >= 2, got {psi}")));
    }
    Ok(unsuccessful_search(psi))
}

// Caller guarantees n >= 2.
fn unsuccessful_search(n: usize) -> f64 {
    let n = n as f64;
    2.0 * harmonic(n - 1.0) - 2.0 * (n - 1.0) / n
}

/// Path-length correction for a leaf holding `size` training points.
pub fn leaf_adjustment(size: usize) -> f64 {
    if size > 1 {
        unsuccessful_search(size)
    } else {
        0.0
    }
}

/// `2^(−E/c)`: maps a mean path length to an anomaly score in (0, 1).
pub fn score_from_path_length(mean_path_length: f64, c_psi: f64) -> f64 {
    (-mean_path_length / c_psi).exp2()
}

/// Ceiling of `log2(psi)`, the height limit of every tree.
pub fn height_limit(psi: usize) -> u32 {
    let mut limit = 0;
    while (1usize << limit) < psi {
        limit += 1;
    }
    limit
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Internal {
        split_feature: usize,
        split_value: f64,
        left: usize,
        right: usize,
        depth: u32,
    },
    Leaf {
        depth: u32,
        size: usize,
        leaf_id: usize,
    },
}

impl Node {
    pub fn depth(&self) -> u32 {
        match *self {
            Node::Internal { depth, .. } | Node::Leaf { depth, .. } => depth,
        }
    }
}

/// The leaf a point was routed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeafRef {
    pub leaf_id: usize,
    pub depth: u32,
    pub size: usize,
}

impl LeafRef {
    /// Unsupervised path length: depth plus the correction for the
    /// unresolved points sharing the leaf.
    pub fn path_length(&self) -> f64 {
        f64::from(self.depth) + leaf_adjustment(self.size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    leaves: Vec<usize>,
    min_depth: u32,
    max_depth: u32,
    h_min: f64,
    h_max: f64,
}

impl Tree {
    fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Format("tree has no nodes".into()));
        }
        let mut leaves = Vec::new();
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                Node::Internal { left, right, .. } => {
                    if left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                        return Err(Error::Format(format!(
                            "node {i} has invalid child indices ({left}, {right})"
                        )));
                    }
                }
                Node::Leaf { leaf_id, .. } => {
                    if leaf_id >= leaves.len() {
                        leaves.resize(leaf_id + 1, usize::MAX);
                    }
                    if leaves[leaf_id] != usize::MAX {
                        return Err(Error::Format(format!("duplicate leaf_id {leaf_id}")));
                    }
                    leaves[leaf_id] = i;
                }
            }
        }
        if leaves.contains(&usize::MAX) {
            return Err(Error::Format("leaf ids are not contiguous".into()));
        }

        let mut tree = Tree {
            nodes,
            leaves,
            min_depth: u32::MAX,
            max_depth: 0,
            h_min: f64::INFINITY,
            h_max: f64::NEG_INFINITY,
        };
        for leaf in tree.leaves().collect::<Vec<_>>() {
            tree.min_depth = tree.min_depth.min(leaf.depth);
            tree.max_depth = tree.max_depth.max(leaf.depth);
            let h = leaf.path_length();
            tree.h_min = tree.h_min.min(h);
            tree.h_max = tree.h_max.max(h);
        }
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf(&self, leaf_id: usize) -> LeafRef {
        match self.nodes[self.leaves[leaf_id]] {
            Node::Leaf {
                depth,
                size,
                leaf_id,
            } => LeafRef {
                leaf_id,
                depth,
                size,
            },
            Node::Internal { .. } => unreachable!("leaf index points at an internal node"),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = LeafRef> + '_ {
        (0..self.leaves.len()).map(|id| self.leaf(id))
    }

    /// Routes `x` from the root: `x[f] < split_value` goes left.
    pub fn route(&self, x: &[f64]) -> LeafRef {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Internal {
                    split_feature,
                    split_value,
                    left,
                    right,
                    ..
                } => {
                    i = if x[split_feature] < split_value {
                        left
                    } else {
                        right
                    };
                }
                Node::Leaf {
                    depth,
                    size,
                    leaf_id,
                } => {
                    return LeafRef {
                        leaf_id,
                        depth,
                        size,
                    }
                }
            }
        }
    }

    pub fn path_length(&self, x: &[f64]) -> f64 {
        self.route(x).path_length()
    }

    /// Shallowest and deepest leaf, in edges from the root.
    pub fn depth_range(&self) -> (u32, u32) {
        (self.min_depth, self.max_depth)
    }

    /// Smallest unsupervised path length over the tree's leaves.
    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    /// Largest unsupervised path length over the tree's leaves.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }
}

struct TreeBuilder<'a> {
    data: ArrayView2<'a, f64>,
    limit: u32,
    nodes: Vec<Node>,
    n_leaves: usize,
}

impl TreeBuilder<'_> {
    fn push_leaf(&mut self, depth: u32, size: usize) -> usize {
        self.nodes.push(Node::Leaf {
            depth,
            size,
            leaf_id: self.n_leaves,
        });
        self.n_leaves += 1;
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: &mut [usize], depth: u32, rng: &mut ChaCha8Rng) -> usize {
        if rows.len() <= 1 || depth >= self.limit {
            return self.push_leaf(depth, rows.len());
        }

        let splittable: Vec<(usize, f64, f64)> = (0..self.data.ncols())
            .filter_map(|f| {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    let v = self.data[[r, f]];
                    (lo.min(v), hi.max(v))
                });
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if splittable.is_empty() {
            return self.push_leaf(depth, rows.len());
        }

        let (feature, lo, hi) = splittable[rng.random_range(0..splittable.len())];
        // u in [0, 1) gives a threshold in (lo, hi]; both children stay nonempty.
        let u: f64 = rng.random();
        let mut split_value = hi - u * (hi - lo);
        if split_value <= lo {
            split_value = hi;
        }

        let mut n_left = 0;
        for i in 0..rows.len() {
            if self.data[[rows[i], feature]] < split_value {
                rows.swap(i, n_left);
                n_left += 1;
            }
        }

        let index = self.nodes.len();
        self.nodes.push(Node::Internal {
            split_feature: feature,
            split_value,
            left: 0,
            right: 0,
            depth,
        });
        let (left_rows, right_rows) = rows.split_at_mut(n_left);
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        if let Node::Internal {
            left: l, right: r, ..
        } = &mut self.nodes[index]
        {
            *l = left;
            *r = right;
        }
        index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Subsample size; `None` means `min(256, n_x)`.
    pub psi: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            psi: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn resolve_psi(&self, n_x: usize) -> usize {
        self.psi.unwrap_or_else(|| DEFAULT_PSI.min(n_x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    psi: usize,
    n_features: usize,
    c_psi: f64,
}

impl Forest {
    /// Grows `n_trees` isolation trees, each on an independent subsample of
    /// `psi` rows drawn without replacement.
    pub fn fit(data: ArrayView2<'_, f64>, config: &ForestConfig) -> Result<Forest> {
        let (n_x, m) = data.dim();
        let psi = config.resolve_psi(n_x);
        if config.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if m == 0 {
            return Err(Error::Config("dataset has no features".into()));
        }
        if psi < 2 {
            return Err(Error::Config(format!("psi must be at least 2, got {psi}")));
        }
        if psi > n_x {
            return Err(Error::Config(format!(
                "psi ({psi}) exceeds the number of rows ({n_x})"
            )));
        }
        let c_psi = c_factor(psi)?;
        let limit = height_limit(psi);

        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(t as u64);
                let mut rows = rand::seq::index::sample(&mut rng, n_x, psi).into_vec();
                let mut builder = TreeBuilder {
                    data,
                    limit,
                    nodes: Vec::with_capacity(2 * psi),
                    n_leaves: 0,
                };
                builder.grow(&mut rows, 0, &mut rng);
                Tree::from_nodes(builder.nodes)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Forest {
            trees,
            psi,
            n_features: m,
            c_psi,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree(&self, t: usize) -> &Tree {
        &self.trees[t]
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn psi(&self) -> usize {
        self.psi
    }

    pub fn c_psi(&self) -> f64 {
        self.c_psi
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn height_limit(&self) -> u32 {
        height_limit(self.psi)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn path_length_unsup(&self, tree_index: usize, x: &[f64]) -> f64 {
        self.trees[tree_index].path_length(x)
    }

    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.path_length(x)).sum();
        total / self.trees.len() as f64
    }

    pub fn anomaly_score(&self, x: &[f64]) -> f64 {
        score_from_path_length(self.mean_path_length(x), self.c_psi)
    }

    pub fn score_rows(&self, data: ArrayView2<'_, f64>) -> Vec<f64> {
        data.outer_iter()
            .map(|row| crate::alif::with_slice(row, |x| self.anomaly_score(x)))
            .collect()
    }

    fn to_record(&self) -> ForestRecord {
        ForestRecord {
            format: FORMAT_TAG.to_string(),
            psi: self.psi,
            n_trees: self.trees.len(),
            n_features: self.n_features,
            c_psi: self.c_psi,
            trees: self
                .trees
                .iter()
                .map(|t| TreeRecord {
                    h_min: t.h_min,
                    h_max: t.h_max,
                    min_depth: t.min_depth,
                    max_depth: t.max_depth,
                    nodes: t.nodes.clone(),
                })
                .collect(),
        }
    }

    fn from_record(record: ForestRecord) -> Result<Forest> {
        if record.format != FORMAT_TAG {
            return Err(Error::Format(format!(
                "unsupported model format {:?}",
                record.format
            )));
        }
        if record.trees.len() != record.n_trees || record.n_trees == 0 {
            return Err(Error::Format(format!(
                "model declares {} trees but holds {}",
                record.n_trees,
                record.trees.len()
            )));
        }
        if record.psi < 2 || record.c_psi.is_nan() || record.c_psi <= 0.0 {
            return Err(Error::Format("model has invalid psi or c_psi".into()));
        }
        let trees = record
            .trees
            .into_iter()
            .map(|t| {
                let tree = Tree::from_nodes(t.nodes)?;
                if tree.h_min != t.h_min || tree.h_max != t.h_max {
                    return Err(Error::Format(
                        "stored depth bounds disagree with the tree's leaves".into(),
                    ));
                }
                Ok(tree)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Forest {
            trees,
            psi: record.psi,
            n_features: record.n_features,
            c_psi: record.c_psi,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_record()).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        Forest::from_record(serde_json::from_str(text)?)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json().as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Forest> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Forest::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Forest> {
        Forest::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized model, used by session checkpoints to refer
    /// back to the forest they were built on.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ForestRecord {
    format: String,
    psi: usize,
    n_trees: usize,
    n_features: usize,
    c_psi: f64,
    trees: Vec<TreeRecord>,
}

#[derive(Serialize, Deserialize)]
struct TreeRecord {
    h_min: f64,
    h_max: f64,
    min_depth: u32,
    max_depth: u32,
    nodes: Vec<Node>,
}
