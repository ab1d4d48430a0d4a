//! Repeated active-learning experiments against a simulated oracle.
//!
//! Repetition `r` uses seed `base_seed + r` for both its stratified split and
//! its forest. All strategy combinations of a repetition start from that same
//! forest, so their iteration-0 metrics coincide.

use crate::alif::{MetricSnapshot, QueryStrategy, Session, SessionConfig, UpdateStrategy};
use crate::dataio::{self, Dataset, LabelColumn, SimulatedOracle, SplitSpec};
use crate::iforest::{Forest, ForestConfig, DEFAULT_TREES};
use crate::metrics::{average_precision, roc_auc, ScoredLabels};
use crate::{Error, Label, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

/// A (query, update) strategy combination, written `anom-lin`, `unc-log`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StrategyPair {
    pub query: QueryStrategy,
    pub update: UpdateStrategy,
}

impl StrategyPair {
    pub fn new(query: QueryStrategy, update: UpdateStrategy) -> Self {
        Self { query, update }
    }

    /// The four combinations, in the column order of the summary table.
    pub fn grid() -> Vec<StrategyPair> {
        use QueryStrategy::*;
        use UpdateStrategy::*;
        vec![
            StrategyPair::new(MostAnomalous, Logarithmic),
            StrategyPair::new(MostAnomalous, PiecewiseLinear),
            StrategyPair::new(MaxUncertainty, Logarithmic),
            StrategyPair::new(MaxUncertainty, PiecewiseLinear),
        ]
    }
}

impl fmt::Display for StrategyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.query.short_name(), self.update.short_name())
    }
}

impl FromStr for StrategyPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (q, u) = s
            .split_once(['-', '+', '/'])
            .filter(|(q, _)| !q.is_empty())
            .ok_or_else(|| Error::Plan(format!("strategy {s:?} is not of the form <query>-<update>")))?;
        // "most-anomalous-piecewise-linear" style names need the long forms
        if let (Ok(q), Ok(u)) = (q.parse(), u.parse()) {
            return Ok(StrategyPair::new(q, u));
        }
        for query in QueryStrategy::ALL {
            if let Some(rest) = s.strip_prefix(query.name()).and_then(|r| r.strip_prefix('-')) {
                return Ok(StrategyPair::new(query, rest.parse()?));
            }
        }
        Err(Error::Plan(format!("unknown strategy combination {s:?}")))
    }
}

impl TryFrom<String> for StrategyPair {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StrategyPair> for String {
    fn from(p: StrategyPair) -> String {
        p.to_string()
    }
}

/// Where a plan's dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Csv {
        name: Option<String>,
        path: PathBuf,
        label_column: Option<LabelColumn>,
    },
    Toroid {
        #[serde(default = "default_toroid_normal")]
        n_normal: usize,
        #[serde(default = "default_toroid_anomaly")]
        n_anomaly: usize,
        #[serde(default)]
        seed: u64,
    },
    /// A dataset listed in a manifest, validated on load.
    Manifest {
        name: String,
        manifest: PathBuf,
        dir: Option<PathBuf>,
    },
}

fn default_toroid_normal() -> usize {
    1000
}

fn default_toroid_anomaly() -> usize {
    50
}

impl DatasetSource {
    /// Relative paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        match self {
            DatasetSource::Csv {
                name,
                path,
                label_column,
            } => {
                let mut ds = dataio::load_csv(base.join(path), label_column.as_ref())?;
                if let Some(n) = name {
                    ds.name = n.clone();
                }
                Ok(ds)
            }
            DatasetSource::Toroid {
                n_normal,
                n_anomaly,
                seed,
            } => dataio::make_toroid(*n_normal, *n_anomaly, *seed),
            DatasetSource::Manifest {
                name,
                manifest,
                dir,
            } => {
                let manifest_path = base.join(manifest);
                let dir = match dir {
                    Some(d) => base.join(d),
                    None => manifest_path.parent().map(Path::to_path_buf).unwrap_or_default(),
                };
                dataio::Manifest::load(&manifest_path)?.load_dataset(name, dir)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub datasets: Vec<DatasetSource>,
    #[serde(default = "StrategyPair::grid")]
    pub strategies: Vec<StrategyPair>,
    #[serde(default = "default_queries")]
    pub n_queries: usize,
    #[serde(default = "default_repetitions")]
    pub n_repetitions: usize,
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default)]
    pub psi: Option<usize>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_true")]
    pub stratified: bool,
    /// Record per-step wall time; `false` writes 0 so output is reproducible byte for byte.
    #[serde(default = "default_true")]
    pub timing: bool,
}

fn default_queries() -> usize {
    25
}
fn default_repetitions() -> usize {
    50
}
fn default_trees() -> usize {
    DEFAULT_TREES
}
fn default_train_fraction() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            strategies: StrategyPair::grid(),
            n_queries: default_queries(),
            n_repetitions: default_repetitions(),
            n_trees: default_trees(),
            psi: None,
            base_seed: 0,
            train_fraction: default_train_fraction(),
            stratified: true,
            timing: true,
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| Error::Plan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_repetitions == 0 {
            return Err(Error::Plan("n_repetitions must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Plan("no strategies selected".into()));
        }
        if self.n_trees == 0 {
            return Err(Error::Plan("n_trees must be at least 1".into()));
        }
        Ok(())
    }

    pub fn seed_for(&self, repetition: usize) -> u64 {
        self.base_seed.wrapping_add(repetition as u64)
    }
}

/// Metric curves of one (dataset, strategy, repetition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    pub strategy: StrategyPair,
    pub repetition: usize,
    pub seed: u64,
    /// Index 0 is the unsupervised forest; index `q` follows the q-th label.
    pub ap: Vec<f64>,
    pub auc: Vec<f64>,
    /// Wall time of each step in milliseconds (0 at index 0).
    pub step_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub n_queries: usize,
    pub runs: Vec<RunResult>,
    /// Datasets that could not be run, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn test_metrics(session: &Session, test: &Dataset, labels: &[Label]) -> Result<MetricSnapshot> {
    let scores = session.score_rows(&test.features);
    let sl = ScoredLabels::new(&scores, labels)?;
    Ok(MetricSnapshot {
        ap: average_precision(&sl)?,
        auc: roc_auc(&sl)?,
    })
}

/// Runs every strategy of `plan` for one repetition on `dataset`.
pub fn run_repetition(plan: &ExperimentPlan, dataset: &Dataset, repetition: usize) -> Result<Vec<RunResult>> {
    let seed = plan.seed_for(repetition);
    let parts = dataio::split(
        dataset,
        &SplitSpec {
            train_fraction: plan.train_fraction,
            seed,
            stratified: plan.stratified,
        },
    )?;
    let test_labels = parts
        .test
        .labels
        .clone()
        .ok_or_else(|| Error::Config(format!("{} has no labels", dataset.name)))?;
    let n_train = parts.train.n_rows();
    if plan.n_queries > n_train {
        return Err(Error::Config(format!(
            "{}: {} queries requested but the training half has {} points",
            dataset.name, plan.n_queries, n_train
        )));
    }
    let forest = Arc::new(Forest::fit(
        parts.train.features.view(),
        &ForestConfig {
            n_trees: plan.n_trees,
            psi: plan.psi,
            seed,
        },
    )?);
    let train = Arc::new(parts.train.features.clone());

    plan.strategies
        .iter()
        .map(|&strategy| {
            let mut oracle = SimulatedOracle::new(&parts.train)?;
            let mut session = Session::new(
                Arc::clone(&forest),
                Arc::clone(&train),
                SessionConfig {
                    query_strategy: strategy.query,
                    update_strategy: strategy.update,
                    budget: plan.n_queries,
                },
            )?;
            let baseline = test_metrics(&session, &parts.test, &test_labels)?;
            let mut ap = vec![baseline.ap];
            let mut auc = vec![baseline.auc];
            let mut step_ms = vec![0.0];
            for _ in 0..plan.n_queries {
                let start = Instant::now();
                session.step(&mut oracle)?;
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                let m = test_metrics(&session, &parts.test, &test_labels)?;
                session.record_metrics(m)?;
                ap.push(m.ap);
                auc.push(m.auc);
                step_ms.push(if plan.timing { elapsed } else { 0.0 });
            }
            Ok(RunResult {
                dataset: dataset.name.clone(),
                strategy,
                repetition,
                seed,
                ap,
                auc,
                step_ms,
            })
        })
        .collect()
}

/// Runs the full plan. Repetitions run in parallel; output order is fixed
/// (dataset, repetition, strategy).
pub fn run_experiment(plan: &ExperimentPlan, datasets: &[Dataset]) -> Result<ExperimentResults> {
    plan.validate()?;
    let mut results = ExperimentResults {
        n_queries: plan.n_queries,
        ..ExperimentResults::default()
    };
    for dataset in datasets {
        if dataset.labels.is_none() {
            log::warn!("skipping {}: no labels for the simulated oracle", dataset.name);
            results
                .skipped
                .push((dataset.name.clone(), "dataset has no labels".into()));
            continue;
        }
        let per_rep = (0..plan.n_repetitions)
            .into_par_iter()
            .map(|r| run_repetition(plan, dataset, r))
            .collect::<Result<Vec<_>>>()?;
        results.runs.extend(per_rep.into_iter().flatten());
    }
    Ok(results)
}

/// Loads the plan's datasets; sources that fail are reported, not fatal.
pub fn load_datasets(plan: &ExperimentPlan, base: &Path) -> (Vec<Dataset>, Vec<(String, String)>) {
    let mut loaded = Vec::new();
    let mut failed = Vec::new();
    for source in &plan.datasets {
        match source.load(base) {
            Ok(ds) => loaded.push(ds),
            Err(e) => failed.push((format!("{source:?}"), e.to_string())),
        }
    }
    (loaded, failed)
}

/// Per-iteration mean and population std over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub dataset: String,
    pub strategy: StrategyPair,
    pub ap_mean: Vec<f64>,
    pub ap_std: Vec<f64>,
    pub auc_mean: Vec<f64>,
    pub auc_std: Vec<f64>,
    pub repetitions: usize,
}

impl Curve {
    /// Mean over all iterations and repetitions.
    pub fn grand_mean_ap(&self) -> f64 {
        self.ap_mean.iter().sum::<f64>() / self.ap_mean.len() as f64
    }

    pub fn grand_mean_auc(&self) -> f64 {
        self.auc_mean.iter().sum::<f64>() / self.auc_mean.len() as f64
    }

    pub fn final_ap(&self) -> f64 {
        *self.ap_mean.last().expect("curve has iteration 0")
    }

    pub fn final_auc(&self) -> f64 {
        *self.auc_mean.last().expect("curve has iteration 0")
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ExperimentResults {
    /// Curves grouped by (dataset, strategy) in first-seen order.
    pub fn curves(&self) -> Vec<Curve> {
        let mut keys: Vec<(String, StrategyPair)> = Vec::new();
        for run in &self.runs {
            let key = (run.dataset.clone(), run.strategy);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(dataset, strategy)| {
                let runs: Vec<&RunResult> = self
                    .runs
                    .iter()
                    .filter(|r| r.dataset == dataset && r.strategy == strategy)
                    .collect();
                let len = runs[0].ap.len();
                let mut curve = Curve {
                    dataset,
                    strategy,
                    ap_mean: Vec::with_capacity(len),
                    ap_std: Vec::with_capacity(len),
                    auc_mean: Vec::with_capacity(len),
                    auc_std: Vec::with_capacity(len),
                    repetitions: runs.len(),
                };
                for i in 0..len {
                    let (m, s) = mean_std(runs.iter().map(|r| r.ap[i]));
                    curve.ap_mean.push(m);
                    curve.ap_std.push(s);
                    let (m, s) = mean_std(runs.iter().map(|r| r.auc[i]));
                    curve.auc_mean.push(m);
                    curve.auc_std.push(s);
                }
                curve
            })
            .collect()
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from(
            "dataset,query_strategy,update_strategy,repetition,iteration,ap,auc,step_ms\n",
        );
        for run in &self.runs {
            for i in 0..run.ap.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    run.dataset,
                    run.strategy.query.name(),
                    run.strategy.update.name(),
                    run.repetition,
                    i,
                    run.ap[i],
                    run.auc[i],
                    run.step_ms[i]
                );
            }
        }
        out
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from("dataset,strategy,iteration,ap_mean,ap_std,auc_mean,auc_std\n");
        for c in self.curves() {
            for i in 0..c.ap_mean.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    c.dataset, c.strategy, i, c.ap_mean[i], c.ap_std[i], c.auc_mean[i], c.auc_std[i]
                );
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "dataset,strategy,repetitions,baseline_ap,mean_ap,final_ap,baseline_auc,mean_auc,final_auc\n",
        );
        for c in self.curves() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.dataset,
                c.strategy,
                c.repetitions,
                c.ap_mean[0],
                c.grand_mean_ap(),
                c.final_ap(),
                c.auc_mean[0],
                c.grand_mean_auc(),
                c.final_auc()
            );
        }
        out
    }

    /// Datasets as rows, strategies as columns, mean AP over iterations and
    /// repetitions (final-iteration mean in parentheses).
    pub fn summary_table(&self) -> String {
        let curves = self.curves();
        let mut strategies: Vec<StrategyPair> = Vec::new();
        let mut datasets: Vec<String> = Vec::new();
        for c in &curves {
            if !strategies.contains(&c.strategy) {
                strategies.push(c.strategy);
            }
            if !datasets.contains(&c.dataset) {
                datasets.push(c.dataset.clone());
            }
        }
        let mut out = String::from("| dataset | IF |");
        for s in &strategies {
            let _ = write!(out, " {s} |");
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|".repeat(strategies.len()));
        out.push('\n');
        for d in &datasets {
            let baseline = curves
                .iter()
                .find(|c| &c.dataset == d)
                .map(|c| c.ap_mean[0])
                .unwrap_or(f64::NAN);
            let _ = write!(out, "| {d} | {baseline:.2} |");
            for s in &strategies {
                match curves.iter().find(|c| &c.dataset == d && c.strategy == *s) {
                    Some(c) => {
                        let _ = write!(out, " {:.2} ({:.2}) |", c.grand_mean_ap(), c.final_ap());
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Writes `runs.csv`, `curves.csv`, `summary.csv` and `summary.md` into
/// `dir` and returns their paths.
pub fn emit_report(results: &ExperimentResults, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if results.runs.is_empty() {
        return Err(Error::Config("no results to report".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let files = [
        ("runs.csv", results.runs_csv()),
        ("curves.csv", results.curves_csv()),
        ("summary.csv", results.summary_csv()),
        ("summary.md", results.summary_table()),
    ];
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            Ok(path)
        })
        .collect()
}
