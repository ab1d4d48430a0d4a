//! One labeling session: the alif session plus the protocol state the HTTP
//! layer needs (outstanding query, timestamps, persistence).

use crate::error::ApiError;
use crate::store::{self, Event, EventRecord, SessionStore};
use alif_core::alif::{
    Checkpoint, MetricSnapshot, QueryStrategy, RowStats, Session, SessionConfig, UpdateStrategy,
};
use alif_core::dataio::{self, Dataset, LabelColumn, Manifest, SplitSpec};
use alif_core::iforest::{Forest, ForestConfig, DEFAULT_TREES};
use alif_core::metrics::{average_precision, roc_auc, ScoredLabels};
use alif_core::Label;
use chrono::{DateTime, Utc};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Idle,
    AwaitingLabel,
    BudgetExhausted,
}

/// Where the session's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DatasetRequest {
    /// CSV text in the request body.
    Upload {
        csv: String,
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        label_column: Option<LabelColumn>,
    },
    /// `toroid` (generated) or a dataset listed in `<data dir>/manifest.toml`.
    Named {
        name: String,
        #[serde(default)]
        n_normal: Option<usize>,
        #[serde(default)]
        n_anomaly: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestRequest {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default)]
    pub psi: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_trees() -> usize {
    DEFAULT_TREES
}

impl Default for ForestRequest {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            psi: None,
            seed: 0,
        }
    }
}

/// Holds back a labeled test split; metrics on it are attached to every
/// history entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoldoutRequest {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    /// Defaults to the forest seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_true")]
    pub stratified: bool,
}

fn default_fraction() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub dataset: DatasetRequest,
    #[serde(default)]
    pub forest: ForestRequest,
    #[serde(default = "default_query")]
    pub query_strategy: QueryStrategy,
    #[serde(default = "default_update")]
    pub update_strategy: UpdateStrategy,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub holdout: Option<HoldoutRequest>,
}

fn default_query() -> QueryStrategy {
    QueryStrategy::MostAnomalous
}

fn default_update() -> UpdateStrategy {
    UpdateStrategy::PiecewiseLinear
}

fn default_budget() -> usize {
    25
}

/// Persisted description of a session; everything needed to rebuild it
/// besides the data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub dataset: String,
    pub n_rows: usize,
    pub n_features: usize,
    pub n_holdout: usize,
    pub forest: ForestConfig,
    pub config: SessionConfig,
    pub holdout: Option<SplitSpec>,
    pub baseline: Option<MetricSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outstanding {
    pub point_index: usize,
    pub asked_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StateFile {
    seq: u64,
    updated_at: DateTime<Utc>,
    outstanding: Option<Outstanding>,
    timestamps: Vec<DateTime<Utc>>,
    checkpoint: Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSpread {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl From<RowStats> for DepthSpread {
    fn from(s: RowStats) -> Self {
        Self {
            mean: s.mean,
            std: s.std,
            min: s.min,
            max: s.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub session_id: String,
    pub status: Status,
    pub point_index: usize,
    pub features: Vec<f64>,
    pub score: f64,
    /// Standard deviation of the point's row of H.
    pub uncertainty: f64,
    /// 1-based position of `score` among all pool and labeled points.
    pub rank: usize,
    pub depth_spread: DepthSpread,
    pub remaining_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub session_id: String,
    pub status: Status,
    pub point_index: usize,
    pub label: Option<Label>,
    pub abstained: bool,
    pub previous_score: f64,
    pub score: f64,
    /// Training points sharing a leaf with the labeled point (itself included).
    pub rescored_points: usize,
    pub iteration: usize,
    pub remaining_budget: usize,
    pub metrics: Option<MetricSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub point_index: usize,
    pub score: f64,
    pub labeled: bool,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub iteration: usize,
    pub point_index: usize,
    pub label: Label,
    pub timestamp: DateTime<Utc>,
    pub metrics: Option<MetricSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub session_id: String,
    pub status: Status,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub dataset: String,
    pub n_rows: usize,
    pub n_features: usize,
    pub n_holdout: usize,
    pub query_strategy: QueryStrategy,
    pub update_strategy: UpdateStrategy,
    pub budget: usize,
    pub used_budget: usize,
    pub remaining_budget: usize,
    pub n_trees: usize,
    pub psi: usize,
    pub c_psi: f64,
    pub forest_fingerprint: String,
    pub outstanding: Option<usize>,
    pub baseline: Option<MetricSnapshot>,
    pub feature_names: Option<Vec<String>>,
}

#[derive(Debug)]
struct Holdout {
    features: Array2<f64>,
    labels: Vec<Label>,
}

#[derive(Debug)]
pub struct SessionResource {
    meta: SessionMeta,
    session: Session,
    holdout: Option<Holdout>,
    feature_names: Option<Vec<String>>,
    outstanding: Option<Outstanding>,
    timestamps: Vec<DateTime<Utc>>,
    updated_at: DateTime<Utc>,
    seq: u64,
    store: SessionStore,
}

fn load_dataset(req: &DatasetRequest, data_dir: &Path) -> Result<Dataset, ApiError> {
    match req {
        DatasetRequest::Upload {
            csv,
            name,
            label_column,
        } => {
            let name = name.as_deref().unwrap_or("upload");
            Ok(dataio::read_csv(csv.as_bytes(), name, label_column.as_ref())
                .map_err(|e| ApiError::unprocessable(e.to_string()))?)
        }
        DatasetRequest::Named {
            name,
            n_normal,
            n_anomaly,
            seed,
        } if name == "toroid" => Ok(dataio::make_toroid(
            n_normal.unwrap_or(1000),
            n_anomaly.unwrap_or(50),
            seed.unwrap_or(0),
        )?),
        DatasetRequest::Named { name, .. } => {
            let manifest_path = data_dir.join("manifest.toml");
            if !manifest_path.exists() {
                return Err(ApiError::bad_request(format!(
                    "unknown dataset {name:?} (no manifest in the data directory)"
                )));
            }
            let manifest = Manifest::load(&manifest_path)?;
            if !manifest.datasets.contains_key(name) {
                return Err(ApiError::bad_request(format!("unknown dataset {name:?}")));
            }
            Ok(manifest.load_dataset(name, data_dir)?)
        }
    }
}

fn holdout_metrics(session: &Session, holdout: &Holdout) -> Result<MetricSnapshot, ApiError> {
    let scores = session.score_rows(&holdout.features);
    let sl = ScoredLabels::new(&scores, &holdout.labels)?;
    Ok(MetricSnapshot {
        ap: average_precision(&sl)?,
        auc: roc_auc(&sl)?,
    })
}

fn write_csv(store: &SessionStore, name: &str, ds: &Dataset) -> Result<(), ApiError> {
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    store.write_atomic(name, &buf)?;
    Ok(())
}

impl SessionResource {
    /// Fits the forest, opens the session and persists it under `root/<id>`.
    pub fn create(id: String, req: &CreateRequest, data_dir: &Path, root: &Path) -> Result<Self, ApiError> {
        if req.budget == 0 {
            return Err(ApiError::bad_request("budget must be at least 1"));
        }
        let dataset = load_dataset(&req.dataset, data_dir)?;
        let feature_names = dataset.feature_names.clone();
        let (train, holdout, split_spec) = match req.holdout {
            None => (dataset, None, None),
            Some(h) => {
                if !(h.train_fraction > 0.0 && h.train_fraction < 1.0) {
                    return Err(ApiError::bad_request("holdout train_fraction must lie in (0, 1)"));
                }
                if dataset.labels.is_none() {
                    return Err(ApiError::bad_request("a holdout split needs a labeled dataset"));
                }
                let spec = SplitSpec {
                    train_fraction: h.train_fraction,
                    seed: h.seed.unwrap_or(req.forest.seed),
                    stratified: h.stratified,
                };
                let parts = dataio::split(&dataset, &spec)?;
                let labels = parts.test.labels.clone().expect("labeled split");
                let holdout = Holdout {
                    features: parts.test.features.clone(),
                    labels,
                };
                (parts.train, Some(holdout), Some(spec))
            }
        };
        let forest_cfg = ForestConfig {
            n_trees: req.forest.n_trees,
            psi: req.forest.psi,
            seed: req.forest.seed,
        };
        let forest = Arc::new(Forest::fit(train.features.view(), &forest_cfg)?);
        let config = SessionConfig {
            query_strategy: req.query_strategy,
            update_strategy: req.update_strategy,
            budget: req.budget,
        };
        let session = Session::new(Arc::clone(&forest), Arc::new(train.features.clone()), config)?;
        let baseline = holdout.as_ref().map(|h| holdout_metrics(&session, h)).transpose()?;

        let now = Utc::now();
        let meta = SessionMeta {
            session_id: id.clone(),
            created_at: now,
            dataset: train.name.clone(),
            n_rows: train.n_rows(),
            n_features: train.n_features(),
            n_holdout: holdout.as_ref().map_or(0, |h| h.labels.len()),
            forest: forest_cfg,
            config,
            holdout: split_spec,
            baseline,
        };

        let mut store = SessionStore::create(root.join(&id))?;
        store.write_atomic(store::FOREST, forest.to_json().as_bytes())?;
        let pool = Dataset {
            labels: None,
            ..train
        };
        write_csv(&store, store::TRAIN, &pool)?;
        if let Some(h) = &holdout {
            let mut ds = Dataset::new("holdout", h.features.clone(), Some(h.labels.clone()))?;
            ds.feature_names = pool.feature_names.clone();
            write_csv(&store, store::HOLDOUT, &ds)?;
        }
        store.write_json(store::META, &meta)?;
        store.append(&EventRecord {
            seq: 1,
            at: now,
            event: Event::Create,
        })?;

        Ok(Self {
            meta,
            session,
            holdout,
            feature_names,
            outstanding: None,
            timestamps: Vec::new(),
            updated_at: now,
            seq: 1,
            store,
        })
    }

    /// Rebuilds a session from its directory: checkpoint first, then any
    /// events logged after it.
    pub fn open(dir: &Path) -> Result<Self, ApiError> {
        let store = SessionStore::open(dir.to_path_buf())?;
        let meta: SessionMeta = store
            .read_json(store::META)?
            .ok_or_else(|| ApiError::internal(format!("{}: no {}", dir.display(), store::META)))?;
        let forest = Arc::new(Forest::load(store.path(store::FOREST))?);
        let train = dataio::load_csv(store.path(store::TRAIN), None)?;
        let holdout = if meta.holdout.is_some() {
            let ds = dataio::load_csv(store.path(store::HOLDOUT), Some(&LabelColumn::Name("label".into())))?;
            Some(Holdout {
                labels: ds.labels.clone().expect("holdout labels"),
                features: ds.features,
            })
        } else {
            None
        };
        let data = Arc::new(train.features);
        let state: Option<StateFile> = store.read_json(store::STATE)?;
        let (session, outstanding, timestamps, seq, updated_at) = match state {
            Some(s) => (
                Session::restore(Arc::clone(&forest), data, &s.checkpoint)?,
                s.outstanding,
                s.timestamps,
                s.seq,
                s.updated_at,
            ),
            None => (
                Session::new(Arc::clone(&forest), data, meta.config)?,
                None,
                Vec::new(),
                0,
                meta.created_at,
            ),
        };
        let mut resource = Self {
            meta,
            session,
            holdout,
            feature_names: train.feature_names,
            outstanding,
            timestamps,
            updated_at,
            seq,
            store,
        };
        let mut replayed = 0;
        for record in resource.store.read_events()? {
            if record.seq <= resource.seq {
                continue;
            }
            match record.event {
                Event::Create => {}
                Event::Query { point_index } => {
                    resource.outstanding = Some(Outstanding {
                        point_index,
                        asked_at: record.at,
                    })
                }
                Event::Abstain { .. } => resource.outstanding = None,
                Event::Label { point_index, label } => {
                    resource.apply(point_index, label, record.at)?;
                }
            }
            resource.seq = record.seq;
            resource.updated_at = record.at;
            replayed += 1;
        }
        if replayed > 0 {
            log::info!("{}: replayed {replayed} events", dir.display());
            resource.save_state()?;
        }
        Ok(resource)
    }

    pub fn id(&self) -> &str {
        &self.meta.session_id
    }

    pub fn meta(&self) -> &SessionMeta {
        &self.meta
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn status(&self) -> Status {
        if self.outstanding.is_some() {
            Status::AwaitingLabel
        } else if self.session.remaining_budget() == 0 || self.session.pool().is_empty() {
            Status::BudgetExhausted
        } else {
            Status::Idle
        }
    }

    pub fn summary(&self) -> Summary {
        let forest = self.session.forest();
        let config = self.session.config();
        Summary {
            session_id: self.meta.session_id.clone(),
            status: self.status(),
            created_at: self.meta.created_at,
            updated_at: self.updated_at,
            dataset: self.meta.dataset.clone(),
            n_rows: self.meta.n_rows,
            n_features: self.meta.n_features,
            n_holdout: self.meta.n_holdout,
            query_strategy: config.query_strategy,
            update_strategy: config.update_strategy,
            budget: config.budget,
            used_budget: self.session.history().len(),
            remaining_budget: self.session.remaining_budget(),
            n_trees: forest.n_trees(),
            psi: forest.psi(),
            c_psi: forest.c_psi(),
            forest_fingerprint: forest.fingerprint(),
            outstanding: self.outstanding.map(|o| o.point_index),
            baseline: self.meta.baseline,
            feature_names: self.feature_names.clone(),
        }
    }

    fn log(&mut self, event: Event, at: DateTime<Utc>) -> Result<(), ApiError> {
        let record = EventRecord {
            seq: self.seq + 1,
            at,
            event,
        };
        self.store.append(&record)?;
        self.seq = record.seq;
        self.updated_at = at;
        Ok(())
    }

    fn save_state(&self) -> Result<(), ApiError> {
        let state = StateFile {
            seq: self.seq,
            updated_at: self.updated_at,
            outstanding: self.outstanding,
            timestamps: self.timestamps.clone(),
            checkpoint: self.session.checkpoint(),
        };
        self.store.write_json(store::STATE, &state)?;
        Ok(())
    }

    /// Descending scores with index tiebreak.
    pub fn ranked_scores(&self) -> Vec<ScoreEntry> {
        let scores = self.session.training_scores();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order
            .into_iter()
            .map(|i| {
                let label = self.session.label_of(i);
                ScoreEntry {
                    point_index: i,
                    score: scores[i],
                    labeled: label.is_some(),
                    label,
                }
            })
            .collect()
    }

    pub fn history(&self) -> Vec<HistoryItem> {
        self.session
            .history()
            .iter()
            .zip(&self.timestamps)
            .map(|(h, &timestamp)| HistoryItem {
                iteration: h.iteration,
                point_index: h.index,
                label: h.label,
                timestamp,
                metrics: h.metrics,
            })
            .collect()
    }

    pub fn query(&mut self) -> Result<QueryResponse, ApiError> {
        match self.status() {
            Status::AwaitingLabel => {
                let pending = self.outstanding.expect("awaiting").point_index;
                return Err(ApiError::conflict(format!(
                    "point {pending} is still waiting for a label"
                ))
                .with_status(Status::AwaitingLabel));
            }
            Status::BudgetExhausted => {
                return Err(ApiError::new(
                    axum::http::StatusCode::GONE,
                    format!(
                        "budget exhausted: {} of {} labels used",
                        self.session.history().len(),
                        self.session.config().budget
                    ),
                )
                .with_status(Status::BudgetExhausted))
            }
            Status::Idle => {}
        }
        let selection = self.session.next_query()?;
        let index = selection.index;
        let features = self.session.point(index).to_vec();
        let score = self.session.anomaly_score(&features);
        let scores = self.session.training_scores();
        let rank = 1 + scores
            .iter()
            .enumerate()
            .filter(|&(i, s)| s.total_cmp(&score).is_gt() || (*s == score && i < index))
            .count();
        self.log(Event::Query { point_index: index }, Utc::now())?;
        self.outstanding = Some(Outstanding {
            point_index: index,
            asked_at: self.updated_at,
        });
        Ok(QueryResponse {
            session_id: self.meta.session_id.clone(),
            status: self.status(),
            point_index: index,
            features,
            score,
            uncertainty: selection.stats.std,
            rank,
            depth_spread: selection.stats.into(),
            remaining_budget: self.session.remaining_budget(),
        })
    }

    fn apply(&mut self, index: usize, label: Label, at: DateTime<Utc>) -> Result<(f64, f64, Option<MetricSnapshot>), ApiError> {
        let outcome = self.session.apply_label(index, label)?;
        let metrics = match &self.holdout {
            Some(h) => {
                let m = holdout_metrics(&self.session, h)?;
                self.session.record_metrics(m)?;
                Some(m)
            }
            None => None,
        };
        self.timestamps.push(at);
        self.outstanding = None;
        Ok((outcome.previous_score, outcome.score, metrics))
    }

    /// Answers the outstanding query. `label = None` abstains: the point
    /// stays in the pool and no budget is used.
    pub fn answer(&mut self, point_index: usize, label: Option<Label>) -> Result<LabelResponse, ApiError> {
        let pending = self.outstanding.ok_or_else(|| {
            ApiError::conflict("no query is outstanding; POST /query first").with_status(self.status())
        })?;
        if pending.point_index != point_index {
            return Err(ApiError::conflict(format!(
                "point {point_index} is not the outstanding query (expected {})",
                pending.point_index
            ))
            .with_status(self.status()));
        }
        let x = self.session.point(point_index).to_vec();
        let at = Utc::now();
        let (previous_score, score, metrics, rescored) = match label {
            None => {
                self.log(Event::Abstain { point_index }, at)?;
                self.outstanding = None;
                let s = self.session.anomaly_score(&x);
                (s, s, None, 0)
            }
            Some(label) => {
                self.log(Event::Label { point_index, label }, at)?;
                let (before, after, metrics) = self.apply(point_index, label, at)?;
                (before, after, metrics, self.session.co_located(point_index).len())
            }
        };
        self.save_state()?;
        Ok(LabelResponse {
            session_id: self.meta.session_id.clone(),
            status: self.status(),
            point_index,
            label,
            abstained: label.is_none(),
            previous_score,
            score,
            rescored_points: rescored,
            iteration: self.session.history().len(),
            remaining_budget: self.session.remaining_budget(),
            metrics,
        })
    }

    pub fn dir(&self) -> &Path {
        self.store.dir()
    }
}
