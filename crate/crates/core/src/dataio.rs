//! Datasets, CSV I/O, train/test splitting, the square-toroid generator and
//! the ground-truth oracle.

use crate::alif::{Answer, Oracle};
use crate::{Error, Label, Result};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

// Keeps split and toroid streams apart from forest streams built on the same seed.
const SPLIT_SALT: u64 = 0x5350_4c49_5400_0001;
const TOROID_SALT: u64 = 0x544f_524f_4944_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Array2<f64>,
    pub labels: Option<Vec<Label>>,
    /// Column names of the features, when the source had a header.
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Array2<f64>, labels: Option<Vec<Label>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.nrows() {
                return Err(Error::Format(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.nrows()
                )));
            }
        }
        if let Some((i, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let m = features.ncols().max(1);
            return Err(Error::Parse {
                row: i / m + 1,
                column: i % m + 1,
                message: "feature is not finite".into(),
            });
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            feature_names: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_anomalies(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().filter(|l| l.is_anomaly()).count())
    }

    /// Anomaly fraction, when labels are present.
    pub fn contamination(&self) -> Option<f64> {
        let n = self.n_rows();
        self.n_anomalies()
            .map(|a| if n == 0 { 0.0 } else { a as f64 / n as f64 })
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select(Axis(0), indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Writes features (and a trailing `label` column of 0/1 when labeled).
    /// Numbers use the shortest representation that parses back exactly.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = match &self.feature_names {
            Some(names) => names.clone(),
            None => (0..self.n_features()).map(|j| format!("x{}", j + 1)).collect(),
        };
        if self.labels.is_some() {
            header.push("label".into());
        }
        out.write_record(&header).map_err(csv_io)?;
        for (i, row) in self.features.outer_iter().enumerate() {
            let mut record: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            if let Some(labels) = &self.labels {
                record.push(if labels[i].is_anomaly() { "1" } else { "0" }.into());
            }
            out.write_record(&record).map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Which column of a CSV holds the labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    /// Zero-based column index.
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Parses comma-separated numeric data with an optional header line.
///
/// The first line is a header when none of its cells is a number. Row and
/// column numbers in errors are 1-based and count the header line.
pub fn read_csv<R: Read>(reader: R, name: &str, label_column: Option<&LabelColumn>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Format(format!("{name}: no rows")));
    }

    let has_header = records[0].iter().all(|c| c.parse::<f64>().is_err());
    let header: Option<Vec<String>> = has_header.then(|| records[0].iter().map(str::to_string).collect());
    let width = records[0].len();
    let first_data_line = usize::from(has_header);

    let label_idx = match label_column {
        None => None,
        Some(LabelColumn::Index(i)) if *i < width => Some(*i),
        Some(LabelColumn::Index(i)) => {
            return Err(Error::Config(format!(
                "label column {i} out of range ({width} columns)"
            )))
        }
        Some(LabelColumn::Name(n)) => {
            let h = header.as_ref().ok_or_else(|| {
                Error::Config(format!("label column {n:?} given by name but the file has no header"))
            })?;
            Some(h.iter().position(|c| c == n).ok_or_else(|| {
                Error::Config(format!("no column named {n:?}"))
            })?)
        }
    };

    let m = width - usize::from(label_idx.is_some());
    if m == 0 {
        return Err(Error::Format(format!("{name}: no feature columns")));
    }
    let n = records.len() - first_data_line;
    let mut values = Vec::with_capacity(n * m);
    let mut labels = label_idx.map(|_| Vec::with_capacity(n));

    for (offset, rec) in records[first_data_line..].iter().enumerate() {
        let row = first_data_line + offset + 1;
        if rec.len() != width {
            return Err(Error::Format(format!(
                "{name}: row {row} has {} columns, expected {width}",
                rec.len()
            )));
        }
        for (col, cell) in rec.iter().enumerate() {
            if Some(col) == label_idx {
                let label = cell.parse::<Label>().map_err(|_| Error::Parse {
                    row,
                    column: col + 1,
                    message: format!("invalid label {cell:?}"),
                })?;
                labels.as_mut().expect("label vector").push(label);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: col + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: col + 1,
                    message: format!("not a finite number: {cell:?}"),
                });
            }
            values.push(v);
        }
    }

    let features = Array2::from_shape_vec((n, m), values).expect("rectangular rows");
    let mut dataset = Dataset::new(name, features, labels)?;
    dataset.feature_names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .map(|(_, c)| c)
            .collect()
    });
    Ok(dataset)
}

pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&LabelColumn>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), &name, label_column)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            seed: 0,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// False when stratification was requested but had to be dropped.
    pub stratified: bool,
}

/// Disjoint, exhaustive train/test partition.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n = dataset.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ SPLIT_SALT);
    let mut stratified = spec.stratified;

    let classes: Vec<Vec<usize>> = match (&dataset.labels, spec.stratified) {
        (Some(labels), true) => {
            let anomalies: Vec<usize> = (0..n).filter(|&i| labels[i].is_anomaly()).collect();
            let normals: Vec<usize> = (0..n).filter(|&i| !labels[i].is_anomaly()).collect();
            if anomalies.len() < 2 || normals.len() < 2 {
                log::warn!(
                    "{}: a class has fewer than 2 members, falling back to a plain split",
                    dataset.name
                );
                stratified = false;
                vec![(0..n).collect()]
            } else {
                vec![normals, anomalies]
            }
        }
        (None, true) => {
            return Err(Error::Config(
                "stratified split needs labels".into(),
            ))
        }
        (_, false) => vec![(0..n).collect()],
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut class in classes {
        class.shuffle(&mut rng);
        let k = (class.len() as f64 * spec.train_fraction).round() as usize;
        train.extend_from_slice(&class[..k]);
        test.extend_from_slice(&class[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();

    Ok(Split {
        train: dataset.subset(&train),
        test: dataset.subset(&test),
        train_indices: train,
        test_indices: test,
        stratified,
    })
}

/// Geometry of the square toroid: normal points fill the ring between the
/// two squares, anomalies the inner square. Both squares are centered at
/// the origin; sides are `2·half_side`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToroidConfig {
    pub outer_half_side: f64,
    pub inner_half_side: f64,
}

impl Default for ToroidConfig {
    fn default() -> Self {
        Self {
            outer_half_side: 2.0,
            inner_half_side: 1.0,
        }
    }
}

pub fn make_toroid(n_normal: usize, n_anomaly: usize, seed: u64) -> Result<Dataset> {
    make_toroid_with(n_normal, n_anomaly, seed, &ToroidConfig::default())
}

pub fn make_toroid_with(n_normal: usize, n_anomaly: usize, seed: u64, geometry: &ToroidConfig) -> Result<Dataset> {
    let (outer, inner) = (geometry.outer_half_side, geometry.inner_half_side);
    if n_normal == 0 || n_anomaly == 0 {
        return Err(Error::Config("toroid needs at least one point of each class".into()));
    }
    if !(inner > 0.0 && outer > inner) {
        return Err(Error::Config("toroid needs 0 < inner < outer".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TOROID_SALT);
    let mut values = Vec::with_capacity(2 * (n_normal + n_anomaly));
    let mut labels = Vec::with_capacity(n_normal + n_anomaly);

    let mut accepted = 0;
    while accepted < n_normal {
        let x: f64 = rng.random_range(-outer..=outer);
        let y: f64 = rng.random_range(-outer..=outer);
        if x.abs().max(y.abs()) >= inner {
            values.extend([x, y]);
            labels.push(Label::Normal);
            accepted += 1;
        }
    }
    accepted = 0;
    while accepted < n_anomaly {
        let x: f64 = rng.random_range(-inner..inner);
        let y: f64 = rng.random_range(-inner..inner);
        if x.abs().max(y.abs()) < inner {
            values.extend([x, y]);
            labels.push(Label::Anomaly);
            accepted += 1;
        }
    }

    let features = Array2::from_shape_vec((n_normal + n_anomaly, 2), values).expect("2 columns");
    let mut ds = Dataset::new("toroid", features, Some(labels))?;
    ds.feature_names = Some(vec!["x1".into(), "x2".into()]);
    Ok(ds)
}

/// Answers with the ground-truth label of a training index.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    labels: Vec<Label>,
}

impl SimulatedOracle {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let labels = dataset
            .labels
            .clone()
            .ok_or_else(|| Error::Config(format!("{} has no labels to simulate an oracle", dataset.name)))?;
        Ok(Self { labels })
    }

    pub fn truth(&self, index: usize) -> Result<Label> {
        self.labels.get(index).copied().ok_or_else(|| {
            Error::Protocol(format!(
                "oracle has no point {index} ({} points)",
                self.labels.len()
            ))
        })
    }
}

impl Oracle for SimulatedOracle {
    fn label(&mut self, index: usize, _point: &[f64]) -> Result<Answer> {
        self.truth(index).map(Answer::Label)
    }
}

/// Expected shape of an external dataset, used to validate downloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub instances: usize,
    pub features: usize,
    pub anomalies: usize,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default)]
    pub sha256: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub datasets: BTreeMap<String, ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))
    }

    /// Loads `name` from `dir` and checks it against its manifest entry.
    pub fn load_dataset(&self, name: &str, dir: impl AsRef<Path>) -> Result<Dataset> {
        let entry = self
            .datasets
            .get(name)
            .ok_or_else(|| Error::Config(format!("dataset {name:?} is not in the manifest")))?;
        let path = dir.as_ref().join(&entry.file);
        let bytes = std::fs::read(&path)?;
        if let Some(expected) = &entry.sha256 {
            let actual = sha256_hex(&bytes);
            if &actual != expected {
                return Err(Error::Format(format!(
                    "{}: sha256 {actual} does not match the manifest ({expected})",
                    path.display()
                )));
            }
        }
        let label = entry.label_column.clone().map(LabelColumn::Name);
        let mut ds = read_csv(bytes.as_slice(), name, label.as_ref())?;
        ds.name = name.to_string();
        let got = (ds.n_rows(), ds.n_features(), ds.n_anomalies().unwrap_or(0));
        let want = (entry.instances, entry.features, entry.anomalies);
        if got != want {
            return Err(Error::Format(format!(
                "{name}: got {got:?} (rows, features, anomalies), manifest expects {want:?}"
            )));
        }
        Ok(ds)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
