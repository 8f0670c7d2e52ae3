//! Data pools: synthetic logistic data, CSV ingestion, train/test bookkeeping,
//! the label oracle and seeded random streams.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Bernoulli, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid data settings: {0}")]
    InvalidSpec(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: u64,
        column: String,
        message: String,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("label `{value}` at line {line} does not map to 0 or 1")]
    NonBinaryLabel { line: u64, value: String },
    #[error("pool too small: need {needed}, have {available}")]
    InsufficientPool { needed: usize, available: usize },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Independent random streams carved out of one seed.
///
/// Every `(replication, purpose)` pair gets its own ChaCha20 stream, so the
/// draws of one replication do not depend on how many others run or in what
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Dataset = 0,
    InitialSplit = 1,
    BaselineRandomSelected = 2,
    BaselineRandomFull = 3,
    /// Feature means when they are shared across replications.
    SharedMeans = 4,
}

pub fn stream_rng(seed: u64, replication: u64, purpose: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replication.wrapping_mul(8).wrapping_add(purpose as u64));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseId {
    Case1,
    Case2,
    Case3,
    Custom,
}

/// Generating model of a synthetic pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModelSpec<T> {
    pub case_id: CaseId,
    pub beta_true: Vec<T>,
}

impl<T: Scalar> TrueModelSpec<T> {
    /// Preset cases over `p` variables (column 0 is the intercept).
    pub fn case(case: u8, p: usize) -> Result<Self, DataError> {
        let (id, head): (CaseId, &[f64]) = match case {
            1 => (CaseId::Case1, &[0.5, -2.0, -0.6, 0.5, 1.2]),
            2 => (CaseId::Case2, &[5.0, -20.0, -6.0, 5.0, 12.0]),
            3 => (CaseId::Case3, &[1.0, -4.0, -2.0, 2.0, 3.0, 7.0]),
            other => return Err(DataError::InvalidSpec(format!("unknown case {other}"))),
        };
        if p < head.len() {
            return Err(DataError::InvalidSpec(format!(
                "case {case} needs at least {} variables, got {p}",
                head.len()
            )));
        }
        let mut beta_true = vec![T::zero(); p];
        for (b, &v) in beta_true.iter_mut().zip(head) {
            *b = T::lit(v);
        }
        Ok(Self {
            case_id: id,
            beta_true,
        })
    }

    pub fn custom(beta_true: Vec<T>) -> Self {
        Self {
            case_id: CaseId::Custom,
            beta_true,
        }
    }

    pub fn p(&self) -> usize {
        self.beta_true.len()
    }

    /// Indices with nonzero coefficients.
    pub fn active_set(&self) -> Vec<usize> {
        self.beta_true
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != T::zero())
            .map(|(j, _)| j)
            .collect()
    }
}

/// Whether feature means are redrawn with every dataset or shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanMode {
    #[default]
    Redraw,
    Fixed,
}

/// Feature table, labels and train/test/labeled partition.
#[derive(Debug, Clone)]
pub struct DataPool<T> {
    x: Matrix<T>,
    y: Vec<u8>,
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
    labeled: Vec<usize>,
    var_names: Vec<String>,
    intercept: Option<usize>,
    truth: Option<TrueModelSpec<T>>,
}

impl<T: Scalar> DataPool<T> {
    /// Builds a pool; `train_idx` and `test_idx` must be disjoint and in range.
    pub fn new(
        x: Matrix<T>,
        y: Vec<u8>,
        train_idx: Vec<usize>,
        test_idx: Vec<usize>,
        var_names: Vec<String>,
        intercept: Option<usize>,
    ) -> Result<Self, DataError> {
        let n = x.rows();
        if y.len() != n {
            return Err(DataError::InvalidSpec(format!(
                "{} labels for {n} rows",
                y.len()
            )));
        }
        if var_names.len() != x.cols() {
            return Err(DataError::InvalidSpec(format!(
                "{} names for {} columns",
                var_names.len(),
                x.cols()
            )));
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(DataError::NonBinaryLabel {
                line: i as u64 + 1,
                value: y[i].to_string(),
            });
        }
        let mut seen = vec![false; n];
        for &i in train_idx.iter().chain(&test_idx) {
            if i >= n || seen[i] {
                return Err(DataError::InvalidSpec(format!(
                    "split index {i} repeated or out of range"
                )));
            }
            seen[i] = true;
        }
        if let Some(c) = intercept {
            if c >= x.cols() || (0..n).any(|i| x.get(i, c) != T::one()) {
                return Err(DataError::InvalidSpec(format!(
                    "column {c} is not an intercept"
                )));
            }
        }
        Ok(Self {
            x,
            y,
            train_idx,
            test_idx,
            labeled: Vec::new(),
            var_names,
            intercept,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: TrueModelSpec<T>) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn x(&self) -> &Matrix<T> {
        &self.x
    }

    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_vars(&self) -> usize {
        self.x.cols()
    }

    pub fn train_idx(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn test_idx(&self) -> &[usize] {
        &self.test_idx
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn intercept(&self) -> Option<usize> {
        self.intercept
    }

    pub fn truth(&self) -> Option<&TrueModelSpec<T>> {
        self.truth.as_ref()
    }

    /// Training indices not yet labeled, ascending.
    pub fn unlabeled(&self) -> Vec<usize> {
        let lab: BTreeSet<usize> = self.labeled.iter().copied().collect();
        let mut u: Vec<usize> = self
            .train_idx
            .iter()
            .copied()
            .filter(|i| !lab.contains(i))
            .collect();
        u.sort_unstable();
        u
    }

    /// Ground-truth labels for evaluation. Not for use inside the query loop,
    /// which must go through a [`LabelOracle`].
    pub fn labels_for(&self, rows: &[usize]) -> Vec<u8> {
        rows.iter().map(|&i| self.y[i]).collect()
    }

    /// Oracle over the training split only.
    pub fn oracle(&self) -> StoredLabelOracle<'_> {
        let mut allowed = vec![false; self.y.len()];
        for &i in &self.train_idx {
            allowed[i] = true;
        }
        StoredLabelOracle {
            labels: &self.y,
            allowed,
            query_count: 0,
        }
    }

    /// Class balance: `(count of 0, count of 1)` over all rows.
    pub fn class_counts(&self) -> (usize, usize) {
        let ones = self.y.iter().filter(|&&v| v == 1).count();
        (self.y.len() - ones, ones)
    }

    /// Smallest and largest sample variance over non-constant columns of the
    /// training split.
    pub fn column_variance_range(&self) -> Option<(T, T)> {
        let rows = &self.train_idx;
        if rows.len() < 2 {
            return None;
        }
        let n = T::from_count(rows.len());
        let mut range: Option<(T, T)> = None;
        for j in 0..self.x.cols() {
            let mean = rows.iter().fold(T::zero(), |a, &i| a + self.x.get(i, j)) / n;
            let var = rows
                .iter()
                .fold(T::zero(), |a, &i| a + (self.x.get(i, j) - mean).powi(2))
                / (n - T::one());
            if var <= T::zero() {
                continue;
            }
            range = Some(match range {
                None => (var, var),
                Some((lo, hi)) => (lo.min(var), hi.max(var)),
            });
        }
        range
    }

    /// Writes the feature table and labels as CSV (header, label column last).
    /// Values use the shortest round-tripping decimal form.
    pub fn write_csv(&self, path: &Path, label_column: &str) -> Result<(), DataError> {
        let file = File::create(path).map_err(|source| DataError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let skip = self.intercept;
        let mut header: Vec<&str> = self
            .var_names
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != skip)
            .map(|(_, s)| s.as_str())
            .collect();
        header.push(label_column);
        w.write_record(&header)?;
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.x.rows() {
            rec.clear();
            rec.extend(
                self.x
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| Some(*j) != skip)
                    .map(|(_, v)| format!("{v}")),
            );
            rec.push(self.y[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: path.to_owned(),
            source,
        })?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("subject {0} is outside the queryable training pool")]
    Forbidden(usize),
}

/// Reveals labels of queried subjects.
pub trait LabelOracle {
    fn query(&mut self, index: usize) -> Result<u8, OracleError>;
    fn query_count(&self) -> usize;
}

/// Oracle backed by stored ground-truth labels. Refuses anything outside the
/// training split.
#[derive(Debug, Clone)]
pub struct StoredLabelOracle<'a> {
    labels: &'a [u8],
    allowed: Vec<bool>,
    query_count: usize,
}

impl LabelOracle for StoredLabelOracle<'_> {
    fn query(&mut self, index: usize) -> Result<u8, OracleError> {
        if !self.allowed.get(index).copied().unwrap_or(false) {
            return Err(OracleError::Forbidden(index));
        }
        self.query_count += 1;
        Ok(self.labels[index])
    }

    fn query_count(&self) -> usize {
        self.query_count
    }
}

/// Parameters of a synthetic pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub test_size: usize,
    pub mean_mode: MeanMode,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 20_000,
            test_size: 5_000,
            mean_mode: MeanMode::Redraw,
        }
    }
}

/// Draws the per-column means `μ_j ~ U(-1, 1)` for columns `1..p`.
fn draw_means<T: Scalar, R: Rng>(rng: &mut R, p: usize) -> Vec<T> {
    let mut mu = vec![T::zero(); p];
    for m in mu.iter_mut().skip(1) {
        *m = T::lit(rng.random_range(-1.0..1.0));
    }
    mu
}

/// Synthetic pool: column 0 is the intercept, column `j ≥ 1` is `N(μ_j, 1)`,
/// labels are Bernoulli with logistic probability under `spec.beta_true`, and
/// `test_size` rows are held out uniformly at random.
pub fn gen_synthetic<T: Scalar>(
    spec: &TrueModelSpec<T>,
    cfg: &SyntheticConfig,
    seed: u64,
    replication: u64,
) -> Result<DataPool<T>, DataError> {
    let p = spec.p();
    if p == 0 {
        return Err(DataError::InvalidSpec("no variables".into()));
    }
    if cfg.n <= cfg.test_size {
        return Err(DataError::InvalidSpec(format!(
            "N = {} must exceed test size {}",
            cfg.n, cfg.test_size
        )));
    }
    if spec.beta_true.iter().any(|b| !b.is_finite()) {
        return Err(DataError::InvalidSpec("non-finite coefficient".into()));
    }
    let mut rng = stream_rng(seed, replication, Stream::Dataset);
    let mu: Vec<T> = match cfg.mean_mode {
        MeanMode::Redraw => draw_means(&mut rng, p),
        MeanMode::Fixed => draw_means(&mut stream_rng(seed, 0, Stream::SharedMeans), p),
    };
    let mut x = Matrix::zeros(cfg.n, p);
    let mut y = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let row = x.row_mut(i);
        row[0] = T::one();
        for j in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            row[j] = mu[j] + T::lit(z);
        }
        let eta = row
            .iter()
            .zip(&spec.beta_true)
            .fold(T::zero(), |a, (&u, &b)| a + u * b);
        let prob = sigmoid(eta).to_f64_lossy().clamp(0.0, 1.0);
        let draw = rng.sample(Bernoulli::new(prob).expect("probability in [0, 1]"));
        y.push(u8::from(draw));
    }
    let mut test: Vec<usize> = sample(&mut rng, cfg.n, cfg.test_size).into_vec();
    test.sort_unstable();
    let mut is_test = vec![false; cfg.n];
    for &i in &test {
        is_test[i] = true;
    }
    let train: Vec<usize> = (0..cfg.n).filter(|&i| !is_test[i]).collect();
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    Ok(DataPool::new(x, y, train, test, names, Some(0))?.with_truth(spec.clone()))
}

/// Labels a uniform sample of `n0` training subjects (without replacement).
pub fn initial_split<T: Scalar>(
    pool: &DataPool<T>,
    n0: usize,
    seed: u64,
    replication: u64,
) -> Result<DataPool<T>, DataError> {
    let available = pool.train_idx.len();
    if n0 > available {
        return Err(DataError::InsufficientPool {
            needed: n0,
            available,
        });
    }
    let mut rng = stream_rng(seed, replication, Stream::InitialSplit);
    let picks = sample(&mut rng, available, n0);
    let mut out = pool.clone();
    out.labeled = picks.iter().map(|k| pool.train_idx[k]).collect();
    Ok(out)
}

/// Uniform sample of `n` training subjects without replacement, ascending.
pub fn sample_training<T: Scalar, R: Rng>(
    pool: &DataPool<T>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>, DataError> {
    let available = pool.train_idx.len();
    if n > available {
        return Err(DataError::InsufficientPool {
            needed: n,
            available,
        });
    }
    let mut rows: Vec<usize> = sample(rng, available, n)
        .iter()
        .map(|k| pool.train_idx[k])
        .collect();
    rows.sort_unstable();
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterceptPolicy {
    /// Prepend a constant column named `intercept`.
    #[default]
    Add,
    /// The file already carries one; it must be identically 1.
    Present,
    None,
}

/// How to read a CSV file into a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Header name, or zero-based position when `has_header` is false.
    pub label_column: String,
    /// Feature columns; all non-label columns when empty.
    #[serde(default)]
    pub feature_columns: Vec<String>,
    #[serde(default = "default_true")]
    pub has_header: bool,
    #[serde(default)]
    pub intercept: InterceptPolicy,
    /// Header name of the intercept column under [`InterceptPolicy::Present`].
    #[serde(default)]
    pub intercept_column: Option<String>,
    /// Raw label value mapped to 1; otherwise labels must read `0`/`1`.
    #[serde(default)]
    pub positive_label: Option<String>,
    /// Raw label value mapped to 0 when `positive_label` is set; any other
    /// value is then rejected. Absent means every non-positive value is 0.
    #[serde(default)]
    pub negative_label: Option<String>,
}

fn default_true() -> bool {
    true
}

impl CsvSchema {
    pub fn with_label(label_column: impl Into<String>) -> Self {
        Self {
            label_column: label_column.into(),
            feature_columns: Vec::new(),
            has_header: true,
            intercept: InterceptPolicy::Add,
            intercept_column: None,
            positive_label: None,
            negative_label: None,
        }
    }

    fn map_label(&self, raw: &str, line: u64) -> Result<u8, DataError> {
        let raw = raw.trim();
        let bad = || DataError::NonBinaryLabel {
            line,
            value: raw.to_owned(),
        };
        match &self.positive_label {
            Some(pos) if raw == pos => Ok(1),
            Some(_) => match &self.negative_label {
                Some(neg) if raw != neg => Err(bad()),
                _ => Ok(0),
            },
            None => match raw {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(bad()),
            },
        }
    }
}

/// Feature table and labels read from CSV, without a split.
#[derive(Debug, Clone)]
pub struct CsvTable<T> {
    pub x: Matrix<T>,
    pub y: Vec<u8>,
    pub var_names: Vec<String>,
    pub intercept: Option<usize>,
}

impl<T: Scalar> CsvTable<T> {
    /// All rows assigned to training.
    pub fn into_pool(self) -> Result<DataPool<T>, DataError> {
        let n = self.x.rows();
        DataPool::new(
            self.x,
            self.y,
            (0..n).collect(),
            Vec::new(),
            self.var_names,
            self.intercept,
        )
    }

    pub fn into_pool_with_split(
        self,
        split: &SplitSpec,
        seed: u64,
    ) -> Result<DataPool<T>, DataError> {
        let n = self.x.rows();
        let (train, test) = split.apply(n, seed)?;
        DataPool::new(self.x, self.y, train, test, self.var_names, self.intercept)
    }
}

/// Reads a CSV file. Rows of the wrong arity and non-numeric cells are
/// rejected with the offending (1-based) line.
pub fn load_csv<T: Scalar>(path: &Path, schema: &CsvSchema) -> Result<CsvTable<T>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    read_csv(file, schema)
}

pub fn read_csv<T: Scalar, R: std::io::Read>(
    reader: R,
    schema: &CsvSchema,
) -> Result<CsvTable<T>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(false)
        .from_reader(reader);
    let named = if schema.has_header {
        Some(rdr.headers()?.clone())
    } else {
        None
    };
    let mut records = rdr.records();
    let first = records.next().transpose()?;

    let header: Vec<String> = if let Some(h) = named {
        h.iter().map(|s| s.trim().to_owned()).collect()
    } else {
        let width = first.as_ref().map_or(0, |r| r.len());
        (0..width).map(|j| j.to_string()).collect()
    };
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_owned()))
    };
    let label_pos = find(&schema.label_column)?;
    let intercept_pos = match (schema.intercept, &schema.intercept_column) {
        (InterceptPolicy::Present, Some(name)) => Some(find(name)?),
        (InterceptPolicy::Present, None) => {
            return Err(DataError::InvalidManifest(
                "intercept `present` needs `intercept_column`".into(),
            ))
        }
        _ => None,
    };
    let feature_pos: Vec<usize> = if schema.feature_columns.is_empty() {
        (0..header.len()).filter(|&j| j != label_pos).collect()
    } else {
        let mut v = schema
            .feature_columns
            .iter()
            .map(|c| find(c))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(ip) = intercept_pos {
            if !v.contains(&ip) {
                v.insert(0, ip);
            }
        }
        v
    };
    if feature_pos.is_empty() {
        return Err(DataError::InvalidSpec("no feature columns".into()));
    }

    let add = schema.intercept == InterceptPolicy::Add;
    let width = feature_pos.len() + usize::from(add);
    let mut data: Vec<T> = Vec::new();
    let mut y = Vec::new();
    let mut handle = |rec: csv::StringRecord| -> Result<(), DataError> {
        let line = rec.position().map_or(0, |p| p.line());
        if add {
            data.push(T::one());
        }
        for &j in &feature_pos {
            let cell = rec.get(j).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| DataError::ParseError {
                line,
                column: header[j].clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(DataError::ParseError {
                    line,
                    column: header[j].clone(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            data.push(T::lit(v));
        }
        y.push(schema.map_label(rec.get(label_pos).unwrap_or(""), line)?);
        Ok(())
    };
    if let Some(rec) = first {
        handle(rec)?;
    }
    for rec in records {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, .. } => DataError::ParseError {
                line: pos.as_ref().map_or(0, |p| p.line()),
                column: "*".into(),
                message: "wrong number of fields".into(),
            },
            _ => DataError::Csv(e),
        })?;
        handle(rec)?;
    }

    let mut var_names: Vec<String> = Vec::with_capacity(width);
    if add {
        var_names.push("intercept".into());
    }
    var_names.extend(feature_pos.iter().map(|&j| header[j].clone()));
    let intercept = if add {
        Some(0)
    } else {
        intercept_pos.and_then(|ip| feature_pos.iter().position(|&j| j == ip))
    };
    let rows = y.len();
    Ok(CsvTable {
        x: Matrix::from_row_major(rows, width, data).expect("consistent row width"),
        y,
        var_names,
        intercept,
    })
}

/// Train/test split of a CSV dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Uniformly random training set of the given size; the rest is test.
    RandomTrain { train_size: usize },
    /// The first `train_size` rows train, the rest test.
    Leading { train_size: usize },
    /// Every row trains; no test split.
    AllTrain,
}

impl SplitSpec {
    fn apply(&self, n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DataError> {
        match *self {
            SplitSpec::AllTrain => Ok(((0..n).collect(), Vec::new())),
            SplitSpec::Leading { train_size } | SplitSpec::RandomTrain { train_size }
                if train_size > n =>
            {
                Err(DataError::InsufficientPool {
                    needed: train_size,
                    available: n,
                })
            }
            SplitSpec::Leading { train_size } => {
                Ok(((0..train_size).collect(), (train_size..n).collect()))
            }
            SplitSpec::RandomTrain { train_size } => {
                let mut rng = stream_rng(seed, 0, Stream::Dataset);
                let mut train = sample(&mut rng, n, train_size).into_vec();
                train.sort_unstable();
                let mut is_train = vec![false; n];
                for &i in &train {
                    is_train[i] = true;
                }
                Ok((train, (0..n).filter(|&i| !is_train[i]).collect()))
            }
        }
    }
}

/// JSON manifest describing a CSV dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: CsvSchema,
    pub split: SplitSpec,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetManifest {
    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        if m.path.is_relative() {
            if let Some(dir) = path.parent() {
                m.path = dir.join(&m.path);
            }
        }
        Ok(m)
    }

    pub fn load<T: Scalar>(&self) -> Result<DataPool<T>, DataError> {
        load_csv(&self.path, &self.schema)?.into_pool_with_split(&self.split, self.seed)
    }
}

/// Writes a manifest as pretty-printed JSON.
pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), DataError> {
    let mut f = File::create(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    let text = serde_json::to_string_pretty(manifest)?;
    f.write_all(text.as_bytes())
        .map_err(|source| DataError::Io {
            path: path.to_owned(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SyntheticConfig {
        SyntheticConfig {
            n: 2_000,
            test_size: 500,
            mean_mode: MeanMode::Redraw,
        }
    }

    #[test]
    fn case_presets() {
        let c1 = TrueModelSpec::<f64>::case(1, 100).unwrap();
        assert_eq!(&c1.beta_true[..6], &[0.5, -2.0, -0.6, 0.5, 1.2, 0.0]);
        assert_eq!(c1.active_set(), vec![0, 1, 2, 3, 4]);
        let c2 = TrueModelSpec::<f64>::case(2, 100).unwrap();
        for (a, b) in c1.beta_true.iter().zip(&c2.beta_true) {
            assert_eq!(a * 10.0, *b);
        }
        let c3 = TrueModelSpec::<f64>::case(3, 100).unwrap();
        assert_eq!(&c3.beta_true[..6], &[1.0, -4.0, -2.0, 2.0, 3.0, 7.0]);
        assert!(TrueModelSpec::<f64>::case(4, 100).is_err());
        assert!(TrueModelSpec::<f64>::case(3, 5).is_err());
    }

    #[test]
    fn synthetic_intercept_and_split() {
        let spec = TrueModelSpec::<f64>::case(1, 10).unwrap();
        let pool = gen_synthetic(&spec, &small_cfg(), 5, 0).unwrap();
        assert!((0..pool.n_rows()).all(|i| pool.x().get(i, 0) == 1.0));
        assert_eq!(pool.test_idx().len(), 500);
        assert_eq!(pool.train_idx().len(), 1_500);
        let test: BTreeSet<_> = pool.test_idx().iter().collect();
        assert!(pool.train_idx().iter().all(|i| !test.contains(i)));
    }

    #[test]
    fn synthetic_is_deterministic_and_stream_separated() {
        let spec = TrueModelSpec::<f64>::case(2, 8).unwrap();
        let a = gen_synthetic(&spec, &small_cfg(), 9, 3).unwrap();
        let b = gen_synthetic(&spec, &small_cfg(), 9, 3).unwrap();
        assert_eq!(a.x().as_slice(), b.x().as_slice());
        assert_eq!(a.labels_for(a.train_idx()), b.labels_for(b.train_idx()));
        let c = gen_synthetic(&spec, &small_cfg(), 9, 4).unwrap();
        assert_ne!(a.x().as_slice(), c.x().as_slice());
    }

    #[test]
    fn fixed_means_are_shared_across_replications() {
        let spec = TrueModelSpec::<f64>::case(1, 6).unwrap();
        let cfg = SyntheticConfig {
            mean_mode: MeanMode::Fixed,
            ..small_cfg()
        };
        let col_mean = |p: &DataPool<f64>, j: usize| {
            (0..p.n_rows()).map(|i| p.x().get(i, j)).sum::<f64>() / p.n_rows() as f64
        };
        let a = gen_synthetic(&spec, &cfg, 1, 0).unwrap();
        let b = gen_synthetic(&spec, &cfg, 1, 1).unwrap();
        for j in 1..6 {
            assert!((col_mean(&a, j) - col_mean(&b, j)).abs() < 8.0 / (2_000f64).sqrt());
        }
    }

    #[test]
    fn invalid_synthetic_config() {
        let spec = TrueModelSpec::<f64>::case(1, 6).unwrap();
        let cfg = SyntheticConfig {
            n: 10,
            test_size: 10,
            ..Default::default()
        };
        assert!(matches!(
            gen_synthetic(&spec, &cfg, 0, 0),
            Err(DataError::InvalidSpec(_))
        ));
    }

    #[test]
    fn initial_split_cases() {
        let spec = TrueModelSpec::<f64>::case(1, 6).unwrap();
        let pool = gen_synthetic(&spec, &small_cfg(), 2, 0).unwrap();
        let s = initial_split(&pool, 100, 2, 0).unwrap();
        assert_eq!(s.labeled().len(), 100);
        assert_eq!(s.unlabeled().len(), 1_400);
        let train: BTreeSet<_> = pool.train_idx().iter().collect();
        assert!(s.labeled().iter().all(|i| train.contains(i)));
        assert_eq!(
            initial_split(&pool, 100, 2, 0).unwrap().labeled(),
            s.labeled()
        );
        let all = initial_split(&pool, 1_500, 2, 0).unwrap();
        assert!(all.unlabeled().is_empty());
        assert!(matches!(
            initial_split(&pool, 1_501, 2, 0),
            Err(DataError::InsufficientPool { .. })
        ));
    }

    #[test]
    fn oracle_firewall_and_count() {
        let spec = TrueModelSpec::<f64>::case(1, 6).unwrap();
        let pool = gen_synthetic(&spec, &small_cfg(), 3, 0).unwrap();
        let mut o = pool.oracle();
        let t = pool.train_idx()[0];
        assert_eq!(o.query(t).unwrap(), pool.labels_for(&[t])[0]);
        assert_eq!(o.query_count(), 1);
        let forbidden = pool.test_idx()[0];
        assert_eq!(o.query(forbidden), Err(OracleError::Forbidden(forbidden)));
        assert_eq!(o.query(usize::MAX), Err(OracleError::Forbidden(usize::MAX)));
        assert_eq!(o.query_count(), 1);
    }

    #[test]
    fn csv_hand_written_round_trip() {
        let text = "a,b,y\n1.5,-2,1\n0,3.25,0\n7,8,1\n";
        let t: CsvTable<f64> = read_csv(text.as_bytes(), &CsvSchema::with_label("y")).unwrap();
        assert_eq!(t.var_names, vec!["intercept", "a", "b"]);
        assert_eq!(
            t.x.as_slice(),
            &[1.0, 1.5, -2.0, 1.0, 0.0, 3.25, 1.0, 7.0, 8.0]
        );
        assert_eq!(t.y, vec![1, 0, 1]);
        assert_eq!(t.intercept, Some(0));
    }

    #[test]
    fn csv_errors_name_line_and_column() {
        let text = "a,b,y\n1,2,1\n3,oops,0\n";
        match read_csv::<f64, _>(text.as_bytes(), &CsvSchema::with_label("y")) {
            Err(DataError::ParseError { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = "a,b,y\n1,2,1\n3,4\n";
        assert!(matches!(
            read_csv::<f64, _>(text.as_bytes(), &CsvSchema::with_label("y")),
            Err(DataError::ParseError { line: 3, .. })
        ));
        assert!(matches!(
            read_csv::<f64, _>("a,y\n1,2\n".as_bytes(), &CsvSchema::with_label("y")),
            Err(DataError::NonBinaryLabel { line: 2, .. })
        ));
        assert!(matches!(
            read_csv::<f64, _>("a,y\n1,1\n".as_bytes(), &CsvSchema::with_label("z")),
            Err(DataError::MissingColumn(_))
        ));
    }

    #[test]
    fn csv_label_mapping_and_no_header() {
        let mut schema = CsvSchema::with_label("2");
        schema.has_header = false;
        schema.intercept = InterceptPolicy::None;
        schema.positive_label = Some("B".into());
        schema.negative_label = Some("A".into());
        let t: CsvTable<f64> = read_csv("1,2,A\n3,4,B\n".as_bytes(), &schema).unwrap();
        assert_eq!(t.y, vec![0, 1]);
        assert_eq!(t.x.cols(), 2);
        assert!(read_csv::<f64, _>("1,2,C\n".as_bytes(), &schema).is_err());
    }

    #[test]
    fn csv_write_then_load_is_bit_exact() {
        let spec = TrueModelSpec::<f64>::case(3, 7).unwrap();
        let pool = gen_synthetic(
            &spec,
            &SyntheticConfig {
                n: 300,
                test_size: 100,
                ..Default::default()
            },
            4,
            0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.csv");
        pool.write_csv(&path, "label").unwrap();
        let back: CsvTable<f64> = load_csv(&path, &CsvSchema::with_label("label")).unwrap();
        assert_eq!(back.x.as_slice(), pool.x().as_slice());
        assert_eq!(back.y, pool.labels_for(&(0..300).collect::<Vec<_>>()));
    }

    #[test]
    fn manifest_with_leading_split() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "a,y\n1,0\n2,1\n3,0\n4,1\n").unwrap();
        let manifest_path = dir.path().join("m.json");
        std::fs::write(
            &manifest_path,
            r#"{"path": "d.csv", "label_column": "y", "split": {"kind": "leading", "train_size": 3}}"#,
        )
        .unwrap();
        let m = DatasetManifest::from_file(&manifest_path).unwrap();
        let pool: DataPool<f64> = m.load().unwrap();
        assert_eq!(pool.train_idx(), &[0, 1, 2]);
        assert_eq!(pool.test_idx(), &[3]);
        assert_eq!(pool.class_counts(), (2, 2));
    }

    #[test]
    fn variance_range_skips_constant_columns() {
        let x = Matrix::from_rows(&[
            vec![1.0f64, 0.0, 0.0],
            vec![1.0, 1.0, 10.0],
            vec![1.0, 2.0, 20.0],
        ])
        .unwrap();
        let pool = DataPool::new(
            x,
            vec![0, 1, 0],
            vec![0, 1, 2],
            vec![],
            vec!["i".into(), "a".into(), "b".into()],
            Some(0),
        )
        .unwrap();
        let (lo, hi) = pool.column_variance_range().unwrap();
        assert_eq!((lo, hi), (1.0, 100.0));
    }
}
