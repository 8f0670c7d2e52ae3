//! Classification accuracy, ROC/AUC, variable-identification rates and
//! replication summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty input")]
    Empty,
    #[error("only one class present; AUC is undefined")]
    SingleClass,
    #[error("non-finite score at position {0}")]
    NonFiniteScore(usize),
    #[error("label {value} at position {index} is not 0 or 1")]
    NonBinaryLabel { index: usize, value: u8 },
    #[error("true active set is empty")]
    EmptyTruthSet,
    #[error("every variable is truly active; FPR is undefined")]
    EmptyInactiveTruth,
    #[error("variable {index} is outside 0..{p}")]
    VariableOutOfRange { index: usize, p: usize },
    #[error("no results to aggregate")]
    EmptyResults,
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn check_binary(truth: &[u8]) -> Result<(), MetricsError> {
    match truth.iter().position(|&v| v > 1) {
        Some(index) => Err(MetricsError::NonBinaryLabel {
            index,
            value: truth[index],
        }),
        None => Ok(()),
    }
}

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[u8], truth: &[u8]) -> Result<f64, MetricsError> {
    check_lengths(truth.len(), pred.len())?;
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from the highest threshold down; starts at `(0, 0)`, ends at `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// Concordance probability with ties counted one half.
    pub auc: f64,
}

/// Trapezoidal area under a polyline of `(fpr, tpr)` points.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum()
}

/// ROC curve and AUC of `scores` against binary `truth`.
///
/// The AUC is the Mann–Whitney statistic computed exactly as
/// `(2·#concordant + #tied) / (2·n⁺·n⁻)` by one sort of the scores.
pub fn roc_auc<T: Scalar>(scores: &[T], truth: &[u8]) -> Result<RocCurve, MetricsError> {
    check_lengths(truth.len(), scores.len())?;
    check_binary(truth)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let n_pos = truth.iter().filter(|&&v| v == 1).count() as u64;
    let n_neg = truth.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    // Descending sweep: every tie group becomes one ROC vertex.
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut half_pairs: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let s = scores[order[start]];
        let mut end = start;
        let (mut gp, mut gn) = (0u64, 0u64);
        while end < order.len() && scores[order[end]] == s {
            if truth[order[end]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            end += 1;
        }
        // Negatives below this group: n_neg − fp − gn.
        let below = n_neg - fp - gn;
        half_pairs += 2 * u128::from(gp) * u128::from(below) + u128::from(gp) * u128::from(gn);
        tp += gp;
        fp += gn;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        start = end;
    }
    let auc = half_pairs as f64 / (2 * u128::from(n_pos) * u128::from(n_neg)) as f64;
    Ok(RocCurve { points, auc })
}

/// Rates of correctly and wrongly identified variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionQuality {
    /// `|J ∩ 𝒥| / |𝒥|`.
    pub tpr: f64,
    /// `|J ∩ 𝒥ᶜ| / |𝒥ᶜ|`, complement taken over all `p` indices.
    pub fpr: f64,
}

/// Compares the selected index set `selected` with the true active set over
/// variables `0..p`. The intercept is treated like any other variable.
pub fn selection_quality(
    selected: &[usize],
    truth_active: &[usize],
    p: usize,
) -> Result<SelectionQuality, MetricsError> {
    let mask = |set: &[usize]| -> Result<Vec<bool>, MetricsError> {
        let mut m = vec![false; p];
        for &index in set {
            if index >= p {
                return Err(MetricsError::VariableOutOfRange { index, p });
            }
            m[index] = true;
        }
        Ok(m)
    };
    let sel = mask(selected)?;
    let act = mask(truth_active)?;
    let n_act = act.iter().filter(|&&a| a).count();
    if n_act == 0 {
        return Err(MetricsError::EmptyTruthSet);
    }
    if n_act == p {
        return Err(MetricsError::EmptyInactiveTruth);
    }
    let tp = (0..p).filter(|&j| sel[j] && act[j]).count();
    let fp = (0..p).filter(|&j| sel[j] && !act[j]).count();
    Ok(SelectionQuality {
        tpr: tp as f64 / n_act as f64,
        fpr: fp as f64 / (p - n_act) as f64,
    })
}

/// Sample mean and standard deviation (`n − 1` denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Zero when fewer than two values are available.
    pub sd: f64,
    pub count: usize,
}

impl MeanSd {
    /// `sd` was set to zero by convention rather than estimated.
    pub fn sd_flagged(&self) -> bool {
        self.count < 2
    }
}

pub fn mean_sd(values: &[f64]) -> Result<MeanSd, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyResults);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(MeanSd {
        mean,
        sd,
        count: values.len(),
    })
}

/// Per-replication values that enter a summary row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationMetrics {
    pub n: f64,
    pub train_acc: f64,
    pub train_auc: Option<f64>,
    pub test_acc: f64,
    pub test_auc: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub n_vars: f64,
    pub wall_time_secs: f64,
}

/// One summary row: mean and sd of each metric over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub reps: usize,
    pub n: MeanSd,
    pub train_acc: MeanSd,
    pub train_auc: Option<MeanSd>,
    pub test_acc: MeanSd,
    pub test_auc: Option<MeanSd>,
    pub tpr: Option<MeanSd>,
    pub fpr: Option<MeanSd>,
    pub n_vars: MeanSd,
    pub wall_time_secs: MeanSd,
}

impl AggregateRow {
    pub fn sd_flagged(&self) -> bool {
        self.reps < 2
    }
}

/// Summary over replications. Optional metrics are summarized over the
/// replications that report them and omitted when none do.
pub fn aggregate(results: &[ReplicationMetrics]) -> Result<AggregateRow, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResults);
    }
    let col = |f: fn(&ReplicationMetrics) -> f64| -> Vec<f64> { results.iter().map(f).collect() };
    let opt = |f: fn(&ReplicationMetrics) -> Option<f64>| -> Option<MeanSd> {
        let v: Vec<f64> = results.iter().filter_map(f).collect();
        mean_sd(&v).ok()
    };
    Ok(AggregateRow {
        reps: results.len(),
        n: mean_sd(&col(|r| r.n))?,
        train_acc: mean_sd(&col(|r| r.train_acc))?,
        train_auc: opt(|r| r.train_auc),
        test_acc: mean_sd(&col(|r| r.test_acc))?,
        test_auc: opt(|r| r.test_auc),
        tpr: opt(|r| r.tpr),
        fpr: opt(|r| r.fpr),
        n_vars: mean_sd(&col(|r| r.n_vars))?,
        wall_time_secs: mean_sd(&col(|r| r.wall_time_secs))?,
    })
}
