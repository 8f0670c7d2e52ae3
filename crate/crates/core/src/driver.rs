//! End-to-end GATE runs: initial fit, alternating batch queries and forward
//! variable steps until the stopping rule fires, final refit and evaluation.
//! Also the three random/full-data comparison fits.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    initial_split, sample_training, stream_rng, DataError, DataPool, LabelOracle, Stream,
};
use crate::design::{DesignError, DesignState};
use crate::grafting::{
    evaluate_stop, gradient_scores_for_state, select_variable, GraftError, StopDecision,
    VariableScore,
};
use crate::logistic::{fit_irls, FitReport, IrlsControls, LogisticModel, ModelError};
use crate::metrics::{
    accuracy, roc_auc, selection_quality, MetricsError, ReplicationMetrics, RocCurve,
    SelectionQuality,
};
use crate::query::{query_batch, refit, BatchTrace, QueryError, RefitOutcome};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Graft(#[from] GraftError),
    #[error("initial label request failed: {0}")]
    Oracle(String),
}

/// Tuning parameters of one GATE run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    bound(
        serialize = "T: Serialize",
        deserialize = "T: Scalar + Deserialize<'de>"
    )
)]
pub struct GateConfig<T> {
    /// Size of the initial random labeled set.
    pub n0: usize,
    /// Subjects queried per batch.
    pub n_q: usize,
    /// Order of the distance statistic bounding the candidate set.
    pub h: usize,
    /// Classification threshold.
    pub alpha: T,
    /// Stopping threshold on the relative D-deficiency.
    pub epsilon: T,
    /// Cap on the active-set size; defaults to the number of variables.
    pub max_vars: Option<usize>,
    pub irls: IrlsControls<T>,
    pub seed: u64,
    pub replication: u64,
    /// Starting active set; defaults to the pool's intercept column.
    pub initial_vars: Option<Vec<usize>>,
}

impl<T: Scalar> Default for GateConfig<T> {
    fn default() -> Self {
        Self {
            n0: 100,
            n_q: 30,
            h: 200,
            alpha: T::lit(0.5),
            epsilon: T::lit(1e-2),
            max_vars: None,
            irls: IrlsControls::default(),
            seed: 0,
            replication: 0,
            initial_vars: None,
        }
    }
}

impl<T: Scalar> GateConfig<T> {
    /// Every violated constraint, checked against `p` variables when known.
    pub fn violations(&self, p: Option<usize>) -> Vec<String> {
        let mut v = Vec::new();
        if self.n0 < 1 {
            v.push("n0 must be at least 1".to_string());
        }
        if self.n_q < 1 {
            v.push("n_q must be at least 1".to_string());
        }
        if self.h < 1 {
            v.push("h must be at least 1".to_string());
        }
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            v.push(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.epsilon > T::zero() && self.epsilon.is_finite()) {
            v.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.irls.tol > T::zero()) {
            v.push("irls.tol must be positive".to_string());
        }
        if self.irls.max_iter < 1 {
            v.push("irls.max_iter must be at least 1".to_string());
        }
        if self.irls.ridge < T::zero() || !self.irls.ridge.is_finite() {
            v.push("irls.ridge must be a finite non-negative number".to_string());
        }
        if let Some(init) = &self.initial_vars {
            if init.is_empty() {
                v.push("initial_vars must not be empty".to_string());
            }
            let mut s = init.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != init.len() {
                v.push("initial_vars contains duplicates".to_string());
            }
        }
        if let Some(p) = p {
            if let Some(bad) = self.initial_vars.iter().flatten().find(|&&j| j >= p) {
                v.push(format!("initial variable {bad} is outside 0..{p}"));
            }
            if let Some(m) = self.max_vars {
                if m > p {
                    v.push(format!("max_vars {m} exceeds the {p} available variables"));
                }
            }
        }
        if let (Some(m), Some(init)) = (self.max_vars, &self.initial_vars) {
            if m < init.len() {
                v.push(format!(
                    "max_vars {m} is smaller than the initial active set"
                ));
            }
        }
        v
    }

    pub fn validate(&self, p: Option<usize>) -> Result<(), DriverError> {
        let v = self.violations(p);
        if v.is_empty() {
            Ok(())
        } else {
            Err(DriverError::InvalidConfig(v))
        }
    }
}

/// Which learner produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Approach {
    /// Active subject queries with forward variable selection.
    #[serde(rename = "A")]
    Gate,
    /// All training subjects, all variables.
    #[serde(rename = "B")]
    FullData,
    /// Random subjects, variables taken from a GATE run.
    #[serde(rename = "C")]
    RandomSelected,
    /// Random subjects, all variables.
    #[serde(rename = "D")]
    RandomFull,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::Gate,
        Approach::FullData,
        Approach::RandomSelected,
        Approach::RandomFull,
    ];

    pub fn letter(self) -> char {
        match self {
            Approach::Gate => 'A',
            Approach::FullData => 'B',
            Approach::RandomSelected => 'C',
            Approach::RandomFull => 'D',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.letter() == c.to_ascii_uppercase())
    }

    pub fn label(self) -> &'static str {
        match self {
            Approach::Gate => "active learning with forward selection",
            Approach::FullData => "full variables and subjects",
            Approach::RandomSelected => "random subjects, selected variables",
            Approach::RandomFull => "random subjects, full variables",
        }
    }
}

/// Accuracy and AUC on one split. `auc` is absent when the split has one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub acc: f64,
    pub auc: Option<f64>,
}

/// What happened in the variable step of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariableOutcome {
    Accepted,
    /// `crit < ε`.
    Rejected,
    SingularAugmentedDesign,
    RefitFailed {
        message: String,
    },
    SingularBaseDesign,
    NoInactiveVariables,
    MaxVarsReached,
    /// The batch was cut short by an empty pool; no variable step.
    PoolExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub batch: BatchTrace<T>,
    /// `|M(ξ₀, β_k)|^{1/k}` after the batch.
    pub m0: Option<T>,
    pub proposal: Option<VariableScore<T>>,
    pub stop: Option<StopDecision<T>>,
    pub outcome: VariableOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    CritBelowEpsilon,
    AugmentedDesignSingular,
    AugmentedRefitFailed,
    BaseDesignSingular,
    NoInactiveVariables,
    MaxVarsReached,
    PoolExhausted,
    /// Single fit of a comparison approach.
    SingleFit,
}

impl Termination {
    fn from_outcome(o: &VariableOutcome) -> Option<Self> {
        Some(match o {
            VariableOutcome::Accepted => return None,
            VariableOutcome::Rejected => Termination::CritBelowEpsilon,
            VariableOutcome::SingularAugmentedDesign => Termination::AugmentedDesignSingular,
            VariableOutcome::RefitFailed { .. } => Termination::AugmentedRefitFailed,
            VariableOutcome::SingularBaseDesign => Termination::BaseDesignSingular,
            VariableOutcome::NoInactiveVariables => Termination::NoInactiveVariables,
            VariableOutcome::MaxVarsReached => Termination::MaxVarsReached,
            VariableOutcome::PoolExhausted => Termination::PoolExhausted,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult<T> {
    pub approach: Approach,
    pub replication: u64,
    pub final_model: LogisticModel<T>,
    pub final_fit: RefitOutcome<T>,
    pub labeled_count: usize,
    /// Labeled pool indices in the order they were labeled; empty for the full-data fit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labeled: Vec<usize>,
    /// Active variables in order of entry.
    pub selected_vars: Vec<usize>,
    pub train: ClassMetrics,
    pub test: ClassMetrics,
    pub selection: Option<SelectionQuality>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterations: Vec<IterationRecord<T>>,
    pub termination: Termination,
    #[serde(skip)]
    pub wall_time_secs: f64,
    #[serde(skip)]
    pub test_roc: Option<RocCurve>,
}

impl<T: Scalar> RunResult<T> {
    pub fn replication_metrics(&self) -> ReplicationMetrics {
        ReplicationMetrics {
            n: self.labeled_count as f64,
            train_acc: self.train.acc,
            train_auc: self.train.auc,
            test_acc: self.test.acc,
            test_auc: self.test.auc,
            tpr: self.selection.map(|s| s.tpr),
            fpr: self.selection.map(|s| s.fpr),
            n_vars: self.selected_vars.len() as f64,
            wall_time_secs: self.wall_time_secs,
        }
    }

    /// Labels queried across all batches, in order.
    pub fn queried(&self) -> impl Iterator<Item = usize> + '_ {
        self.iterations
            .iter()
            .flat_map(|it| it.batch.queried.iter().copied())
    }
}

/// Accuracy on `rows` and AUC with the linear predictor as score.
fn evaluate<T: Scalar>(
    model: &LogisticModel<T>,
    pool: &DataPool<T>,
    rows: &[usize],
) -> Result<(ClassMetrics, Option<RocCurve>), DriverError> {
    if rows.is_empty() {
        return Err(MetricsError::Empty.into());
    }
    model.check_columns(pool.x())?;
    let truth = pool.labels_for(rows);
    let pred: Vec<u8> = rows
        .iter()
        .map(|&i| model.classify_row(pool.x(), i))
        .collect();
    let eta: Vec<T> = rows.iter().map(|&i| model.eta_row(pool.x(), i)).collect();
    let acc = accuracy(&pred, &truth)?;
    let roc = match roc_auc(&eta, &truth) {
        Ok(r) => Some(r),
        Err(MetricsError::SingleClass) => None,
        Err(e) => return Err(e.into()),
    };
    Ok((
        ClassMetrics {
            acc,
            auc: roc.as_ref().map(|r| r.auc),
        },
        roc,
    ))
}

fn selection_of<T: Scalar>(pool: &DataPool<T>, selected: &[usize]) -> Option<SelectionQuality> {
    let truth = pool.truth()?;
    selection_quality(selected, &truth.active_set(), pool.n_vars()).ok()
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar>(
    approach: Approach,
    replication: u64,
    pool: &DataPool<T>,
    final_model: LogisticModel<T>,
    final_fit: RefitOutcome<T>,
    labeled_count: usize,
    labeled: Vec<usize>,
    iterations: Vec<IterationRecord<T>>,
    termination: Termination,
    started: Instant,
) -> Result<RunResult<T>, DriverError> {
    if pool.test_idx().is_empty() {
        return Err(DriverError::InvalidConfig(vec![
            "pool has no test split to evaluate on".to_string(),
        ]));
    }
    let (train, _) = evaluate(&final_model, pool, pool.train_idx())?;
    let (test, test_roc) = evaluate(&final_model, pool, pool.test_idx())?;
    let selected_vars = final_model.active_vars().to_vec();
    Ok(RunResult {
        approach,
        replication,
        selection: selection_of(pool, &selected_vars),
        final_model,
        final_fit,
        labeled_count,
        labeled,
        selected_vars,
        train,
        test,
        iterations,
        termination,
        wall_time_secs: started.elapsed().as_secs_f64(),
        test_roc,
    })
}

/// Runs GATE on `pool`, drawing the initial labeled set from the configured
/// seed and replication and revealing labels through the pool's oracle.
pub fn run_gate<T: Scalar>(
    config: &GateConfig<T>,
    pool: &DataPool<T>,
) -> Result<RunResult<T>, DriverError> {
    let mut oracle = pool.oracle();
    run_gate_with_oracle(config, pool, &mut oracle)
}

pub fn run_gate_with_oracle<T: Scalar, O: LabelOracle + ?Sized>(
    config: &GateConfig<T>,
    pool: &DataPool<T>,
    oracle: &mut O,
) -> Result<RunResult<T>, DriverError> {
    let started = Instant::now();
    let p = pool.n_vars();
    config.validate(Some(p))?;
    if pool.test_idx().is_empty() {
        return Err(DriverError::InvalidConfig(vec![
            "pool has no test split to evaluate on".to_string(),
        ]));
    }
    let initial_vars = match (&config.initial_vars, pool.intercept()) {
        (Some(v), _) => v.clone(),
        (None, Some(c)) => vec![c],
        (None, None) => {
            return Err(DriverError::InvalidConfig(vec![
                "initial_vars is required when the pool has no intercept column".to_string(),
            ]))
        }
    };
    let max_vars = config.max_vars.unwrap_or(p);
    let needed = config.n0 + config.n_q;
    if pool.train_idx().len() < needed {
        return Err(DataError::InsufficientPool {
            needed,
            available: pool.train_idx().len(),
        }
        .into());
    }

    let split = initial_split(pool, config.n0, config.seed, config.replication)?;
    let labeled = split.labeled().to_vec();
    let mut unlabeled = split.unlabeled();
    let labels = labeled
        .iter()
        .map(|&i| {
            oracle
                .query(i)
                .map_err(|e| DriverError::Oracle(e.to_string()))
        })
        .collect::<Result<Vec<u8>, _>>()?;
    let (model, _) = fit_irls(
        pool.x(),
        &labeled,
        &labels,
        &initial_vars,
        None,
        &config.irls,
        config.alpha,
    )?;
    let mut state = DesignState::new(pool.x(), labeled, labels, model)?;

    let mut iterations = Vec::new();
    let termination = loop {
        let iteration = iterations.len() + 1;
        let batch_size = config.n_q.min(unlabeled.len());
        let (next, batch) = if batch_size > 0 {
            query_batch(
                state,
                pool.x(),
                &mut unlabeled,
                oracle,
                batch_size,
                config.h,
                &config.irls,
            )?
        } else {
            (state, BatchTrace::default())
        };
        state = next;
        let mut record = IterationRecord {
            iteration,
            batch,
            m0: state.normalized_det(),
            proposal: None,
            stop: None,
            outcome: VariableOutcome::Accepted,
        };

        let active = state.model().active_vars();
        let inactive: Vec<usize> = (0..p).filter(|j| !active.contains(j)).collect();
        record.outcome = if batch_size < config.n_q {
            VariableOutcome::PoolExhausted
        } else if inactive.is_empty() {
            VariableOutcome::NoInactiveVariables
        } else if active.len() >= max_vars {
            VariableOutcome::MaxVarsReached
        } else if record.m0.is_none() {
            VariableOutcome::SingularBaseDesign
        } else {
            let scores = gradient_scores_for_state(pool.x(), &state, &inactive)?;
            let best = select_variable(&scores)?;
            record.proposal = scores.iter().find(|s| s.var_index == best).copied();
            match evaluate_stop(&state, best, pool.x(), config.epsilon, &config.irls) {
                Ok(ev) => {
                    record.stop = Some(ev.decision);
                    if ev.decision.accept {
                        state = ev.state;
                        VariableOutcome::Accepted
                    } else {
                        VariableOutcome::Rejected
                    }
                }
                Err(GraftError::SingularAugmentedDesign) => {
                    VariableOutcome::SingularAugmentedDesign
                }
                Err(GraftError::Model(e)) => VariableOutcome::RefitFailed {
                    message: e.to_string(),
                },
                Err(e) => return Err(e.into()),
            }
        };
        let stop = Termination::from_outcome(&record.outcome);
        iterations.push(record);
        if let Some(t) = stop {
            break t;
        }
    };

    let (labeled, labels, model) = state.into_parts();
    let (final_model, final_fit) = refit(pool.x(), &labeled, &labels, &model, &config.irls);
    finish(
        Approach::Gate,
        config.replication,
        pool,
        final_model,
        final_fit,
        labeled.len(),
        labeled,
        iterations,
        termination,
        started,
    )
}

#[allow(clippy::too_many_arguments)]
fn fit_rows<T: Scalar>(
    approach: Approach,
    replication: u64,
    pool: &DataPool<T>,
    rows: Vec<usize>,
    keep_rows: bool,
    vars: &[usize],
    controls: &IrlsControls<T>,
    alpha: T,
    started: Instant,
) -> Result<RunResult<T>, DriverError> {
    let y = pool.labels_for(&rows);
    let (model, report): (LogisticModel<T>, FitReport<T>) =
        fit_irls(pool.x(), &rows, &y, vars, None, controls, alpha)?;
    let n = rows.len();
    finish(
        approach,
        replication,
        pool,
        model,
        RefitOutcome::Fitted(report),
        n,
        if keep_rows { rows } else { Vec::new() },
        Vec::new(),
        Termination::SingleFit,
        started,
    )
}

/// All variables fit on the whole training split. A singular system is an
/// error here; the ridge fallback is disabled.
pub fn run_baseline_full<T: Scalar>(
    pool: &DataPool<T>,
    controls: &IrlsControls<T>,
    alpha: T,
    replication: u64,
) -> Result<RunResult<T>, DriverError> {
    let started = Instant::now();
    let strict = IrlsControls {
        ridge_fallback: false,
        ..controls.clone()
    };
    let vars: Vec<usize> = (0..pool.n_vars()).collect();
    fit_rows(
        Approach::FullData,
        replication,
        pool,
        pool.train_idx().to_vec(),
        false,
        &vars,
        &strict,
        alpha,
        started,
    )
}

/// `n` random training subjects fit on the given variables.
#[allow(clippy::too_many_arguments)]
pub fn run_baseline_random_selected<T: Scalar>(
    pool: &DataPool<T>,
    n: usize,
    vars: &[usize],
    seed: u64,
    replication: u64,
    controls: &IrlsControls<T>,
    alpha: T,
) -> Result<RunResult<T>, DriverError> {
    let started = Instant::now();
    if vars.is_empty() {
        return Err(DriverError::InvalidConfig(vec![
            "variable set must not be empty".to_string(),
        ]));
    }
    let mut rng = stream_rng(seed, replication, Stream::BaselineRandomSelected);
    let rows = sample_training(pool, n, &mut rng)?;
    fit_rows(
        Approach::RandomSelected,
        replication,
        pool,
        rows,
        true,
        vars,
        controls,
        alpha,
        started,
    )
}

/// `n` random training subjects fit on all variables, with the ridge fallback
/// covering underdetermined systems.
pub fn run_baseline_random_full<T: Scalar>(
    pool: &DataPool<T>,
    n: usize,
    seed: u64,
    replication: u64,
    controls: &IrlsControls<T>,
    alpha: T,
) -> Result<RunResult<T>, DriverError> {
    let started = Instant::now();
    let mut rng = stream_rng(seed, replication, Stream::BaselineRandomFull);
    let rows = sample_training(pool, n, &mut rng)?;
    let vars: Vec<usize> = (0..pool.n_vars()).collect();
    fit_rows(
        Approach::RandomFull,
        replication,
        pool,
        rows,
        true,
        &vars,
        controls,
        alpha,
        started,
    )
}
