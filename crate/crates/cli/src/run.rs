//! Replicated experiments: data per replication, GATE plus the requested
//! comparison fits, and persistence of every result.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gate_core::data::{DataError, DatasetManifest, SyntheticConfig};
use gate_core::{
    gen_synthetic, run_baseline_full, run_baseline_random_full, run_baseline_random_selected,
    run_gate, Approach, DataPool, RunResult, TrueModelSpec,
};
use rayon::prelude::*;

use crate::report::{self, Meta, Record, SCHEMA_VERSION};
use crate::spec::{DatasetSpec, ExperimentSpec};
use crate::CliError;

/// Column variances differing by more than this factor trigger a warning.
const VARIANCE_SPREAD_WARN: f64 = 10.0;

enum Source {
    Synthetic {
        truth: TrueModelSpec,
        cfg: SyntheticConfig,
    },
    Csv(DataPool),
}

impl Source {
    fn pool(
        &self,
        seed: u64,
        replication: u64,
    ) -> Result<std::borrow::Cow<'_, DataPool>, DataError> {
        match self {
            Source::Synthetic { truth, cfg } => {
                gen_synthetic(truth, cfg, seed, replication).map(std::borrow::Cow::Owned)
            }
            Source::Csv(pool) => Ok(std::borrow::Cow::Borrowed(pool)),
        }
    }
}

fn open_source(spec: &ExperimentSpec) -> Result<Source, CliError> {
    match &spec.dataset {
        DatasetSpec::Synthetic {
            case,
            p,
            n,
            test_size,
            mean_mode,
        } => Ok(Source::Synthetic {
            truth: TrueModelSpec::case(*case, *p).map_err(|e| CliError::Config(e.to_string()))?,
            cfg: SyntheticConfig {
                n: *n,
                test_size: *test_size,
                mean_mode: *mean_mode,
            },
        }),
        DatasetSpec::Csv { manifest } => {
            let m = DatasetManifest::from_file(manifest)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let pool: DataPool = m.load().map_err(|e| match e {
                DataError::Io { .. } => CliError::Config(e.to_string()),
                other => CliError::Runtime(other.to_string()),
            })?;
            let (neg, pos) = pool.class_counts();
            eprintln!(
                "loaded {}: {} rows, {} variables, {} training / {} test, classes 0/1 = {neg}/{pos}",
                m.path.display(),
                pool.n_rows(),
                pool.n_vars(),
                pool.train_idx().len(),
                pool.test_idx().len()
            );
            if let Some((lo, hi)) = pool.column_variance_range() {
                if lo > 0.0 && hi / lo > VARIANCE_SPREAD_WARN {
                    eprintln!(
                        "warning: column variances range from {lo:.3e} to {hi:.3e}; \
                         the gradient-based variable ranking is scale dependent, consider standardizing"
                    );
                }
            }
            Ok(Source::Csv(pool))
        }
    }
}

/// Every approach of one replication, GATE first.
fn run_replication(
    spec: &ExperimentSpec,
    source: &Source,
    replication: u64,
) -> Result<Vec<RunResult>, String> {
    let seed = spec.gate.seed;
    let pool = source.pool(seed, replication).map_err(|e| e.to_string())?;
    let config = gate_core::GateConfig {
        replication,
        ..spec.gate.clone()
    };
    let irls = &config.irls;
    let alpha = config.alpha;
    let gate = run_gate(&config, &pool).map_err(|e| format!("approach A: {e}"))?;
    let mut out = Vec::new();
    for approach in spec.approaches() {
        let r = match approach {
            Approach::Gate => continue,
            Approach::FullData => run_baseline_full(&pool, irls, alpha, replication),
            Approach::RandomSelected => run_baseline_random_selected(
                &pool,
                gate.labeled_count,
                &gate.selected_vars,
                seed,
                replication,
                irls,
                alpha,
            ),
            Approach::RandomFull => {
                run_baseline_random_full(&pool, gate.labeled_count, seed, replication, irls, alpha)
            }
        };
        out.push(r.map_err(|e| format!("approach {}: {e}", approach.letter()))?);
    }
    out.insert(0, gate);
    Ok(out)
}

/// ROC vertices with interior points of straight runs removed.
fn roc_corners(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        if out.len() >= 2 {
            let (a, b) = (out[out.len() - 2], out[out.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross == 0.0 {
                out.pop();
            }
        }
        out.push(p);
    }
    out
}

fn clear_previous(dir: &Path) -> Result<(), String> {
    for (_, path) in report::rep_files(dir)? {
        fs::remove_file(&path).map_err(|e| format!("cannot remove {}: {e}", path.display()))?;
    }
    Ok(())
}

/// Runs every replication and writes all outputs into `spec.output_dir`.
/// Returns the comparison table.
pub fn cmd_run(spec: &ExperimentSpec) -> Result<String, CliError> {
    let violations = spec.violations();
    if !violations.is_empty() {
        return Err(CliError::Config(violations.join("\n")));
    }
    let source = open_source(spec)?;
    let dir = &spec.output_dir;
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    clear_previous(dir).map_err(CliError::Runtime)?;

    let dataset = spec.dataset.label();
    let first = source
        .pool(spec.gate.seed, 0)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let meta = Meta {
        schema_version: SCHEMA_VERSION,
        dataset: dataset.clone(),
        var_names: first.var_names().to_vec(),
        truth_active: first.truth().map(|t| t.active_set()),
    };
    drop(first);
    let meta_text =
        serde_json::to_string_pretty(&meta).map_err(|e| CliError::Runtime(e.to_string()))?;
    report::write(&dir.join("meta.json"), &meta_text).map_err(CliError::Runtime)?;

    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let outcomes: Vec<(u64, Result<Vec<RunResult>, String>)> = workers.install(|| {
        (0..spec.replications)
            .into_par_iter()
            .map(|rep| {
                let res = run_replication(spec, &source, rep).and_then(|results| {
                    let mut text = String::new();
                    for r in &results {
                        let rec = Record {
                            schema_version: SCHEMA_VERSION,
                            dataset: dataset.clone(),
                            result: r.clone(),
                        };
                        let line = serde_json::to_string(&rec).map_err(|e| e.to_string())?;
                        text.push_str(&line);
                        text.push('\n');
                    }
                    report::write(&dir.join(report::rep_file_name(rep)), &text)?;
                    Ok(results)
                });
                (rep, res)
            })
            .collect()
    });

    let mut timings = Vec::new();
    let mut roc: Vec<String> = vec![String::from("replication,fpr,tpr\n"); Approach::ALL.len()];
    let mut failures = String::new();
    for (rep, outcome) in &outcomes {
        match outcome {
            Ok(results) => {
                for r in results {
                    timings.push((*rep, r.approach, r.wall_time_secs));
                    if let Some(curve) = &r.test_roc {
                        let buf = &mut roc[r.approach as usize];
                        for (fpr, tpr) in roc_corners(&curve.points) {
                            let _ = writeln!(buf, "{rep},{fpr},{tpr}");
                        }
                    }
                }
            }
            Err(e) => {
                let _ = writeln!(failures, "replication {rep}: {e}");
            }
        }
    }
    report::write_timings(dir, &timings).map_err(CliError::Runtime)?;
    for approach in spec.approaches() {
        let path = dir.join(format!("roc_{}.csv", approach.letter()));
        report::write(&path, &roc[approach as usize]).map_err(CliError::Runtime)?;
    }
    let table = if outcomes.iter().any(|(_, o)| o.is_ok()) {
        report::regenerate(dir).map_err(CliError::Runtime)?
    } else {
        String::new()
    };
    if failures.is_empty() {
        Ok(table)
    } else {
        eprint!("{table}");
        Err(CliError::Runtime(format!(
            "some replications failed:\n{failures}"
        )))
    }
}
