//! Persisted run records and the tables derived from them.
//!
//! A results directory holds one `rep_<k>.jsonl` per replication (one line
//! per approach), `timings.csv`, `meta.json` and the derived `aggregate.csv`,
//! `varfreq.csv`, `comparison.txt` and `roc_<approach>.csv`. Everything except
//! the ROC files and timings is rebuilt from the JSON lines by [`regenerate`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gate_core::metrics::{aggregate, AggregateRow, MeanSd};
use gate_core::{Approach, RunResult};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// One line of a `rep_<k>.jsonl` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub schema_version: u32,
    pub dataset: String,
    #[serde(flatten)]
    pub result: RunResult,
}

/// Run-level facts that are not per replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: u32,
    pub dataset: String,
    pub var_names: Vec<String>,
    pub truth_active: Option<Vec<usize>>,
}

pub const AGGREGATE_HEADER: &str = "approach,dataset,reps,n_mean,n_sd,train_acc_mean,train_acc_sd,\
train_auc_mean,train_auc_sd,test_acc_mean,test_acc_sd,test_auc_mean,test_auc_sd,tpr_mean,tpr_sd,\
fpr_mean,fpr_sd,n_vars_mean,n_vars_sd,time_min_mean,sd_flagged";

fn rep_number(path: &Path) -> Option<u64> {
    let name = path.file_name()?.to_str()?;
    name.strip_prefix("rep_")?
        .strip_suffix(".jsonl")?
        .parse()
        .ok()
}

/// `rep_<k>.jsonl` files in replication order.
pub fn rep_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>, String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("cannot read {}: {e}", dir.display()))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| e.to_string())?.path();
        if let Some(k) = rep_number(&path) {
            out.push((k, path));
        }
    }
    out.sort();
    Ok(out)
}

pub fn rep_file_name(replication: u64) -> String {
    format!("rep_{replication}.jsonl")
}

pub fn parse_records(path: &Path) -> Result<Vec<Record>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{} line {}", path.display(), k + 1);
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| format!("{}: corrupt record: {e}", at()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(format!(
                "{}: unsupported schema version {v} (this build reads version {SCHEMA_VERSION})",
                at()
            )),
            None => return Err(format!("{}: record has no schema_version", at())),
        }
        let record: Record =
            serde_json::from_value(value).map_err(|e| format!("{}: corrupt record: {e}", at()))?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_records(dir: &Path) -> Result<Vec<Record>, String> {
    let mut all = Vec::new();
    for (_, path) in rep_files(dir)? {
        all.extend(parse_records(&path)?);
    }
    if all.is_empty() {
        return Err(format!("no results in {}", dir.display()));
    }
    all.sort_by_key(|r| (r.result.replication, r.result.approach));
    Ok(all)
}

/// Wall times keyed by replication and approach; absent file gives an empty map.
pub fn load_timings(dir: &Path) -> Result<BTreeMap<(u64, Approach), f64>, String> {
    let path = dir.join("timings.csv");
    let mut out = BTreeMap::new();
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(out);
    };
    for (k, line) in text.lines().enumerate().skip(1) {
        let bad = || format!("{} line {}: malformed timing row", path.display(), k + 1);
        let mut f = line.split(',');
        let rep: u64 = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let approach = f
            .next()
            .and_then(|s| s.chars().next())
            .and_then(Approach::from_letter)
            .ok_or_else(bad)?;
        let secs: f64 = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        out.insert((rep, approach), secs);
    }
    Ok(out)
}

pub fn write_timings(dir: &Path, rows: &[(u64, Approach, f64)]) -> Result<(), String> {
    let mut s = String::from("replication,approach,wall_time_secs\n");
    for (rep, a, secs) in rows {
        let _ = writeln!(s, "{rep},{},{secs:.6}", a.letter());
    }
    write(&dir.join("timings.csv"), &s)
}

pub fn write(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn fmt_pair(m: &MeanSd) -> String {
    format!("{:.6},{:.6}", m.mean, m.sd)
}

fn fmt_opt_pair(m: &Option<MeanSd>) -> String {
    m.as_ref().map_or_else(|| ",".to_string(), fmt_pair)
}

/// Per-approach summaries in approach order.
pub fn summarize(
    records: &[Record],
    timings: &BTreeMap<(u64, Approach), f64>,
) -> Result<Vec<(Approach, String, AggregateRow)>, String> {
    let mut rows = Vec::new();
    for approach in Approach::ALL {
        let group: Vec<&Record> = records
            .iter()
            .filter(|r| r.result.approach == approach)
            .collect();
        let Some(first) = group.first() else {
            continue;
        };
        let metrics: Vec<_> = group
            .iter()
            .map(|r| {
                let mut m = r.result.replication_metrics();
                m.wall_time_secs = timings
                    .get(&(r.result.replication, approach))
                    .copied()
                    .unwrap_or(f64::NAN);
                m
            })
            .collect();
        let row = aggregate(&metrics).map_err(|e| e.to_string())?;
        rows.push((approach, first.dataset.clone(), row));
    }
    Ok(rows)
}

pub fn aggregate_csv(rows: &[(Approach, String, AggregateRow)]) -> String {
    let mut s = String::from(AGGREGATE_HEADER);
    s.push('\n');
    for (a, dataset, r) in rows {
        let time = if r.wall_time_secs.mean.is_finite() {
            format!("{:.6}", r.wall_time_secs.mean / 60.0)
        } else {
            String::new()
        };
        let _ = writeln!(
            s,
            "{},{dataset},{},{},{},{},{},{},{},{},{},{},{}",
            a.letter(),
            r.reps,
            fmt_pair(&r.n),
            fmt_pair(&r.train_acc),
            fmt_opt_pair(&r.train_auc),
            fmt_pair(&r.test_acc),
            fmt_opt_pair(&r.test_auc),
            fmt_opt_pair(&r.tpr),
            fmt_opt_pair(&r.fpr),
            fmt_pair(&r.n_vars),
            time,
            r.sd_flagged(),
        );
    }
    s
}

/// Fixed-width text table comparing approaches.
pub fn comparison_text(rows: &[(Approach, String, AggregateRow)]) -> String {
    let cell = |m: &Option<MeanSd>| {
        m.as_ref().map_or_else(
            || "-".to_string(),
            |m| format!("{:.3} ({:.3})", m.mean, m.sd),
        )
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<4}{:<38}{:>6}{:>20}{:>17}{:>17}{:>17}{:>17}{:>17}{:>17}",
        "", "approach", "reps", "n", "test ACC", "test AUC", "train ACC", "TPR", "FPR", "#vars"
    );
    for (a, _, r) in rows {
        let _ = writeln!(
            s,
            "{:<4}{:<38}{:>6}{:>20}{:>17}{:>17}{:>17}{:>17}{:>17}{:>17}",
            format!("({})", a.letter()),
            a.label(),
            r.reps,
            format!("{:.1} ({:.1})", r.n.mean, r.n.sd),
            cell(&Some(r.test_acc)),
            cell(&r.test_auc),
            cell(&Some(r.train_acc)),
            cell(&r.tpr),
            cell(&r.fpr),
            format!("{:.2} ({:.2})", r.n_vars.mean, r.n_vars.sd),
        );
    }
    if rows.iter().any(|(_, _, r)| r.sd_flagged()) {
        s.push_str("sd reported as 0 for single-replication rows\n");
    }
    s
}

/// Selection counts per variable over GATE replications.
pub fn varfreq_csv(records: &[Record], meta: Option<&Meta>) -> String {
    let gate: Vec<&Record> = records
        .iter()
        .filter(|r| r.result.approach == Approach::Gate)
        .collect();
    let p = meta.map_or_else(
        || {
            gate.iter()
                .flat_map(|r| r.result.selected_vars.iter().map(|&j| j + 1))
                .max()
                .unwrap_or(0)
        },
        |m| m.var_names.len(),
    );
    let mut counts = vec![0usize; p];
    for r in &gate {
        for &j in &r.result.selected_vars {
            if j < p {
                counts[j] += 1;
            }
        }
    }
    let mut s = String::from("var_index,var_name,truly_active,selected,frequency\n");
    for (j, &c) in counts.iter().enumerate() {
        let name = meta.map_or_else(|| format!("col{j}"), |m| m.var_names[j].clone());
        let active = meta
            .and_then(|m| m.truth_active.as_ref())
            .map_or_else(String::new, |t| t.contains(&j).to_string());
        let freq = if gate.is_empty() {
            0.0
        } else {
            c as f64 / gate.len() as f64
        };
        let _ = writeln!(s, "{j},{name},{active},{c},{freq:.6}");
    }
    s
}

pub fn load_meta(dir: &Path) -> Result<Option<Meta>, String> {
    let path = dir.join("meta.json");
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(None);
    };
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| format!("{}: corrupt metadata: {e}", path.display()))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        other => {
            return Err(format!(
                "{}: unsupported schema version {} (this build reads version {SCHEMA_VERSION})",
                path.display(),
                other.map_or_else(|| "<missing>".to_string(), |v| v.to_string())
            ))
        }
    }
    serde_json::from_value(value)
        .map(Some)
        .map_err(|e| format!("{}: corrupt metadata: {e}", path.display()))
}

/// Rebuilds `aggregate.csv`, `varfreq.csv` and `comparison.txt` from the
/// persisted records and returns the comparison table.
pub fn regenerate(dir: &Path) -> Result<String, String> {
    let records = load_records(dir)?;
    let timings = load_timings(dir)?;
    let meta = load_meta(dir)?;
    let rows = summarize(&records, &timings)?;
    let table = comparison_text(&rows);
    write(&dir.join("aggregate.csv"), &aggregate_csv(&rows))?;
    write(
        &dir.join("varfreq.csv"),
        &varfreq_csv(&records, meta.as_ref()),
    )?;
    write(&dir.join("comparison.txt"), &table)?;
    Ok(table)
}
