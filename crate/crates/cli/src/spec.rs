//! Experiment files: parsing, defaults and validation.

use std::fs;
use std::path::{Path, PathBuf};

use gate_core::data::{DatasetManifest, MeanMode, SyntheticConfig};
use gate_core::{Approach, GateConfig, TrueModelSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        case: u8,
        #[serde(default = "default_p")]
        p: usize,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_test_size")]
        test_size: usize,
        #[serde(default)]
        mean_mode: MeanMode,
    },
    Csv {
        manifest: PathBuf,
    },
}

fn default_p() -> usize {
    100
}

fn default_n() -> usize {
    SyntheticConfig::default().n
}

fn default_test_size() -> usize {
    SyntheticConfig::default().test_size
}

impl DatasetSpec {
    pub fn synthetic(case: u8) -> Self {
        DatasetSpec::Synthetic {
            case,
            p: default_p(),
            n: default_n(),
            test_size: default_test_size(),
            mean_mode: MeanMode::default(),
        }
    }

    /// Short name used in output tables.
    pub fn label(&self) -> String {
        match self {
            DatasetSpec::Synthetic { case, .. } => format!("case{case}"),
            DatasetSpec::Csv { manifest } => manifest
                .file_stem()
                .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: DatasetSpec,
    pub gate: GateConfig,
    /// Comparison approaches run next to GATE, by letter (`B`, `C`, `D`).
    pub baselines: Vec<char>,
    pub replications: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::synthetic(1),
            gate: GateConfig::default(),
            baselines: Vec::new(),
            replications: 1,
            output_dir: PathBuf::from("results"),
            threads: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text =
            fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut spec: Self =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if let DatasetSpec::Csv { manifest } = &mut spec.dataset {
            if manifest.is_relative() {
                if let Some(dir) = path.parent() {
                    *manifest = dir.join(&*manifest);
                }
            }
        }
        Ok(spec)
    }

    pub fn approaches(&self) -> Vec<Approach> {
        let mut out = vec![Approach::Gate];
        for &c in &self.baselines {
            if let Some(a) = Approach::from_letter(c) {
                if !out.contains(&a) {
                    out.push(a);
                }
            }
        }
        out.sort();
        out
    }

    /// Every problem found, each naming the offending field.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.replications < 1 {
            v.push("replications: must be at least 1".to_string());
        }
        for &c in &self.baselines {
            match Approach::from_letter(c) {
                Some(Approach::Gate) | None => v.push(format!(
                    "baselines: unknown approach `{c}` (expected B, C or D)"
                )),
                Some(_) => {}
            }
        }
        let p = match &self.dataset {
            DatasetSpec::Synthetic {
                case,
                p,
                n,
                test_size,
                ..
            } => {
                if let Err(e) = TrueModelSpec::case(*case, *p) {
                    v.push(format!("dataset: {e}"));
                }
                if n <= test_size {
                    v.push(format!(
                        "dataset.n: {n} must exceed dataset.test_size {test_size}"
                    ));
                }
                let train = n.saturating_sub(*test_size);
                if train < self.gate.n0 + self.gate.n_q {
                    v.push(format!(
                        "dataset: {train} training rows cannot hold gate.n0 + gate.n_q = {}",
                        self.gate.n0 + self.gate.n_q
                    ));
                }
                Some(*p)
            }
            DatasetSpec::Csv { manifest } => match DatasetManifest::from_file(manifest) {
                Ok(m) => {
                    if !m.path.is_file() {
                        v.push(format!(
                            "dataset.manifest: data file {} not found",
                            m.path.display()
                        ));
                    }
                    None
                }
                Err(e) => {
                    v.push(format!("dataset.manifest: {e}"));
                    None
                }
            },
        };
        v.extend(
            self.gate
                .violations(p)
                .into_iter()
                .map(|m| format!("gate: {m}")),
        );
        v
    }
}
