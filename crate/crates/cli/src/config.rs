//! Experiment configuration: a TOML document with `data`, `train`, `purify`,
//! `sweep`, and `output` sections. Unknown keys are rejected; every random
//! choice has an explicit seed. `--set section.key=value` overrides are
//! applied to the parsed document before deserialization.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strata_core::purify::PurifyMethod;
use strata_core::synthetic::FeatureEncoding;
use strata_core::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    pub purify: PurifySection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// SD-K mixtures generated in-process.
    Synthetic,
    /// Pre-existing CSV files (`train_csv`, `test_csv`).
    Csv,
    /// IDX image/label pairs (`images`, `labels`).
    Idx,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: SourceKind,
    /// Per-component sample counts for the synthetic source; component i uses
    /// built-in distribution i+1 (or the i-th entry of `distribution_file`).
    pub counts: Vec<usize>,
    /// Component counts of the synthetic held-out test set; empty means
    /// split the generated set instead.
    pub test_counts: Vec<usize>,
    pub encoding: FeatureEncoding,
    pub distribution_file: Option<PathBuf>,
    pub seed: u64,
    pub test_seed: u64,
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub classes: Vec<usize>,
    pub per_class: usize,
    /// Fraction of corrupted training labels.
    pub error_rate: f64,
    pub error_seed: u64,
    pub split_fraction: f64,
    pub stratified: bool,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: SourceKind::Synthetic,
            counts: vec![700, 300],
            test_counts: Vec::new(),
            encoding: FeatureEncoding::OneHot,
            distribution_file: None,
            seed: 0,
            test_seed: 1_000_003,
            train_csv: None,
            test_csv: None,
            images: None,
            labels: None,
            classes: vec![4, 8],
            per_class: 375,
            error_rate: 0.0,
            error_seed: 17,
            split_fraction: 0.8,
            stratified: true,
            split_seed: 23,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PurifySection {
    pub iterations: usize,
    pub remove_per_iter: usize,
    pub method: PurifyMethod,
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for PurifySection {
    fn default() -> Self {
        PurifySection {
            iterations: 20,
            remove_per_iter: 10,
            method: PurifyMethod::LooRetrain,
            warm_start: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Total sample count per composition (train + test before the split).
    pub total: usize,
    /// Grid resolution for the SD-2 composition sweep.
    pub grid_points: usize,
    pub replicates: usize,
    /// Number of mixture components swept over (2 or 3).
    pub components: usize,
    /// Simplex step for the SD-3 sweep.
    pub simplex_step: usize,
    /// Error-rate grid for the mislabeling sweep.
    pub error_rates: Vec<f64>,
    pub seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            total: 600,
            grid_points: 11,
            replicates: 5,
            components: 2,
            simplex_step: 100,
            error_rates: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
        }
    }
}

/// Splits `key=value`; the value is parsed as a TOML literal, falling back to
/// a string.
fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value), CliError> {
    let (key, value) = raw.split_once('=').ok_or_else(|| {
        CliError::usage(format!("--set expects key=value, got `{raw}`"))
    })?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::usage(format!("bad --set key `{key}`")));
    }
    let parsed: toml::Value = match format!("v = {}", value.trim()).parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(value.trim().to_string()),
    };
    Ok((path, parsed))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) {
    if path.len() == 1 {
        table.insert(path[0].clone(), value);
        return;
    }
    let entry = table
        .entry(path[0].clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if !entry.is_table() {
        *entry = toml::Value::Table(toml::Table::new());
    }
    apply_override(entry.as_table_mut().unwrap(), &path[1..], value);
}

/// Loads the config file (or starts from defaults when absent) and applies
/// `--set` overrides.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                CliError::usage(format!("cannot read config {}: {e}", p.display()))
            })?;
            text.parse().map_err(|e| {
                CliError::usage(format!("config {} does not parse: {e}", p.display()))
            })?
        }
        None => toml::Table::new(),
    };
    for raw in overrides {
        let (key_path, value) = parse_override(raw)?;
        apply_override(&mut table, &key_path, value);
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::usage(format!("invalid config: {e}")))
}

/// Serializes the fully resolved config next to the outputs so a run can be
/// reproduced from it verbatim.
pub fn write_resolved(cfg: &ExperimentConfig, out_dir: &Path, command: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join(format!("{command}.resolved"));
    let text = toml::to_string_pretty(cfg)
        .map_err(|e| CliError::usage(format!("cannot serialize config: {e}")))?;
    fs::write(&path, text)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}
