//! Staged pipeline orchestration: synth -> extract -> select -> train ->
//! evaluate -> predict -> report.
//!
//! Every stage reads its inputs from disk and writes its outputs atomically,
//! so stages can be run separately or end to end. Artifacts embed the
//! configuration hash and seed; downstream stages refuse inputs produced
//! under a different configuration. Failures are tagged with the stage name
//! so callers can map them onto exit codes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::ensemble::{combine_predictions, compute_weights, EnsembleWeights, ValidationErrors};
use crate::error::{Error, Result};
use crate::evaluation::{compute_metrics, kfold_cross_validate, r2_gap, CvReport, MetricsReport};
use crate::features::{assemble_feature_table, FeatureTable};
use crate::io::{
    parse_config_text, read_dataset, read_features_csv, write_atomic, write_dataset,
    write_features_csv,
};
use crate::nn::serialize::{self, ModelContainer, ModelMeta};
use crate::nn::{Dataset, FitLoss, LossKind, Optimizer, TrainConfig, TrainedModel};
use crate::regressors::{fit_elasticnet, fit_member, MemberId};
use crate::selection::{
    fixed_selected_features, minmax_fit_transform, selection_pipeline, train_test_split,
    SelectionConfig,
};
use crate::synth::{generate_synthetic_dataset, SyntheticSpec};

/// Pipeline stages in execution order.
pub const STAGES: [&str; 7] = [
    "synth", "extract", "select", "train", "evaluate", "predict", "report",
];

/// Nonzero process exit code for a failure in the given stage.
pub fn stage_exit_code(stage: &str) -> i32 {
    match STAGES.iter().position(|s| *s == stage) {
        Some(i) => 10 + i as i32,
        None => 1,
    }
}

/// Feature selection mode: the published fixed feature list, or the full
/// data-driven selection pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Fixed,
    Full,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Fixed => "paper_fixed",
            Mode::Full => "run_pipeline",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "paper_fixed" => Ok(Mode::Fixed),
            "run_pipeline" => Ok(Mode::Full),
            _ => Err(Error::Config(format!(
                "unknown mode '{s}' (want paper_fixed or run_pipeline)"
            ))),
        }
    }
}

/// All run parameters. The canonical serialization of this struct is hashed
/// into every artifact.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub seed: u64,
    pub mode: Mode,
    pub records: usize,
    pub noise_std: f64,
    pub max_cloud: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub folds: usize,
    pub validation_fraction: f64,
    pub selection: SelectionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            mode: Mode::Fixed,
            records: 557,
            noise_std: 300.0,
            max_cloud: 0.6,
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 20,
            folds: 10,
            validation_fraction: 0.15,
            selection: SelectionConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Build from flat key/value pairs, with defaults for absent keys and an
    /// error for unknown keys.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        for (k, v) in map {
            let bad = |what: &str| Error::Config(format!("bad {what} value '{v}'"));
            match k.as_str() {
                "seed" => cfg.seed = v.parse().map_err(|_| bad("seed"))?,
                "mode" => cfg.mode = Mode::parse(v)?,
                "records" => cfg.records = v.parse().map_err(|_| bad("records"))?,
                "noise_std" => cfg.noise_std = v.parse().map_err(|_| bad("noise_std"))?,
                "max_cloud" => cfg.max_cloud = v.parse().map_err(|_| bad("max_cloud"))?,
                "epochs" => cfg.epochs = v.parse().map_err(|_| bad("epochs"))?,
                "batch_size" => cfg.batch_size = v.parse().map_err(|_| bad("batch_size"))?,
                "learning_rate" => {
                    cfg.learning_rate = v.parse().map_err(|_| bad("learning_rate"))?
                }
                "patience" => cfg.patience = v.parse().map_err(|_| bad("patience"))?,
                "folds" => cfg.folds = v.parse().map_err(|_| bad("folds"))?,
                "validation_fraction" => {
                    cfg.validation_fraction = v.parse().map_err(|_| bad("validation_fraction"))?
                }
                "iqr_factor" => cfg.selection.iqr_factor = v.parse().map_err(|_| bad("iqr_factor"))?,
                "variance_min" => {
                    cfg.selection.variance_min = v.parse().map_err(|_| bad("variance_min"))?
                }
                "significance_p" => {
                    cfg.selection.significance_p = v.parse().map_err(|_| bad("significance_p"))?
                }
                "corr_max" => cfg.selection.corr_max = v.parse().map_err(|_| bad("corr_max"))?,
                "cramers_v_max" => {
                    cfg.selection.cramers_v_max = v.parse().map_err(|_| bad("cramers_v_max"))?
                }
                _ => return Err(Error::Config(format!("unknown config key '{k}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<PipelineConfig> {
        PipelineConfig::from_map(&parse_config_text(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records < 20 {
            return Err(Error::Config("records must be >= 20".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(Error::Config("validation_fraction must be in (0, 0.5)".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.max_cloud > 0.0 && self.max_cloud <= 1.0) {
            return Err(Error::Config("max_cloud must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// Canonical flat serialization; the basis of the config hash.
    pub fn canonical_string(&self) -> String {
        format!(
            "batch_size={}\ncorr_max={}\ncramers_v_max={}\nepochs={}\nfolds={}\n\
             iqr_factor={}\nlearning_rate={}\nmax_cloud={}\nmode={}\nnoise_std={}\n\
             patience={}\nrecords={}\nseed={}\nsignificance_p={}\nvalidation_fraction={}\n\
             variance_min={}\n",
            self.batch_size,
            self.selection.corr_max,
            self.selection.cramers_v_max,
            self.epochs,
            self.folds,
            self.selection.iqr_factor,
            self.learning_rate,
            self.max_cloud,
            self.mode.name(),
            self.noise_std,
            self.patience,
            self.records,
            self.seed,
            self.selection.significance_p,
            self.validation_fraction,
            self.selection.variance_min,
        )
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn train_config(&self, member_index: usize) -> TrainConfig {
        TrainConfig {
            optimizer: Optimizer::Adam {
                lr: self.learning_rate,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed.wrapping_add(member_index as u64 + 1),
            patience: self.patience,
            loss: FitLoss::new(LossKind::Mse),
        }
    }
}

/// Test rows whose targets can be consumed exactly once: taking the targets
/// consumes the set, making repeated test evaluation a type error.
#[derive(Debug)]
pub struct GuardedTestSet {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl GuardedTestSet {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Self {
        GuardedTestSet { inputs, targets }
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Consume the set, releasing the targets for the single final scoring.
    pub fn take(self) -> (Vec<Vec<f64>>, Vec<f64>) {
        (self.inputs, self.targets)
    }
}

// ---- artifact paths -------------------------------------------------------

pub fn features_path(out_dir: &Path) -> PathBuf {
    out_dir.join("features.csv")
}

pub fn selected_path(out_dir: &Path) -> PathBuf {
    out_dir.join("selected.txt")
}

pub fn split_path(out_dir: &Path) -> PathBuf {
    out_dir.join("split.csv")
}

pub fn selection_report_path(out_dir: &Path) -> PathBuf {
    out_dir.join("selection_report.csv")
}

pub fn scaling_path(out_dir: &Path) -> PathBuf {
    out_dir.join("scaling.csv")
}

pub fn weights_path(out_dir: &Path) -> PathBuf {
    out_dir.join("weights.csv")
}

pub fn cv_report_path(out_dir: &Path) -> PathBuf {
    out_dir.join("cv_report.csv")
}

pub fn metrics_path(out_dir: &Path) -> PathBuf {
    out_dir.join("metrics.csv")
}

pub fn predictions_path(out_dir: &Path) -> PathBuf {
    out_dir.join("predictions.csv")
}

pub fn summary_path(out_dir: &Path) -> PathBuf {
    out_dir.join("summary.csv")
}

pub fn model_path(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(format!("model_{name}.rcns"))
}

/// Remove leftover temp files from an interrupted stage so reruns start from
/// a clean directory.
fn remove_partial_artifacts(dir: &Path) {
    if let Ok(entries) = fs::read_dir(dir) {
        for entry in entries.flatten() {
            let p = entry.path();
            if p.extension().is_some_and(|e| e == "tmp") {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn run_stage<T>(
    stage: &'static str,
    out_dir: &Path,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    match f() {
        Ok(v) => Ok(v),
        Err(e) => {
            remove_partial_artifacts(out_dir);
            Err(e.in_stage(stage))
        }
    }
}

// ---- stages ---------------------------------------------------------------

/// Stage 1: generate a synthetic dataset into `data_dir`.
pub fn stage_synth(config: &PipelineConfig, data_dir: &Path) -> Result<()> {
    run_stage("synth", data_dir, || {
        let spec = SyntheticSpec {
            records: config.records,
            noise_std: config.noise_std,
            max_cloud: config.max_cloud,
            ..Default::default()
        };
        let data = generate_synthetic_dataset(&spec, config.seed)?;
        write_dataset(data_dir, &data.records, &data.bundles)?;
        // generating function, for diagnostics only
        let mut truth = format!(
            "# config_hash={}\n# intercept={}\n# noise_std={}\nfeature,coefficient,center,scale\n",
            config.hash(),
            data.truth.intercept,
            spec.noise_std
        );
        for i in 0..data.truth.feature_names.len() {
            truth.push_str(&format!(
                "{},{},{},{}\n",
                data.truth.feature_names[i],
                data.truth.coefficients[i],
                data.truth.centers[i],
                data.truth.scales[i],
            ));
        }
        write_atomic(&data_dir.join("truth.csv"), &truth)?;
        Ok(())
    })
}

/// Stage 2: extract the engineered feature table from `data_dir`.
pub fn stage_extract(config: &PipelineConfig, data_dir: &Path, out_dir: &Path) -> Result<()> {
    run_stage("extract", out_dir, || {
        fs::create_dir_all(out_dir)?;
        let (records, bundles) = read_dataset(data_dir)?;
        let table = assemble_feature_table(&records, &bundles, config.max_cloud)?;
        write_features_csv(&features_path(out_dir), &table, &config.hash(), config.seed)?;
        Ok(())
    })
}

fn load_features_checked(config: &PipelineConfig, out_dir: &Path) -> Result<FeatureTable> {
    let (table, hash, seed) = read_features_csv(&features_path(out_dir))?;
    if hash != config.hash() {
        return Err(Error::Config(format!(
            "features.csv was produced under config {hash}, current config is {}",
            config.hash()
        )));
    }
    if seed != config.seed {
        return Err(Error::Config(format!(
            "features.csv was produced with seed {seed}, current seed is {}",
            config.seed
        )));
    }
    Ok(table)
}

/// Train-median imputation: fill missing cells of every column with the
/// median of the column's present training values.
fn impute_with_train_medians(
    table: &mut FeatureTable,
    train_rows: &[usize],
) -> Result<Vec<f64>> {
    let mut medians = Vec::with_capacity(table.n_cols());
    for c in 0..table.n_cols() {
        let mut vals = table.column_values(c, train_rows);
        if vals.is_empty() {
            return Err(Error::Selection(format!(
                "column {} has no observed training values",
                table.names()[c]
            )));
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = vals.len();
        let median = if m % 2 == 1 {
            vals[m / 2]
        } else {
            0.5 * (vals[m / 2 - 1] + vals[m / 2])
        };
        medians.push(median);
        for r in 0..table.n_rows() {
            if table.get(r, c).is_none() {
                table.set(r, c, Some(median));
            }
        }
    }
    Ok(medians)
}

/// Row roles after splitting and (optionally) outlier removal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRoles {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub excluded: Vec<usize>,
}

fn write_split(out_dir: &Path, roles: &SplitRoles, n_rows: usize) -> Result<()> {
    let mut role = vec![""; n_rows];
    for &r in &roles.train {
        role[r] = "train";
    }
    for &r in &roles.test {
        role[r] = "test";
    }
    for &r in &roles.excluded {
        role[r] = "excluded";
    }
    let mut out = String::from("row,role\n");
    for (i, r) in role.iter().enumerate() {
        out.push_str(&format!("{i},{r}\n"));
    }
    write_atomic(&split_path(out_dir), &out)
}

fn read_split(out_dir: &Path) -> Result<SplitRoles> {
    let path = split_path(out_dir);
    let text = fs::read_to_string(&path)?;
    let mut roles = SplitRoles {
        train: Vec::new(),
        test: Vec::new(),
        excluded: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate().skip(1) {
        if raw.trim().is_empty() {
            continue;
        }
        let (row, role) = raw.split_once(',').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: "expected row,role".into(),
        })?;
        let row: usize = row.trim().parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: format!("bad row index '{row}'"),
        })?;
        match role.trim() {
            "train" => roles.train.push(row),
            "test" => roles.test.push(row),
            "excluded" => roles.excluded.push(row),
            other => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("unknown role '{other}'"),
                })
            }
        }
    }
    Ok(roles)
}

fn read_selected(out_dir: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(selected_path(out_dir))?;
    let names: Vec<String> = text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if names.is_empty() {
        return Err(Error::Selection("selected.txt lists no features".into()));
    }
    Ok(names)
}

/// Stage 3: split rows, impute, scale, and choose the modeling features.
pub fn stage_select(config: &PipelineConfig, out_dir: &Path) -> Result<()> {
    run_stage("select", out_dir, || {
        let table = load_features_checked(config, out_dir)?;
        let (train_rows, test_rows) = train_test_split(table.n_rows(), config.seed)?;

        let mut imputed = table.clone();
        impute_with_train_medians(&mut imputed, &train_rows)?;
        let (scaled, _) = minmax_fit_transform(&imputed, &train_rows)?;

        let (surviving, roles, report) = match config.mode {
            Mode::Fixed => {
                let names: Vec<String> =
                    fixed_selected_features().iter().map(|s| s.to_string()).collect();
                for n in &names {
                    if table.col_index(n).is_none() {
                        return Err(Error::Selection(format!(
                            "fixed feature {n} is not a table column"
                        )));
                    }
                }
                (
                    names,
                    SplitRoles {
                        train: train_rows,
                        test: test_rows,
                        excluded: Vec::new(),
                    },
                    None,
                )
            }
            Mode::Full => {
                let report = selection_pipeline(&scaled, &train_rows, &config.selection)?;
                let kept: std::collections::HashSet<usize> =
                    report.kept_rows.iter().copied().collect();
                let excluded: Vec<usize> = train_rows
                    .iter()
                    .copied()
                    .filter(|r| !kept.contains(r))
                    .collect();
                (
                    report.surviving.clone(),
                    SplitRoles {
                        train: report.kept_rows.clone(),
                        test: test_rows,
                        excluded,
                    },
                    Some(report),
                )
            }
        };

        write_atomic(&selected_path(out_dir), &(surviving.join("\n") + "\n"))?;
        write_split(out_dir, &roles, table.n_rows())?;

        let mut audit = String::from("feature,stage,reason\n");
        if let Some(report) = &report {
            for d in &report.dropped {
                audit.push_str(&format!(
                    "{},{},{}\n",
                    d.name,
                    d.stage,
                    d.reason.replace(',', ";")
                ));
            }
        }
        write_atomic(&selection_report_path(out_dir), &audit)?;
        Ok(())
    })
}

/// Per-feature scaling parameters plus the target standardization used for
/// training, reconstructed from `scaling.csv` by later stages.
#[derive(Debug, Clone)]
struct ScalingArtifact {
    names: Vec<String>,
    mins: Vec<f64>,
    maxs: Vec<f64>,
    medians: Vec<f64>,
    target_mean: f64,
    target_std: f64,
}

impl ScalingArtifact {
    fn scale_row(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(j, &v)| {
                let range = self.maxs[j] - self.mins[j];
                if range == 0.0 {
                    0.0
                } else {
                    (v - self.mins[j]) / range
                }
            })
            .collect()
    }

    fn to_csv(&self) -> String {
        let mut out = format!(
            "# target_mean={}\n# target_std={}\nfeature,min,max,median\n",
            self.target_mean, self.target_std
        );
        for j in 0..self.names.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.names[j], self.mins[j], self.maxs[j], self.medians[j]
            ));
        }
        out
    }

    fn from_csv(path: &Path) -> Result<ScalingArtifact> {
        let text = fs::read_to_string(path)?;
        let mut target_mean = None;
        let mut target_std = None;
        let mut names = Vec::new();
        let mut mins = Vec::new();
        let mut maxs = Vec::new();
        let mut medians = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |msg: String| Error::Parse {
                path: path.display().to_string(),
                line,
                msg,
            };
            if let Some(rest) = raw.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("target_mean=") {
                    target_mean =
                        Some(v.parse::<f64>().map_err(|_| bad(format!("bad mean '{v}'")))?);
                } else if let Some(v) = rest.strip_prefix("target_std=") {
                    target_std =
                        Some(v.parse::<f64>().map_err(|_| bad(format!("bad std '{v}'")))?);
                }
                continue;
            }
            if raw.trim().is_empty() || raw.starts_with("feature,") {
                continue;
            }
            let f: Vec<&str> = raw.split(',').collect();
            if f.len() != 4 {
                return Err(bad(format!("expected 4 fields, got {}", f.len())));
            }
            names.push(f[0].to_string());
            for (slot, cell) in [(&mut mins, f[1]), (&mut maxs, f[2]), (&mut medians, f[3])] {
                slot.push(
                    cell.parse::<f64>()
                        .map_err(|_| bad(format!("bad number '{cell}'")))?,
                );
            }
        }
        Ok(ScalingArtifact {
            names,
            mins,
            maxs,
            medians,
            target_mean: target_mean
                .ok_or_else(|| Error::Serialization("scaling.csv missing target_mean".into()))?,
            target_std: target_std
                .ok_or_else(|| Error::Serialization("scaling.csv missing target_std".into()))?,
        })
    }
}

/// Everything the modeling stages need, rebuilt deterministically from the
/// select-stage artifacts.
struct ModelingData {
    /// Scaled feature rows for every table row, selected columns only.
    rows: Vec<Vec<f64>>,
    /// Standardized targets for every table row.
    targets_std: Vec<f64>,
    /// Raw targets for every table row.
    targets_raw: Vec<f64>,
    roles: SplitRoles,
    scaling: ScalingArtifact,
    selected: Vec<String>,
}

fn prepare_modeling_data(config: &PipelineConfig, out_dir: &Path) -> Result<ModelingData> {
    let table = load_features_checked(config, out_dir)?;
    let roles = read_split(out_dir)?;
    let selected = read_selected(out_dir)?;

    let mut sub = table.select_columns(&selected)?;
    let medians = impute_with_train_medians(&mut sub, &roles.train)?;
    let (scaled, params) = minmax_fit_transform(&sub, &roles.train)?;

    let rows: Vec<Vec<f64>> = (0..scaled.n_rows())
        .map(|r| scaled.dense_row(r))
        .collect::<Result<_>>()?;
    let targets_raw = scaled.target().to_vec();

    let n_train = roles.train.len() as f64;
    let target_mean = roles.train.iter().map(|&r| targets_raw[r]).sum::<f64>() / n_train;
    let target_var = roles
        .train
        .iter()
        .map(|&r| (targets_raw[r] - target_mean).powi(2))
        .sum::<f64>()
        / n_train;
    let target_std = target_var.sqrt();
    if target_std <= 0.0 {
        return Err(Error::DegenerateInput(
            "training target is constant; nothing to model".into(),
        ));
    }
    let targets_std: Vec<f64> = targets_raw
        .iter()
        .map(|y| (y - target_mean) / target_std)
        .collect();

    let (mins, maxs): (Vec<f64>, Vec<f64>) = (0..selected.len()).map(|j| params.range(j)).unzip();
    Ok(ModelingData {
        rows,
        targets_std,
        targets_raw,
        roles,
        scaling: ScalingArtifact {
            names: selected.clone(),
            mins,
            maxs,
            medians,
            target_mean,
            target_std,
        },
        selected,
    })
}

/// Carve a validation subset from the training rows with a seeded shuffle.
fn carve_validation(
    train: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order = train.to_vec();
    order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(
        seed ^ 0x5eed_u64,
    ));
    let n_val = ((order.len() as f64 * fraction).round() as usize).max(1);
    if n_val >= order.len() {
        return Err(Error::InvalidInput(format!(
            "validation fraction {fraction} leaves no training rows"
        )));
    }
    let val = order[..n_val].to_vec();
    let fit = order[n_val..].to_vec();
    Ok((fit, val))
}

fn dataset_from(rows: &[Vec<f64>], targets: &[f64], idx: &[usize]) -> Result<Dataset> {
    Dataset::new(
        idx.iter().map(|&r| rows[r].clone()).collect(),
        idx.iter().map(|&r| targets[r]).collect(),
    )
}

/// Stage 4: fit the four members (in parallel), weight them by validation
/// error, cross-validate each on the training split, and fit the linear
/// baseline.
pub fn stage_train(config: &PipelineConfig, out_dir: &Path) -> Result<()> {
    run_stage("train", out_dir, || {
        let data = prepare_modeling_data(config, out_dir)?;
        let (fit_rows, val_rows) =
            carve_validation(&data.roles.train, config.validation_fraction, config.seed)?;
        let train_set = dataset_from(&data.rows, &data.targets_std, &fit_rows)?;
        let val_set = dataset_from(&data.rows, &data.targets_std, &val_rows)?;

        // fit the four members in parallel; results join in fixed order so
        // the run is deterministic regardless of scheduling
        let fits: Vec<Result<(TrainedModel, f64)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = MemberId::ALL
                .iter()
                .enumerate()
                .map(|(i, &id)| {
                    let train_set = &train_set;
                    let val_set = &val_set;
                    let tc = config.train_config(i);
                    scope.spawn(move || fit_member(id, train_set, val_set, &tc))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("fit thread")).collect()
        });
        let mut members = Vec::with_capacity(MemberId::ALL.len());
        for (id, fit) in MemberId::ALL.iter().zip(fits) {
            members.push((*id, fit?));
        }

        // validation errors on the raw target scale
        let raw_errors: Vec<f64> = members
            .iter()
            .map(|(_, (_, e))| e * data.scaling.target_std)
            .collect();
        let weights = compute_weights(&ValidationErrors::new(raw_errors.clone())?);

        let meta = ModelMeta {
            config_hash: config.hash(),
            seed: config.seed,
        };
        for (id, (trained, _)) in &members {
            serialize::save(
                &model_path(out_dir, id.name()),
                &ModelContainer::Neural(trained.model.clone()),
                &meta,
            )?;
        }

        let mut weights_csv = String::from("member,validation_error,weight\n");
        for ((id, _), (e, w)) in members
            .iter()
            .zip(raw_errors.iter().zip(weights.values()))
        {
            weights_csv.push_str(&format!("{},{e},{w}\n", id.name()));
        }
        write_atomic(&weights_path(out_dir), &weights_csv)?;

        // ten-fold cross-validation of each member on the training split
        let train_inputs: Vec<Vec<f64>> = data
            .roles
            .train
            .iter()
            .map(|&r| data.rows[r].clone())
            .collect();
        let train_targets: Vec<f64> =
            data.roles.train.iter().map(|&r| data.targets_std[r]).collect();
        let cv_results: Vec<Result<CvReport>> = std::thread::scope(|scope| {
            let handles: Vec<_> = MemberId::ALL
                .iter()
                .enumerate()
                .map(|(i, &id)| {
                    let inputs = &train_inputs;
                    let targets = &train_targets;
                    let tc = config.train_config(i);
                    let folds = config.folds;
                    let seed = config.seed;
                    let k = data.selected.len();
                    scope.spawn(move || {
                        kfold_cross_validate(inputs, targets, folds, seed, k, |train, val_x| {
                            // carve an early-stopping holdout from the tail of
                            // the training folds; fold targets stay unseen
                            let n_hold = (train.len() / 10).max(1);
                            let cut = train.len() - n_hold;
                            let fit_set = Dataset::new(
                                train.inputs[..cut].to_vec(),
                                train.targets[..cut].to_vec(),
                            )?;
                            let hold_set = Dataset::new(
                                train.inputs[cut..].to_vec(),
                                train.targets[cut..].to_vec(),
                            )?;
                            let (m, _) = fit_member(id, &fit_set, &hold_set, &tc)?;
                            m.predict_batch(val_x)
                        })
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("cv thread")).collect()
        });
        let mut cv_csv = String::from("member,fold,r2\n");
        for (id, cv) in MemberId::ALL.iter().zip(cv_results) {
            let cv = cv?;
            for (f, r2) in cv.fold_r2.iter().enumerate() {
                cv_csv.push_str(&format!("{},{f},{r2}\n", id.name()));
            }
            cv_csv.push_str(&format!("{},mean,{}\n", id.name(), cv.mean));
            cv_csv.push_str(&format!("{},std,{}\n", id.name(), cv.std));
        }
        write_atomic(&cv_report_path(out_dir), &cv_csv)?;

        // linear baseline on the same standardized data
        let enet = fit_elasticnet(
            &train_set.inputs,
            &train_set.targets,
            0.5,
            1e-3,
            1e-8,
            100_000,
        )?;
        serialize::save(
            &model_path(out_dir, "ElasticNet"),
            &ModelContainer::ElasticNet(enet),
            &meta,
        )?;

        write_atomic(&scaling_path(out_dir), &data.scaling.to_csv())?;
        Ok(())
    })
}

fn load_member_model(config: &PipelineConfig, out_dir: &Path, name: &str) -> Result<ModelContainer> {
    let (container, meta) = serialize::load(&model_path(out_dir, name))?;
    if meta.config_hash != config.hash() {
        return Err(Error::Config(format!(
            "model {name} was trained under a different configuration"
        )));
    }
    Ok(container)
}

fn read_weights(out_dir: &Path) -> Result<(Vec<String>, Vec<f64>, EnsembleWeights)> {
    let path = weights_path(out_dir);
    let text = fs::read_to_string(&path)?;
    let mut names = Vec::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate().skip(1) {
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: "expected member,validation_error,weight".into(),
            });
        }
        names.push(f[0].to_string());
        errors.push(f[1].parse::<f64>().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: format!("bad error '{}'", f[1]),
        })?);
    }
    let weights = compute_weights(&ValidationErrors::new(errors.clone())?);
    Ok((names, errors, weights))
}

fn predict_container(
    container: &ModelContainer,
    rows: &[Vec<f64>],
    scaling: &ScalingArtifact,
) -> Result<Vec<f64>> {
    let std_preds: Vec<f64> = match container {
        ModelContainer::Neural(m) => rows
            .iter()
            .map(|x| m.predict_scalar(x))
            .collect::<Result<_>>()?,
        ModelContainer::ElasticNet(p) => p.predict_batch(rows)?,
    };
    Ok(std_preds
        .iter()
        .map(|p| p * scaling.target_std + scaling.target_mean)
        .collect())
}

/// One model's row in the evaluation table.
#[derive(Debug, Clone)]
pub struct ModelScore {
    pub name: String,
    pub test: MetricsReport,
    pub train_r2: Option<f64>,
    pub r2_diff: Option<f64>,
}

/// Evaluation artifacts, also returned in memory for programmatic use.
#[derive(Debug, Clone)]
pub struct EvaluationOutcome {
    pub scores: Vec<ModelScore>,
    pub ensemble: ModelScore,
    pub weights: Vec<(String, f64, f64)>,
}

/// Stage 5: score every member, the ensemble, and the baseline on the test
/// rows (touched exactly once), plus the training split for the overfit gap.
pub fn stage_evaluate(
    config: &PipelineConfig,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<EvaluationOutcome> {
    run_stage("evaluate", out_dir, || {
        let data = prepare_modeling_data(config, out_dir)?;
        let scaling = ScalingArtifact::from_csv(&scaling_path(out_dir))?;
        let (member_names, errors, weights) = read_weights(out_dir)?;
        let k = data.selected.len();

        let test_inputs: Vec<Vec<f64>> = data
            .roles
            .test
            .iter()
            .map(|&r| data.rows[r].clone())
            .collect();
        let test_targets_raw: Vec<f64> =
            data.roles.test.iter().map(|&r| data.targets_raw[r]).collect();
        let guarded = GuardedTestSet::new(test_inputs, test_targets_raw);

        let train_inputs: Vec<Vec<f64>> = data
            .roles
            .train
            .iter()
            .map(|&r| data.rows[r].clone())
            .collect();
        let train_targets_raw: Vec<f64> =
            data.roles.train.iter().map(|&r| data.targets_raw[r]).collect();

        let mut containers = Vec::new();
        for name in &member_names {
            containers.push(load_member_model(config, out_dir, name)?);
        }
        let baseline = load_member_model(config, out_dir, "ElasticNet")?;

        // the single test-target access for the whole evaluation
        let (test_inputs, test_actual) = guarded.take();

        let member_test_preds: Vec<Vec<f64>> = containers
            .iter()
            .map(|c| predict_container(c, &test_inputs, &scaling))
            .collect::<Result<_>>()?;
        let member_train_preds: Vec<Vec<f64>> = containers
            .iter()
            .map(|c| predict_container(c, &train_inputs, &scaling))
            .collect::<Result<_>>()?;

        let score = |name: &str, test_pred: &[f64], train_pred: &[f64]| -> Result<ModelScore> {
            let test = compute_metrics(test_pred, &test_actual, k)?;
            let train = compute_metrics(train_pred, &train_targets_raw, k)?;
            let r2_diff = match (train.r2, test.r2) {
                (Some(a), Some(b)) => Some(r2_gap(a, b)),
                _ => None,
            };
            Ok(ModelScore {
                name: name.to_string(),
                test,
                train_r2: train.r2,
                r2_diff,
            })
        };

        let mut scores = Vec::new();
        for i in 0..member_names.len() {
            scores.push(score(
                &member_names[i],
                &member_test_preds[i],
                &member_train_preds[i],
            )?);
        }

        let ens_test = combine_predictions(&member_test_preds, &weights)?;
        let ens_train = combine_predictions(&member_train_preds, &weights)?;
        let ensemble = score("Ensemble", &ens_test, &ens_train)?;

        let base_test = predict_container(&baseline, &test_inputs, &scaling)?;
        let base_train = predict_container(&baseline, &train_inputs, &scaling)?;
        scores.push(score("ElasticNet", &base_test, &base_train)?);

        // metrics.csv
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut metrics_csv =
            String::from("model,mae,rmse,test_r2,adjusted_r2,train_r2,r2_diff,n,k\n");
        for s in scores.iter().chain([&ensemble]) {
            metrics_csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                s.name,
                s.test.mae,
                s.test.rmse,
                fmt_opt(s.test.r2),
                fmt_opt(s.test.adjusted_r2),
                fmt_opt(s.train_r2),
                fmt_opt(s.r2_diff),
                s.test.n,
                s.test.k,
            ));
        }
        write_atomic(&metrics_path(out_dir), &metrics_csv)?;

        // predictions.csv over the test rows, with plot coordinates
        let records = crate::io::read_fields_csv(&data_dir.join("fields.csv"))?;
        let mut pred_csv = String::from("latitude,longitude,actual,predicted,error\n");
        for (i, &row) in data.roles.test.iter().enumerate() {
            let r = records.get(row).ok_or_else(|| {
                Error::Ingestion(format!("fields.csv has no row {row} for prediction output"))
            })?;
            pred_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.latitude,
                r.longitude,
                test_actual[i],
                ens_test[i],
                ens_test[i] - test_actual[i],
            ));
        }
        write_atomic(&predictions_path(out_dir), &pred_csv)?;

        Ok(EvaluationOutcome {
            scores,
            ensemble,
            weights: member_names
                .iter()
                .cloned()
                .zip(errors.iter().copied().zip(weights.values().iter().copied()))
                .map(|(n, (e, w))| (n, e, w))
                .collect(),
        })
    })
}

/// Stage 6: ensemble predictions for every plot in a data directory.
pub fn stage_predict(config: &PipelineConfig, data_dir: &Path, out_dir: &Path) -> Result<()> {
    run_stage("predict", out_dir, || {
        let scaling = ScalingArtifact::from_csv(&scaling_path(out_dir))?;
        let (member_names, _, weights) = read_weights(out_dir)?;
        let mut containers = Vec::new();
        for name in &member_names {
            containers.push(load_member_model(config, out_dir, name)?);
        }

        let (records, bundles) = read_dataset(data_dir)?;
        let table = assemble_feature_table(&records, &bundles, config.max_cloud)?;
        let cols: Vec<usize> = scaling
            .names
            .iter()
            .map(|n| {
                table
                    .col_index(n)
                    .ok_or_else(|| Error::Selection(format!("unknown feature {n}")))
            })
            .collect::<Result<_>>()?;

        let mut rows = Vec::with_capacity(table.n_rows());
        for r in 0..table.n_rows() {
            let raw: Vec<f64> = cols
                .iter()
                .enumerate()
                .map(|(j, &c)| table.get(r, c).unwrap_or(scaling.medians[j]))
                .collect();
            rows.push(scaling.scale_row(&raw));
        }

        let member_preds: Vec<Vec<f64>> = containers
            .iter()
            .map(|c| predict_container(c, &rows, &scaling))
            .collect::<Result<_>>()?;
        let combined = combine_predictions(&member_preds, &weights)?;

        let mut out = String::from("latitude,longitude,predicted\n");
        for (r, p) in records.iter().zip(&combined) {
            out.push_str(&format!("{},{},{p}\n", r.latitude, r.longitude));
        }
        write_atomic(&out_dir.join("predictions_all.csv"), &out)?;
        Ok(())
    })
}

/// Stage 7: one summary table joining test metrics, ensemble weights, and
/// cross-validation scores.
pub fn stage_report(out_dir: &Path) -> Result<()> {
    run_stage("report", out_dir, || {
        let metrics = fs::read_to_string(metrics_path(out_dir))?;
        let cv = fs::read_to_string(cv_report_path(out_dir))?;
        let weights = fs::read_to_string(weights_path(out_dir))?;

        let mut weight_of: BTreeMap<String, String> = BTreeMap::new();
        for raw in weights.lines().skip(1) {
            let f: Vec<&str> = raw.split(',').collect();
            if f.len() == 3 {
                weight_of.insert(f[0].to_string(), f[2].to_string());
            }
        }
        let mut cv_mean: BTreeMap<String, String> = BTreeMap::new();
        let mut cv_std: BTreeMap<String, String> = BTreeMap::new();
        for raw in cv.lines().skip(1) {
            let f: Vec<&str> = raw.split(',').collect();
            if f.len() == 3 && f[1] == "mean" {
                cv_mean.insert(f[0].to_string(), f[2].to_string());
            }
            if f.len() == 3 && f[1] == "std" {
                cv_std.insert(f[0].to_string(), f[2].to_string());
            }
        }

        let mut out =
            String::from("model,mae,rmse,test_r2,adjusted_r2,r2_diff,weight,cv_mean_r2,cv_std_r2\n");
        for raw in metrics.lines().skip(1) {
            let f: Vec<&str> = raw.split(',').collect();
            if f.len() != 9 {
                continue;
            }
            let name = f[0];
            let empty = String::new();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                name,
                f[1],
                f[2],
                f[3],
                f[4],
                f[6],
                weight_of.get(name).unwrap_or(&empty),
                cv_mean.get(name).unwrap_or(&empty),
                cv_std.get(name).unwrap_or(&empty),
            ));
        }
        write_atomic(&summary_path(out_dir), &out)?;
        Ok(())
    })
}

/// Run every stage end to end and return the evaluation outcome.
pub fn run_pipeline(
    config: &PipelineConfig,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<EvaluationOutcome> {
    stage_synth(config, data_dir)?;
    stage_extract(config, data_dir, out_dir)?;
    stage_select(config, out_dir)?;
    stage_train(config, out_dir)?;
    let outcome = stage_evaluate(config, data_dir, out_dir)?;
    stage_predict(config, data_dir, out_dir)?;
    stage_report(out_dir)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = PipelineConfig::default();
        let mut b = PipelineConfig::default();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn config_from_map_roundtrip() {
        let text = "seed = 7\nmode = run_pipeline\nepochs = 5\ncorr_max = 0.8\n";
        let cfg = PipelineConfig::from_text(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.mode, Mode::Full);
        assert_eq!(cfg.epochs, 5);
        assert!((cfg.selection.corr_max - 0.8).abs() < 1e-12);
        // unknown keys are rejected
        assert!(PipelineConfig::from_text("sneed = 1\n").is_err());
        // invalid values are rejected
        assert!(PipelineConfig::from_text("mode = other\n").is_err());
        assert!(PipelineConfig::from_text("records = 5\n").is_err());
    }

    #[test]
    fn stage_exit_codes_are_distinct() {
        let codes: Vec<i32> = STAGES.iter().map(|s| stage_exit_code(s)).collect();
        let set: std::collections::BTreeSet<i32> = codes.iter().copied().collect();
        assert_eq!(set.len(), STAGES.len());
        assert!(codes.iter().all(|&c| c != 0));
        assert_eq!(stage_exit_code("unknown"), 1);
    }

    #[test]
    fn carve_validation_is_disjoint_and_seeded() {
        let train: Vec<usize> = (0..100).collect();
        let (fit, val) = carve_validation(&train, 0.15, 3).unwrap();
        assert_eq!(val.len(), 15);
        assert_eq!(fit.len(), 85);
        let mut all: Vec<usize> = fit.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, train);
        let (fit2, val2) = carve_validation(&train, 0.15, 3).unwrap();
        assert_eq!(fit, fit2);
        assert_eq!(val, val2);
    }

    #[test]
    fn guarded_test_set_consumes_on_take() {
        let g = GuardedTestSet::new(vec![vec![1.0]], vec![2.0]);
        assert_eq!(g.len(), 1);
        let (x, y) = g.take();
        assert_eq!(x, vec![vec![1.0]]);
        assert_eq!(y, vec![2.0]);
        // `g` is moved; a second take does not compile
    }

    #[test]
    fn split_roles_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let roles = SplitRoles {
            train: vec![0, 2, 4],
            test: vec![1, 5],
            excluded: vec![3],
        };
        write_split(dir.path(), &roles, 6).unwrap();
        let back = read_split(dir.path()).unwrap();
        assert_eq!(back.train, vec![0, 2, 4]);
        assert_eq!(back.test, vec![1, 5]);
        assert_eq!(back.excluded, vec![3]);
    }

    #[test]
    fn scaling_artifact_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let art = ScalingArtifact {
            names: vec!["a".into(), "b".into()],
            mins: vec![0.0, -1.0],
            maxs: vec![2.0, 1.0],
            medians: vec![1.0, 0.5],
            target_mean: 6000.0,
            target_std: 700.0,
        };
        let path = dir.path().join("scaling.csv");
        write_atomic(&path, &art.to_csv()).unwrap();
        let back = ScalingArtifact::from_csv(&path).unwrap();
        assert_eq!(back.names, art.names);
        assert_eq!(back.mins, art.mins);
        assert_eq!(back.target_std, 700.0);
        assert_eq!(back.scale_row(&[1.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn small_end_to_end_run() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let out_dir = dir.path().join("out");
        let config = PipelineConfig {
            records: 60,
            epochs: 8,
            folds: 3,
            ..Default::default()
        };
        let outcome = run_pipeline(&config, &data_dir, &out_dir).unwrap();
        assert_eq!(outcome.weights.len(), 4);
        let wsum: f64 = outcome.weights.iter().map(|(_, _, w)| w).sum();
        assert!((wsum - 1.0).abs() < 1e-9);
        assert!(outcome.ensemble.test.mae.is_finite());
        for p in [
            features_path(&out_dir),
            selected_path(&out_dir),
            split_path(&out_dir),
            weights_path(&out_dir),
            cv_report_path(&out_dir),
            metrics_path(&out_dir),
            predictions_path(&out_dir),
            summary_path(&out_dir),
            scaling_path(&out_dir),
            model_path(&out_dir, "MLP"),
            model_path(&out_dir, "ElasticNet"),
        ] {
            assert!(p.is_file(), "missing artifact {}", p.display());
        }
        // no temp leftovers
        for entry in fs::read_dir(&out_dir).unwrap() {
            let p = entry.unwrap().path();
            assert_ne!(p.extension().and_then(|e| e.to_str()), Some("tmp"));
        }
    }

    #[test]
    fn stage_errors_carry_the_stage_name() {
        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().join("out");
        fs::create_dir_all(&out_dir).unwrap();
        let config = PipelineConfig::default();
        // select without extract artifacts
        let err = stage_select(&config, &out_dir).unwrap_err();
        assert_eq!(err.stage(), Some("select"));
        assert_eq!(stage_exit_code(err.stage().unwrap()), 12);
    }

    #[test]
    fn config_mismatch_is_rejected_downstream() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let out_dir = dir.path().join("out");
        let config = PipelineConfig {
            records: 30,
            epochs: 2,
            folds: 2,
            ..Default::default()
        };
        stage_synth(&config, &data_dir).unwrap();
        stage_extract(&config, &data_dir, &out_dir).unwrap();
        let mut other = config.clone();
        other.noise_std = 123.0;
        let err = stage_select(&other, &out_dir).unwrap_err();
        assert_eq!(err.stage(), Some("select"));
        assert!(err.to_string().contains("config"));
    }
}
