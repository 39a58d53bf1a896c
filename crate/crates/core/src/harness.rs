//! Configuration-driven experiment runner.
//!
//! An experiment loads one signal, normalizes it to `[−1, 1]`, pads it to a
//! length the generator supports, and sweeps a list of measurement counts or
//! noise levels. Every (method, level) cell is independent: a failing cell is
//! recorded and the sweep continues.
//!
//! Configs are TOML:
//!
//! ```toml
//! task = "impute"            # impute | cs-gaussian | cs-dct | denoise | noise-impedance
//! m_list = [1000, 2000, 4000]
//! methods = ["dip", "lasso", "spline"]
//! seed = 7
//! output_dir = "out"
//! gap = { start = 2914, length = 100 }    # impute only; replaces m_list
//!
//! [input]
//! kind = "chirp"             # or "wav" (path, decimate) / "csv" (path, column)
//! f0 = 750.0
//! f1 = 250.0
//! n = 16384
//! fs = 8192.0
//!
//! [recovery]                 # any RecoveryConfig field except seed
//! iterations = 3000
//!
//! [lasso]
//! alpha = 1e-5
//!
//! [[external]]
//! name = "kalman"
//! path = "kalman.csv"        # header `level,mse`
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::baselines::{lasso_dct, spline_impute, LassoConfig};
use crate::error::{Error, Result};
use crate::measurements::{
    add_awgn, identity_operator, make_dct_operator, make_gap_operator, make_gaussian_operator,
    make_mask_operator, MeasurementOperator,
};
use crate::recovery::{
    denoise_config, noise_impedance_curves, recover_scored, LossCurve, RecoveryConfig,
};
use crate::rng::{derive_seed, label_hash, seeded};
use crate::signal_io::{
    crop, decimate, format_real, gen_chirp, load_csv, load_wav, normalize_unit_range,
    pad_to_valid_length, AffineMap, Column, Signal,
};

/// Default output directory when the config leaves it unset.
pub const OUTPUT_DIR_ENV: &str = "DIP1D_OUT";
const FALLBACK_OUTPUT_DIR: &str = "dip1d-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Impute,
    CsGaussian,
    CsDct,
    Denoise,
    NoiseImpedance,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Impute => "impute",
            Task::CsGaussian => "cs-gaussian",
            Task::CsDct => "cs-dct",
            Task::Denoise => "denoise",
            Task::NoiseImpedance => "noise-impedance",
        }
    }

    fn sweeps_noise(self) -> bool {
        matches!(self, Task::Denoise | Task::NoiseImpedance)
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Task::Impute,
            Task::CsGaussian,
            Task::CsDct,
            Task::Denoise,
            Task::NoiseImpedance,
        ]
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dip,
    Lasso,
    Spline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dip => "dip",
            Method::Lasso => "lasso",
            Method::Spline => "spline",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Method::Dip, Method::Lasso, Method::Spline]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Input {
    Chirp {
        f0: f64,
        f1: f64,
        n: usize,
        fs: f64,
    },
    Wav {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        decimate: Option<usize>,
    },
    Csv {
        path: PathBuf,
        column: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gap {
    pub start: usize,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct External {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m_list: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigma_list: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir", skip_serializing_if = "is_unset")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<Gap>,
    pub input: Input,
    #[serde(default)]
    pub recovery: RecoveryConfig,
    #[serde(default)]
    pub lasso: LassoConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub external: Vec<External>,
}

fn is_unset(path: &Path) -> bool {
    path.as_os_str().is_empty()
}

fn default_methods() -> Vec<Method> {
    vec![Method::Dip]
}

/// `$DIP1D_OUT`, else `dip1d-out`.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT_DIR))
}

impl ExperimentConfig {
    pub fn new(task: Task, input: Input) -> Self {
        ExperimentConfig {
            task,
            m_list: Vec::new(),
            sigma_list: Vec::new(),
            methods: default_methods(),
            seed: 0,
            output_dir: default_output_dir(),
            gap: None,
            input,
            recovery: RecoveryConfig::default(),
            lasso: LassoConfig::default(),
            external: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("experiment configs always serialize")
    }

    /// Checks that do not need the signal. Measurement counts are checked
    /// against the signal length at run time.
    pub fn validate(&self) -> Result<()> {
        self.recovery.validate()?;
        self.lasso.validate()?;
        let fail = |m: String| Err(Error::Config(m));
        if self.task.sweeps_noise() {
            if self.sigma_list.is_empty() {
                return fail(format!("task {} needs sigma_list", self.task.name()));
            }
            if self
                .sigma_list
                .iter()
                .any(|s| !(*s >= 0.0) || !s.is_finite())
            {
                return fail("sigma values must be finite and >= 0".into());
            }
        } else if self.gap.is_none() {
            if self.m_list.is_empty() {
                return fail(format!("task {} needs m_list", self.task.name()));
            }
            if self.m_list.contains(&0) {
                return fail("m values must be >= 1".into());
            }
        }
        if self.gap.is_some() && self.task != Task::Impute {
            return fail("gap is only meaningful for impute".into());
        }
        if self.methods.contains(&Method::Spline) && self.task != Task::Impute {
            return fail("spline only applies to impute".into());
        }
        let mut seen = Vec::new();
        for m in &self.methods {
            if seen.contains(m) {
                return fail(format!("method {} listed twice", m.name()));
            }
            seen.push(*m);
        }
        if let Input::Chirp { f0, f1, n, fs } = self.input {
            gen_chirp(f0, f1, n, fs)
                .map(|_| ())
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// A sweep point: a measurement count or a noise level. External tables
/// carry their own labels.
#[derive(Clone, Debug, PartialEq)]
pub enum Level {
    Count(usize),
    Sigma(f64),
    Label(String),
}

impl Level {
    fn seed_label(&self) -> u64 {
        match self {
            Level::Count(m) => *m as u64,
            Level::Sigma(s) => s.to_bits(),
            Level::Label(l) => label_hash(l),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Count(m) => write!(f, "{m}"),
            Level::Sigma(s) => write!(f, "{s}"),
            Level::Label(l) => f.write_str(l),
        }
    }
}

/// Mean squared difference.
pub fn mse(x: &[f64], xhat: &[f64]) -> Result<f64> {
    if x.len() != xhat.len() {
        return Err(Error::shape(format!(
            "MSE of lengths {} and {}",
            x.len(),
            xhat.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::invalid("MSE of empty vectors"));
    }
    Ok(x.iter()
        .zip(xhat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / x.len() as f64)
}

/// Mean squared difference over the missing indices only.
pub fn imputation_mse(x: &[f64], xhat: &[f64], missing: &[usize]) -> Result<f64> {
    if x.len() != xhat.len() {
        return Err(Error::shape(format!(
            "MSE of lengths {} and {}",
            x.len(),
            xhat.len()
        )));
    }
    if missing.is_empty() {
        return Err(Error::invalid(
            "imputation MSE needs at least one missing index",
        ));
    }
    if let Some(&i) = missing.iter().find(|&&i| i >= x.len()) {
        return Err(Error::invalid(format!("missing index {i} out of range")));
    }
    Ok(missing
        .iter()
        .map(|&i| (x[i] - xhat[i]).powi(2))
        .sum::<f64>()
        / missing.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestartRecord {
    pub restart: usize,
    pub seed: Option<u64>,
    pub mse: Option<f64>,
    pub curve: Option<LossCurve>,
    /// Cropped to the original signal length.
    pub reconstruction: Option<Vec<f64>>,
    pub error: Option<String>,
}

impl RestartRecord {
    fn single(mse: Option<f64>, reconstruction: Option<Vec<f64>>) -> Self {
        RestartRecord {
            restart: 0,
            seed: None,
            mse,
            curve: None,
            reconstruction,
            error: None,
        }
    }
}

/// One (method, level) entry of the result table.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub method: String,
    pub level: Level,
    pub restarts: Vec<RestartRecord>,
    pub mean_mse: Option<f64>,
    /// Restart whose reconstruction represents the cell.
    pub best: Option<usize>,
    /// Cell-level failure; per-restart failures live in `restarts`.
    pub error: Option<String>,
}

impl CellResult {
    fn failed(method: &str, level: &Level, error: impl fmt::Display) -> Self {
        CellResult {
            method: method.to_string(),
            level: level.clone(),
            restarts: Vec::new(),
            mean_mse: None,
            best: None,
            error: Some(error.to_string()),
        }
    }

    fn single(method: &str, level: &Level, mse: f64, reconstruction: Option<Vec<f64>>) -> Self {
        CellResult {
            method: method.to_string(),
            level: level.clone(),
            restarts: vec![RestartRecord::single(Some(mse), reconstruction)],
            mean_mse: Some(mse),
            best: Some(0),
            error: None,
        }
    }

    pub fn has_failure(&self) -> bool {
        self.error.is_some() || self.restarts.iter().any(|r| r.error.is_some())
    }

    pub fn best_reconstruction(&self) -> Option<&[f64]> {
        self.best
            .and_then(|b| self.restarts.get(b))
            .and_then(|r| r.reconstruction.as_deref())
    }
}

/// Operator and seeds used at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRecord {
    pub level: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
    pub operator_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Length the methods worked at, after padding.
    pub n: usize,
    pub original_length: usize,
    pub normalization: AffineMap,
    /// Normalized signal cropped to the original length; NaN at blank cells.
    pub truth: Vec<f64>,
    pub levels: Vec<LevelRecord>,
    pub cells: Vec<CellResult>,
    /// Not written to any output file.
    pub wall_time: Duration,
}

impl ExperimentResult {
    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(CellResult::has_failure)
    }

    pub fn cell(&self, method: &str, level: &Level) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.method == method && &c.level == level)
    }
}

fn load_signal(input: &Input) -> Result<(Signal, Vec<usize>)> {
    match input {
        Input::Chirp { f0, f1, n, fs } => Ok((gen_chirp(*f0, *f1, *n, *fs)?, Vec::new())),
        Input::Wav {
            path,
            decimate: factor,
        } => {
            let s = load_wav(path)?;
            let s = match factor {
                Some(f) => decimate(&s, *f)?,
                None => s,
            };
            Ok((s, Vec::new()))
        }
        Input::Csv { path, column } => {
            let col = load_csv(
                path,
                &column.parse().unwrap_or(Column::Name(column.clone())),
            )?;
            Ok((col.signal, col.missing))
        }
    }
}

struct Prepared {
    /// Padded, normalized, blank cells zeroed.
    x: Vec<f64>,
    truth: Vec<f64>,
    original_length: usize,
    blanks: Vec<usize>,
    map: AffineMap,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let (signal, blanks) = load_signal(&config.input)?;
    if !blanks.is_empty() && config.task != Task::Impute {
        return Err(Error::Config(format!(
            "input has {} blank cells; only impute handles missing data",
            blanks.len()
        )));
    }
    let (normalized, map) = normalize_unit_range(&signal)?;
    let (padded, original_length) = pad_to_valid_length(&normalized);
    let truth = normalized.samples;
    let x = padded
        .samples
        .into_iter()
        .map(|v| if v.is_finite() { v } else { 0.0 })
        .collect();
    Ok(Prepared {
        x,
        truth,
        original_length,
        blanks,
        map,
    })
}

/// Observed positions for the random-mask imputation operator: `m` of the
/// original (non-blank) samples.
fn impute_operator(p: &Prepared, m: usize, seed: u64) -> Result<MeasurementOperator> {
    let n = p.x.len();
    if p.blanks.is_empty() && p.original_length == n {
        return make_mask_operator(n, m, seed);
    }
    let available: Vec<usize> = (0..p.original_length)
        .filter(|i| p.blanks.binary_search(i).is_err())
        .collect();
    if m == 0 || m > available.len() {
        return Err(Error::invalid(format!(
            "m = {m} but only {} samples are available",
            available.len()
        )));
    }
    let mut kept: Vec<usize> = index::sample(&mut seeded(seed), available.len(), m)
        .into_iter()
        .map(|j| available[j])
        .collect();
    kept.sort_unstable();
    MeasurementOperator::mask_from_indices(n, kept)
}

/// Runs the configured sweep. Progress messages go to `progress`.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    progress: &mut dyn FnMut(&str),
) -> Result<ExperimentResult> {
    config.validate()?;
    let started = Instant::now();
    let p = prepare(config)?;
    let n = p.x.len();
    progress(&format!(
        "{}: {} samples (working length {n})",
        config.task.name(),
        p.original_length
    ));

    let levels: Vec<Level> = if config.task.sweeps_noise() {
        config.sigma_list.iter().map(|&s| Level::Sigma(s)).collect()
    } else if let Some(gap) = config.gap {
        vec![Level::Count(n.saturating_sub(gap.length))]
    } else {
        config.m_list.iter().map(|&m| Level::Count(m)).collect()
    };

    let mut records = Vec::new();
    let mut cells = Vec::new();
    for level in &levels {
        let (record, mut level_cells) = run_level(config, &p, level, progress);
        records.push(record);
        cells.append(&mut level_cells);
    }
    for ext in &config.external {
        cells.extend(load_external(ext)?);
    }

    Ok(ExperimentResult {
        config: config.clone(),
        n,
        original_length: p.original_length,
        normalization: p.map,
        truth: p.truth.clone(),
        levels: records,
        cells,
        wall_time: started.elapsed(),
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(config, &mut |_| {})
}

fn stream_seed(config: &ExperimentConfig, stream: &str, level: &Level) -> u64 {
    derive_seed(
        config.seed,
        &[
            label_hash(config.task.name()),
            label_hash(stream),
            level.seed_label(),
        ],
    )
}

fn run_level(
    config: &ExperimentConfig,
    p: &Prepared,
    level: &Level,
    progress: &mut dyn FnMut(&str),
) -> (LevelRecord, Vec<CellResult>) {
    let n = p.x.len();
    let operator_seed = stream_seed(config, "operator", level);
    let noise_seed = stream_seed(config, "noise", level);
    let recovery_seed = stream_seed(config, "dip", level);
    let mut record = LevelRecord {
        level: level.to_string(),
        operator: None,
        operator_seed,
        noise_seed: None,
        recovery_seed: None,
        error: None,
    };
    let all_failed = |record: &mut LevelRecord, e: Error| {
        record.error = Some(e.to_string());
        let cells = config
            .methods
            .iter()
            .map(|m| CellResult::failed(m.name(), level, &e))
            .collect();
        cells
    };

    if config.task == Task::NoiseImpedance {
        let Level::Sigma(sigma) = *level else {
            unreachable!()
        };
        record.noise_seed = Some(noise_seed);
        record.recovery_seed = Some(recovery_seed);
        progress(&format!("noise impedance at sigma {sigma}"));
        let run_config = RecoveryConfig {
            seed: recovery_seed,
            ..config.recovery.clone()
        };
        let curves = match noise_impedance_curves(&p.x, sigma, run_config.iterations, &run_config) {
            Ok(c) => c,
            Err(e) => {
                record.error = Some(e.to_string());
                let cells = ["clean", "noise", "noisy"]
                    .iter()
                    .map(|name| CellResult::failed(name, level, &e))
                    .collect();
                return (record, cells);
            }
        };
        let cells = [
            ("clean", curves.clean),
            ("noise", curves.noise),
            ("noisy", curves.noisy),
        ]
        .into_iter()
        .map(|(name, curve)| {
            let last = curve.fidelity.last().copied().unwrap_or(f64::NAN) / n as f64;
            let mut cell = CellResult::single(name, level, last, None);
            cell.restarts[0].curve = Some(curve);
            cell.restarts[0].seed = Some(recovery_seed);
            cell
        })
        .collect();
        return (record, cells);
    }

    let built = match (config.task, level) {
        (Task::Impute, Level::Count(m)) => match config.gap {
            Some(gap) => make_gap_operator(n, gap.start, gap.length),
            None => impute_operator(p, *m, operator_seed),
        },
        (Task::CsGaussian, Level::Count(m)) => make_gaussian_operator(n, *m, operator_seed),
        (Task::CsDct, Level::Count(m)) => make_dct_operator(n, *m, operator_seed),
        (Task::Denoise, Level::Sigma(_)) => identity_operator(n),
        _ => unreachable!("levels are built to match the task"),
    };
    let op = match built {
        Ok(op) => op,
        Err(e) => {
            let cells = all_failed(&mut record, e);
            return (record, cells);
        }
    };
    record.operator = Some(op.descriptor().to_string());

    let clean = match op.apply(&p.x) {
        Ok(y) => y,
        Err(e) => {
            let cells = all_failed(&mut record, e);
            return (record, cells);
        }
    };
    let y = match level {
        Level::Sigma(sigma) => {
            record.noise_seed = Some(noise_seed);
            match add_awgn(&clean, *sigma, noise_seed) {
                Ok(y) => y,
                Err(e) => {
                    let cells = all_failed(&mut record, e);
                    return (record, cells);
                }
            }
        }
        _ => clean,
    };

    // imputation is scored on hidden original samples only
    let scored_missing: Option<Vec<usize>> = (config.task == Task::Impute).then(|| {
        op.missing_indices()
            .unwrap_or_default()
            .into_iter()
            .filter(|&i| i < p.original_length && p.truth[i].is_finite())
            .collect()
    });
    let truth = &p.truth;
    let original = p.original_length;
    let score = |xhat: &[f64]| -> Result<f64> {
        let cropped = crop(xhat, original);
        match &scored_missing {
            Some(missing) => imputation_mse(truth, &cropped, missing),
            None => mse(truth, &cropped),
        }
    };

    let mut cells = Vec::new();
    for method in &config.methods {
        progress(&format!("{} at level {level}", method.name()));
        let cell = match method {
            Method::Dip => {
                record.recovery_seed = Some(recovery_seed);
                run_dip(config, level, &y, &op, recovery_seed, &score, original)
            }
            Method::Lasso => match lasso_dct(&y, &op, n, &config.lasso)
                .and_then(|xhat| score(&xhat).map(|s| (s, xhat)))
            {
                Ok((s, xhat)) => CellResult::single("lasso", level, s, Some(crop(&xhat, original))),
                Err(e) => CellResult::failed("lasso", level, e),
            },
            Method::Spline => {
                let kept = op.kept_indices().unwrap_or_default();
                match spline_impute(&y, kept, n).and_then(|xhat| score(&xhat).map(|s| (s, xhat))) {
                    Ok((s, xhat)) => {
                        CellResult::single("spline", level, s, Some(crop(&xhat, original)))
                    }
                    Err(e) => CellResult::failed("spline", level, e),
                }
            }
        };
        cells.push(cell);
    }
    (record, cells)
}

fn run_dip(
    config: &ExperimentConfig,
    level: &Level,
    y: &[f64],
    op: &MeasurementOperator,
    seed: u64,
    score: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    original: usize,
) -> CellResult {
    let mut run_config = RecoveryConfig {
        seed,
        ..config.recovery.clone()
    };
    if let Level::Sigma(sigma) = level {
        run_config = match denoise_config(*sigma, &run_config) {
            Ok(c) => c,
            Err(e) => return CellResult::failed("dip", level, e),
        };
    }
    let result = match recover_scored(y, op, &run_config, Some(score)) {
        Ok(r) => r,
        Err(e) => return CellResult::failed("dip", level, e),
    };
    let restarts = result
        .restarts
        .into_iter()
        .map(|r| RestartRecord {
            restart: r.restart,
            seed: Some(r.seed),
            mse: r.mse,
            curve: Some(r.curve),
            reconstruction: r.reconstruction.map(|x| crop(&x, original)),
            error: r.error,
        })
        .collect();
    CellResult {
        method: "dip".into(),
        level: level.clone(),
        restarts,
        mean_mse: result.mean_mse,
        best: result.best,
        error: None,
    }
}

/// Rows of a third-party `level,mse` table, one cell per row.
fn load_external(ext: &External) -> Result<Vec<CellResult>> {
    let path = &ext.path;
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::format(path, format!("missing `{name}` column")))
    };
    let (level_col, mse_col) = (col("level")?, col("mse")?);
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let level = Level::Label(record.get(level_col).unwrap_or("").trim().to_string());
        let text = record.get(mse_col).unwrap_or("").trim();
        let value: f64 = text
            .parse()
            .map_err(|_| Error::format(path, format!("mse `{text}` is not a number")))?;
        cells.push(CellResult::single(&ext.name, &level, value, None));
    }
    Ok(cells)
}

fn optional(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let fail = |e: csv::Error| Error::format(path, e.to_string());
    writer.write_record(header).map_err(fail)?;
    for row in rows {
        writer.write_record(&row).map_err(fail)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    run: RunInfo,
    levels: &'a [LevelRecord],
    restarts: Vec<RestartSeed>,
}

#[derive(Serialize)]
struct RunInfo {
    original_length: usize,
    working_length: usize,
    normalization_min: f64,
    normalization_max: f64,
}

#[derive(Serialize)]
struct RestartSeed {
    method: String,
    level: String,
    restart: usize,
    seed: u64,
}

/// Text of `results.csv`: `method,level,restart,mse,mean_mse`.
pub fn results_table(result: &ExperimentResult) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for cell in &result.cells {
        if cell.restarts.is_empty() {
            rows.push(vec![
                cell.method.clone(),
                cell.level.to_string(),
                "0".into(),
                String::new(),
                String::new(),
            ]);
        }
        for r in &cell.restarts {
            rows.push(vec![
                cell.method.clone(),
                cell.level.to_string(),
                r.restart.to_string(),
                optional(r.mse),
                optional(cell.mean_mse),
            ]);
        }
    }
    rows
}

/// Writes `results.csv`, `errors.csv`, `manifest.txt`, one
/// `curve_<method>_<level>_<restart>.csv` per loss curve and one
/// `recon_<method>_<level>.csv` per reconstructed cell.
pub fn emit_outputs(result: &ExperimentResult, output_dir: impl AsRef<Path>) -> Result<()> {
    let dir = output_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    write_rows(
        &dir.join("results.csv"),
        &["method", "level", "restart", "mse", "mean_mse"],
        results_table(result),
    )?;

    let mut errors = Vec::new();
    for cell in &result.cells {
        if let Some(e) = &cell.error {
            errors.push(vec![
                cell.method.clone(),
                cell.level.to_string(),
                String::new(),
                e.clone(),
            ]);
        }
        for r in &cell.restarts {
            if let Some(e) = &r.error {
                errors.push(vec![
                    cell.method.clone(),
                    cell.level.to_string(),
                    r.restart.to_string(),
                    e.clone(),
                ]);
            }
        }
    }
    write_rows(
        &dir.join("errors.csv"),
        &["method", "level", "restart", "message"],
        errors,
    )?;

    for cell in &result.cells {
        for r in &cell.restarts {
            let Some(curve) = &r.curve else { continue };
            let name = format!("curve_{}_{}_{}.csv", cell.method, cell.level, r.restart);
            let rows = (0..curve.len()).map(|i| {
                vec![
                    i.to_string(),
                    format_real(curve.objective[i]),
                    format_real(curve.fidelity[i]),
                    format_real(curve.tv[i]),
                ]
            });
            write_rows(
                &dir.join(name),
                &["iteration", "objective", "fidelity", "tv"],
                rows,
            )?;
        }
        let Some(best) = cell.best_reconstruction() else {
            continue;
        };
        let mut header = vec!["index".to_string(), "truth".into(), "estimate".into()];
        let per_restart = cell.restarts.len() > 1;
        if per_restart {
            header.extend(
                cell.restarts
                    .iter()
                    .map(|r| format!("restart_{}", r.restart)),
            );
        }
        let rows = (0..best.len()).map(|i| {
            let mut row = vec![
                i.to_string(),
                format_real(result.truth[i]),
                format_real(best[i]),
            ];
            if per_restart {
                row.extend(cell.restarts.iter().map(|r| {
                    r.reconstruction
                        .as_ref()
                        .map(|x| format_real(x[i]))
                        .unwrap_or_default()
                }));
            }
            row
        });
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_rows(
            &dir.join(format!("recon_{}_{}.csv", cell.method, cell.level)),
            &header,
            rows,
        )?;
    }

    // the echo leaves out where the files went so reruns elsewhere match
    let echoed = ExperimentConfig {
        output_dir: PathBuf::new(),
        ..result.config.clone()
    };
    let manifest = Manifest {
        config: &echoed,
        run: RunInfo {
            original_length: result.original_length,
            working_length: result.n,
            normalization_min: result.normalization.min,
            normalization_max: result.normalization.max,
        },
        levels: &result.levels,
        restarts: result
            .cells
            .iter()
            .flat_map(|c| {
                c.restarts.iter().filter_map(move |r| {
                    r.seed.map(|seed| RestartSeed {
                        method: c.method.clone(),
                        level: c.level.to_string(),
                        restart: r.restart,
                        seed,
                    })
                })
            })
            .collect(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join("manifest.txt");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
