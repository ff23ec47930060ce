//! JSON experiment configs and the end-to-end runner behind the CLI.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::correlate::{
    run_ensemble, run_repeats, CorrelationMatrix, EnsembleSpec, Execution, ModeMatrix,
};
use crate::error::{Error, Result};
use crate::field::{CoherenceSpec, Envelope, PolarGrid};
use crate::identify::{
    delta_row, detect_symmetry, fit_fractional_matrix, FractionalFit, RowPoint, SymmetryReport,
    DEFAULT_THRESHOLD,
};
use crate::io::{atomic_write, format_profile_csv, write_matrix_csv};
use crate::mask::{load_raster, ObjectMask};
use crate::oracle::{quadrature_signal, SignalProfile};

/// Environment variable consulted when a config has no `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "OAMCORR_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "oamcorr-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Simulate,
    Oracle,
    Compare,
    Identify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskConfig {
    Uniform,
    AngularSlits {
        n: u32,
        alpha: f64,
    },
    FractionalVortex {
        m: f64,
    },
    IntegerVortex {
        l0: i64,
    },
    /// Raster text file; relative paths resolve against the config's directory.
    CustomRaster {
        path: PathBuf,
    },
}

fn default_envelope() -> Envelope {
    Envelope::Gaussian { waist: 1.0 }
}

fn default_tasks() -> Vec<Task> {
    vec![Task::Simulate]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: PolarGrid,
    #[serde(default = "default_envelope")]
    pub envelope: Envelope,
    #[serde(default)]
    pub coherence: CoherenceSpec,
    pub mask: MaskConfig,
    pub l_max: usize,
    pub realizations: u64,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
}

/// A config after validation, with the mask loaded and paths resolved.
#[derive(Clone, Debug)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub spec: EnsembleSpec,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Checks every constraint, naming the offending key on failure, and
    /// builds the ensemble spec. `base_dir` anchors relative paths.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedExperiment> {
        let g = &self.grid;
        if g.n_r == 0 || g.n_r > crate::rng::MAX_CELL_AXIS {
            return Err(Error::config("grid.n_r", "must be in 1..=65536"));
        }
        if g.n_phi == 0 || g.n_phi % 2 != 0 || g.n_phi > crate::rng::MAX_CELL_AXIS {
            return Err(Error::config("grid.n_phi", "must be even and in 2..=65536"));
        }
        if !(g.r_max.is_finite() && g.r_max > 0.0) {
            return Err(Error::config("grid.r_max", "must be positive"));
        }
        if self.l_max == 0 {
            return Err(Error::config("l_max", "must be positive"));
        }
        if g.n_phi < 8 * self.l_max {
            return Err(Error::config(
                "l_max",
                format!(
                    "anti-aliasing rule requires n_phi >= 8 * l_max (n_phi = {}, l_max = {}, need n_phi >= {})",
                    g.n_phi,
                    self.l_max,
                    8 * self.l_max
                ),
            ));
        }
        if self.realizations < 2 {
            return Err(Error::config(
                "realizations",
                "at least 2 realizations are required",
            ));
        }
        if let Some(r) = self.repeats {
            if r < 2 {
                return Err(Error::config("repeats", "spread needs at least 2 repeats"));
            }
        }
        self.envelope
            .validate(g)
            .map_err(|e| Error::config("envelope", e.to_string()))?;
        self.coherence
            .validate(g)
            .map_err(|e| Error::config("coherence.correlation_cells", e.to_string()))?;
        let mask = match &self.mask {
            MaskConfig::Uniform => ObjectMask::Uniform,
            MaskConfig::AngularSlits { n, alpha } => ObjectMask::angular_slits(*n, *alpha)
                .map_err(|e| {
                    Error::config(if *n == 0 { "mask.n" } else { "mask.alpha" }, e.to_string())
                })?,
            MaskConfig::FractionalVortex { m } => ObjectMask::fractional_vortex(*m)
                .map_err(|e| Error::config("mask.m", e.to_string()))?,
            MaskConfig::IntegerVortex { l0 } => ObjectMask::IntegerVortex { l0: *l0 },
            MaskConfig::CustomRaster { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                load_raster(&full, g).map_err(|e| Error::config("mask.path", e.to_string()))?
            }
        };
        if self.tasks.is_empty() {
            return Err(Error::config("tasks", "at least one task is required"));
        }
        let output_dir = match &self.output_dir {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => base_dir.join(p),
            None => std::env::var_os(OUTPUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        };
        let spec = EnsembleSpec {
            grid: *g,
            envelope: self.envelope.clone(),
            coherence: self.coherence,
            mask,
            l_max: self.l_max,
            realizations: self.realizations,
            master_seed: self.master_seed,
        };
        Ok(ResolvedExperiment {
            config: self.clone(),
            spec,
            output_dir,
        })
    }
}

pub fn unix_time() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Max and mean absolute deviation between peak-normalized simulated and
/// reference profiles over their common shifts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub max_abs_deviation: f64,
    pub mean_abs_deviation: f64,
    pub rms_deviation: f64,
    pub points: usize,
}

pub fn compare_profiles(
    simulated: &[RowPoint],
    reference: &SignalProfile,
) -> Result<ComparisonReport> {
    let sim_peak = simulated
        .iter()
        .map(|p| p.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let reference = reference.peak_normalized();
    if !(sim_peak > 0.0 && reference.peak() > 0.0) {
        return Err(Error::InvalidArgument(
            "profiles need a positive peak to compare".into(),
        ));
    }
    let diffs: Vec<f64> = simulated
        .iter()
        .filter_map(|p| reference.get(p.l).map(|r| p.value / sim_peak - r))
        .collect();
    if diffs.is_empty() {
        return Err(Error::InvalidArgument("profiles share no shifts".into()));
    }
    let n = diffs.len() as f64;
    Ok(ComparisonReport {
        max_abs_deviation: diffs.iter().map(|d| d.abs()).fold(0.0, f64::max),
        mean_abs_deviation: diffs.iter().map(|d| d.abs()).sum::<f64>() / n,
        rms_deviation: (diffs.iter().map(|d| d * d).sum::<f64>() / n).sqrt(),
        points: diffs.len(),
    })
}

/// `g2 - 1` at `l_r = 0`, indexed by `l_t`; proportional to the signal row
/// because single-arm mean intensities do not depend on `l`.
pub fn contrast_row(g2: &ModeMatrix, stderr: &ModeMatrix) -> Result<Vec<RowPoint>> {
    Ok(crate::identify::matrix_row(g2, stderr, 0)?
        .into_iter()
        .map(|p| RowPoint {
            value: p.value - 1.0,
            ..p
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifyReport {
    pub symmetry: SymmetryReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fractional: Option<FractionalFit>,
}

/// Symmetry orders searched for a given window: `[2, min(8, l_max - 2)]`.
pub fn default_symmetry_range(l_max: usize) -> (u32, u32) {
    (2, (l_max.saturating_sub(2)).clamp(2, 8) as u32)
}

pub fn identify_matrix(m: &CorrelationMatrix, fractional: bool) -> Result<IdentifyReport> {
    let symmetry = detect_symmetry(m, default_symmetry_range(m.l_max), DEFAULT_THRESHOLD)?;
    let fractional = if fractional {
        Some(fit_fractional_matrix(m)?)
    } else {
        None
    };
    Ok(IdentifyReport {
        symmetry,
        fractional,
    })
}

/// Paths of everything a run wrote.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutputs {
    pub files: Vec<PathBuf>,
}

pub fn oracle_profile(resolved: &ResolvedExperiment) -> Result<SignalProfile> {
    let spec = &resolved.spec;
    quadrature_signal(&spec.mask, &spec.envelope, &spec.grid, spec.l_max)
}

/// Runs every task in the config and writes the outputs.
pub fn run_experiment(config_path: &Path) -> Result<RunOutputs> {
    let config = ExperimentConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let resolved = config.resolve(base)?;
    run_resolved(&resolved)
}

pub fn run_resolved(resolved: &ResolvedExperiment) -> Result<RunOutputs> {
    let spec = &resolved.spec;
    let dir = &resolved.output_dir;
    let tasks = &resolved.config.tasks;
    let wants = |t: Task| tasks.contains(&t);
    let needs_matrix = wants(Task::Simulate) || wants(Task::Compare) || wants(Task::Identify);
    let needs_oracle = wants(Task::Oracle) || wants(Task::Compare);
    let config_json = serde_json::to_value(&resolved.config)?;
    let mut outputs = RunOutputs::default();
    let started = unix_time();

    let matrix = if needs_matrix {
        Some(run_ensemble(spec)?)
    } else {
        None
    };
    if let Some(m) = &matrix {
        let g2_path = dir.join("g2.csv");
        let se_path = dir.join("g2.stderr.csv");
        write_matrix_csv(&g2_path, &m.g2)?;
        write_matrix_csv(&se_path, &m.stderr_g2)?;
        outputs.files.extend([g2_path, se_path]);
        if let Some(r) = resolved.config.repeats {
            let spread = run_repeats(spec, r, Execution::default())?;
            let path = dir.join("g2.spread.csv");
            write_matrix_csv(&path, &spread.spread_g2)?;
            outputs.files.push(path);
        }
        let meta = json!({
            "config": config_json,
            "master_seed": spec.master_seed,
            "realizations": m.realizations,
            "l_max": m.l_max,
            "grid": spec.grid,
            "envelope": spec.envelope,
            "coherence": spec.coherence,
            "mask": spec.mask.describe(),
            "mean_test": m.mean_test,
            "mean_reference": m.mean_reference,
            "started_unix": started,
            "finished_unix": unix_time(),
            "version": env!("CARGO_PKG_VERSION"),
        });
        let path = dir.join("g2.json");
        write_json(&path, &meta)?;
        outputs.files.push(path);
    }

    let oracle = if needs_oracle {
        Some(oracle_profile(resolved)?)
    } else {
        None
    };
    if let (Some(p), true) = (&oracle, wants(Task::Oracle)) {
        let path = dir.join("oracle_profile.csv");
        atomic_write(&path, format_profile_csv(p).as_bytes())?;
        outputs.files.push(path);
    }

    if let (Some(m), Some(p), true) = (&matrix, &oracle, wants(Task::Compare)) {
        let report = compare_profiles(&delta_row(m, 0)?, p)?;
        let path = dir.join("compare.json");
        write_json(
            &path,
            &json!({
                "config": config_json,
                "master_seed": spec.master_seed,
                "row": "l_r = 0, background-subtracted",
                "report": report,
            }),
        )?;
        outputs.files.push(path);
    }

    if let (Some(m), true) = (&matrix, wants(Task::Identify)) {
        let fractional = matches!(
            spec.mask,
            ObjectMask::FractionalVortex { .. } | ObjectMask::IntegerVortex { .. }
        );
        let report = identify_matrix(m, fractional)?;
        let path = dir.join("identify.json");
        write_json(
            &path,
            &json!({
                "config": config_json,
                "master_seed": spec.master_seed,
                "report": report,
            }),
        )?;
        outputs.files.push(path);
    }
    Ok(outputs)
}
