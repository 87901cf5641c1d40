//! Declarative experiment configs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::WorVariant;
use crate::engines::Mode;
use crate::error::{Error, Result};
use crate::models::{mnist, Dataset, ModelKind, ModelSpec};

/// Environment variable naming the directory that holds the MNIST IDX files.
pub const DATA_DIR_ENV: &str = "SGDTHERMO_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Relative loss error curves from a random start.
    Training,
    /// Stationary statistics near a minimum against theory.
    Stationary,
    /// KL divergence of the posterior samplers over a learning-rate grid.
    Posterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    #[serde(default)]
    pub engine: Option<EngineSection>,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub lambda: f64,
    pub data: DataSection,
    /// Initial guess for the stage-one minimization.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
}

fn default_epsilon() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSection {
    /// The 1-D Gaussian-bump regression set.
    Synthetic { samples: usize, seed: u64 },
    /// The first `samples` MNIST training images; `dir` defaults to `$SGDTHERMO_DATA_DIR`.
    Mnist {
        #[serde(default)]
        dir: Option<PathBuf>,
        samples: usize,
    },
    /// A dataset CSV as written by `Dataset::write_csv`.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub modes: Vec<Mode>,
    pub eta: f64,
    pub batch: usize,
    pub steps: u64,
    #[serde(default = "one_u64")]
    pub runs: u64,
    pub seed: u64,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default = "one_u64")]
    pub thinning: u64,
    #[serde(default)]
    pub init: InitKind,
    /// Standard deviation of the random start.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn one_u64() -> u64 {
    1
}

fn default_init_scale() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// Start every run at the centre of its stationary distribution.
    #[default]
    Minimum,
    /// Independent small normal start per run, shared across modes.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Moments,
    Area,
    Entropy,
    Fdt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Fraction of each run discarded before collecting statistics.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_ells")]
    pub ells: Vec<usize>,
    /// Histogram bin width per ℓ; derived from the theory entropy rate when absent.
    #[serde(default)]
    pub bin_widths: Option<Vec<f64>>,
    /// Records per block for standard errors; 0 picks ten slowest relaxation times.
    #[serde(default)]
    pub block_len: u64,
    #[serde(default = "default_checks")]
    pub checks: Vec<Check>,
    #[serde(default = "default_variant")]
    pub wor_variant: WorVariant,
    /// Records between gradient evaluations for the fluctuation-dissipation check.
    #[serde(default = "default_fdt_every")]
    pub fdt_every: u64,
    /// Two parameter indices for a 2-D density projection.
    #[serde(default)]
    pub projection: Option<[usize; 2]>,
    #[serde(default = "default_projection_bins")]
    pub projection_bins: usize,
    /// Log-spaced points on the loss curve of a training experiment.
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
    /// Learning-rate grid of a posterior experiment.
    #[serde(default)]
    pub etas: Vec<f64>,
    /// Batch size of a posterior experiment.
    #[serde(default)]
    pub batch: Option<usize>,
}

fn default_burn_in() -> f64 {
    0.2
}
fn default_ells() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_checks() -> Vec<Check> {
    vec![Check::Moments, Check::Area]
}
fn default_variant() -> WorVariant {
    WorVariant::Exact
}
fn default_fdt_every() -> u64 {
    100
}
fn default_projection_bins() -> usize {
    60
}
fn default_curve_points() -> usize {
    100
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            burn_in: default_burn_in(),
            ells: default_ells(),
            bin_widths: None,
            block_len: 0,
            checks: default_checks(),
            wor_variant: default_variant(),
            fdt_every: default_fdt_every(),
            projection: None,
            projection_bins: default_projection_bins(),
            curve_points: default_curve_points(),
            etas: Vec::new(),
            batch: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Svg,
    /// Binary trajectory of the first run of each mode.
    Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir(), formats: default_formats() }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(format!("config does not parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::from_toml(&text)?, text))
    }

    pub fn model_spec(&self, data: &Dataset) -> ModelSpec {
        let m = &self.model;
        match m.kind {
            ModelKind::NonlinearRegression => ModelSpec::nonlinear_regression(m.epsilon, m.lambda),
            ModelKind::LinearizedRegression => ModelSpec::linearized_regression(m.epsilon, m.lambda),
            ModelKind::LinearClassifier => ModelSpec::linear_classifier(data.d_in(), data.d_out(), m.lambda),
        }
    }

    pub fn wants(&self, c: Check) -> bool {
        self.analysis.checks.contains(&c)
    }

    pub fn has(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    /// Range checks on every field, run before any work starts.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if self.experiment.name.trim().is_empty() {
            return Err(bad("experiment.name must not be empty"));
        }
        if !(m.lambda >= 0.0) || !(m.epsilon > 0.0) {
            return Err(bad("model.lambda must be ≥ 0 and model.epsilon > 0"));
        }
        let samples = match &m.data {
            DataSection::Synthetic { samples, .. } => {
                if m.kind == ModelKind::LinearClassifier {
                    return Err(bad("the synthetic regression set has no classifier outputs"));
                }
                Some(*samples)
            }
            DataSection::Mnist { samples, dir } => {
                if m.kind != ModelKind::LinearClassifier {
                    return Err(bad("MNIST data needs model.kind = \"linear-classifier\""));
                }
                let dir = resolve_mnist_dir(dir.as_deref())?;
                let (img, lbl) = mnist::train_files(&dir);
                for p in [&img, &lbl] {
                    if !p.is_file() {
                        return Err(bad(format!("MNIST file {} does not exist", p.display())));
                    }
                }
                Some(*samples)
            }
            DataSection::Csv { path } => {
                if !path.is_file() {
                    return Err(bad(format!("dataset {} does not exist", path.display())));
                }
                None
            }
        };
        if samples == Some(0) {
            return Err(bad("model.data.samples must be positive"));
        }
        let a = &self.analysis;
        if !(0.0..1.0).contains(&a.burn_in) {
            return Err(bad("analysis.burn_in must lie in [0, 1)"));
        }
        if a.ells.contains(&0) {
            return Err(bad("analysis.ells must be positive"));
        }
        if let Some(w) = &a.bin_widths {
            if w.len() != a.ells.len() || w.iter().any(|x| !(*x > 0.0)) {
                return Err(bad("analysis.bin_widths needs one positive width per ℓ"));
            }
        }
        if a.fdt_every == 0 || a.projection_bins == 0 || a.curve_points < 2 {
            return Err(bad("analysis.fdt_every, projection_bins must be positive and curve_points ≥ 2"));
        }
        match self.experiment.kind {
            ExperimentKind::Posterior => {
                if m.kind != ModelKind::LinearizedRegression {
                    return Err(bad("posterior experiments use the linearized regression model"));
                }
                if a.etas.len() < 2 || a.etas.iter().any(|e| !(*e > 0.0)) {
                    return Err(bad("analysis.etas needs at least two positive learning rates"));
                }
                let b = a.batch.ok_or_else(|| bad("analysis.batch is required for posterior experiments"))?;
                if let Some(s) = samples {
                    if b == 0 || s % b != 0 {
                        return Err(bad("analysis.batch must divide the sample count"));
                    }
                }
            }
            ExperimentKind::Training | ExperimentKind::Stationary => {
                let e = self.engine.as_ref().ok_or_else(|| bad("an [engine] section is required"))?;
                if e.modes.is_empty() {
                    return Err(bad("engine.modes must list at least one mode"));
                }
                let mut seen = e.modes.clone();
                seen.sort_by_key(|x| x.name());
                seen.dedup();
                if seen.len() != e.modes.len() {
                    return Err(bad("engine.modes lists a mode twice"));
                }
                if !(e.eta > 0.0) || e.batch == 0 || e.steps == 0 || e.runs == 0 || e.thinning == 0 {
                    return Err(bad("engine.eta, batch, steps, runs and thinning must be positive"));
                }
                if !(e.zeta >= 0.0) || !(e.init_scale >= 0.0) {
                    return Err(bad("engine.zeta and engine.init_scale must be ≥ 0"));
                }
                if e.modes.contains(&Mode::Earthquake) && !(e.zeta > 0.0) {
                    return Err(bad("the earthquake mode needs engine.zeta > 0"));
                }
                if let Some(s) = samples {
                    if e.batch > s {
                        return Err(bad("engine.batch exceeds the sample count"));
                    }
                    let n = (s / e.batch) as u64;
                    if e.modes.iter().any(|md| md.is_epoch_based()) && (s % e.batch != 0 || e.steps % n != 0) {
                        return Err(bad("WOR modes need batch | samples and steps divisible by the epoch length"));
                    }
                }
                if let Some([i, j]) = a.projection {
                    if i == j {
                        return Err(bad("analysis.projection needs two different indices"));
                    }
                }
            }
        }
        if let Some(s) = &m.start {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(bad("model.start must be finite"));
            }
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<Dataset> {
        match &self.model.data {
            DataSection::Synthetic { samples, seed } => crate::models::gen_regression_dataset(*samples, self.model.epsilon, *seed),
            DataSection::Mnist { dir, samples } => {
                let dir = resolve_mnist_dir(dir.as_deref())?;
                let (img, lbl) = mnist::train_files(&dir);
                let full = mnist::load_mnist(&img, &lbl)?;
                if *samples > full.len() {
                    return Err(bad(format!("asked for {samples} MNIST samples, file has {}", full.len())));
                }
                full.subset(&(0..*samples).collect::<Vec<_>>())
            }
            DataSection::Csv { path } => Dataset::read_csv(path),
        }
    }
}

fn resolve_mnist_dir(dir: Option<&Path>) -> Result<PathBuf> {
    match dir {
        Some(d) => Ok(d.to_path_buf()),
        None => std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .ok_or_else(|| bad(format!("MNIST data needs model.data.dir or ${DATA_DIR_ENV}"))),
    }
}
