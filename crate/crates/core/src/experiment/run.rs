//! The `run` pipeline: data, minimum, ensembles, theory, statistics, artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::compare::{self, tol};
use super::config::{Check, DataSection, ExperimentConfig, ExperimentKind, Format, InitKind};
use super::svg;
use crate::diffusion::WorVariant;
use crate::engines::{self, run_ensemble, EngineConfig, Mode, Tee, Trajectory, TrajectorySink};
use crate::error::{Error, Result};
use crate::io::{self, write_json, write_matrix_csv, write_table};
use crate::linalg::{max_abs, min_eigenvalue, Mat, Vector};
use crate::models::{Dataset, ModelKind, ModelSpec};
use crate::rng::stream_rng;
use crate::stationary::{
    circulation_and_rates, earthquake_theory, find_minimum, kl_vs_eta, log_log_slope, sampler_theory, wor_diffusion_at,
    wor_theory, wr_theory, Landscape, Sampler, StationaryTheory,
};
use crate::trajstats::{fdt_trace_from, AnalyzerConfig, FluctuationReport, StationaryAnalyzer};

const START_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
/// Fewest blocks the default block length leaves for standard errors.
const MIN_BLOCKS: u64 = 20;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Artifact directory; overrides `output.dir`.
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub seed_override: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Seeds {
    pub data: Option<u64>,
    pub engine: Option<u64>,
    pub runs: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub kind: ExperimentKind,
    pub config_sha256: String,
    pub version: String,
    pub seeds: Seeds,
    pub workers: usize,
    pub wall_time_s: f64,
    pub tolerances: BTreeMap<String, f64>,
    pub results: Value,
}

impl Summary {
    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json"))?)?)
    }
}

pub fn tolerances() -> BTreeMap<String, f64> {
    [
        ("dominance", tol::DOMINANCE),
        ("sigma_rel", tol::SIGMA_REL),
        ("area_rel", tol::AREA_REL),
        ("ift_abs", tol::IFT_ABS),
        ("dft_slope_abs", tol::DFT_SLOPE_ABS),
        ("entropy_rate_rel", tol::ENTROPY_RATE_REL),
        ("zero_area_se", tol::ZERO_AREA_SE),
        ("earthquake_sigma_rel", tol::EARTHQUAKE_SIGMA_REL),
        ("pearson_min", tol::PEARSON_MIN),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Load, validate and run a config file.
pub fn run_config_file(path: &Path, opts: &RunOptions) -> Result<(PathBuf, Summary)> {
    let (cfg, text) = ExperimentConfig::load(path)?;
    run_experiment(&cfg, &text, opts)
}

/// Runs an experiment into a scratch directory and moves it into place only
/// when everything succeeded, so a failed run leaves no artifacts behind.
pub fn run_experiment(cfg: &ExperimentConfig, config_text: &str, opts: &RunOptions) -> Result<(PathBuf, Summary)> {
    let mut cfg = cfg.clone();
    if let (Some(s), Some(e)) = (opts.seed_override, cfg.engine.as_mut()) {
        e.seed = s;
    }
    cfg.validate()?;
    let out = opts.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    if out.exists() && (!out.is_dir() || (std::fs::read_dir(&out)?.next().is_some() && !out.join("summary.json").is_file())) {
        return Err(Error::Validation(format!("{} exists and is not an artifact directory", out.display())));
    }
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent)?;
    let leaf = out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let tmp = parent.join(format!(".{leaf}.partial-{}", std::process::id()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp)?;
    }
    std::fs::create_dir_all(&tmp)?;
    match execute(&cfg, config_text, opts, &tmp) {
        Ok(summary) => {
            if out.exists() {
                std::fs::remove_dir_all(&out)?;
            }
            std::fs::rename(&tmp, &out)?;
            Ok((out, summary))
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&tmp);
            Err(e)
        }
    }
}

fn execute(cfg: &ExperimentConfig, config_text: &str, opts: &RunOptions, dir: &Path) -> Result<Summary> {
    let clock = Instant::now();
    let data = cfg.load_data()?;
    let model = cfg.model_spec(&data);
    let start = start_point(cfg, &model)?;
    let theta0 = find_minimum(&model, &data, &start, Landscape::Plain)?;
    log::info!("θ₀ = {:?}, 𝓛(θ₀) = {:e}", theta0.as_slice(), model.loss(&data, theta0.as_slice()));
    if cfg.has(Format::Csv) {
        write_table(&dir.join("theta0.csv"), &["index", "theta0"], &rows_indexed(theta0.as_slice()))?;
    }
    let ctx = Ctx { cfg, model: &model, data: &data, theta0: theta0.as_slice(), workers: opts.workers, dir };
    let results = match cfg.experiment.kind {
        ExperimentKind::Training => training(&ctx)?,
        ExperimentKind::Stationary => stationary(&ctx)?,
        ExperimentKind::Posterior => posterior(&ctx)?,
    };
    if cfg.has(Format::Svg) {
        svg::render_dir(dir)?;
    }
    let summary = Summary {
        name: cfg.experiment.name.clone(),
        kind: cfg.experiment.kind,
        config_sha256: io::sha256_hex(config_text.as_bytes()),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: Seeds {
            data: match cfg.model.data {
                DataSection::Synthetic { seed, .. } => Some(seed),
                _ => None,
            },
            engine: cfg.engine.as_ref().map(|e| e.seed),
            runs: cfg.engine.as_ref().map_or(0, |e| e.runs),
        },
        workers: if opts.workers == 0 { rayon::current_num_threads() } else { opts.workers },
        wall_time_s: clock.elapsed().as_secs_f64(),
        tolerances: tolerances(),
        results: json!({ "theta0": theta0.as_slice(), "details": results }),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a ModelSpec,
    data: &'a Dataset,
    theta0: &'a [f64],
    workers: usize,
    dir: &'a Path,
}

fn rows_indexed(v: &[f64]) -> Vec<Vec<f64>> {
    v.iter().enumerate().map(|(i, x)| vec![i as f64, *x]).collect()
}

/// Configured start, or a small normal draw seeded from the data seed.
fn start_point(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<Vec<f64>> {
    let n = model.n_params();
    match &cfg.model.start {
        Some(s) if s.len() == n => Ok(s.clone()),
        Some(s) => Err(Error::Validation(format!("model.start has {} entries, the model has {n} parameters", s.len()))),
        None => {
            let seed = match cfg.model.data {
                DataSection::Synthetic { seed, .. } => seed,
                _ => 0,
            };
            let mut rng = stream_rng(seed, 0, START_STREAM);
            Ok(engines::normal_vector(n, &mut rng).into_iter().map(|z| 0.1 * z).collect())
        }
    }
}

fn epoch_len(mode: Mode, data: &Dataset, batch: usize) -> u64 {
    if mode.is_epoch_based() {
        (data.len() / batch) as u64
    } else {
        1
    }
}

// ---------------------------------------------------------------- training

/// Relative loss error `𝓛(θ)/𝓛(θ₀) − 1` at the steps in `at` (ascending).
struct LossCurve<'a> {
    model: &'a ModelSpec,
    data: &'a Dataset,
    l0: f64,
    at: &'a [u64],
    next: usize,
    values: Vec<(u64, f64)>,
}

impl TrajectorySink for LossCurve<'_> {
    fn record(&mut self, step: u64, theta: &[f64]) {
        if self.at.get(self.next) == Some(&step) {
            self.next += 1;
            self.values.push((step, self.model.loss(self.data, theta) / self.l0 - 1.0));
        }
    }
}

/// Step 0 plus `points − 1` roughly log-spaced multiples of `unit` up to `steps`.
fn log_grid(steps: u64, unit: u64, points: usize) -> Vec<u64> {
    let units = steps / unit;
    let mut g = vec![0];
    for k in 0..points.saturating_sub(1) {
        let f = if points > 2 { k as f64 / (points - 2) as f64 } else { 1.0 };
        let u = (units as f64).powf(f).round().clamp(1.0, units as f64) as u64;
        if *g.last().unwrap() != u * unit {
            g.push(u * unit);
        }
    }
    g
}

fn training(ctx: &Ctx) -> Result<Value> {
    let e = ctx.cfg.engine.as_ref().expect("validated");
    let n_params = ctx.model.n_params();
    let l0 = ctx.model.loss(ctx.data, ctx.theta0);
    // One grid for all modes, whole epochs when any mode needs them.
    let unit = e.modes.iter().map(|&m| epoch_len(m, ctx.data, e.batch)).max().unwrap_or(1);
    let grid = log_grid(e.steps, unit, ctx.cfg.analysis.curve_points);
    let curves = run_ensemble(e.runs, ctx.workers, |run| {
        let init = initial_point(ctx, e.init, e.init_scale, e.seed, run, n_params);
        e.modes
            .iter()
            .map(|&mode| {
                let mut ec = engine_config(e, mode, run);
                ec.thinning = 1;
                let mut sink = LossCurve { model: ctx.model, data: ctx.data, l0, at: &grid, next: 0, values: Vec::new() };
                engines::run_into(ctx.model, ctx.data, &init, &ec, &mut sink)?;
                Ok(sink.values)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let steps: Vec<u64> = curves[0][0].iter().map(|v| v.0).collect();
    let runs = e.runs as f64;
    let mut headers = vec!["step".to_string()];
    let mut finals = serde_json::Map::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (k, mode) in e.modes.iter().enumerate() {
        headers.push(format!("{}_mean", mode.name()));
        headers.push(format!("{}_se", mode.name()));
        let mut mean = vec![0.0; steps.len()];
        let mut sq = vec![0.0; steps.len()];
        for run in &curves {
            for (t, (_, v)) in run[k].iter().enumerate() {
                mean[t] += v / runs;
                sq[t] += v * v / runs;
            }
        }
        let se: Vec<f64> = mean
            .iter()
            .zip(&sq)
            .map(|(m, s)| if e.runs > 1 { ((s - m * m).max(0.0) * runs / (runs - 1.0) / runs).sqrt() } else { f64::NAN })
            .collect();
        finals.insert(mode.name().into(), json!({ "final_mean": mean[steps.len() - 1], "final_se": se[steps.len() - 1] }));
        columns.push(mean);
        columns.push(se);
    }
    let rows: Vec<Vec<f64>> =
        (0..steps.len()).map(|t| std::iter::once(steps[t] as f64).chain(columns.iter().map(|c| c[t])).collect()).collect();
    let hdr: Vec<&str> = headers.iter().map(String::as_str).collect();
    write_table(&ctx.dir.join("loss_curve.csv"), &hdr, &rows)?;
    Ok(json!({ "loss_at_minimum": l0, "modes": finals }))
}

fn initial_point(ctx: &Ctx, kind: InitKind, scale: f64, seed: u64, run: u64, n: usize) -> Vec<f64> {
    match kind {
        InitKind::Minimum => ctx.theta0.to_vec(),
        InitKind::Random => {
            let mut rng = stream_rng(seed, run, INIT_STREAM);
            engines::normal_vector(n, &mut rng).iter().zip(ctx.theta0).map(|(z, t)| t + scale * z).collect()
        }
    }
}

fn engine_config(e: &super::config::EngineSection, mode: Mode, run: u64) -> EngineConfig {
    let mut ec = EngineConfig::new(mode, e.eta, e.batch, e.steps, e.seed).with_run(run);
    ec.zeta = e.zeta;
    ec.thinning = e.thinning;
    ec
}

// -------------------------------------------------------------- stationary

/// Theory and drift for one mode, in analysis time units (epochs for WOR modes).
pub struct ModeTheory {
    pub theory: StationaryTheory,
    /// Relaxation time of the slowest direction, in analysis units.
    pub slowest: f64,
    grad: GradFn,
}

type GradFn = Box<dyn Fn(&[f64], &mut [f64]) + Sync + 'static>;

/// Stationary prediction for `mode` around the minimum `theta0` of 𝓛.
#[allow(clippy::too_many_arguments)]
pub fn mode_theory(
    model: &ModelSpec,
    data: &Dataset,
    theta0: &[f64],
    mode: Mode,
    eta: f64,
    m: usize,
    zeta: f64,
    variant: WorVariant,
) -> Result<ModeTheory> {
    let n = (data.len() / m) as f64;
    let plain = |scale: f64| {
        let (model, data) = (model.clone(), data.clone());
        Box::new(move |th: &[f64], g: &mut [f64]| {
            model.loss_grad_into(&data, th, None, g);
            g.iter_mut().for_each(|x| *x *= scale);
        }) as GradFn
    };
    let (theory, grad) = match mode {
        Mode::SgdWr => (wr_theory(model, data, theta0, eta, m)?, plain(1.0)),
        Mode::Earthquake => (earthquake_theory(model, data, theta0, eta, zeta)?, plain(1.0)),
        Mode::SgdWor => {
            let landscape = Landscape::Wor { eta, m };
            let hat = find_minimum(model, data, theta0, landscape)?;
            let (mc, dc) = (model.clone(), data.clone());
            let g = Box::new(move |th: &[f64], out: &mut [f64]| {
                let v = landscape.gradient(&mc, &dc, th).expect("landscape gradient");
                out.copy_from_slice(v.as_slice());
            }) as GradFn;
            (wor_theory(model, data, hat.as_slice(), eta, m, variant)?, g)
        }
        Mode::Sgld | Mode::Sgworld => {
            let k = theta0.len();
            let h = model.second_order(data, theta0, false)?.h;
            let (sampler, s, mb) = if mode == Mode::Sgld {
                let b = model.evaluate(data, theta0, None)?;
                let d = crate::diffusion::diffusion_wr(&b.v, &b.grad_data(), eta, m, data.len(), crate::diffusion::WrVariant::Exact)?;
                (Sampler::Sgld, 1.0, d)
            } else {
                (Sampler::Sgworld, n, wor_diffusion_at(model, data, theta0, eta, m, WorVariant::Hdh)?)
            };
            let st = sampler_theory(model, data, theta0, eta, m, sampler)?;
            let h = &h * s;
            let d = mb + Mat::identity(k, k) * (eta * s);
            let circ = circulation_and_rates(&h, &st.sigma, &d, eta)?;
            let theory = StationaryTheory {
                mode: mode.name().into(),
                eta,
                theta0: Vector::from_column_slice(theta0),
                h0: h,
                d0: d,
                sigma: st.sigma,
                c: circ.c,
                entropy_rate: circ.entropy_rate,
            };
            (theory, plain(s))
        }
        Mode::Gd => return Err(Error::Capability("gradient descent has no stationary fluctuations".into())),
    };
    let slowest = 1.0 / (eta * min_eigenvalue(&theory.h0));
    Ok(ModeTheory { theory, slowest, grad })
}

/// Rewrites step indices into analysis units.
struct Units<S> {
    inner: S,
    div: u64,
}

impl<S: TrajectorySink> TrajectorySink for Units<S> {
    fn record(&mut self, step: u64, theta: &[f64]) {
        self.inner.record(step / self.div, theta);
    }
}

/// Keeps every `every`-th record from `from` on.
struct Sparse {
    from: u64,
    every: u64,
    seen: u64,
    flat: Vec<f64>,
}

impl TrajectorySink for Sparse {
    fn record(&mut self, step: u64, theta: &[f64]) {
        if step < self.from {
            return;
        }
        if self.seen.is_multiple_of(self.every) {
            self.flat.extend_from_slice(theta);
        }
        self.seen += 1;
    }
}

/// 2-D histogram of two coordinates around a centre, over ±4 theory standard deviations.
#[derive(Clone)]
struct Density {
    from: u64,
    axes: [usize; 2],
    centre: [f64; 2],
    half: [f64; 2],
    bins: usize,
    counts: Vec<u64>,
    total: u64,
}

impl TrajectorySink for Density {
    fn record(&mut self, step: u64, theta: &[f64]) {
        if step < self.from {
            return;
        }
        self.total += 1;
        let mut idx = [0usize; 2];
        for a in 0..2 {
            let u = (theta[self.axes[a]] - self.centre[a] + self.half[a]) / (2.0 * self.half[a]);
            if !(0.0..1.0).contains(&u) {
                return;
            }
            idx[a] = (u * self.bins as f64) as usize;
        }
        self.counts[idx[0] * self.bins + idx[1]] += 1;
    }
}

struct RunOutput {
    analyzer: StationaryAnalyzer,
    sparse: Option<Vec<f64>>,
    density: Option<Density>,
    trajectory: Option<Trajectory>,
}

fn stationary(ctx: &Ctx) -> Result<Value> {
    let e = ctx.cfg.engine.as_ref().expect("validated");
    let mut out = serde_json::Map::new();
    for &mode in &e.modes {
        let dir = if e.modes.len() > 1 { ctx.dir.join(mode.name()) } else { ctx.dir.to_path_buf() };
        std::fs::create_dir_all(&dir)?;
        out.insert(mode.name().into(), stationary_mode(ctx, mode, &dir)?);
    }
    Ok(Value::Object(out))
}

fn stationary_mode(ctx: &Ctx, mode: Mode, dir: &Path) -> Result<Value> {
    let cfg = ctx.cfg;
    let a = &cfg.analysis;
    let e = cfg.engine.as_ref().expect("validated");
    let mt = mode_theory(ctx.model, ctx.data, ctx.theta0, mode, e.eta, e.batch, e.zeta, a.wor_variant)?;
    let th = &mt.theory;
    let unit = epoch_len(mode, ctx.data, e.batch);
    let total_units = e.steps / unit;
    let burn_in = (a.burn_in * total_units as f64).ceil() as u64;
    let records_per_run = (total_units - burn_in) / e.thinning;
    let block_len = if a.block_len > 0 {
        a.block_len
    } else {
        ((10.0 * mt.slowest / e.thinning as f64).ceil() as u64).clamp(1, (records_per_run * e.runs / MIN_BLOCKS).max(1))
    };
    let want_entropy = cfg.wants(Check::Entropy) && th.entropy_rate > 0.0;
    if cfg.wants(Check::Entropy) && !want_entropy {
        log::warn!("{}: no entropy production predicted, skipping fluctuation theorems", mode.name());
    }
    let ells = if want_entropy { a.ells.clone() } else { Vec::new() };
    let mut acfg = AnalyzerConfig::with_theory_bins(burn_in, ells, th.entropy_rate, block_len);
    if let (true, Some(w)) = (want_entropy, &a.bin_widths) {
        acfg.bin_widths = w.clone();
    }
    let density0 = a.projection.map(|axes| {
        let sd = |i: usize| 4.0 * th.sigma[(i, i)].sqrt();
        Density {
            from: burn_in,
            axes,
            centre: [th.theta0[axes[0]], th.theta0[axes[1]]],
            half: [sd(axes[0]), sd(axes[1])],
            bins: a.projection_bins,
            counts: vec![0; a.projection_bins * a.projection_bins],
            total: 0,
        }
    });
    let want_fdt = cfg.wants(Check::Fdt);
    let keep_traj = cfg.has(Format::Trajectory);
    let start = th.theta0.as_slice().to_vec();
    let runs = run_ensemble(e.runs, ctx.workers, |run| {
        let ec = engine_config(e, mode, run);
        let mut analyzer = StationaryAnalyzer::from_theory(th, &acfg)?;
        let mut sparse = want_fdt.then(|| Sparse { from: burn_in, every: a.fdt_every, seen: 0, flat: Vec::new() });
        let mut density = density0.clone();
        let mut traj = (keep_traj && run == 0).then(|| Trajectory::new(start.len(), ec.clone()));
        let fin = {
            let sink = Tee(&mut analyzer, Tee(OptSink(sparse.as_mut()), Tee(OptSink(density.as_mut()), OptSink(traj.as_mut()))));
            engines::run_into(ctx.model, ctx.data, &start, &ec, &mut Units { inner: sink, div: unit })?
        };
        if let Some(t) = traj.as_mut() {
            t.theta_final = fin;
        }
        Ok(RunOutput { analyzer, sparse: sparse.map(|s| s.flat), density, trajectory: traj })
    })?;
    let mut iter = runs.into_iter();
    let first = iter.next().expect("at least one run");
    let mut analyzer = first.analyzer;
    let mut sparse = first.sparse;
    let mut density = first.density;
    let trajectory = first.trajectory;
    for r in iter {
        analyzer.merge(&r.analyzer);
        if let (Some(s), Some(o)) = (sparse.as_mut(), r.sparse) {
            s.extend(o);
        }
        if let (Some(d), Some(o)) = (density.as_mut(), r.density) {
            d.counts.iter_mut().zip(&o.counts).for_each(|(x, y)| *x += y);
            d.total += o.total;
        }
    }
    let fdt = match &sparse {
        Some(flat) => {
            let n = start.len();
            Some(fdt_trace_from(flat.chunks(n), &mt.grad, th.theta0.as_slice(), th.eta, &th.d0)?)
        }
        None => None,
    };
    let report = analyzer.report(fdt);
    write_mode_artifacts(ctx, dir, th, &report, density.as_ref(), trajectory.as_ref())?;
    let mut res = mode_results(cfg, th, &report, &mt, burn_in, block_len, unit);
    let shift = (&th.theta0 - Vector::from_column_slice(ctx.theta0)).norm();
    res["centre_shift_norm"] = json!(shift);
    Ok(res)
}

/// Adapts an optional sink.
struct OptSink<'a, S>(Option<&'a mut S>);

impl<S: TrajectorySink> TrajectorySink for OptSink<'_, S> {
    fn record(&mut self, step: u64, theta: &[f64]) {
        if let Some(s) = self.0.as_mut() {
            s.record(step, theta);
        }
    }
}

fn write_mode_artifacts(
    ctx: &Ctx,
    dir: &Path,
    th: &StationaryTheory,
    report: &FluctuationReport,
    density: Option<&Density>,
    trajectory: Option<&Trajectory>,
) -> Result<()> {
    let cfg = ctx.cfg;
    let c0 = th.theta0.as_slice();
    if cfg.has(Format::Json) {
        th.write_json(&dir.join("theory.json"))?;
        report.write_json(&dir.join("report.json"))?;
    }
    if cfg.has(Format::Csv) {
        if cfg.wants(Check::Moments) {
            write_matrix_csv(&dir.join("sigma_theory.csv"), &th.sigma, "Sigma", c0)?;
            write_matrix_csv(&dir.join("sigma_empirical.csv"), &report.sigma_emp, "Sigma", c0)?;
            write_matrix_csv(&dir.join("sigma_se.csv"), &report.sigma_se, "Sigma_se", c0)?;
        }
        if cfg.wants(Check::Area) {
            write_matrix_csv(&dir.join("C_theory.csv"), &th.c, "C", c0)?;
            write_matrix_csv(&dir.join("C_empirical.csv"), &report.area_rate_emp, "C", c0)?;
            write_matrix_csv(&dir.join("C_se.csv"), &report.area_rate_se, "C_se", c0)?;
        }
        let n = c0.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .flat_map(|i| (0..=i).map(move |j| (i, j)))
            .map(|(i, j)| {
                vec![
                    i as f64,
                    j as f64,
                    th.sigma[(i, j)],
                    report.sigma_emp[(i, j)],
                    report.sigma_se[(i, j)],
                    th.c[(i, j)],
                    report.area_rate_emp[(i, j)],
                    report.area_rate_se[(i, j)],
                ]
            })
            .collect();
        write_table(
            &dir.join("pairs.csv"),
            &["i", "j", "sigma_theory", "sigma_empirical", "sigma_se", "c_theory", "c_empirical", "c_se"],
            &rows,
        )?;
        if !report.per_ell.is_empty() {
            report.write_dft_csv(&dir.join("dft.csv"))?;
            report.write_histogram_csv(&dir.join("histogram.csv"))?;
            let rows: Vec<Vec<f64>> = report
                .per_ell
                .iter()
                .map(|r| vec![r.ell as f64, r.count as f64, r.mean_sigma, r.mean_sigma_se, r.ift, r.ift_se, r.dft_slope.unwrap_or(f64::NAN)])
                .collect();
            write_table(&dir.join("entropy.csv"), &["ell", "windows", "mean_sigma", "mean_sigma_se", "ift", "ift_se", "dft_slope"], &rows)?;
        }
        if let Some(d) = density {
            write_density(&dir.join("density.csv"), d, th)?;
        }
    }
    if let Some(t) = trajectory {
        t.write_binary(&dir.join("trajectory.bin"))?;
    }
    Ok(())
}

/// `x,y,empirical,theory` on bin centres, both as probability densities.
fn write_density(path: &Path, d: &Density, th: &StationaryTheory) -> Result<()> {
    let [a, b] = d.axes;
    let s = Mat::from_row_slice(2, 2, &[th.sigma[(a, a)], th.sigma[(a, b)], th.sigma[(b, a)], th.sigma[(b, b)]]);
    let inv = s.clone().try_inverse().unwrap_or_else(|| Mat::zeros(2, 2));
    let norm = 1.0 / (2.0 * std::f64::consts::PI * s.determinant().max(0.0).sqrt());
    let dx = [2.0 * d.half[0] / d.bins as f64, 2.0 * d.half[1] / d.bins as f64];
    let mut rows = Vec::with_capacity(d.bins * d.bins);
    for i in 0..d.bins {
        for j in 0..d.bins {
            let x = -d.half[0] + (i as f64 + 0.5) * dx[0];
            let y = -d.half[1] + (j as f64 + 0.5) * dx[1];
            let q = inv[(0, 0)] * x * x + 2.0 * inv[(0, 1)] * x * y + inv[(1, 1)] * y * y;
            let emp = d.counts[i * d.bins + j] as f64 / (d.total.max(1) as f64 * dx[0] * dx[1]);
            rows.push(vec![d.centre[0] + x, d.centre[1] + y, emp, norm * (-0.5 * q).exp()]);
        }
    }
    write_table(path, &["x", "y", "empirical", "theory"], &rows)
}

fn mode_results(
    cfg: &ExperimentConfig,
    th: &StationaryTheory,
    report: &FluctuationReport,
    mt: &ModeTheory,
    burn_in: u64,
    block_len: u64,
    unit: u64,
) -> Value {
    let mut r = serde_json::Map::new();
    r.insert("records".into(), json!(report.records));
    r.insert("burn_in_units".into(), json!(burn_in));
    r.insert("steps_per_unit".into(), json!(unit));
    r.insert("block_len".into(), json!(block_len));
    r.insert("slowest_relaxation_units".into(), json!(mt.slowest));
    r.insert("centre".into(), json!(th.theta0.as_slice()));
    let shift: f64 = report.mu_emp.norm();
    r.insert("mean_offset_norm".into(), json!(shift));
    r.insert("trace_sigma_theory".into(), json!(th.sigma.trace()));
    r.insert("trace_sigma_empirical".into(), json!(report.sigma_emp.trace()));
    if cfg.wants(Check::Moments) {
        let d = compare::dominant_diffs(&th.sigma, &report.sigma_emp, &report.sigma_se, true);
        let worst = compare::worst_rel(&d);
        r.insert(
            "sigma".into(),
            json!({
                "worst_rel": worst,
                "pass": worst <= tol::SIGMA_REL,
                "frobenius_rel": (&report.sigma_emp - &th.sigma).norm() / report.sigma_emp.norm(),
                "pearson": compare::pearson(&th.sigma, &report.sigma_emp, true),
                "elements": d,
            }),
        );
    }
    if cfg.wants(Check::Area) {
        // A circulation at roundoff level is an exact zero of the theory.
        let c_zero = max_abs(&th.c) <= 1e-10 * th.eta * th.h0.norm() * th.sigma.norm();
        let d = if c_zero { Vec::new() } else { compare::dominant_diffs(&th.c, &report.area_rate_emp, &report.area_rate_se, false) };
        let worst = compare::worst_rel(&d);
        let max_z = compare::max_area_z(report);
        r.insert(
            "area".into(),
            json!({
                "theory_zero": c_zero,
                "worst_rel": if d.is_empty() { Value::Null } else { json!(worst) },
                "pass": if c_zero { max_z <= tol::ZERO_AREA_SE } else { !d.is_empty() && worst <= tol::AREA_REL },
                "max_z": max_z,
                "pearson": if th.c.norm() > 0.0 { json!(compare::pearson(&th.c, &report.area_rate_emp, false)) } else { Value::Null },
                "elements": d,
            }),
        );
    }
    if !report.per_ell.is_empty() {
        r.insert("entropy_rate_theory".into(), json!(th.entropy_rate));
        r.insert("entropy".into(), json!(compare::ell_checks(report, th.entropy_rate)));
    }
    if let Some((lhs, rhs)) = report.fdt_trace {
        r.insert("fdt".into(), json!({ "lhs": lhs, "rhs": rhs, "rel": (lhs - rhs).abs() / rhs.abs() }));
    }
    Value::Object(r)
}

// --------------------------------------------------------------- posterior

fn posterior(ctx: &Ctx) -> Result<Value> {
    let a = &ctx.cfg.analysis;
    let m = a.batch.expect("validated");
    if ctx.cfg.model.kind != ModelKind::LinearizedRegression {
        return Err(Error::Capability("exact posterior needs the linearized model".into()));
    }
    let rows = kl_vs_eta(ctx.model, ctx.data, ctx.theta0, &a.etas, m)?;
    let table: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.eta, r.kl_sgld, r.kl_sgworld, r.kl_sgworld_uncorrected]).collect();
    write_table(&ctx.dir.join("kl_vs_eta.csv"), &["eta", "kl_sgld", "kl_sgworld", "kl_sgworld_uncorrected"], &table)?;
    let slope = |f: fn(&crate::stationary::KlRow) -> f64| {
        let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| f(r).is_finite() && f(r) > 0.0).map(|r| (r.eta, f(r))).unzip();
        if x.len() >= 2 {
            json!(log_log_slope(&x, &y))
        } else {
            Value::Null
        }
    };
    // Small-η slope of the uncorrected curve: first two finite points.
    let small: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.kl_sgworld_uncorrected.is_finite()).take(2).map(|r| (r.eta, r.kl_sgworld_uncorrected)).collect();
    let small_slope = (small.len() == 2).then(|| (small[1].1 / small[0].1).ln() / (small[1].0 / small[0].0).ln());
    Ok(json!({
        "batch": m,
        "slope_sgld": slope(|r| r.kl_sgld),
        "slope_sgworld": slope(|r| r.kl_sgworld),
        "slope_sgworld_uncorrected_small_eta": small_slope,
        "rows": rows,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_is_increasing_and_aligned() {
        let g = log_grid(200_000, 20, 101);
        assert_eq!(g[0], 0);
        assert_eq!(*g.last().unwrap(), 200_000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g.iter().all(|s| s % 20 == 0));
        assert_eq!(log_grid(10, 1, 2), vec![0, 10]);
    }
}
