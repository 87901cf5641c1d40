//! Training dynamics: GD, SGD with (WR) and without (WOR) replacement, the
//! earthquake model, SGLD and SGWORLD.
//!
//! Every engine streams `(step, θ)` records into a [`TrajectorySink`], so long
//! runs can be analysed on the fly without storing the trajectory.

mod ensemble;
mod sampling;
mod trajectory;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use ensemble::{run_ensemble, worker_pool};
pub use sampling::{sample_wor_epoch, sample_wr_batch};
pub use trajectory::Trajectory;

use crate::diffusion::effective_loss_perturbation;
use crate::error::{invalid, Error, Result};
use crate::models::{Dataset, ModelSpec};
use crate::rng::{self, RunRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Gd,
    SgdWr,
    SgdWor,
    Earthquake,
    Sgld,
    Sgworld,
}

impl Mode {
    /// Modes whose natural time unit is the epoch of `n = M/m` steps.
    pub fn is_epoch_based(self) -> bool {
        matches!(self, Mode::SgdWor | Mode::Sgworld)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Gd => "gd",
            Mode::SgdWr => "sgd-wr",
            Mode::SgdWor => "sgd-wor",
            Mode::Earthquake => "earthquake",
            Mode::Sgld => "sgld",
            Mode::Sgworld => "sgworld",
        }
    }
}

pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub mode: Mode,
    pub eta: f64,
    /// Minibatch size `m`.
    pub batch: usize,
    /// Number of parameter updates. Epoch-based modes need a multiple of `n`.
    pub steps: u64,
    pub seed: u64,
    /// Ensemble index; selects an independent random stream.
    #[serde(default)]
    pub run: u64,
    /// Earthquake displacement scale.
    #[serde(default)]
    pub zeta: f64,
    /// Record every k-th step (step modes) or epoch (epoch modes); 0 records
    /// only the start and the end.
    #[serde(default = "one")]
    pub thinning: u64,
    /// Multiplier on the injected Langevin noise of SGLD/SGWORLD.
    #[serde(default = "unit")]
    pub noise_scale: f64,
    /// Whether SGWORLD adds the `η∇δ𝓛` correction.
    #[serde(default = "yes")]
    pub wor_correction: bool,
    #[serde(default = "bound")]
    pub divergence_bound: f64,
}

fn one() -> u64 {
    1
}
fn unit() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn bound() -> f64 {
    DEFAULT_DIVERGENCE_BOUND
}

impl EngineConfig {
    pub fn new(mode: Mode, eta: f64, batch: usize, steps: u64, seed: u64) -> Self {
        Self {
            mode,
            eta,
            batch,
            steps,
            seed,
            run: 0,
            zeta: 0.0,
            thinning: 1,
            noise_scale: 1.0,
            wor_correction: true,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
        }
    }

    pub fn with_run(mut self, run: u64) -> Self {
        self.run = run;
        self
    }

    pub fn validate(&self, m_total: usize) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(invalid("η must be positive"));
        }
        if self.batch == 0 || self.batch > m_total {
            return Err(invalid(format!("batch size {} must lie in 1..={m_total}", self.batch)));
        }
        if self.mode.is_epoch_based() {
            if !m_total.is_multiple_of(self.batch) {
                return Err(invalid(format!("{} needs M divisible by m (M={m_total}, m={})", self.mode.name(), self.batch)));
            }
            let n = (m_total / self.batch) as u64;
            if !self.steps.is_multiple_of(n) {
                return Err(invalid(format!("{} runs whole epochs: steps must be a multiple of n = {n}", self.mode.name())));
            }
        }
        if !(self.zeta >= 0.0) {
            return Err(invalid("ζ must be non-negative"));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(invalid("noise scale must be non-negative"));
        }
        if !(self.divergence_bound > 0.0) {
            return Err(invalid("divergence bound must be positive"));
        }
        Ok(())
    }
}

/// Receives the recorded states of a run.
pub trait TrajectorySink {
    fn record(&mut self, step: u64, theta: &[f64]);
}

/// Discards everything.
impl TrajectorySink for () {
    fn record(&mut self, _: u64, _: &[f64]) {}
}

impl<S: TrajectorySink + ?Sized> TrajectorySink for &mut S {
    fn record(&mut self, step: u64, theta: &[f64]) {
        (**self).record(step, theta)
    }
}

/// Feeds two sinks from one run.
pub struct Tee<A, B>(pub A, pub B);

impl<A: TrajectorySink, B: TrajectorySink> TrajectorySink for Tee<A, B> {
    fn record(&mut self, step: u64, theta: &[f64]) {
        self.0.record(step, theta);
        self.1.record(step, theta);
    }
}

struct State<'a> {
    model: &'a ModelSpec,
    data: &'a Dataset,
    cfg: &'a EngineConfig,
    theta: Vec<f64>,
    grad: Vec<f64>,
    rng: RunRng,
}

impl State<'_> {
    #[inline]
    fn descend(&mut self, batch: Option<&[usize]>) {
        self.model.loss_grad_into(self.data, &self.theta, batch, &mut self.grad);
        let eta = self.cfg.eta;
        for (t, g) in self.theta.iter_mut().zip(&self.grad) {
            *t -= eta * g;
        }
    }

    #[inline]
    fn add_noise(&mut self, sd: f64) {
        if sd == 0.0 {
            return;
        }
        for t in self.theta.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *t += sd * z;
        }
    }

    #[inline]
    fn check(&self, step: u64) -> Result<()> {
        let norm = self.theta.iter().fold(0.0f64, |a, t| a.max(t.abs()));
        if !(norm <= self.cfg.divergence_bound) {
            return Err(Error::Diverged { step, norm, bound: self.cfg.divergence_bound });
        }
        Ok(())
    }
}

/// Run any engine, streaming records into `sink`; returns the final θ.
pub fn run_into<S: TrajectorySink>(
    model: &ModelSpec,
    data: &Dataset,
    theta_init: &[f64],
    cfg: &EngineConfig,
    sink: &mut S,
) -> Result<Vec<f64>> {
    model.check(data, theta_init)?;
    cfg.validate(data.len())?;
    let mut st = State {
        model,
        data,
        cfg,
        theta: theta_init.to_vec(),
        grad: vec![0.0; model.n_params()],
        rng: rng::run_rng(cfg.seed, cfg.run),
    };
    sink.record(0, &st.theta);
    let m_total = data.len();
    let thin = cfg.thinning;
    let should_record = |k: u64, last: bool| last || (thin > 0 && k.is_multiple_of(thin));
    match cfg.mode {
        Mode::Gd | Mode::SgdWr | Mode::Earthquake | Mode::Sgld => {
            let mut batch: Vec<usize> = Vec::with_capacity(cfg.batch);
            let mut shifted = vec![0.0; model.n_params()];
            for step in 1..=cfg.steps {
                match cfg.mode {
                    Mode::Gd => st.descend(None),
                    Mode::SgdWr | Mode::Sgld => {
                        batch.clear();
                        batch.extend(rand::seq::index::sample(&mut st.rng, m_total, cfg.batch).iter());
                        st.descend(Some(&batch));
                        if cfg.mode == Mode::Sgld {
                            st.add_noise(cfg.noise_scale * (2.0 * cfg.eta).sqrt());
                        }
                    }
                    Mode::Earthquake => {
                        for (s, t) in shifted.iter_mut().zip(&st.theta) {
                            let z: f64 = StandardNormal.sample(&mut st.rng);
                            *s = t + cfg.zeta * z;
                        }
                        model.loss_grad_into(data, &shifted, None, &mut st.grad);
                        for (t, g) in st.theta.iter_mut().zip(&st.grad) {
                            *t -= cfg.eta * g;
                        }
                    }
                    _ => unreachable!(),
                }
                st.check(step)?;
                if should_record(step, step == cfg.steps) {
                    sink.record(step, &st.theta);
                }
            }
        }
        Mode::SgdWor | Mode::Sgworld => {
            let n = m_total / cfg.batch;
            let epochs = cfg.steps / n as u64;
            let mut perm: Vec<usize> = (0..m_total).collect();
            for epoch in 1..=epochs {
                let correction = if cfg.mode == Mode::Sgworld && cfg.wor_correction && n > 1 {
                    effective_loss_perturbation(model, data, &st.theta, cfg.eta, cfg.batch, true)?.gradient
                } else {
                    None
                };
                perm.shuffle(&mut st.rng);
                for (t, chunk) in perm.chunks(cfg.batch).enumerate() {
                    st.model.loss_grad_into(st.data, &st.theta, Some(chunk), &mut st.grad);
                    for (th, g) in st.theta.iter_mut().zip(&st.grad) {
                        *th -= cfg.eta * g;
                    }
                    st.check((epoch - 1) * n as u64 + t as u64 + 1)?;
                }
                if cfg.mode == Mode::Sgworld {
                    st.add_noise(cfg.noise_scale * (2.0 * cfg.eta * n as f64).sqrt());
                    if let Some(c) = &correction {
                        for (th, g) in st.theta.iter_mut().zip(c.iter()) {
                            *th += cfg.eta * g;
                        }
                    }
                }
                let step = epoch * n as u64;
                st.check(step)?;
                if should_record(epoch, epoch == epochs) {
                    sink.record(step, &st.theta);
                }
            }
        }
    }
    Ok(st.theta)
}

fn run_collect(model: &ModelSpec, data: &Dataset, theta_init: &[f64], cfg: &EngineConfig) -> Result<Trajectory> {
    let mut traj = Trajectory::new(model.n_params(), cfg.clone());
    let fin = run_into(model, data, theta_init, cfg, &mut traj)?;
    traj.theta_final = fin;
    Ok(traj)
}

fn require(cfg: &EngineConfig, allowed: &[Mode]) -> Result<()> {
    if allowed.contains(&cfg.mode) {
        Ok(())
    } else {
        Err(invalid(format!("mode {} not valid for this engine", cfg.mode.name())))
    }
}

/// GD, SGD-WR or SGD-WOR.
pub fn run_sgd(model: &ModelSpec, data: &Dataset, theta_init: &[f64], cfg: &EngineConfig) -> Result<Trajectory> {
    require(cfg, &[Mode::Gd, Mode::SgdWr, Mode::SgdWor])?;
    run_collect(model, data, theta_init, cfg)
}

/// `θ ← θ − η∇𝓛(θ + ζz)` with fresh standard normal `z` each step.
pub fn run_earthquake(model: &ModelSpec, data: &Dataset, theta_init: &[f64], cfg: &EngineConfig) -> Result<Trajectory> {
    require(cfg, &[Mode::Earthquake])?;
    run_collect(model, data, theta_init, cfg)
}

/// WR step plus `√(2η) z` each step.
pub fn run_sgld(model: &ModelSpec, data: &Dataset, theta_init: &[f64], cfg: &EngineConfig) -> Result<Trajectory> {
    require(cfg, &[Mode::Sgld])?;
    run_collect(model, data, theta_init, cfg)
}

/// Per epoch: n WOR steps, `+√(2ηn) z`, and `+η∇δ𝓛` at the epoch-start θ.
pub fn run_sgworld(model: &ModelSpec, data: &Dataset, theta_init: &[f64], cfg: &EngineConfig) -> Result<Trajectory> {
    require(cfg, &[Mode::Sgworld])?;
    run_collect(model, data, theta_init, cfg)
}

/// Standard normal vector from a dedicated stream, e.g. for initial conditions.
pub fn normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}
