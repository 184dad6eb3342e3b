//! Gradient-descent programming.
//!
//! Every iteration runs one batched MVM on random inputs, measures the error
//! against the digitally computed target product, and turns the gradient of the
//! mean squared error into one pulse matrix for the whole array. The engine only
//! talks to the hardware through [`AnalogMvm`]: MVMs and pulse matrices, never
//! single-device reads.
//!
//! Cost per iteration is one r x B x c MVM on chip plus the r x B x c gradient
//! product in software, O(B r c); memory is O(r c + B (r + c)).

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::plan::DeviceSelectionPlan;
use super::{init_iterative_warmstart, init_single_shot, InputDist, LogRecord, Observer, ProgrammingLog};
use crate::crossbar::CrossbarCore;
use crate::error::{invalid, Error, Result};
use crate::rng::{self, domain};

/// The two operations GDP needs from a core.
pub trait AnalogMvm {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn seed(&self) -> u64;
    fn clock(&self) -> f64;
    /// Input quantization applied by the core (identity for ideal cores).
    fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;
    /// Batched MVM, r x B in, c x B out (weight units).
    fn mvm(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>>;
    fn apply_pulses(&mut self, u: ArrayView2<f64>, plan: &DeviceSelectionPlan) -> Result<()>;
}

impl AnalogMvm for CrossbarCore {
    fn rows(&self) -> usize {
        CrossbarCore::rows(self)
    }
    fn cols(&self) -> usize {
        CrossbarCore::cols(self)
    }
    fn seed(&self) -> u64 {
        CrossbarCore::seed(self)
    }
    fn clock(&self) -> f64 {
        CrossbarCore::clock(self)
    }
    fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        CrossbarCore::encode(self, x)
    }
    fn mvm(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.mvm_batch(x)
    }
    fn apply_pulses(&mut self, u: ArrayView2<f64>, plan: &DeviceSelectionPlan) -> Result<()> {
        self.apply_pulse_matrix(u, plan)
    }
}

/// Differentiable stand-in for a core: exact linear MVM, and pulses that move
/// weights by `gain * u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSurrogate {
    pub weights: Array2<f64>,
    pub gain: f64,
    pub seed: u64,
    pub steps: usize,
}

impl LinearSurrogate {
    pub fn new(weights: Array2<f64>, gain: f64, seed: u64) -> Self {
        Self { weights, gain, seed, steps: 0 }
    }
}

impl AnalogMvm for LinearSurrogate {
    fn rows(&self) -> usize {
        self.weights.nrows()
    }
    fn cols(&self) -> usize {
        self.weights.ncols()
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn clock(&self) -> f64 {
        self.steps as f64
    }
    fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(x.to_owned())
    }
    fn mvm(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.weights.t().dot(&x))
    }
    fn apply_pulses(&mut self, u: ArrayView2<f64>, _plan: &DeviceSelectionPlan) -> Result<()> {
        self.weights.scaled_add(self.gain, &u);
        self.steps += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GdpInit {
    None,
    #[default]
    SingleShot,
    Warmstart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdpConfig {
    /// Pulse amplitude per unit gradient.
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub input: InputDist,
    /// Largest pulse amplitude per iteration.
    #[serde(default = "default_u_clip")]
    pub u_clip: f64,
    /// Reuse one input batch for every iteration instead of drawing fresh ones.
    #[serde(default)]
    pub fixed_pool: bool,
    #[serde(default)]
    pub init: GdpInit,
    /// Sweeps used by the warm-start initialization.
    #[serde(default = "default_warmstart")]
    pub warmstart_sweeps: usize,
}

fn default_eta() -> f64 {
    2.0
}
fn default_batch() -> usize {
    256
}
fn default_iterations() -> usize {
    500
}
fn default_u_clip() -> f64 {
    1.0
}
fn default_warmstart() -> usize {
    20
}

impl Default for GdpConfig {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            batch_size: default_batch(),
            iterations: default_iterations(),
            input: InputDist::default(),
            u_clip: default_u_clip(),
            fixed_pool: false,
            init: GdpInit::SingleShot,
            warmstart_sweeps: default_warmstart(),
        }
    }
}

impl GdpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", "learning rate must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be >= 1"));
        }
        if self.iterations == 0 {
            return Err(invalid("iterations", "must be >= 1"));
        }
        if self.u_clip.is_nan() || self.u_clip <= 0.0 {
            return Err(invalid("u_clip", "must be > 0"));
        }
        self.input.validate()
    }
}

/// Gradient of `||W^T X - Y||_F^2 / (2B)` with respect to `W`, given the error `E = W^T X - Y`.
pub fn mvm_gradient(x: ArrayView2<f64>, err: ArrayView2<f64>) -> Array2<f64> {
    let batch = x.ncols() as f64;
    x.dot(&err.t()) / batch
}

/// Run GDP iterations on any [`AnalogMvm`]. Initialization is not applied here.
pub fn run_gdp<D: AnalogMvm>(
    dev: &mut D,
    target: ArrayView2<f64>,
    cfg: &GdpConfig,
    plan: &DeviceSelectionPlan,
    observer: &mut Observer<'_, D>,
) -> Result<ProgrammingLog> {
    cfg.validate()?;
    let (rows, cols) = (dev.rows(), dev.cols());
    if target.dim() != (rows, cols) {
        return Err(Error::Shape {
            expected: format!("{rows}x{cols}"),
            got: format!("{}x{}", target.nrows(), target.ncols()),
        });
    }
    let mut rng = rng::stream(dev.seed(), &[domain::GDP_INPUT]);
    let pool = if cfg.fixed_pool { Some(dev.encode(cfg.input.sample(rows, cfg.batch_size, &mut rng).view())?) } else { None };
    let mut log = ProgrammingLog::default();
    for t in 1..=cfg.iterations {
        let x = match &pool {
            Some(p) => p.clone(),
            None => dev.encode(cfg.input.sample(rows, cfg.batch_size, &mut rng).view())?,
        };
        let y_chip = dev.mvm(x.view())?;
        let y = target.t().dot(&x);
        let err = y_chip - y;
        let loss = err.iter().map(|e| e * e).sum::<f64>() / (2.0 * cfg.batch_size as f64);
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: t });
        }
        let grad = mvm_gradient(x.view(), err.view());
        let u = grad.mapv(|g| (-cfg.eta * g).clamp(-cfg.u_clip, cfg.u_clip));
        dev.apply_pulses(u.view(), plan)?;
        let eps = observer(t, dev)?;
        log.push(LogRecord { iteration: t, loss, epsilon_total: eps, clock_s: dev.clock(), converged_cells: None });
    }
    Ok(log)
}

/// GDP on a crossbar: plan actions, optional initialization, then [`run_gdp`].
pub fn program_gdp(
    core: &mut CrossbarCore,
    target: ArrayView2<f64>,
    cfg: &GdpConfig,
    plan: &DeviceSelectionPlan,
    observer: &mut Observer<'_, CrossbarCore>,
) -> Result<ProgrammingLog> {
    cfg.validate()?;
    match cfg.init {
        GdpInit::None => core.apply_fixed_actions(plan)?,
        GdpInit::SingleShot => init_single_shot(core, plan)?,
        GdpInit::Warmstart => {
            init_iterative_warmstart(core, target, plan, cfg.warmstart_sweeps)?;
        }
    }
    run_gdp(core, target, cfg, plan, observer)
}
