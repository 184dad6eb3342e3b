//! Conventional unit-cell programming: read each cell through the ADC path, compare
//! with its target and pulse proportionally to the difference. A cell whose read
//! lands within the margin is frozen for the rest of the run.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::plan::DeviceSelectionPlan;
use super::{LogRecord, Observer, ProgrammingLog};
use crate::crossbar::CrossbarCore;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterativeConfig {
    /// Convergence tolerance in weight units; `None` means one decoded ADC LSB.
    #[serde(default)]
    pub margin: Option<f64>,
    /// Pulse amplitude per µS of conductance error; `None` means `1 / alpha`.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
}

fn default_sweeps() -> usize {
    50
}

impl Default for IterativeConfig {
    fn default() -> Self {
        Self { margin: None, kappa: None, max_sweeps: default_sweeps() }
    }
}

impl IterativeConfig {
    pub fn resolved_margin(&self, core: &CrossbarCore) -> f64 {
        self.margin.unwrap_or_else(|| core.output_lsb())
    }

    pub fn resolved_kappa(&self, core: &CrossbarCore) -> f64 {
        self.kappa.unwrap_or(1.0 / core.device_params().alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if self.margin.is_some_and(|m| m.is_nan() || m < 0.0) {
            return Err(invalid("margin", "must be >= 0"));
        }
        if self.kappa.is_some_and(|k| !(k > 0.0 && k.is_finite())) {
            return Err(invalid("kappa", "must be finite and > 0"));
        }
        if self.max_sweeps == 0 {
            return Err(invalid("max_sweeps", "must be >= 1"));
        }
        Ok(())
    }
}

/// Program `core` toward `target` (weight units) one cell at a time.
///
/// Each sweep reads every unconverged cell, freezes those within the margin and
/// sends one pulse matrix to the rest. The sweep's loss is half the mean squared
/// read error over the cells read in it.
pub fn program_iterative(
    core: &mut CrossbarCore,
    target: ArrayView2<f64>,
    cfg: &IterativeConfig,
    plan: &DeviceSelectionPlan,
    observer: &mut Observer<'_, CrossbarCore>,
) -> Result<ProgrammingLog> {
    cfg.validate()?;
    let (rows, cols) = (core.rows(), core.cols());
    if target.dim() != (rows, cols) {
        return Err(Error::Shape {
            expected: format!("{rows}x{cols}"),
            got: format!("{}x{}", target.nrows(), target.ncols()),
        });
    }
    let margin = cfg.resolved_margin(core);
    let gain = cfg.resolved_kappa(core) * core.weight_scale();
    core.apply_fixed_actions(plan)?;

    let mut active = plan.clone();
    let mut converged: Vec<bool> = plan.cells.iter().map(|c| !c.is_active()).collect();
    let mut log = ProgrammingLog::default();
    let mut u = Array2::zeros((rows, cols));

    for sweep in 1..=cfg.max_sweeps {
        if converged.iter().all(|&c| c) {
            break;
        }
        u.fill(0.0);
        let (mut sq, mut n_read) = (0.0, 0usize);
        for i in 0..rows {
            if (0..cols).all(|j| converged[i * cols + j]) {
                continue;
            }
            let reads = core.read_row_adc(i)?;
            for j in 0..cols {
                let k = i * cols + j;
                if converged[k] {
                    continue;
                }
                let err = target[(i, j)] - reads[j];
                sq += err * err;
                n_read += 1;
                if err.abs() < margin {
                    converged[k] = true;
                    let cell = active.cell_mut(i, j);
                    cell.pos.programmable = None;
                    cell.neg.programmable = None;
                } else {
                    u[(i, j)] = gain * err;
                }
            }
        }
        if converged.iter().any(|&c| !c) {
            core.apply_pulse_matrix(u.view(), &active)?;
        }
        let eps = observer(sweep, core)?;
        log.push(LogRecord {
            iteration: sweep,
            loss: sq / (2.0 * n_read.max(1) as f64),
            epsilon_total: eps,
            clock_s: core.clock(),
            converged_cells: Some(converged.iter().filter(|&&c| c).count()),
        });
    }
    Ok(log)
}
