//! MVM characterization: least-squares estimate of the weights a core actually
//! realizes, and three relative error metrics (all in percent):
//!
//! - `eps_total`: on-chip output vs. the exact product with the target weights,
//! - `eps_nonlinear`: on-chip output vs. the best linear explanation of it,
//! - `eps_weight`: estimated weights vs. target weights.
//!
//! Output errors are normalized by `||G^T X||_F`, weight errors by `||G||_F`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarCore, MvmTrace};
use crate::error::{invalid, Error, Result};
use crate::lstsq;
use crate::programming::InputDist;
use crate::rng::{self, domain};

/// With N inputs a least-squares fit absorbs a fraction rows/N of any residual, so the
/// nonlinear error reads low by sqrt(1 - rows/N). At 16 per row that bias is about 3%.
pub const DEFAULT_INPUTS_PER_ROW: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterizationConfig {
    /// Number of random input vectors; `None` means [`DEFAULT_INPUTS_PER_ROW`] per row.
    #[serde(default)]
    pub n_inputs: Option<usize>,
    #[serde(default)]
    pub input: InputDist,
    #[serde(default)]
    pub ridge: f64,
    /// Seed for the characterization inputs and read noise, independent of programming.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    0xC0FFEE
}

impl Default for CharacterizationConfig {
    fn default() -> Self {
        Self { n_inputs: None, input: InputDist::default(), ridge: 0.0, seed: default_seed() }
    }
}

impl CharacterizationConfig {
    pub fn resolved_inputs(&self, rows: usize) -> usize {
        self.n_inputs.unwrap_or(DEFAULT_INPUTS_PER_ROW * rows)
    }

    pub fn validate(&self, rows: usize) -> Result<()> {
        if self.resolved_inputs(rows) < rows {
            return Err(invalid("n_inputs", format!("need at least {rows} inputs for {rows} rows")));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(invalid("ridge", "must be finite and >= 0"));
        }
        self.input.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationReport {
    #[serde(skip)]
    pub g_hat: Array2<f64>,
    pub eps_weight: f64,
    pub eps_total: f64,
    pub eps_nonlinear: f64,
    pub n_inputs: usize,
    pub timestamp: f64,
}

impl CharacterizationReport {
    pub fn csv_header() -> [&'static str; 5] {
        ["timestamp_s", "n_inputs", "eps_total", "eps_nonlinear", "eps_weight"]
    }

    pub fn csv_row(&self) -> [String; 5] {
        [
            format!("{}", self.timestamp),
            self.n_inputs.to_string(),
            format!("{:.6}", self.eps_total),
            format!("{:.6}", self.eps_nonlinear),
            format!("{:.6}", self.eps_weight),
        ]
    }
}

fn frob(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Least-squares weights (r x c) that best explain the trace's outputs from its inputs.
pub fn estimate_weights(trace: &MvmTrace, ridge: f64) -> Result<Array2<f64>> {
    let (rows, n) = trace.inputs.dim();
    if trace.outputs.ncols() != n {
        return Err(Error::Shape {
            expected: format!("{n} output columns"),
            got: format!("{}", trace.outputs.ncols()),
        });
    }
    if n < rows && ridge == 0.0 {
        return Err(Error::RankDeficient { rank: n, rows });
    }
    lstsq::solve(trace.inputs.t(), trace.outputs.t(), ridge)
}

/// The three metrics for a trace, the target and an estimate. Returns (total, nonlinear, weight).
pub fn error_metrics(trace: &MvmTrace, target: ArrayView2<f64>, g_hat: ArrayView2<f64>) -> Result<(f64, f64, f64)> {
    let x = trace.inputs.view();
    let y = target.t().dot(&x);
    let y_norm = frob(y.view());
    let g_norm = frob(target);
    if y_norm == 0.0 || g_norm == 0.0 {
        return Err(Error::DegenerateTarget);
    }
    let y_fit = g_hat.t().dot(&x);
    let total = 100.0 * frob((&trace.outputs - &y).view()) / y_norm;
    let nonlinear = 100.0 * frob((&trace.outputs - &y_fit).view()) / y_norm;
    let weight = 100.0 * frob((&g_hat - &target).view()) / g_norm;
    Ok((total, nonlinear, weight))
}

/// Draw characterization inputs and run them through the core without mutating it.
pub fn characterization_trace(core: &CrossbarCore, cfg: &CharacterizationConfig) -> Result<MvmTrace> {
    cfg.validate(core.rows())?;
    let n = cfg.resolved_inputs(core.rows());
    let mut rng = rng::stream(cfg.seed, &[domain::CHAR_INPUT, core.rows() as u64, n as u64]);
    let x = cfg.input.sample(core.rows(), n, &mut rng);
    core.mvm_keyed(x.view(), domain::CHAR_MVM, cfg.seed)
}

pub fn characterize(core: &CrossbarCore, target: ArrayView2<f64>, cfg: &CharacterizationConfig) -> Result<CharacterizationReport> {
    if target.dim() != (core.rows(), core.cols()) {
        return Err(Error::Shape {
            expected: format!("{}x{}", core.rows(), core.cols()),
            got: format!("{}x{}", target.nrows(), target.ncols()),
        });
    }
    let trace = characterization_trace(core, cfg)?;
    let g_hat = estimate_weights(&trace, cfg.ridge)?;
    let (eps_total, eps_nonlinear, eps_weight) = error_metrics(&trace, target, g_hat.view())?;
    Ok(CharacterizationReport { g_hat, eps_weight, eps_total, eps_nonlinear, n_inputs: trace.inputs.ncols(), timestamp: trace.timestamp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::{AdcParams, CellMode, CoreConfig, InputEncoding};
    use crate::device::DeviceParams;
    use crate::programming::{init_single_shot, DeviceSelectionPlan};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(seed: u64, r: usize, c: usize, range: f64) -> Array2<f64> {
        let mut rng = rng::stream(seed, &[]);
        Array2::from_shape_simple_fn((r, c), || rng.random_range(-range..range))
    }

    fn linear_trace(g: &Array2<f64>, n: usize, seed: u64) -> MvmTrace {
        let x = random(seed, g.nrows(), n, 1.0);
        MvmTrace { outputs: g.t().dot(&x), inputs: x, timestamp: 0.0 }
    }

    #[test]
    fn exact_trace_recovers_generator() {
        let g0 = random(1, 16, 10, 1.0);
        let trace = linear_trace(&g0, 64, 2);
        let g = estimate_weights(&trace, 0.0).unwrap();
        let rel = frob((&g - &g0).view()) / frob(g0.view());
        assert!(rel < 1e-9, "{rel}");
    }

    #[test]
    fn too_few_inputs_is_an_error() {
        let g0 = random(1, 16, 4, 1.0);
        let trace = linear_trace(&g0, 8, 2);
        assert!(matches!(estimate_weights(&trace, 0.0), Err(Error::RankDeficient { .. })));
        assert!(estimate_weights(&trace, 0.1).is_ok());
    }

    #[test]
    fn estimation_error_follows_inverse_sqrt_law() {
        // For Gaussian output noise the LS error variance scales as 1 / (N - r - 1).
        let (r, c, sigma) = (16, 16, 0.05);
        let g0 = random(3, r, c, 1.0);
        let sizes = [32usize, 128, 512];
        let mut errs = vec![];
        for &n in &sizes {
            let mut total = 0.0;
            let reps = 40;
            for rep in 0..reps {
                let mut t = linear_trace(&g0, n, 1000 + rep + 100 * n as u64);
                let mut rng = rng::stream(77, &[rep, n as u64]);
                t.outputs.mapv_inplace(|v| v + sigma * rng.sample::<f64, _>(StandardNormal));
                let g = estimate_weights(&t, 0.0).unwrap();
                total += (&g - &g0).mapv(|v| v * v).mean().unwrap();
            }
            errs.push((total / reps as f64).sqrt());
        }
        for k in 1..sizes.len() {
            let expected = ((sizes[k] - r - 1) as f64 / (sizes[k - 1] - r - 1) as f64).sqrt();
            let ratio = errs[k - 1] / errs[k];
            assert!((ratio / expected - 1.0).abs() < 0.15, "ratio {ratio} vs {expected} in {errs:?}");
        }
    }

    #[test]
    fn perfect_core_has_zero_errors() {
        let g0 = random(4, 12, 6, 1.0);
        let trace = linear_trace(&g0, 48, 5);
        let g = estimate_weights(&trace, 0.0).unwrap();
        let (t, n, w) = error_metrics(&trace, g0.view(), g.view()).unwrap();
        assert!(t == 0.0 && n < 1e-9 && w < 1e-9);
    }

    #[test]
    fn misprogrammed_linear_core_has_no_nonlinear_error() {
        let g0 = random(4, 12, 6, 1.0);
        let actual = &g0 + &random(9, 12, 6, 0.1);
        let trace = linear_trace(&actual, 48, 5);
        let g = estimate_weights(&trace, 0.0).unwrap();
        let (t, n, w) = error_metrics(&trace, g0.view(), g.view()).unwrap();
        assert!(n < 1e-3 && t > 1.0 && w > 1.0, "{t} {n} {w}");
    }

    #[test]
    fn zero_target_is_degenerate() {
        let trace = linear_trace(&Array2::zeros((4, 4)), 16, 1);
        let z = Array2::zeros((4, 4));
        assert!(matches!(error_metrics(&trace, z.view(), z.view()), Err(Error::DegenerateTarget)));
    }

    fn linear_core(seed: u64) -> (CrossbarCore, Array2<f64>) {
        let cfg = CoreConfig {
            rows: 16,
            cols: 16,
            device: DeviceParams { sigma_prog: 0.3, ..DeviceParams::ideal() },
            adc: AdcParams { n_bits: 14, i_max: 150.0, beta_nl: 0.0, sigma_lsb: 0.0 },
            encoding: InputEncoding { n_in_bits: 12 },
            mode: CellMode::Single,
            seed,
            t_prog_step: 1.0,
            bipolar_correction: true,
            weight_scale: None,
        };
        let mut core = CrossbarCore::build(&cfg).unwrap();
        let target = random(seed, 16, 16, 0.8);
        let plan = DeviceSelectionPlan::for_core(&core, target.view()).unwrap();
        init_single_shot(&mut core, &plan).unwrap();
        (core, target)
    }

    #[test]
    fn noiseless_linear_core_estimate_matches_true_weights() {
        let (core, target) = linear_core(12);
        let rep = characterize(&core, target.view(), &CharacterizationConfig::default()).unwrap();
        let w = core.true_weights(core.clock()).unwrap();
        let rel = frob((&rep.g_hat - &w).view()) / frob(w.view());
        assert!(rel < 1e-3, "{rel}");
        assert!(rep.eps_nonlinear < 0.1 && rep.eps_total > 1.0);
    }

    #[test]
    fn characterization_is_reproducible_and_read_only() {
        let (core, target) = linear_core(3);
        let before = core.clone();
        let cfg = CharacterizationConfig::default();
        let a = characterize(&core, target.view(), &cfg).unwrap();
        let b = characterize(&core, target.view(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(core, before);
    }

    proptest! {
        #[test]
        fn least_squares_beats_target_and_true_weights(seed in 0u64..200) {
            let cfg = CoreConfig {
                rows: 8, cols: 6,
                device: DeviceParams::pcm1(),
                adc: AdcParams { n_bits: 8, i_max: 80.0, beta_nl: 0.2, sigma_lsb: 0.5 },
                encoding: InputEncoding { n_in_bits: 6 },
                mode: CellMode::Single, seed, t_prog_step: 1.0, bipolar_correction: true, weight_scale: None,
            };
            let mut core = CrossbarCore::build(&cfg).unwrap();
            let target = random(seed + 1, 8, 6, 0.8);
            let plan = DeviceSelectionPlan::for_core(&core, target.view()).unwrap();
            init_single_shot(&mut core, &plan).unwrap();
            let trace = characterization_trace(&core, &CharacterizationConfig { seed, ..Default::default() }).unwrap();
            let g_hat = estimate_weights(&trace, 0.0).unwrap();
            let resid = |m: &Array2<f64>| frob((&trace.outputs - &m.t().dot(&trace.inputs)).view());
            let best = resid(&g_hat);
            prop_assert!(best <= resid(&target) + 1e-9);
            prop_assert!(best <= resid(&core.true_weights(core.clock()).unwrap()) + 1e-9);
            let (t, n, _) = error_metrics(&trace, target.view(), g_hat.view()).unwrap();
            prop_assert!(n <= t + 1e-9);
        }

        #[test]
        fn metrics_are_scale_invariant(k in 0.1f64..10.0) {
            let g0 = random(4, 10, 5, 1.0);
            let actual = &g0 + &random(9, 10, 5, 0.2);
            let mut trace = linear_trace(&actual, 40, 5);
            trace.outputs.mapv_inplace(|v| v + 0.01 * v * v);
            let g = estimate_weights(&trace, 0.0).unwrap();
            let base = error_metrics(&trace, g0.view(), g.view()).unwrap();
            let scaled = MvmTrace { outputs: &trace.outputs * k, ..trace.clone() };
            let g_s = estimate_weights(&scaled, 0.0).unwrap();
            let s = error_metrics(&scaled, (&g0 * k).view(), g_s.view()).unwrap();
            prop_assert!((base.0 - s.0).abs() < 1e-8 && (base.1 - s.1).abs() < 1e-8 && (base.2 - s.2).abs() < 1e-8);
        }
    }
}
