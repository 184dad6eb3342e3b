//! Crossbar of four-device unit cells with an input encoder and per-column ADCs.
//!
//! The core keeps two derived matrices in sync with the device states at the
//! current clock: the differential conductance `w_eff` (µS) and the sum of squared
//! participating conductances `g_sq`, which sets the variance of read noise.
//! Multiplicative per-device read noise is drawn in aggregate: for one output,
//! `sum_i x_i g_i (1 + s z_i)` has exactly the distribution of the noiseless sum plus
//! a Gaussian with variance `s^2 sum_i x_i^2 g_i^2`. The per-device clip at zero
//! is dropped, which matters only for read noise above roughly 20 %.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::device::{DeviceParams, DeviceState};
use crate::error::{invalid, Error, Result};
use crate::programming::plan::{DeviceSelectionPlan, FixedAction, Polarity, Slot};
use crate::rng::{self, domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcParams {
    pub n_bits: u32,
    /// Full-scale accumulated signal (µS x input units).
    pub i_max: f64,
    /// Cubic compression coefficient.
    pub beta_nl: f64,
    /// Additive input-referred ADC noise, in LSB.
    #[serde(default)]
    pub sigma_lsb: f64,
}

/// Column full scale per square root of the row count (µS x input units).
pub const FULL_SCALE_PER_SQRT_ROW: f64 = 45.0;
pub const DEFAULT_ADC_BITS: u32 = 10;
pub const DEFAULT_BETA_NL: f64 = 0.02;
pub const DEFAULT_SIGMA_LSB: f64 = 0.25;
pub const DEFAULT_INPUT_BITS: u32 = 8;
/// Simulated seconds per full-array pulse update.
pub const DEFAULT_T_PROG_STEP: f64 = 0.01;

impl AdcParams {
    /// Default converter for a column of `rows` cells. The full scale is a hardware
    /// property, so it does not depend on the device type.
    pub fn for_rows(rows: usize) -> Self {
        Self {
            n_bits: DEFAULT_ADC_BITS,
            i_max: FULL_SCALE_PER_SQRT_ROW * (rows as f64).sqrt(),
            beta_nl: DEFAULT_BETA_NL,
            sigma_lsb: DEFAULT_SIGMA_LSB,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=16).contains(&self.n_bits) {
            return Err(invalid("n_bits", "ADC resolution must be within [4, 16]"));
        }
        if !(self.i_max > 0.0 && self.i_max.is_finite()) {
            return Err(invalid("i_max", "must be finite and > 0"));
        }
        if !(0.0..0.5).contains(&self.beta_nl) {
            return Err(invalid("beta_nl", "must be within [0, 0.5)"));
        }
        if !(self.sigma_lsb >= 0.0 && self.sigma_lsb.is_finite()) {
            return Err(invalid("sigma_lsb", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn lsb(&self) -> f64 {
        2.0 * self.i_max / (1u64 << self.n_bits) as f64
    }

    pub fn max_code(&self) -> f64 {
        ((1u64 << (self.n_bits - 1)) - 1) as f64
    }

    /// Static transfer of the column path without noise: compression, clip and quantization.
    /// Returns the output code.
    pub fn convert(&self, s: f64) -> f64 {
        let r = s / self.i_max;
        let compressed = s * (1.0 - self.beta_nl * r * r);
        let clipped = compressed.clamp(-self.i_max, self.i_max);
        let max = self.max_code();
        (clipped / self.lsb()).round().clamp(-max, max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputEncoding {
    /// Pulse-duration resolution; a sign bit comes on top.
    pub n_in_bits: u32,
}

impl Default for InputEncoding {
    fn default() -> Self {
        Self { n_in_bits: DEFAULT_INPUT_BITS }
    }
}

impl InputEncoding {
    pub fn validate(&self) -> Result<()> {
        if !(1..=12).contains(&self.n_in_bits) {
            return Err(invalid("n_in_bits", "input resolution must be within [1, 12]"));
        }
        Ok(())
    }

    fn levels(&self) -> f64 {
        ((1u64 << self.n_in_bits) - 1) as f64
    }

    /// Clamp to [-1, 1] and quantize to the nearest representable duration.
    pub fn encode(&self, x: f64) -> f64 {
        let l = self.levels();
        (x.clamp(-1.0, 1.0) * l).round() / l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CellMode {
    /// One device per polarity (slot A); slot B is held at zero.
    #[default]
    Single,
    /// Two devices per polarity.
    Two,
}

impl CellMode {
    pub fn tag(self) -> &'static str {
        match self {
            CellMode::Single => "SD",
            CellMode::Two => "TD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitCell {
    pub plus_a: DeviceState,
    pub plus_b: DeviceState,
    pub minus_a: DeviceState,
    pub minus_b: DeviceState,
}

impl UnitCell {
    pub fn device(&self, p: Polarity, s: Slot) -> &DeviceState {
        match (p, s) {
            (Polarity::Pos, Slot::A) => &self.plus_a,
            (Polarity::Pos, Slot::B) => &self.plus_b,
            (Polarity::Neg, Slot::A) => &self.minus_a,
            (Polarity::Neg, Slot::B) => &self.minus_b,
        }
    }

    pub fn device_mut(&mut self, p: Polarity, s: Slot) -> &mut DeviceState {
        match (p, s) {
            (Polarity::Pos, Slot::A) => &mut self.plus_a,
            (Polarity::Pos, Slot::B) => &mut self.plus_b,
            (Polarity::Neg, Slot::A) => &mut self.minus_a,
            (Polarity::Neg, Slot::B) => &mut self.minus_b,
        }
    }

    /// (positive, negative, sum of squares) conductance at time `t` for the participating devices.
    fn conductances(&self, mode: CellMode, t: f64, t0: f64) -> (f64, f64, f64) {
        let pa = self.plus_a.drifted(t, t0);
        let ma = self.minus_a.drifted(t, t0);
        match mode {
            CellMode::Single => (pa, ma, pa * pa + ma * ma),
            CellMode::Two => {
                let pb = self.plus_b.drifted(t, t0);
                let mb = self.minus_b.drifted(t, t0);
                (pa + pb, ma + mb, pa * pa + pb * pb + ma * ma + mb * mb)
            }
        }
    }
}

/// Everything needed to build a core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreConfig {
    pub rows: usize,
    pub cols: usize,
    pub device: DeviceParams,
    pub adc: AdcParams,
    pub encoding: InputEncoding,
    pub mode: CellMode,
    pub seed: u64,
    /// Clock cost of one full-array pulse application (s).
    pub t_prog_step: f64,
    pub bipolar_correction: bool,
    /// µS per unit weight; `None` means `set_cap_mean` (single) or twice that (two-device).
    pub weight_scale: Option<f64>,
}

impl CoreConfig {
    /// Default core for a device type: [`AdcParams::for_rows`], default encoding,
    /// [`DEFAULT_T_PROG_STEP`] per programming step, bipolar correction on.
    pub fn preset(rows: usize, cols: usize, device: DeviceParams, mode: CellMode, seed: u64) -> Self {
        Self {
            rows,
            cols,
            device,
            adc: AdcParams::for_rows(rows),
            encoding: InputEncoding::default(),
            mode,
            seed,
            t_prog_step: DEFAULT_T_PROG_STEP,
            bipolar_correction: true,
            weight_scale: None,
        }
    }

    pub fn resolved_weight_scale(&self) -> f64 {
        self.weight_scale.unwrap_or(match self.mode {
            CellMode::Single => self.device.set_cap_mean,
            CellMode::Two => 2.0 * self.device.set_cap_mean,
        })
    }
}

/// Inputs and decoded outputs of one batched MVM.
#[derive(Debug, Clone, PartialEq)]
pub struct MvmTrace {
    /// Encoded inputs, r x B.
    pub inputs: Array2<f64>,
    /// Decoded outputs in weight units, c x B.
    pub outputs: Array2<f64>,
    pub timestamp: f64,
}

#[derive(Debug, Clone)]
pub struct CrossbarCore {
    rows: usize,
    cols: usize,
    cells: Vec<UnitCell>,
    device: DeviceParams,
    adc: AdcParams,
    encoding: InputEncoding,
    mode: CellMode,
    clock: f64,
    seed: u64,
    weight_scale: f64,
    t_prog_step: f64,
    bipolar_correction: bool,
    mvm_counter: u64,
    pulse_counter: u64,
    w_eff: Array2<f64>,
    g_sq: Array2<f64>,
}

impl PartialEq for CrossbarCore {
    fn eq(&self, o: &Self) -> bool {
        self.rows == o.rows
            && self.cols == o.cols
            && self.cells == o.cells
            && self.device == o.device
            && self.adc == o.adc
            && self.encoding == o.encoding
            && self.mode == o.mode
            && self.clock == o.clock
            && self.seed == o.seed
            && self.weight_scale == o.weight_scale
            && self.t_prog_step == o.t_prog_step
            && self.bipolar_correction == o.bipolar_correction
            && self.mvm_counter == o.mvm_counter
            && self.pulse_counter == o.pulse_counter
    }
}

impl CrossbarCore {
    pub fn build(cfg: &CoreConfig) -> Result<Self> {
        if cfg.rows == 0 || cfg.cols == 0 {
            return Err(invalid("rows/cols", "crossbar needs at least one row and one column"));
        }
        cfg.device.validate()?;
        cfg.adc.validate()?;
        cfg.encoding.validate()?;
        let weight_scale = cfg.resolved_weight_scale();
        if !(weight_scale > 0.0 && weight_scale.is_finite()) {
            return Err(invalid("weight_scale", "must be finite and > 0"));
        }
        if !(cfg.t_prog_step >= 0.0 && cfg.t_prog_step.is_finite()) {
            return Err(invalid("t_prog_step", "must be finite and >= 0"));
        }
        let mut cells = Vec::with_capacity(cfg.rows * cfg.cols);
        for i in 0..cfg.rows {
            for j in 0..cfg.cols {
                let sample = |slot: u64| {
                    let mut s = rng::stream(cfg.seed, &[domain::DEVICE, i as u64, j as u64, slot]);
                    DeviceState::sample(&cfg.device, &mut s)
                };
                let (plus_b, minus_b) = match cfg.mode {
                    CellMode::Single => (DeviceState::EMPTY, DeviceState::EMPTY),
                    CellMode::Two => (sample(1), sample(3)),
                };
                cells.push(UnitCell { plus_a: sample(0), plus_b, minus_a: sample(2), minus_b });
            }
        }
        let core = Self::from_parts(
            cfg.rows,
            cfg.cols,
            cells,
            cfg.device.clone(),
            cfg.adc.clone(),
            cfg.encoding.clone(),
            cfg.mode,
            0.0,
            cfg.seed,
            weight_scale,
            cfg.t_prog_step,
            cfg.bipolar_correction,
            (0, 0),
        );
        Ok(core)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        rows: usize,
        cols: usize,
        cells: Vec<UnitCell>,
        device: DeviceParams,
        adc: AdcParams,
        encoding: InputEncoding,
        mode: CellMode,
        clock: f64,
        seed: u64,
        weight_scale: f64,
        t_prog_step: f64,
        bipolar_correction: bool,
        counters: (u64, u64),
    ) -> Self {
        let mut core = CrossbarCore {
            rows,
            cols,
            cells,
            device,
            adc,
            encoding,
            mode,
            clock,
            seed,
            weight_scale,
            t_prog_step,
            bipolar_correction,
            mvm_counter: counters.0,
            pulse_counter: counters.1,
            w_eff: Array2::zeros((rows, cols)),
            g_sq: Array2::zeros((rows, cols)),
        };
        core.refresh();
        core
    }

    fn refresh(&mut self) {
        let (t, t0, mode) = (self.clock, self.device.t0, self.mode);
        for (k, cell) in self.cells.iter().enumerate() {
            let (p, n, sq) = cell.conductances(mode, t, t0);
            let idx = (k / self.cols, k % self.cols);
            self.w_eff[idx] = p - n;
            self.g_sq[idx] = sq;
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn mode(&self) -> CellMode {
        self.mode
    }
    pub fn clock(&self) -> f64 {
        self.clock
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn weight_scale(&self) -> f64 {
        self.weight_scale
    }
    pub fn device_params(&self) -> &DeviceParams {
        &self.device
    }
    pub fn adc(&self) -> &AdcParams {
        &self.adc
    }
    pub fn encoding(&self) -> &InputEncoding {
        &self.encoding
    }
    pub fn t_prog_step(&self) -> f64 {
        self.t_prog_step
    }
    pub fn bipolar_correction(&self) -> bool {
        self.bipolar_correction
    }
    pub(crate) fn counters(&self) -> (u64, u64) {
        (self.mvm_counter, self.pulse_counter)
    }
    pub fn cells(&self) -> &[UnitCell] {
        &self.cells
    }
    pub fn cell(&self, i: usize, j: usize) -> &UnitCell {
        &self.cells[i * self.cols + j]
    }
    pub fn device_count(&self) -> usize {
        4 * self.cells.len()
    }

    /// Decoded ADC LSB in weight units.
    pub fn output_lsb(&self) -> f64 {
        self.adc.lsb() / self.weight_scale
    }

    /// Largest decodable output magnitude in weight units.
    pub fn output_full_scale(&self) -> f64 {
        self.adc.max_code() * self.output_lsb()
    }

    /// Differential conductance (µS) of every cell at the current clock.
    pub fn effective_conductance(&self) -> ArrayView2<'_, f64> {
        self.w_eff.view()
    }

    /// Noiseless weights (weight units) at time `t >= clock`.
    pub fn true_weights(&self, t: f64) -> Result<Array2<f64>> {
        if t < self.clock {
            return Err(Error::TimeOrder { t, t_prog: self.clock });
        }
        if t == self.clock {
            return Ok(&self.w_eff / self.weight_scale);
        }
        let mut w = Array2::zeros((self.rows, self.cols));
        for (k, cell) in self.cells.iter().enumerate() {
            let (p, n, _) = cell.conductances(self.mode, t, self.device.t0);
            w[(k / self.cols, k % self.cols)] = (p - n) / self.weight_scale;
        }
        Ok(w)
    }

    pub fn advance_clock(&mut self, dt: f64) -> Result<()> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(invalid("dt", "clock advances must be finite and >= 0"));
        }
        if dt > 0.0 {
            self.clock += dt;
            self.refresh();
        }
        Ok(())
    }

    /// Encode a raw input batch (r x B). Values are clamped to [-1, 1].
    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.rows {
            return Err(Error::Shape { expected: format!("{} rows", self.rows), got: format!("{} rows", x.nrows()) });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MVM input"));
        }
        Ok(x.mapv(|v| self.encoding.encode(v)))
    }

    /// Batched MVM through the full analog path, drawing noise from the stream keyed by
    /// `(domain, key)`. Does not touch core state, so the same key reproduces the output.
    pub fn mvm_keyed(&self, x: ArrayView2<f64>, stream_domain: u64, key: u64) -> Result<MvmTrace> {
        let xq = self.encode(x)?;
        let batch = xq.ncols();
        let mut s = self.w_eff.t().dot(&xq);
        let sigma_read = self.device.sigma_read_rel;
        let var = if sigma_read > 0.0 { Some(self.g_sq.t().dot(&xq.mapv(|v| v * v))) } else { None };
        let adc = &self.adc;
        let lsb = adc.lsb();
        let adc_noise = adc.sigma_lsb * lsb;
        let decode = lsb / self.weight_scale;
        let clock_bits = self.clock.to_bits();
        for (j, mut row) in s.axis_iter_mut(Axis(0)).enumerate() {
            let mut rng = rng::stream(self.seed, &[stream_domain, key, clock_bits, j as u64]);
            for b in 0..batch {
                let mut signal = row[b];
                if let Some(v) = &var {
                    let z: f64 = rng.sample(StandardNormal);
                    signal += sigma_read * v[(j, b)].sqrt() * z;
                }
                let r = signal / adc.i_max;
                let mut analog = signal * (1.0 - adc.beta_nl * r * r);
                if adc_noise > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    analog += adc_noise * z;
                }
                let clipped = analog.clamp(-adc.i_max, adc.i_max);
                let max = adc.max_code();
                let code = (clipped / lsb).round().clamp(-max, max);
                row[b] = code * decode;
            }
        }
        Ok(MvmTrace { inputs: xq, outputs: s, timestamp: self.clock })
    }

    /// On-chip batched MVM used by programming engines. Each call draws fresh noise.
    pub fn mvm_batch(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let key = self.mvm_counter;
        self.mvm_counter += 1;
        Ok(self.mvm_keyed(x, domain::MVM, key)?.outputs)
    }

    /// One-hot MVM on row `i`; returns the ADC estimate of every cell in that row.
    pub fn read_row_adc(&mut self, i: usize) -> Result<Vec<f64>> {
        if i >= self.rows {
            return Err(Error::Index { row: i, col: 0, rows: self.rows, cols: self.cols });
        }
        let mut x = Array2::zeros((self.rows, 1));
        x[(i, 0)] = 1.0;
        Ok(self.mvm_batch(x.view())?.column(0).to_vec())
    }

    /// ADC-path read of one unit cell: column `j` of a one-hot MVM on row `i`.
    pub fn read_unit_cell_adc(&mut self, i: usize, j: usize) -> Result<f64> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::Index { row: i, col: j, rows: self.rows, cols: self.cols });
        }
        Ok(self.read_row_adc(i)?[j])
    }

    fn check_plan(&self, plan: &DeviceSelectionPlan) -> Result<()> {
        if plan.rows != self.rows || plan.cols != self.cols {
            return Err(Error::Shape {
                expected: format!("{}x{} plan", self.rows, self.cols),
                got: format!("{}x{} plan", plan.rows, plan.cols),
            });
        }
        Ok(())
    }

    fn check_matrix(&self, u: ArrayView2<f64>, what: &'static str) -> Result<()> {
        if u.dim() != (self.rows, self.cols) {
            return Err(Error::Shape {
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", u.nrows(), u.ncols()),
            });
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(what));
        }
        Ok(())
    }

    /// Route a signed amplitude per cell to the plan's designated devices and advance the clock.
    ///
    /// A positive amplitude SETs the positive-polarity device, a negative one SETs the
    /// negative-polarity device. With bipolar correction the opposite device, if it
    /// holds conductance, gets a RESET pulse of the same magnitude. Every designated
    /// device is pulsed (zero amplitude re-anchors drift); cells without a programmable
    /// slot are skipped.
    pub fn apply_pulse_matrix(&mut self, u: ArrayView2<f64>, plan: &DeviceSelectionPlan) -> Result<()> {
        self.check_matrix(u, "pulse matrix")?;
        self.check_plan(plan)?;
        let now = self.clock;
        let counter = self.pulse_counter;
        for i in 0..self.rows {
            let mut rng = rng::stream(self.seed, &[domain::PULSE, counter, i as u64]);
            for j in 0..self.cols {
                let amp = u[(i, j)];
                let cp = plan.cell(i, j);
                let (primary, opposite) =
                    if amp >= 0.0 { (Polarity::Pos, Polarity::Neg) } else { (Polarity::Neg, Polarity::Pos) };
                let cell = &mut self.cells[i * self.cols + j];
                if let Some(slot) = cp.polarity(primary).programmable {
                    let d = cell.device_mut(primary, slot);
                    *d = d.apply_pulse(amp.abs(), now, &self.device, &mut rng)?;
                }
                if let Some(slot) = cp.polarity(opposite).programmable {
                    let d = cell.device_mut(opposite, slot);
                    let nudge = if self.bipolar_correction && d.drifted(now, self.device.t0) > 0.0 {
                        -amp.abs()
                    } else {
                        0.0
                    };
                    *d = d.apply_pulse(nudge, now, &self.device, &mut rng)?;
                }
            }
        }
        self.pulse_counter += 1;
        self.clock += self.t_prog_step;
        self.refresh();
        Ok(())
    }

    /// Pulse the programmable device of each polarity directly with the given amplitudes.
    pub fn apply_device_pulses(
        &mut self,
        pos: ArrayView2<f64>,
        neg: ArrayView2<f64>,
        plan: &DeviceSelectionPlan,
    ) -> Result<()> {
        self.check_matrix(pos, "pulse matrix")?;
        self.check_matrix(neg, "pulse matrix")?;
        self.check_plan(plan)?;
        let now = self.clock;
        let counter = self.pulse_counter;
        for i in 0..self.rows {
            let mut rng = rng::stream(self.seed, &[domain::PULSE, counter, i as u64]);
            for j in 0..self.cols {
                let cp = *plan.cell(i, j);
                let cell = &mut self.cells[i * self.cols + j];
                for (pol, amp) in [(Polarity::Pos, pos[(i, j)]), (Polarity::Neg, neg[(i, j)])] {
                    if let Some(slot) = cp.polarity(pol).programmable {
                        let d = cell.device_mut(pol, slot);
                        *d = d.apply_pulse(amp, now, &self.device, &mut rng)?;
                    }
                }
            }
        }
        self.pulse_counter += 1;
        self.clock += self.t_prog_step;
        self.refresh();
        Ok(())
    }

    /// Apply the plan's one-off SET/RESET actions. Costs one programming step if anything changed.
    pub fn apply_fixed_actions(&mut self, plan: &DeviceSelectionPlan) -> Result<()> {
        self.check_plan(plan)?;
        let now = self.clock;
        let mut touched = false;
        for (k, cp) in plan.cells.iter().enumerate() {
            let cell = &mut self.cells[k];
            for pol in [Polarity::Pos, Polarity::Neg] {
                for (idx, slot) in [(0, Slot::A), (1, Slot::B)] {
                    if self.mode == CellMode::Single && slot == Slot::B {
                        continue;
                    }
                    let d = cell.device_mut(pol, slot);
                    match cp.polarity(pol).fixed[idx] {
                        FixedAction::None => {}
                        FixedAction::Reset => {
                            *d = d.full_reset(now);
                            touched = true;
                        }
                        FixedAction::Set => {
                            *d = d.full_set(now);
                            touched = true;
                        }
                    }
                }
            }
        }
        if touched {
            self.clock += self.t_prog_step;
            self.refresh();
        }
        Ok(())
    }
}
