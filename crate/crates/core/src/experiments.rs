//! Seed-replicated comparative scenarios. Every scenario programs fresh cores with
//! one or more methods, characterizes them at scheduled points and emits flat
//! [`ResultRecord`]s.
//!
//! Work is split into independent jobs (seed x sweep value x method) that run in
//! parallel; results are concatenated in job order, so the output does not depend
//! on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characterization::{characterize, CharacterizationConfig, CharacterizationReport};
use crate::crossbar::{AdcParams, CellMode, CoreConfig, CrossbarCore, InputEncoding};
use crate::device::DeviceParams;
use crate::error::{invalid, Error, Result};
use crate::programming::{program_gdp, program_iterative, DeviceSelectionPlan, GdpConfig, GdpInit, InputDist, IterativeConfig, ProgrammingLog};
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "iterative-SD")]
    IterativeSd,
    #[serde(rename = "iterative-TD")]
    IterativeTd,
    #[serde(rename = "gdp-SD")]
    GdpSd,
    #[serde(rename = "gdp-TD")]
    GdpTd,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::IterativeSd, Method::IterativeTd, Method::GdpSd, Method::GdpTd];

    pub fn tag(self) -> &'static str {
        match self {
            Method::IterativeSd => "iterative-SD",
            Method::IterativeTd => "iterative-TD",
            Method::GdpSd => "gdp-SD",
            Method::GdpTd => "gdp-TD",
        }
    }

    pub fn mode(self) -> CellMode {
        match self {
            Method::IterativeSd | Method::GdpSd => CellMode::Single,
            Method::IterativeTd | Method::GdpTd => CellMode::Two,
        }
    }

    pub fn is_gdp(self) -> bool {
        matches!(self, Method::GdpSd | Method::GdpTd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::Unknown { kind: "method", name: s.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "init_compare")]
    InitCompare,
    #[serde(rename = "sd_td_convergence")]
    SdTdConvergence,
    #[serde(rename = "drift_24h")]
    Drift24h,
    #[serde(rename = "device_types")]
    DeviceTypes,
    #[serde(rename = "input_generalization")]
    InputGeneralization,
    #[serde(rename = "lr_sweep")]
    LrSweep,
    #[serde(rename = "batch_sweep")]
    BatchSweep,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::InitCompare,
        ScenarioKind::SdTdConvergence,
        ScenarioKind::Drift24h,
        ScenarioKind::DeviceTypes,
        ScenarioKind::InputGeneralization,
        ScenarioKind::LrSweep,
        ScenarioKind::BatchSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::InitCompare => "init_compare",
            ScenarioKind::SdTdConvergence => "sd_td_convergence",
            ScenarioKind::Drift24h => "drift_24h",
            ScenarioKind::DeviceTypes => "device_types",
            ScenarioKind::InputGeneralization => "input_generalization",
            ScenarioKind::LrSweep => "lr_sweep",
            ScenarioKind::BatchSweep => "batch_sweep",
        }
    }

    /// Values of the scenario's sweep axis when the spec does not give any.
    pub fn default_sweep(self) -> Vec<String> {
        let v: &[&str] = match self {
            ScenarioKind::InitCompare => &["single-shot", "warmstart"],
            ScenarioKind::SdTdConvergence => &["-"],
            ScenarioKind::Drift24h => &["60", "600", "3600", "21600", "86400"],
            ScenarioKind::DeviceTypes => &["pcm1", "pcm2"],
            ScenarioKind::InputGeneralization => &["0", "0.25", "0.5", "0.75", "0.9", "gaussian"],
            ScenarioKind::LrSweep => &["0.01", "0.1", "1", "2", "5", "10"],
            ScenarioKind::BatchSweep => &["8", "32", "64", "128", "256", "512"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    pub fn default_methods(self) -> Vec<Method> {
        match self {
            ScenarioKind::InitCompare
            | ScenarioKind::InputGeneralization
            | ScenarioKind::LrSweep
            | ScenarioKind::BatchSweep => vec![Method::IterativeSd, Method::GdpSd],
            _ => Method::ALL.to_vec(),
        }
    }

    /// Whether the scenario logs characterization checkpoints during programming.
    pub fn tracks_progress(self) -> bool {
        matches!(self, ScenarioKind::InitCompare | ScenarioKind::SdTdConvergence | ScenarioKind::LrSweep)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown { kind: "scenario", name: s.to_string() })
    }
}

/// A device preset by name or a full parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceChoice {
    Preset(String),
    Custom(DeviceParams),
}

impl Default for DeviceChoice {
    fn default() -> Self {
        DeviceChoice::Preset("pcm1".into())
    }
}

impl DeviceChoice {
    pub fn resolve(&self) -> Result<DeviceParams> {
        let p = match self {
            DeviceChoice::Preset(name) => DeviceParams::preset(name)?,
            DeviceChoice::Custom(p) => p.clone(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn label(&self) -> String {
        match self {
            DeviceChoice::Preset(name) => name.clone(),
            DeviceChoice::Custom(_) => "custom".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// 64 x 64 cores.
    #[default]
    Desk,
    /// 256 x 256 cores.
    Paper,
}

impl Profile {
    pub fn size(self) -> usize {
        match self {
            Profile::Desk => 64,
            Profile::Paper => 256,
        }
    }

    /// GDP learning rate for this array size. Gradient noise from a finite batch grows
    /// with rows/B, so the larger array takes smaller steps.
    pub fn eta(self) -> f64 {
        match self {
            Profile::Desk => 2.0,
            Profile::Paper => 1.0,
        }
    }
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Unknown { kind: "profile", name: s.to_string() }),
        }
    }
}

/// Core construction parameters shared by all cores of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreSpec {
    #[serde(default = "desk_size")]
    pub rows: usize,
    #[serde(default = "desk_size")]
    pub cols: usize,
    #[serde(default)]
    pub device: DeviceChoice,
    /// `None` means [`AdcParams::for_rows`].
    #[serde(default)]
    pub adc: Option<AdcParams>,
    #[serde(default)]
    pub encoding: InputEncoding,
    #[serde(default = "default_step")]
    pub t_prog_step: f64,
    #[serde(default = "yes")]
    pub bipolar_correction: bool,
    #[serde(default)]
    pub weight_scale: Option<f64>,
}

fn desk_size() -> usize {
    Profile::Desk.size()
}
fn default_step() -> f64 {
    crate::crossbar::DEFAULT_T_PROG_STEP
}
fn yes() -> bool {
    true
}

impl Default for CoreSpec {
    fn default() -> Self {
        Self {
            rows: desk_size(),
            cols: desk_size(),
            device: DeviceChoice::default(),
            adc: None,
            encoding: InputEncoding::default(),
            t_prog_step: default_step(),
            bipolar_correction: true,
            weight_scale: None,
        }
    }
}

impl CoreSpec {
    pub fn core_config(&self, device: DeviceParams, mode: CellMode, seed: u64) -> CoreConfig {
        CoreConfig {
            rows: self.rows,
            cols: self.cols,
            device,
            adc: self.adc.clone().unwrap_or_else(|| AdcParams::for_rows(self.rows)),
            encoding: self.encoding.clone(),
            mode,
            seed,
            t_prog_step: self.t_prog_step,
            bipolar_correction: self.bipolar_correction,
            weight_scale: self.weight_scale,
        }
    }
}

/// Everything needed to replay a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub core: CoreSpec,
    #[serde(default)]
    pub iterative: IterativeConfig,
    #[serde(default)]
    pub gdp: GdpConfig,
    #[serde(default)]
    pub characterization: CharacterizationConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Sweep axis values; empty means the scenario default.
    #[serde(default)]
    pub sweep: Vec<String>,
    /// Methods to compare; empty means the scenario default.
    #[serde(default)]
    pub methods: Vec<Method>,
    /// Targets are uniform on [-1, 1] clipped to this magnitude.
    #[serde(default = "default_range")]
    pub target_range: f64,
    /// GDP iterations between characterizations while programming.
    #[serde(default = "default_every")]
    pub checkpoint_every: usize,
}

fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}
fn default_range() -> f64 {
    0.8
}
fn default_every() -> usize {
    25
}

impl ScenarioSpec {
    pub fn new(scenario: ScenarioKind) -> Self {
        Self {
            scenario,
            core: CoreSpec::default(),
            iterative: IterativeConfig::default(),
            gdp: GdpConfig::default(),
            characterization: CharacterizationConfig::default(),
            seeds: default_seeds(),
            sweep: vec![],
            methods: vec![],
            target_range: default_range(),
            checkpoint_every: default_every(),
        }
    }

    pub fn with_profile(mut self, profile: Profile) -> Self {
        self.core.rows = profile.size();
        self.core.cols = profile.size();
        self.gdp.eta = profile.eta();
        self
    }

    pub fn sweep_values(&self) -> Vec<String> {
        if self.sweep.is_empty() {
            self.scenario.default_sweep()
        } else {
            self.sweep.clone()
        }
    }

    pub fn method_list(&self) -> Vec<Method> {
        if self.methods.is_empty() {
            self.scenario.default_methods()
        } else {
            self.methods.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if self.core.rows == 0 || self.core.cols == 0 {
            return Err(invalid("core.rows/cols", "must be >= 1"));
        }
        if !(self.target_range > 0.0 && self.target_range <= 1.0) {
            return Err(invalid("target_range", "must be within (0, 1]"));
        }
        if self.checkpoint_every == 0 {
            return Err(invalid("checkpoint_every", "must be >= 1"));
        }
        if !(self.core.t_prog_step >= 0.0 && self.core.t_prog_step.is_finite()) {
            return Err(invalid("core.t_prog_step", "must be finite and >= 0"));
        }
        if let Some(adc) = &self.core.adc {
            adc.validate()?;
        }
        self.core.encoding.validate()?;
        self.core.device.resolve()?;
        self.iterative.validate()?;
        self.gdp.validate()?;
        self.characterization.validate(self.core.rows)?;
        for v in self.sweep_values() {
            SweepValue::parse(self.scenario, &v)?;
        }
        Ok(())
    }
}

/// A parsed sweep-axis value.
#[derive(Debug, Clone, PartialEq)]
enum SweepValue {
    None,
    Init(GdpInit),
    Time(f64),
    Device(DeviceParams),
    Input(InputDist),
    Eta(f64),
    Batch(usize),
}

impl SweepValue {
    fn parse(kind: ScenarioKind, v: &str) -> Result<Self> {
        let bad = |why: &str| invalid("sweep", format!("{v:?} for {kind}: {why}"));
        let number = || v.parse::<f64>().ok().filter(|x| x.is_finite());
        Ok(match kind {
            ScenarioKind::SdTdConvergence => SweepValue::None,
            ScenarioKind::InitCompare => match v {
                "single-shot" => SweepValue::Init(GdpInit::SingleShot),
                "warmstart" => SweepValue::Init(GdpInit::Warmstart),
                "none" => SweepValue::Init(GdpInit::None),
                _ => return Err(bad("expected single-shot, warmstart or none")),
            },
            ScenarioKind::Drift24h => match number() {
                Some(t) if t >= 0.0 => SweepValue::Time(t),
                _ => return Err(bad("expected a time in seconds")),
            },
            ScenarioKind::DeviceTypes => SweepValue::Device(DeviceParams::preset(v)?),
            ScenarioKind::InputGeneralization => {
                if let Some(std) = v.strip_prefix("gaussian") {
                    let std = match std.trim_start_matches('(').trim_end_matches(')') {
                        "" => 0.5,
                        s => s.parse().map_err(|_| bad("bad gaussian std"))?,
                    };
                    let d = InputDist::gaussian(std);
                    d.validate()?;
                    SweepValue::Input(d)
                } else {
                    let s = number().ok_or_else(|| bad("expected a sparsity or gaussian[(std)]"))?;
                    let d = InputDist::uniform().with_sparsity(s);
                    d.validate()?;
                    SweepValue::Input(d)
                }
            }
            ScenarioKind::LrSweep => match number() {
                Some(e) if e >= 0.0 => SweepValue::Eta(e),
                _ => return Err(bad("expected a learning rate >= 0")),
            },
            ScenarioKind::BatchSweep => match v.parse::<usize>() {
                Ok(b) if b >= 1 => SweepValue::Batch(b),
                _ => return Err(bad("expected a batch size >= 1")),
            },
        })
    }
}

/// One row of scenario output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub scenario: String,
    pub seed: u64,
    pub sweep: String,
    pub method: Method,
    /// Iteration, sweep or seconds after programming, depending on the scenario.
    pub coord: f64,
    pub eps_total: f64,
    pub eps_nonlinear: f64,
    pub eps_weight: f64,
}

pub const CSV_HEADER: [&str; 8] = ["scenario", "seed", "sweep", "method", "coord", "eps_total", "eps_nonlinear", "eps_weight"];

pub fn write_csv<W: Write>(records: &[ResultRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in records {
        out.write_record([
            r.scenario.clone(),
            r.seed.to_string(),
            r.sweep.clone(),
            r.method.tag().to_string(),
            format!("{}", r.coord),
            format!("{:.6}", r.eps_total),
            format!("{:.6}", r.eps_nonlinear),
            format!("{:.6}", r.eps_weight),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Uniform targets on [-1, 1] clipped to `range`, derived from `seed`.
pub fn random_target(rows: usize, cols: usize, range: f64, seed: u64) -> Array2<f64> {
    let mut rng = rng::stream(seed, &[domain::TARGET, rows as u64, cols as u64]);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..=1.0f64).clamp(-range, range))
}

/// A programmed core plus the characterizations taken along the way.
#[derive(Debug, Clone)]
pub struct ProgramRun {
    pub core: CrossbarCore,
    pub log: ProgrammingLog,
    /// (iteration or sweep, report); the last entry always describes the final state.
    pub reports: Vec<(f64, CharacterizationReport)>,
}

impl ProgramRun {
    pub fn final_report(&self) -> &CharacterizationReport {
        &self.reports.last().expect("final report is always present").1
    }

    pub fn final_coord(&self) -> f64 {
        self.reports.last().expect("final report is always present").0
    }
}

/// Build a core for `method` and program it toward `target`.
///
/// With `every = Some(k)`, GDP is characterized every k iterations and the iterative
/// engine after every sweep. The final state is always characterized.
pub fn program_method(
    core_cfg: &CoreConfig,
    target: ArrayView2<f64>,
    method: Method,
    iterative: &IterativeConfig,
    gdp: &GdpConfig,
    characterization: &CharacterizationConfig,
    every: Option<usize>,
) -> Result<ProgramRun> {
    let cfg = CoreConfig { mode: method.mode(), ..core_cfg.clone() };
    let mut core = CrossbarCore::build(&cfg)?;
    let plan = DeviceSelectionPlan::for_core(&core, target)?;
    let mut reports = Vec::new();
    let log = {
        let mut obs = |t: usize, c: &CrossbarCore| -> Result<Option<f64>> {
            let due = match every {
                Some(k) if method.is_gdp() => t.is_multiple_of(k) || t == gdp.iterations,
                Some(_) => true,
                None => false,
            };
            if !due {
                return Ok(None);
            }
            let rep = characterize(c, target, characterization)?;
            let eps = rep.eps_total;
            reports.push((t as f64, rep));
            Ok(Some(eps))
        };
        if method.is_gdp() {
            program_gdp(&mut core, target, gdp, &plan, &mut obs)?
        } else {
            program_iterative(&mut core, target, iterative, &plan, &mut obs)?
        }
    };
    let last = log.records.last().map_or(0, |r| r.iteration) as f64;
    if reports.last().is_none_or(|(t, _)| *t != last) {
        reports.push((last, characterize(&core, target, characterization)?));
    }
    Ok(ProgramRun { core, log, reports })
}

#[derive(Debug, Clone, PartialEq)]
struct Job {
    seed: u64,
    sweep: String,
    method: Method,
}

fn jobs(spec: &ScenarioSpec) -> Vec<Job> {
    let sweep = spec.sweep_values();
    let methods = spec.method_list();
    let mut out = vec![];
    for &seed in &spec.seeds {
        let mut push = |sweep: &str, method: Method| out.push(Job { seed, sweep: sweep.to_string(), method });
        match spec.scenario {
            ScenarioKind::SdTdConvergence | ScenarioKind::Drift24h | ScenarioKind::InputGeneralization => {
                for &m in &methods {
                    push("-", m);
                }
            }
            ScenarioKind::DeviceTypes => {
                for v in &sweep {
                    for &m in &methods {
                        push(v, m);
                    }
                }
            }
            ScenarioKind::InitCompare | ScenarioKind::LrSweep | ScenarioKind::BatchSweep => {
                // The swept knob only exists for GDP; other methods run once as a baseline.
                for &m in methods.iter().filter(|m| !m.is_gdp()) {
                    push("baseline", m);
                }
                for v in &sweep {
                    for &m in methods.iter().filter(|m| m.is_gdp()) {
                        push(v, m);
                    }
                }
            }
        }
    }
    out
}

fn record(spec: &ScenarioSpec, job: &Job, sweep: &str, coord: f64, rep: &CharacterizationReport) -> ResultRecord {
    ResultRecord {
        scenario: spec.scenario.name().to_string(),
        seed: job.seed,
        sweep: sweep.to_string(),
        method: job.method,
        coord,
        eps_total: rep.eps_total,
        eps_nonlinear: rep.eps_nonlinear,
        eps_weight: rep.eps_weight,
    }
}

fn run_job(spec: &ScenarioSpec, job: &Job) -> Result<Vec<ResultRecord>> {
    let mut device = spec.core.device.resolve()?;
    let mut gdp = spec.gdp.clone();
    if job.sweep != "baseline" && job.sweep != "-" {
        match SweepValue::parse(spec.scenario, &job.sweep)? {
            SweepValue::Init(init) => gdp.init = init,
            SweepValue::Eta(eta) => gdp.eta = eta,
            SweepValue::Batch(b) => gdp.batch_size = b,
            SweepValue::Device(d) => device = d,
            _ => {}
        }
    }
    let core_cfg = spec.core.core_config(device, job.method.mode(), job.seed);
    let target = random_target(spec.core.rows, spec.core.cols, spec.target_range, job.seed);
    let char_cfg = CharacterizationConfig {
        seed: rng::mix(spec.characterization.seed, &[job.seed]),
        ..spec.characterization.clone()
    };
    let every = spec.scenario.tracks_progress().then_some(spec.checkpoint_every);
    let run = program_method(&core_cfg, target.view(), job.method, &spec.iterative, &gdp, &char_cfg, every)?;

    let mut out = vec![];
    match spec.scenario {
        ScenarioKind::Drift24h => {
            let mut core = run.core;
            let end = core.clock();
            for v in spec.sweep_values() {
                let SweepValue::Time(t) = SweepValue::parse(spec.scenario, &v)? else { unreachable!() };
                let wanted = end + t;
                if wanted < core.clock() {
                    return Err(invalid("sweep", "drift checkpoints must be increasing"));
                }
                core.advance_clock(wanted - core.clock())?;
                let rep = characterize(&core, target.view(), &char_cfg)?;
                out.push(record(spec, job, &job.sweep, t, &rep));
            }
        }
        ScenarioKind::InputGeneralization => {
            for v in spec.sweep_values() {
                let SweepValue::Input(input) = SweepValue::parse(spec.scenario, &v)? else { unreachable!() };
                let cfg = CharacterizationConfig { input, ..char_cfg.clone() };
                let rep = characterize(&run.core, target.view(), &cfg)?;
                out.push(record(spec, job, &v, 0.0, &rep));
            }
        }
        _ => {
            for (coord, rep) in &run.reports {
                out.push(record(spec, job, &job.sweep, *coord, rep));
            }
        }
    }
    Ok(out)
}

/// Run every job of a scenario. Deterministic for a given spec regardless of thread count.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Vec<ResultRecord>> {
    spec.validate()?;
    let jobs = jobs(spec);
    let parts: Vec<Vec<ResultRecord>> = jobs.par_iter().map(|j| run_job(spec, j)).collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Keep only the last record (largest coord) of every (scenario, seed, sweep, method) run.
pub fn final_records(records: &[ResultRecord]) -> Vec<ResultRecord> {
    let mut last: BTreeMap<(String, u64, String, Method), ResultRecord> = BTreeMap::new();
    for r in records {
        let key = (r.scenario.clone(), r.seed, r.sweep.clone(), r.method);
        match last.get(&key) {
            Some(prev) if prev.coord >= r.coord => {}
            _ => {
                last.insert(key, r.clone());
            }
        }
    }
    last.into_values().collect()
}

/// Median and interquartile range (linear interpolation between order statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Robust {
    pub median: f64,
    pub iqr: f64,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn robust(values: &[f64]) -> Result<Robust> {
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(Robust { median: quantile(&v, 0.5), iqr: quantile(&v, 0.75) - quantile(&v, 0.25) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub sweep: String,
    pub method: Method,
    pub coord: f64,
    pub n: usize,
    pub eps_total: Robust,
    pub eps_nonlinear: Robust,
    pub eps_weight: Robust,
}

/// Median/IQR over seeds per (scenario, sweep, method, coord).
pub fn summarize(records: &[ResultRecord]) -> Result<Vec<SummaryRow>> {
    summarize_by(records, true)
}

/// Median/IQR over seeds of the final record of each run, grouped by (scenario, sweep,
/// method). Iterative runs stop at a different sweep for every seed, so the coordinate
/// is not part of the key; the row reports the median final coordinate.
pub fn summarize_final(records: &[ResultRecord]) -> Result<Vec<SummaryRow>> {
    summarize_by(&final_records(records), false)
}

fn summarize_by(records: &[ResultRecord], by_coord: bool) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let mut groups: BTreeMap<(String, String, Method, u64), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        // Coordinates are compared by bit pattern; they are never NaN.
        let coord = if by_coord { r.coord.to_bits() } else { 0 };
        groups.entry((r.scenario.clone(), r.sweep.clone(), r.method, coord)).or_default().push(r);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((scenario, sweep, method, _), rs)| {
            let col = |f: fn(&ResultRecord) -> f64| robust(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            Ok(SummaryRow {
                scenario,
                sweep,
                method,
                coord: col(|r| r.coord)?.median,
                n: rs.len(),
                eps_total: col(|r| r.eps_total)?,
                eps_nonlinear: col(|r| r.eps_nonlinear)?,
                eps_weight: col(|r| r.eps_weight)?,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| {
        (&a.scenario, &a.sweep, a.method).cmp(&(&b.scenario, &b.sweep, b.method)).then(a.coord.total_cmp(&b.coord))
    });
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "scenario",
        "sweep",
        "method",
        "coord",
        "n",
        "eps_total_median",
        "eps_total_iqr",
        "eps_nonlinear_median",
        "eps_nonlinear_iqr",
        "eps_weight_median",
        "eps_weight_iqr",
    ])?;
    for r in rows {
        out.write_record([
            r.scenario.clone(),
            r.sweep.clone(),
            r.method.tag().to_string(),
            format!("{}", r.coord),
            r.n.to_string(),
            format!("{:.6}", r.eps_total.median),
            format!("{:.6}", r.eps_total.iqr),
            format!("{:.6}", r.eps_nonlinear.median),
            format!("{:.6}", r.eps_nonlinear.iqr),
            format!("{:.6}", r.eps_weight.median),
            format!("{:.6}", r.eps_weight.iqr),
        ])?;
    }
    out.flush()?;
    Ok(())
}
