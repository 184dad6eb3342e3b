//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::characterization::{characterize, CharacterizationConfig, CharacterizationReport};
use crate::config::{Config, ConfigError, TargetKind};
use crate::crossbar::CrossbarCore;
use crate::device::DeviceParams;
use crate::error::Error;
use crate::experiments::{
    program_method, random_target, robust, run_scenario, summarize, summarize_final, write_csv, write_summary_csv, Method,
    Profile, ScenarioKind, SummaryRow,
};
use crate::inference::{accuracy, argmax_columns, compare_methods, write_inference_csv, Dataset, Mlp};
use crate::{rng, snapshot};

const DEMO_MLP: &str = include_str!("../fixtures/demo_mlp.json");
const DEMO_TEST: &str = include_str!("../fixtures/demo_test.csv");

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "aimc", version, about = "Program and characterize simulated PCM crossbar cores")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed count N (runs seeds 1..=N) or a comma-separated list such as 3,8,11.
    #[arg(long, global = true)]
    pub seeds: Option<Seeds>,
    /// Output directory [default: results, or <manifest dir>/replay for replay].
    #[arg(long, global = true, env = "AIMC_OUT_DIR")]
    pub out: Option<PathBuf>,
    /// Array-size profile: desk (64x64) or paper (256x256).
    #[arg(long, global = true)]
    pub profile: Option<Profile>,
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Command {
    /// Program one core per seed and write logs, snapshots and characterizations.
    Program {
        /// Overrides `program.method`.
        #[arg(long)]
        method: Option<Method>,
    },
    /// Characterize a snapshot, or a fresh core per seed, against its target.
    Characterize {
        /// Overrides `program.snapshot`. The target is derived from the snapshot's seed.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// random or zero; overrides `program.target`.
        #[arg(long)]
        target: Option<TargetKind>,
        /// Cell mode of a fresh core; overrides `program.method`.
        #[arg(long)]
        method: Option<Method>,
    },
    /// Run a scenario over all seeds and write raw and summary CSVs.
    Sweep {
        /// Overrides `scenario`.
        #[arg(long)]
        scenario: Option<ScenarioKind>,
    },
    /// Drift of programmed cores over 24 hours.
    Drift,
    /// Map an MLP onto cores with each method and measure test accuracy.
    Infer {
        /// Network JSON; overrides `inference.mlp`.
        #[arg(long)]
        mlp: Option<PathBuf>,
        /// Test CSV (features then label); overrides `inference.dataset`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated methods; overrides `inference.methods`.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
    },
    /// Rerun the command recorded in a manifest and compare its outputs.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

impl FromStr for Seeds {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.contains(',') {
            let list = s
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(|v| v.parse::<u64>().map_err(|_| format!("`{v}` is not a seed")))
                .collect::<Result<Vec<_>, _>>()?;
            if list.is_empty() {
                return Err("empty seed list".into());
            }
            return Ok(Seeds(list));
        }
        match s.parse::<u64>() {
            Ok(n) if n >= 1 => Ok(Seeds((1..=n).collect())),
            _ => Err(format!("`{s}` is neither a seed count >= 1 nor a comma-separated list")),
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to rerun a command, plus hashes of what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config_path: Option<PathBuf>,
    pub config_sha256: Option<String>,
    pub profile: Profile,
    pub seeds: Vec<u64>,
    pub presets: Vec<String>,
    pub outputs: Vec<OutputFile>,
    pub created_unix_s: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse arguments, run, report errors on stderr and map them to an exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Replay { manifest } => replay(g, manifest),
        cmd => {
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            let seeds = g.seeds.as_ref().map(|s| s.0.clone());
            run_command(cmd, g.config.as_deref(), g.profile, seeds, &out, g.quiet).map(|_| ())
        }
    }
}

struct Setup {
    cfg: Config,
    profile: Profile,
    seeds: Vec<u64>,
    config_path: Option<PathBuf>,
    config_sha256: Option<String>,
}

fn setup(config: Option<&Path>, profile: Option<Profile>, seeds: Option<Vec<u64>>) -> Result<Setup, CliError> {
    let (mut cfg, config_path, config_sha256) = match config {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| CliError::Config(format!("{}: cannot read: {e}", p.display())))?;
            let cfg = Config::load(p)?;
            let abs = std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
            (cfg, Some(abs), Some(sha256_hex(&bytes)))
        }
        None => (Config::default(), None, None),
    };
    let profile = cfg.profile(profile);
    cfg.apply_profile(profile);
    let seeds = seeds.or_else(|| cfg.seeds.clone()).unwrap_or_else(|| (1..=10).collect());
    if seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".into()));
    }
    Ok(Setup { cfg, profile, seeds, config_path, config_sha256 })
}

/// Collects output files, hashing them as they are written.
struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: vec![] })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>) -> Result<(), CliError> {
        let mut buf = vec![];
        f(&mut buf)?;
        let path = self.dir.join(name);
        fs::write(&path, &buf).map_err(|e| io_err(&path, e))?;
        self.files.push(OutputFile { file: name.to_string(), sha256: sha256_hex(&buf) });
        Ok(())
    }
}

fn absolute(p: &Option<PathBuf>) -> Option<PathBuf> {
    p.as_ref().map(|p| std::path::absolute(p).unwrap_or_else(|_| p.clone()))
}

/// Run one non-replay command and write its outputs and manifest into `out`.
pub fn run_command(
    cmd: &Command,
    config: Option<&Path>,
    profile: Option<Profile>,
    seeds: Option<Vec<u64>>,
    out: &Path,
    quiet: bool,
) -> Result<Manifest, CliError> {
    let s = setup(config, profile, seeds)?;
    // Paths are recorded absolute so the manifest replays from any directory.
    let cmd = match cmd {
        Command::Characterize { snapshot, target, method } => {
            Command::Characterize { snapshot: absolute(snapshot), target: *target, method: *method }
        }
        Command::Infer { mlp, data, methods } => {
            Command::Infer { mlp: absolute(mlp), data: absolute(data), methods: methods.clone() }
        }
        Command::Replay { .. } => return Err(CliError::Config("replay cannot be recorded".into())),
        c => c.clone(),
    };
    let mut outputs = Outputs::new(out)?;
    let presets = match &cmd {
        Command::Program { method } => program(&s, method.unwrap_or(s.cfg.program.method), &mut outputs, quiet)?,
        Command::Characterize { snapshot, target, method } => {
            let snapshot = snapshot.clone().or_else(|| s.cfg.program.snapshot.as_ref().map(|p| s.cfg.resolve_path(p)));
            let target = target.unwrap_or(s.cfg.program.target);
            let method = method.unwrap_or(s.cfg.program.method);
            characterize_cmd(&s, snapshot.as_deref(), target, method, &mut outputs, quiet)?
        }
        Command::Sweep { scenario } => {
            let kind = scenario.or(s.cfg.scenario).ok_or_else(|| {
                CliError::Config("no scenario given: pass --scenario or set `scenario` in the config".into())
            })?;
            sweep(&s, kind, &mut outputs, quiet)?
        }
        Command::Drift => sweep(&s, ScenarioKind::Drift24h, &mut outputs, quiet)?,
        Command::Infer { mlp, data, methods } => infer_cmd(&s, mlp.as_deref(), data.as_deref(), methods, &mut outputs, quiet)?,
        Command::Replay { .. } => unreachable!(),
    };
    let manifest = Manifest {
        tool: "aimc".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd,
        config_path: s.config_path.clone(),
        config_sha256: s.config_sha256.clone(),
        profile: s.profile,
        seeds: s.seeds.clone(),
        presets,
        outputs: outputs.files.clone(),
        created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    let path = out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    if !quiet {
        println!("wrote {} files and {}", manifest.outputs.len(), path.display());
    }
    Ok(manifest)
}

fn target_for(kind: TargetKind, rows: usize, cols: usize, range: f64, seed: u64) -> Array2<f64> {
    match kind {
        TargetKind::Random => random_target(rows, cols, range, seed),
        TargetKind::Zero => Array2::zeros((rows, cols)),
    }
}

fn char_config(cfg: &Config, seed: u64) -> CharacterizationConfig {
    CharacterizationConfig { seed: rng::mix(cfg.characterization.seed, &[seed]), ..cfg.characterization.clone() }
}

fn report_header(first: [&'static str; 3]) -> Vec<&'static str> {
    first.into_iter().chain(CharacterizationReport::csv_header()).collect()
}

fn program(s: &Setup, method: Method, outputs: &mut Outputs, quiet: bool) -> Result<Vec<String>, CliError> {
    let cfg = &s.cfg;
    cfg.scenario_spec(ScenarioKind::SdTdConvergence, Some(&s.seeds)).validate().map_err(ConfigError::from)?;
    let device = cfg.core.device.resolve().map_err(ConfigError::from)?;
    let runs = s
        .seeds
        .par_iter()
        .map(|&seed| {
            let core_cfg = cfg.core.core_config(device.clone(), method.mode(), seed);
            let target = target_for(cfg.program.target, cfg.core.rows, cfg.core.cols, cfg.target_range, seed);
            let every = Some(cfg.checkpoint_every);
            program_method(&core_cfg, target.view(), method, &cfg.iterative, &cfg.gdp, &char_config(cfg, seed), every)
        })
        .collect::<crate::Result<Vec<_>>>()?;

    for (&seed, run) in s.seeds.iter().zip(&runs) {
        outputs.write(&format!("program_log_seed{seed}.csv"), |w| run.log.write_csv(w))?;
        outputs.write(&format!("core_seed{seed}.snap"), |w| snapshot::write(&run.core, w))?;
    }
    outputs.write("characterization.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(report_header(["seed", "method", "iteration"]))?;
        for (&seed, run) in s.seeds.iter().zip(&runs) {
            for (coord, rep) in &run.reports {
                let head = [seed.to_string(), method.tag().to_string(), coord.to_string()];
                out.write_record(head.into_iter().chain(rep.csv_row()))?;
            }
        }
        out.flush()?;
        Ok(())
    })?;
    if !quiet {
        println!("{method} on {}x{} {}:", cfg.core.rows, cfg.core.cols, cfg.core.device.label());
        for (&seed, run) in s.seeds.iter().zip(&runs) {
            let r = run.final_report();
            println!(
                "  seed {seed:>3}  iterations {:>4}  eps_total {:6.2}%  eps_nonlinear {:6.2}%  eps_weight {:6.2}%",
                run.final_coord(),
                r.eps_total,
                r.eps_nonlinear,
                r.eps_weight
            );
        }
    }
    Ok(vec![cfg.core.device.label()])
}

fn characterize_cmd(
    s: &Setup,
    snapshot_path: Option<&Path>,
    target: TargetKind,
    method: Method,
    outputs: &mut Outputs,
    quiet: bool,
) -> Result<Vec<String>, CliError> {
    let cfg = &s.cfg;
    // A snapshot carries its own programming seed, which also fixes its target.
    let cores: Vec<(String, CrossbarCore)> = match snapshot_path {
        Some(p) => {
            let core = snapshot::load(p).map_err(|e| io_err(p, e))?;
            vec![(p.display().to_string(), core)]
        }
        None => {
            let device = cfg.core.device.resolve().map_err(ConfigError::from)?;
            s.seeds
                .iter()
                .map(|&seed| {
                    let core = CrossbarCore::build(&cfg.core.core_config(device.clone(), method.mode(), seed))?;
                    Ok(("fresh".to_string(), core))
                })
                .collect::<crate::Result<_>>()?
        }
    };
    let mut rows = vec![];
    for (source, core) in &cores {
        let seed = core.seed();
        let t = target_for(target, core.rows(), core.cols(), cfg.target_range, seed);
        let char_cfg = char_config(cfg, seed);
        char_cfg.validate(core.rows()).map_err(ConfigError::from)?;
        rows.push((seed, source.clone(), characterize(core, t.view(), &char_cfg)?));
    }
    outputs.write("characterization.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(report_header(["seed", "source", "clock_s"]))?;
        for ((seed, source, rep), (_, core)) in rows.iter().zip(&cores) {
            let head = [seed.to_string(), source.clone(), core.clock().to_string()];
            out.write_record(head.into_iter().chain(rep.csv_row()))?;
        }
        out.flush()?;
        Ok(())
    })?;
    if !quiet {
        for (seed, source, r) in &rows {
            println!(
                "seed {seed:>3} ({source})  eps_total {:6.2}%  eps_nonlinear {:6.2}%  eps_weight {:6.2}%",
                r.eps_total, r.eps_nonlinear, r.eps_weight
            );
        }
    }
    let mut presets: Vec<String> = cores.iter().map(|(_, c)| preset_name(c.device_params())).collect();
    presets.dedup();
    Ok(presets)
}

fn preset_name(p: &DeviceParams) -> String {
    ["pcm1", "pcm2", "ideal"]
        .into_iter()
        .find(|n| DeviceParams::preset(n).is_ok_and(|d| &d == p))
        .unwrap_or("custom")
        .to_string()
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<22} {:<10} {:<13} {:>10} {:>4} {:>10} {:>10} {:>10}", "scenario", "sweep", "method", "coord", "n", "eps_tot", "eps_nl", "eps_w");
    for r in rows {
        println!(
            "{:<22} {:<10} {:<13} {:>10} {:>4} {:>9.2}% {:>9.2}% {:>9.2}%",
            r.scenario,
            r.sweep,
            r.method.tag(),
            r.coord,
            r.n,
            r.eps_total.median,
            r.eps_nonlinear.median,
            r.eps_weight.median
        );
    }
}

fn sweep(s: &Setup, kind: ScenarioKind, outputs: &mut Outputs, quiet: bool) -> Result<Vec<String>, CliError> {
    let mut spec = s.cfg.scenario_spec(kind, Some(&s.seeds));
    // Sweep values and method lists in the file belong to the file's scenario.
    if s.cfg.scenario.is_some_and(|k| k != kind) {
        spec.sweep.clear();
        spec.methods.clear();
    }
    spec.validate().map_err(ConfigError::from)?;
    let records = run_scenario(&spec)?;
    let by_coord = summarize(&records)?;
    let finals = summarize_final(&records)?;
    outputs.write("results.csv", |w| write_csv(&records, w))?;
    outputs.write("summary.csv", |w| write_summary_csv(&by_coord, w))?;
    outputs.write("summary_final.csv", |w| write_summary_csv(&finals, w))?;
    if !quiet {
        print_summary(if kind == ScenarioKind::Drift24h || kind == ScenarioKind::InputGeneralization {
            &by_coord
        } else {
            &finals
        });
    }
    let mut presets = vec![spec.core.device.label()];
    if kind == ScenarioKind::DeviceTypes {
        presets = spec.sweep_values();
    }
    Ok(presets)
}

fn infer_cmd(
    s: &Setup,
    mlp: Option<&Path>,
    data: Option<&Path>,
    methods: &[Method],
    outputs: &mut Outputs,
    quiet: bool,
) -> Result<Vec<String>, CliError> {
    let cfg = &s.cfg;
    let mlp_path = mlp.map(Path::to_path_buf).or_else(|| cfg.inference.mlp.as_ref().map(|p| cfg.resolve_path(p)));
    let data_path = data.map(Path::to_path_buf).or_else(|| cfg.inference.dataset.as_ref().map(|p| cfg.resolve_path(p)));
    let net = match &mlp_path {
        Some(p) => Mlp::from_json(fs::File::open(p).map_err(|e| io_err(p, e))?).map_err(|e| io_err(p, e))?,
        None => Mlp::from_json(DEMO_MLP.as_bytes())?,
    };
    let test = match &data_path {
        Some(p) => Dataset::read_csv(fs::File::open(p).map_err(|e| io_err(p, e))?).map_err(|e| io_err(p, e))?,
        None => Dataset::read_csv(DEMO_TEST.as_bytes())?,
    };
    let methods: Vec<Method> = if !methods.is_empty() {
        methods.to_vec()
    } else if !cfg.inference.methods.is_empty() {
        cfg.inference.methods.clone()
    } else {
        vec![Method::IterativeSd, Method::GdpSd]
    };
    let records = compare_methods(&net, &test, &cfg.map_config(), &methods, &s.seeds)?;
    outputs.write("inference.csv", |w| write_inference_csv(&records, w))?;
    if !quiet {
        let software = accuracy(&argmax_columns(net.forward(test.features.t()).view()), &test.labels);
        println!("software accuracy {software:.2}% on {} samples", test.len());
        for m in &methods {
            let accs: Vec<f64> = records.iter().filter(|r| r.method == *m).map(|r| r.accuracy).collect();
            let acc = robust(&accs)?;
            println!("  {:<13} accuracy median {:6.2}%  iqr {:5.2}", m.tag(), acc.median, acc.iqr);
        }
    }
    Ok(vec![cfg.core.device.label()])
}

fn replay(g: &GlobalArgs, manifest_path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| CliError::Config(format!("{}: cannot read: {e}", manifest_path.display())))?;
    let old: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: not a run manifest: {e}", manifest_path.display())))?;
    if let (Some(path), Some(want)) = (&old.config_path, &old.config_sha256) {
        let bytes = fs::read(path).map_err(|e| CliError::Config(format!("{}: cannot read: {e}", path.display())))?;
        let got = sha256_hex(&bytes);
        if &got != want {
            eprintln!(
                "warning: config {} does not match the manifest (sha256 {got}, recorded {want}); results may differ",
                path.display()
            );
        }
    }
    let out = g.out.clone().unwrap_or_else(|| manifest_path.parent().unwrap_or(Path::new(".")).join("replay"));
    let new = run_command(&old.command, old.config_path.as_deref(), Some(old.profile), Some(old.seeds.clone()), &out, g.quiet)?;
    let differing: Vec<&str> = old
        .outputs
        .iter()
        .filter(|o| !new.outputs.iter().any(|n| n.file == o.file && n.sha256 == o.sha256))
        .map(|o| o.file.as_str())
        .collect();
    if !differing.is_empty() {
        return Err(CliError::Runtime(format!("replay outputs differ from the manifest: {}", differing.join(", "))));
    }
    if !g.quiet {
        println!("replay reproduced all {} outputs", old.outputs.len());
    }
    let _ = std::io::stdout().flush();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_parse_counts_and_lists() {
        assert_eq!("3".parse::<Seeds>().unwrap().0, vec![1, 2, 3]);
        assert_eq!("4, 9,2".parse::<Seeds>().unwrap().0, vec![4, 9, 2]);
        assert_eq!("7,".parse::<Seeds>().unwrap().0, vec![7]);
        assert!("0".parse::<Seeds>().is_err());
        assert!("a,b".parse::<Seeds>().is_err());
        assert!(",".parse::<Seeds>().is_err());
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_round_trips() {
        let m = Manifest {
            tool: "aimc".into(),
            version: "0".into(),
            command: Command::Sweep { scenario: Some(ScenarioKind::LrSweep) },
            config_path: None,
            config_sha256: None,
            profile: Profile::Desk,
            seeds: vec![1, 2],
            presets: vec!["pcm1".into()],
            outputs: vec![],
            created_unix_s: 5,
        };
        let back: Manifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 2);
    }
}
