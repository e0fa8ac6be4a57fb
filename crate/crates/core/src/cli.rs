//! Command-line front end: `simulate`, `analyze`, `estimate`, `sweep` and
//! `report`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime abort, 4 missing
//! input or fingerprint mismatch, 5 estimate domain error, 6 sweep with fewer
//! than 80% successful points.

use clap::{Args, Parser, Subcommand};
use std::fmt;
use std::path::{Path, PathBuf};

use crate::analysis::{analyze, Channel, MODE_LINES};
use crate::config::{self, AnalysisOptions, Overrides};
use crate::error::Error;
use crate::estimates::{
    crossover_pressure, estimate_frequencies, recoil_heating_rates, torque_from_precession,
    torque_sensitivity, DELTA_OMEGA_PRESET,
};
use crate::integrator::{simulate, Trajectory};
use crate::model::{derive_constants, mbar_to_pa, GasEnvironment};
use crate::report::{
    self, AnalysisRecord, EstimateRecord, RunMetadata, ANALYSIS_FILE, ESTIMATES_FILE,
    METADATA_FILE, REPORT_FILE, SENSITIVITY_PRESSURE_MBAR, SWEEP_FILE,
};
use crate::sweep::{self, SweepPlan};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_INPUT: i32 = 4;
pub const EXIT_DOMAIN: i32 = 5;
pub const EXIT_SWEEP: i32 = 6;

pub const TRAJECTORY_FILE: &str = "trajectory.lvt";

#[derive(Debug, Parser)]
#[command(name = "levisim", version, about = "Levitated anisotropic nanoparticle simulator")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Configuration file (TOML, or JSON by extension); a sweep plan for `sweep`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Gas pressure override (mbar).
    #[arg(long = "pressure-mbar", global = true)]
    pub pressure_mbar: Option<f64>,
    /// Laser power override (W).
    #[arg(long = "power-watt", global = true)]
    pub power_watt: Option<f64>,
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            pressure: self.pressure_mbar.map(mbar_to_pa),
            power: self.power_watt,
        }
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a configuration and write the trajectory and its metadata.
    Simulate {
        /// Also write the trajectory as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Spectra, labeled peaks and measured modes of a trajectory.
    Analyze(AnalyzeArgs),
    /// Closed-form frequency, torque and recoil estimates.
    Estimate,
    /// Run a pressure or power sweep plan.
    Sweep,
    /// Summarize a results directory as Markdown.
    Report {
        /// Results directory (defaults to --out).
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct AnalyzeArgs {
    /// Trajectory container; defaults to `<out>/trajectory.lvt`.
    pub trajectory: Option<PathBuf>,
    /// Detector weights on x,y,z (1/m).
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Detector weight on the rotation observable
    #[arg(long)]
    pub rotation_weight: Option<f64>,
    /// White-noise amplitude added to the detector signal
    #[arg(long)]
    pub noise_floor: Option<f64>,
    /// Minimum peak prominence (decades).
    #[arg(long)]
    pub min_prominence: Option<f64>,
    /// Relative tolerance for labeling a peak with a predicted line
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Welch segment length in samples (default: derived from length)
    #[arg(long)]
    pub segment_length: Option<usize>,
    /// Leading fraction of the record skipped as transient
    #[arg(long)]
    pub settle_fraction: Option<f64>,
    /// Extra alpha mode (Hz) used for sideband labeling
    #[arg(long)]
    pub alpha_prime_hz: Option<f64>,
}

impl AnalyzeArgs {
    fn apply(&self, o: &mut AnalysisOptions) -> CliResult<()> {
        if let Some(w) = &self.weights {
            o.weights = w
                .as_slice()
                .try_into()
                .map_err(|_| CliError::new(EXIT_CONFIG, "--weights takes three values"))?;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { o.$f = v; })* };
        }
        set!(rotation_weight, noise_floor, min_prominence, tolerance, segment_length, settle_fraction);
        if self.alpha_prime_hz.is_some() {
            o.alpha_prime_hz = self.alpha_prime_hz;
        }
        Ok(())
    }
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    /// Errors while reading or resolving a configuration.
    fn config(e: Error) -> Self {
        CliError::new(EXIT_CONFIG, e.to_string())
    }

    /// Errors while reading inputs produced by an earlier verb.
    fn input(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } => EXIT_CONFIG,
            Error::Io { .. } | Error::Format(_) | Error::FingerprintMismatch { .. } => EXIT_INPUT,
            _ => EXIT_RUNTIME,
        };
        CliError::new(code, e.to_string())
    }

    fn runtime(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } => EXIT_CONFIG,
            Error::Domain { .. } => EXIT_DOMAIN,
            _ => EXIT_RUNTIME,
        };
        CliError::new(code, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::new(EXIT_RUNTIME, Error::io(path, e).to_string()))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::new(EXIT_RUNTIME, Error::io(dir, e).to_string()))
}

/// Writes to stdout, ignoring a closed pipe.
fn say(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("record serializes")
}

fn require_config(common: &CommonArgs) -> CliResult<&Path> {
    common
        .config
        .as_deref()
        .ok_or_else(|| CliError::new(EXIT_CONFIG, "missing --config"))
}

pub fn cmd_simulate(common: &CommonArgs, csv: bool) -> CliResult<PathBuf> {
    let path = require_config(common)?;
    let loaded = config::load(path, &common.overrides()).map_err(CliError::config)?;
    let out = common.out_dir();
    create_dir(&out)?;
    let traj = simulate(&loaded.simulation).map_err(CliError::runtime)?;
    let traj_path = out.join(TRAJECTORY_FILE);
    traj.save(&traj_path).map_err(CliError::runtime)?;
    write_file(&out.join("config.toml"), config::to_toml(&loaded.simulation))?;
    let h = &traj.header;
    let meta = RunMetadata {
        trajectory: TRAJECTORY_FILE.into(),
        fingerprint: h.fingerprint.clone(),
        seed: h.config.seed,
        steps: h.steps_taken,
        samples: h.samples,
        sample_interval: h.sample_interval,
        derived: loaded.simulation.derived().map_err(CliError::runtime)?,
        events: h.events,
        averages: h.averages,
        unreliable: h.unreliable,
        timing: traj.timing,
    };
    write_file(&out.join(METADATA_FILE), to_json(&meta))?;
    if csv {
        let file = std::fs::File::create(out.join("trajectory.csv"))
            .map_err(|e| CliError::new(EXIT_RUNTIME, e.to_string()))?;
        traj.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| CliError::new(EXIT_RUNTIME, e.to_string()))?;
    }
    say(&format!(
        "{} samples, fingerprint {}, {:.3e} steps/s -> {}\n",
        h.samples,
        h.fingerprint,
        traj.timing.steps_per_second,
        traj_path.display()
    ));
    Ok(traj_path)
}

fn analysis_options(common: &CommonArgs, args: &AnalyzeArgs) -> CliResult<AnalysisOptions> {
    let mut options = match &common.config {
        Some(path) => {
            let mut table = config::read_table(path).map_err(CliError::config)?;
            match table.remove("analysis") {
                Some(v) => v
                    .try_into()
                    .map_err(|e: toml::de::Error| CliError::config(Error::config("analysis", e.to_string())))?,
                None => AnalysisOptions::default(),
            }
        }
        None => AnalysisOptions::default(),
    };
    args.apply(&mut options)?;
    Ok(options)
}

pub fn cmd_analyze(common: &CommonArgs, args: &AnalyzeArgs) -> CliResult<AnalysisRecord> {
    let out = common.out_dir();
    let traj_path = args.trajectory.clone().unwrap_or_else(|| out.join(TRAJECTORY_FILE));
    let options = analysis_options(common, args)?;
    let traj = Trajectory::load(&traj_path).map_err(CliError::input)?;
    let analysis = analyze(&traj, &options).map_err(CliError::input)?;
    create_dir(&out)?;
    let spectra = out.join("spectra");
    create_dir(&spectra)?;
    let fp = &analysis.fingerprint;
    let mut buf = Vec::new();
    for c in &analysis.channels {
        let (psd, peaks) = if c.channel == Channel::Detector {
            (out.join("psd.csv"), out.join("peaks.csv"))
        } else {
            let n = c.channel.name();
            (spectra.join(format!("{n}_psd.csv")), spectra.join(format!("{n}_peaks.csv")))
        };
        buf.clear();
        c.spectrum.write_psd_csv(&mut buf, fp).unwrap();
        write_file(&psd, &buf)?;
        buf.clear();
        c.spectrum.write_peaks_csv(&mut buf, fp).unwrap();
        write_file(&peaks, &buf)?;
    }

    let cfg = &traj.header.config;
    let derived = cfg.derived().map_err(CliError::runtime)?;
    let torque = analysis.modes.precession.map(|f| {
        let [i1, i2, _] = cfg.particle.inertia;
        torque_from_precession(derived.gamma_c, analysis.estimates.beta0, i1, i2, 2.0 * std::f64::consts::PI * f)
    });
    let record = AnalysisRecord {
        trajectory: traj_path.display().to_string(),
        fingerprint: fp.clone(),
        config: cfg.clone(),
        derived,
        estimates: analysis.estimates,
        estimates_at_equator: analysis.estimates_at_equator,
        lines: analysis.lines.lines.clone(),
        modes: analysis.modes,
        averages: traj.header.averages,
        events: traj.header.events,
        unreliable: traj.header.unreliable,
        torque_from_measured_precession: torque,
    };
    write_file(&out.join(ANALYSIS_FILE), to_json(&record))?;

    let mut modes = String::from("line,measured_hz,predicted_hz\n");
    for line in MODE_LINES {
        let m = record.modes.get(line).map(|v| format!("{v:e}")).unwrap_or_default();
        let p = record.predicted(line).map(|v| format!("{v:e}")).unwrap_or_default();
        modes.push_str(&format!("{},{m},{p}\n", line.name()));
    }
    write_file(&out.join("modes.csv"), modes)?;
    let mut table = String::new();
    for line in MODE_LINES {
        let m = record.modes.get(line).map(|v| format!("{v:.6e}")).unwrap_or("-".into());
        table.push_str(&format!("{:<24} {m}\n", line.name()));
    }
    say(&table);
    Ok(record)
}

pub fn cmd_estimate(common: &CommonArgs) -> CliResult<EstimateRecord> {
    let path = require_config(common)?;
    let loaded = config::load(path, &common.overrides()).map_err(CliError::config)?;
    let c = &loaded.simulation;
    let derived = c.derived().map_err(CliError::runtime)?;
    let estimates = estimate_frequencies(&c.particle, &c.beam, &c.gas).map_err(CliError::runtime)?;
    let recoil = recoil_heating_rates(&c.particle, &c.beam, &c.gas).map_err(CliError::runtime)?;
    let crossover = crossover_pressure(&c.particle, &c.beam, &c.gas).map_err(CliError::runtime)?;
    let [i1, i2, _] = c.particle.inertia;
    let low = GasEnvironment {
        pressure: mbar_to_pa(SENSITIVITY_PRESSURE_MBAR),
        ..c.gas
    };
    let low_gamma = derive_constants(&c.particle, &c.beam, &low)
        .map_err(CliError::runtime)?
        .gamma_c;
    let record = EstimateRecord {
        config: c.clone(),
        derived,
        estimates,
        recoil,
        crossover_pressure_pa: crossover,
        torque_from_precession: torque_from_precession(
            derived.gamma_c,
            estimates.beta0,
            i1,
            i2,
            estimates.precession_magnitude,
        ),
        torque_sensitivity: torque_sensitivity(
            low_gamma,
            estimates.beta0,
            estimates.effective_inertia,
            DELTA_OMEGA_PRESET,
        ),
    };
    let out = common.out_dir();
    create_dir(&out)?;
    let mut csv = String::from("name,value,unit\n");
    let mut table = String::new();
    for (name, v, unit) in record.rows() {
        csv.push_str(&format!("{name},{v:e},{unit}\n"));
        table.push_str(&format!("{name:<24} {v:>14.6e} {unit}\n"));
    }
    write_file(&out.join("estimates.csv"), csv)?;
    write_file(&out.join(ESTIMATES_FILE), to_json(&record))?;
    say(&table);
    Ok(record)
}

pub fn cmd_sweep(common: &CommonArgs) -> CliResult<sweep::SweepResult> {
    let path = require_config(common)?;
    let plan = SweepPlan::load(path, &common.overrides()).map_err(CliError::config)?;
    let out = common.out_dir();
    create_dir(&out)?;
    let result = sweep::run_sweep(&plan, common.threads).map_err(CliError::config)?;
    write_file(&out.join("points.csv"), sweep::points_csv(&result))?;
    write_file(&out.join("exponents.csv"), sweep::exponents_csv(&result))?;
    for (name, csv) in sweep::panel_tables(&result) {
        if plan.svg {
            write_file(&out.join(format!("{name}.svg")), sweep::panel_svg(&csv))?;
        }
        write_file(&out.join(format!("{name}.csv")), csv)?;
    }
    write_file(&out.join(SWEEP_FILE), to_json(&result))?;
    for p in result.points.iter().filter(|p| !p.ok()) {
        eprintln!("point {} ({:e}) failed: {}", p.index, p.control, p.error.as_deref().unwrap_or(""));
    }
    let mut table = String::new();
    for f in &result.fits {
        match &f.measured {
            Some(m) => table.push_str(&format!("{:<24} {:+.3} +/- {:.3}\n", f.mode, m.exponent, m.stderr)),
            None => table.push_str(&format!("{:<24} n/a\n", f.mode)),
        }
    }
    say(&table);
    if !result.passed() {
        return Err(CliError::new(
            EXIT_SWEEP,
            format!(
                "only {:.0}% of sweep points succeeded",
                100.0 * result.success_fraction()
            ),
        ));
    }
    Ok(result)
}

pub fn cmd_report(common: &CommonArgs, dir: Option<&Path>) -> CliResult<PathBuf> {
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| common.out_dir());
    if !dir.is_dir() {
        return Err(CliError::new(EXIT_INPUT, format!("results directory {} not found", dir.display())));
    }
    let inputs = report::discover(&dir).map_err(CliError::input)?;
    if inputs.is_empty() {
        return Err(CliError::new(
            EXIT_INPUT,
            format!("no analyze, estimate, sweep or acceptance outputs under {}", dir.display()),
        ));
    }
    let path = dir.join(REPORT_FILE);
    write_file(&path, report::render(&inputs))?;
    say(&format!("{}\n", path.display()));
    Ok(path)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate { csv } => cmd_simulate(&cli.common, *csv).map(drop),
        Command::Analyze(args) => cmd_analyze(&cli.common, args).map(drop),
        Command::Estimate => cmd_estimate(&cli.common).map(drop),
        Command::Sweep => cmd_sweep(&cli.common).map(drop),
        Command::Report { dir } => cmd_report(&cli.common, dir.as_deref()).map(drop),
    }
}

/// Parses `args`, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Line;

    #[test]
    fn pressure_flag_converts_mbar_to_pa() {
        let cli = Cli::try_parse_from(["levisim", "estimate", "--pressure-mbar", "0.1"]).unwrap();
        assert_eq!(cli.common.overrides().pressure, Some(10.0));
    }

    #[test]
    fn weights_take_three_values() {
        let cli = Cli::try_parse_from(["levisim", "analyze", "t.lvt", "--weights", "1,2,3"]).unwrap();
        let Command::Analyze(args) = cli.command else { panic!() };
        let mut o = AnalysisOptions::default();
        args.apply(&mut o).unwrap();
        assert_eq!(o.weights, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn missing_config_is_a_config_error() {
        assert_eq!(main_with_args(["levisim", "estimate", "--config", "/nonexistent/x.toml"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["levisim", "simulate"]), EXIT_CONFIG);
    }

    #[test]
    fn line_names_are_unique() {
        let mut names: Vec<&str> = MODE_LINES.iter().map(|l| l.name()).collect();
        names.push(Line::AlphaPrime.name());
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
    }
}
