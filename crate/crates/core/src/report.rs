//! Output records written by the CLI verbs and the Markdown summary built
//! from them.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{MeasuredModes, MODE_LINES};
use crate::error::{Error, Result};
use crate::estimates::{FrequencyEstimates, RecoilRates};
use crate::integrator::{EventCounters, RunAverages, RunTiming};
use crate::model::{DerivedConstants, SimulationConfig};
use crate::spectral::Line;
use crate::sweep::SweepResult;

pub const ESTIMATES_FILE: &str = "estimates.json";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const SWEEP_FILE: &str = "sweep.json";
pub const ACCEPTANCE_FILE: &str = "acceptance.csv";
pub const REPORT_FILE: &str = "report.md";

/// Reference band for the light-induced torque at 0.1 mbar (N m).
pub const TORQUE_BAND: (f64, f64) = (1.4e-23, 2.4e-23);
/// Reference band for the extrapolated torque sensitivity (N m/√Hz).
pub const SENSITIVITY_BAND: (f64, f64) = (2.5e-31, 4.7e-31);
/// Pressure at which the sensitivity is extrapolated (mbar).
pub const SENSITIVITY_PRESSURE_MBAR: f64 = 1e-7;

/// Sidecar written next to a trajectory by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub trajectory: String,
    pub fingerprint: String,
    pub seed: u64,
    pub steps: u64,
    pub samples: usize,
    pub sample_interval: f64,
    pub derived: DerivedConstants,
    pub events: EventCounters,
    pub averages: RunAverages,
    pub unreliable: bool,
    pub timing: RunTiming,
}

/// Output of `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub config: SimulationConfig,
    pub derived: DerivedConstants,
    pub estimates: FrequencyEstimates,
    pub recoil: RecoilRates,
    pub crossover_pressure_pa: f64,
    /// `N_α` from the predicted precession (N m).
    pub torque_from_precession: f64,
    /// Torque sensitivity at [`SENSITIVITY_PRESSURE_MBAR`] (N m/√Hz).
    pub torque_sensitivity: f64,
}

impl EstimateRecord {
    /// Flat rows for CSV output.
    pub fn rows(&self) -> Vec<(&'static str, f64, &'static str)> {
        let mut rows = self.estimates.rows();
        rows.extend([
            ("gamma_c", self.derived.gamma_c, "1/s"),
            ("gamma_s", self.derived.gamma_s, "1/s"),
            ("recoil_trans_gas", self.recoil.trans_gas, "(kg m/s)^2/s"),
            ("recoil_trans_photon", self.recoil.trans_photon, "(kg m/s)^2/s"),
            ("recoil_rot_gas", self.recoil.rot_gas, "(kg m^2/s)^2/s"),
            ("recoil_rot_photon", self.recoil.rot_photon, "(kg m^2/s)^2/s"),
            ("recoil_trans_ratio", self.recoil.trans_ratio, "1"),
            ("recoil_rot_ratio", self.recoil.rot_ratio, "1"),
            ("crossover_pressure", self.crossover_pressure_pa, "Pa"),
            ("torque_from_precession", self.torque_from_precession, "N m"),
            ("torque_sensitivity", self.torque_sensitivity, "N m/sqrt(Hz)"),
        ]);
        rows
    }
}

/// Output of `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub trajectory: String,
    pub fingerprint: String,
    pub config: SimulationConfig,
    pub derived: DerivedConstants,
    pub estimates: FrequencyEstimates,
    pub estimates_at_equator: bool,
    pub lines: Vec<(Line, f64)>,
    pub modes: MeasuredModes,
    pub averages: RunAverages,
    pub events: EventCounters,
    pub unreliable: bool,
    /// `N_α` inferred from the measured precession line (N m).
    pub torque_from_measured_precession: Option<f64>,
}

impl AnalysisRecord {
    pub fn predicted(&self, line: Line) -> Option<f64> {
        self.lines.iter().find(|(l, _)| *l == line).map(|(_, f)| *f)
    }
}

/// One acceptance row: criterion, PASS/FAIL and a short detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub criterion: String,
    pub passed: bool,
    pub detail: String,
}

pub fn acceptance_csv(rows: &[AcceptanceRow]) -> String {
    let mut s = String::from("criterion,status,detail\n");
    for r in rows {
        let status = if r.passed { "PASS" } else { "FAIL" };
        writeln!(s, "{},{status},{}", r.criterion, r.detail.replace([',', '\n'], ";")).unwrap();
    }
    s
}

pub fn parse_acceptance_csv(text: &str) -> Vec<AcceptanceRow> {
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let mut parts = l.splitn(3, ',');
            let criterion = parts.next()?.to_string();
            let passed = parts.next()? == "PASS";
            let detail = parts.next().unwrap_or("").to_string();
            Some(AcceptanceRow {
                criterion,
                passed,
                detail,
            })
        })
        .collect()
}

/// Inputs discovered under a results directory.
#[derive(Debug, Default)]
pub struct Inputs {
    pub estimates: Vec<(PathBuf, EstimateRecord)>,
    pub analyses: Vec<(PathBuf, AnalysisRecord)>,
    pub sweeps: Vec<(PathBuf, SweepResult)>,
    pub acceptance: Vec<(PathBuf, Vec<AcceptanceRow>)>,
}

impl Inputs {
    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
            && self.analyses.is_empty()
            && self.sweeps.is_empty()
            && self.acceptance.is_empty()
    }
}

fn walk(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            walk(&path, found)?;
        } else {
            found.push(path);
        }
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Collects every known output file below `dir`.
pub fn discover(dir: &Path) -> Result<Inputs> {
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    let mut inputs = Inputs::default();
    for path in files {
        let rel = path.strip_prefix(dir).unwrap_or(&path).to_path_buf();
        match path.file_name().and_then(|n| n.to_str()) {
            Some(ESTIMATES_FILE) => inputs.estimates.push((rel, read_json(&path)?)),
            Some(ANALYSIS_FILE) => inputs.analyses.push((rel, read_json(&path)?)),
            Some(SWEEP_FILE) => inputs.sweeps.push((rel, read_json(&path)?)),
            Some(ACCEPTANCE_FILE) => {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                inputs.acceptance.push((rel, parse_acceptance_csv(&text)));
            }
            _ => {}
        }
    }
    Ok(inputs)
}

fn sci(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4e}")
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(sci).unwrap_or_else(|| "n/a".into())
}

fn deviation(measured: Option<f64>, predicted: Option<f64>) -> String {
    match (measured, predicted) {
        (Some(m), Some(p)) if p != 0.0 => format!("{:+.1}%", 100.0 * (m - p) / p),
        _ => "n/a".into(),
    }
}

fn band(v: f64, (lo, hi): (f64, f64)) -> &'static str {
    if v >= lo && v <= hi {
        "inside"
    } else {
        "outside"
    }
}

fn parameters(out: &mut String, c: &SimulationConfig, d: &DerivedConstants) {
    let p = &c.particle;
    let b = &c.beam;
    out.push_str("| parameter | value |\n|---|---|\n");
    let rows = [
        ("mass (kg)", sci(d.mass)),
        ("volume (m^3)", sci(p.volume)),
        ("inertia (kg m^2)", format!("{:?}", p.inertia.map(sci))),
        ("susceptibility", format!("{:?}", p.susceptibility)),
        ("power (W)", sci(b.power)),
        ("waist (m)", sci(b.waist)),
        ("rayleigh range (m)", sci(b.rayleigh_range)),
        ("asymmetry", format!("{:?}", b.asymmetry)),
        ("polarization", format!("{:?}", b.polarization)),
        ("pressure (mbar)", sci(c.gas.pressure / 100.0)),
        ("temperature (K)", sci(c.gas.temperature)),
        ("dt (s)", sci(c.dt)),
        ("steps", c.steps.to_string()),
        ("gamma_c (1/s)", sci(d.gamma_c)),
        ("gamma_s (1/s)", sci(d.gamma_s)),
        ("gradient scale (J)", sci(d.gradient_scale)),
    ];
    for (k, v) in rows {
        writeln!(out, "| {k} | {v} |").unwrap();
    }
    out.push('\n');
}

fn estimate_section(out: &mut String, path: &Path, r: &EstimateRecord) {
    writeln!(out, "## Estimates ({})\n", path.display()).unwrap();
    parameters(out, &r.config, &r.derived);
    out.push_str("| quantity | value | unit |\n|---|---|---|\n");
    for (name, v, unit) in r.rows() {
        writeln!(out, "| {name} | {} | {unit} |", sci(v)).unwrap();
    }
    writeln!(
        out,
        "\nTorque from predicted precession: {} N m ({} the reference band {}..{}).",
        sci(r.torque_from_precession),
        band(r.torque_from_precession, TORQUE_BAND),
        sci(TORQUE_BAND.0),
        sci(TORQUE_BAND.1)
    )
    .unwrap();
    writeln!(
        out,
        "Sensitivity at {SENSITIVITY_PRESSURE_MBAR:e} mbar: {} N m/sqrt(Hz) ({} the reference band {}..{}).\n",
        sci(r.torque_sensitivity),
        band(r.torque_sensitivity, SENSITIVITY_BAND),
        sci(SENSITIVITY_BAND.0),
        sci(SENSITIVITY_BAND.1)
    )
    .unwrap();
}

fn analysis_section(out: &mut String, path: &Path, r: &AnalysisRecord) {
    writeln!(out, "## Analysis ({})\n", path.display()).unwrap();
    writeln!(out, "Trajectory `{}`, fingerprint `{}`.\n", r.trajectory, r.fingerprint).unwrap();
    parameters(out, &r.config, &r.derived);
    if r.estimates_at_equator {
        out.push_str("Tilt equilibrium has no solution; predictions use beta = pi/2.\n\n");
    }
    if r.unreliable {
        out.push_str("Run flagged unreliable: too many chart reflections.\n\n");
    }
    out.push_str("| line | measured (Hz) | predicted (Hz) | deviation |\n|---|---|---|---|\n");
    for line in MODE_LINES {
        let m = r.modes.get(line);
        let p = r.predicted(line);
        writeln!(out, "| {} | {} | {} | {} |", line.name(), opt(m), opt(p), deviation(m, p)).unwrap();
    }
    let direct = r.averages.scattering_torque[0];
    writeln!(
        out,
        "\nDirect mean scattering torque N_alpha: {} N m. From measured precession: {}.\n",
        sci(direct),
        opt(r.torque_from_measured_precession)
    )
    .unwrap();
    writeln!(
        out,
        "Mean beta {}, chart reflections {}.\n",
        sci(r.averages.beta),
        r.events.chart_reflections
    )
    .unwrap();
}

fn sweep_section(out: &mut String, path: &Path, r: &SweepResult) {
    writeln!(out, "## Sweep ({}, axis {:?})\n", path.display(), r.axis).unwrap();
    writeln!(
        out,
        "{} of {} points succeeded.\n",
        r.points.iter().filter(|p| p.ok()).count(),
        r.points.len()
    )
    .unwrap();
    out.push_str("| mode | exponent | stderr | predicted exponent |\n|---|---|---|---|\n");
    for f in &r.fits {
        let (e, se) = match &f.measured {
            Some(m) => (sci(m.exponent), sci(m.stderr)),
            None => ("n/a".into(), "n/a".into()),
        };
        let pe = f.predicted.as_ref().map(|m| sci(m.exponent)).unwrap_or("n/a".into());
        writeln!(out, "| {} | {e} | {se} | {pe} |", f.mode).unwrap();
    }
    out.push('\n');
    let dir = path.parent().unwrap_or(Path::new(""));
    writeln!(
        out,
        "Tables: `{}`, `{}`.\n",
        dir.join("points.csv").display(),
        dir.join("exponents.csv").display()
    )
    .unwrap();
}

fn acceptance_section(out: &mut String, path: &Path, rows: &[AcceptanceRow]) {
    writeln!(out, "## Acceptance ({})\n", path.display()).unwrap();
    out.push_str("| criterion | status | detail |\n|---|---|---|\n");
    for r in rows {
        let status = if r.passed { "PASS" } else { "FAIL" };
        writeln!(out, "| {} | {status} | {} |", r.criterion, r.detail).unwrap();
    }
    out.push('\n');
}

/// Renders every discovered input as one Markdown document.
pub fn render(inputs: &Inputs) -> String {
    let mut out = String::from("# levisim report\n\n");
    for (p, r) in &inputs.acceptance {
        acceptance_section(&mut out, p, r);
    }
    for (p, r) in &inputs.estimates {
        estimate_section(&mut out, p, r);
    }
    for (p, r) in &inputs.analyses {
        analysis_section(&mut out, p, r);
    }
    for (p, r) in &inputs.sweeps {
        sweep_section(&mut out, p, r);
    }
    out
}
