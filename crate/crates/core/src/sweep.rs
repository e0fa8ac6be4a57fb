//! Pressure and power sweeps: plan files, parallel execution across points,
//! scaling fits and plot-ready panel tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{analyze, line_set, MeasuredModes, MODE_LINES};
use crate::config::{self, AnalysisOptions, Overrides};
use crate::error::{Error, Result};
use crate::estimates::frequency_scale;
use crate::integrator::simulate;
use crate::model::{mbar_to_pa, pa_to_mbar, validate_config, SimulationConfig};
use crate::spectral::{fit_scaling_exponent, Line, ScalingFit};

/// Minimum fraction of points that must succeed for a sweep to pass.
pub const SUCCESS_FRACTION: f64 = 0.8;
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Gas pressure, given in mbar.
    Pressure,
    /// Laser power, given in W.
    Power,
}

impl SweepAxis {
    pub fn column(self) -> &'static str {
        match self {
            SweepAxis::Pressure => "pressure_mbar",
            SweepAxis::Power => "power_w",
        }
    }

    /// Writes a control value (mbar or W) into a configuration.
    pub fn apply(self, config: &mut SimulationConfig, value: f64) {
        match self {
            SweepAxis::Pressure => config.gas.pressure = mbar_to_pa(value),
            SweepAxis::Power => config.beam.power = value,
        }
    }

    pub fn value_of(self, config: &SimulationConfig) -> f64 {
        match self {
            SweepAxis::Pressure => pa_to_mbar(config.gas.pressure),
            SweepAxis::Power => config.beam.power,
        }
    }
}

/// Sweep plan file.
///
/// ```toml
/// config = "calibration.toml"   # relative to the plan file
/// axis = "pressure"             # control values in mbar; "power" takes W
/// start = 0.03
/// stop = 0.3
/// points = 6                    # geometric grid; or give `values = [...]`
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub config: PathBuf,
    pub axis: SweepAxis,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub points: Option<usize>,
    /// Recompute `dt` and decimation at every point from its own frequency
    /// scale, keeping the run duration of the base config.
    #[serde(default)]
    pub auto_dt: bool,
    /// Overrides the base config's step count.
    #[serde(default)]
    pub steps: Option<u64>,
    /// Defaults to the base config's seed.
    #[serde(default)]
    pub base_seed: Option<u64>,
    /// Also write SVG line plots of the panel tables.
    #[serde(default)]
    pub svg: bool,
    #[serde(default)]
    pub analysis: Option<AnalysisOptions>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub axis: SweepAxis,
    /// Strictly increasing control values (mbar or W).
    pub grid: Vec<f64>,
    pub base: SimulationConfig,
    pub base_seed: u64,
    pub auto_dt: bool,
    pub svg: bool,
    pub analysis: AnalysisOptions,
}

/// Geometric grid from `start` to `stop` inclusive.
pub fn geometric_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    let ratio = (stop / start).ln() / (points - 1) as f64;
    (0..points)
        .map(|i| {
            if i == points - 1 {
                stop
            } else {
                start * (ratio * i as f64).exp()
            }
        })
        .collect()
}

impl SweepPlan {
    /// Reads a plan and its base config. Overrides apply to the base config
    /// only; the swept quantity is then replaced point by point.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<SweepPlan> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PlanFile = toml::from_str(&text).map_err(|e| Error::config("plan", e.message()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let config_path = if file.config.is_absolute() {
            file.config.clone()
        } else {
            dir.join(&file.config)
        };
        let loaded = config::load(&config_path, overrides)?;
        let mut base = loaded.simulation;
        if let Some(steps) = file.steps {
            base.steps = steps;
        }
        let grid = match (&file.values, file.start, file.stop, file.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => {
                if !(a > 0.0 && b > a) {
                    return Err(Error::config("plan.start", "need 0 < start < stop"));
                }
                geometric_grid(a, b, n)
            }
            _ => {
                return Err(Error::config(
                    "plan",
                    "give either `values` or all of `start`, `stop`, `points`",
                ))
            }
        };
        let plan = SweepPlan {
            axis: file.axis,
            grid,
            base_seed: file.base_seed.or(overrides.seed).unwrap_or(base.seed),
            base,
            auto_dt: file.auto_dt,
            svg: file.svg,
            analysis: file.analysis.unwrap_or(loaded.analysis),
        };
        plan.check()?;
        Ok(plan)
    }

    /// Grid shape plus validation of every point's configuration.
    pub fn check(&self) -> Result<()> {
        if self.grid.len() < MIN_POINTS {
            return Err(Error::config(
                "plan.grid",
                format!("need at least {MIN_POINTS} points, got {}", self.grid.len()),
            ));
        }
        if self.grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("plan.grid", "control values must be positive"));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("plan.grid", "grid must be strictly increasing"));
        }
        for i in 0..self.grid.len() {
            let config = self.point_config(i)?;
            validate_config(&config)
                .into_result()
                .map_err(|e| Error::config(format!("plan.grid[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    /// Configuration of point `index`, seeded with `base_seed + index`.
    pub fn point_config(&self, index: usize) -> Result<SimulationConfig> {
        let mut config = self.base.clone();
        self.axis.apply(&mut config, self.grid[index]);
        config.seed = self.base_seed.wrapping_add(index as u64);
        if self.auto_dt {
            let duration = self.base.dt * self.base.steps as f64;
            let scale = frequency_scale(&config)?;
            config.dt = 1.0 / (config::DEFAULT_STEPS_PER_PERIOD * scale.f_max);
            config.steps = (duration / config.dt).ceil() as u64;
            config.decimation = config::default_decimation(config.dt, scale.f_max);
        }
        Ok(config)
    }
}

/// Outcome of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub index: usize,
    pub control: f64,
    pub seed: u64,
    pub error: Option<String>,
    pub measured: MeasuredModes,
    /// Predicted lines (Hz), in [`MODE_LINES`] order.
    pub predicted: Vec<f64>,
    pub unreliable: bool,
    pub wall_seconds: f64,
}

impl PointResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeFit {
    pub mode: String,
    pub measured: Option<ScalingFit>,
    pub predicted: Option<ScalingFit>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<PointResult>,
    pub fits: Vec<ModeFit>,
}

impl SweepResult {
    pub fn success_fraction(&self) -> f64 {
        let ok = self.points.iter().filter(|p| p.ok()).count();
        ok as f64 / self.points.len().max(1) as f64
    }

    pub fn passed(&self) -> bool {
        self.success_fraction() >= SUCCESS_FRACTION
    }

    pub fn fit(&self, line: Line) -> Option<&ModeFit> {
        self.fits.iter().find(|f| f.mode == line.name())
    }
}

fn run_point(plan: &SweepPlan, index: usize) -> PointResult {
    let control = plan.grid[index];
    let seed = plan.base_seed.wrapping_add(index as u64);
    let mut result = PointResult {
        index,
        control,
        seed,
        error: None,
        measured: MeasuredModes::default(),
        predicted: Vec::new(),
        unreliable: false,
        wall_seconds: 0.0,
    };
    let outcome = plan.point_config(index).and_then(|config| {
        let traj = simulate(&config)?;
        let analysis = analyze(&traj, &plan.analysis)?;
        Ok((traj, analysis))
    });
    match outcome {
        Ok((traj, analysis)) => {
            let lines = line_set(&analysis.estimates, None);
            result.predicted = MODE_LINES
                .iter()
                .map(|&l| lines.get(l).unwrap_or(f64::NAN))
                .collect();
            result.measured = analysis.modes;
            result.unreliable = traj.header.unreliable;
            result.wall_seconds = traj.timing.wall_seconds;
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

fn fit_line(points: &[PointResult], line: Line) -> ModeFit {
    let idx = MODE_LINES.iter().position(|&l| l == line).unwrap();
    let ok: Vec<&PointResult> = points.iter().filter(|p| p.ok()).collect();
    let measured: Vec<(f64, f64)> = ok
        .iter()
        .filter_map(|p| p.measured.get(line).map(|f| (p.control, f)))
        .collect();
    let predicted: Vec<(f64, f64)> = ok
        .iter()
        .map(|p| (p.control, p.predicted[idx]))
        .filter(|(_, f)| f.is_finite() && *f > 0.0)
        .collect();
    let measured_fit = fit_scaling_exponent(&measured);
    let note = measured_fit.as_ref().err().map(|e| e.to_string());
    ModeFit {
        mode: line.name().to_string(),
        measured: measured_fit.ok(),
        predicted: fit_scaling_exponent(&predicted).ok(),
        note,
    }
}

/// Runs every point on a pool of `threads` workers (all cores when `None`).
/// Results do not depend on the thread count.
pub fn run_sweep(plan: &SweepPlan, threads: Option<usize>) -> Result<SweepResult> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    let points: Vec<PointResult> = pool.install(|| {
        (0..plan.grid.len())
            .into_par_iter()
            .map(|i| run_point(plan, i))
            .collect()
    });
    let fits = MODE_LINES.iter().map(|&l| fit_line(&points, l)).collect();
    Ok(SweepResult {
        axis: plan.axis,
        points,
        fits,
    })
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:e}"),
        _ => String::new(),
    }
}

/// One row per point: control value, status, measured and predicted lines.
pub fn points_csv(result: &SweepResult) -> String {
    let mut s = format!("index,{},seed,status", result.axis.column());
    for l in MODE_LINES {
        write!(s, ",{}_hz", l.name()).unwrap();
    }
    for l in MODE_LINES {
        write!(s, ",{}_predicted_hz", l.name()).unwrap();
    }
    s.push_str(",unreliable,error\n");
    for p in &result.points {
        let status = if p.ok() { "ok" } else { "failed" };
        write!(s, "{},{:e},{},{status}", p.index, p.control, p.seed).unwrap();
        for l in MODE_LINES {
            write!(s, ",{}", cell(p.measured.get(l))).unwrap();
        }
        for i in 0..MODE_LINES.len() {
            write!(s, ",{}", cell(p.predicted.get(i).copied())).unwrap();
        }
        let err = p.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(s, ",{},{err}", p.unreliable).unwrap();
    }
    s
}

/// Fitted exponents per mode, measured and predicted.
pub fn exponents_csv(result: &SweepResult) -> String {
    let mut s = String::from(
        "mode,exponent,stderr,points,predicted_exponent,predicted_stderr,note\n",
    );
    for f in &result.fits {
        let (e, se, n) = match &f.measured {
            Some(m) => (cell(Some(m.exponent)), cell(Some(m.stderr)), m.points.to_string()),
            None => (String::new(), String::new(), "0".into()),
        };
        let (pe, pse) = match &f.predicted {
            Some(m) => (cell(Some(m.exponent)), cell(Some(m.stderr))),
            None => (String::new(), String::new()),
        };
        let note = f.note.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(s, "{},{e},{se},{n},{pe},{pse},{note}", f.mode).unwrap();
    }
    s
}

/// Plot-ready panel tables: name and CSV text.
///
/// A pressure sweep gives `panel_2b` (translation, spin and precession
/// against pressure); a power sweep gives `panel_2c` (translation against
/// power) and `panel_2d` (spin and precession against power).
pub fn panel_tables(result: &SweepResult) -> Vec<(String, String)> {
    let trans = [Line::X, Line::Y, Line::Z];
    let rot = [Line::GammaSpin, Line::AlphaSpin, Line::Precession];
    let panels: Vec<(&str, Vec<Line>)> = match result.axis {
        SweepAxis::Pressure => vec![("panel_2b", trans.iter().chain(&rot).copied().collect())],
        SweepAxis::Power => vec![("panel_2c", trans.to_vec()), ("panel_2d", rot.to_vec())],
    };
    panels
        .into_iter()
        .map(|(name, lines)| {
            let mut s = result.axis.column().to_string();
            for l in &lines {
                write!(s, ",{}_hz", l.name()).unwrap();
            }
            s.push('\n');
            for p in result.points.iter().filter(|p| p.ok()) {
                write!(s, "{:e}", p.control).unwrap();
                for &l in &lines {
                    write!(s, ",{}", cell(p.measured.get(l))).unwrap();
                }
                s.push('\n');
            }
            (name.to_string(), s)
        })
        .collect()
}

/// Minimal log-log SVG line plot of a panel table.
pub fn panel_svg(csv: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const M: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#2ca02c", "#17becf", "#d62728", "#9467bd", "#ff7f0e"];
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let rows: Vec<Vec<Option<f64>>> = lines
        .map(|l| l.split(',').map(|c| c.parse::<f64>().ok()).collect())
        .collect();
    let positive = |v: &Option<f64>| v.filter(|x| *x > 0.0).map(f64::log10);
    let xs: Vec<f64> = rows.iter().filter_map(|r| positive(&r[0])).collect();
    let ys: Vec<f64> = rows
        .iter()
        .flat_map(|r| r[1..].iter().filter_map(positive))
        .collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <rect x=\"{M}\" y=\"{M}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        W - 2.0 * M,
        H - 2.0 * M
    );
    if xs.is_empty() || ys.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    for (k, name) in header.iter().enumerate().skip(1) {
        let color = COLORS[(k - 1) % COLORS.len()];
        let pts: Vec<String> = rows
            .iter()
            .filter_map(|r| Some((positive(&r[0])?, positive(r.get(k)?)?)))
            .map(|(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        if !pts.is_empty() {
            writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
                pts.join(" ")
            )
            .unwrap();
        }
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{name}</text>",
            W - M + 4.0 - 120.0,
            M + 14.0 * k as f64
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">log10 {} ({x0:.2} to {x1:.2})</text>",
        M,
        H - M / 3.0,
        header[0]
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"4\" y=\"{}\" font-size=\"12\">log10 Hz ({y0:.2} to {y1:.2})</text>",
        M / 2.0
    )
    .unwrap();
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_grid_spans_endpoints() {
        let g = geometric_grid(0.01, 0.1, 5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[4], 0.1);
        let r = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - r).abs() < 1e-12);
        }
    }

    #[test]
    fn svg_of_empty_panel_is_well_formed() {
        let svg = panel_svg("pressure_mbar,x_hz\n");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn svg_draws_one_polyline_per_series() {
        let svg = panel_svg("power_w,x_hz,y_hz\n1,10,20\n2,14,28\n4,20,\n");
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
