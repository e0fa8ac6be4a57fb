//! Detector signals, Welch power spectral densities, peak finding and peak
//! classification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;

use crate::dynamics::{rotation_matrix, Vec3};
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::Column;

/// Angular part of the detector map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularObservable {
    SinAlpha,
    /// `b_x² χ^lab_xx + b_y² χ^lab_yy`
    TensorElement,
    Alpha,
    Beta,
    Gamma,
    SinGamma,
}

impl AngularObservable {
    fn columns(self) -> &'static [Column] {
        match self {
            AngularObservable::SinAlpha | AngularObservable::Alpha => &[Column::Alpha],
            AngularObservable::Beta => &[Column::Beta],
            AngularObservable::Gamma | AngularObservable::SinGamma => &[Column::Gamma],
            AngularObservable::TensorElement => &[Column::Alpha, Column::Beta, Column::Gamma],
        }
    }
}

/// Linear surrogate for the homodyne photocurrent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    /// Weights on `(x, y, z)` (1/m).
    pub weights: Vec3,
    pub rotation_weight: f64,
    pub observable: AngularObservable,
    /// Standard deviation of the additive white noise per sample.
    pub noise_floor: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            weights: [1e7, 1e7, 1e7],
            rotation_weight: 1.0,
            observable: AngularObservable::TensorElement,
            noise_floor: 0.0,
        }
    }
}

impl DetectorModel {
    /// A single noiseless angular channel.
    pub fn angle(observable: AngularObservable) -> Self {
        DetectorModel {
            weights: [0.0; 3],
            rotation_weight: 1.0,
            observable,
            noise_floor: 0.0,
        }
    }

    /// A single noiseless translation channel (unit weight).
    pub fn translation(axis: usize) -> Self {
        let mut weights = [0.0; 3];
        weights[axis] = 1.0;
        DetectorModel {
            weights,
            rotation_weight: 0.0,
            observable: AngularObservable::SinAlpha,
            noise_floor: 0.0,
        }
    }

    fn check(&self) -> Result<()> {
        if self.weights.iter().all(|&w| w == 0.0) && self.rotation_weight == 0.0 {
            return Err(Error::config("detector", "at least one weight must be nonzero"));
        }
        if !(self.noise_floor >= 0.0) {
            return Err(Error::config("detector.noise_floor", "must be non-negative"));
        }
        Ok(())
    }
}

fn require(traj: &Trajectory, column: Column) -> Result<&[f64]> {
    traj.column(column).ok_or_else(|| {
        Error::config(
            "record",
            format!("detector needs column `{}`, which the trajectory did not record", column.name()),
        )
    })
}

/// Maps a trajectory onto the detector time series. The white-noise floor is
/// drawn from the run's RNG stream, continued from where the integrator left
/// it.
pub fn detector_signal(traj: &Trajectory, model: &DetectorModel) -> Result<Vec<f64>> {
    model.check()?;
    let n = traj.len();
    let mut out = vec![0.0; n];
    for (axis, column) in [Column::X, Column::Y, Column::Z].into_iter().enumerate() {
        let w = model.weights[axis];
        if w != 0.0 {
            for (o, v) in out.iter_mut().zip(require(traj, column)?) {
                *o += w * v;
            }
        }
    }
    if model.rotation_weight != 0.0 {
        let cols = model
            .observable
            .columns()
            .iter()
            .map(|&c| require(traj, c))
            .collect::<Result<Vec<_>>>()?;
        let w = model.rotation_weight;
        match model.observable {
            AngularObservable::SinAlpha | AngularObservable::SinGamma => {
                for (o, v) in out.iter_mut().zip(cols[0]) {
                    *o += w * v.sin();
                }
            }
            AngularObservable::Alpha | AngularObservable::Beta | AngularObservable::Gamma => {
                for (o, v) in out.iter_mut().zip(cols[0]) {
                    *o += w * v;
                }
            }
            AngularObservable::TensorElement => {
                let beam = &traj.header.config.beam;
                let chi = traj.header.config.particle.susceptibility;
                let [bx, by] = beam.polarization;
                for (i, o) in out.iter_mut().enumerate() {
                    let r = rotation_matrix(&[cols[0][i], cols[1][i], cols[2][i]]).r;
                    let mut g = 0.0;
                    for z in 0..3 {
                        g += chi[z] * (bx * bx * r[0][z] * r[0][z] + by * by * r[1][z] * r[1][z]);
                    }
                    *o += w * g;
                }
            }
        }
    }
    if model.noise_floor > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(traj.header.config.seed);
        let pos: u128 = traj
            .header
            .rng_word_pos
            .parse()
            .map_err(|_| Error::Format("unreadable rng_word_pos in header".into()))?;
        rng.set_word_pos(pos);
        for o in out.iter_mut() {
            let xi: f64 = rng.sample(StandardNormal);
            *o += model.noise_floor * xi;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            // periodic Hann
            Window::Hann => (0..len)
                .map(|i| {
                    let s = (std::f64::consts::PI * i as f64 / len as f64).sin();
                    s * s
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchOptions {
    pub segment_length: usize,
    /// Fraction of a segment shared with the next one, in `[0, 1)`.
    pub overlap: f64,
    pub window: Window,
}

impl WelchOptions {
    /// Largest power-of-two segment giving at least eight half-overlapping
    /// segments.
    pub fn for_length(len: usize) -> Self {
        let target = (2 * len / 9).max(2);
        let segment_length = 1usize << (usize::BITS - 1 - target.leading_zeros());
        WelchOptions {
            segment_length,
            overlap: 0.5,
            window: Window::Hann,
        }
    }

    /// Segments of `segment_length` samples with the default overlap and
    /// window.
    pub fn with_segment(segment_length: usize) -> Self {
        WelchOptions {
            segment_length,
            overlap: 0.5,
            window: Window::Hann,
        }
    }
}

/// Named spectral line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Line {
    X,
    Y,
    Z,
    AlphaSpin,
    GammaSpin,
    BetaNutation,
    Precession,
    AlphaPrime,
}

impl Line {
    pub fn name(self) -> &'static str {
        match self {
            Line::X => "omega_x",
            Line::Y => "omega_y",
            Line::Z => "omega_z",
            Line::AlphaSpin => "omega_alpha_spin",
            Line::GammaSpin => "omega_gamma_spin",
            Line::BetaNutation => "omega_beta_nutation",
            Line::Precession => "omega_alpha_precession",
            Line::AlphaPrime => "omega_alpha_prime",
        }
    }

    fn is_offset(self) -> bool {
        matches!(self, Line::X | Line::Y | Line::Z | Line::AlphaPrime)
    }

    fn is_carrier(self) -> bool {
        matches!(self, Line::AlphaSpin | Line::GammaSpin | Line::BetaNutation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PeakLabel {
    Line { line: Line },
    Sideband { parent: Line, offset: Line, sign: i8 },
    Harmonic { parent: Line, n: u32 },
    Unidentified,
}

impl fmt::Display for PeakLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeakLabel::Line { line } => f.write_str(line.name()),
            PeakLabel::Sideband {
                parent,
                offset,
                sign,
            } => {
                let s = if *sign > 0 { '+' } else { '-' };
                write!(f, "sideband({},{s}{})", parent.name(), offset.name())
            }
            PeakLabel::Harmonic { parent, n } => write!(f, "harmonic({},{n})", parent.name()),
            PeakLabel::Unidentified => f.write_str("unidentified"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Refined frequency (Hz).
    pub frequency: f64,
    /// Grid index of the local maximum.
    pub bin: usize,
    /// Refined PSD value at the peak.
    pub height: f64,
    /// Prominence in decades of PSD.
    pub prominence: f64,
    /// Full width at half prominence (Hz).
    pub width: f64,
    pub label: PeakLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Hz, from 0 to Nyquist.
    pub frequencies: Vec<f64>,
    /// One-sided PSD (signal²/Hz).
    pub psd: Vec<f64>,
    pub peaks: Vec<Peak>,
}

impl SpectrumReport {
    pub fn resolution(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0)
    }

    /// `Σ PSD Δf`.
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.resolution()
    }

    /// Integrated power within `[lo, hi]` Hz.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p)
            .sum::<f64>()
            * self.resolution()
    }

    /// Grid frequency of the largest PSD value in `[lo, hi]` Hz.
    pub fn argmax_in(&self, lo: f64, hi: f64) -> Option<f64> {
        self.frequencies
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(f, _)| *f)
    }

    pub fn write_psd_csv<W: Write>(&self, mut w: W, fingerprint: &str) -> std::io::Result<()> {
        writeln!(w, "# fingerprint {fingerprint}")?;
        writeln!(w, "frequency_hz,psd")?;
        for (f, p) in self.frequencies.iter().zip(&self.psd) {
            writeln!(w, "{f:e},{p:e}")?;
        }
        Ok(())
    }

    pub fn write_peaks_csv<W: Write>(&self, mut w: W, fingerprint: &str) -> std::io::Result<()> {
        writeln!(w, "# fingerprint {fingerprint}")?;
        writeln!(w, "frequency_hz,height,width_hz,label")?;
        for p in &self.peaks {
            writeln!(w, "{:e},{:e},{:e},\"{}\"", p.frequency, p.height, p.width, p.label)?;
        }
        Ok(())
    }
}

/// Welch estimate of the one-sided PSD. Each segment is mean-subtracted and
/// windowed; the normalization makes `Σ PSD Δf` equal the window-weighted
/// signal variance.
pub fn welch_psd(signal: &[f64], sample_rate: f64, options: &WelchOptions) -> Result<SpectrumReport> {
    let len = options.segment_length;
    if len < 2 || len > signal.len() {
        return Err(Error::Spectral(format!(
            "segment length {len} does not fit a signal of {} samples",
            signal.len()
        )));
    }
    if !(0.0..1.0).contains(&options.overlap) {
        return Err(Error::Spectral(format!("overlap {} outside [0, 1)", options.overlap)));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::Spectral(format!("invalid sample rate {sample_rate}")));
    }
    let hop = ((len as f64) * (1.0 - options.overlap)).round().max(1.0) as usize;
    let segments = (signal.len() - len) / hop + 1;

    let window = options.window.coefficients(len);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let bins = len / 2 + 1;
    let mut acc = vec![0.0; bins];

    for s in 0..segments {
        let seg = &signal[s * hop..s * hop + len];
        let mean = seg.iter().sum::<f64>() / len as f64;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }

    let scale = 1.0 / (sample_rate * window_power * segments as f64);
    let psd: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let one_sided = if k == 0 || (len.is_multiple_of(2) && k == bins - 1) { 1.0 } else { 2.0 };
            v * scale * one_sided
        })
        .collect();
    let df = sample_rate / len as f64;
    Ok(SpectrumReport {
        frequencies: (0..bins).map(|k| k as f64 * df).collect(),
        psd,
        peaks: Vec::new(),
    })
}

/// Local maxima of `log10 PSD` ranked by prominence (decades). Widths are
/// taken at half prominence and positions refined by a parabola through the
/// three log-power samples around each maximum.
pub fn find_peaks(spectrum: &SpectrumReport, min_prominence: f64, max_peaks: usize) -> Vec<Peak> {
    let n = spectrum.psd.len();
    if n < 3 {
        return Vec::new();
    }
    let floor = spectrum
        .psd
        .iter()
        .copied()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor * 1e-3 } else { 1e-300 };
    let l: Vec<f64> = spectrum.psd.iter().map(|v| v.max(floor).log10()).collect();
    let df = spectrum.resolution();

    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if l[i] > l[i - 1] {
            // walk across a plateau
            let mut j = i;
            while j + 1 < n && l[j + 1] == l[i] {
                j += 1;
            }
            if j + 1 < n && l[j + 1] < l[i] {
                let top = (i + j) / 2;
                if let Some(p) = measure_peak(&l, top, df, min_prominence) {
                    peaks.push(p);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks.sort_by(|a, b| {
        b.prominence
            .total_cmp(&a.prominence)
            .then(a.frequency.total_cmp(&b.frequency))
    });
    peaks.truncate(max_peaks);
    peaks
}

fn measure_peak(l: &[f64], i: usize, df: f64, min_prominence: f64) -> Option<Peak> {
    let n = l.len();
    let top = l[i];
    let mut left_min = top;
    let mut k = i;
    while k > 0 {
        k -= 1;
        if l[k] > top {
            break;
        }
        left_min = left_min.min(l[k]);
    }
    let mut right_min = top;
    let mut k = i;
    while k + 1 < n {
        k += 1;
        if l[k] > top {
            break;
        }
        right_min = right_min.min(l[k]);
    }
    let prominence = top - left_min.max(right_min);
    if prominence < min_prominence || prominence <= 0.0 {
        return None;
    }

    let half = top - 0.5 * prominence;
    let mut a = i;
    while a > 0 && l[a] > half {
        a -= 1;
    }
    let left = if l[a] <= half && a < i {
        a as f64 + (half - l[a]) / (l[a + 1] - l[a])
    } else {
        a as f64
    };
    let mut b = i;
    while b + 1 < n && l[b] > half {
        b += 1;
    }
    let right = if l[b] <= half && b > i {
        b as f64 - (half - l[b]) / (l[b - 1] - l[b])
    } else {
        b as f64
    };

    let (y0, y1, y2) = (l[i - 1], l[i], l[i + 1]);
    let curvature = y0 - 2.0 * y1 + y2;
    let delta = if curvature < 0.0 {
        (0.5 * (y0 - y2) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let refined = y1 - 0.25 * (y0 - y2) * delta;
    Some(Peak {
        frequency: (i as f64 + delta) * df,
        bin: i,
        height: 10f64.powf(refined),
        prominence,
        width: (right - left) * df,
        label: PeakLabel::Unidentified,
    })
}

/// Predicted line positions (Hz) used for labeling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LineSet {
    pub lines: Vec<(Line, f64)>,
}

impl LineSet {
    pub fn new(lines: impl IntoIterator<Item = (Line, f64)>) -> Self {
        let mut lines: Vec<(Line, f64)> = lines
            .into_iter()
            .filter(|(_, f)| f.is_finite() && *f > 0.0)
            .collect();
        lines.sort_by_key(|a| a.0);
        lines.dedup_by(|a, b| a.0 == b.0);
        LineSet { lines }
    }

    pub fn get(&self, line: Line) -> Option<f64> {
        self.lines.iter().find(|(l, _)| *l == line).map(|(_, f)| *f)
    }

    pub fn with(mut self, line: Line, frequency: f64) -> Self {
        self.lines.retain(|(l, _)| *l != line);
        self.lines.push((line, frequency));
        LineSet::new(self.lines)
    }

    /// Every candidate label with its predicted frequency and the scale the
    /// tolerance is relative to.
    fn candidates(&self) -> Vec<(PeakLabel, f64, f64)> {
        let mut out = Vec::new();
        for &(line, f) in &self.lines {
            out.push((PeakLabel::Line { line }, f, f));
        }
        for &(parent, fp) in self.lines.iter().filter(|(l, _)| l.is_carrier()) {
            for &(offset, fo) in self.lines.iter().filter(|(l, _)| l.is_offset()) {
                for sign in [1i8, -1] {
                    let f = fp + sign as f64 * fo;
                    if f > 0.0 {
                        out.push((PeakLabel::Sideband { parent, offset, sign }, f, fo));
                    }
                }
            }
        }
        for &(parent, f) in &self.lines {
            for n in 2..=4u32 {
                out.push((PeakLabel::Harmonic { parent, n }, n as f64 * f, n as f64 * f));
            }
        }
        out
    }
}

/// Assigns each peak the candidate with the smallest tolerance-relative
/// mismatch; peaks with no candidate inside `tolerance_fraction` stay
/// unidentified. The result is sorted by frequency, so it does not depend on
/// the input order.
pub fn classify_peaks(peaks: &[Peak], lines: &LineSet, tolerance_fraction: f64) -> Vec<Peak> {
    let candidates = lines.candidates();
    let mut out: Vec<Peak> = peaks
        .iter()
        .map(|p| {
            let mut best: Option<(f64, PeakLabel)> = None;
            for (label, f, scale) in &candidates {
                let err = (p.frequency - f).abs() / scale;
                if err <= tolerance_fraction && best.is_none_or(|(e, _)| err < e) {
                    best = Some((err, *label));
                }
            }
            Peak {
                label: best.map_or(PeakLabel::Unidentified, |(_, l)| l),
                ..*p
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.frequency
            .total_cmp(&b.frequency)
            .then(b.prominence.total_cmp(&a.prominence))
    });
    out
}

/// Power law `f = A · c^k` fitted in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub stderr: f64,
    pub prefactor: f64,
    pub points: usize,
}

pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::Spectral(format!(
            "scaling fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(c, f)| !(*c > 0.0 && *f > 0.0)) {
        return Err(Error::Spectral("scaling fit needs positive values".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let span = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - xs.iter().copied().fold(f64::INFINITY, f64::min);
    if span < 0.5 - 1e-12 {
        return Err(Error::Spectral(format!(
            "control values span {span:.3} decades, need at least half a decade"
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(ScalingFit {
        exponent: slope,
        stderr,
        prefactor: 10f64.powf(intercept),
        points: points.len(),
    })
}
