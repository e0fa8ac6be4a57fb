//! Trajectory analysis: per-channel spectra, labeled detector spectrum and
//! measured mode frequencies.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::config::AnalysisOptions;
use crate::error::{Error, Result};
use crate::estimates::{estimate_at, estimate_frequencies, FrequencyEstimates};
use crate::integrator::{config_fingerprint, Trajectory};
use crate::spectral::{
    classify_peaks, detector_signal, find_peaks, welch_psd, AngularObservable, DetectorModel,
    Line, LineSet, Peak, PeakLabel, SpectrumReport, WelchOptions,
};

/// Lowest usable bin for mode picking; the first few bins carry the
/// window's leakage of the mean and slow drifts.
const MIN_BIN: usize = 3;
/// Precession is searched below this fraction of the measured α spin.
const PRECESSION_BAND: f64 = 0.5;

/// Signal channels analyzed separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Detector,
    X,
    Y,
    Z,
    SinAlpha,
    Beta,
    SinGamma,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::Detector,
        Channel::X,
        Channel::Y,
        Channel::Z,
        Channel::SinAlpha,
        Channel::Beta,
        Channel::SinGamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Detector => "detector",
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Z => "z",
            Channel::SinAlpha => "sin_alpha",
            Channel::Beta => "beta",
            Channel::SinGamma => "sin_gamma",
        }
    }

    fn model(self, options: &AnalysisOptions) -> DetectorModel {
        match self {
            Channel::Detector => DetectorModel {
                weights: options.weights,
                rotation_weight: options.rotation_weight,
                observable: AngularObservable::TensorElement,
                noise_floor: options.noise_floor,
            },
            Channel::X => DetectorModel::translation(0),
            Channel::Y => DetectorModel::translation(1),
            Channel::Z => DetectorModel::translation(2),
            Channel::SinAlpha => DetectorModel::angle(AngularObservable::SinAlpha),
            Channel::Beta => DetectorModel::angle(AngularObservable::Beta),
            Channel::SinGamma => DetectorModel::angle(AngularObservable::SinGamma),
        }
    }
}

/// Mode frequencies picked from the channel spectra (Hz).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasuredModes {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    pub alpha_spin: Option<f64>,
    pub gamma_spin: Option<f64>,
    pub beta_nutation: Option<f64>,
    pub precession: Option<f64>,
}

impl MeasuredModes {
    pub fn get(&self, line: Line) -> Option<f64> {
        match line {
            Line::X => self.x,
            Line::Y => self.y,
            Line::Z => self.z,
            Line::AlphaSpin => self.alpha_spin,
            Line::GammaSpin => self.gamma_spin,
            Line::BetaNutation => self.beta_nutation,
            Line::Precession => self.precession,
            Line::AlphaPrime => None,
        }
    }
}

/// Lines measured by [`MeasuredModes`], in table order.
pub const MODE_LINES: [Line; 7] = [
    Line::X,
    Line::Y,
    Line::Z,
    Line::AlphaSpin,
    Line::GammaSpin,
    Line::BetaNutation,
    Line::Precession,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpectrum {
    pub channel: Channel,
    pub spectrum: SpectrumReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub fingerprint: String,
    pub estimates: FrequencyEstimates,
    /// True when the tilt equilibrium had no solution and the estimates were
    /// evaluated at `β = π/2`.
    pub estimates_at_equator: bool,
    pub lines: LineSet,
    pub channels: Vec<ChannelSpectrum>,
    pub modes: MeasuredModes,
}

impl Analysis {
    pub fn channel(&self, channel: Channel) -> Option<&SpectrumReport> {
        self.channels
            .iter()
            .find(|c| c.channel == channel)
            .map(|c| &c.spectrum)
    }
}

/// Closed-form estimates for labeling; falls back to the equatorial tilt when
/// the equilibrium has no solution.
pub fn labeling_estimates(traj: &Trajectory) -> Result<(FrequencyEstimates, bool)> {
    let c = &traj.header.config;
    match estimate_frequencies(&c.particle, &c.beam, &c.gas) {
        Ok(e) => Ok((e, false)),
        Err(Error::Domain { .. }) | Err(Error::NoConvergence { .. }) => {
            Ok((estimate_at(&c.particle, &c.beam, &c.gas, 0.5 * PI)?, true))
        }
        Err(e) => Err(e),
    }
}

/// Predicted lines in Hz.
pub fn line_set(estimates: &FrequencyEstimates, alpha_prime_hz: Option<f64>) -> LineSet {
    let hz = |w: f64| w.abs() / (2.0 * PI);
    let mut lines = vec![
        (Line::X, hz(estimates.omega_x)),
        (Line::Y, hz(estimates.omega_y)),
        (Line::Z, hz(estimates.omega_z)),
        (Line::AlphaSpin, hz(estimates.omega_alpha_spin)),
        (Line::GammaSpin, hz(estimates.omega_gamma_spin)),
        (Line::BetaNutation, hz(estimates.omega_beta_nutation)),
        (Line::Precession, hz(estimates.precession_magnitude)),
    ];
    if let Some(f) = alpha_prime_hz {
        lines.push((Line::AlphaPrime, f));
    }
    LineSet::new(lines)
}

/// Checks that the embedded configuration still hashes to the stored
/// fingerprint.
pub fn verify_fingerprint(traj: &Trajectory) -> Result<()> {
    let computed = config_fingerprint(&traj.header.config);
    if computed != traj.header.fingerprint {
        return Err(Error::FingerprintMismatch {
            stored: traj.header.fingerprint.clone(),
            computed,
        });
    }
    Ok(())
}

fn welch_options(options: &AnalysisOptions, len: usize) -> WelchOptions {
    if options.segment_length > 0 {
        WelchOptions::with_segment(options.segment_length.min(len))
    } else {
        WelchOptions::for_length(len)
    }
}

/// Spectrum of one channel over the part of the run after `settle_fraction`.
pub fn channel_spectrum(
    traj: &Trajectory,
    channel: Channel,
    options: &AnalysisOptions,
) -> Result<SpectrumReport> {
    let signal = detector_signal(traj, &channel.model(options))?;
    let start = ((signal.len() as f64) * options.settle_fraction.clamp(0.0, 0.9)) as usize;
    let tail = &signal[start..];
    let mut spectrum = welch_psd(tail, traj.sample_rate(), &welch_options(options, tail.len()))?;
    spectrum.peaks = find_peaks(&spectrum, options.min_prominence, options.max_peaks);
    Ok(spectrum)
}

fn dominant(spectrum: &SpectrumReport, lo: f64, hi: f64) -> Option<f64> {
    let floor = MIN_BIN as f64 * spectrum.resolution();
    spectrum
        .peaks
        .iter()
        .filter(|p| p.frequency >= lo.max(floor) && p.frequency <= hi)
        .max_by(|a, b| a.height.total_cmp(&b.height))
        .map(|p| p.frequency)
}

fn measure(channels: &[ChannelSpectrum], estimates: &FrequencyEstimates) -> MeasuredModes {
    let get = |c: Channel| channels.iter().find(|s| s.channel == c).map(|s| &s.spectrum);
    let near = |c: Channel, omega: f64| {
        let f = omega / (2.0 * PI);
        get(c).and_then(|s| dominant(s, 0.5 * f, 1.5 * f))
    };
    let anywhere = |c: Channel| get(c).and_then(|s| dominant(s, 0.0, f64::INFINITY));
    let alpha_spin = anywhere(Channel::SinAlpha);
    let precession = alpha_spin.and_then(|f| {
        get(Channel::SinAlpha).and_then(|s| dominant(s, 0.0, PRECESSION_BAND * f))
    });
    MeasuredModes {
        x: near(Channel::X, estimates.omega_x),
        y: near(Channel::Y, estimates.omega_y),
        z: near(Channel::Z, estimates.omega_z),
        alpha_spin,
        gamma_spin: anywhere(Channel::SinGamma),
        beta_nutation: anywhere(Channel::Beta),
        precession,
    }
}

/// Full analysis of a trajectory: every channel spectrum, the labeled
/// detector spectrum and the measured mode frequencies.
pub fn analyze(traj: &Trajectory, options: &AnalysisOptions) -> Result<Analysis> {
    verify_fingerprint(traj)?;
    if traj.len() < 16 {
        return Err(Error::Spectral(format!(
            "trajectory has {} samples, too few for a spectrum",
            traj.len()
        )));
    }
    let (estimates, at_equator) = labeling_estimates(traj)?;
    let lines = line_set(&estimates, options.alpha_prime_hz);
    let mut channels = Vec::new();
    for channel in Channel::ALL {
        let mut spectrum = channel_spectrum(traj, channel, options)?;
        spectrum.peaks = classify_peaks(&spectrum.peaks, &lines, options.tolerance);
        channels.push(ChannelSpectrum { channel, spectrum });
    }
    let modes = measure(&channels, &estimates);
    Ok(Analysis {
        fingerprint: traj.header.fingerprint.clone(),
        estimates,
        estimates_at_equator: at_equator,
        lines,
        channels,
        modes,
    })
}

/// Peaks labeled as the main line `line`.
pub fn peaks_on(peaks: &[Peak], line: Line) -> impl Iterator<Item = &Peak> {
    peaks
        .iter()
        .filter(move |p| matches!(p.label, PeakLabel::Line { line: l } if l == line))
}
