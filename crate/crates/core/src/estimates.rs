//! Closed-form estimates: trap frequencies, averaged scattering torque,
//! asymptotic spin, nutation, precession, tilt equilibrium, torque inference
//! and recoil heating rates.
//!
//! Angular frequencies are in rad/s throughout; conversion to Hz happens only
//! where a function name says so.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dynamics::{angular_velocity, conversion_matrix, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::model::{
    derive_constants, BeamParameters, DerivedConstants, GasEnvironment, ParticleProperties,
    SimulationConfig, C_LIGHT, HBAR, K_B,
};

/// Quadrature points for the fast-phase average over γ.
pub const AVERAGE_POINTS: usize = 256;
/// Damping of the tilt fixed-point iteration.
pub const BETA_DAMPING: f64 = 0.5;
pub const BETA_TOLERANCE: f64 = 1e-9;
pub const BETA_MAX_ITERATIONS: usize = 1000;

/// Resolvable spin-frequency shift per unit bandwidth (rad/s/√Hz) used as the
/// default for [`torque_sensitivity`]. Back-computed from the quoted
/// shot-noise-limited sensitivity of a two-sphere 50 nm silica compound at
/// 1e-7 mbar with `sin²β₀ = 1`; no independent detection model stands behind it.
pub const DELTA_OMEGA_PRESET: f64 = 861.0;

/// Susceptibility combinations of the scattering torque (unit prefactor).
#[derive(Debug, Clone, Copy)]
struct TorqueTerms {
    cos2b: f64,
    constant: f64,
    diff_sq: f64,
}

impl TorqueTerms {
    fn new(chi: &Vec3) -> Self {
        let [c1, c2, c3] = *chi;
        TorqueTerms {
            cos2b: c1 * c1 + 2.0 * c3 * (c1 + c2) - 4.0 * c1 * c2 + c2 * c2 - 2.0 * c3 * c3,
            constant: 3.0 * c1 * c1 - 2.0 * c3 * (c1 + c2) - 4.0 * c1 * c2
                + 3.0 * c2 * c2
                + 2.0 * c3 * c3,
            diff_sq: (c1 - c2) * (c1 - c2),
        }
    }

    /// γ-averaged α bracket at tilt β.
    fn alpha_bracket(&self, beta: f64) -> f64 {
        (2.0 * beta).cos() * self.cos2b + self.constant
    }
}

/// `4π b_x b_y ħ Γ_s / 3` (N m), the scattering-torque prefactor at `|u|² = 1`.
fn torque_prefactor(beam: &BeamParameters, derived: &DerivedConstants) -> f64 {
    let [bx, by] = beam.polarization;
    4.0 * PI * bx * by * HBAR * derived.gamma_s / 3.0
}

/// Trap frequencies `(ω_x, ω_y, ω_z)` from the curvature of the gradient
/// potential at the focus for the effective susceptibility χ₀.
pub fn translation_frequencies(particle: &ParticleProperties, beam: &BeamParameters) -> Vec3 {
    let chi0 = particle.chi0();
    let scale = beam.power * chi0 / (C_LIGHT * beam.cross_section() * particle.density);
    let w2 = beam.waist * beam.waist;
    let [a1, a2] = beam.asymmetry;
    [
        (4.0 * a1 * scale / w2).sqrt(),
        (4.0 * a2 * scale / w2).sqrt(),
        (2.0 * scale / (beam.rayleigh_range * beam.rayleigh_range)).sqrt(),
    ]
}

/// Scattering torque averaged over the fast α, γ phases at tilt `beta0`, with
/// the particle at the focus.
pub fn scattering_torque_average(
    particle: &ParticleProperties,
    beam: &BeamParameters,
    derived: &DerivedConstants,
    beta0: f64,
) -> Vec3 {
    let pre = torque_prefactor(beam, derived);
    let terms = TorqueTerms::new(&particle.susceptibility);
    [
        pre * terms.alpha_bracket(beta0),
        0.0,
        pre * 4.0 * beta0.cos() * terms.diff_sq,
    ]
}

/// Average of the conversion matrix `Y` over γ at fixed β (trapezoid rule).
pub fn conversion_average(particle: &ParticleProperties, beta: f64) -> Result<Mat3> {
    let mut acc = [[0.0; 3]; 3];
    for k in 0..AVERAGE_POINTS {
        let gamma = 2.0 * PI * k as f64 / AVERAGE_POINTS as f64;
        let y = conversion_matrix(beta, gamma, &particle.inertia)?;
        for i in 0..3 {
            for j in 0..3 {
                acc[i][j] += y[i][j];
            }
        }
    }
    let n = AVERAGE_POINTS as f64;
    Ok(acc.map(|row| row.map(|v| v / n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinState {
    /// Asymptotic conjugate momenta (kg m²/s).
    pub pi: Vec3,
    /// rad/s
    pub omega_alpha: f64,
    /// rad/s
    pub omega_gamma: f64,
    /// Averaged torque the momenta balance (N m).
    pub torque: Vec3,
}

/// Torque–friction balance `π = N_s / 2Γ_c` and the averaged angle rates
/// `E[Y] π` at tilt `beta0`.
pub fn spin_state(
    particle: &ParticleProperties,
    beam: &BeamParameters,
    gas: &GasEnvironment,
    beta0: f64,
) -> Result<SpinState> {
    let derived = derive_constants(particle, beam, gas)?;
    let torque = scattering_torque_average(particle, beam, &derived, beta0);
    let pi = torque.map(|n| n / (2.0 * derived.gamma_c));
    let y = conversion_average(particle, beta0)?;
    let rate = |row: usize| y[row][0] * pi[0] + y[row][1] * pi[1] + y[row][2] * pi[2];
    Ok(SpinState {
        pi,
        omega_alpha: rate(0),
        omega_gamma: rate(2),
        torque,
    })
}

/// `2χ₃ − χ₁ − χ₂`, positive for a particle elongated along body z''.
pub fn elongation(particle: &ParticleProperties) -> f64 {
    let [c1, c2, c3] = particle.susceptibility;
    2.0 * c3 - c1 - c2
}

/// Tilt `β₀(π_α)` for a given α momentum: `cos β₀ = q^{1/4}` with
/// `q = (I₁+I₂) π c w₀² π_α² / (I₁ I₂ P V (2χ₃−χ₁−χ₂))`, so that a
/// non-spinning particle lies at `π/2`.
pub fn beta_for_momentum(
    particle: &ParticleProperties,
    beam: &BeamParameters,
    pi_alpha: f64,
) -> Result<f64> {
    let kappa = elongation(particle);
    if !(kappa > 0.0) {
        return Err(Error::Domain {
            equation: "beta equilibrium",
            reason: format!("2*chi3 - chi1 - chi2 must be positive, got {kappa:e}"),
        });
    }
    if !(beam.power > 0.0) {
        return Err(Error::Domain {
            equation: "beta equilibrium",
            reason: "needs a positive beam power".into(),
        });
    }
    let [i1, i2, _] = particle.inertia;
    let q = (i1 + i2) * PI * C_LIGHT * beam.waist * beam.waist * pi_alpha * pi_alpha
        / (i1 * i2 * beam.power * particle.volume * kappa);
    let root = q.sqrt().sqrt();
    if !(root <= 1.0) {
        return Err(Error::Domain {
            equation: "beta equilibrium",
            reason: format!("fourth-root argument {q:e} exceeds 1"),
        });
    }
    Ok(root.acos())
}

/// Self-consistent tilt: `β₀` depends on `π_α`, which depends on `β₀` through
/// the averaged torque. Damped fixed-point iteration from `π/2`.
pub fn beta_equilibrium(
    particle: &ParticleProperties,
    beam: &BeamParameters,
    gas: &GasEnvironment,
) -> Result<f64> {
    let derived = derive_constants(particle, beam, gas)?;
    let mut beta = 0.5 * PI;
    let mut previous = beta;
    for _ in 0..BETA_MAX_ITERATIONS {
        let torque = scattering_torque_average(particle, beam, &derived, beta);
        let target = beta_for_momentum(particle, beam, torque[0] / (2.0 * derived.gamma_c))?;
        previous = beta;
        beta += BETA_DAMPING * (target - beta);
        if (beta - previous).abs() < BETA_TOLERANCE {
            return Ok(beta);
        }
    }
    Err(Error::NoConvergence {
        iterations: BETA_MAX_ITERATIONS,
        last: [previous, beta],
    })
}

/// Nutation of β about `β₀`: `½ (I₁+I₂)/(I₁I₂) csc²β₀ π_α`.
pub fn nutation_frequency(particle: &ParticleProperties, beta0: f64, pi_alpha: f64) -> f64 {
    let [i1, i2, _] = particle.inertia;
    let s = beta0.sin();
    0.5 * (i1 + i2) / (i1 * i2) * pi_alpha / (s * s)
}

/// The nutation frequency written directly in the beam and gas parameters.
pub fn nutation_closed_form(
    particle: &ParticleProperties,
    beam: &BeamParameters,
    gas: &GasEnvironment,
    beta0: f64,
) -> Result<f64> {
    let derived = derive_constants(particle, beam, gas)?;
    let [i1, i2, _] = particle.inertia;
    let [bx, by] = beam.polarization;
    let terms = TorqueTerms::new(&particle.susceptibility);
    let s = beta0.sin();
    Ok(0.5 * (i1 + i2) / (i1 * i2) / (s * s) * 2.0 * PI * bx * by * HBAR / 3.0
        * derived.gamma_s
        / derived.gamma_c
        * terms.alpha_bracket(beta0))
}

/// Dominant-term closed forms `(ω_α, ω_γ)` for the spin, transcribed term by
/// term. The γ bracket is read as a sum of two terms (the only dimensionally
/// consistent grouping). Both carry the opposite overall sign to `E[Y] π`;
/// compare magnitudes.
pub fn spin_closed_forms(
    particle: &ParticleProperties,
    beam: &BeamParameters,
    gas: &GasEnvironment,
    beta0: f64,
) -> Result<(f64, f64)> {
    let derived = derive_constants(particle, beam, gas)?;
    let [i1, i2, i3] = particle.inertia;
    let [bx, by] = beam.polarization;
    let [c1, c2, _] = particle.susceptibility;
    let terms = TorqueTerms::new(&particle.susceptibility);
    let diff_sq = (c1 - c2) * (c1 - c2);
    let (s, c) = beta0.sin_cos();
    let bracket = terms.alpha_bracket(beta0);
    let pre = 2.0 * bx * by * PI * HBAR / (0.75 * (i1 + i2) * (i1 + i2) * i3) * derived.gamma_s
        / derived.gamma_c;
    let alpha = pre / (s * s)
        * (0.5 * (i1 + i2) * i1 * diff_sq * c * c - 0.5 * (i1 + i2) * i3 * bracket);
    let gamma = pre * c / (s * s)
        * (-0.5 * ((i1 + i2) * i3 * c * c + 0.5 * (i1 + i2) * (i1 + i2) * s * s) * diff_sq
            + 0.5 * (i1 + i2) * i3 * bracket);
    Ok((alpha, gamma))
}

/// Signed difference between α spin and β nutation.
pub fn precession_frequency(omega_alpha_spin: f64, omega_beta_nutation: f64) -> f64 {
    omega_alpha_spin - omega_beta_nutation
}

/// `𝒥 = 2 I₁ I₂ (I₁+I₂) / (I₁² + I₂²)`.
pub fn effective_inertia(i1: f64, i2: f64) -> f64 {
    2.0 * i1 * i2 * (i1 + i2) / (i1 * i1 + i2 * i2)
}

/// Scattering torque inferred from a precession frequency:
/// `N_α = Γ_c sin²β₀ 𝒥 ω_prec`.
pub fn torque_from_precession(gamma_c: f64, beta0: f64, i1: f64, i2: f64, omega: f64) -> f64 {
    let s = beta0.sin();
    gamma_c * s * s * effective_inertia(i1, i2) * omega
}

/// Torque resolvable per √Hz: `Γ_c sin²β₀ 𝒥 δω`.
pub fn torque_sensitivity(gamma_c: f64, beta0: f64, effective_inertia: f64, delta_omega: f64) -> f64 {
    let s = beta0.sin();
    gamma_c * s * s * effective_inertia * delta_omega
}

/// Momentum-variance growth rates from gas collisions and photon recoil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoilRates {
    /// (kg m/s)²/s
    pub trans_gas: f64,
    pub trans_photon: f64,
    /// (kg m²/s)²/s
    pub rot_gas: f64,
    pub rot_photon: f64,
    /// gas / photon; infinite when the beam is off
    pub trans_ratio: f64,
    pub rot_ratio: f64,
}

pub fn recoil_heating_rates(
    particle: &ParticleProperties,
    beam: &BeamParameters,
    gas: &GasEnvironment,
) -> Result<RecoilRates> {
    let derived = derive_constants(particle, beam, gas)?;
    let kt = K_B * gas.temperature;
    let trans_gas = 4.0 * kt * derived.mass * derived.gamma_c;
    let trans_photon = derived.gamma_s * HBAR * HBAR * derived.k * derived.k;
    let rot_gas = 0.8 * kt * derived.mass * particle.radius * particle.radius * derived.gamma_c;
    let rot_photon = derived.gamma_s * HBAR * HBAR;
    let ratio = |gas_rate: f64, photon: f64| {
        if photon > 0.0 {
            gas_rate / photon
        } else {
            f64::INFINITY
        }
    };
    Ok(RecoilRates {
        trans_gas,
        trans_photon,
        rot_gas,
        rot_photon,
        trans_ratio: ratio(trans_gas, trans_photon),
        rot_ratio: ratio(rot_gas, rot_photon),
    })
}

/// Pressure (Pa) at which translational gas and photon heating are equal.
pub fn crossover_pressure(
    particle: &ParticleProperties,
    beam: &BeamParameters,
    gas: &GasEnvironment,
) -> Result<f64> {
    let rates = recoil_heating_rates(particle, beam, gas)?;
    Ok(gas.pressure / rates.trans_ratio)
}

/// Every closed-form estimate for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimates {
    pub omega_x: f64,
    pub omega_y: f64,
    pub omega_z: f64,
    pub omega_alpha_spin: f64,
    pub omega_gamma_spin: f64,
    pub omega_beta_nutation: f64,
    /// Signed `ω_α − ω_β`.
    pub omega_alpha_precession: f64,
    pub precession_magnitude: f64,
    /// Orientational libration scale of the gradient potential (rad/s).
    pub omega_libration: f64,
    pub beta0: f64,
    pub pi_spin: Vec3,
    pub torque: Vec3,
    pub effective_inertia: f64,
}

impl FrequencyEstimates {
    /// Field name, value and unit for tabular output.
    pub fn rows(&self) -> Vec<(&'static str, f64, &'static str)> {
        vec![
            ("omega_x", self.omega_x, "rad/s"),
            ("omega_y", self.omega_y, "rad/s"),
            ("omega_z", self.omega_z, "rad/s"),
            ("omega_alpha_spin", self.omega_alpha_spin, "rad/s"),
            ("omega_gamma_spin", self.omega_gamma_spin, "rad/s"),
            ("omega_beta_nutation", self.omega_beta_nutation, "rad/s"),
            ("omega_alpha_precession", self.omega_alpha_precession, "rad/s"),
            ("precession_magnitude", self.precession_magnitude, "rad/s"),
            ("omega_libration", self.omega_libration, "rad/s"),
            ("beta0", self.beta0, "rad"),
            ("pi_spin_alpha", self.pi_spin[0], "kg m^2/s"),
            ("pi_spin_beta", self.pi_spin[1], "kg m^2/s"),
            ("pi_spin_gamma", self.pi_spin[2], "kg m^2/s"),
            ("torque_alpha", self.torque[0], "N m"),
            ("torque_beta", self.torque[1], "N m"),
            ("torque_gamma", self.torque[2], "N m"),
            ("effective_inertia", self.effective_inertia, "kg m^2"),
        ]
    }
}

/// `√(2 K max|χᵢ−χⱼ| / min Iᵢ)` with `K = V P / (c σ_L)`.
pub fn libration_frequency(particle: &ParticleProperties, beam: &BeamParameters) -> f64 {
    let [c1, c2, c3] = particle.susceptibility;
    let spread = (c1 - c2).abs().max((c2 - c3).abs()).max((c1 - c3).abs());
    let k = particle.volume * beam.power / (C_LIGHT * beam.cross_section());
    let min_inertia = particle.inertia.iter().cloned().fold(f64::INFINITY, f64::min);
    (2.0 * k * spread / min_inertia).sqrt()
}

/// Full estimate set at the self-consistent tilt.
pub fn estimate_at(
    particle: &ParticleProperties,
    beam: &BeamParameters,
    gas: &GasEnvironment,
    beta0: f64,
) -> Result<FrequencyEstimates> {
    let [wx, wy, wz] = translation_frequencies(particle, beam);
    let spin = spin_state(particle, beam, gas, beta0)?;
    let nutation = nutation_frequency(particle, beta0, spin.pi[0]);
    let precession = precession_frequency(spin.omega_alpha, nutation);
    Ok(FrequencyEstimates {
        omega_x: wx,
        omega_y: wy,
        omega_z: wz,
        omega_alpha_spin: spin.omega_alpha,
        omega_gamma_spin: spin.omega_gamma,
        omega_beta_nutation: nutation,
        omega_alpha_precession: precession,
        precession_magnitude: precession.abs(),
        omega_libration: libration_frequency(particle, beam),
        beta0,
        pi_spin: spin.pi,
        torque: spin.torque,
        effective_inertia: effective_inertia(particle.inertia[0], particle.inertia[1]),
    })
}

pub fn estimate_frequencies(
    particle: &ParticleProperties,
    beam: &BeamParameters,
    gas: &GasEnvironment,
) -> Result<FrequencyEstimates> {
    let beta0 = beta_equilibrium(particle, beam, gas)?;
    estimate_at(particle, beam, gas, beta0)
}

/// Fastest and slowest frequencies (Hz) a run must resolve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyScale {
    pub f_max: f64,
    /// Slowest predicted line (precession), if any.
    pub f_min: Option<f64>,
}

/// Step-size scale of a configuration: the largest of the closed-form lines,
/// the libration scale, the initial angle rates and the friction rate.
///
/// When the tilt equilibrium has no solution the spin lines are evaluated at
/// `π/2` instead, so that step-size checks still work.
pub fn frequency_scale(config: &SimulationConfig) -> Result<FrequencyScale> {
    let (particle, beam, gas) = (&config.particle, &config.beam, &config.gas);
    let derived = derive_constants(particle, beam, gas)?;
    let estimates = match estimate_frequencies(particle, beam, gas) {
        Ok(e) => e,
        Err(Error::Domain { .. }) | Err(Error::NoConvergence { .. }) => {
            estimate_at(particle, beam, gas, 0.5 * PI)?
        }
        Err(e) => return Err(e),
    };
    let mut omega_max = [
        estimates.omega_x,
        estimates.omega_y,
        estimates.omega_z,
        estimates.omega_alpha_spin.abs(),
        estimates.omega_gamma_spin.abs(),
        estimates.omega_beta_nutation.abs(),
        estimates.omega_libration,
        2.0 * derived.gamma_c,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if let Ok(rates) = angular_velocity(&config.initial, particle) {
        for r in rates {
            omega_max = omega_max.max(r.abs());
        }
    }
    let f_min = (estimates.precession_magnitude > 0.0)
        .then(|| estimates.precession_magnitude / (2.0 * PI));
    Ok(FrequencyScale {
        f_max: omega_max / (2.0 * PI),
        f_min,
    })
}
