//! Physical parameters, derived constants and the twelve-dimensional phase point.
//!
//! Everything here is SI. The only unit conversion in the crate (mbar to Pa)
//! happens at the command-line boundary.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Speed of light (m/s).
pub const C_LIGHT: f64 = 299_792_458.0;
/// Unified atomic mass unit (kg).
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Mass of an N2 molecule (kg).
pub const N2_MASS: f64 = 28.0134 * AMU;
/// Kinetic radius used for N2 in the collision rate (m).
pub const N2_RADIUS: f64 = 0.18e-9;
/// Relative permittivity of fused silica near 1550 nm.
pub const SILICA_PERMITTIVITY: f64 = 2.085;
/// Density of amorphous silica (kg/m^3).
pub const SILICA_DENSITY: f64 = 2200.0;
/// 1 mbar in Pa.
pub const PA_PER_MBAR: f64 = 100.0;

const UNIT_TOL: f64 = 1e-12;

/// Dimensionless susceptibility `3 (eps - 1) / (eps + 2)` of a small sphere.
pub fn clausius_mossotti(permittivity: f64) -> f64 {
    3.0 * (permittivity - 1.0) / (permittivity + 2.0)
}

pub fn mbar_to_pa(mbar: f64) -> f64 {
    mbar * PA_PER_MBAR
}

pub fn pa_to_mbar(pa: f64) -> f64 {
    pa / PA_PER_MBAR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleProperties {
    /// kg/m^3
    pub density: f64,
    /// Effective volume (m^3).
    pub volume: f64,
    /// Effective radius (m).
    pub radius: f64,
    /// Body-frame principal moments (kg m^2).
    pub inertia: [f64; 3],
    /// Body-frame susceptibility diagonal.
    pub susceptibility: [f64; 3],
}

impl ParticleProperties {
    pub fn mass(&self) -> f64 {
        self.density * self.volume
    }

    /// Arithmetic mean of the susceptibility diagonal.
    pub fn chi0(&self) -> f64 {
        (self.susceptibility[0] + self.susceptibility[1] + self.susceptibility[2]) / 3.0
    }

    /// Homogeneous sphere with isotropic susceptibility.
    pub fn sphere(density: f64, radius: f64, susceptibility: f64) -> Self {
        let volume = 4.0 / 3.0 * PI * radius.powi(3);
        let moment = 0.4 * density * volume * radius * radius;
        ParticleProperties {
            density,
            volume,
            radius,
            inertia: [moment; 3],
            susceptibility: [susceptibility; 3],
        }
    }

    /// `count` fused equal spheres of radius `sphere_radius`.
    ///
    /// Two spheres touch along the body z'' axis; three sit on an equilateral
    /// triangle in the body x''-y'' plane. Inertia follows from the parallel-axis
    /// theorem. The susceptibility diagonal is a free input since the shape
    /// anisotropy of a compound is not fixed by its geometry alone.
    pub fn compound(
        count: u32,
        density: f64,
        sphere_radius: f64,
        susceptibility: [f64; 3],
    ) -> Result<Self> {
        let a = sphere_radius;
        let m = density * 4.0 / 3.0 * PI * a.powi(3);
        let own = 0.4 * m * a * a;
        let inertia = match count {
            1 => [own; 3],
            2 => {
                let perp = 2.0 * (own + m * a * a);
                [perp, perp, 2.0 * own]
            }
            3 => {
                // centres on a circle of radius 2a/sqrt(3); sum of squared
                // in-plane distances is 4a^2, split evenly between x'' and y''
                let in_plane = 3.0 * own + 2.0 * m * a * a;
                [in_plane, in_plane, 3.0 * own + 4.0 * m * a * a]
            }
            n => {
                return Err(Error::config(
                    "particle.compound.spheres",
                    format!("compound helper supports 1 to 3 spheres, got {n}"),
                ))
            }
        };
        let n = f64::from(count);
        Ok(ParticleProperties {
            density,
            volume: n * 4.0 / 3.0 * PI * a.powi(3),
            radius: n.cbrt() * a,
            inertia,
            susceptibility,
        })
    }

    /// `½ tr(I) − I_ζ`, the body-frame second moment of the mass distribution.
    ///
    /// Non-negative exactly when the inertia triangle inequalities hold.
    pub fn rotational_diffusion_moments(&self) -> [f64; 3] {
        let half_trace = 0.5 * (self.inertia[0] + self.inertia[1] + self.inertia[2]);
        [
            half_trace - self.inertia[0],
            half_trace - self.inertia[1],
            half_trace - self.inertia[2],
        ]
    }

    fn check(&self, out: &mut Vec<Violation>) {
        positive(out, "particle.density", self.density);
        positive(out, "particle.volume", self.volume);
        positive(out, "particle.radius", self.radius);
        for (i, &moment) in self.inertia.iter().enumerate() {
            positive(out, &format!("particle.inertia[{i}]"), moment);
        }
        for (i, &chi) in self.susceptibility.iter().enumerate() {
            if !(chi.is_finite() && chi >= 0.0) {
                out.push(Violation::new(
                    format!("particle.susceptibility[{i}]"),
                    format!("susceptibility must be finite and >= 0, got {chi}"),
                ));
            }
        }
        let [i1, i2, i3] = self.inertia;
        let slack = 1e-12 * (i1 + i2 + i3);
        for (a, b, c, name) in [
            (i1, i2, i3, "I1 + I2 >= I3"),
            (i2, i3, i1, "I2 + I3 >= I1"),
            (i1, i3, i2, "I1 + I3 >= I2"),
        ] {
            if a + b + slack < c {
                out.push(Violation::new(
                    "particle.inertia",
                    format!("inertia triangle inequality violated: {name}"),
                ));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamParameters {
    /// W
    pub power: f64,
    /// m
    pub wavelength: f64,
    /// Effective waist w0 (m).
    pub waist: f64,
    /// (a1, a2) with a1 a2 = 1.
    pub asymmetry: [f64; 2],
    /// m
    pub rayleigh_range: f64,
    /// (b_x, b_y) with b_x^2 + b_y^2 = 1.
    pub polarization: [f64; 2],
}

impl BeamParameters {
    /// Effective cross-section `π w0²`.
    pub fn cross_section(&self) -> f64 {
        PI * self.waist * self.waist
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn angular_frequency(&self) -> f64 {
        2.0 * PI * C_LIGHT / self.wavelength
    }

    /// Elliptical polarization with the given ellipticity angle (rad):
    /// `(cos θ, sin θ)`, so `θ = π/4` is circular.
    pub fn polarization_from_angle(theta: f64) -> [f64; 2] {
        [theta.cos(), theta.sin()]
    }

    /// `(a1, a2)` from the desired ratio `a2 / a1` under `a1 a2 = 1`.
    pub fn asymmetry_from_ratio(ratio: f64) -> [f64; 2] {
        let a1 = 1.0 / ratio.sqrt();
        [a1, 1.0 / a1]
    }

    fn check(&self, out: &mut Vec<Violation>) {
        positive(out, "beam.power", self.power);
        positive(out, "beam.wavelength", self.wavelength);
        positive(out, "beam.waist", self.waist);
        positive(out, "beam.rayleigh_range", self.rayleigh_range);
        let [a1, a2] = self.asymmetry;
        positive(out, "beam.asymmetry[0]", a1);
        positive(out, "beam.asymmetry[1]", a2);
        if !((a1 * a2 - 1.0).abs() <= UNIT_TOL) {
            out.push(Violation::new(
                "beam.asymmetry",
                format!("asymmetry product a1*a2 must be 1, got {}", a1 * a2),
            ));
        }
        let [bx, by] = self.polarization;
        let norm = bx * bx + by * by;
        if !((norm - 1.0).abs() <= UNIT_TOL) {
            out.push(Violation::new(
                "beam.polarization",
                format!("polarization not normalized: bx^2 + by^2 = {norm}"),
            ));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasEnvironment {
    /// Pa
    pub pressure: f64,
    /// K
    pub temperature: f64,
    /// kg; defaults to nitrogen
    #[serde(default = "default_gas_mass")]
    pub gas_mass: f64,
    /// m; defaults to nitrogen
    #[serde(default = "default_gas_radius")]
    pub gas_radius: f64,
}

fn default_gas_mass() -> f64 {
    N2_MASS
}

fn default_gas_radius() -> f64 {
    N2_RADIUS
}

impl GasEnvironment {
    /// Nitrogen at the given pressure (Pa) and temperature (K).
    pub fn nitrogen(pressure: f64, temperature: f64) -> Self {
        GasEnvironment {
            pressure,
            temperature,
            gas_mass: N2_MASS,
            gas_radius: N2_RADIUS,
        }
    }

    /// `Γ_c = π p r_g² / √(8 m_g k_B T)`.
    ///
    /// Note this depends on the gas molecule radius only, not on the size of
    /// the levitated particle.
    pub fn collision_rate(&self) -> f64 {
        PI * self.pressure * self.gas_radius * self.gas_radius
            / (8.0 * self.gas_mass * K_B * self.temperature).sqrt()
    }

    fn check(&self, out: &mut Vec<Violation>) {
        positive(out, "gas.pressure", self.pressure);
        positive(out, "gas.temperature", self.temperature);
        positive(out, "gas.gas_mass", self.gas_mass);
        positive(out, "gas.gas_radius", self.gas_radius);
    }
}

/// Point in the twelve-dimensional phase space.
///
/// Angles are z-y'-z'' Euler angles; `pi` holds their conjugate momenta.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseState {
    pub r: [f64; 3],
    pub p: [f64; 3],
    pub phi: [f64; 3],
    pub pi: [f64; 3],
}

impl PhaseState {
    pub fn at_rest(beta: f64) -> Self {
        PhaseState {
            phi: [0.0, beta, 0.0],
            ..Default::default()
        }
    }

    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[0..3].copy_from_slice(&self.r);
        out[3..6].copy_from_slice(&self.p);
        out[6..9].copy_from_slice(&self.phi);
        out[9..12].copy_from_slice(&self.pi);
        out
    }

    pub fn from_array(v: &[f64; 12]) -> Self {
        PhaseState {
            r: [v[0], v[1], v[2]],
            p: [v[3], v[4], v[5]],
            phi: [v[6], v[7], v[8]],
            pi: [v[9], v[10], v[11]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Which right-hand-side terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Toggles {
    pub gradient: bool,
    pub scattering: bool,
    pub collisions: bool,
    pub noise: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            gradient: true,
            scattering: true,
            collisions: true,
            noise: true,
        }
    }
}

impl Toggles {
    pub const CONSERVATIVE: Toggles = Toggles {
        gradient: true,
        scattering: false,
        collisions: false,
        noise: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// kg
    pub mass: f64,
    pub chi0: f64,
    /// `σ_L = π w0²` (m²)
    pub sigma_l: f64,
    /// `σ̃_R = π² V² / λ⁴` (m²)
    pub sigma_r: f64,
    /// Photon scattering rate (1/s).
    pub gamma_s: f64,
    /// Gas collision rate (1/s).
    pub gamma_c: f64,
    /// rad/s
    pub omega_l: f64,
    /// 1/m
    pub k: f64,
    /// `V P / (c σ_L)` (J), the gradient-potential energy scale.
    pub gradient_scale: f64,
}

/// Evaluates every derived constant of a configuration.
pub fn derive_constants(
    particle: &ParticleProperties,
    beam: &BeamParameters,
    gas: &GasEnvironment,
) -> Result<DerivedConstants> {
    let sigma_l = beam.cross_section();
    let sigma_r = PI * PI * particle.volume * particle.volume / beam.wavelength.powi(4);
    let omega_l = beam.angular_frequency();
    let derived = DerivedConstants {
        mass: particle.mass(),
        chi0: particle.chi0(),
        sigma_l,
        sigma_r,
        gamma_s: sigma_r / sigma_l * beam.power / (HBAR * omega_l),
        gamma_c: gas.collision_rate(),
        omega_l,
        k: beam.wavenumber(),
        gradient_scale: particle.volume * beam.power / (C_LIGHT * sigma_l),
    };
    let named = [
        ("particle.mass", derived.mass),
        ("particle.chi0", derived.chi0),
        ("beam.sigma_l", derived.sigma_l),
        ("beam.sigma_r", derived.sigma_r),
        ("beam.gamma_s", derived.gamma_s),
        ("gas.gamma_c", derived.gamma_c),
        ("beam.omega_l", derived.omega_l),
        ("beam.k", derived.k),
        ("beam.gradient_scale", derived.gradient_scale),
    ];
    for (name, value) in named {
        if !value.is_finite() {
            return Err(Error::config(name, format!("derived value is not finite ({value})")));
        }
    }
    Ok(derived)
}

/// Columns a trajectory can record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    X,
    Y,
    Z,
    Px,
    Py,
    Pz,
    Alpha,
    Beta,
    Gamma,
    PiAlpha,
    PiBeta,
    PiGamma,
}

impl Column {
    pub const ALL: [Column; 12] = [
        Column::X,
        Column::Y,
        Column::Z,
        Column::Px,
        Column::Py,
        Column::Pz,
        Column::Alpha,
        Column::Beta,
        Column::Gamma,
        Column::PiAlpha,
        Column::PiBeta,
        Column::PiGamma,
    ];

    pub fn index(self) -> usize {
        Column::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Column::X => "x",
            Column::Y => "y",
            Column::Z => "z",
            Column::Px => "px",
            Column::Py => "py",
            Column::Pz => "pz",
            Column::Alpha => "alpha",
            Column::Beta => "beta",
            Column::Gamma => "gamma",
            Column::PiAlpha => "pi_alpha",
            Column::PiBeta => "pi_beta",
            Column::PiGamma => "pi_gamma",
        }
    }

    pub fn from_name(name: &str) -> Option<Column> {
        Column::ALL.iter().copied().find(|c| c.name() == name)
    }

    pub fn value(self, state: &PhaseState) -> f64 {
        state.to_array()[self.index()]
    }
}

fn default_record() -> Vec<Column> {
    vec![
        Column::X,
        Column::Y,
        Column::Z,
        Column::Alpha,
        Column::Beta,
        Column::Gamma,
    ]
}

fn default_decimation() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub particle: ParticleProperties,
    pub beam: BeamParameters,
    pub gas: GasEnvironment,
    pub initial: PhaseState,
    /// s
    pub dt: f64,
    pub steps: u64,
    #[serde(default = "default_decimation")]
    pub decimation: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub toggles: Toggles,
    /// Use the noise-free RK4 integrator instead of Euler-Maruyama.
    #[serde(default)]
    pub deterministic: bool,
    /// Require the run to span ten cycles of the slowest predicted line.
    #[serde(default)]
    pub precession_analysis: bool,
    #[serde(default = "default_record")]
    pub record: Vec<Column>,
}

impl SimulationConfig {
    pub fn derived(&self) -> Result<DerivedConstants> {
        derive_constants(&self.particle, &self.beam, &self.gas)
    }

    pub fn recorded_len(&self) -> usize {
        self.steps.checked_div(self.decimation).unwrap_or(0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations
            .iter()
            .any(|v| v.message.contains(needle) || v.path.contains(needle))
    }

    pub fn into_result(self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(first) => Err(Error::config(
                first.path.clone(),
                self.violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            )),
        }
    }
}

fn positive(out: &mut Vec<Violation>, path: &str, value: f64) {
    if !(value.is_finite() && value > 0.0) {
        out.push(Violation::new(
            path,
            format!("must be finite and strictly positive, got {value}"),
        ));
    }
}

/// Checks every parameter invariant plus the step-size and run-length rules.
/// Never fails; an empty report means the configuration is usable.
pub fn validate_config(config: &SimulationConfig) -> ValidationReport {
    let mut out = Vec::new();
    config.particle.check(&mut out);
    config.beam.check(&mut out);
    config.gas.check(&mut out);

    let beta = config.initial.phi[1];
    if !(beta > 0.0 && beta < PI) {
        out.push(Violation::new(
            "initial.phi[1]",
            format!("beta must lie strictly inside (0, pi), got {beta}"),
        ));
    }
    if !config.initial.is_finite() {
        out.push(Violation::new("initial", "state has non-finite components"));
    }
    positive(&mut out, "dt", config.dt);
    if config.decimation == 0 {
        out.push(Violation::new("decimation", "decimation factor must be >= 1"));
    }
    if config.record.is_empty() {
        out.push(Violation::new("record", "at least one column must be recorded"));
    }

    // Step-size rules need a sane parameter set to evaluate.
    if out.is_empty() {
        match crate::estimates::frequency_scale(config) {
            Ok(scale) => {
                if config.dt * scale.f_max > 0.01 {
                    out.push(Violation::new(
                        "dt",
                        format!(
                            "dt*f_max > 0.01 (dt = {:e} s, f_max = {:e} Hz, product {:.4})",
                            config.dt,
                            scale.f_max,
                            config.dt * scale.f_max
                        ),
                    ));
                }
                if config.precession_analysis {
                    match scale.f_min {
                        Some(f_min) if config.steps as f64 * config.dt < 10.0 / f_min => {
                            out.push(Violation::new(
                                "steps",
                                format!(
                                    "run spans {:e} s, fewer than 10 cycles of the slowest line ({:e} Hz)",
                                    config.steps as f64 * config.dt,
                                    f_min
                                ),
                            ))
                        }
                        _ => {}
                    }
                }
            }
            Err(e) => out.push(Violation::new("estimates", e.to_string())),
        }
    }
    ValidationReport { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_config() -> SimulationConfig {
        SimulationConfig {
            particle: ParticleProperties::sphere(SILICA_DENSITY, 50e-9, 0.8),
            beam: BeamParameters {
                power: 0.5,
                wavelength: 1550e-9,
                waist: 1e-6,
                asymmetry: [1.0, 1.0],
                rayleigh_range: 2e-6,
                polarization: [1.0, 0.0],
            },
            gas: GasEnvironment::nitrogen(10.0, 300.0),
            initial: PhaseState::at_rest(1.0),
            dt: 1e-9,
            steps: 1000,
            decimation: 1,
            seed: 1,
            toggles: Toggles::default(),
            deterministic: false,
            precession_analysis: false,
            record: default_record(),
        }
    }

    #[test]
    fn sphere_inertia_identity() {
        let s = ParticleProperties::sphere(2200.0, 70e-9, 0.8);
        let expected = 0.4 * s.mass() * s.radius * s.radius;
        for moment in s.inertia {
            assert!(((moment - expected) / expected).abs() < 1e-12);
        }
    }

    #[test]
    fn diffusion_moments_of_sphere_are_half_the_moment() {
        let s = ParticleProperties::sphere(2200.0, 50e-9, 0.8);
        for d in s.rotational_diffusion_moments() {
            assert!((d - 0.5 * s.inertia[0]).abs() <= 1e-12 * s.inertia[0]);
        }
    }

    #[test]
    fn compound_geometry() {
        let chi = [0.8, 0.8, 0.9];
        let two = ParticleProperties::compound(2, 2200.0, 50e-9, chi).unwrap();
        let one = ParticleProperties::compound(1, 2200.0, 50e-9, chi).unwrap();
        assert!((two.volume / one.volume - 2.0).abs() < 1e-12);
        assert!((two.mass() / one.mass() - 2.0).abs() < 1e-12);
        // dumbbell: I_perp = 2(2/5 m a^2 + m a^2) = 7 * (2/5 m a^2)
        assert!((two.inertia[0] / one.inertia[0] - 7.0).abs() < 1e-12);
        assert!((two.inertia[2] / one.inertia[0] - 2.0).abs() < 1e-12);
        let three = ParticleProperties::compound(3, 2200.0, 50e-9, chi).unwrap();
        assert!(three.inertia[2] > three.inertia[0]);
        assert!(ParticleProperties::compound(4, 2200.0, 50e-9, chi).is_err());
        for p in [one, two, three] {
            let mut v = Vec::new();
            p.check(&mut v);
            assert!(v.is_empty(), "{v:?}");
        }
    }

    #[test]
    fn chi0_is_mean() {
        let mut p = ParticleProperties::sphere(2200.0, 50e-9, 0.8);
        p.susceptibility = [0.7, 0.8, 1.2];
        assert_eq!(p.chi0(), (0.7 + 0.8 + 1.2) / 3.0);
    }

    #[test]
    fn scattering_rate_linear_in_power_and_collision_rate_in_pressure() {
        let cfg = sphere_config();
        let base = cfg.derived().unwrap();
        let mut beam = cfg.beam;
        beam.power *= 2.0;
        let mut gas = cfg.gas;
        gas.pressure *= 2.0;
        let doubled = derive_constants(&cfg.particle, &beam, &gas).unwrap();
        assert_eq!(doubled.gamma_s, 2.0 * base.gamma_s);
        assert_eq!(doubled.gamma_c, 2.0 * base.gamma_c);
    }

    #[test]
    fn derive_constants_is_pure() {
        let cfg = sphere_config();
        let a = cfg.derived().unwrap();
        let b = cfg.derived().unwrap();
        assert_eq!(a.gamma_s.to_bits(), b.gamma_s.to_bits());
        assert_eq!(a.gamma_c.to_bits(), b.gamma_c.to_bits());
    }

    #[test]
    fn non_finite_derived_value_is_named() {
        let mut cfg = sphere_config();
        cfg.beam.wavelength = 0.0;
        let err = cfg.derived().unwrap_err();
        assert!(err.to_string().contains("beam."), "{err}");
    }

    #[test]
    fn polarization_normalization() {
        let mut cfg = sphere_config();
        cfg.beam.polarization = [0.8, 0.8];
        let report = validate_config(&cfg);
        assert!(report.mentions("polarization not normalized"));
    }

    #[test]
    fn asymmetric_beam_is_valid() {
        let mut cfg = sphere_config();
        cfg.beam.asymmetry = [1.1, 1.0 / 1.1];
        let report = validate_config(&cfg);
        assert!(!report.mentions("asymmetry"), "{report:?}");
    }

    #[test]
    fn violations_carry_field_paths() {
        let mut cfg = sphere_config();
        cfg.gas.temperature = -1.0;
        cfg.particle.inertia = [1e-33, 1e-33, 5e-33];
        let report = validate_config(&cfg);
        assert!(report.mentions("gas.temperature"));
        assert!(report.mentions("triangle"));
    }
}
