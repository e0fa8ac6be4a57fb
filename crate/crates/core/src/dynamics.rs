//! Right-hand side of the twelve-dimensional Itô system.
//!
//! All partial derivatives are closed-form. The free functions mirror the
//! physical terms one by one; [`ForceField`] precomputes the parameter
//! combinations and evaluates every term from a single trigonometric scratch
//! record, which is what the integrator calls in its inner loop.

use crate::error::{Error, Result};
use crate::model::{
    derive_constants, BeamParameters, DerivedConstants, GasEnvironment, ParticleProperties,
    PhaseState, Toggles, HBAR, K_B,
};
use std::f64::consts::PI;

/// Operations reject states with `|sin β|` below this value.
pub const CHART_GUARD: f64 = 1e-6;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Sines and cosines of the three Euler angles.
#[derive(Debug, Clone, Copy)]
pub struct AngleTrig {
    pub sa: f64,
    pub ca: f64,
    pub sb: f64,
    pub cb: f64,
    pub sg: f64,
    pub cg: f64,
}

impl AngleTrig {
    #[inline]
    pub fn new(phi: &Vec3) -> Self {
        let (sa, ca) = phi[0].sin_cos();
        let (sb, cb) = phi[1].sin_cos();
        let (sg, cg) = phi[2].sin_cos();
        AngleTrig {
            sa,
            ca,
            sb,
            cb,
            sg,
            cg,
        }
    }

    #[inline]
    fn checked(phi: &Vec3) -> Result<Self> {
        let t = AngleTrig::new(phi);
        if t.sb.abs() < CHART_GUARD {
            return Err(Error::ChartSingularity {
                sin_beta: t.sb.abs(),
                guard: CHART_GUARD,
            });
        }
        Ok(t)
    }
}

/// Body-to-lab rotation `R = R_z(α) R_y(β) R_z(γ)` with its angle partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    pub r: Mat3,
    /// `∂_α R`, `∂_β R`, `∂_γ R`.
    pub partials: [Mat3; 3],
}

impl RotationMatrix {
    #[inline]
    pub fn from_trig(t: &AngleTrig) -> Self {
        let AngleTrig {
            sa,
            ca,
            sb,
            cb,
            sg,
            cg,
        } = *t;
        let r = [
            [ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb],
            [sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb],
            [-sb * cg, sb * sg, cb],
        ];
        // ∂_α R = E_z R: rows (−R₁, R₀, 0)
        let d_alpha = [
            [-r[1][0], -r[1][1], -r[1][2]],
            [r[0][0], r[0][1], r[0][2]],
            [0.0, 0.0, 0.0],
        ];
        let d_beta = [
            [-ca * sb * cg, ca * sb * sg, ca * cb],
            [-sa * sb * cg, sa * sb * sg, sa * cb],
            [-cb * cg, cb * sg, -sb],
        ];
        // ∂_γ R = R E_z: columns (R_{·1}, −R_{·0}, 0)
        let d_gamma = [
            [r[0][1], -r[0][0], 0.0],
            [r[1][1], -r[1][0], 0.0],
            [r[2][1], -r[2][0], 0.0],
        ];
        RotationMatrix {
            r,
            partials: [d_alpha, d_beta, d_gamma],
        }
    }
}

pub fn rotation_matrix(phi: &Vec3) -> RotationMatrix {
    RotationMatrix::from_trig(&AngleTrig::new(phi))
}

/// `|u(r)|²` of the modified Gaussian mode.
pub fn mode_intensity(r: &Vec3, beam: &BeamParameters) -> f64 {
    mode_intensity_with_gradient(r, beam).0
}

/// `|u|²` and its spatial gradient.
#[inline]
pub fn mode_intensity_with_gradient(r: &Vec3, beam: &BeamParameters) -> (f64, Vec3) {
    let [x, y, z] = *r;
    let [a1, a2] = beam.asymmetry;
    let w0_sq = beam.waist * beam.waist;
    let zr_sq = beam.rayleigh_range * beam.rayleigh_range;
    let s = 1.0 + z * z / zr_sq;
    let e = a1 * x * x + a2 * y * y;
    let intensity = (-2.0 * e / (w0_sq * s)).exp() / s;
    let ds = 2.0 * z / zr_sq;
    let grad = [
        intensity * (-4.0 * a1 * x / (w0_sq * s)),
        intensity * (-4.0 * a2 * y / (w0_sq * s)),
        intensity * (-ds / s + 2.0 * e * ds / (w0_sq * s * s)),
    ];
    (intensity, grad)
}

/// Body-frame angular momentum `L` from the conjugate momenta.
#[inline]
fn body_momentum(t: &AngleTrig, pi: &Vec3) -> Vec3 {
    let q = (pi[0] - t.cb * pi[2]) / t.sb;
    [
        -t.cg * q + t.sg * pi[1],
        t.sg * q + t.cg * pi[1],
        pi[2],
    ]
}

/// Rotational part of the free Hamiltonian, its π-gradient (= dφ/dt) and
/// its φ-gradient.
#[inline]
fn free_rotation_terms(t: &AngleTrig, pi: &Vec3, inv_inertia: &Vec3) -> (f64, Vec3, Vec3) {
    let l = body_momentum(t, pi);
    let omega = [l[0] * inv_inertia[0], l[1] * inv_inertia[1], l[2] * inv_inertia[2]];
    let energy = 0.5 * (l[0] * omega[0] + l[1] * omega[1] + l[2] * omega[2]);
    let alpha_dot = (-t.cg * omega[0] + t.sg * omega[1]) / t.sb;
    let beta_dot = t.sg * omega[0] + t.cg * omega[1];
    let gamma_dot = omega[2] - t.cb * alpha_dot;
    let d_beta = alpha_dot * (pi[2] - pi[0] * t.cb) / t.sb;
    let d_gamma = l[0] * l[1] * (inv_inertia[0] - inv_inertia[1]);
    (energy, [alpha_dot, beta_dot, gamma_dot], [0.0, d_beta, d_gamma])
}

/// Orientation factor `b_x² χ^lab_xx + b_y² χ^lab_yy` and its angle gradient.
#[inline]
fn orientation_factor(rot: &RotationMatrix, chi: &Vec3, bx2: f64, by2: f64) -> (f64, Vec3) {
    let r = &rot.r;
    let mut value = 0.0;
    for z in 0..3 {
        value += chi[z] * (bx2 * r[0][z] * r[0][z] + by2 * r[1][z] * r[1][z]);
    }
    let mut grad = [0.0; 3];
    for (k, d) in rot.partials.iter().enumerate() {
        let mut acc = 0.0;
        for z in 0..3 {
            acc += chi[z] * (bx2 * r[0][z] * d[0][z] + by2 * r[1][z] * d[1][z]);
        }
        grad[k] = 2.0 * acc;
    }
    (value, grad)
}

/// Free Hamiltonian: translational plus rotational kinetic energy (J).
pub fn free_hamiltonian(state: &PhaseState, particle: &ParticleProperties) -> Result<f64> {
    let t = AngleTrig::checked(&state.phi)?;
    let p2 = state.p.iter().map(|v| v * v).sum::<f64>();
    let (rot, _, _) = free_rotation_terms(&t, &state.pi, &inverse(&particle.inertia));
    Ok(p2 / (2.0 * particle.mass()) + rot)
}

/// Gradient potential `−(VP/cσ_L)|u|² (b_x² χ^lab_xx + b_y² χ^lab_yy)` (J).
pub fn gradient_potential(
    state: &PhaseState,
    particle: &ParticleProperties,
    beam: &BeamParameters,
) -> f64 {
    let scale = particle.volume * beam.power / (crate::model::C_LIGHT * beam.cross_section());
    let rot = rotation_matrix(&state.phi);
    let [bx, by] = beam.polarization;
    let (g, _) = orientation_factor(&rot, &particle.susceptibility, bx * bx, by * by);
    -scale * mode_intensity(&state.r, beam) * g
}

/// `−∂_r H_grad` (N).
pub fn conservative_force(
    state: &PhaseState,
    particle: &ParticleProperties,
    beam: &BeamParameters,
) -> Vec3 {
    let scale = particle.volume * beam.power / (crate::model::C_LIGHT * beam.cross_section());
    let rot = rotation_matrix(&state.phi);
    let [bx, by] = beam.polarization;
    let (g, _) = orientation_factor(&rot, &particle.susceptibility, bx * bx, by * by);
    let (_, grad) = mode_intensity_with_gradient(&state.r, beam);
    [scale * g * grad[0], scale * g * grad[1], scale * g * grad[2]]
}

/// `dφ/dt = ∂_π H_free = Y(φ) π` (rad/s).
pub fn angular_velocity(state: &PhaseState, particle: &ParticleProperties) -> Result<Vec3> {
    let t = AngleTrig::checked(&state.phi)?;
    let (_, phi_dot, _) = free_rotation_terms(&t, &state.pi, &inverse(&particle.inertia));
    Ok(phi_dot)
}

/// Conversion matrix `Y = (Aᵀ I A)⁻¹` mapping conjugate momenta to angle rates.
pub fn conversion_matrix(beta: f64, gamma: f64, inertia: &Vec3) -> Result<Mat3> {
    let t = AngleTrig::checked(&[0.0, beta, gamma])?;
    let inv = inverse(inertia);
    let mut y = [[0.0; 3]; 3];
    for (k, row) in y.iter_mut().enumerate() {
        let mut e = [0.0; 3];
        e[k] = 1.0;
        let (_, col, _) = free_rotation_terms(&t, &e, &inv);
        for (j, v) in col.iter().enumerate() {
            row[j] = *v;
        }
    }
    // rows were filled with Y e_k (columns); Y is symmetric
    Ok(y)
}

/// `−∂_φ (H_free + H_grad)` (N m).
pub fn conservative_torque(
    state: &PhaseState,
    particle: &ParticleProperties,
    beam: &BeamParameters,
) -> Result<Vec3> {
    let t = AngleTrig::checked(&state.phi)?;
    let (_, _, free_grad) = free_rotation_terms(&t, &state.pi, &inverse(&particle.inertia));
    let grad_torque = gradient_torque(state, particle, beam);
    Ok([
        -free_grad[0] + grad_torque[0],
        -free_grad[1] + grad_torque[1],
        -free_grad[2] + grad_torque[2],
    ])
}

/// `−∂_φ H_grad` alone (N m).
pub fn gradient_torque(
    state: &PhaseState,
    particle: &ParticleProperties,
    beam: &BeamParameters,
) -> Vec3 {
    let scale = particle.volume * beam.power / (crate::model::C_LIGHT * beam.cross_section());
    let rot = rotation_matrix(&state.phi);
    let [bx, by] = beam.polarization;
    let (_, dg) = orientation_factor(&rot, &particle.susceptibility, bx * bx, by * by);
    let u2 = mode_intensity(&state.r, beam);
    [scale * u2 * dg[0], scale * u2 * dg[1], scale * u2 * dg[2]]
}

/// Radiation-pressure force along +z (N).
pub fn scattering_force(state: &PhaseState, beam: &BeamParameters, derived: &DerivedConstants) -> f64 {
    16.0 * PI * HBAR * derived.gamma_s / 3.0 * derived.k * mode_intensity(&state.r, beam)
}

/// Susceptibility combinations entering the scattering torque.
#[derive(Debug, Clone, Copy)]
struct TorqueCoefficients {
    /// `(χ₁−χ₂)(χ₁+χ₂−2χ₃)`
    split: f64,
    /// coefficient of `cos 2β` in the α torque
    cos2b: f64,
    /// constant term in the α torque
    constant: f64,
    /// `(χ₁−χ₂)²`
    diff_sq: f64,
}

impl TorqueCoefficients {
    fn new(chi: &Vec3) -> Self {
        let [c1, c2, c3] = *chi;
        TorqueCoefficients {
            split: (c1 - c2) * (c1 + c2 - 2.0 * c3),
            cos2b: c1 * c1 + 2.0 * c3 * (c1 + c2) - 4.0 * c1 * c2 + c2 * c2 - 2.0 * c3 * c3,
            constant: 3.0 * c1 * c1 - 2.0 * c3 * (c1 + c2) - 4.0 * c1 * c2
                + 3.0 * c2 * c2
                + 2.0 * c3 * c3,
            diff_sq: (c1 - c2) * (c1 - c2),
        }
    }

    /// Torque rates per unit `4π b_x b_y ħ Γ_s |u|² / 3`.
    #[inline]
    fn evaluate(&self, t: &AngleTrig) -> Vec3 {
        let s2b = t.sb * t.sb;
        let cos2b = t.cb * t.cb - s2b;
        let cos2g = t.cg * t.cg - t.sg * t.sg;
        [
            -2.0 * s2b * cos2g * self.split + cos2b * self.cos2b + self.constant,
            4.0 * t.sb * t.sg * t.cg * self.split,
            4.0 * t.cb * self.diff_sq,
        ]
    }
}

/// Photon-scattering torque rates `(dπ_α, dπ_β, dπ_γ)/dt` (N m).
pub fn scattering_torque(
    state: &PhaseState,
    particle: &ParticleProperties,
    beam: &BeamParameters,
    derived: &DerivedConstants,
) -> Vec3 {
    let t = AngleTrig::new(&state.phi);
    let [bx, by] = beam.polarization;
    let prefactor =
        4.0 * PI * bx * by * HBAR * derived.gamma_s / 3.0 * mode_intensity(&state.r, beam);
    let unit = TorqueCoefficients::new(&particle.susceptibility).evaluate(&t);
    [prefactor * unit[0], prefactor * unit[1], prefactor * unit[2]]
}

/// Gas friction rates `(−2Γ_c p, −2Γ_c π)`.
pub fn collision_drift(state: &PhaseState, gas: &GasEnvironment) -> (Vec3, Vec3) {
    let rate = -2.0 * gas.collision_rate();
    (
        state.p.map(|v| rate * v),
        state.pi.map(|v| rate * v),
    )
}

/// Collision noise increments for given Wiener increments `dv` (3) and `dz`
/// (`dz[ζ][j]`), each already distributed as N(0, dt).
pub fn collision_noise(
    state: &PhaseState,
    particle: &ParticleProperties,
    gas: &GasEnvironment,
    dv: &Vec3,
    dz: &Mat3,
) -> Result<(Vec3, Vec3)> {
    let t = AngleTrig::checked(&state.phi)?;
    let amplitudes = NoiseAmplitudes::new(particle, gas);
    let rot = RotationMatrix::from_trig(&t);
    Ok((
        dv.map(|v| amplitudes.translation * v),
        amplitudes.rotation_increment(&rot, dz),
    ))
}

/// Diffusion amplitudes of the collision noise.
#[derive(Debug, Clone, Copy)]
pub struct NoiseAmplitudes {
    /// `√(4 M k_B T Γ_c)` (kg m s^-3/2)
    pub translation: f64,
    /// `√(4 k_B T D̃_ζ Γ_c)` per body axis
    pub rotation: Vec3,
}

impl NoiseAmplitudes {
    pub fn new(particle: &ParticleProperties, gas: &GasEnvironment) -> Self {
        let gamma_c = gas.collision_rate();
        let kt = K_B * gas.temperature;
        let moments = particle.rotational_diffusion_moments();
        NoiseAmplitudes {
            translation: (4.0 * particle.mass() * kt * gamma_c).sqrt(),
            rotation: moments.map(|d| (4.0 * kt * d.max(0.0) * gamma_c).sqrt()),
        }
    }

    /// Rotational diffusion matrix `B[k][3ζ + j] = σ_ζ (∂_k R)_{j,ζ}`.
    pub fn rotation_matrix(&self, rot: &RotationMatrix) -> [[f64; 9]; 3] {
        let mut b = [[0.0; 9]; 3];
        for (k, d) in rot.partials.iter().enumerate() {
            for z in 0..3 {
                for j in 0..3 {
                    b[k][3 * z + j] = self.rotation[z] * d[j][z];
                }
            }
        }
        b
    }

    #[inline]
    pub fn rotation_increment(&self, rot: &RotationMatrix, dz: &Mat3) -> Vec3 {
        let mut out = [0.0; 3];
        for (k, d) in rot.partials.iter().enumerate() {
            let mut acc = 0.0;
            for z in 0..3 {
                let mut inner = 0.0;
                for j in 0..3 {
                    inner += d[j][z] * dz[z][j];
                }
                acc += self.rotation[z] * inner;
            }
            out[k] = acc;
        }
        out
    }
}

/// All right-hand-side pieces at one phase point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub dr: Vec3,
    pub dp_gradient: Vec3,
    pub dp_scattering: Vec3,
    pub dp_collision: Vec3,
    pub dphi: Vec3,
    /// `−∂_φ (H_free + H_grad)`
    pub dpi_conservative: Vec3,
    pub dpi_scattering: Vec3,
    pub dpi_collision: Vec3,
    pub noise_translation: f64,
    pub noise_rotation: [[f64; 9]; 3],
}

impl Derivatives {
    pub fn dp(&self) -> Vec3 {
        add3(add3(self.dp_gradient, self.dp_scattering), self.dp_collision)
    }

    pub fn dpi(&self) -> Vec3 {
        add3(add3(self.dpi_conservative, self.dpi_scattering), self.dpi_collision)
    }
}

/// Drift of the full system, split into the pieces the integrator needs.
#[derive(Debug, Clone, Copy)]
pub struct Drift {
    pub dr: Vec3,
    pub dp: Vec3,
    pub dphi: Vec3,
    pub dpi: Vec3,
    /// Scattering torque alone, for time averaging.
    pub scattering_torque: Vec3,
    pub rotation: RotationMatrix,
    pub trig: AngleTrig,
}

/// Precomputed parameters for repeated right-hand-side evaluation.
#[derive(Debug, Clone)]
pub struct ForceField {
    pub particle: ParticleProperties,
    pub beam: BeamParameters,
    pub gas: GasEnvironment,
    pub derived: DerivedConstants,
    pub toggles: Toggles,
    pub noise: NoiseAmplitudes,
    inv_mass: f64,
    inv_inertia: Vec3,
    bx2: f64,
    by2: f64,
    torque_coefficients: TorqueCoefficients,
    /// `4π b_x b_y ħ Γ_s / 3`
    torque_prefactor: f64,
    /// `16π ħ Γ_s k / 3`
    force_prefactor: f64,
    friction: f64,
}

impl ForceField {
    pub fn new(
        particle: &ParticleProperties,
        beam: &BeamParameters,
        gas: &GasEnvironment,
        toggles: Toggles,
    ) -> Result<Self> {
        let derived = derive_constants(particle, beam, gas)?;
        let [bx, by] = beam.polarization;
        Ok(ForceField {
            particle: *particle,
            beam: *beam,
            gas: *gas,
            toggles,
            noise: NoiseAmplitudes::new(particle, gas),
            inv_mass: 1.0 / derived.mass,
            inv_inertia: inverse(&particle.inertia),
            bx2: bx * bx,
            by2: by * by,
            torque_coefficients: TorqueCoefficients::new(&particle.susceptibility),
            torque_prefactor: 4.0 * PI * bx * by * HBAR * derived.gamma_s / 3.0,
            force_prefactor: 16.0 * PI * HBAR * derived.gamma_s * derived.k / 3.0,
            friction: 2.0 * derived.gamma_c,
            derived,
        })
    }

    pub fn inverse_inertia(&self) -> Vec3 {
        self.inv_inertia
    }

    /// `dφ/dt = Y(φ) π` reusing the trigonometry of an earlier evaluation.
    #[inline]
    pub fn angle_rates(&self, t: &AngleTrig, pi: &Vec3) -> Vec3 {
        free_rotation_terms(t, pi, &self.inv_inertia).1
    }

    /// Total energy `H_free + H_grad` (gradient term only when toggled on).
    pub fn energy(&self, state: &PhaseState) -> Result<f64> {
        let t = AngleTrig::checked(&state.phi)?;
        let p2 = state.p.iter().map(|v| v * v).sum::<f64>();
        let (rot, _, _) = free_rotation_terms(&t, &state.pi, &self.inv_inertia);
        let mut h = 0.5 * p2 * self.inv_mass + rot;
        if self.toggles.gradient {
            let rm = RotationMatrix::from_trig(&t);
            let (g, _) = orientation_factor(&rm, &self.particle.susceptibility, self.bx2, self.by2);
            h -= self.derived.gradient_scale * mode_intensity(&state.r, &self.beam) * g;
        }
        Ok(h)
    }

    /// Scattering torque rates at a state (ignores toggles).
    #[inline]
    pub fn scattering_torque_at(&self, t: &AngleTrig, intensity: f64) -> Vec3 {
        let unit = self.torque_coefficients.evaluate(t);
        let pre = self.torque_prefactor * intensity;
        [pre * unit[0], pre * unit[1], pre * unit[2]]
    }

    /// Deterministic drift of the active terms.
    #[inline]
    pub fn drift(&self, state: &PhaseState) -> Result<Drift> {
        let t = AngleTrig::checked(&state.phi)?;
        let rot = RotationMatrix::from_trig(&t);
        let (_, phi_dot, free_grad) = free_rotation_terms(&t, &state.pi, &self.inv_inertia);
        let dr = state.p.map(|v| v * self.inv_mass);
        let mut dp = [0.0; 3];
        let mut dpi = [-free_grad[0], -free_grad[1], -free_grad[2]];
        let mut scattering = [0.0; 3];

        let tog = self.toggles;
        if tog.gradient || tog.scattering {
            let (intensity, grad_u) = mode_intensity_with_gradient(&state.r, &self.beam);
            if tog.gradient {
                let (g, dg) =
                    orientation_factor(&rot, &self.particle.susceptibility, self.bx2, self.by2);
                let f = self.derived.gradient_scale * g;
                let tq = self.derived.gradient_scale * intensity;
                for i in 0..3 {
                    dp[i] += f * grad_u[i];
                    dpi[i] += tq * dg[i];
                }
            }
            if tog.scattering {
                dp[2] += self.force_prefactor * intensity;
                scattering = self.scattering_torque_at(&t, intensity);
                for i in 0..3 {
                    dpi[i] += scattering[i];
                }
            }
        }
        if tog.collisions {
            for i in 0..3 {
                dp[i] -= self.friction * state.p[i];
                dpi[i] -= self.friction * state.pi[i];
            }
        }
        Ok(Drift {
            dr,
            dp,
            dphi: phi_dot,
            dpi,
            scattering_torque: scattering,
            rotation: rot,
            trig: t,
        })
    }

    /// Every term separately, regardless of toggles.
    pub fn derivatives(&self, state: &PhaseState) -> Result<Derivatives> {
        let t = AngleTrig::checked(&state.phi)?;
        let rot = RotationMatrix::from_trig(&t);
        let (_, phi_dot, free_grad) = free_rotation_terms(&t, &state.pi, &self.inv_inertia);
        let (intensity, grad_u) = mode_intensity_with_gradient(&state.r, &self.beam);
        let (g, dg) = orientation_factor(&rot, &self.particle.susceptibility, self.bx2, self.by2);
        let scale = self.derived.gradient_scale;
        Ok(Derivatives {
            dr: state.p.map(|v| v * self.inv_mass),
            dp_gradient: grad_u.map(|v| scale * g * v),
            dp_scattering: [0.0, 0.0, self.force_prefactor * intensity],
            dp_collision: state.p.map(|v| -self.friction * v),
            dphi: phi_dot,
            dpi_conservative: [
                -free_grad[0] + scale * intensity * dg[0],
                -free_grad[1] + scale * intensity * dg[1],
                -free_grad[2] + scale * intensity * dg[2],
            ],
            dpi_scattering: self.scattering_torque_at(&t, intensity),
            dpi_collision: state.pi.map(|v| -self.friction * v),
            noise_translation: self.noise.translation,
            noise_rotation: self.noise.rotation_matrix(&rot),
        })
    }
}

#[inline]
fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn inverse(v: &Vec3) -> Vec3 {
    [1.0 / v[0], 1.0 / v[1], 1.0 / v[2]]
}
