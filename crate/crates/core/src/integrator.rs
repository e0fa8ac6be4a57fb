//! Time stepping: Euler-Maruyama in Itô form for the stochastic system and a
//! classical RK4 for noise-free conservation checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use crate::dynamics::{AngleTrig, ForceField};
use crate::error::{Error, Result};
use crate::model::{validate_config, Column, PhaseState, SimulationConfig};

/// Width of the reflecting band kept clear of the Euler poles (rad).
pub const BETA_GUARD_BAND: f64 = 1e-3;
/// Fraction of reflected steps above which a run is flagged unreliable.
pub const UNRELIABLE_REFLECTION_FRACTION: f64 = 1e-4;

const MAGIC: &[u8; 8] = b"LEVITRJ1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub chart_reflections: u64,
    pub nan_aborts: u64,
}

/// Running means accumulated over every integration step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunAverages {
    pub samples: u64,
    /// Mean photon-scattering torque `(N_α, N_β, N_γ)` (N m).
    pub scattering_torque: [f64; 3],
    pub pi: [f64; 3],
    pub beta: f64,
    /// `⟨p_i²⟩ / 2M` per lab axis (J).
    pub translational_energy: [f64; 3],
    /// `⟨L_ζ²⟩ / 2I_ζ` per body axis (J).
    pub rotational_energy: [f64; 3],
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    n: u64,
    torque: [f64; 3],
    pi: [f64; 3],
    beta: f64,
    trans: [f64; 3],
    rot: [f64; 3],
}

impl Accumulator {
    #[inline]
    fn add(&mut self, state: &PhaseState, torque: &[f64; 3], inv_mass: f64, inv_inertia: &[f64; 3]) {
        self.n += 1;
        let t = AngleTrig::new(&state.phi);
        let q = (state.pi[0] - t.cb * state.pi[2]) / t.sb;
        let l = [
            -t.cg * q + t.sg * state.pi[1],
            t.sg * q + t.cg * state.pi[1],
            state.pi[2],
        ];
        for i in 0..3 {
            self.torque[i] += torque[i];
            self.pi[i] += state.pi[i];
            self.trans[i] += 0.5 * state.p[i] * state.p[i] * inv_mass;
            self.rot[i] += 0.5 * l[i] * l[i] * inv_inertia[i];
        }
        self.beta += state.phi[1];
    }

    fn finish(&self) -> RunAverages {
        if self.n == 0 {
            return RunAverages::default();
        }
        let n = self.n as f64;
        RunAverages {
            samples: self.n,
            scattering_torque: self.torque.map(|v| v / n),
            pi: self.pi.map(|v| v / n),
            beta: self.beta / n,
            translational_energy: self.trans.map(|v| v / n),
            rotational_energy: self.rot.map(|v| v / n),
        }
    }
}

/// Stepper owning the force field, the step size and one RNG stream.
pub struct Integrator {
    pub field: ForceField,
    dt: f64,
    sqrt_dt: f64,
    rng: ChaCha8Rng,
    pub events: EventCounters,
    steps_taken: u64,
    last_torque: [f64; 3],
}

impl Integrator {
    pub fn new(config: &SimulationConfig) -> Result<Self> {
        let field = ForceField::new(&config.particle, &config.beam, &config.gas, config.toggles)?;
        Ok(Integrator {
            field,
            dt: config.dt,
            sqrt_dt: config.dt.sqrt(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            events: EventCounters::default(),
            steps_taken: 0,
            last_torque: [0.0; 3],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Word position of the RNG stream, for continuing it downstream.
    pub fn rng_word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// One Euler-Maruyama step in Itô convention.
    ///
    /// Momenta are advanced first (drift and noise from the state at the
    /// start of the step); coordinates then move with the updated momenta.
    /// This semi-implicit ordering keeps the weak order and the Itô reading
    /// of the multiplicative rotational noise, whose coefficient depends on
    /// the angles only, but stays bounded on undamped oscillations where the
    /// fully explicit update gains energy every step.
    #[inline]
    pub fn step(&mut self, state: &mut PhaseState) -> Result<()> {
        let drift = self.field.drift(state).map_err(|e| self.abort_on(e, state))?;
        let dt = self.dt;
        self.last_torque = drift.scattering_torque;
        for i in 0..3 {
            state.p[i] += drift.dp[i] * dt;
            state.pi[i] += drift.dpi[i] * dt;
        }
        if self.field.toggles.noise {
            let sdt = self.sqrt_dt;
            let amp = self.field.noise.translation * sdt;
            for i in 0..3 {
                let xi: f64 = self.rng.sample(StandardNormal);
                state.p[i] += amp * xi;
            }
            let mut dz = [[0.0; 3]; 3];
            for row in dz.iter_mut() {
                for v in row.iter_mut() {
                    let xi: f64 = self.rng.sample(StandardNormal);
                    *v = xi * sdt;
                }
            }
            let dpi = self.field.noise.rotation_increment(&drift.rotation, &dz);
            for i in 0..3 {
                state.pi[i] += dpi[i];
            }
        }
        let inv_mass = self.field.derived.mass.recip();
        let dphi = self.field.angle_rates(&drift.trig, &state.pi);
        for i in 0..3 {
            state.r[i] += state.p[i] * inv_mass * dt;
            state.phi[i] += dphi[i] * dt;
        }
        self.finish_step(state)
    }

    /// One classical RK4 step of the deterministic drift (noise ignored).
    pub fn step_deterministic_rk4(&mut self, state: &mut PhaseState) -> Result<()> {
        let next = rk4(&self.field, state, self.dt).map_err(|e| self.abort_on(e, state))?;
        *state = next;
        self.last_torque = self
            .field
            .drift(state)
            .map(|d| d.scattering_torque)
            .unwrap_or([0.0; 3]);
        self.finish_step(state)
    }

    #[inline]
    fn finish_step(&mut self, state: &mut PhaseState) -> Result<()> {
        self.steps_taken += 1;
        let beta = state.phi[1];
        if !(BETA_GUARD_BAND..=PI - BETA_GUARD_BAND).contains(&beta) && beta.is_finite() {
            // fold back into the band
            let lo = BETA_GUARD_BAND;
            let width = PI - 2.0 * BETA_GUARD_BAND;
            let u = (beta - lo).rem_euclid(2.0 * width);
            // triangle wave: the descending half reverses the beta velocity
            if u <= width {
                state.phi[1] = lo + u;
            } else {
                state.phi[1] = lo + 2.0 * width - u;
                state.pi[1] = -state.pi[1];
            }
            self.events.chart_reflections += 1;
        }
        state.phi[0] = wrap_angle(state.phi[0]);
        state.phi[2] = wrap_angle(state.phi[2]);
        if !state.is_finite() {
            self.events.nan_aborts += 1;
            return Err(Error::NonFinite {
                step: self.steps_taken,
                snapshot: Box::new(*state),
            });
        }
        Ok(())
    }

    fn abort_on(&mut self, err: Error, state: &PhaseState) -> Error {
        match err {
            Error::ChartSingularity { .. } if !state.is_finite() => {
                self.events.nan_aborts += 1;
                Error::NonFinite {
                    step: self.steps_taken,
                    snapshot: Box::new(*state),
                }
            }
            other => other,
        }
    }
}

#[inline]
fn wrap_angle(a: f64) -> f64 {
    if a > PI || a <= -PI {
        a - 2.0 * PI * ((a + PI) / (2.0 * PI)).floor()
    } else {
        a
    }
}

fn axpy(state: &PhaseState, k: &[f64; 12], h: f64) -> PhaseState {
    let mut v = state.to_array();
    for (x, d) in v.iter_mut().zip(k) {
        *x += h * d;
    }
    PhaseState::from_array(&v)
}

fn drift_vector(field: &ForceField, state: &PhaseState) -> Result<[f64; 12]> {
    let d = field.drift(state)?;
    let mut out = [0.0; 12];
    out[0..3].copy_from_slice(&d.dr);
    out[3..6].copy_from_slice(&d.dp);
    out[6..9].copy_from_slice(&d.dphi);
    out[9..12].copy_from_slice(&d.dpi);
    Ok(out)
}

/// Classical fourth-order Runge-Kutta step of the deterministic vector field.
pub fn rk4(field: &ForceField, state: &PhaseState, dt: f64) -> Result<PhaseState> {
    let k1 = drift_vector(field, state)?;
    let k2 = drift_vector(field, &axpy(state, &k1, 0.5 * dt))?;
    let k3 = drift_vector(field, &axpy(state, &k2, 0.5 * dt))?;
    let k4 = drift_vector(field, &axpy(state, &k3, dt))?;
    let mut v = state.to_array();
    for i in 0..12 {
        v[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(PhaseState::from_array(&v))
}

/// Stable hash of a configuration (seed included).
pub fn config_fingerprint(config: &SimulationConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// Deterministic trajectory header: everything except wall-clock figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub columns: Vec<Column>,
    pub sample_interval: f64,
    pub samples: usize,
    pub fingerprint: String,
    pub config: SimulationConfig,
    pub events: EventCounters,
    pub averages: RunAverages,
    pub steps_taken: u64,
    pub unreliable: bool,
    /// RNG word position after the last step, as a decimal string.
    pub rng_word_pos: String,
}

/// Wall-clock figures, kept out of the byte-reproducible container.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub wall_seconds: f64,
    pub steps_per_second: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    /// One series per recorded column.
    pub data: Vec<Vec<f64>>,
    pub timing: RunTiming,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.header.samples
    }

    pub fn is_empty(&self) -> bool {
        self.header.samples == 0
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.header.sample_interval
    }

    pub fn column(&self, column: Column) -> Option<&[f64]> {
        self.header
            .columns
            .iter()
            .position(|&c| c == column)
            .map(|i| self.data[i].as_slice())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for series in &self.data {
            for v in series {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Trajectory> {
        let fmt = |e: std::io::Error| Error::Format(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(fmt)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, not a trajectory container".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(fmt)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header).map_err(fmt)?;
        let header: TrajectoryHeader =
            serde_json::from_slice(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut data = Vec::with_capacity(header.columns.len());
        let mut buf = vec![0u8; header.samples * 8];
        for _ in &header.columns {
            r.read_exact(&mut buf).map_err(fmt)?;
            data.push(
                buf.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        Ok(Trajectory {
            header,
            data,
            timing: RunTiming::default(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Trajectory> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Trajectory::read_binary(std::io::BufReader::new(file))
    }

    /// CSV with a `time` column followed by the recorded columns.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# fingerprint {}", self.header.fingerprint)?;
        let names: Vec<&str> = self.header.columns.iter().map(|c| c.name()).collect();
        writeln!(w, "time,{}", names.join(","))?;
        for i in 0..self.len() {
            write!(w, "{:e}", (i + 1) as f64 * self.header.sample_interval)?;
            for series in &self.data {
                write!(w, ",{:e}", series[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Runs a validated configuration and records the decimated trajectory.
pub fn simulate(config: &SimulationConfig) -> Result<Trajectory> {
    validate_config(config).into_result()?;
    simulate_unchecked(config)
}

/// Same as [`simulate`] without the step-size and run-length checks.
pub fn simulate_unchecked(config: &SimulationConfig) -> Result<Trajectory> {
    let mut integrator = Integrator::new(config)?;
    let mut state = config.initial;
    let decimation = config.decimation.max(1);
    let samples = config.recorded_len();
    let columns = config.record.clone();
    let idx: Vec<usize> = columns.iter().map(|c| c.index()).collect();
    let mut data: Vec<Vec<f64>> = columns.iter().map(|_| Vec::with_capacity(samples)).collect();
    let mut acc = Accumulator::default();
    let inv_mass = 1.0 / config.particle.mass();
    let inv_inertia = integrator.field.inverse_inertia();
    let progress_every = (config.steps / 10).max(1);

    let start = Instant::now();
    for n in 0..config.steps {
        let res = if config.deterministic {
            integrator.step_deterministic_rk4(&mut state)
        } else {
            integrator.step(&mut state)
        };
        if let Err(e) = res {
            log::error!("run aborted at step {n}: {e}");
            return Err(e);
        }
        acc.add(&state, &integrator.last_torque, inv_mass, &inv_inertia);
        if (n + 1) % decimation == 0 && data.first().is_none_or(|d| d.len() < samples) {
            let v = state.to_array();
            for (series, &i) in data.iter_mut().zip(&idx) {
                series.push(v[i]);
            }
        }
        if (n + 1) % progress_every == 0 {
            log::info!("step {}/{} ({:.0}%)", n + 1, config.steps, 100.0 * (n + 1) as f64 / config.steps as f64);
        }
    }
    let wall = start.elapsed().as_secs_f64();
    let reflections = integrator.events.chart_reflections;
    let unreliable =
        config.steps > 0 && reflections as f64 > UNRELIABLE_REFLECTION_FRACTION * config.steps as f64;
    if unreliable {
        log::warn!("{reflections} chart-guard reflections in {} steps; run flagged unreliable", config.steps);
    }
    Ok(Trajectory {
        header: TrajectoryHeader {
            columns,
            sample_interval: config.dt * decimation as f64,
            samples,
            fingerprint: config_fingerprint(config),
            config: config.clone(),
            events: integrator.events,
            averages: acc.finish(),
            steps_taken: config.steps,
            unreliable,
            rng_word_pos: integrator.rng_word_pos().to_string(),
        },
        data,
        timing: RunTiming {
            wall_seconds: wall,
            steps_per_second: if wall > 0.0 { config.steps as f64 / wall } else { 0.0 },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn base() -> SimulationConfig {
        SimulationConfig {
            particle: ParticleProperties::compound(2, SILICA_DENSITY, 50e-9, [0.78, 0.80, 0.92])
                .unwrap(),
            beam: BeamParameters {
                power: 0.5,
                wavelength: 1550e-9,
                waist: 1e-6,
                asymmetry: [1.0, 1.0],
                rayleigh_range: 2e-6,
                polarization: BeamParameters::polarization_from_angle(0.4),
            },
            gas: GasEnvironment::nitrogen(10.0, 300.0),
            initial: PhaseState::at_rest(1.2),
            dt: 1e-9,
            steps: 200,
            decimation: 7,
            seed: 42,
            toggles: Toggles::default(),
            deterministic: false,
            precession_analysis: false,
            record: Column::ALL.to_vec(),
        }
    }

    #[test]
    fn wrap_keeps_principal_range() {
        for a in [-10.0, -PI, -1.0, 0.0, 3.0, PI, 7.5, 100.0] {
            let w = wrap_angle(a);
            assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
            assert!(((w - a) / (2.0 * PI)).round() * 2.0 * PI - (w - a) < 1e-9);
        }
    }

    #[test]
    fn free_flight_when_everything_is_off() {
        let mut cfg = base();
        cfg.toggles = Toggles {
            gradient: false,
            scattering: false,
            collisions: false,
            noise: false,
        };
        cfg.initial.p = [1e-20, -2e-20, 3e-20];
        let mut it = Integrator::new(&cfg).unwrap();
        let mut s = cfg.initial;
        for _ in 0..100 {
            it.step(&mut s).unwrap();
        }
        assert_eq!(s.p, cfg.initial.p);
        assert_eq!(s.phi, cfg.initial.phi);
        assert_eq!(s.pi, cfg.initial.pi);
        let m = cfg.particle.mass();
        for i in 0..3 {
            let expected = cfg.initial.p[i] / m * 100.0 * cfg.dt;
            assert!((s.r[i] - expected).abs() <= 1e-12 * expected.abs());
        }
    }

    fn friction_run(dt_gamma: f64, n: usize) -> (f64, f64, f64) {
        let mut cfg = base();
        cfg.toggles = Toggles {
            gradient: false,
            scattering: false,
            collisions: true,
            noise: false,
        };
        let gc = cfg.gas.collision_rate();
        cfg.dt = dt_gamma / gc;
        cfg.initial.p = [1e-20, 0.0, 0.0];
        let mut it = Integrator::new(&cfg).unwrap();
        let mut s = cfg.initial;
        for _ in 0..n {
            it.step(&mut s).unwrap();
        }
        let exact = 1e-20 * (-2.0 * gc * n as f64 * cfg.dt).exp();
        let discrete = 1e-20 * (1.0 - 2.0 * dt_gamma).powi(n as i32);
        (s.p[0], exact, discrete)
    }

    #[test]
    fn friction_only_decay_matches_exponential() {
        // Euler-Maruyama reproduces its own discrete solution exactly ...
        let (p, _, discrete) = friction_run(1e-4, 100_000);
        assert!(((p - discrete) / discrete).abs() < 1e-9);
        // ... and the continuous exponential to first order in dt
        let (p, exact, _) = friction_run(1e-5, 100_000);
        assert!(((p - exact) / exact).abs() < 1e-4, "{p} vs {exact}");
    }

    #[test]
    fn same_seed_same_states() {
        let cfg = base();
        let mut a = Integrator::new(&cfg).unwrap();
        let mut b = Integrator::new(&cfg).unwrap();
        let (mut sa, mut sb) = (cfg.initial, cfg.initial);
        for _ in 0..1000 {
            a.step(&mut sa).unwrap();
            b.step(&mut sb).unwrap();
            assert_eq!(sa.to_array().map(f64::to_bits), sb.to_array().map(f64::to_bits));
        }
    }

    #[test]
    fn recorded_length_and_round_trip() {
        let cfg = base();
        let traj = simulate_unchecked(&cfg).unwrap();
        assert_eq!(traj.len(), 200 / 7);
        assert!(traj.data.iter().all(|s| s.len() == 200 / 7));
        let mut buf = Vec::new();
        traj.write_binary(&mut buf).unwrap();
        let back = Trajectory::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.header, traj.header);
        assert_eq!(back.data, traj.data);
    }

    #[test]
    fn empty_run() {
        let mut cfg = base();
        cfg.steps = 0;
        let traj = simulate_unchecked(&cfg).unwrap();
        assert!(traj.is_empty());
        assert_eq!(traj.header.averages.samples, 0);
        assert_eq!(traj.header.fingerprint, config_fingerprint(&cfg));
    }

    #[test]
    fn reflection_off_the_pole_is_counted() {
        let mut cfg = base();
        cfg.toggles = Toggles {
            gradient: false,
            scattering: false,
            collisions: false,
            noise: false,
        };
        cfg.initial = PhaseState {
            phi: [0.0, 2e-3, 0.0],
            pi: [0.0, -1e-28, 0.0],
            ..Default::default()
        };
        let mut it = Integrator::new(&cfg).unwrap();
        let mut s = cfg.initial;
        // beta decreases at pi_beta / I1 per second
        let rate = 1e-28 / cfg.particle.inertia[0];
        let steps = (3e-3 / (rate * cfg.dt)) as usize;
        for _ in 0..steps {
            it.step(&mut s).unwrap();
        }
        assert_eq!(it.events.chart_reflections, 1);
        assert!(s.phi[1] >= BETA_GUARD_BAND);
        assert!(s.pi[1] > 0.0);
    }

    #[test]
    fn rk4_energy_error_is_fourth_order() {
        let mut cfg = base();
        cfg.toggles = Toggles::CONSERVATIVE;
        cfg.initial = PhaseState {
            r: [1e-7, -5e-8, 2e-7],
            p: [0.0; 3],
            phi: [0.1, 1.1, 0.3],
            pi: [2e-26, 1e-26, -1e-26],
        };
        let field = ForceField::new(&cfg.particle, &cfg.beam, &cfg.gas, cfg.toggles).unwrap();
        let h0 = field.energy(&cfg.initial).unwrap();
        let drift = |dt: f64, n: usize| {
            let mut s = cfg.initial;
            for _ in 0..n {
                s = rk4(&field, &s, dt).unwrap();
            }
            (field.energy(&s).unwrap() - h0).abs()
        };
        let t_end = 2e-6;
        let coarse = drift(t_end / 200.0, 200);
        let fine = drift(t_end / 400.0, 400);
        let ratio = coarse / fine;
        assert!(ratio > 10.0 && ratio < 40.0, "ratio {ratio}, coarse {coarse:e}");
    }
}
