//! Configuration files and override layering.
//!
//! A configuration is a TOML document (or its JSON mirror) whose sections and
//! keys are the fields of [`SimulationConfig`]. Layers are applied in the order
//! file, environment, command line, and only then is the result validated.
//!
//! Two conveniences are resolved after layering:
//! - a `[compound]` section (`spheres`, `sphere_radius`, `density`,
//!   `susceptibility`) may stand in for `[particle]`;
//! - `dt` and `decimation` may be omitted; they default to `1/(200 f_max)` and
//!   to the largest factor keeping the recorded Nyquist frequency at least
//!   2.5 times `f_max`.
//!
//! Environment overrides use the prefix `LEVISIM_`, with `__` separating
//! nested keys: `LEVISIM_GAS__PRESSURE=5.0`, `LEVISIM_SEED=7`,
//! `LEVISIM_BEAM__POLARIZATION=[0.8, 0.6]`. Values are read as TOML literals,
//! falling back to plain strings.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::estimates::frequency_scale;
use crate::model::{ParticleProperties, SimulationConfig};

pub const ENV_PREFIX: &str = "LEVISIM_";
/// Default step as a fraction of the fastest predicted period.
pub const DEFAULT_STEPS_PER_PERIOD: f64 = 200.0;
/// Recorded Nyquist frequency over the fastest predicted line.
pub const NYQUIST_MARGIN: f64 = 2.5;

/// Values supplied on the command line; they win over file and environment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// Pa (converted from mbar at the argument parser).
    pub pressure: Option<f64>,
    /// W
    pub power: Option<f64>,
}

impl Overrides {
    fn apply(&self, table: &mut Table) -> Result<()> {
        if let Some(seed) = self.seed {
            set_path(table, &["seed"], Value::Integer(seed_as_integer(seed)?))?;
        }
        if let Some(p) = self.pressure {
            set_path(table, &["gas", "pressure"], Value::Float(p))?;
        }
        if let Some(p) = self.power {
            set_path(table, &["beam", "power"], Value::Float(p))?;
        }
        Ok(())
    }
}

fn seed_as_integer(seed: u64) -> Result<i64> {
    i64::try_from(seed).map_err(|_| Error::config("seed", "seed must fit in 63 bits"))
}

/// Fused-sphere shorthand for the particle section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundSpec {
    pub spheres: u32,
    /// m
    pub sphere_radius: f64,
    #[serde(default = "default_density")]
    pub density: f64,
    pub susceptibility: [f64; 3],
}

fn default_density() -> f64 {
    crate::model::SILICA_DENSITY
}

/// Detector and peak-finding options, read from an optional `[analysis]`
/// section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisOptions {
    /// Detector weights on (x, y, z) (1/m).
    pub weights: [f64; 3],
    pub rotation_weight: f64,
    pub noise_floor: f64,
    /// Minimum peak prominence (decades of PSD).
    pub min_prominence: f64,
    pub max_peaks: usize,
    /// Relative tolerance for labeling peaks against predictions.
    pub tolerance: f64,
    /// Welch segment length; 0 picks one giving at least eight segments.
    pub segment_length: usize,
    /// Observed secondary α line (Hz) used for sideband labels, if known.
    pub alpha_prime_hz: Option<f64>,
    /// Leading fraction of each run discarded before spectra are taken.
    pub settle_fraction: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            weights: [1e7; 3],
            rotation_weight: 1.0,
            noise_floor: 0.0,
            min_prominence: 1.0,
            max_peaks: 40,
            tolerance: 0.1,
            segment_length: 0,
            alpha_prime_hz: None,
            settle_fraction: 0.1,
        }
    }
}

/// A parsed configuration plus the analysis options that travel with it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub simulation: SimulationConfig,
    pub analysis: AnalysisOptions,
    pub source: Option<PathBuf>,
}

/// Reads a TOML or JSON document into a table. JSON is recognised by the
/// `.json` extension.
pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::config(
            path.display().to_string(),
            format!("cannot read config file: {e}"),
        )
    })?;
    parse_table(&text, is_json(path))
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn parse_table(text: &str, json: bool) -> Result<Table> {
    if json {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::config("<json>", e.to_string()))?;
        match json_to_toml(value)? {
            Value::Table(t) => Ok(t),
            _ => Err(Error::config("<json>", "top level must be an object")),
        }
    } else {
        text.parse::<Table>()
            .map_err(|e| Error::config("<toml>", e.to_string()))
    }
}

fn json_to_toml(value: serde_json::Value) -> Result<Value> {
    use serde_json::Value as J;
    Ok(match value {
        J::Null => return Err(Error::config("<json>", "null values are not allowed")),
        J::Bool(b) => Value::Boolean(b),
        J::Number(n) => match n.as_i64() {
            Some(i) => Value::Integer(i),
            None => Value::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        J::String(s) => Value::String(s),
        J::Array(items) => Value::Array(
            items
                .into_iter()
                .map(json_to_toml)
                .collect::<Result<Vec<_>>>()?,
        ),
        J::Object(map) => {
            let mut table = Table::new();
            for (k, v) in map {
                table.insert(k, json_to_toml(v)?);
            }
            Value::Table(table)
        }
    })
}

/// Applies `LEVISIM_*` variables from `vars` onto `table`.
pub fn apply_env<I>(table: &mut Table, vars: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut pairs: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    pairs.sort();
    for (key, raw) in pairs {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(|s| s.to_ascii_lowercase())
            .collect();
        if path.iter().any(|s| s.is_empty()) {
            return Err(Error::config(key, "malformed override name"));
        }
        let refs: Vec<&str> = path.iter().map(String::as_str).collect();
        set_path(table, &refs, parse_literal(&raw)).map_err(|e| match e {
            Error::Config { message, .. } => Error::config(key.clone(), message),
            other => other,
        })?;
    }
    Ok(())
}

fn parse_literal(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(table: &mut Table, path: &[&str], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for (depth, key) in parents.iter().enumerate() {
        let entry = node
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(Error::config(
                    path[..=depth].join("."),
                    "cannot override inside a non-table value",
                ))
            }
        };
    }
    // An integer written where the file has a float stays a float.
    let value = match (node.get(*last), value) {
        (Some(Value::Float(_)), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    };
    node.insert(last.to_string(), value);
    Ok(())
}

/// Layers file, environment and command-line values, resolves the
/// conveniences and deserializes. Validation is left to the caller.
pub fn resolve<I>(mut table: Table, env: I, overrides: &Overrides) -> Result<LoadedConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    apply_env(&mut table, env)?;
    overrides.apply(&mut table)?;

    let analysis = match table.remove("analysis") {
        Some(v) => v
            .try_into::<AnalysisOptions>()
            .map_err(|e| Error::config("analysis", e.to_string()))?,
        None => AnalysisOptions::default(),
    };
    if let Some(compound) = table.remove("compound") {
        if table.contains_key("particle") {
            return Err(Error::config(
                "compound",
                "give either [particle] or [compound], not both",
            ));
        }
        let spec: CompoundSpec = compound
            .try_into()
            .map_err(|e| Error::config("compound", e.to_string()))?;
        let particle = ParticleProperties::compound(
            spec.spheres,
            spec.density,
            spec.sphere_radius,
            spec.susceptibility,
        )?;
        let value = Value::try_from(particle).map_err(|e| Error::config("particle", e.to_string()))?;
        table.insert("particle".into(), value);
    }

    let dt_missing = !table.contains_key("dt");
    let decimation_missing = !table.contains_key("decimation");
    if dt_missing {
        // placeholder so the schema deserializes; replaced below
        table.insert("dt".into(), Value::Float(1.0));
    }
    let mut simulation: SimulationConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(schema_field(&e), e.message().to_string()))?;

    if dt_missing || decimation_missing {
        let scale = frequency_scale(&simulation)?;
        if dt_missing {
            simulation.dt = 1.0 / (DEFAULT_STEPS_PER_PERIOD * scale.f_max);
        }
        if decimation_missing {
            simulation.decimation = default_decimation(simulation.dt, scale.f_max);
        }
    }
    Ok(LoadedConfig {
        simulation,
        analysis,
        source: None,
    })
}

fn schema_field(e: &toml::de::Error) -> String {
    let msg = e.message();
    match msg.find('`') {
        Some(start) => msg[start + 1..]
            .split('`')
            .next()
            .unwrap_or("config")
            .to_string(),
        None => "config".to_string(),
    }
}

/// Largest decimation keeping the recorded Nyquist frequency at least
/// [`NYQUIST_MARGIN`] times `f_max`.
pub fn default_decimation(dt: f64, f_max: f64) -> u64 {
    let factor = (1.0 / (2.0 * NYQUIST_MARGIN * f_max * dt)).floor();
    if factor.is_finite() && factor >= 1.0 {
        factor as u64
    } else {
        1
    }
}

/// Loads a config file with the process environment and the given flags.
pub fn load(path: &Path, overrides: &Overrides) -> Result<LoadedConfig> {
    let table = read_table(path)?;
    let mut loaded = resolve(table, std::env::vars(), overrides)?;
    loaded.source = Some(path.to_path_buf());
    Ok(loaded)
}

/// Serializes a configuration to TOML in the same schema it was read from.
pub fn to_toml(config: &SimulationConfig) -> String {
    toml::to_string_pretty(config).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        steps = 100
        seed = 3

        [compound]
        spheres = 2
        sphere_radius = 50e-9
        susceptibility = [0.75, 0.70, 0.95]

        [beam]
        power = 1.2
        wavelength = 1550e-9
        waist = 1e-6
        asymmetry = [1.0, 1.0]
        rayleigh_range = 2.5e-6
        polarization = [1.0, 0.0]

        [gas]
        pressure = 10.0
        temperature = 300.0
        gas_mass = 4.65e-26
        gas_radius = 0.18e-9

        [initial]
        r = [0.0, 0.0, 0.0]
        p = [0.0, 0.0, 0.0]
        phi = [0.0, 1.5, 0.0]
        pi = [0.0, 0.0, 0.0]
    "#;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn compound_and_defaults_resolve() {
        let table = parse_table(BASE, false).unwrap();
        let loaded = resolve(table, env(&[]), &Overrides::default()).unwrap();
        let cfg = loaded.simulation;
        assert_eq!(cfg.seed, 3);
        assert!(cfg.particle.inertia[0] > cfg.particle.inertia[2]);
        let scale = frequency_scale(&cfg).unwrap();
        assert!((cfg.dt * scale.f_max - 1.0 / DEFAULT_STEPS_PER_PERIOD).abs() < 1e-12);
        assert!(cfg.decimation >= 1);
        assert!(crate::model::validate_config(&cfg).is_valid());
    }

    #[test]
    fn precedence_file_env_flags() {
        let table = parse_table(BASE, false).unwrap();
        let vars = env(&[
            ("LEVISIM_GAS__PRESSURE", "20"),
            ("LEVISIM_SEED", "11"),
            ("OTHER_SEED", "99"),
        ]);
        let cfg = resolve(table.clone(), vars.clone(), &Overrides::default())
            .unwrap()
            .simulation;
        assert_eq!(cfg.gas.pressure, 20.0);
        assert_eq!(cfg.seed, 11);
        let flags = Overrides {
            seed: Some(5),
            pressure: Some(30.0),
            power: Some(0.5),
        };
        let cfg = resolve(table, vars, &flags).unwrap().simulation;
        assert_eq!(cfg.gas.pressure, 30.0);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.beam.power, 0.5);
    }

    #[test]
    fn json_mirror_matches_toml() {
        let table = parse_table(BASE, false).unwrap();
        let json = serde_json::to_string(&table).unwrap();
        let from_json = parse_table(&json, true).unwrap();
        let a = resolve(table, env(&[]), &Overrides::default()).unwrap();
        let b = resolve(from_json, env(&[]), &Overrides::default()).unwrap();
        assert_eq!(a.simulation, b.simulation);
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let table = parse_table(&format!("{BASE}\nbogus = 1\n"), false).unwrap();
        let err = resolve(table, env(&[]), &Overrides::default()).unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
        let table = parse_table(BASE, false).unwrap();
        let err = resolve(table, env(&[("LEVISIM_BEAM__COLOUR", "1")]), &Overrides::default())
            .unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn round_trip_through_toml() {
        let table = parse_table(BASE, false).unwrap();
        let cfg = resolve(table, env(&[]), &Overrides::default()).unwrap().simulation;
        let again = parse_table(&to_toml(&cfg), false).unwrap();
        let cfg2 = resolve(again, env(&[]), &Overrides::default()).unwrap().simulation;
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load(Path::new("/nonexistent/levisim.toml"), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/levisim.toml"));
    }
}
