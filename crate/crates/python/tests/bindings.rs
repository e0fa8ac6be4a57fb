//! Drives the module through an embedded interpreter.

use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::wrap_pymodule;

fn run(code: &str) {
    Python::initialize();
    Python::attach(|py| {
        let module = wrap_pymodule!(pylevisim::pylevisim)(py);
        py.import("sys")
            .and_then(|sys| sys.getattr("modules"))
            .and_then(|m| m.set_item("pylevisim", module))
            .unwrap();
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, None, None) {
            e.display(py);
            panic!("python code failed");
        }
    });
}

#[test]
fn module_round_trip() {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/calibration.toml");
    let code = format!(
        r#"
import math
import pylevisim as lv
cfg = lv.Config.from_file({cfg:?}, seed=4, pressure_mbar=0.2)
assert cfg.seed == 4 and abs(cfg.pressure - 20.0) < 1e-9
assert cfg.validate() == []
back = lv.Config.from_toml(cfg.to_toml())
assert back.fingerprint == cfg.fingerprint
cfg.steps = 20_000
traj = lv.simulate(cfg)
assert len(traj) == 1000
assert traj.fingerprint == cfg.fingerprint
assert "beta" in traj.columns
try:
    traj.column("nope")
    raise SystemExit(1)
except ValueError:
    pass
est = lv.estimate(cfg)
assert est["omega_x"] > 0
cfg.power = -1.0
assert cfg.validate()
try:
    lv.simulate(cfg)
    raise SystemExit(1)
except lv.ConfigError:
    pass
"#
    );
    run(&code);
}
