"""Smoke test for the pylevisim extension.

Build and install first:  maturin develop -m crates/python/Cargo.toml --release
Then run:                 python python/smoke_test.py
"""

import math
import pathlib
import tempfile

import pylevisim as lv

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"


def main():
    cfg = lv.Config.from_file(str(CONFIGS / "calibration.toml"))
    assert cfg.validate() == [], cfg.validate()
    cfg.steps = 1_000_000
    print(cfg)

    est = lv.estimate(cfg)
    fx = est["omega_x"] / (2 * math.pi)
    assert 150e3 < fx < 250e3, fx

    traj = lv.simulate(cfg)
    assert len(traj) == cfg.steps // 20
    assert traj.fingerprint == cfg.fingerprint
    beta = traj.column("beta")
    assert all(0.0 < b < math.pi for b in beta)

    with tempfile.TemporaryDirectory() as tmp:
        path = str(pathlib.Path(tmp) / "run.lvt")
        traj.save(path)
        again = lv.Trajectory.load(path)
        assert again.column("x") == traj.column("x")

    result = lv.analyze(traj, cfg)
    print("modes (Hz):", result["modes"])
    assert 3e6 < result["modes"]["alpha_spin"] < 4.5e6, result["modes"]

    freqs, psd = lv.welch_psd([math.sin(0.2 * math.pi * i) for i in range(4096)], 1.0, 512)
    peak = freqs[max(range(len(psd)), key=psd.__getitem__)]
    assert abs(peak - 0.1) < 0.01, peak

    fit = lv.fit_scaling_exponent([(c, 3.0 * c**-1.0) for c in (1.0, 2.0, 4.0, 8.0, 16.0)])
    assert abs(fit["exponent"] + 1.0) < 1e-9, fit

    iso = lv.Config.from_file(str(CONFIGS / "isotropic.toml"))
    try:
        lv.estimate(iso)
    except lv.DomainError as e:
        print("isotropic particle:", e)
    else:
        raise AssertionError("expected a domain error")

    print("smoke test passed")


if __name__ == "__main__":
    main()
