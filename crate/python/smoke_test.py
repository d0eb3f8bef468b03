"""Smoke test for the snls extension module.

Loads the module from an installed wheel if present, otherwise from the
cargo build output (`cargo build --release -p snls-py --features extension-module`).
"""

import importlib.util
import json
import os
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_snls():
    try:
        import snls

        return snls
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libsnls.so"
        if lib.exists():
            tmp = pathlib.Path(tempfile.mkdtemp())
            dest = tmp / "snls.so"
            shutil.copy(lib, dest)
            spec = importlib.util.spec_from_file_location("snls", dest)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    sys.exit("snls extension not found; build it with cargo first")


CONSERVATION = """
experiment = "conservation"
seed = 3
[[noise.modes]]
mu = [0.0, 0.8]
shape = "cosine"
wavenumber = [1]
[solver]
dt = 1e-3
t_final = 0.2
record_every = 20
"""

MARTINGALE = """
experiment = "martingale"
seed = 5
n_paths = 16
[[noise.modes]]
mu = 0.5
shape = "cosine"
wavenumber = [1]
[solver]
dt = 2e-3
t_final = 0.1
record_every = 10
"""


def main():
    snls = load_snls()
    assert snls.CSV_HEADER[0] == "t" and len(snls.CSV_HEADER) == 12

    cfg = snls.parse_config(CONSERVATION)
    assert cfg.experiment == "conservation"
    assert cfg.violations() == []
    out = snls.run(cfg, workers=2)
    assert out.passed and out.exit_code == 0, out.verdict_json()
    cols = out.timeseries()
    q = cols["Q"]
    assert len(q) == 11
    assert max(abs(x - q[0]) for x in q) <= 1e-7 * q[0]
    assert all(x is None for x in cols["mass_residual"])
    assert out.csv().startswith(",".join(snls.CSV_HEADER) + "\n")

    cfg = snls.parse_config(MARTINGALE)
    a = snls.run(cfg, workers=1)
    b = snls.run(cfg, workers=4)
    assert a.csv() == b.csv() and a.ndjson() == b.ndjson()
    assert len(a.ndjson().splitlines()) == 16
    with tempfile.TemporaryDirectory() as d:
        manifest = json.loads(a.write(d))
        names = sorted(f["name"] for f in manifest["files"])
        assert names == ["paths.ndjson", "timeseries.csv", "verdict.json"]
        assert os.path.exists(os.path.join(d, "manifest.json"))

    try:
        snls.parse_config('experiment = "mass-identity"\n[params]\nlambda = 9.0\n')
    except snls.ConfigError as e:
        assert "compatibility condition" in str(e)
    else:
        raise AssertionError("incompatible parameters must be rejected")
    try:
        snls.parse_config("[grid]\nn = 'x'\n")
    except ValueError:
        pass
    else:
        raise AssertionError("type errors must be rejected")

    assert snls.strichartz_admissible(1, float("inf"), 4.0)
    assert not snls.strichartz_admissible(2, float("inf"), 2.0)
    assert abs(snls.stability_bound(1, 64, 16.0, 1.0, 0.5) - 3.166e-3) < 1e-6
    assert snls.derive_seed(7, 0) != snls.derive_seed(7, 1)
    print("snls smoke test passed")


if __name__ == "__main__":
    main()
