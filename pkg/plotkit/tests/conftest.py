"""Shared fixtures: real CSV tables produced by the experiment CLI.

The tables are generated once per session by invoking ``schedsim`` as a
subprocess -- the only interface this package consumes.
"""

import json
import subprocess

import pytest

CHANNELS = [{"p11": 0.8, "p01": 0.2}, {"p11": 0.7, "p01": 0.1}]

SPECS = {
    "rate-region": {
        "kind": "rate-region", "channels": CHANNELS, "budget": 1.0,
        "tau": 10, "directions": 5, "horizon": 4000, "replications": 2,
    },
    "stability-sweep": {
        "kind": "stability-sweep", "channels": CHANNELS, "budget": 1.0,
        "tau": 10, "scalings": [0.6, 1.2], "horizon": 5000, "frame": 500,
        "replications": 2,
    },
    "truncation-sweep": {
        "kind": "truncation-sweep", "channels": CHANNELS, "budget": 0.8,
        "tau_list": [10, 20, 40], "tau_ref": 160,
    },
    "index-table": {
        "kind": "index-table", "channels": CHANNELS, "tau": 8,
        "include_oracle": True,
    },
    "simulate": {
        "kind": "simulate", "channels": CHANNELS, "budget": 1.0,
        "tau": 8, "lam": [0.2, 0.1], "horizon": 4000, "frame": 500,
        "replications": 2,
    },
}


@pytest.fixture(scope="session")
def tables(tmp_path_factory):
    """kind -> path of a freshly generated CSV for that table schema."""
    root = tmp_path_factory.mktemp("tables")
    paths = {}
    for name, spec in SPECS.items():
        spec_path = root / f"{name}.spec.json"
        spec_path.write_text(json.dumps(spec))
        out_dir = root / name
        proc = subprocess.run(
            ["schedsim", name, "--spec", str(spec_path), "--out", str(out_dir)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        paths[name] = out_dir / f"{name}.csv"
    paths["queue-trace"] = paths["simulate"].with_name("queue-trace.csv")
    return paths
