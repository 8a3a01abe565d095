"""Freeze the relaxation oracle used by acceptance criterion 7.

Runs the acceptance-scale ``relax`` scenario once and stores its Lynden-Bell
improvement factor (one-component residual over two-component residual) in
``tests/data/relax_oracle.json``.  Rerun only when the physics changes on
purpose; the acceptance suite compares fresh runs against this file.

    python3 tools/preregister_relax.py [--out DIR]
"""
import argparse
import json
import platform
import tempfile
from pathlib import Path

from trps_lab.harness import ExperimentConfig, run_scenario
from trps_lab.theta import kernels

ROOT = Path(__file__).resolve().parents[1]
ORACLE = ROOT / "tests" / "data" / "relax_oracle.json"
CONFIG = ROOT / "tests" / "data" / "relax_acceptance.cfg"


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", help="keep run artifacts here")
    args = ap.parse_args()
    cfg = ExperimentConfig.from_file(CONFIG)
    out = args.out or tempfile.mkdtemp(prefix="relax-oracle-")
    rec = run_scenario(cfg, out)
    m = rec.metrics["relax"]
    oracle = {
        "config_hash": rec.config_hash,
        "backend": kernels.backend(),
        "machine": platform.machine(),
        "fit_improvement": m["fit_improvement"],
        "fit1_residual": m["fit1_residual"],
        "fit2_residual": m["fit2_residual"],
        "energy_drift": m["energy_drift"],
        "n_bound": m["n_bound"],
    }
    ORACLE.write_text(json.dumps(oracle, indent=2, sort_keys=True) + "\n")
    print(json.dumps(oracle, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
