#!/usr/bin/env python3
"""Run the pendulum and intruder sweeps back to back.

These horizons make the discrepancy penalty astronomically conservative, so
expect the bound-driven selector to sit in the smallest class throughout;
the CSVs are still useful for timing and for the raw-return baseline.
"""

import sys
from pathlib import Path

from srmrl.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    workers = sys.argv[1] if len(sys.argv) > 1 else "8"
    for name in ("pendulum_sweep", "intruder_sweep"):
        code = main(["sweep", "--config", str(ROOT / "configs" / f"{name}.yaml"),
                     "--workers", workers])
        if code != 0:
            sys.exit(code)
    sys.exit(0)
