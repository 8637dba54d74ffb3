#!/usr/bin/env python3
"""Toy-domain learning curves: 300 cells, paired SRM/MR, plot-ready CSVs.

Roughly 15 minutes of CPU work; scale --workers to your cores.  Outputs land
in out/toy_sweep/ (sweep_rows.csv, sweep_summary.csv).
"""

import sys
from pathlib import Path

from srmrl.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    extra = sys.argv[1:] or ["--workers", "8"]
    sys.exit(main(["sweep", "--config", str(ROOT / "configs" / "toy_sweep.yaml"), *extra]))
