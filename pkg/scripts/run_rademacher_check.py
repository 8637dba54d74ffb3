#!/usr/bin/env python3
"""Convergence of the sampled capacity estimator toward exact enumeration."""

import sys
from pathlib import Path

from srmrl.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(main(["rademacher-check",
                   "--config", str(ROOT / "configs" / "rademacher_check.yaml"),
                   *sys.argv[1:]]))
