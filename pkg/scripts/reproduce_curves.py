#!/usr/bin/env python3
"""Reproduce the three headline experiments as CSV tables under results/.

1. Sum spectral efficiency vs SNR for the uniform interference profiles
   (cross gains 1 and 4), all four receivers, with the closed-form bounds
   and the deterministic equivalent attached to the optimal-combiner rows.
2. Sum spectral efficiency vs normalized Doppler for 50 and 100 antennas.
3. Bounds / deterministic equivalent vs simulation across SNR.

Trial counts are modest by default so the whole script finishes in a few
minutes; pass --trials to tighten the error bars.
"""

import argparse
import pathlib
import sys

from aging_mimo.cli import main as cli_main

HERE = pathlib.Path(__file__).resolve().parent
CONFIGS = HERE.parent / "configs"


def run(args) -> int:
    print("+ aging-mimo " + " ".join(args))
    rc = cli_main(args)
    if rc != 0:
        print(f"  -> exit code {rc}", file=sys.stderr)
    return rc


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=1000)
    parser.add_argument("--workers", type=int, default=4)
    parser.add_argument("--outdir", default=str(HERE.parent / "results"))
    opts = parser.parse_args()

    outdir = pathlib.Path(opts.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    common = ["--trials", str(opts.trials), "--workers", str(opts.workers)]

    worst = 0
    for label, config in (("beta1", "baseline.toml"), ("beta4", "high_interference.toml")):
        worst |= run(["sweep-snr", "--config", str(CONFIGS / config), "--grid=-10:40:2",
                      "--out", str(outdir / f"snr_{label}.csv"), *common])
    worst |= run(["sweep-doppler", "--config", str(CONFIGS / "baseline.toml"),
                  "--grid", "0:0.45:0.01", "--antennas", "50,100",
                  "--out", str(outdir / "doppler.csv"), *common])
    worst |= run(["bounds", "--config", str(CONFIGS / "baseline.toml"), "--grid=-10:40:5",
                  "--out", str(outdir / "bounds.csv"), *common])
    return worst


if __name__ == "__main__":
    sys.exit(main())
