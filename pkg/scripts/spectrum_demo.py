"""Sweep the ion across the standing wave and classify each synthetic spectrum.

For each phase the script draws a Poisson-noise spectrum from the published
trap geometry, fits it, and prints the recovered axial fraction next to the
noiseless value and the assigned position.

    python scripts/spectrum_demo.py [--steps 9] [--seed 0] [--noise poisson:0.01]
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from sbcool.config import NoiseSpec
from sbcool.spectrum import classify_position, find_line, line_weights, published_geometry, spectrum_profile
from sbcool.synth import spectrum_dataset

TWO_PI = 2 * math.pi
WIDTH = TWO_PI * 150e3
SCALE = 2e5
GRID = TWO_PI * np.linspace(-3.5e6, 3.5e6, 281)


def true_fraction(lines) -> float:
    ax = find_line(lines, (0, 0, -1)).weight + find_line(lines, (0, 0, 1)).weight
    car = find_line(lines, (0, 0, 0)).weight
    return ax / (ax + car)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=9)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", default="poisson:0.01")
    args = ap.parse_args(argv)
    noise = NoiseSpec.parse(args.noise)

    print(f"{'phi/pi':>7} {'true frac':>10} {'fit frac':>10} {'sigma':>8}  position (confidence)")
    for phi in np.linspace(0, math.pi / 2, args.steps):
        g = published_geometry(phi)
        lines = line_weights(g, 2)
        data = spectrum_dataset(spectrum_profile(lines, WIDTH, SCALE, GRID), noise, args.seed, phi)
        c = classify_position(data, g.trap_frequencies)
        print(
            f"{phi / math.pi:7.3f} {true_fraction(lines):10.4f} {c.axial_fraction:10.4f} "
            f"{c.axial_fraction_sigma:8.4f}  {c.position} ({c.confidence:.2f})"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
