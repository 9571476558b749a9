"""Synthetic datasets with controlled noise.

Noise models
------------
Thermometry (mean occupation): ``sigma = scale * (0.05 + 0.02 <n>)`` quanta.
The drawn noise can be inflated by ``sqrt(chi2_excess)`` relative to the
reported ``sigma`` to mimic under-reported error bars.

Count rates (saturation, spectra): ``poisson:T`` draws photon counts over an
integration time ``T`` seconds and reports ``sigma = sqrt(max(N, 10)) / T``;
``gaussian:s`` adds relative noise ``s * rate`` with a floor of ``s`` times 1 %
of the peak rate.
"""

from __future__ import annotations

import math

import numpy as np

from .config import NoiseSpec
from .core_model import BRANCHES, PhysicalParams, cavity_scatter_rate, mean_n_trajectory
from .fitkit import Dataset

THERMOMETRY_FLOOR = 0.05
THERMOMETRY_FRACTION = 0.02
POISSON_MIN_COUNTS = 10
DEFAULT_INTEGRATION_TIME = 3e-3  # s, used for error bars when no noise is drawn
NOISE_RNG = "numpy.Philox4x64 via SeedSequence(seed, spawn_key=(stream,))"


def noise_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


def thermometry_sigma(mean_n, scale: float = 1.0):
    return scale * (THERMOMETRY_FLOOR + THERMOMETRY_FRACTION * np.asarray(mean_n, dtype=float))


def dynamics_datasets(
    p: PhysicalParams,
    n0: float,
    grids: dict,
    noise: NoiseSpec,
    seed: int = 0,
    chi2_excess: float = 1.0,
) -> dict[str, Dataset]:
    """Noisy <n>(t) samples on each branch's time grid."""
    if noise.kind == "poisson":
        raise ValueError("poisson noise applies to count-rate scenarios, not thermometry")
    out = {}
    for stream, branch in enumerate(BRANCHES):
        if branch not in grids:
            continue
        t = np.asarray(grids[branch], dtype=float)
        truth = mean_n_trajectory(p, branch, n0, t).mean_n
        sigma = thermometry_sigma(truth, noise.scale if noise.active else 1.0)
        y = truth.copy()
        if noise.active:
            y = truth + noise_rng(seed, stream).normal(0.0, math.sqrt(chi2_excess) * sigma)
        out[branch] = Dataset(
            t, y, sigma, label=f"dynamics_{branch}",
            metadata={"branch": branch, "x_unit": "s", "y_unit": "quanta", "n0": n0,
                      "noise": str(noise), "seed": seed, "chi2_excess": chi2_excess},
        )
    return out


def count_rate_noise(rate, noise: NoiseSpec, rng: np.random.Generator):
    """Return (noisy_rate, sigma) for expected rates ``rate`` (events/s)."""
    rate = np.asarray(rate, dtype=float)
    if noise.kind == "gaussian" and noise.active:
        if not np.any(rate):
            raise ValueError("relative gaussian noise is undefined for an all-zero signal; use poisson")
        sigma = noise.scale * np.maximum(np.abs(rate), 0.01 * np.max(np.abs(rate)))
        return rate + rng.normal(0.0, sigma), sigma
    t_int = noise.scale if (noise.kind == "poisson" and noise.active) else DEFAULT_INTEGRATION_TIME
    if noise.kind == "poisson" and noise.active:
        counts = rng.poisson(np.clip(rate, 0, None) * t_int).astype(float)
    else:
        counts = np.clip(rate, 0, None) * t_int
    sigma = np.sqrt(np.maximum(counts, POISSON_MIN_COUNTS)) / t_int
    if noise.kind == "poisson" and noise.active:
        return counts / t_int, sigma
    return rate.copy(), sigma


def saturation_dataset(eta: float, gamma_sat: float, gamma_sc, noise: NoiseSpec, seed: int = 0) -> Dataset:
    x = np.asarray(gamma_sc, dtype=float)
    truth = cavity_scatter_rate(eta, x, gamma_sat)
    y, sigma = count_rate_noise(truth, noise, noise_rng(seed, 0))
    return Dataset(
        x, y, sigma, label="saturation",
        metadata={"x_unit": "photons/s", "y_unit": "photons/s", "eta": eta, "gamma_sat": gamma_sat,
                  "noise": str(noise), "seed": seed},
    )


def spectrum_dataset(profile, noise: NoiseSpec, seed: int = 0, phi: float | None = None) -> Dataset:
    """Noisy cavity scatter rate on the profile's detuning grid (x in rad/s)."""
    y, sigma = count_rate_noise(profile.rate, noise, noise_rng(seed, 0))
    meta = {"x_unit": "rad/s", "y_unit": "photons/s", "noise": str(noise), "seed": seed,
            "linewidth": profile.linewidth_used}
    if phi is not None:
        meta["phi"] = phi
    return Dataset(profile.grid, y, sigma, label="spectrum", metadata=meta)
