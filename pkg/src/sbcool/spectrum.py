"""Cavity emission spectrum versus laser-cavity detuning.

Each scattering event absorbs a photon from a travelling-wave beam
perpendicular to the cavity (momentum kicks along x, y) and emits one into
the standing-wave cavity mode ``cos(k z + phi)``. Expanding both factors to
second order in the Lamb-Dicke parameters gives per-mode sideband strengths,
thermally averaged over Bose-Einstein occupations:

========  ==============================  ==================================
 dn        transverse mode i (x, y)        axial mode z
========  ==============================  ==================================
  0        1 - s_i (2 nbar_i + 1)          cos^2(phi) (1 - e_z (2 nbar_z + 1))
 +1        s_i (nbar_i + 1)                sin^2(phi) e_z (nbar_z + 1)
 -1        s_i nbar_i                      sin^2(phi) e_z nbar_z
 +2        s_i^2 (nbar_i + 1)^2 / 2        cos^2(phi) e_z^2 (nbar_z + 1)^2 / 2
 -2        s_i^2 nbar_i^2 / 2              cos^2(phi) e_z^2 nbar_z^2 / 2
========  ==============================  ==================================

with ``s_i = projection_i^2 * eta_ld_sq_i`` and ``e_z = eta_ld_sq_z``. A line
``(dnx, dny, dnz)`` has weight equal to the product of its three factors and
sits at detuning offset ``dnx*wx + dny*wy + dnz*wz``. ``phi = 0`` is an
antinode, ``phi = pi/2`` a node.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import TWO_PI

# |cos phi| or |sin phi| below this is treated as an exact zero of the standing wave
_PHASE_EPS = 4.0 * np.finfo(float).eps


class CoverageError(ValueError):
    """Dataset does not span the lines a computation needs."""


@dataclass(frozen=True)
class SpectrumGeometry:
    trap_frequencies: tuple[float, float, float]  # rad/s (x, y, z)
    phi: float = 0.0
    projections: tuple[float, float] = (1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0))
    lamb_dicke_sq: tuple[float, float, float] = (0.0, 0.0, 0.0)
    occupations: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.trap_frequencies) != 3 or any(not w > 0 for w in self.trap_frequencies):
            raise ValueError("trap_frequencies must be three positive values")
        if any(not 0.0 <= q <= 1.0 for q in self.projections):
            raise ValueError("projections must lie in [0, 1]")
        if any(n < 0 for n in self.occupations):
            raise ValueError("occupations must be non-negative")
        if any(e < 0 for e in self.lamb_dicke_sq):
            raise ValueError("lamb_dicke_sq must be non-negative")


@dataclass(frozen=True)
class SpectrumLine:
    detuning_offset: float  # rad/s
    weight: float
    order: tuple[int, int, int]


@dataclass(frozen=True)
class SpectrumProfile:
    grid: np.ndarray
    rate: np.ndarray
    linewidth_used: float
    lines: tuple[SpectrumLine, ...] = field(default=(), compare=False)


def standing_wave_factors(phi: float) -> tuple[float, float]:
    """(cos^2 phi, sin^2 phi), with exact zeros at nodes and antinodes."""
    c, s = math.cos(phi), math.sin(phi)
    if abs(c) < _PHASE_EPS:
        c = 0.0
    if abs(s) < _PHASE_EPS:
        s = 0.0
    return c * c, s * s


def _transverse_factor(dn: int, s: float, nbar: float) -> float:
    if dn == 0:
        return max(0.0, 1.0 - s * (2.0 * nbar + 1.0))
    if dn == 1:
        return s * (nbar + 1.0)
    if dn == -1:
        return s * nbar
    if dn == 2:
        return 0.5 * s * s * (nbar + 1.0) ** 2
    if dn == -2:
        return 0.5 * s * s * nbar**2
    return 0.0


def _axial_factor(dn: int, e: float, nbar: float, even: float, odd: float) -> float:
    if dn % 2 == 0:
        return even * _transverse_factor(dn, e, nbar)
    return odd * _transverse_factor(dn, e, nbar)


def line_weights(g: SpectrumGeometry, max_order: int = 2) -> list[SpectrumLine]:
    """All lines with total sideband order |dnx| + |dny| + |dnz| <= ``max_order``."""
    if max_order not in (1, 2):
        raise ValueError(f"max_order must be 1 or 2, got {max_order}")
    even, odd = standing_wave_factors(g.phi)
    sx = g.projections[0] ** 2 * g.lamb_dicke_sq[0]
    sy = g.projections[1] ** 2 * g.lamb_dicke_sq[1]
    ez = g.lamb_dicke_sq[2]
    nx, ny, nz = g.occupations
    wx, wy, wz = g.trap_frequencies

    lines = []
    orders = range(-max_order, max_order + 1)
    for dnx, dny, dnz in itertools.product(orders, orders, orders):
        if abs(dnx) + abs(dny) + abs(dnz) > max_order:
            continue
        weight = (
            _transverse_factor(dnx, sx, nx)
            * _transverse_factor(dny, sy, ny)
            * _axial_factor(dnz, ez, nz, even, odd)
        )
        lines.append(SpectrumLine(dnx * wx + dny * wy + dnz * wz, weight, (dnx, dny, dnz)))
    return lines


def find_line(lines, order) -> SpectrumLine:
    for line in lines:
        if line.order == tuple(order):
            return line
    raise KeyError(order)


def lorentzian(x, fwhm):
    """Peak-normalised Lorentzian with full width ``fwhm``."""
    return 1.0 / (1.0 + (2.0 * np.asarray(x, dtype=float) / fwhm) ** 2)


def spectrum_profile(lines, total_linewidth: float, amplitude_scale: float, grid) -> SpectrumProfile:
    if not total_linewidth > 0:
        raise ValueError("total_linewidth must be positive")
    x = np.asarray(grid, dtype=float)
    # fixed summation order so reordering the input cannot change the result
    ordered = sorted(lines, key=lambda ln: (ln.order, ln.detuning_offset, ln.weight))
    rate = np.zeros_like(x)
    for ln in ordered:
        rate += ln.weight * amplitude_scale * lorentzian(x - ln.detuning_offset, total_linewidth)
    return SpectrumProfile(grid=x, rate=rate, linewidth_used=total_linewidth, lines=tuple(ordered))


def published_geometry(phi: float, occupations=(10.0, 10.0, 10.0), eta_ld_sq_z: float | None = None) -> SpectrumGeometry:
    """Trap frequencies 2pi x (1.45, 1.20, 0.87) MHz with recoil parameters for 88Sr+ at 422 nm."""
    from .core_model import SR88, lamb_dicke_sq

    freqs = (TWO_PI * 1.45e6, TWO_PI * 1.20e6, TWO_PI * 0.87e6)
    ld = tuple(lamb_dicke_sq(SR88, w) for w in freqs)
    if eta_ld_sq_z is not None:
        ld = (ld[0], ld[1], eta_ld_sq_z)
    return SpectrumGeometry(
        trap_frequencies=freqs, phi=phi, lamb_dicke_sq=ld, occupations=tuple(occupations)
    )


# Classification thresholds on the axial fraction A_ax / (A_ax + A_carrier),
# where A_ax sums the two first-order axial sidebands.
ANTINODE_MAX_FRACTION = 0.05
NODE_MIN_FRACTION = 0.85


@dataclass(frozen=True)
class PositionClassification:
    position: str  # "antinode" | "node" | "intermediate"
    confidence: float
    axial_fraction: float
    axial_fraction_sigma: float


def classify_position(data, trap_frequencies, linewidth_guess: float | None = None) -> PositionClassification:
    """Infer the standing-wave position from a measured spectrum.

    Fits Lorentzians at the carrier and all first-order sidebands and takes
    the fraction of first-order axial amplitude relative to axial + carrier.
    Pure antinode spectra have no axial first-order line; pure node spectra
    have no carrier. Thresholds ``ANTINODE_MAX_FRACTION`` and
    ``NODE_MIN_FRACTION`` leave room for residual leakage.
    """
    from scipy.stats import norm

    from .fitkit import fit_spectrum

    wx, wy, wz = trap_frequencies
    x = np.asarray(data.x)
    width = linewidth_guess if linewidth_guess is not None else TWO_PI * 150e3
    needed = (0.0, -wz, wz)
    if any(c - width / 2 < x.min() or c + width / 2 > x.max() for c in needed):
        raise CoverageError("spectrum must span the carrier and both first-order axial sidebands")

    centers = [0.0, -wz, wz, -wy, wy, -wx, wx]
    keep = [c for c in centers if x.min() <= c <= x.max()]
    res = fit_spectrum(data, keep, width_guess=width)
    params = res.parameters
    names = res.names
    groups = res.diagnostics["groups"]

    def amp_index(line):
        group = next(g for g in groups if line in g)
        return names.index(f"amp_{group[0]}")

    i_car, i_lo, i_hi = amp_index(0), amp_index(1), amp_index(2)
    a_car = max(params[names[i_car]], 0.0)
    a_ax = max(params[names[i_lo]] + params[names[i_hi]], 0.0)
    total = a_car + a_ax
    if total <= 0:
        raise CoverageError("no carrier or axial signal above zero")
    frac = a_ax / total
    grad = np.zeros(len(names))
    grad[i_car] = -a_ax / total**2
    grad[i_lo] += a_car / total**2
    grad[i_hi] += a_car / total**2
    cov = res.covariance
    sigma = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    s = max(sigma, 1e-12)

    if frac <= ANTINODE_MAX_FRACTION:
        label, conf = "antinode", norm.cdf((ANTINODE_MAX_FRACTION - frac) / s)
    elif frac >= NODE_MIN_FRACTION:
        label, conf = "node", norm.cdf((frac - NODE_MIN_FRACTION) / s)
    else:
        label = "intermediate"
        conf = norm.cdf((frac - ANTINODE_MAX_FRACTION) / s) - norm.cdf((frac - NODE_MIN_FRACTION) / s)
    return PositionClassification(label, float(conf), float(frac), sigma)
