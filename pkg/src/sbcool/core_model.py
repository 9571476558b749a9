"""Closed-form rate-equation model for one-dimensional cavity sideband cooling.

All frequencies are angular (rad/s); rates are events per second. The cooled
mode is the axial mode along the cavity axis with frequency ``omega``.

The mean occupation obeys the exact linear equation

    d<n>/dt = -(R_minus - R_plus) <n> + R_plus + N_plus

so the trajectory closed forms below are exact for the (untruncated)
birth-death chain defined by the rates.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .constants import ATOMIC_MASS_UNIT, HBAR, LAMB_DICKE_WARN, TWO_PI

Branch = Literal["red", "carrier", "blue"]
BRANCHES: tuple[Branch, ...] = ("red", "carrier", "blue")


class ModelDomainError(ValueError):
    """Input outside the domain where the model is defined."""


class NoSteadyStateError(ModelDomainError):
    """The requested steady state diverges (no cavity cooling)."""


@dataclass(frozen=True)
class IonSpecies:
    mass: float  # kg
    wavelength: float  # m
    atomic_linewidth: float = 0.0  # rad/s, metadata only
    name: str = ""

    def __post_init__(self):
        if not self.mass > 0:
            raise ModelDomainError(f"mass must be positive, got {self.mass}")
        if not self.wavelength > 0:
            raise ModelDomainError(f"wavelength must be positive, got {self.wavelength}")

    @property
    def k(self) -> float:
        """Optical wavenumber 2*pi/lambda in 1/m."""
        return TWO_PI / self.wavelength

    @classmethod
    def from_amu(cls, mass_amu: float, wavelength_nm: float, **kw) -> "IonSpecies":
        return cls(mass=mass_amu * ATOMIC_MASS_UNIT, wavelength=wavelength_nm * 1e-9, **kw)


SR88 = IonSpecies.from_amu(88.0, 422.0, atomic_linewidth=TWO_PI * 20.2e6, name="88Sr+")


@dataclass(frozen=True)
class CavityParams:
    finesse: float
    waist: float  # m
    linewidth: float  # rad/s, energy decay rate
    length: float = 0.0  # m, metadata

    def __post_init__(self):
        for name in ("finesse", "waist", "linewidth"):
            if not getattr(self, name) > 0:
                raise ModelDomainError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class PhysicalParams:
    """Every constant entering the rate equations, in coherent SI-angular units."""

    kappa: float
    omega: float
    gamma_sc: float
    eta: float
    eta_ld_sq: float
    c_factor: float = 1.0 / 3.0
    n_dot_ext: float = 0.0
    delta_lc: float = 0.0
    delta_ci: float = 0.0  # labeling only

    def __post_init__(self):
        for name in ("kappa", "omega", "gamma_sc", "eta_ld_sq"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ModelDomainError(f"{name} must be positive and finite, got {v}")
        for name in ("eta", "c_factor", "n_dot_ext"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ModelDomainError(f"{name} must be non-negative and finite, got {v}")
        if not math.isfinite(self.delta_lc):
            raise ModelDomainError("delta_lc must be finite")

    def replace(self, **changes) -> "PhysicalParams":
        return dataclasses.replace(self, **changes)

    def for_branch(self, branch: Branch) -> "PhysicalParams":
        return self.replace(delta_lc=branch_detuning(self.omega, branch))


@dataclass(frozen=True)
class Rates:
    R_minus: float
    R_plus: float
    N_plus: float


@dataclass(frozen=True)
class CoolingCurve:
    times: np.ndarray
    mean_n: np.ndarray
    branch: Branch
    n0: float = 0.0
    params: PhysicalParams | None = field(default=None, compare=False)


def branch_detuning(omega: float, branch: Branch) -> float:
    try:
        return {"red": -omega, "carrier": 0.0, "blue": omega}[branch]
    except KeyError:
        raise ValueError(f"unknown branch {branch!r}; expected one of {BRANCHES}") from None


def lamb_dicke_sq(species: IonSpecies, omega: float) -> float:
    """Recoil energy over the motional quantum, hbar k^2 / (2 m omega)."""
    if not omega > 0:
        raise ModelDomainError(f"trap frequency must be positive, got {omega}")
    return HBAR * species.k**2 / (2.0 * species.mass * omega)


def bare_cooperativity(cavity: CavityParams, wavelength: float) -> float:
    """Two-level antinode cooperativity 24 F / (pi k^2 w0^2)."""
    if not wavelength > 0:
        raise ModelDomainError(f"wavelength must be positive, got {wavelength}")
    k = TWO_PI / wavelength
    return 24.0 * cavity.finesse / (math.pi * k**2 * cavity.waist**2)


def effective_cooperativity(eta0: float, factors: Sequence[float] = ()) -> float:
    """Reduce ``eta0`` by a product of independent efficiency factors in (0, 1]."""
    if eta0 < 0:
        raise ModelDomainError(f"eta0 must be non-negative, got {eta0}")
    out = eta0
    for f in factors:
        if not 0.0 < f <= 1.0:
            raise ModelDomainError(f"reduction factor {f} outside (0, 1]")
        out *= f
    return out


def cavity_scatter_rate(eta, gamma_sc, gamma_sat):
    """Saturating cavity scatter rate eta*G/(1 + G/G_sat); vectorised over gamma_sc."""
    if np.any(np.asarray(gamma_sat) <= 0):
        raise ModelDomainError("gamma_sat must be positive")
    g = np.asarray(gamma_sc, dtype=float)
    if np.any(g < 0):
        raise ModelDomainError("gamma_sc must be non-negative")
    out = eta * g / (1.0 + g / gamma_sat)
    return float(out) if out.ndim == 0 else out


def transition_rates(p: PhysicalParams) -> Rates:
    """Coefficients of the |n> -> |n-1> and |n> -> |n+1> rates at detuning ``p.delta_lc``."""
    base = p.gamma_sc * p.eta * p.eta_ld_sq
    r_minus = base / (1.0 + 4.0 * (p.delta_lc + p.omega) ** 2 / p.kappa**2)
    r_plus = base / (1.0 + 4.0 * (p.delta_lc - p.omega) ** 2 / p.kappa**2)
    n_plus = p.gamma_sc * p.c_factor * p.eta_ld_sq + p.n_dot_ext
    return Rates(r_minus, r_plus, n_plus)


def cooling_rate_constant(p: PhysicalParams) -> float:
    """Net cooling rate W = R_minus - R_plus on the red sideband (delta_lc = -omega).

    Equal to gamma_sc*eta*eta_ld_sq / (1 + (kappa/4 omega)^2). The blue branch
    heats at the same rate by reflection symmetry of the two Lorentzians.
    """
    r = transition_rates(p.for_branch("red"))
    w = r.R_minus - r.R_plus
    if w < 0:
        raise AssertionError(f"negative cooling rate constant {w} for {p}")
    return w


def cooling_rate_constant_printed(p: PhysicalParams) -> float:
    """The alternative closed form with denominator 1 + kappa^2/(2 omega)^2.

    Kept only for comparison; it does not satisfy the balance identity with
    :func:`steady_state_n`. Use :func:`cooling_rate_constant`.
    """
    return p.gamma_sc * p.eta * p.eta_ld_sq / (1.0 + p.kappa**2 / (2.0 * p.omega) ** 2)


def steady_state_n(p: PhysicalParams) -> float:
    """Steady-state mean occupation under red-sideband cavity cooling."""
    if p.eta <= 0:
        raise NoSteadyStateError("eta = 0: no cavity cooling, the occupation diverges")
    a = (p.kappa / (4.0 * p.omega)) ** 2
    return a + (p.c_factor / p.eta + p.n_dot_ext / (p.gamma_sc * p.eta * p.eta_ld_sq)) * (1.0 + a)


def mean_n_trajectory(p: PhysicalParams, branch: Branch, n0: float, times) -> CoolingCurve:
    """Closed-form <n>(t) for the red, carrier or blue cavity sideband.

    ``p.delta_lc`` is ignored; the branch fixes the laser-cavity detuning.
    """
    if branch not in BRANCHES:
        raise ValueError(f"unknown branch {branch!r}; expected one of {BRANCHES}")
    if n0 < 0:
        raise ModelDomainError(f"n0 must be non-negative, got {n0}")
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise ModelDomainError("times must be non-negative")

    if branch == "carrier":
        r = transition_rates(p.for_branch("carrier"))
        mean = n0 + (r.R_plus + r.N_plus) * t
    else:
        w = cooling_rate_constant(p)
        n_inf = steady_state_n(p)
        if branch == "red":
            decay = np.exp(-w * t)
            mean = n0 * decay + n_inf * (1.0 - decay)
        else:
            mean = (n0 + n_inf + 1.0) * np.exp(w * t) - (n_inf + 1.0)
    return CoolingCurve(times=t, mean_n=mean, branch=branch, n0=float(n0), params=p)


def lamb_dicke_parameter_product(p: PhysicalParams, mean_n: float) -> float:
    """eta_ld_sq * <n>; the rate model needs this well below one."""
    return p.eta_ld_sq * mean_n


def lamb_dicke_valid(p: PhysicalParams, mean_n: float, threshold: float = LAMB_DICKE_WARN) -> bool:
    return lamb_dicke_parameter_product(p, mean_n) <= threshold


def params_from_species(
    species: IonSpecies,
    *,
    kappa: float,
    omega: float,
    gamma_sc: float,
    eta: float,
    c_factor: float = 1.0 / 3.0,
    n_dot_ext: float = 0.0,
    delta_lc: float = 0.0,
    delta_ci: float = 0.0,
) -> PhysicalParams:
    return PhysicalParams(
        kappa=kappa,
        omega=omega,
        gamma_sc=gamma_sc,
        eta=eta,
        eta_ld_sq=lamb_dicke_sq(species, omega),
        c_factor=c_factor,
        n_dot_ext=n_dot_ext,
        delta_lc=delta_lc,
        delta_ci=delta_ci,
    )


def published_dynamics_params() -> PhysicalParams:
    """Parameters of the published three-branch cooling-dynamics fit (node, delta_ci = -2pi*10 MHz)."""
    return params_from_species(
        SR88,
        kappa=TWO_PI * 117e3,
        omega=TWO_PI * 0.87e6,
        gamma_sc=2.87e6,
        eta=0.0148,
        c_factor=1.0 / 3.0,
        n_dot_ext=17.0,
        delta_ci=-TWO_PI * 10e6,
    )
