"""Brute-force Fock-space oracle for the cooling rate equations.

The occupation number performs a birth-death walk with rates
``down[n] = R_minus * n`` and ``up[n] = R_plus * (n + 1) + N_plus``.
This module evolves the full truncated probability vector with fixed-step
RK4, solves for its stationary state, and samples exact jump trajectories.
None of it uses the closed forms in :mod:`sbcool.core_model`; it exists to
check them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .constants import LAMB_DICKE_WARN
from .core_model import PhysicalParams, transition_rates

RNG_ALGORITHM = "numpy.Philox4x64 via SeedSequence(seed, spawn_key=(trajectory,))"

NEGATIVE_TOLERANCE = 1e-12
NORM_TOLERANCE = 1e-9


class IntegratorInstabilityError(RuntimeError):
    pass


class NoStationaryStateError(ValueError):
    pass


@dataclass(frozen=True)
class FockDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probs must be a non-empty vector")
        if np.any(p < -NEGATIVE_TOLERANCE) or np.any(p > 1 + NORM_TOLERANCE):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def tail_mass(self) -> float:
        return float(self.probs[-1])

    @classmethod
    def ground(cls, n_max: int) -> "FockDistribution":
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return cls(p)

    @classmethod
    def fock(cls, n: int, n_max: int) -> "FockDistribution":
        p = np.zeros(n_max + 1)
        p[n] = 1.0
        return cls(p)

    @classmethod
    def thermal(cls, nbar: float, n_max: int) -> "FockDistribution":
        """Bose-Einstein distribution with mean ``nbar``, truncated and renormalised."""
        if nbar < 0:
            raise ValueError("nbar must be non-negative")
        if nbar == 0:
            return cls.ground(n_max)
        n = np.arange(n_max + 1)
        logp = n * math.log(nbar / (1.0 + nbar)) - math.log1p(nbar)
        p = np.exp(logp)
        return cls(p / p.sum())


@dataclass(frozen=True)
class RateMatrix:
    down: np.ndarray
    up: np.ndarray
    n_max: int
    R_minus: float = 0.0
    R_plus: float = 0.0
    N_plus: float = 0.0
    lamb_dicke_product: float = 0.0  # eta_ld_sq * n_max

    @property
    def lamb_dicke_warning(self) -> bool:
        return self.lamb_dicke_product > LAMB_DICKE_WARN

    @property
    def max_total_rate(self) -> float:
        return float(np.max(self.up + self.down))

    def generator(self) -> sp.csr_matrix:
        """Tridiagonal master-equation generator; no flux leaves the top state."""
        up = self.up.copy()
        up[-1] = 0.0
        diag = -(up + self.down)
        return sp.diags(
            [up[:-1], diag, self.down[1:]], offsets=[-1, 0, 1], format="csr"
        )


def build_rate_matrix(p: PhysicalParams, n_max: int) -> RateMatrix:
    """Birth-death rates at the laser-cavity detuning ``p.delta_lc``."""
    if int(n_max) != n_max or n_max < 1:
        raise ValueError(f"n_max must be an integer >= 1, got {n_max}")
    n_max = int(n_max)
    r = transition_rates(p)
    n = np.arange(n_max + 1, dtype=float)
    return RateMatrix(
        down=r.R_minus * n,
        up=r.R_plus * (n + 1.0) + r.N_plus,
        n_max=n_max,
        R_minus=r.R_minus,
        R_plus=r.R_plus,
        N_plus=r.N_plus,
        lamb_dicke_product=p.eta_ld_sq * n_max,
    )


def default_n_max(predicted_mean: float) -> int:
    """Truncation policy: max(200, 20 x the largest expected mean occupation)."""
    return max(200, int(math.ceil(20.0 * predicted_mean)))


@numba.njit(cache=True)
def _apply_generator(sub, diag, sup, p, out):
    # sub: inflow from n-1 (up rates), sup: inflow from n+1 (down rates)
    n = p.size
    for i in range(n):
        acc = diag[i] * p[i]
        if i > 0:
            acc += sub[i - 1] * p[i - 1]
        if i < n - 1:
            acc += sup[i] * p[i + 1]
        out[i] = acc


@numba.njit(cache=True)
def _rk4_steps(sub, diag, sup, p, h, n_steps):
    n = p.size
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    for _ in range(n_steps):
        _apply_generator(sub, diag, sup, p, k1)
        for i in range(n):
            tmp[i] = p[i] + 0.5 * h * k1[i]
        _apply_generator(sub, diag, sup, tmp, k2)
        for i in range(n):
            tmp[i] = p[i] + 0.5 * h * k2[i]
        _apply_generator(sub, diag, sup, tmp, k3)
        for i in range(n):
            tmp[i] = p[i] + h * k3[i]
        _apply_generator(sub, diag, sup, tmp, k4)
        for i in range(n):
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return p


def _step_size(m: RateMatrix, t: float, dt_max: float) -> tuple[int, float]:
    rate = m.max_total_rate
    h_cap = dt_max if rate == 0 else min(dt_max, 0.1 / rate)
    n_steps = max(1, int(math.ceil(t / h_cap - 1e-12)))
    return n_steps, t / n_steps


def evolve_distribution(
    m: RateMatrix, p0: FockDistribution, t: float, dt_max: float = math.inf
) -> FockDistribution:
    """Integrate the master equation from ``p0`` for a duration ``t``."""
    return evolve_to_times(m, p0, [t], dt_max)[0]


def evolve_to_times(
    m: RateMatrix, p0: FockDistribution, times, dt_max: float = math.inf
) -> list[FockDistribution]:
    """Distributions at each of the increasing ``times``, starting from ``p0`` at t = 0."""
    if p0.n_max != m.n_max:
        raise ValueError(f"distribution has n_max={p0.n_max}, rate matrix has {m.n_max}")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-negative and non-decreasing")
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")

    up = m.up.copy()
    up[-1] = 0.0
    sub = up[:-1].copy()
    sup = m.down[1:].copy()
    diag = -(up + m.down)
    idle = not (np.any(sub) or np.any(sup))
    p = p0.probs.copy()
    out = []
    t_now = 0.0
    for t in times:
        span = t - t_now
        if span > 0 and not idle:
            n_steps, h = _step_size(m, span, dt_max)
            p = _rk4_steps(sub, diag, sup, p, h, n_steps)
            drift = abs(p.sum() - 1.0)
            if drift > NORM_TOLERANCE * max(1, n_steps):
                raise IntegratorInstabilityError(f"probability drift {drift:.3e} after {n_steps} steps")
            if p.min() < -NEGATIVE_TOLERANCE:
                raise IntegratorInstabilityError(
                    f"negative probability {p.min():.3e}; reduce dt_max (used h={h:.3e} s)"
                )
            p = np.clip(p, 0.0, None)
            p /= p.sum()
        t_now = t
        out.append(FockDistribution(p.copy()))
    return out


def mean_n(d: FockDistribution) -> float:
    return float(np.arange(d.probs.size) @ d.probs)


def stationary_distribution(m: RateMatrix) -> FockDistribution:
    """Detailed-balance solution pi(n+1) down[n+1] = pi(n) up[n] on the truncated chain.

    Raises :class:`NoStationaryStateError` when the untruncated chain heats
    without bound (R_plus >= R_minus with a non-zero upward rate).
    """
    up = m.up[:-1]
    down = m.down[1:]
    if not np.any(up > 0):
        return FockDistribution.ground(m.n_max)
    if m.R_plus >= m.R_minus:
        raise NoStationaryStateError(
            f"R_plus={m.R_plus:.4g} >= R_minus={m.R_minus:.4g}: occupation grows without bound"
        )
    if np.any(down <= 0):
        raise NoStationaryStateError("down-rates vanish above n = 0; chain is not recurrent")
    logp = np.concatenate([[0.0], np.cumsum(np.log(up) - np.log(down))])
    logp -= logp.max()
    p = np.exp(logp)
    return FockDistribution(p / p.sum())


@dataclass(frozen=True)
class TrajectoryEnsemble:
    times: np.ndarray
    sample_mean_n: np.ndarray
    standard_error: np.ndarray
    n_trajectories: int
    seed: int
    rng_algorithm: str = RNG_ALGORITHM


def _trajectory_generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def sample_trajectories(
    p: PhysicalParams, n0: int, times, n_traj: int, seed: int, block: int = 64
) -> np.ndarray:
    """Exact event-time (Gillespie) sampling of ``n_traj`` jump trajectories.

    Returns an ``(n_traj, len(times))`` integer array of occupations on the
    grid. Trajectory ``i`` consumes only its own random stream, so the result
    does not depend on how trajectories are batched.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if int(n0) != n0 or n0 < 0:
        raise ValueError("n0 must be a non-negative integer")
    grid = np.asarray(times, dtype=float)
    if np.any(np.diff(grid) < 0) or np.any(grid < 0):
        raise ValueError("times must be non-negative and non-decreasing")
    r = transition_rates(p)
    n_grid = grid.size

    gens = [_trajectory_generator(seed, i) for i in range(n_traj)]
    buf = np.stack([g.random((block, 2)) for g in gens])
    ptr = np.zeros(n_traj, dtype=np.int64)

    n = np.full(n_traj, int(n0), dtype=np.int64)
    t = np.zeros(n_traj)
    gi = np.zeros(n_traj, dtype=np.int64)
    out = np.empty((n_traj, n_grid), dtype=np.int64)
    active = np.arange(n_traj) if n_grid else np.arange(0)

    while active.size:
        stale = active[ptr[active] >= block]
        for i in stale:
            buf[i] = gens[i].random((block, 2))
            ptr[i] = 0
        u = buf[active, ptr[active]]
        ptr[active] += 1

        na = n[active]
        up = r.R_plus * (na + 1) + r.N_plus
        tot = up + r.R_minus * na
        with np.errstate(divide="ignore"):
            dt = np.where(tot > 0, -np.log1p(-u[:, 0]) / tot, np.inf)
        t_next = t[active] + dt

        while True:
            g = gi[active]
            pending = g < n_grid
            pending[pending] = grid[g[pending]] < t_next[pending]
            if not pending.any():
                break
            rows = active[pending]
            out[rows, gi[rows]] = n[rows]
            gi[rows] += 1

        jump = np.where(u[:, 1] * tot < up, 1, -1)
        n[active] = na + jump
        t[active] = t_next
        active = active[gi[active] < n_grid]
    return out


def monte_carlo_ensemble(
    p: PhysicalParams, n0: int, times, n_traj: int, seed: int
) -> TrajectoryEnsemble:
    samples = sample_trajectories(p, n0, times, n_traj, seed)
    mean = samples.mean(axis=0)
    if n_traj > 1:
        sem = samples.std(axis=0, ddof=1) / math.sqrt(n_traj)
    else:
        sem = np.zeros_like(mean)
    return TrajectoryEnsemble(
        times=np.asarray(times, dtype=float),
        sample_mean_n=mean,
        standard_error=sem,
        n_trajectories=int(n_traj),
        seed=int(seed),
    )


def oracle_mean_trajectory(
    p: PhysicalParams, branch: str, n0: float, times, n_max: int, dt_max: float = math.inf
) -> np.ndarray:
    """Mean occupation from full distribution evolution, starting thermal with mean ``n0``."""
    m = build_rate_matrix(p.for_branch(branch), n_max)
    d0 = FockDistribution.thermal(n0, n_max)
    return np.array([mean_n(d) for d in evolve_to_times(m, d0, times, dt_max)])
