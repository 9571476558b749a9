"""Weighted nonlinear least squares and the three experiment-specific fit drivers.

The engine is a Levenberg-Marquardt loop:

* central finite-difference Jacobian, per-parameter step ``max(1e-6 |x|, 1e-12)``;
* step from the damped problem ``min |J d + r|^2 + lam |D d|^2`` with MINPACK-style
  column scaling ``D`` (running maximum of the Jacobian column norms);
* the first trial is an undamped Gauss-Newton step; damping is multiplied by 10
  on a rejected step (starting at 1e-3) and divided by 10 on an accepted one;
* bounds are enforced by projecting each trial point onto the box;
* covariance is ``(J^T J)^-1`` at the optimum scaled by the reduced chi-square.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .core_model import (
    BRANCHES,
    ModelDomainError,
    PhysicalParams,
    cavity_scatter_rate,
    mean_n_trajectory,
    steady_state_n,
)
from .spectrum import lorentzian


class DegenerateFitError(ValueError):
    """The normal matrix is singular: some parameter combination is not constrained by the data."""

    def __init__(self, message: str, combination: Mapping[str, float] | None = None):
        super().__init__(message)
        self.combination = dict(combination or {})


class FitDomainError(ModelDomainError):
    """The model returned non-finite residuals."""


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    sigma_y: np.ndarray
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.sigma_y = np.broadcast_to(np.asarray(self.sigma_y, dtype=float), self.y.shape).copy()
        if not (self.x.shape == self.y.shape == self.sigma_y.shape) or self.x.ndim != 1:
            raise ValueError("x, y and sigma_y must be 1-d arrays of equal length")
        if not np.all(np.isfinite(self.x)):
            raise ValueError(f"dataset {self.label!r}: x must be finite")
        if not np.all(np.isfinite(self.y)):
            raise ValueError(f"dataset {self.label!r}: y must be finite")
        if not np.all(self.sigma_y > 0):
            raise ValueError(f"dataset {self.label!r}: sigma_y must be positive")

    def __len__(self):
        return self.x.size

    @classmethod
    def from_points(cls, points, label="", metadata=None) -> "Dataset":
        arr = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], label=label, metadata=dict(metadata or {}))

    def take(self, index) -> "Dataset":
        return Dataset(self.x[index], self.y[index], self.sigma_y[index], self.label, dict(self.metadata))

    def with_sigma(self, sigma_y) -> "Dataset":
        return Dataset(self.x, self.y, sigma_y, self.label, dict(self.metadata))


@dataclass
class FitProblem:
    residual: Callable[[np.ndarray], np.ndarray]
    x0: Sequence[float]
    names: Sequence[str]
    lower: Sequence[float] | None = None
    upper: Sequence[float] | None = None
    xtol: float = 1e-10
    ftol: float = 1e-12
    max_iter: int = 200
    # per-parameter absolute floor on the finite-difference step, for
    # parameters whose natural scale is far from their value (e.g. a center at 0)
    step_floor: Sequence[float] | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.names = list(self.names)
        n = self.x0.size
        if len(self.names) != n:
            raise ValueError("names and x0 differ in length")
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if np.any(self.x0 < self.lower) or np.any(self.x0 > self.upper):
            raise ValueError("initial parameters lie outside the bounds")
        floor = 1e-12 if self.step_floor is None else self.step_floor
        self.step_floor = np.broadcast_to(np.asarray(floor, dtype=float), (n,)).copy()


@dataclass
class FitResult:
    names: list[str]
    values: np.ndarray
    covariance: np.ndarray
    chi_sq: float
    dof: int
    n_iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    derived: dict = field(default_factory=dict)

    @property
    def reduced_chi_sq(self) -> float:
        return self.chi_sq / self.dof

    @property
    def parameters(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.values)))

    @property
    def uncertainties(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, np.sqrt(np.clip(np.diag(self.covariance), 0, None)))))

    def to_document(self) -> dict:
        unc = self.uncertainties
        return {
            "names": list(self.names),
            "values": [float(v) for v in self.values],
            "uncertainties": [unc[n] for n in self.names],
            "covariance": [float(c) for c in self.covariance.ravel()],
            "reduced_chi_sq": float(self.reduced_chi_sq),
            "chi_sq": float(self.chi_sq),
            "dof": int(self.dof),
            "n_iterations": int(self.n_iterations),
            "converged": bool(self.converged),
            "warnings": list(self.warnings),
            "derived": {k: [float(v[0]), float(v[1])] for k, v in self.derived.items()},
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "FitResult":
        n = len(doc["names"])
        return cls(
            names=list(doc["names"]),
            values=np.asarray(doc["values"], dtype=float),
            covariance=np.asarray(doc["covariance"], dtype=float).reshape(n, n),
            chi_sq=float(doc["chi_sq"]),
            dof=int(doc["dof"]),
            n_iterations=int(doc["n_iterations"]),
            converged=bool(doc["converged"]),
            warnings=list(doc.get("warnings", [])),
            derived={k: tuple(v) for k, v in doc.get("derived", {}).items()},
        )


def jacobian_fd(fun, x, rel_step=1e-6, abs_floor=1e-12, lower=None, upper=None) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at ``x``.

    Where a central step would cross a bound the difference is one-sided.
    """
    x = np.asarray(x, dtype=float)
    lo = np.full(x.size, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(x.size, np.inf) if upper is None else np.asarray(upper, dtype=float)
    floor = np.broadcast_to(np.asarray(abs_floor, dtype=float), x.shape)
    cols = []
    for j in range(x.size):
        h = max(rel_step * abs(x[j]), floor[j])
        xp, xm = x.copy(), x.copy()
        xp[j] = x[j] + h if x[j] + h <= hi[j] else x[j]
        xm[j] = x[j] - h if x[j] - h >= lo[j] else x[j]
        cols.append((np.asarray(fun(xp)) - np.asarray(fun(xm))) / (xp[j] - xm[j]))
    return np.column_stack(cols)


def _describe(names, vec, threshold=0.1):
    vec = vec / np.max(np.abs(vec))
    terms = {n: float(v) for n, v in zip(names, vec) if abs(v) >= threshold}
    text = " ".join(f"{v:+.3g}*{n}" for n, v in terms.items())
    return terms, text


def _check_identifiable(jac, names, rcond):
    norms = np.linalg.norm(jac, axis=0)
    dead = [n for n, c in zip(names, norms) if not c > 0]
    if dead:
        raise DegenerateFitError(
            f"degenerate fit: residuals do not depend on {', '.join(dead)}", {n: 1.0 for n in dead}
        )
    _, s, vt = np.linalg.svd(jac / norms, full_matrices=False)
    if s[-1] < rcond * s[0]:
        # null direction back in (relative) parameter units
        terms, text = _describe(names, vt[-1])
        raise DegenerateFitError(
            f"degenerate fit: the relative parameter combination ({text}) is unconstrained; "
            f"singular value ratio {s[-1] / s[0]:.2e}",
            terms,
        )
    return norms


def solve_least_squares(prob: FitProblem, rcond: float = 1e-6) -> FitResult:
    names = prob.names
    lo, hi = prob.lower, prob.upper

    def res(x):
        return np.asarray(prob.residual(x), dtype=float)

    x = prob.x0.copy()
    r = res(x)
    if not np.all(np.isfinite(r)):
        raise FitDomainError(f"non-finite residuals at start, parameters {dict(zip(names, x))}")
    if r.size < x.size:
        raise ValueError(f"{r.size} residuals cannot constrain {x.size} parameters")
    cost = float(r @ r)
    cost0 = cost
    history = [cost]
    lam = 0.0
    scale = np.zeros(x.size)
    converged = False
    termination = "max_iter"
    n_iter = 0

    for _ in range(prob.max_iter):
        jac = jacobian_fd(res, x, abs_floor=prob.step_floor, lower=lo, upper=hi)
        if not np.all(np.isfinite(jac)):
            raise FitDomainError(f"non-finite Jacobian at parameters {dict(zip(names, x))}")
        scale = np.maximum(scale, np.linalg.norm(jac, axis=0))
        d = np.where(scale > 0, scale, 1.0)

        accepted = False
        while True:
            a = np.vstack([jac, math.sqrt(lam) * np.diag(d)]) if lam > 0 else jac
            b = np.concatenate([-r, np.zeros(x.size)]) if lam > 0 else -r
            step = np.linalg.lstsq(a, b, rcond=None)[0]
            x_new = np.clip(x + step, lo, hi)
            step = x_new - x
            r_new = res(x_new)
            cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if cost_new < cost or (cost_new == cost == 0.0):
                accepted = True
                lam = lam / 10.0 if lam >= 1e-12 else 0.0
                break
            lam = max(10.0 * lam, 1e-3)
            if lam > 1e16:
                break
        if not accepted:
            converged = True
            termination = "no further decrease possible"
            break

        n_iter += 1
        small_step = np.linalg.norm(step) <= prob.xtol * (np.linalg.norm(x) + prob.xtol)
        rel_drop = (cost - cost_new) / cost if cost > 0 else 0.0
        x, r = x_new, r_new
        cost = cost_new
        history.append(cost)
        if cost <= 1e-28 * cost0:
            converged, termination = True, "residuals at round-off level"
            break
        if small_step and rel_drop <= prob.ftol:
            converged, termination = True, "step and cost change below tolerance"
            break

    jac = jacobian_fd(res, x, abs_floor=prob.step_floor, lower=lo, upper=hi)
    norms = _check_identifiable(jac, names, rcond)
    dof = r.size - x.size
    if dof <= 0:
        raise ValueError("need more residuals than parameters for a reduced chi-square")
    chi_sq = float(r @ r)
    jn = jac / norms
    _, s, vt = np.linalg.svd(jn, full_matrices=False)
    cov_n = (vt.T / s**2) @ vt
    cov = cov_n / np.outer(norms, norms) * (chi_sq / dof)
    cov = 0.5 * (cov + cov.T)

    at_bound = {n: bool(v <= l or v >= u) for n, v, l, u in zip(names, x, lo, hi)}
    return FitResult(
        names=list(names),
        values=x,
        covariance=cov,
        chi_sq=chi_sq,
        dof=dof,
        n_iterations=n_iter,
        converged=converged,
        diagnostics={
            "cost_history": history,
            "termination": termination,
            "at_bound": at_bound,
            "damping": lam,
            "jacobian": jac,
        },
    )


# --- saturation ---------------------------------------------------------------

# Data must reach this fraction of the fitted saturation rate for it to be identifiable.
SATURATION_COVERAGE = 0.1


def fit_saturation(d: Dataset, eta0: float | None = None, gamma_sat0: float | None = None) -> FitResult:
    """Fit cavity scatter rate versus free-space rate to eta*G/(1 + G/G_sat).

    x is the free-space scattering rate, y the cavity scattering rate.
    """
    if len(d) < 3:
        raise ValueError("saturation fit needs at least three points")
    x, y, s = d.x, d.y, d.sigma_y
    w = 1.0 / s**2

    # no significant signal: report the through-origin slope, saturation unconstrained
    slope = float(np.sum(w * x * y) / np.sum(w * x * x))
    slope_sigma = float(1.0 / math.sqrt(np.sum(w * x * x)))
    chi = (y - slope * x) / s
    red = float(chi @ chi) / max(len(d) - 1, 1)
    if abs(slope) < 2.0 * slope_sigma * math.sqrt(max(red, 1.0)):
        # chi2 scaling floored at 1 so exactly-zero data keep a finite error bar
        sig = slope_sigma * math.sqrt(max(red, 1.0))
        return FitResult(
            names=["eta", "gamma_sat"],
            values=np.array([slope, math.nan]),
            covariance=np.array([[sig**2, math.nan], [math.nan, math.nan]]),
            chi_sq=float(chi @ chi),
            dof=max(len(d) - 1, 1),
            n_iterations=0,
            converged=True,
            warnings=["no significant cavity signal; gamma_sat unconstrained"],
        )

    if eta0 is None or gamma_sat0 is None:
        # x/y = 1/eta + x/(eta*G_sat) is linear in x
        good = y > 0
        if good.sum() >= 2:
            coef = np.polyfit(x[good], x[good] / y[good], 1)
            e0 = 1.0 / coef[1] if coef[1] > 0 else slope
            g0 = coef[1] / coef[0] if coef[0] > 0 and coef[1] > 0 else 10 * x.max()
        else:
            e0, g0 = slope, 10 * x.max()
        eta0 = e0 if eta0 is None else eta0
        gamma_sat0 = g0 if gamma_sat0 is None else gamma_sat0

    def residual(p):
        return (y - cavity_scatter_rate(p[0], x, p[1])) / s

    prob = FitProblem(residual, [eta0, gamma_sat0], ["eta", "gamma_sat"], lower=[-np.inf, 1e-300])
    res = solve_least_squares(prob)
    g_sat = res.parameters["gamma_sat"]
    reach = x.max() / g_sat
    if reach < SATURATION_COVERAGE or res.uncertainties["gamma_sat"] > g_sat:
        raise DegenerateFitError(
            f"gamma_sat unidentifiable: data reach only {reach:.1%} of the fitted saturation rate",
            {"gamma_sat": 1.0},
        )
    return res


# --- spectrum -----------------------------------------------------------------


def _linear_amplitudes(x, y, s, centers, groups, width):
    basis = np.column_stack(
        [sum(lorentzian(x - centers[i], width) for i in g) / s for g in groups]
    )
    return np.linalg.lstsq(basis, y / s, rcond=None)[0], basis


def fit_spectrum(
    d: Dataset,
    line_centers: Sequence[float],
    width_guess: float | None = None,
    float_centers: bool | Sequence[bool] = False,
) -> FitResult:
    """Sum of Lorentzians with one shared FWHM and one amplitude per line.

    Parameters are ``width``, ``amp_<i>`` for each line (or tied group) and,
    for lines with a floating center, ``center_<i>``. Centers closer than the
    data grid step are tied to one amplitude with a warning.
    """
    x, y, s = d.x, d.y, d.sigma_y
    centers = np.asarray(line_centers, dtype=float)
    if centers.size == 0:
        raise ValueError("need at least one line center")
    if np.any(centers < x.min()) or np.any(centers > x.max()):
        raise ValueError("line centers must lie within the data span")
    floating = np.broadcast_to(np.asarray(float_centers, dtype=bool), centers.shape)

    grid_step = float(np.min(np.diff(np.unique(x)))) if len(np.unique(x)) > 1 else 0.0
    order = np.argsort(centers, kind="stable")
    groups: list[list[int]] = []
    for i in order:
        if groups and abs(centers[i] - centers[groups[-1][-1]]) < grid_step:
            groups[-1].append(int(i))
        else:
            groups.append([int(i)])
    groups.sort(key=lambda g: g[0])
    notes = []
    for g in groups:
        if len(g) > 1:
            msg = f"line centers {g} closer than one grid step; amplitudes tied"
            warnings.warn(msg)
            notes.append(msg)

    if width_guess is None:
        span = x.max() - x.min()
        trial = np.geomspace(max(grid_step, span * 1e-4), span / 2, 40)
        costs = []
        for wdt in trial:
            amps, basis = _linear_amplitudes(x, y, s, centers, groups, wdt)
            rr = basis @ amps - y / s
            costs.append(rr @ rr)
        width_guess = float(trial[int(np.argmin(costs))])
    amps0, _ = _linear_amplitudes(x, y, s, centers, groups, width_guess)

    float_idx = [i for i in range(centers.size) if floating[i]]
    names = ["width"] + [f"amp_{g[0]}" for g in groups] + [f"center_{i}" for i in float_idx]
    x0 = np.concatenate([[width_guess], amps0, centers[float_idx]])
    lower = np.concatenate([[0.0], np.full(len(groups), -np.inf), np.full(len(float_idx), x.min())])
    upper = np.concatenate([[np.inf], np.full(len(groups), np.inf), np.full(len(float_idx), x.max())])
    lower[0] = 1e-300
    n_g = len(groups)

    def model(p):
        c = centers.copy()
        c[float_idx] = p[1 + n_g :]
        out = np.zeros_like(x)
        for k, g in enumerate(groups):
            for i in g:
                out += p[1 + k] * lorentzian(x - c[i], p[0])
        return out

    floor = np.full(len(names), 1e-12)
    floor[1 + n_g :] = 1e-6 * (x.max() - x.min())
    res = solve_least_squares(
        FitProblem(lambda p: (y - model(p)) / s, x0, names, lower, upper, step_floor=floor)
    )
    res.warnings.extend(notes)
    res.diagnostics["groups"] = groups
    return res


# --- cooling dynamics ---------------------------------------------------------

DYNAMICS_PARAMS = ("n0", "gamma_sc", "eta")
FLOATABLE = ("c_factor", "n_dot_ext")


def _dynamics_guess(datasets, base: PhysicalParams):
    guess = {"n0": 0.1, "gamma_sc": base.gamma_sc, "eta": max(base.eta, 1e-3)}
    if "carrier" in datasets:
        c = datasets["carrier"]
        slope, icpt = np.polyfit(c.x, c.y, 1, w=1.0 / c.sigma_y)
        per_gamma = base.c_factor * base.eta_ld_sq
        if slope > base.n_dot_ext and per_gamma > 0:
            guess["gamma_sc"] = (slope - base.n_dot_ext) / per_gamma
        guess["n0"] = max(float(icpt), 1e-3)
    if "red" in datasets:
        r = datasets["red"]
        late = float(r.y[np.argmax(r.x)])
        if late > 0 and base.c_factor > 0:
            guess["eta"] = base.c_factor / late
    return guess


def _validity_warnings(params, datasets, values):
    out = []
    limit = 1.0 / params.eta_ld_sq
    for branch, dset in datasets.items():
        peak = float(np.max(mean_n_trajectory(params, branch, max(values[0], 0.0), dset.x).mean_n))
        if peak > limit:
            out.append(
                f"{branch} branch: predicted <n> reaches {peak:.1f} > 1/eta_ld_sq = {limit:.1f}; "
                "outside the Lamb-Dicke regime of the rate model"
            )
    return out


def fit_dynamics(
    datasets: Mapping[str, Dataset],
    base: PhysicalParams,
    initial: Mapping[str, float] | None = None,
    float_params: Sequence[str] = (),
) -> FitResult:
    """Fit shared (n0, gamma_sc, eta) to any subset of the three cooling branches.

    ``base`` supplies kappa, omega, eta_ld_sq, c_factor and n_dot_ext. The last
    two are held fixed unless named in ``float_params``.
    """
    for b in datasets:
        if b not in BRANCHES:
            raise ValueError(f"unknown branch {b!r}")
    if not datasets:
        raise ValueError("no datasets given")
    extra = list(dict.fromkeys(float_params))
    bad = [k for k in extra if k not in FLOATABLE]
    if bad:
        raise ValueError(f"can only float {FLOATABLE}, got {bad}")
    names = list(DYNAMICS_PARAMS) + extra
    guess = _dynamics_guess(datasets, base)
    guess.update({k: getattr(base, k) for k in extra})
    guess.update(initial or {})
    x0 = [guess[k] for k in names]
    order = [b for b in BRANCHES if b in datasets]

    def params_at(p):
        return base.replace(**{k: v for k, v in zip(names[1:], p[1:])})

    def residual(p):
        try:
            pp = params_at(p)
        except ModelDomainError:
            return np.full(sum(len(datasets[b]) for b in order), np.nan)
        parts = []
        for b in order:
            dset = datasets[b]
            model = mean_n_trajectory(pp, b, max(p[0], 0.0), dset.x).mean_n
            parts.append((dset.y - model) / dset.sigma_y)
        return np.concatenate(parts)

    lower = [0.0, 1e-300, 1e-300] + [0.0] * len(extra)
    prob = FitProblem(residual, x0, names, lower=lower, upper=[np.inf] * len(names))
    res = solve_least_squares(prob)
    fitted = params_at(res.values)

    def n_inf(p):
        return steady_state_n(params_at(p))

    grad = jacobian_fd(lambda p: np.array([n_inf(p)]), res.values)[0]
    res.derived["n_inf"] = (n_inf(res.values), math.sqrt(max(grad @ res.covariance @ grad, 0.0)))
    res.warnings.extend(_validity_warnings(fitted, {b: datasets[b] for b in order}, res.values))
    res.diagnostics["branches"] = order
    return res


def fit_dynamics_simultaneous(
    red: Dataset, carrier: Dataset, blue: Dataset, base: PhysicalParams, initial=None, float_params=()
) -> FitResult:
    """Simultaneous three-branch fit of the closed-form <n>(t) curves."""
    named = {"red": red, "carrier": carrier, "blue": blue}
    missing = [b for b, dset in named.items() if dset is None]
    if missing:
        raise ValueError(f"missing branch dataset(s): {', '.join(missing)}")
    return fit_dynamics(named, base, initial, float_params)
