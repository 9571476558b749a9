"""Cross-module invariant battery run by ``sbcool validate``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .core_model import (
    BRANCHES,
    NoSteadyStateError,
    PhysicalParams,
    cooling_rate_constant,
    mean_n_trajectory,
    steady_state_n,
    transition_rates,
)
from .fileio import DataFormatError, read_dataset, read_json, sha256_file
from .fock_oracle import build_rate_matrix, mean_n, oracle_mean_trajectory, stationary_distribution
from .spectrum import SpectrumGeometry, find_line, line_weights

ORACLE_TIMES = (0.3, 1.0, 3.0)  # in units of 1/W
ORACLE_MEAN_CAP = 50.0  # carrier and blue are compared only while <n> stays below this
ORACLE_N_MAX = 600


@dataclass
class Check:
    name: str
    passed: bool
    measured: float = math.nan
    tolerance: float = math.nan
    detail: str = ""

    def line(self) -> str:
        if self.detail.startswith("skipped"):
            status = "SKIP"
        else:
            status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}"
        if not math.isnan(self.measured):
            text += f": measured {self.measured:.3g} (tol {self.tolerance:.3g})"
        return f"{text} {self.detail}".rstrip()


def random_params(rng: np.random.Generator, max_n_inf: float | None = None) -> PhysicalParams:
    """A physically sensible random parameter set, resampled until n_inf <= ``max_n_inf``."""
    while True:
        omega = 2 * math.pi * rng.uniform(0.3e6, 3e6)
        p = PhysicalParams(
            kappa=omega * rng.uniform(0.02, 0.8),
            omega=omega,
            gamma_sc=10 ** rng.uniform(5, 7.5),
            eta=10 ** rng.uniform(-2, -0.3),
            eta_ld_sq=rng.uniform(0.003, 0.03),
            c_factor=rng.uniform(0.1, 1.0),
            n_dot_ext=rng.uniform(0, 200),
        )
        if max_n_inf is None or steady_state_n(p) <= max_n_inf:
            return p


def balance_identity_error(p: PhysicalParams) -> float:
    """Relative mismatch of n_inf * W against R_plus + N_plus on the red sideband."""
    r = transition_rates(p.for_branch("red"))
    lhs = steady_state_n(p) * cooling_rate_constant(p)
    rhs = r.R_plus + r.N_plus
    return abs(lhs - rhs) / abs(rhs)


def oracle_comparison_times(p: PhysicalParams, branch: str, n0: float) -> np.ndarray:
    w = cooling_rate_constant(p)
    t = np.array(ORACLE_TIMES) / w
    if branch == "red":
        return t
    mean = mean_n_trajectory(p, branch, n0, t).mean_n
    return t[mean <= ORACLE_MEAN_CAP]


def oracle_discrepancy(p: PhysicalParams, n0: float, n_max: int = ORACLE_N_MAX) -> dict[str, float]:
    """Worst |oracle - closed form| / (1 + closed form) per branch."""
    out = {}
    for branch in BRANCHES:
        t = oracle_comparison_times(p, branch, n0)
        if t.size == 0:
            out[branch] = 0.0
            continue
        closed = mean_n_trajectory(p, branch, n0, t).mean_n
        oracle = oracle_mean_trajectory(p, branch, n0, t, n_max)
        out[branch] = float(np.max(np.abs(oracle - closed) / (1.0 + closed)))
    return out


def stationary_mismatch(p: PhysicalParams, n_max: int = ORACLE_N_MAX) -> float:
    d = stationary_distribution(build_rate_matrix(p.for_branch("red"), n_max))
    n_inf = steady_state_n(p)
    return abs(mean_n(d) - n_inf) / n_inf


def parity_checks(nbar: float = 3.0) -> list[Check]:
    geo = dict(
        trap_frequencies=(2 * math.pi * 1.45e6, 2 * math.pi * 1.2e6, 2 * math.pi * 0.87e6),
        lamb_dicke_sq=(0.009, 0.011, 0.015),
        occupations=(nbar, nbar, nbar),
    )
    anti = line_weights(SpectrumGeometry(phi=0.0, **geo))
    node = line_weights(SpectrumGeometry(phi=math.pi / 2, **geo))
    first_axial = max(find_line(anti, (0, 0, s)).weight for s in (-1, 1))
    even_node = max(find_line(node, (0, 0, s)).weight for s in (-2, 0, 2))
    mid = line_weights(SpectrumGeometry(phi=math.pi / 4, **geo))
    ratio = find_line(mid, (0, 0, -1)).weight / find_line(mid, (0, 0, 1)).weight
    ratio_err = abs(ratio - nbar / (nbar + 1.0))
    return [
        Check("antinode first-order axial weight", first_axial == 0.0, first_axial, 0.0),
        Check("node carrier/second-order axial weight", even_node == 0.0, even_node, 0.0),
        Check("thermal red/blue ratio", ratio_err <= 1e-15, ratio_err, 1e-15),
    ]


def fixture_dir() -> Path:
    return Path(str(resources.files("sbcool") / "fixtures"))


def fixture_checks(directory: Path | None = None) -> list[Check]:
    directory = Path(directory) if directory is not None else fixture_dir()
    sums = directory / "SHA256SUMS"
    checks = []
    if not sums.exists():
        return [Check("fixture checksums", False, detail=f"{sums} missing")]
    for line in sums.read_text().splitlines():
        if not line.strip():
            continue
        digest, name = line.split(maxsplit=1)
        path = directory / name.strip()
        ok = path.exists() and sha256_file(path) == digest
        detail = ""
        if ok:
            try:
                if path.suffix == ".csv":
                    read_dataset(path)
                elif path.suffix == ".json":
                    read_json(path)
            except DataFormatError as exc:
                ok, detail = False, str(exc)
        else:
            detail = "missing" if not path.exists() else "checksum mismatch"
        checks.append(Check(f"fixture {name.strip()}", ok, detail=detail))
    return checks


def run_battery(params: PhysicalParams | None = None, seed: int = 0, quick: bool = True,
                fixtures: Path | None = None) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks: list[Check] = []

    draws = [random_params(rng) for _ in range(1000)]
    worst = max(balance_identity_error(p) for p in draws)
    checks.append(Check("balance identity n_inf*W = R_plus + N_plus", worst <= 1e-12, worst, 1e-12))

    worst = 0.0
    for p in draws:
        q = p.replace(n_dot_ext=0.0)
        a = (q.kappa / (4 * q.omega)) ** 2
        worst = max(worst, abs(steady_state_n(q) - (a + q.c_factor / q.eta * (1 + a))) / steady_state_n(q))
    checks.append(Check("steady state reduces to C/eta form without external heating", worst <= 1e-12, worst, 1e-12))

    worst = 0.0
    for p in draws[:100]:
        for d in np.linspace(-3, 3, 13) * p.omega:
            r1 = transition_rates(p.replace(delta_lc=d)).R_minus
            r2 = transition_rates(p.replace(delta_lc=-d)).R_plus
            worst = max(worst, abs(r1 - r2) / r1)
    checks.append(Check("Lorentzian reflection symmetry", worst <= 1e-14, worst, 1e-14))

    n_oracle = 3 if quick else 20
    worst_traj, worst_stat = 0.0, 0.0
    for _ in range(n_oracle):
        p = random_params(rng, max_n_inf=30.0)
        worst_traj = max(worst_traj, max(oracle_discrepancy(p, 0.5).values()))
        worst_stat = max(worst_stat, stationary_mismatch(p))
    checks.append(Check("oracle equivalence (distribution vs closed form)", worst_traj < 1e-2, worst_traj, 1e-2))
    checks.append(Check("stationary distribution mean = n_inf", worst_stat < 1e-3, worst_stat, 1e-3))

    checks.extend(parity_checks())

    if params is not None:
        try:
            n_inf = steady_state_n(params)
            err = balance_identity_error(params)
            checks.append(Check("parameter file: balance identity", err <= 1e-12, err, 1e-12,
                                f"n_inf = {n_inf:.6g}"))
            if n_inf <= 30:
                err = stationary_mismatch(params, max(ORACLE_N_MAX, int(20 * n_inf)))
                checks.append(Check("parameter file: stationary mean", err < 1e-3, err, 1e-3))
        except NoSteadyStateError as exc:
            checks.append(Check("parameter file: steady state", True, detail=f"skipped: {exc}"))

    checks.extend(fixture_checks(fixtures))
    return checks
