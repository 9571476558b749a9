"""Command-line interface: ``sbcool steady-state|simulate|spectrum|fit|validate``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ParamFile, experiment_config, hz, load_params, parse_grid, to_hz
from .core_model import (
    BRANCHES,
    ModelDomainError,
    NoSteadyStateError,
    SR88,
    cavity_scatter_rate,
    cooling_rate_constant,
    cooling_rate_constant_printed,
    lamb_dicke_parameter_product,
    lamb_dicke_sq,
    lamb_dicke_valid,
    mean_n_trajectory,
    steady_state_n,
    transition_rates,
)
from .fileio import DataFormatError, read_dataset, write_csv, write_dataset, write_fit_result
from .fitkit import DegenerateFitError, Dataset, fit_dynamics, fit_saturation, fit_spectrum
from .fock_oracle import FockDistribution, build_rate_matrix, default_n_max, evolve_to_times, mean_n
from .manifest import RunManifest, now
from .spectrum import SpectrumGeometry, line_weights, spectrum_profile
from .synth import NOISE_RNG, dynamics_datasets, saturation_dataset, spectrum_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VALIDATION = 0, 1, 2, 3

PHI_PRESETS = {"antinode": 0.0, "mid": math.pi / 4, "node": math.pi / 2}

DEFAULT_DYNAMICS_GRIDS = {
    "red": {"start": 0.0, "stop": 10e-3, "num": 20},
    "carrier": {"start": 0.0, "stop": 3e-3, "num": 20},
    "blue": {"start": 0.0, "stop": 2e-3, "num": 20},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_phi(text: str | None, default: float = 0.0) -> float:
    if text is None:
        return default
    if text in PHI_PRESETS:
        return PHI_PRESETS[text]
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--phi must be a number (rad) or one of {sorted(PHI_PRESETS)}") from None


# --- steady-state -------------------------------------------------------------


def steady_state_report(pf: ParamFile) -> dict:
    """Every number printed by ``steady-state``; the CLI does no arithmetic of its own."""
    p = pf.params
    rates = transition_rates(p)
    n_inf = steady_state_n(p)
    return {
        "n_inf": n_inf,
        "W": cooling_rate_constant(p),
        "W_alt_denominator": cooling_rate_constant_printed(p),
        "R_minus": rates.R_minus,
        "R_plus": rates.R_plus,
        "N_plus": rates.N_plus,
        "eta_ld_sq": p.eta_ld_sq,
        "lamb_dicke_product": lamb_dicke_parameter_product(p, n_inf),
        "lamb_dicke_valid": lamb_dicke_valid(p, n_inf),
        "delta_lc_hz": to_hz(p.delta_lc),
    }


def _emit(report: dict, fmt: str, out=None):
    out = out or sys.stdout
    if fmt == "json":
        json.dump(report, out, indent=2, sort_keys=True)
        out.write("\n")
    elif fmt == "csv":
        out.write("quantity,value\n")
        for k, v in report.items():
            out.write(f"{k},{v!r}\n" if isinstance(v, float) else f"{k},{v}\n")
    else:
        for k, v in report.items():
            out.write(f"{k:>20s}  {v:.6g}\n" if isinstance(v, float) else f"{k:>20s}  {v}\n")


def cmd_steady_state(args) -> int:
    pf = load_params(args.params)
    try:
        report = steady_state_report(pf)
    except NoSteadyStateError as exc:
        print(f"error: steady state diverges: {exc}", file=sys.stderr)
        return EXIT_DATA
    _emit(report, args.format)
    return EXIT_OK


# --- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    pf = load_params(args.params)
    scenario = args.scenario or pf.raw.get("experiment", {}).get("scenario", "dynamics")
    if scenario == "saturation":
        return _simulate_saturation(args, pf)
    if scenario != "dynamics":
        raise UsageError(f"simulate handles dynamics and saturation, not {scenario!r}")
    cfg = experiment_config(pf, "dynamics", args.noise, args.seed)
    block = cfg.block
    p = pf.params
    n0 = float(block.get("n0", 0.0))
    grid_spec = {**DEFAULT_DYNAMICS_GRIDS, **block.get("grids", {})}
    grids = {b: parse_grid(grid_spec[b]) for b in BRANCHES}
    excess = float(block.get("chi2_excess", 1.0))
    out = Path(args.out)

    manifest = RunManifest(
        command="simulate",
        config={"params": pf.raw, "experiment": cfg.to_document(), "oracle": not args.no_oracle},
        rng_algorithm=NOISE_RNG,
        seed=cfg.seed,
        started=now(),
    )
    manifest.add_input(args.params)

    closed = {b: mean_n_trajectory(p, b, n0, grids[b]).mean_n for b in BRANCHES}
    data = dynamics_datasets(p, n0, grids, cfg.noise, cfg.seed, excess)
    oracle = {}
    if not args.no_oracle:
        n_max = default_n_max(max(float(np.max(c)) for c in closed.values()))
        for b in BRANCHES:
            m = build_rate_matrix(p.for_branch(b), n_max)
            dists = evolve_to_times(m, FockDistribution.thermal(n0, n_max), grids[b])
            oracle[b] = (np.array([mean_n(d) for d in dists]), np.array([d.tail_mass for d in dists]))

    written = []
    long_rows = []
    for b in BRANCHES:
        t = grids[b]
        written.append(write_csv(out / f"closed_{b}.csv", ["t_s", "mean_n"], zip(t, closed[b])))
        if oracle:
            written.append(write_csv(out / f"oracle_{b}.csv", ["t_s", "mean_n", "tail_mass"],
                                     zip(t, *oracle[b])))
        path = write_dataset(data[b], out / f"data_{b}.csv")
        written += [path, path.with_name(path.stem + ".meta.json")]
        orc = oracle[b][0] if oracle else np.full(t.size, math.nan)
        long_rows += [(b, ti, c, o, y, s) for ti, c, o, y, s in zip(t, closed[b], orc, data[b].y, data[b].sigma_y)]
    written.append(write_csv(out / "plot.csv", ["branch", "t_s", "closed_form", "oracle", "y", "sigma_y"], long_rows))
    if args.svg:
        from .plotting import svg_line_plot

        series = [(b, grids[b] * 1e3, closed[b]) for b in BRANCHES]
        written.append(svg_line_plot(series, out / "plot.svg", "t (ms)", "<n>"))
    return _finish(manifest, written, out)


def _simulate_saturation(args, pf: ParamFile) -> int:
    cfg = experiment_config(pf, "saturation", args.noise, args.seed)
    block = cfg.block
    gamma_sat = float(block.get("gamma_sat", 8e6))
    grid = parse_grid(block.get("gamma_sc", {"start": 1e6, "stop": 2.4e7, "num": 12}))
    data = saturation_dataset(pf.params.eta, gamma_sat, grid, cfg.noise, cfg.seed)
    out = Path(args.out)
    manifest = RunManifest(
        command="simulate",
        config={"params": pf.raw, "experiment": cfg.to_document()},
        rng_algorithm=NOISE_RNG,
        seed=cfg.seed,
        started=now(),
    )
    manifest.add_input(args.params)
    fine = np.linspace(0.0, float(grid.max()), 200)
    path = write_dataset(data, out / "data_saturation.csv")
    written = [
        path,
        path.with_name(path.stem + ".meta.json"),
        write_csv(out / "curve_saturation.csv", ["gamma_sc", "gamma_c"],
                  zip(fine, cavity_scatter_rate(pf.params.eta, fine, gamma_sat))),
    ]
    return _finish(manifest, written, out)


def _finish(manifest: RunManifest, written, out: Path) -> int:
    for path in written:
        manifest.add_output(path, out)
    manifest.finished = now()
    manifest.write(out / "manifest.json")
    for path in written:
        print(path)
    return EXIT_OK


# --- spectrum -----------------------------------------------------------------


def spectrum_geometry(pf: ParamFile, phi: float) -> SpectrumGeometry:
    block = pf.raw.get("spectrum", {})
    freqs = tuple(hz(f) for f in block.get("trap_hz", [1.45e6, 1.20e6, to_hz(pf.params.omega)]))
    species = pf.species or SR88
    if "eta_ld_sq" in block:
        ld = tuple(float(v) for v in block["eta_ld_sq"])
    else:
        ld = tuple(lamb_dicke_sq(species, w) for w in freqs)
    return SpectrumGeometry(
        trap_frequencies=freqs,
        phi=phi,
        projections=tuple(block.get("projections", (1 / math.sqrt(2), 1 / math.sqrt(2)))),
        lamb_dicke_sq=ld,
        occupations=tuple(float(v) for v in block.get("occupations", (10.0, 10.0, 10.0))),
    )


def cmd_spectrum(args) -> int:
    pf = load_params(args.params)
    cfg = experiment_config(pf, "spectrum", args.noise, args.seed)
    block = cfg.block
    phi = parse_phi(args.phi, parse_phi(str(block["phi"])) if "phi" in block else 0.0)
    geo = spectrum_geometry(pf, phi)
    lines = line_weights(geo, int(block.get("max_order", 2)))
    width = hz(block.get("linewidth_hz", 150e3))
    grid = hz(1.0) * parse_grid(block.get("grid_hz", {"start": -3.5e6, "stop": 3.5e6, "num": 281}))
    profile = spectrum_profile(lines, width, float(block.get("amplitude_scale", 2e5)), grid)
    data = spectrum_dataset(profile, cfg.noise, cfg.seed, phi)
    out = Path(args.out)

    manifest = RunManifest(
        command="spectrum",
        config={"params": pf.raw, "experiment": cfg.to_document(), "phi": phi},
        rng_algorithm=NOISE_RNG,
        seed=cfg.seed,
        started=now(),
    )
    manifest.add_input(args.params)

    visible = [ln for ln in profile.lines if ln.weight > 0]
    written = [
        write_csv(out / "lines.csv", ["offset_hz", "weight", "dnx", "dny", "dnz"],
                  ((to_hz(ln.detuning_offset), ln.weight, *ln.order) for ln in visible)),
        write_csv(out / "profile.csv", ["delta_lc_hz", "rate"], zip(grid / hz(1.0), profile.rate)),
    ]
    hz_data = Dataset(data.x / hz(1.0), data.y, data.sigma_y, data.label,
                      {**data.metadata, "x_unit": "Hz", "linewidth": to_hz(width), "phi": phi})
    path = write_dataset(hz_data, out / "data.csv")
    written += [path, path.with_name(path.stem + ".meta.json")]
    if args.svg:
        from .plotting import svg_line_plot

        written.append(svg_line_plot([("rate", grid / hz(1.0) / 1e6, profile.rate)], out / "profile.svg",
                                     "delta_lc (MHz)", "photons/s"))
    return _finish(manifest, written, out)


# --- fit ----------------------------------------------------------------------


def _print_fit(res, kind: str):
    print(f"{kind} fit: converged={res.converged} iterations={res.n_iterations} "
          f"reduced_chi_sq={res.reduced_chi_sq:.4g}")
    unc = res.uncertainties
    for name, value in res.parameters.items():
        print(f"  {name:>10s} = {value:.6g} +/- {unc[name]:.3g}")
    for name, (value, sigma) in res.derived.items():
        print(f"  {name:>10s} = {value:.6g} +/- {sigma:.3g} (derived)")
    for w in res.warnings:
        print(f"  warning: {w}")


def _dynamics_inputs(paths) -> dict[str, Dataset]:
    sets = [read_dataset(p) for p in paths]
    tagged = {d.metadata.get("branch"): d for d in sets}
    if all(b in tagged for b in BRANCHES) and len(sets) == 3:
        return {b: tagged[b] for b in BRANCHES}
    if len(sets) != 3:
        raise UsageError("dynamics fit needs three datasets (red, carrier, blue)")
    return dict(zip(BRANCHES, sets))


def cmd_fit(args) -> int:
    kind = args.kind
    if kind == "saturation":
        if len(args.datasets) != 1:
            raise UsageError("saturation fit takes one dataset")
        d = read_dataset(args.datasets[0])
        if args.dry_run:
            print(f"saturation: {len(d)} residuals, 2 parameters")
            return EXIT_OK
        res = fit_saturation(d)
    elif kind == "spectrum":
        if len(args.datasets) != 1:
            raise UsageError("spectrum fit takes one dataset")
        d = read_dataset(args.datasets[0])
        d = Dataset(d.x * hz(1.0), d.y, d.sigma_y, d.label, {**d.metadata, "x_unit": "rad/s"})
        if args.centers_hz:
            centers = [hz(float(c)) for c in args.centers_hz.split(",")]
        elif args.params:
            geo = spectrum_geometry(load_params(args.params), 0.0)
            centers = [0.0] + [s * w for w in geo.trap_frequencies for s in (-1, 1)]
        else:
            raise UsageError("spectrum fit needs --centers-hz or --params")
        centers = [c for c in centers if d.x.min() <= c <= d.x.max()]
        if args.dry_run:
            print(f"spectrum: {len(d)} residuals, {1 + len(centers)} parameters")
            return EXIT_OK
        res = fit_spectrum(d, centers)
        res.derived["width_hz"] = (to_hz(res.parameters["width"]), to_hz(res.uncertainties["width"]))
    else:
        if not args.params:
            raise UsageError("dynamics fit needs --params for the fixed model constants")
        pf = load_params(args.params)
        sets = _dynamics_inputs(args.datasets)
        if args.dry_run:
            n_par = 3 + len(set(args.float_params))
            print(f"dynamics: {sum(len(s) for s in sets.values())} residuals, {n_par} parameters")
            return EXIT_OK
        res = fit_dynamics(sets, pf.params, float_params=args.float_params)
    _print_fit(res, kind)
    out = Path(args.out)
    path = write_fit_result(res, out / f"fit_{kind}.json")
    print(path)
    return EXIT_OK


# --- validate -----------------------------------------------------------------


def cmd_validate(args) -> int:
    from .validate import run_battery

    params = load_params(args.params).params if args.params else None
    checks = run_battery(params, seed=args.seed or 0, quick=not args.full, fixtures=args.fixtures)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_VALIDATION if failed else EXIT_OK


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sbcool", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sbcool {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, params_required=True):
        sp.add_argument("--params", required=params_required, help="parameter file (JSON)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--format", choices=("text", "csv", "json"), default="text")
        sp.add_argument("--noise", default=None, help="none | gaussian:SCALE | poisson:SECONDS")
        sp.add_argument("--phi", default=None, help="standing-wave phase in rad, or antinode|mid|node")

    sp = sub.add_parser("steady-state", help="steady-state occupation and rates")
    common(sp)
    sp.set_defaults(func=cmd_steady_state)

    sp = sub.add_parser("simulate", help="cooling-dynamics curves and synthetic datasets")
    common(sp)
    sp.add_argument("--scenario", choices=("dynamics", "saturation"), default=None)
    sp.add_argument("--no-oracle", action="store_true", help="skip the Fock-space evolution")
    sp.add_argument("--svg", action="store_true", help="also write an SVG plot")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("spectrum", help="cavity emission spectrum")
    common(sp)
    sp.add_argument("--svg", action="store_true")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("fit", help="fit datasets")
    sp.add_argument("kind", choices=("saturation", "spectrum", "dynamics"))
    sp.add_argument("datasets", nargs="+")
    common(sp, params_required=False)
    sp.add_argument("--centers-hz", default=None, help="comma-separated line centers (Hz)")
    sp.add_argument("--dry-run", action="store_true", help="validate inputs only")
    sp.add_argument("--float", dest="float_params", action="append", default=[],
                    choices=("c_factor", "n_dot_ext"), help="dynamics: also fit this constant")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("validate", help="run the invariant battery")
    common(sp, params_required=False)
    sp.add_argument("--full", action="store_true", help="20 oracle draws instead of 3")
    sp.add_argument("--fixtures", default=None, help="fixture directory to check")
    sp.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, DegenerateFitError, ModelDomainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
