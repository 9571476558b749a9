"""Parameter-file and experiment-config parsing.

Files use ordinary frequencies (Hz); everything is converted to angular
units (rad/s) here and nowhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import TWO_PI
from .core_model import CavityParams, IonSpecies, PhysicalParams, SR88, lamb_dicke_sq
from .fileio import DataFormatError, read_json

SCENARIOS = ("dynamics", "spectrum", "saturation")
NOISE_KINDS = ("none", "gaussian", "poisson")


def hz(value: float) -> float:
    """Ordinary frequency in Hz -> angular frequency in rad/s."""
    return TWO_PI * float(value)


def to_hz(value: float) -> float:
    return float(value) / TWO_PI


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not (self.scale >= 0 and math.isfinite(self.scale)):
            raise ValueError("noise scale must be a non-negative number")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.scale > 0

    @classmethod
    def parse(cls, text: str | None) -> "NoiseSpec":
        if text in (None, "", "none"):
            return cls()
        kind, _, scale = str(text).partition(":")
        try:
            return cls(kind.strip(), float(scale) if scale else 1.0)
        except ValueError as exc:
            raise ValueError(f"bad noise spec {text!r}: {exc}") from None

    def __str__(self):
        return "none" if self.kind == "none" else f"{self.kind}:{self.scale!r}"


@dataclass(frozen=True)
class ParamFile:
    params: PhysicalParams
    species: IonSpecies | None
    cavity: CavityParams | None
    raw: dict = field(default_factory=dict, compare=False)
    path: Path | None = None


def _species(block) -> IonSpecies:
    return IonSpecies.from_amu(float(block["mass_amu"]), float(block["lambda_nm"]), name=block.get("name", ""))


def _cavity(block, kappa) -> CavityParams:
    return CavityParams(
        finesse=float(block["finesse"]),
        waist=float(block["waist_um"]) * 1e-6,
        linewidth=kappa,
        length=float(block.get("length_cm", 0.0)) * 1e-2,
    )


def parse_params(doc: dict, path: Path | None = None) -> ParamFile:
    try:
        kappa = hz(doc["kappa_hz"])
        omega = hz(doc["omega_hz"])
        species = _species(doc["species"]) if "species" in doc else None
        if "eta_ld_sq" in doc:
            eta_ld_sq = float(doc["eta_ld_sq"])
        else:
            eta_ld_sq = lamb_dicke_sq(species or SR88, omega)
        p = PhysicalParams(
            kappa=kappa,
            omega=omega,
            gamma_sc=float(doc["gamma_sc"]),
            eta=float(doc["eta"]),
            eta_ld_sq=eta_ld_sq,
            c_factor=float(doc.get("c_factor", 1.0 / 3.0)),
            n_dot_ext=float(doc.get("n_dot_ext", 0.0)),
            delta_lc=hz(doc.get("delta_lc_hz", 0.0)),
            delta_ci=hz(doc.get("delta_ci_hz", 0.0)),
        )
        cavity = _cavity(doc["cavity"], kappa) if "cavity" in doc else None
    except KeyError as exc:
        raise DataFormatError(f"{path or 'parameters'}: missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"{path or 'parameters'}: {exc}") from None
    return ParamFile(params=p, species=species, cavity=cavity, raw=doc, path=path)


def load_params(path) -> ParamFile:
    path = Path(path)
    return parse_params(read_json(path), path)


def parse_grid(spec) -> np.ndarray:
    """``{"start", "stop", "num"}`` (inclusive linspace) or ``{"values": [...]}``."""
    if isinstance(spec, (list, tuple)):
        return np.asarray(spec, dtype=float)
    if "values" in spec:
        return np.asarray(spec["values"], dtype=float)
    return np.linspace(float(spec.get("start", 0.0)), float(spec["stop"]), int(spec["num"]))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    noise: NoiseSpec = NoiseSpec()
    seed: int = 0
    block: dict = field(default_factory=dict)
    params_path: Path | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")

    def to_document(self) -> dict:
        return {
            "scenario": self.scenario,
            "noise": str(self.noise),
            "seed": int(self.seed),
            "block": self.block,
        }


def experiment_config(pf: ParamFile, scenario: str, noise: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Scenario block from the parameter file, with command-line overrides."""
    exp = pf.raw.get("experiment", {})
    block = pf.raw.get(scenario, {})
    return ExperimentConfig(
        scenario=scenario,
        noise=NoiseSpec.parse(noise if noise is not None else exp.get("noise")),
        seed=int(seed if seed is not None else exp.get("seed", 0)),
        block=block,
        params_path=pf.path,
    )
