"""Run manifests: enough provenance to reproduce an output directory bit for bit."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .fileio import sha256_file, write_json


def config_hash(doc) -> str:
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    rng_algorithm: str
    seed: int
    tool_version: str = __version__
    config_hash: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = config_hash(self.config)

    def add_input(self, path):
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path, root=None):
        key = str(Path(path).relative_to(root)) if root else str(path)
        self.outputs[key] = sha256_file(path)

    def reproducibility_key(self) -> dict:
        """Manifest content without timestamps and output digests."""
        d = asdict(self)
        for k in ("started", "finished", "outputs"):
            d.pop(k)
        return d

    def write(self, path) -> Path:
        return write_json(path, asdict(self))


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
