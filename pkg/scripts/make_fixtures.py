"""Regenerate the shipped synthetic datasets and their checksum list.

Runs the CLI on each parameter file in the fixture directory, copies the
noisy datasets next to it under stable names, and rewrites SHA256SUMS.

    python scripts/make_fixtures.py [--check]
"""

from __future__ import annotations

import argparse
import shutil
import sys
import tempfile
from pathlib import Path

from sbcool.cli import main as cli
from sbcool.fileio import meta_path, sha256_file
from sbcool.validate import fixture_dir

# (command, parameter file, extra args, {produced csv: shipped name})
JOBS = [
    ("simulate", "dynamics.json", ["--no-oracle"],
     {"data_red.csv": "dynamics_red.csv", "data_carrier.csv": "dynamics_carrier.csv",
      "data_blue.csv": "dynamics_blue.csv"}),
    ("simulate", "saturation.json", ["--scenario", "saturation"],
     {"data_saturation.csv": "saturation_data.csv"}),
    ("spectrum", "spectrum.json", [], {"data.csv": "spectrum_data.csv"}),
]


def build(dest: Path) -> list[Path]:
    shipped = []
    with tempfile.TemporaryDirectory() as tmp:
        for k, (cmd, params, extra, files) in enumerate(JOBS):
            out = Path(tmp) / str(k)
            rc = cli([cmd, "--params", str(dest / params), "--out", str(out), *extra])
            if rc != 0:
                raise SystemExit(f"{cmd} {params} failed with exit code {rc}")
            shipped.append(dest / params)
            for src, name in files.items():
                target = dest / name
                shutil.copyfile(out / src, target)
                shutil.copyfile(meta_path(out / src), meta_path(target))
                shipped += [target, meta_path(target)]
    return shipped


def write_sums(dest: Path, files: list[Path]) -> Path:
    lines = [f"{sha256_file(f)}  {f.name}" for f in sorted(files, key=lambda f: f.name)]
    path = dest / "SHA256SUMS"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dest", type=Path, default=fixture_dir())
    ap.add_argument("--check", action="store_true", help="rebuild in a scratch copy and compare checksums")
    args = ap.parse_args(argv)
    if not args.check:
        print(write_sums(args.dest, build(args.dest)))
        return 0
    with tempfile.TemporaryDirectory() as tmp:
        scratch = Path(tmp)
        for f in args.dest.glob("*.json"):
            if not f.name.endswith(".meta.json"):
                shutil.copyfile(f, scratch / f.name)
        fresh = write_sums(scratch, build(scratch)).read_text()
    same = fresh == (args.dest / "SHA256SUMS").read_text()
    print("fixtures reproduce" if same else "fixtures differ from a fresh build")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
