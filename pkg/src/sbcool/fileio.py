"""CSV and JSON persistence.

CSV dialect: UTF-8, comma separated, optional ``#`` comment lines before the
header. Floats are written with ``repr`` so a read/write cycle is lossless
and byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .fitkit import Dataset, FitResult


class DataFormatError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows, comments=()) -> Path:
    path = Path(path)
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_csv(path) -> tuple[list[str], list[list[str]], list[int]]:
    """Return (header, rows, line_numbers); comment lines before the header are skipped."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: not UTF-8 text") from exc
    header = None
    rows, lines = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if header is None and line.lstrip().startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if header is None:
            header = [f.strip() for f in fields]
            continue
        rows.append(fields)
        lines.append(lineno)
    if header is None:
        raise DataFormatError(f"{path}: no header row")
    return header, rows, lines


def read_table(path, columns) -> dict[str, np.ndarray]:
    header, rows, lines = read_csv(path)
    missing = [c for c in columns if c not in header]
    if missing:
        raise DataFormatError(f"{path}: missing column(s) {', '.join(missing)}; header is {header}")
    idx = [header.index(c) for c in columns]
    out = {c: np.empty(len(rows)) for c in columns}
    for k, (row, lineno) in enumerate(zip(rows, lines)):
        if len(row) != len(header):
            raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for c, i in zip(columns, idx):
            try:
                out[c][k] = float(row[i])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: column {c!r} value {row[i]!r} is not a number") from None
    return out


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_dataset(d: Dataset, path) -> Path:
    path = write_csv(path, ["x", "y", "sigma_y"], zip(d.x, d.y, d.sigma_y))
    meta = {"label": d.label, **d.metadata}
    write_json(meta_path(path), meta)
    return path


def read_dataset(path) -> Dataset:
    path = Path(path)
    cols = read_table(path, ["x", "y", "sigma_y"])
    meta = {}
    mp = meta_path(path)
    if mp.exists():
        meta = read_json(mp)
    label = meta.pop("label", path.stem)
    try:
        return Dataset(cols["x"], cols["y"], cols["sigma_y"], label=label, metadata=meta)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def write_json(path, doc) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def write_fit_result(res: FitResult, path) -> Path:
    return write_json(path, res.to_document())


def read_fit_result(path) -> FitResult:
    return FitResult.from_document(read_json(path))


def write_distribution(d, path) -> Path:
    return write_csv(path, ["n", "prob"], ((n, p) for n, p in enumerate(d.probs)))


def write_ensemble(e, path) -> Path:
    return write_csv(
        path, ["t_s", "mean_n", "sem"], zip(e.times, e.sample_mean_n, e.standard_error),
        comments=[f"seed={e.seed} n_trajectories={e.n_trajectories} rng={e.rng_algorithm}"],
    )


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
