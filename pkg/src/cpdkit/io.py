"""Plain-text tensor, factor and trace files.

Array files share one layout::

    TNSR 1            (FCTR 1 for factors, LMBD 1 for weights)
    order N
    dims I1 ... IN
    <prod(I) values, first index fastest, 17 significant digits>

A model directory holds ``lambda.lmbd`` and ``factor_1.fctr`` ...
``factor_N.fctr``.
"""
from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import KruskalModel

MAGIC = {"tensor": "TNSR 1", "factor": "FCTR 1", "weights": "LMBD 1"}
TRACE_COLUMNS = ("sweep", "mode", "residual", "fitness", "cond", "delta", "threshold", "seconds")


class FormatError(ValueError):
    """Malformed array or trace file."""


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_array(path, A, kind: str = "tensor") -> None:
    A = np.asarray(A, dtype=np.float64)
    lines = [MAGIC[kind], f"order {A.ndim}", "dims " + " ".join(str(s) for s in A.shape)]
    lines.extend(_fmt(v) for v in np.ravel(A, order="F"))
    Path(path).write_text("\n".join(lines) + "\n")


def read_array(path, kind: str = "tensor") -> np.ndarray:
    text = Path(path).read_text().split("\n")
    lines = [ln.strip() for ln in text if ln.strip()]
    if len(lines) < 3 or lines[0] != MAGIC[kind]:
        raise FormatError(f"{path}: expected header {MAGIC[kind]!r}")
    try:
        key, order = lines[1].split()
        if key != "order":
            raise ValueError
        order = int(order)
        dims_tok = lines[2].split()
        if dims_tok[0] != "dims":
            raise ValueError
        dims = tuple(int(s) for s in dims_tok[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed order/dims lines") from None
    if len(dims) != order or order < 1 or any(s < 1 for s in dims):
        raise FormatError(f"{path}: dims {dims} inconsistent with order {order}")
    count = int(np.prod(dims, dtype=np.int64))
    body = lines[3:]
    if len(body) != count:
        raise FormatError(f"{path}: expected {count} values, found {len(body)}")
    try:
        data = np.array([float(v) for v in body])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return data.reshape(dims, order="F")


def write_tensor(path, X) -> None:
    write_array(path, X, "tensor")


def read_tensor(path) -> np.ndarray:
    return read_array(path, "tensor")


def write_model(directory, m: KruskalModel) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_array(d / "lambda.lmbd", m.weights, "weights")
    for n, F in enumerate(m.factors, start=1):
        write_array(d / f"factor_{n}.fctr", F, "factor")


def read_model(directory) -> KruskalModel:
    d = Path(directory)
    w = read_array(d / "lambda.lmbd", "weights")
    factors = []
    n = 1
    while (d / f"factor_{n}.fctr").exists():
        F = read_array(d / f"factor_{n}.fctr", "factor")
        if F.ndim != 2:
            raise FormatError(f"factor_{n}.fctr is not a matrix")
        factors.append(F)
        n += 1
    if not factors:
        raise FormatError(f"{d}: no factor files")
    return KruskalModel(w, factors)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return _fmt(float(v))
    return str(v)


def write_csv(path, rows: Iterable[Mapping], columns: Sequence[str], meta: Optional[Mapping] = None) -> None:
    """CSV with a ``#`` comment block (``key = value``) then a header row."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k} = {_cell(v)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])


def read_csv(path):
    """Return ``(meta, rows)``; values stay strings."""
    meta, body = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = val.strip()
            else:
                body.append(line)
    reader = csv.DictReader(body)
    return meta, list(reader)


def trace_rows(trace) -> list[dict]:
    return [
        {
            "sweep": r.sweep, "mode": r.mode, "residual": r.residual, "fitness": r.fitness,
            "cond": r.cond, "delta": r.delta, "threshold": r.threshold, "seconds": r.seconds,
        }
        for r in trace
    ]


def write_trace(path, trace, tensor_norm: float, meta: Optional[Mapping] = None) -> None:
    """Trace CSV; ``# xnorm`` keeps ``||X||`` so fitness can be recomputed exactly."""
    head = dict(meta or {})
    head["xnorm"] = float(tensor_norm)
    write_csv(path, trace_rows(trace), TRACE_COLUMNS, head)


def read_trace(path):
    """Return ``(meta, rows)`` with numeric columns converted."""
    meta, rows = read_csv(path)
    if not rows or set(TRACE_COLUMNS) - set(rows[0]):
        raise FormatError(f"{path}: missing trace columns")
    out = []
    for r in rows:
        out.append({
            "sweep": int(r["sweep"]), "mode": int(r["mode"]),
            "residual": float(r["residual"]), "fitness": float(r["fitness"]),
            "cond": float(r["cond"]) if r["cond"] else None,
            "delta": float(r["delta"]), "threshold": int(r["threshold"]),
            "seconds": float(r["seconds"]),
        })
    return meta, out


def threads_from_env(default: int = 1) -> int:
    """Trial concurrency cap from ``CPDKIT_THREADS``."""
    raw = os.environ.get("CPDKIT_THREADS", "").strip()
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default
