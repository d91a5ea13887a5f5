"""File formats: signal and potential CSV, solution and certificate JSON.

Signal CSV
    An optional first line ``# {"a": 0, "b": 1, "lambda": 10, "interp": "cells"}``
    carries metadata. An optional header row follows (``x,g`` or ``g``). Rows are
    either ``x,g`` (cell centres, uniformly spaced) or a single ``g`` column.
    Without metadata the domain is inferred from the centres, or defaults to
    [0, 1] for single-column files.

Potential CSV
    Rows ``x,F(x)`` with an optional header, sampled on [0, x_max].
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ValidationError
from .penalty import PenaltyCertificate, Potential
from .signal import Interp, PiecewiseConstantFn, Signal


class ParseError(ValidationError):
    def __init__(self, path: str, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


def _rows(text: str, path: str):
    """Yield (line number, fields) for data rows; skips blanks and comments."""
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        yield lineno, [c.strip() for c in row]


def _floats(fields: list[str], path: str, lineno: int) -> list[float]:
    try:
        vals = [float(c) for c in fields]
    except ValueError:
        raise ParseError(path, lineno, f"expected numbers, got {','.join(fields)!r}") from None
    if not all(np.isfinite(vals)):
        raise ParseError(path, lineno, "non-finite value")
    return vals


def _is_header(fields: list[str]) -> bool:
    try:
        [float(c) for c in fields]
        return False
    except ValueError:
        return all(c.replace("_", "").replace("(", "").replace(")", "").isalnum() for c in fields)


def _table(text: str, path: str, width: tuple[int, ...]) -> tuple[np.ndarray, list[int]]:
    data, lines = [], []
    first = True
    ncols = None
    for lineno, fields in _rows(text, path):
        if first and _is_header(fields):
            first = False
            continue
        first = False
        if len(fields) not in width:
            raise ParseError(path, lineno, f"expected {' or '.join(map(str, width))} columns, got {len(fields)}")
        if ncols is None:
            ncols = len(fields)
        elif len(fields) != ncols:
            raise ParseError(path, lineno, f"expected {ncols} columns, got {len(fields)}")
        data.append(_floats(fields, path, lineno))
        lines.append(lineno)
    if not data:
        raise ParseError(path, 1, "no data rows")
    return np.asarray(data, dtype=float), lines


def _meta(text: str, path: str) -> dict:
    first = text.lstrip().splitlines()[0] if text.strip() else ""
    if not first.startswith("#"):
        return {}
    body = first[1:].strip()
    if not body.startswith("{"):
        return {}
    try:
        meta = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ParseError(path, 1, f"bad metadata: {exc.msg}") from None
    if not isinstance(meta, dict):
        raise ParseError(path, 1, "metadata must be a JSON object")
    return meta


def parse_signal(text: str, path: str = "<signal>", lam: float | None = None,
                 interp: str | None = None) -> Signal:
    meta = _meta(text, path)
    table, lines = _table(text, path, (1, 2))
    g = table[:, -1]
    a, b = meta.get("a"), meta.get("b")
    if table.shape[1] == 2 and (a is None or b is None):
        x = table[:, 0]
        if x.size == 1:
            raise ParseError(path, lines[0], "cannot infer the domain from a single x; add a,b metadata")
        d = np.diff(x)
        if np.any(d <= 0):
            k = int(np.flatnonzero(d <= 0)[0]) + 1
            raise ParseError(path, lines[k], "x must be strictly increasing")
        h = (x[-1] - x[0]) / (x.size - 1)
        if np.max(np.abs(d - h)) > 1e-9 * max(1.0, abs(h)):
            k = int(np.argmax(np.abs(d - h))) + 1
            raise ParseError(path, lines[k], "x must be uniformly spaced cell centres")
        a = x[0] - h / 2 if a is None else a
        b = x[-1] + h / 2 if b is None else b
    a = 0.0 if a is None else float(a)
    b = 1.0 if b is None else float(b)
    lam_v = lam if lam is not None else meta.get("lambda", 1.0)
    interp_v = interp if interp is not None else meta.get("interp", Interp.CELLS.value)
    return Signal(samples=g, a=a, b=b, lam=float(lam_v), interp=Interp(interp_v))


def load_signal(path: str | Path, lam: float | None = None, interp: str | None = None) -> Signal:
    p = Path(path)
    return parse_signal(p.read_text(), str(p), lam=lam, interp=interp)


def write_signal(g: Signal, path: str | Path) -> None:
    meta = {"a": g.a, "b": g.b, "lambda": g.lam, "interp": g.interp.value}
    lines = ["# " + json.dumps(meta), "x,g"]
    lines += [f"{x!r},{y!r}" for x, y in zip(g.centers.tolist(), g.samples.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_potential(text: str, path: str = "<potential>") -> Potential:
    table, lines = _table(text, path, (2,))
    x, f = table[:, 0], table[:, 1]
    if np.any(np.diff(x) <= 0):
        k = int(np.flatnonzero(np.diff(x) <= 0)[0]) + 1
        raise ParseError(path, lines[k], "x must be strictly increasing")
    return Potential.from_table(x, f, name=Path(path).stem)


def load_potential(path: str | Path) -> Potential:
    p = Path(path)
    return parse_potential(p.read_text(), str(p))


def dump_json(obj: Any, path: str | Path | None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def load_solution(path: str | Path) -> PiecewiseConstantFn:
    return PiecewiseConstantFn.from_dict(json.loads(Path(path).read_text()))


def load_certificate(path: str | Path) -> PenaltyCertificate:
    return PenaltyCertificate.from_dict(json.loads(Path(path).read_text()))


def write_plot(g: Signal, u: PiecewiseConstantFn, path: str | Path, per_cell: int = 4) -> None:
    """Rows (x, g(x), u(x)) on a grid ``per_cell`` times finer than the cells."""
    x = np.linspace(g.a, g.b, g.n * per_cell + 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "g", "u"])
        for xi, gi, ui in zip(x, g.value_at(x), u(x)):
            w.writerow([repr(float(xi)), repr(float(gi)), repr(float(ui))])
