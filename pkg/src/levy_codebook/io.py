"""File formats: codebook, price and modified-price CSVs plus JSON sidecars.

Floats are written with 17 significant digits so a write/read cycle is exact.
All writers go through :class:`AtomicOutput`; nothing appears in the target
directory unless the whole command succeeded.
"""
from __future__ import annotations

import csv
import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

from .codebook import CodebookSurface, GridSpec
from .errors import DataError
from .pricing import ModifiedPriceSlice, PriceSurface

__all__ = [
    "AtomicOutput",
    "write_codebook",
    "read_codebook",
    "write_price_surface",
    "read_price_surface",
    "write_modified_slices",
    "read_modified_slices",
    "write_json",
]


def _f(x):
    return format(float(x), ".17g")


class AtomicOutput:
    """Stage files in a sibling temp directory and move them into place on success.

    >>> with AtomicOutput("out") as stage:   # doctest: +SKIP
    ...     write_json(stage / "report.json", {...})
    """

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self._tmp = None

    def __enter__(self):
        parent = self.out_dir.resolve().parent
        parent.mkdir(parents=True, exist_ok=True)
        self._tmp = Path(tempfile.mkdtemp(prefix=".stage-", dir=parent))
        return self._tmp

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.out_dir.mkdir(parents=True, exist_ok=True)
                for src in sorted(self._tmp.rglob("*")):
                    if src.is_file():
                        dst = self.out_dir / src.relative_to(self._tmp)
                        dst.parent.mkdir(parents=True, exist_ok=True)
                        os.replace(src, dst)
        finally:
            shutil.rmtree(self._tmp, ignore_errors=True)
        return False


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sidecar(path):
    return Path(path).with_suffix(".json")


def write_codebook(path, s):
    """``T,u,re,im`` rows (row-major in T then u) plus ``<name>.json`` with grid and time."""
    path = Path(path)
    T, u = s.grid.maturities, s.grid.frequencies
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "u", "re", "im"])
        for j, Tj in enumerate(T):
            for k, uk in enumerate(u):
                v = s.values[j, k]
                w.writerow([_f(Tj), _f(uk), _f(v.real), _f(v.imag)])
    meta = {k: v for k, v in s.meta.items() if isinstance(v, (str, int, float, bool))}
    write_json(_sidecar(path), {"grid": s.grid.to_dict(), "time": float(s.time), "mode": s.mode,
                                "meta": meta})


def _read_rows(path, header):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise DataError(f"{path}: {e.strerror}") from e
    if not rows or [c.strip() for c in rows[0]] != header:
        raise DataError(f"{path}:1: expected header {','.join(header)}")
    out = []
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{n}: expected {len(header)} columns, got {len(row)}")
        try:
            out.append([float(c) for c in row])
        except ValueError as e:
            raise DataError(f"{path}:{n}: {e}") from e
    if not out:
        raise DataError(f"{path}: no data rows")
    a = np.array(out)
    # values may be NaN (unresolved cells); coordinates may not
    if not np.all(np.isfinite(a[:, :2])):
        raise DataError(f"{path}: non-finite coordinates")
    return a


def read_codebook(path):
    path = Path(path)
    a = _read_rows(path, ["T", "u", "re", "im"])
    side = _sidecar(path)
    if side.exists():
        info = json.loads(side.read_text())
        grid = GridSpec.from_dict(info["grid"])
        time, mode = float(info.get("time", 0.0)), info.get("mode", "maturity")
        meta = dict(info.get("meta", {}))
    else:
        grid = GridSpec(np.unique(a[:, 0]), np.unique(a[:, 1]))
        time, mode, meta = 0.0, "maturity", {}
    if a.shape[0] != grid.shape[0] * grid.shape[1]:
        raise DataError(f"{path}: {a.shape[0]} rows do not fill a {grid.shape} grid")
    vals = (a[:, 2] + 1j * a[:, 3]).reshape(grid.shape)
    if not (np.allclose(a[:, 0].reshape(grid.shape)[:, 0], grid.maturities, atol=1e-9)
            and np.allclose(a[:, 1].reshape(grid.shape)[0], grid.frequencies, atol=1e-9)):
        raise DataError(f"{path}: rows are not row-major on the sidecar grid")
    return CodebookSurface(grid, vals, time, mode, None, meta)


def write_price_surface(path, p):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "K", "C"])
        for i, T in enumerate(p.maturities):
            for j, K in enumerate(p.strikes):
                w.writerow([_f(T), _f(K), _f(p.prices[i, j])])
    write_json(_sidecar(path), {"spot": float(p.spot), "time": float(p.time)})


def read_price_surface(path, spot=None):
    """Read ``T,K,C``; the spot comes from the sidecar unless given."""
    path = Path(path)
    a = _read_rows(path, ["T", "K", "C"])
    side = _sidecar(path)
    time = 0.0
    if side.exists():
        info = json.loads(side.read_text())
        spot = info["spot"] if spot is None else spot
        time = float(info.get("time", 0.0))
    if spot is None:
        raise DataError(f"{path}: spot missing (no sidecar and none given)")
    T, K = np.unique(a[:, 0]), np.unique(a[:, 1])
    if a.shape[0] != T.size * K.size:
        raise DataError(f"{path}: rows do not form a full (T, K) grid")
    order = np.lexsort((a[:, 1], a[:, 0]))
    return PriceSurface(spot, K, T, a[order, 2].reshape(T.size, K.size), time)


def write_modified_slices(path, slices):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "x", "O"])
        for o in slices:
            for x, v in zip(o.x, o.values):
                w.writerow([_f(o.T), _f(x), _f(v)])


def read_modified_slices(path):
    a = _read_rows(path, ["T", "x", "O"])
    out = []
    for T in np.unique(a[:, 0]):
        r = a[a[:, 0] == T]
        out.append(ModifiedPriceSlice(float(T), r[:, 1], r[:, 2]))
    return out
