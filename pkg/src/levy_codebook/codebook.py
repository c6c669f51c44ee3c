"""Grid codebooks Psi_t(T, u): storage, maturity integrals, seminorms, Musiela shift."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import AlignmentError, OutOfRangeError, SpecError

__all__ = [
    "GridSpec",
    "CodebookSurface",
    "PiReport",
    "integrate_maturity",
    "cumulant",
    "generator_cumulant",
    "seminorm",
    "to_musiela",
    "from_musiela",
    "pi_necessary_check",
]

_ATOL = 1e-9


def _is_uniform(a, name):
    if a.ndim != 1 or a.size < 2:
        raise SpecError(f"{name} grid needs at least two points")
    d = np.diff(a)
    if np.any(d <= 0):
        raise SpecError(f"{name} grid must be strictly increasing")
    if np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(d[0])):
        raise SpecError(f"{name} grid must be uniform")
    return float(d[0])


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform maturity grid starting at 0 and a symmetric frequency grid through 0."""

    maturities: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.maturities, dtype=float)
        u = np.asarray(self.frequencies, dtype=float)
        _is_uniform(T, "maturity")
        _is_uniform(u, "frequency")
        if abs(T[0]) > 1e-12:
            raise SpecError("maturity grid must start at 0")
        if u.size % 2 == 0 or np.max(np.abs(u + u[::-1])) > 1e-9 * max(1.0, u[-1]):
            raise SpecError("frequency grid must be symmetric about 0 and contain 0")
        T = T.copy()
        T[0] = 0.0
        u = u.copy()
        u[u.size // 2] = 0.0
        T.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "maturities", T)
        object.__setattr__(self, "frequencies", u)

    @classmethod
    def uniform(cls, t_max, dt, u_max, du):
        n = int(round(t_max / dt))
        m = int(round(u_max / du))
        if n < 1 or m < 1 or abs(n * dt - t_max) > 1e-9 or abs(m * du - u_max) > 1e-9:
            raise SpecError("t_max and u_max must be positive multiples of dt and du")
        return cls(np.arange(n + 1) * dt, np.arange(-m, m + 1) * du)

    @property
    def dT(self):
        return float(self.maturities[1] - self.maturities[0])

    @property
    def du(self):
        return float(self.frequencies[1] - self.frequencies[0])

    @property
    def t_max(self):
        return float(self.maturities[-1])

    @property
    def u_max(self):
        return float(self.frequencies[-1])

    @property
    def shape(self):
        return (self.maturities.size, self.frequencies.size)

    @property
    def zero_index(self):
        return self.frequencies.size // 2

    def u_index(self, u):
        k = int(round(u / self.du)) + self.zero_index
        if k < 0 or k >= self.frequencies.size or abs(self.frequencies[k] - u) > 1e-9:
            raise OutOfRangeError(f"u={u:g} is not on the frequency grid")
        return k

    def t_index(self, t):
        """Index of ``t`` on the maturity grid; alignment error if off-grid."""
        j = int(round(t / self.dT))
        if j < 0 or j >= self.maturities.size or abs(self.maturities[j] - t) > 1e-9:
            raise AlignmentError(f"t={t:g} is not a multiple of dT={self.dT:g} inside the grid")
        return j

    def to_dict(self):
        return {"t_max": self.t_max, "dT": self.dT, "u_max": self.u_max, "du": self.du}

    @classmethod
    def from_dict(cls, d):
        return cls.uniform(d["t_max"], d["dT"], d["u_max"], d["du"])

    def __eq__(self, other):
        return (isinstance(other, GridSpec)
                and self.shape == other.shape
                and np.allclose(self.maturities, other.maturities, atol=1e-12)
                and np.allclose(self.frequencies, other.frequencies, atol=1e-12))

    __hash__ = None


@dataclass(eq=False)
class CodebookSurface:
    """Complex grid function ``values[j, k] = Psi_time(T_j, u_k)``.

    In ``musiela`` mode the first axis is time to maturity ``x = T - time``.
    ``generator`` optionally maps ``(T, z)`` with complex ``z`` to the
    codebook density in closed form; pricing uses it for strip evaluation.
    """

    grid: GridSpec
    values: np.ndarray
    time: float = 0.0
    mode: str = "maturity"
    generator: Callable | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise SpecError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if self.mode not in ("maturity", "musiela"):
            raise SpecError(f"unknown mode {self.mode!r}")
        if self.time < 0:
            raise SpecError("time must be >= 0")
        v[:, self.grid.zero_index] = 0.0
        self.values = v

    @property
    def maturities(self):
        return self.grid.maturities

    @property
    def frequencies(self):
        return self.grid.frequencies

    def copy(self, **changes):
        changes.setdefault("values", self.values.copy())
        changes.setdefault("meta", dict(self.meta))
        return replace(self, **changes)

    def maturity_axis(self):
        """Absolute maturities of the first axis."""
        if self.mode == "musiela":
            return self.grid.maturities + self.time
        return self.grid.maturities

    @classmethod
    def zeros(cls, grid, time=0.0):
        return cls(grid, np.zeros(grid.shape, dtype=complex), time)

    @classmethod
    def from_function(cls, grid, fn, time=0.0, closed_form=True):
        """Tabulate ``fn(T, u)`` (vectorised over ``u``) on ``grid``.

        With ``closed_form`` the function is also kept as the generator.
        """
        vals = np.array([fn(T, grid.frequencies.astype(complex)) for T in grid.maturities])
        return cls(grid, vals, time, generator=fn if closed_form else None)


def _linear_integral(axis, vals, a, b):
    """``int_a^b`` of the piecewise-linear interpolant of ``vals`` along ``axis``.

    ``vals`` has the integration axis first; ``a <= b`` inside the axis range.
    """
    if b < a:
        raise OutOfRangeError(f"integration bounds reversed: {a:g} > {b:g}")
    lo, hi = axis[0], axis[-1]
    if a < lo - 1e-12 or b > hi + 1e-12:
        raise OutOfRangeError(f"[{a:g}, {b:g}] exceeds the maturity grid [{lo:g}, {hi:g}]")
    if b - a <= 0:
        return np.zeros(vals.shape[1:], dtype=vals.dtype)
    inner = (axis > a) & (axis < b)
    xs = np.concatenate(([a], axis[inner], [b]))
    ja = np.searchsorted(axis, a, side="right") - 1
    jb = np.searchsorted(axis, b, side="left")
    ja = min(max(ja, 0), axis.size - 2)
    jb = min(max(jb, 1), axis.size - 1)
    fa = _interp_rows(axis, vals, a, ja)
    fb = _interp_rows(axis, vals, b, jb - 1)
    ys = np.concatenate((fa[None], vals[inner], fb[None]), axis=0)
    dx = np.diff(xs).reshape((-1,) + (1,) * (vals.ndim - 1))
    return np.sum(0.5 * dx * (ys[1:] + ys[:-1]), axis=0)


def _interp_rows(axis, vals, x, j):
    j = min(max(j, 0), axis.size - 2)
    w = (x - axis[j]) / (axis[j + 1] - axis[j])
    return (1.0 - w) * vals[j] + w * vals[j + 1]


def cumulant(s, t, T):
    """Vector over the frequency grid of ``int_t^T Psi(r, u) dr`` (trapezoid)."""
    if T < t:
        raise OutOfRangeError(f"T={T:g} < t={t:g}")
    if s.mode == "musiela":
        return _linear_integral(s.grid.maturities, s.values, t - s.time, T - s.time)
    return _linear_integral(s.grid.maturities, s.values, t, T)


def integrate_maturity(s, t, T, u):
    """``int_t^T Psi(r, u) dr`` for one grid frequency ``u``."""
    k = s.grid.u_index(u)
    if s.mode == "musiela":
        col = s.values[:, k]
        return complex(_linear_integral(s.grid.maturities, col, t - s.time, T - s.time))
    return complex(_linear_integral(s.grid.maturities, s.values[:, k], t, T))


_GL_CACHE: dict = {}


def _gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def generator_cumulant(s, t, T, z, nodes=24, panel=0.25):
    """``int_t^T Psi(r, z) dr`` from the closed-form generator at complex ``z``.

    Composite Gauss-Legendre with panels no longer than ``panel``.
    """
    if s.generator is None:
        raise SpecError("surface carries no closed-form generator")
    z = np.asarray(z, dtype=complex)
    if T <= t:
        return np.zeros_like(z)
    npan = max(1, int(np.ceil((T - t) / panel - 1e-12)))
    edges = np.linspace(t, T, npan + 1)
    x, w = _gauss_legendre(nodes)
    out = np.zeros_like(z)
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        for xi, wi in zip(x, w):
            out = out + half * wi * s.generator(a + half * (xi + 1.0), z)
    return out


def seminorm(s, T, m):
    """``int_0^T sup_{|u| <= m} |Psi(r, u)| dr`` on the grid (trapezoid)."""
    if m < 0 or m > s.grid.u_max + 1e-12:
        raise OutOfRangeError(f"m={m:g} outside [0, {s.grid.u_max:g}]")
    mask = np.abs(s.grid.frequencies) <= m + 1e-12
    sup = np.max(np.abs(s.values[:, mask]), axis=1)
    return float(_linear_integral(s.grid.maturities, sup, 0.0, T))


def to_musiela(s):
    """Reindex by time to maturity; rows with ``T < time`` are dropped."""
    if s.mode != "maturity":
        raise SpecError("surface is already in musiela mode")
    j0 = s.grid.t_index(s.time)
    n = s.grid.maturities.size - j0
    if n < 2:
        raise AlignmentError("fewer than two maturities remain after the shift")
    grid = GridSpec(s.grid.maturities[:n] - s.grid.maturities[0], s.grid.frequencies)
    return CodebookSurface(grid, s.values[j0:], s.time, "musiela", s.generator, dict(s.meta))


def from_musiela(s, grid=None):
    """Back to maturity indexing.

    Rows with ``T < time`` are frozen and filled with the ``T = time`` row;
    cells beyond the musiela range stay at that range's last row.
    """
    if s.mode != "musiela":
        raise SpecError("surface is not in musiela mode")
    if grid is None:
        j0 = int(round(s.time / s.grid.dT))
        if abs(j0 * s.grid.dT - s.time) > 1e-9:
            raise AlignmentError(f"t={s.time:g} is not a multiple of dT={s.grid.dT:g}")
        n = s.grid.maturities.size + j0
        grid = GridSpec(np.arange(n) * s.grid.dT, s.grid.frequencies)
    j0 = grid.t_index(s.time)
    vals = np.empty(grid.shape, dtype=complex)
    vals[:j0] = s.values[0]
    n = min(grid.maturities.size - j0, s.grid.maturities.size)
    vals[j0:j0 + n] = s.values[:n]
    vals[j0 + n:] = s.values[n - 1]
    return CodebookSurface(grid, vals, s.time, "maturity", s.generator, dict(s.meta))


@dataclass
class PiReport:
    """Cells where a necessary condition for membership in Pi fails.

    ``start``, ``end`` and ``u`` are parallel arrays, one entry per flagged
    ``(t, T, u)`` triple.  ``max_real`` is the largest real part seen.
    """

    start: np.ndarray
    end: np.ndarray
    u: np.ndarray
    kind: np.ndarray
    max_real: float
    skipped: int = 0

    @property
    def ok(self):
        return self.start.size == 0

    def __len__(self):
        return int(self.start.size)

    def __bool__(self):
        return not self.ok

    def first_start(self):
        return float(np.min(self.start)) if self.start.size else None


def pi_necessary_check(s, t=None, tol=1e-9):
    """Check ``Re int_a^b Psi <= tol`` and ``int_a^b Psi(., 0) == 0``.

    Every pair ``t <= a <= b`` of grid maturities (plus ``a = t`` itself) is
    tested.  Non-finite cells are skipped and counted.
    """
    if t is None:
        t = s.time
    axis = s.maturity_axis()
    vals = s.values
    prim = np.zeros_like(vals)
    dT = np.diff(axis)[:, None]
    prim[1:] = np.cumsum(0.5 * dT * (vals[1:] + vals[:-1]), axis=0)
    ends = np.nonzero(axis >= t - 1e-12)[0]
    if ends.size == 0:
        return PiReport(*(np.empty(0) for _ in range(3)), np.empty(0, dtype="<U4"), -np.inf)
    if t < axis[0] - 1e-12:
        raise OutOfRangeError(f"t={t:g} precedes the maturity grid")
    p_t = _linear_integral(axis, vals, axis[0], t) if t > axis[0] else np.zeros(vals.shape[1])
    starts = [(t, p_t)] + [(axis[j], prim[j]) for j in ends if axis[j] > t + 1e-12]
    u = s.grid.frequencies
    k0 = s.grid.zero_index
    fs, fe, fu, fk = [], [], [], []
    max_real = -np.inf
    skipped = 0
    for a, pa in starts:
        sel = ends[axis[ends] >= a - 1e-12]
        cum = prim[sel] - pa
        finite = np.isfinite(cum)
        skipped += int(np.count_nonzero(~finite))
        re = np.where(finite, cum.real, -np.inf)
        if re.size:
            max_real = max(max_real, float(np.max(re)))
        bad_j, bad_k = np.nonzero(re > tol)
        fs.append(np.full(bad_j.size, a))
        fe.append(axis[sel][bad_j])
        fu.append(u[bad_k])
        fk.append(np.full(bad_j.size, "re"))
        zero = np.abs(np.where(finite[:, k0], cum[:, k0], 0.0)) > tol
        zj = np.nonzero(zero)[0]
        fs.append(np.full(zj.size, a))
        fe.append(axis[sel][zj])
        fu.append(np.zeros(zj.size))
        fk.append(np.full(zj.size, "zero"))
    return PiReport(np.concatenate(fs), np.concatenate(fe), np.concatenate(fu),
                    np.concatenate(fk), max_real, skipped)
