"""Subordinator paths, the no-arbitrage drift and pathwise codebook solvers.

The codebook SDE is ``dPsi_t = a(t, Psi_{t-}) dt + b(t, Psi_{t-}) dM_t`` with
``a(t, psi)(T, u) = i d2gamma(u, -i int_t^T bt(r, u) dr) bt(T, u)`` for
``T >= t`` and zero below, where ``bt`` is ``b`` with its real part capped
at zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .codebook import CodebookSurface, GridSpec, _linear_integral, seminorm
from .errors import (NonConvergenceError, NumericalError, OutOfRangeError, SpecError,
                     StepSizeError, StripDomainError)
from .levy import CharExponent, JointExponent, JumpSpec, zero_gamma

__all__ = [
    "SubordinatorPath",
    "simulate_subordinator",
    "ZeroKernel",
    "ExpKernel",
    "TableKernel",
    "StateKernel",
    "BuildingBlocks",
    "Trajectory",
    "truncate_b",
    "drift_a",
    "evolve_picard",
    "evolve_event_driven",
    "GAMMA_EPS",
]

GAMMA_EPS = 1e-6
_TIME_EPS = 1e-12


# -- subordinator paths -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SubordinatorPath:
    """Increasing path ``M_t = drift_rate t + sum of jumps up to t``."""

    horizon: float
    drift_rate: float = 0.0
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    sizes: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.sizes, dtype=float)
        if t.shape != x.shape or t.ndim != 1:
            raise SpecError("jump times and sizes must be matching 1-d arrays")
        if self.drift_rate < 0:
            raise SpecError("drift_rate must be >= 0")
        if t.size and (np.any(np.diff(t) <= 0) or t[0] <= 0 or t[-1] > self.horizon):
            raise SpecError("jump times must be strictly increasing in (0, horizon]")
        if np.any(x <= 0):
            raise SpecError("jump sizes must be > 0")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "sizes", x)

    @classmethod
    def from_jumps(cls, horizon, jumps, drift_rate=0.0):
        jumps = sorted(jumps)
        return cls(horizon, drift_rate, np.array([j[0] for j in jumps]),
                   np.array([j[1] for j in jumps]))

    @property
    def jumps(self):
        return list(zip(self.times.tolist(), self.sizes.tolist()))

    def value(self, t, left=False):
        """``M_t`` (or ``M_{t-}`` with ``left``)."""
        side = "left" if left else "right"
        n = np.searchsorted(self.times, t, side=side)
        csum = np.concatenate(([0.0], np.cumsum(self.sizes)))
        return self.drift_rate * np.asarray(t) + csum[n]

    def essinf_part(self, t):
        """Deterministic lower envelope ``drift_rate * t``."""
        return self.drift_rate * np.asarray(t, dtype=float)

    def scaled(self, factor):
        return SubordinatorPath(self.horizon, self.drift_rate * factor, self.times,
                                self.sizes * factor)

    def summary(self):
        return {"horizon": self.horizon, "drift_rate": self.drift_rate,
                "n_jumps": int(self.times.size), "total_jumps": float(self.sizes.sum())}


def _gamma_small_jump_drift(shape, rate, eps):
    return shape * (-np.expm1(-rate * eps)) / rate


def _sample_gamma_jumps(rng, shape, rate, eps, horizon):
    """Jumps above ``eps`` of a gamma subordinator on ``[0, horizon]``.

    The Levy density ``shape e^{-rate x}/x`` is split at ``1/rate``; below,
    a log-uniform proposal is thinned by ``e^{-rate (x - eps)}``, above, an
    exponential proposal ``c + Exp(rate)`` is thinned by ``c/x``.
    """
    from scipy.special import exp1

    c = max(1.0 / rate, eps)
    mass_lo = shape * (exp1(rate * eps) - exp1(rate * c))
    mass_hi = shape * exp1(rate * c)
    out = []
    n_lo = rng.poisson(mass_lo * horizon)
    drawn = []
    while len(drawn) < n_lo:
        need = n_lo - len(drawn)
        # proposal density ~ 1/x on (eps, c), envelope e^{-rate eps}
        x = eps * np.exp(rng.random(2 * need + 8) * np.log(c / eps))
        keep = rng.random(x.size) < np.exp(-rate * (x - eps))
        drawn.extend(x[keep][:need].tolist())
    out.extend(drawn)
    n_hi = rng.poisson(mass_hi * horizon)
    drawn = []
    while len(drawn) < n_hi:
        need = n_hi - len(drawn)
        x = c + rng.exponential(1.0 / rate, 2 * need + 8)
        keep = rng.random(x.size) < c / x
        drawn.extend(x[keep][:need].tolist())
    out.extend(drawn)
    return np.array(out)


def simulate_subordinator(jumps, horizon, seed, eps=GAMMA_EPS):
    """One path of the subordinator with Levy measure ``jumps`` on ``[0, horizon]``.

    ``jumps`` is a :class:`JumpSpec`, a sequence of them, or a subordinator
    :class:`CharExponent`.  Compound Poisson parts are exact; gamma parts
    drop jumps below ``eps`` and add their mean as drift.
    """
    if isinstance(jumps, CharExponent):
        if not jumps.is_subordinator:
            raise SpecError("exponent is not a subordinator")
        base_drift = jumps.drift_h0
        specs = jumps.triplet.jumps
    else:
        base_drift = 0.0
        specs = (jumps,) if isinstance(jumps, JumpSpec) else tuple(jumps)
    if not horizon > 0:
        raise SpecError("horizon must be > 0")
    rng = np.random.default_rng(seed)
    times, sizes = [], []
    drift = base_drift
    for j in specs:
        if j.kind == "none":
            continue
        if not j.positive:
            raise SpecError("subordinator jumps must be positive")
        if j.kind == "gamma":
            x = _sample_gamma_jumps(rng, j.shape, j.rate, eps, horizon)
            drift += _gamma_small_jump_drift(j.shape, j.rate, eps)
        else:
            n = rng.poisson(j.rate * horizon)
            if j.kind == "compound-poisson-exp":
                x = rng.exponential(1.0 / j.theta, n)
            else:
                idx = rng.choice(len(j.atoms), size=n, p=j._probs)
                x = j._sizes[idx]
        times.append(horizon * (1.0 - rng.random(x.size)))
        sizes.append(x)
    t = np.concatenate(times) if times else np.empty(0)
    x = np.concatenate(sizes) if sizes else np.empty(0)
    order = np.argsort(t, kind="stable")
    t, x = t[order], x[order]
    if t.size > 1:
        # simultaneous jumps have probability zero; merge if rounding creates one
        keep = np.concatenate(([True], np.diff(t) > 0))
        if not keep.all():
            x = np.add.reduceat(x, np.nonzero(keep)[0])
            t = t[keep]
    return SubordinatorPath(horizon, drift, t, x)


# -- volatility kernels ---------------------------------------------------------------

def truncate_b(val):
    """``min(Re b, 0) + i Im b``."""
    val = np.asarray(val, dtype=complex)
    return np.minimum(val.real, 0.0) + 1j * val.imag


def _active(grid, t):
    return grid.maturities >= t - _TIME_EPS


class _Kernel:
    def truncated_field(self, t, psi, grid):
        return truncate_b(self.field(t, psi, grid))


class ZeroKernel(_Kernel):
    kind = "zero"
    deterministic = True

    def field(self, t, psi, grid):
        return np.zeros(grid.shape, dtype=complex)

    def truncated_integral(self, t, psi, grid):
        return np.zeros(grid.shape, dtype=complex)

    def stationary_integral(self, grid):
        return np.zeros(grid.shape, dtype=complex)


def _phi_values(phi, u):
    if isinstance(phi, CharExponent) or callable(phi):
        return np.asarray(phi(np.asarray(u, dtype=complex)), dtype=complex)
    return np.asarray(phi, dtype=complex)


class ExpKernel(_Kernel):
    """``b(t)(T, u) = phi(u) e^{-lam (T - t)} 1{T >= t}``.

    The truncated integral is exact: ``trunc(phi)(1 - e^{-lam (T - t)})/lam``.
    """

    kind = "deterministic-exp"
    deterministic = True

    def __init__(self, phi, lam):
        if not lam > 0:
            raise SpecError("lambda must be > 0")
        if isinstance(phi, CharExponent) and not phi.pi_member:
            raise SpecError("kernel exponent must be a Pi member")
        self.phi = phi
        self.lam = float(lam)
        self._cache = {}

    def _phi(self, grid, truncated=False):
        key = id(grid)
        if key not in self._cache:
            ph = _phi_values(self.phi, grid.frequencies)
            self._cache = {key: (ph, truncate_b(ph))}
        return self._cache[key][1 if truncated else 0]

    def _decay(self, t, grid):
        tau = grid.maturities - t
        return np.where(_active(grid, t), np.exp(-self.lam * np.maximum(tau, 0.0)), 0.0)

    def field(self, t, psi, grid):
        return self._decay(t, grid)[:, None] * self._phi(grid)[None, :]

    def truncated_field(self, t, psi, grid):
        return self._decay(t, grid)[:, None] * self._phi(grid, True)[None, :]

    def truncated_integral(self, t, psi, grid):
        tau = np.maximum(grid.maturities - t, 0.0)
        w = -np.expm1(-self.lam * tau) / self.lam
        return w[:, None] * self._phi(grid, True)[None, :]

    def stationary_integral(self, grid):
        """``int_0^T b(0)(r, u) dr`` for the Musiela-stationary kernel."""
        return self.truncated_integral(0.0, None, grid)


class TableKernel(_Kernel):
    """Musiela-stationary table ``bm(x, u)``: ``b(t)(T, u) = bm(T - t, u)``.

    ``values`` lives on the grid's maturity axis read as time to maturity and
    is interpolated linearly; integrals are exact for the interpolant.
    """

    kind = "deterministic-table"
    deterministic = True

    def __init__(self, grid, values):
        self.grid = grid
        self.values = np.asarray(values, dtype=complex)
        if self.values.shape != grid.shape:
            raise SpecError("table shape does not match grid")
        tv = truncate_b(self.values)
        dx = np.diff(grid.maturities)[:, None]
        self._prim = np.zeros_like(tv)
        self._prim[1:] = np.cumsum(0.5 * dx * (tv[1:] + tv[:-1]), axis=0)
        self._tv = tv

    def _interp(self, arr, xs):
        x = self.grid.maturities
        if np.any(xs > x[-1] + _TIME_EPS):
            raise OutOfRangeError("time to maturity beyond the kernel table")
        xs = np.clip(xs, 0.0, x[-1])
        j = np.clip(np.searchsorted(x, xs, side="right") - 1, 0, x.size - 2)
        w = ((xs - x[j]) / (x[j + 1] - x[j]))[:, None]
        return (1.0 - w) * arr[j] + w * arr[j + 1]

    def field(self, t, psi, grid):
        tau = grid.maturities - t
        act = _active(grid, t)
        out = np.zeros(grid.shape, dtype=complex)
        out[act] = self._interp(self.values, np.maximum(tau[act], 0.0))
        return out

    def truncated_integral(self, t, psi, grid):
        tau = grid.maturities - t
        act = _active(grid, t)
        out = np.zeros(grid.shape, dtype=complex)
        xs = np.maximum(tau[act], 0.0)
        # integral of the linear interpolant of the truncated table
        x = self.grid.maturities
        j = np.clip(np.searchsorted(x, xs, side="right") - 1, 0, x.size - 2)
        f0 = self._tv[j]
        fx = self._interp(self._tv, xs)
        out[act] = self._prim[j] + 0.5 * (xs - x[j])[:, None] * (f0 + fx)
        return out

    def stationary_integral(self, grid):
        return self.truncated_integral(0.0, None, grid)


class StateKernel(_Kernel):
    """State-dependent kernel ``fn(t, values, grid) -> b`` on the grid.

    Rows with ``T < t`` are zeroed after the call.  Integrals use the
    trapezoid rule over grid maturities, starting at ``t`` with the first
    active row held constant on the partial cell.
    """

    kind = "state-dependent"
    deterministic = False

    def __init__(self, fn):
        self.fn = fn

    def field(self, t, psi, grid):
        vals = np.asarray(self.fn(t, psi, grid), dtype=complex)
        return np.where(_active(grid, t)[:, None], vals, 0.0)

    def truncated_integral(self, t, psi, grid):
        tb = truncate_b(self.field(t, psi, grid))
        T = grid.maturities
        act = np.nonzero(_active(grid, t))[0]
        out = np.zeros(grid.shape, dtype=complex)
        if act.size == 0:
            return out
        j0 = act[0]
        out[j0] = (T[j0] - t) * tb[j0]
        if act.size > 1:
            dx = np.diff(T[act])[:, None]
            out[act[1:]] = out[j0] + np.cumsum(0.5 * dx * (tb[act[1:]] + tb[act[:-1]]), axis=0)
        return out


@dataclass
class BuildingBlocks:
    """``(x0, psi0, vol, gamma)`` driving the codebook SDE."""

    x0: float
    psi0: CodebookSurface
    vol: object
    gamma: JointExponent
    params: object = None

    @property
    def grid(self):
        return self.psi0.grid


@dataclass
class Trajectory:
    """Codebook states at checkpoint times (values are post-jump)."""

    times: np.ndarray
    surfaces: list
    solver: str
    residuals: list = field(default_factory=list)
    iterations: int = 0
    path: SubordinatorPath | None = None
    blocks: BuildingBlocks | None = None

    def __len__(self):
        return len(self.surfaces)

    def at(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise OutOfRangeError(f"no checkpoint at t={t:g}")
        return self.surfaces[k]

    def manifest(self):
        return {"solver": self.solver, "times": [float(t) for t in self.times],
                "residuals": [float(r) for r in self.residuals], "iterations": self.iterations,
                "path": self.path.summary() if self.path is not None else None}


# -- drift ---------------------------------------------------------------------------

def _values(psi):
    return psi.values if isinstance(psi, CodebookSurface) else np.asarray(psi, dtype=complex)


def _drift_from(blocks, t, vals, grid, after=None):
    """``after`` marks evaluation on an interval starting there: rows with
    ``T <= after`` are inactive (the indicator is right-continuous in t)."""
    out = np.zeros(grid.shape, dtype=complex)
    if isinstance(blocks.vol, ZeroKernel) or blocks.gamma.name == "zero":
        return out
    if after is None:
        act = _active(grid, t)
    else:
        act = grid.maturities > after + _TIME_EPS
    if not act.any():
        return out
    bt = blocks.vol.truncated_field(t, vals, grid)[act]
    integ = blocks.vol.truncated_integral(t, vals, grid)[act]
    u = grid.frequencies[None, :]
    try:
        d2 = blocks.gamma.dv(u, -1j * integ)
    except StripDomainError as exc:
        raise NumericalError(f"joint exponent left its strip at t={t:g}: {exc}") from exc
    out[act] = 1j * d2 * bt
    return out


def drift_a(blocks, t, psi):
    """Drift field ``a(t, psi)`` on the grid of ``psi`` (zero for ``T < t``)."""
    grid = psi.grid if isinstance(psi, CodebookSurface) else blocks.grid
    if t > grid.t_max + _TIME_EPS:
        raise OutOfRangeError(f"t={t:g} beyond the last maturity {grid.t_max:g}")
    return _drift_from(blocks, t, _values(psi), grid)


def _jump_field(blocks, t, vals, grid):
    return blocks.vol.field(t, vals, grid)


# -- time grids -------------------------------------------------------------------------

def _time_grid(dt, t_end, path, grid, checkpoints):
    n = int(np.ceil(t_end / dt - 1e-9))
    pts = [np.minimum(np.arange(n + 1) * dt, t_end)]
    if path is not None:
        pts.append(path.times[path.times <= t_end + _TIME_EPS])
    pts.append(grid.maturities[grid.maturities <= t_end + _TIME_EPS])
    pts.append(np.asarray(checkpoints, dtype=float))
    allp = np.sort(np.concatenate(pts))
    allp = allp[(allp >= 0) & (allp <= t_end + _TIME_EPS)]
    keep = np.concatenate(([True], np.diff(allp) > 1e-12))
    out = allp[keep]
    out[-1] = min(out[-1], t_end)
    return out


def _jump_sizes_at(path, times):
    dm = np.zeros(times.size)
    if path is None or path.times.size == 0:
        return dm
    idx = np.searchsorted(times, path.times)
    for i, (tj, xj) in zip(idx, zip(path.times, path.sizes)):
        for cand in (i - 1, i, i + 1):
            if 0 <= cand < times.size and abs(times[cand] - tj) <= 1e-12:
                dm[cand] += xj
                break
    return dm


def _default_checkpoints(path, grid, t_end):
    pts = [grid.maturities[grid.maturities <= t_end + _TIME_EPS], [t_end]]
    if path is not None:
        pts.append(path.times[path.times <= t_end + _TIME_EPS])
    return np.unique(np.concatenate(pts))


def _check_inputs(blocks, path, t_end):
    grid = blocks.grid
    if t_end < 0 or t_end > grid.t_max + _TIME_EPS:
        raise OutOfRangeError(f"t_end={t_end:g} outside [0, {grid.t_max:g}]")
    if path is not None and path.horizon < t_end - _TIME_EPS:
        raise OutOfRangeError("path horizon shorter than t_end")


def _collocation(stages):
    """Gauss-Legendre collocation tableau on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(stages)
    c = 0.5 * (x + 1.0)
    w = 0.5 * w
    A = np.empty((stages, stages))
    for j in range(stages):
        others = np.delete(c, j)
        poly = np.poly1d(np.poly(others)) / np.prod(c[j] - others)
        ip = np.polyint(poly)
        A[:, j] = ip(c) - ip(0.0)
    return c, w, A


def _snap(times, checkpoints):
    idx = np.searchsorted(times, checkpoints - 1e-12)
    return np.clip(idx, 0, times.size - 1)


def evolve_picard(blocks, path, t_end, tol=1e-12, max_iter=50, dt=0.05, checkpoints=None,
                  stages=4):
    """Global Picard iteration for the codebook SDE on a jump-adapted grid.

    Each iterate is the full path ``V`` on the time grid (left limits, post-jump
    values and collocation stage values); the drift integral uses
    ``stages``-point Gauss-Legendre collocation per step.  Stops when the sup
    over time of the ``(T_N, u_M)`` seminorm distance between iterates falls
    below ``tol``.
    """
    _check_inputs(blocks, path, t_end)
    grid = blocks.grid
    if checkpoints is None:
        checkpoints = _default_checkpoints(path, grid, t_end)
    checkpoints = np.asarray(checkpoints, dtype=float)
    times = _time_grid(dt, t_end, path, grid, checkpoints)
    dm = _jump_sizes_at(path, times)
    m_drift = path.drift_rate if path is not None else 0.0
    c, w, A = _collocation(stages)
    n = times.size
    psi0 = blocks.psi0.values
    h = np.diff(times)

    # V[k]: post-jump value at times[k]; L[k]: left limit; St[k, i]: stage values
    V = np.broadcast_to(psi0, (n,) + psi0.shape).copy()
    L = V.copy()
    St = np.broadcast_to(psi0, (n - 1, stages) + psi0.shape).copy()
    residuals = []
    tmax = grid.t_max

    def dist(a, b):
        d = np.abs(a - b)
        sup = np.max(d, axis=2)  # over u
        return float(np.max(np.sum(0.5 * (sup[:, 1:] + sup[:, :-1]) * np.diff(grid.maturities), axis=1)))

    # a deterministic kernel makes the drift state-free; reuse it across iterates
    frozen_drift = {} if getattr(blocks.vol, "deterministic", False) else None
    for it in range(1, max_iter + 1):
        Vn = np.empty_like(V)
        Ln = np.empty_like(L)
        Sn = np.empty_like(St)
        cur = psi0.copy()
        Ln[0] = cur
        if dm[0] != 0:
            cur = cur + _jump_field(blocks, times[0], L[0], grid) * dm[0]
        Vn[0] = cur
        for k in range(n - 1):
            s0, hk = times[k], h[k]
            if frozen_drift is not None and k in frozen_drift:
                ks = frozen_drift[k]
            else:
                ks = []
                for i in range(stages):
                    si = s0 + c[i] * hk
                    f = _drift_from(blocks, si, St[k, i], grid, after=s0)
                    if m_drift:
                        f = f + m_drift * _jump_field(blocks, si, St[k, i], grid)
                    ks.append(f)
                ks = np.array(ks)
                if frozen_drift is not None:
                    frozen_drift[k] = ks
            Sn[k] = cur[None] + hk * np.tensordot(A, ks, axes=(1, 0))
            cur = cur + hk * np.tensordot(w, ks, axes=(0, 0))
            Ln[k + 1] = cur
            if dm[k + 1] != 0:
                cur = cur + _jump_field(blocks, times[k + 1], L[k + 1], grid) * dm[k + 1]
            Vn[k + 1] = cur
        r = max(dist(Vn, V), dist(Ln, L))
        residuals.append(r)
        V, L, St = Vn, Ln, Sn
        if r < tol:
            break
    else:
        raise NonConvergenceError(
            f"Picard iteration did not reach tol={tol:g} in {max_iter} iterations "
            f"(last residual {residuals[-1]:.3g})", residual=residuals[-1])

    idx = _snap(times, checkpoints)
    surfs = [CodebookSurface(grid, V[j], float(times[j]), "maturity", None,
                             {"solver": "picard"}) for j in idx]
    return Trajectory(times[idx], surfs, "picard", residuals, len(residuals), path, blocks)


def evolve_event_driven(blocks, path, t_end, dt=0.01, checkpoints=None, min_step=1e-13):
    """Classical RK4 between event times; jumps applied with the pre-jump state."""
    _check_inputs(blocks, path, t_end)
    grid = blocks.grid
    if not dt > min_step:
        raise StepSizeError(f"step size {dt:g} underflows")
    if checkpoints is None:
        checkpoints = _default_checkpoints(path, grid, t_end)
    checkpoints = np.asarray(checkpoints, dtype=float)
    events = _time_grid(t_end if t_end > 0 else 1.0, t_end, path, grid, checkpoints)
    dm = _jump_sizes_at(path, events)
    m_drift = path.drift_rate if path is not None else 0.0

    def rhs(s, y, start):
        f = _drift_from(blocks, s, y, grid, after=start)
        if m_drift:
            f = f + m_drift * _jump_field(blocks, s, y, grid)
        return f

    y = blocks.psi0.values.copy()
    states = np.empty((events.size,) + y.shape, dtype=complex)
    if dm[0] != 0:
        y = y + _jump_field(blocks, events[0], y, grid) * dm[0]
    states[0] = y
    for k in range(events.size - 1):
        a, b = events[k], events[k + 1]
        m = max(1, int(np.ceil((b - a) / dt - 1e-9)))
        hk = (b - a) / m
        if hk < min_step:
            raise StepSizeError(f"step {hk:.3g} below {min_step:g} on [{a:g}, {b:g}]")
        s = a
        for _ in range(m):
            k1 = rhs(s, y, a)
            k2 = rhs(s + 0.5 * hk, y + 0.5 * hk * k1, a)
            k3 = rhs(s + 0.5 * hk, y + 0.5 * hk * k2, a)
            k4 = rhs(s + hk, y + hk * k3, a)
            y = y + hk / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            s += hk
        if dm[k + 1] != 0:
            y = y + _jump_field(blocks, b, y, grid) * dm[k + 1]
        states[k + 1] = y
    idx = _snap(events, checkpoints)
    surfs = [CodebookSurface(grid, states[j], float(events[j]), "maturity", None,
                             {"solver": "event"}) for j in idx]
    return Trajectory(events[idx], surfs, "event", [], 0, path, blocks)
