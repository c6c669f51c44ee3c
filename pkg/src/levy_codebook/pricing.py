"""Fourier maps between codebooks, modified option prices and call surfaces.

Conventions: ``F f(u) = int e^{iux} f(x) dx``; the inverse carries
``1/(2 pi)``.  For the cumulant ``k(u) = int_t^T Psi_t(r, u) dr`` the modified
price ``O(x)`` (``x = log K/S``) has transform ``(1 - e^{k(u)}) / (u^2 + iu)``.

Two inversion routes are used:

* damped: ``O(x) = min(1, e^-x) - e^{-alpha x} I(x)`` with
  ``I(x) = (1/pi) Re int_0^inf e^{-iux} e^{k(u - i alpha)} /
  ((alpha + iu)(1 - alpha - iu)) du``; needs ``k`` off the real axis.
* grid: principal-value inversion on the real frequency grid, with a
  Black-Scholes control variate that absorbs the ``1/u`` pole and the kink
  of ``O`` at ``x = 0``.

Call prices are interpolated through ``c(x) = C/K = O(x) + (e^-x - 1)^+``,
which is smooth where ``O`` has a kink.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.special import ndtr, ndtri

from .codebook import CodebookSurface, GridSpec, cumulant, generator_cumulant
from .errors import (BranchError, DataError, OutOfRangeError, PiViolationError,
                     ResolutionError, SpecError, StripDomainError)

__all__ = [
    "ModifiedPriceSlice",
    "PriceSurface",
    "bs_call",
    "bs_modified",
    "bs_modified_transform",
    "codebook_to_modified",
    "modified_to_calls",
    "modified_to_puts",
    "price_surface",
    "price_from_cumulant",
    "forward_transform",
    "surface_to_codebook",
]

ALPHA = 0.5


@dataclass
class ModifiedPriceSlice:
    """``O(T, x)`` on a log-moneyness grid, with diagnostics in ``meta``."""

    T: float
    x: np.ndarray
    values: np.ndarray
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.x.shape != self.values.shape or self.x.ndim != 1 or self.x.size < 2:
            raise SpecError("x and values must be matching 1-d arrays")
        if np.any(np.diff(self.x) <= 0):
            raise SpecError("x grid must be strictly increasing")
        if np.any(self.values < 0):
            raise SpecError("modified prices must be >= 0")

    def call_ratio(self):
        """``C/K`` on the grid."""
        return self.values + np.maximum(np.expm1(-self.x), 0.0)


@dataclass
class PriceSurface:
    """Call prices ``prices[i, j] = C(maturities[i], strikes[j])``."""

    spot: float
    strikes: np.ndarray
    maturities: np.ndarray
    prices: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.strikes = np.asarray(self.strikes, dtype=float)
        self.maturities = np.asarray(self.maturities, dtype=float)
        self.prices = np.asarray(self.prices, dtype=float).reshape(
            self.maturities.size, self.strikes.size)
        if not self.spot > 0:
            raise SpecError("spot must be > 0")
        if np.any(self.strikes <= 0) or np.any(np.diff(self.strikes) <= 0):
            raise SpecError("strikes must be positive and strictly increasing")
        if np.any(np.diff(self.maturities) <= 0):
            raise SpecError("maturities must be strictly increasing")

    @property
    def intrinsic(self):
        return np.maximum(self.spot - self.strikes, 0.0)


# -- Black-Scholes oracle pieces ------------------------------------------------

def bs_call(S, K, T, sigma):
    """Black-Scholes call with zero rates."""
    S, K = np.asarray(S, dtype=float), np.asarray(K, dtype=float)
    v = sigma * sigma * T
    if v <= 0:
        return np.maximum(S - K, 0.0)
    return K * bs_modified(np.log(K / S), v) + np.maximum(S - K, 0.0)


def bs_modified(x, v):
    """Modified price of a log-normal return with total variance ``v``."""
    x = np.asarray(x, dtype=float)
    if v <= 0:
        return np.zeros_like(x)
    sv = np.sqrt(v)
    d1 = (-x + 0.5 * v) / sv
    d2 = d1 - sv
    ex = np.exp(-x)
    out = np.where(x >= 0, ex * ndtr(d1) - ndtr(d2), ndtr(-d2) - ex * ndtr(-d1))
    return np.maximum(out, 0.0)


def bs_modified_transform(u, v):
    """``(1 - exp(-(u^2 + iu) v / 2)) / (u^2 + iu)`` with the value ``v/2`` at 0."""
    u = np.asarray(u, dtype=float)
    q = u * u + 1j * u
    with np.errstate(invalid="ignore", divide="ignore"):
        out = -np.expm1(-0.5 * v * q) / q
    return np.where(u == 0, 0.5 * v + 0j, out)


# -- damped inversion -------------------------------------------------------------

def _damped_weights(u, alpha):
    return 1.0 / ((alpha + 1j * u) * (1.0 - alpha - 1j * u))


def _damped_integrand(cum_shift, u, alpha, v=0.0):
    """Damped integrand minus its Black-Scholes counterpart of total variance ``v``.

    The Black-Scholes part is inverted in closed form, so only the residual
    is integrated; it decays like the characteristic function itself.
    """
    z = u - 1j * alpha
    bs = np.exp(-0.5 * v * (z * z + 1j * z))
    return (np.exp(cum_shift) - bs) * _damped_weights(u, alpha)


def _line_variance(cum_real):
    """Total variance matching ``Re k`` at ``u = h``: ``-2 Re k(h) / h^2``."""
    h = 1e-2
    return max(-2.0 * float(np.real(cum_real(h))) / (h * h), 0.0)


def _damped_direct(f, u, du, x):
    """``(1/pi) Re sum w_k du e^{-i u_k x} f_k`` with half weight at ``u = 0``."""
    w = np.full(u.size, du)
    w[0] *= 0.5
    wf = w * f
    out = np.empty(x.size)
    for lo in range(0, x.size, 256):
        xs = x[lo:lo + 256]
        out[lo:lo + 256] = (np.exp(-1j * np.outer(xs, u)) @ wf).real / np.pi
    return out


def _damped_fft(f, du, n):
    """``I`` on the FFT x-grid ``x_j = x_min + j dx``."""
    u = np.arange(n) * du
    dx = 2.0 * np.pi / (n * du)
    x_min = -0.5 * n * dx
    w = np.full(n, du)
    w[0] *= 0.5
    a = w * f * np.exp(-1j * u * x_min)
    vals = np.fft.fft(a).real / np.pi
    return x_min + np.arange(n) * dx, vals


def _c_from_I(x, I, alpha, v=0.0):
    """``C/K`` from the residual integral ``I``: Black-Scholes ratio minus ``e^{-alpha x} I``."""
    return bs_modified(x, v) + np.maximum(np.expm1(-x), 0.0) - np.exp(-alpha * x) * I


def price_from_cumulant(cum, S, strikes, T, alpha=ALPHA, method="fft", n=2 ** 16, du=0.05):
    """Call prices from a cumulant function ``cum(u, T)`` on the damped line.

    ``cum`` must accept complex ``u`` with ``Im u = -alpha``.  ``T`` may be a
    scalar (1-d result) or a sequence of maturities (one row each).
    ``method="direct"`` sums the quadrature at the strikes themselves;
    ``"fft"`` inverts on an FFT grid and interpolates ``C/K`` with a cubic spline.
    """
    strikes = np.asarray(strikes, dtype=float)
    scalar = np.ndim(T) == 0
    Ts = np.atleast_1d(np.asarray(T, dtype=float))
    x = np.log(strikes / S)
    out = np.empty((Ts.size, strikes.size))
    u = np.arange(n) * du
    for i, Ti in enumerate(Ts):
        if Ti <= 0:
            out[i] = np.maximum(S - strikes, 0.0)
            continue
        try:
            ks = np.asarray(cum(u - 1j * alpha, Ti), dtype=complex)
        except StripDomainError as exc:
            raise StripDomainError(f"cumulant not evaluable on Im u = {-alpha:g}: {exc}") from exc
        if ks.shape != u.shape or not np.all(np.isfinite(ks.real)):
            raise StripDomainError("cumulant evaluation failed on the damped line")
        v = _line_variance(lambda h: cum(np.array([h], dtype=complex), Ti)[0])
        f = _damped_integrand(ks, u, alpha, v)
        if method == "direct":
            I = _damped_direct(f, u, du, x)
            c = _c_from_I(x, I, alpha, v)
        elif method == "fft":
            xg, Ig = _damped_fft(f, du, n)
            if x.min() < xg[2] or x.max() > xg[-3]:
                raise OutOfRangeError("strikes outside the FFT log-moneyness range")
            lo = max(np.searchsorted(xg, x.min()) - 8, 0)
            hi = min(np.searchsorted(xg, x.max()) + 8, n)
            spline = CubicSpline(xg[lo:hi], np.exp(-alpha * xg[lo:hi]) * Ig[lo:hi])
            c = _c_from_I(x, 0.0, alpha, v) - spline(x)
        else:
            raise SpecError(f"unknown method {method!r}")
        intrinsic = np.maximum(S - strikes, 0.0)
        out[i] = np.clip(strikes * c, intrinsic, S)
    return out[0] if scalar else out


# -- codebook -> modified prices ----------------------------------------------------

def _curvature_variance(k, grid):
    """Total variance of the Gaussian matching ``Re k`` near ``u = 0``."""
    k0 = grid.zero_index
    du = grid.du
    return max(-2.0 * k[k0 + 1].real / (du * du), 0.0)


def _slope_at_zero(k, grid):
    k0 = grid.zero_index
    du = grid.du
    if k0 >= 2:
        return (-k[k0 + 2] + 8 * k[k0 + 1] - 8 * k[k0 - 1] + k[k0 - 2]) / (12 * du)
    return (k[k0 + 1] - k[k0 - 1]) / (2 * du)


def _default_x(v, width=None, points=401):
    if width is None:
        width = max(2.0, 6.0 * np.sqrt(v))
    return np.linspace(-width, width, points)


def _grid_inverse(k, grid, x, v):
    """``O`` from the real-grid cumulant: Black-Scholes part plus PV residual."""
    u = grid.frequencies
    k0 = grid.zero_index
    q = u * u + 1j * u
    w = np.exp(-0.5 * v * q)
    r = np.empty(u.size, dtype=complex)
    nz = np.arange(u.size) != k0
    with np.errstate(invalid="ignore"):
        r[nz] = (w[nz] - np.exp(k[nz])) / q[nz]
    r[k0] = (-0.5j * v - _slope_at_zero(k, grid)) / 1j
    wt = np.full(u.size, grid.du)
    wt[0] *= 0.5
    wt[-1] *= 0.5
    res = np.empty(x.size)
    for lo in range(0, x.size, 256):
        xs = x[lo:lo + 256]
        res[lo:lo + 256] = (np.exp(-1j * np.outer(xs, u)) @ (wt * r)).real / (2 * np.pi)
    tail = float(np.max(np.abs(r[[0, -1]])))
    return bs_modified(x, v) + res, tail


def _probe_cutoff(gen_cum, alpha, du, n_max, v, tol=1e-17):
    """Frequency beyond which the damped residual integrand is below ``tol``."""
    probe = np.geomspace(1.0, n_max * du, 160)
    f = np.abs(_damped_integrand(gen_cum(probe - 1j * alpha), probe, alpha, v))
    big = np.nonzero(f > tol)[0]
    if big.size == 0:
        return probe[0]
    return min(probe[big[-1]] * 1.5 if big[-1] + 1 < probe.size else n_max * du, n_max * du)


def codebook_to_modified(s, t, T, x=None, method="auto", alpha=ALPHA, clip_limit=1e-3,
                         decay_tol=1e-4, pi_tol=1e-9, du=0.05, n_max=2 ** 16, max_width=32.0,
                         unresolved="raise"):
    """Modified prices ``O_t(T, .)`` implied by the codebook ``s``.

    ``method`` is ``"damped"`` (needs ``s.generator``), ``"grid"`` or ``"auto"``.
    Without an explicit ``x`` the default grid (step 0.01, half-width
    ``max(2, 6 sqrt(v))``) is doubled in width until the edge values fall
    below ``decay_tol``; an explicit ``x`` is used as given.
    ``meta`` reports the route, clipped mass, edge values and, when a generator
    exists, the martingale defect ``|k(-i)|``.

    NaN cells (unresolved by :func:`surface_to_codebook`) make the grid route
    fail unless ``unresolved`` is ``"zero"`` (characteristic function 0 there)
    or ``"gaussian"`` (the Gaussian fitted at ``u = 0``, so the residual
    against the Black-Scholes control vanishes there).
    """
    if T < t - 1e-14:
        raise OutOfRangeError(f"T={T:g} precedes t={t:g}")
    k = cumulant(s, t, T)
    grid = s.grid
    finite = np.isfinite(k)
    if np.any(k[finite].real > pi_tol) or abs(k[grid.zero_index]) > pi_tol:
        raise PiViolationError(
            f"cumulant over [{t:g}, {T:g}] fails the Pi necessary check "
            f"(max Re = {np.nanmax(k.real):.3g})")
    if method == "auto":
        method = "damped" if s.generator is not None else "grid"
    if method not in ("damped", "grid"):
        raise SpecError(f"unknown method {method!r}")
    if unresolved not in ("raise", "zero", "gaussian"):
        raise SpecError(f"unknown unresolved policy {unresolved!r}")
    if not np.all(finite) and method == "grid":
        if unresolved == "raise":
            raise ResolutionError("codebook has unresolved cells; grid inversion impossible")
        if not np.all(finite[grid.zero_index - 2:grid.zero_index + 3]):
            raise ResolutionError("cells next to u = 0 are unresolved")
        if unresolved == "zero":
            k = np.where(finite, k, -np.inf)
        else:
            u = grid.frequencies
            k = np.where(finite, k, -0.5 * _curvature_variance(k, grid) * (u * u + 1j * u))
    v = _curvature_variance(k, grid)
    if T - t <= 1e-14:
        xs = _default_x(v) if x is None else np.asarray(x, dtype=float)
        return ModifiedPriceSlice(T, xs, np.zeros_like(xs), t,
                                  {"route": "trivial", "clipped": 0.0, "variance": v})
    if x is not None:
        # the caller owns the range; the edge value is only reported
        return _modified_slice(s, t, T, np.asarray(x, dtype=float), method, k, v, alpha,
                               clip_limit, np.inf, du, n_max)
    width = max(2.0, 6.0 * np.sqrt(v))
    while True:
        xs = np.linspace(-width, width, 2 * int(round(width / 0.01)) + 1)
        try:
            return _modified_slice(s, t, T, xs, method, k, v, alpha, clip_limit, decay_tol,
                                   du, n_max)
        except _EdgeError:
            if 2 * width > max_width:
                raise
            width *= 2


class _EdgeError(ResolutionError):
    pass


def _modified_slice(s, t, T, x, method, k, v, alpha, clip_limit, decay_tol, du, n_max):
    grid = s.grid
    meta = {"variance": v, "route": method}
    if method == "damped":
        if s.generator is None:
            raise SpecError("damped route needs a closed-form generator")

        def gen_cum(z):
            return generator_cumulant(s, t, T, z)

        v = _line_variance(lambda h: gen_cum(np.array([h], dtype=complex))[0])
        meta["variance"] = v
        uc = _probe_cutoff(gen_cum, alpha, du, n_max, v)
        u = np.arange(int(np.ceil(uc / du)) + 1) * du
        f = _damped_integrand(gen_cum(u - 1j * alpha), u, alpha, v)
        I = _damped_direct(f, u, du, x)
        vals = bs_modified(x, v) - np.exp(-alpha * x) * I
        meta["martingale_defect"] = float(abs(gen_cum(np.array([-1j]))[0]))
        meta["u_cut"] = float(u[-1])
    else:
        vals, tail = _grid_inverse(k, grid, x, v)
        meta["tail"] = tail
        meta["martingale_defect"] = None

    neg = vals < 0
    clipped = float(-np.sum(vals[neg]))
    total = float(np.sum(np.abs(vals)))
    meta["clipped"] = clipped
    if total > 0 and clipped / total > clip_limit:
        raise ResolutionError(f"clipped mass {clipped / total:.3g} exceeds {clip_limit:g}")
    vals = np.where(neg, 0.0, vals)
    edge = float(max(vals[0], vals[-1]))
    meta["edge"] = edge
    if edge > decay_tol:
        raise _EdgeError(f"modified price at the x-grid edge is {edge:.3g} > {decay_tol:g}")
    return ModifiedPriceSlice(T, x, vals, t, meta)


def _bs_ratio(x, v):
    return bs_modified(x, v) + np.maximum(np.expm1(-x), 0.0)


def _ratio_interp(o):
    """``C/K`` between lattice points: PCHIP on the residual to the slice's Black-Scholes fit."""
    v = float(o.meta.get("variance", 0.0) or 0.0)
    # flat stretches give 0/0 slopes inside scipy; the result there is still exact
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if v <= 0:
            return PchipInterpolator(o.x, o.call_ratio(), extrapolate=False)
        res = PchipInterpolator(o.x, o.call_ratio() - _bs_ratio(o.x, v), extrapolate=False)
    return lambda x: res(x) + _bs_ratio(x, v)


def _check_strikes(o, S, strikes):
    strikes = np.asarray(strikes, dtype=float)
    x = np.log(strikes / S)
    if x.min() < o.x[0] - 1e-12 or x.max() > o.x[-1] + 1e-12:
        raise OutOfRangeError(
            f"log-moneyness [{x.min():.4g}, {x.max():.4g}] outside [{o.x[0]:.4g}, {o.x[-1]:.4g}]")
    return strikes, np.clip(x, o.x[0], o.x[-1])


def modified_to_calls(o, S, strikes):
    """``C = (S - K)^+ + K O(log K/S)``; no extrapolation beyond the slice."""
    strikes, x = _check_strikes(o, S, strikes)
    intrinsic = np.maximum(S - strikes, 0.0)
    if not np.any(o.values):
        return intrinsic
    c = _ratio_interp(o)(x)
    return np.clip(strikes * c, intrinsic, S)


def modified_to_puts(o, S, strikes):
    """``P = (K - S)^+ + K O(log K/S)``."""
    strikes, x = _check_strikes(o, S, strikes)
    c = _ratio_interp(o)(x)
    o_val = c - np.maximum(np.expm1(-x), 0.0)
    return np.maximum(strikes - S, 0.0) + strikes * np.maximum(o_val, 0.0)


def price_surface(s, S, strikes, maturities=None, t=None, x_step=0.01, **kw):
    """Call surface on ``strikes`` x ``maturities`` (default: grid maturities >= t).

    Each slice is computed on a log-moneyness lattice of step ``x_step``
    through 0, wide enough for both the strikes and the decay check.
    """
    t = s.time if t is None else t
    strikes = np.asarray(strikes, dtype=float)
    if maturities is None:
        axis = s.maturity_axis()
        maturities = axis[axis >= t - 1e-12]
    maturities = np.asarray(maturities, dtype=float)
    xs = np.log(strikes / S)
    need = max(abs(xs[0]), abs(xs[-1]))
    prices = np.empty((maturities.size, strikes.size))
    slices = []
    for i, T in enumerate(maturities):
        o = codebook_to_modified(s, t, T, **kw)
        if need > o.x[-1] - 1e-12 or abs(o.x[1] - o.x[0] - x_step) > 1e-12:
            m = int(np.ceil(max(need, o.x[-1]) / x_step - 1e-9))
            o = codebook_to_modified(s, t, T, x=np.arange(-m, m + 1) * x_step, **kw)
        slices.append(o)
        prices[i] = modified_to_calls(o, S, strikes)
    return PriceSurface(S, strikes, maturities, prices, t), slices


# -- prices -> codebook -------------------------------------------------------------

def forward_transform(x, o, u, v=None):
    """``F O(u)`` from samples of ``O`` on ``x``.

    A Black-Scholes term of variance ``v`` (fitted at ``x = 0`` if omitted)
    is transformed exactly; only the smooth residual is integrated by the
    trapezoid rule.
    """
    x = np.asarray(x, dtype=float)
    o = np.asarray(o, dtype=float)
    u = np.asarray(u, dtype=float)
    if v is None:
        v = _atm_variance(x, o)
    res = o - bs_modified(x, v)
    wt = np.empty(x.size)
    dx = np.diff(x)
    wt[0] = 0.5 * dx[0]
    wt[-1] = 0.5 * dx[-1]
    wt[1:-1] = 0.5 * (dx[1:] + dx[:-1])
    out = np.empty(u.size, dtype=complex)
    for lo in range(0, u.size, 512):
        us = u[lo:lo + 512]
        out[lo:lo + 512] = np.exp(1j * np.outer(us, x)) @ (wt * res)
    return bs_modified_transform(u, v) + out, v


def _atm_variance(x, o):
    """Total variance of the Black-Scholes slice with the same ``O(0)``."""
    c = o + np.maximum(np.expm1(-x), 0.0)
    if x[0] > 0 or x[-1] < 0:
        raise DataError("price grid must bracket the money (x = 0)")
    o0 = float(CubicSpline(x, c)(0.0))
    if o0 <= 0:
        return 0.0
    if o0 >= 1:
        raise DataError("at-the-money time value reaches the spot")
    return float((2.0 * ndtri(0.5 * (1.0 + o0))) ** 2)


def _unwrap_from_zero(E, k0):
    """Continuous log along ``|u|`` increasing from ``u = 0``."""
    logs = np.log(E)
    out = np.empty_like(logs)
    right = logs[k0:]
    left = logs[k0::-1]
    out[k0:] = right.real + 1j * np.unwrap(right.imag)
    out[k0::-1] = left.real + 1j * np.unwrap(left.imag)
    return out


def _resolved_mask(E, k0, floor):
    """Cells reachable from ``u = 0`` without ``|E|`` dropping below ``floor``."""
    ok = np.abs(E) >= floor
    mask = np.zeros(E.size, dtype=bool)
    for step in (1, -1):
        k = k0
        while 0 <= k < E.size and ok[k]:
            mask[k] = True
            k += step
    return mask


def surface_to_codebook(p, u_max=40.0, du=0.05, cf_floor=1e-4, neg_tol=1e-10, phase_step=0.5 * np.pi):
    """Codebook implied by a call surface.

    Steps: modified prices ``O = (C - (S - K)^+)/K``, forward transform (with
    a fitted Black-Scholes control variate), ``log(1 - (u^2 + iu) F O)`` with
    continuous branch, and ``d/dT`` by central differences (one-sided at the
    ends).  Maturity axis must be uniform; a ``T = time`` row with zero
    cumulant is prepended when missing.  Cells where ``|1 - (u^2+iu) F O|``
    falls below ``cf_floor * max(1, |u^2+iu|)`` cannot be resolved (pricing
    noise is amplified by the same factor) and are returned as NaN;
    ``meta["resolved"]`` holds the mask.
    """
    t = p.time
    Ts = p.maturities
    if Ts.size < 3:
        raise DataError("at least 3 maturities are needed for a maturity derivative")
    if Ts[0] < t - 1e-12:
        raise DataError("maturities precede the surface time")
    S = p.spot
    K = p.strikes
    x = np.log(K / S)
    tv = p.prices - p.intrinsic
    if np.any(tv < -neg_tol * S):
        i, j = np.argwhere(tv < -neg_tol * S)[0]
        raise DataError(f"negative time value {tv[i, j]:.3g} at T={Ts[i]:g}, K={K[j]:g}")
    O = np.maximum(tv, 0.0) / K
    grid_u = GridSpec.uniform(1.0, 1.0, u_max, du).frequencies
    k0 = grid_u.size // 2
    q = grid_u * grid_u + 1j * grid_u

    rows = [np.zeros(grid_u.size, dtype=complex)] if Ts[0] > t + 1e-12 else []
    masks = [np.ones(grid_u.size, dtype=bool)] if rows else []
    axis = np.concatenate(([t], Ts)) if rows else Ts.copy()
    variances = []
    for i, T in enumerate(Ts):
        if T <= t + 1e-12:
            rows.append(np.zeros(grid_u.size, dtype=complex))
            masks.append(np.ones(grid_u.size, dtype=bool))
            variances.append(0.0)
            continue
        F, v = forward_transform(x, O[i], grid_u)
        variances.append(v)
        E = 1.0 - q * F
        E[k0] = 1.0
        # pricing noise enters E multiplied by |u^2 + iu|
        floor = cf_floor * np.maximum(1.0, np.abs(q))
        mask = _resolved_mask(E, k0, floor)
        after = np.abs(E) > np.maximum(1e-3, 10.0 * floor)
        for side in (slice(k0, None), slice(k0, None, -1)):
            m, a = mask[side], after[side]
            first_gap = np.argmin(m) if not m.all() else m.size
            if np.any(a[first_gap:]):
                j = first_gap + int(np.argmax(a[first_gap:]))
                uj = grid_u[side][j]
                raise BranchError(f"characteristic function crosses 0 near T={T:g}, u={uj:g}",
                                  T=T, u=uj)
        L = np.full(grid_u.size, np.nan + 0j)
        Ls = _unwrap_from_zero(np.where(mask, E, 1.0), k0)
        jumps = np.abs(np.diff(np.angle(np.where(mask, E, 1.0))))
        jumps = np.minimum(jumps, 2 * np.pi - jumps)
        jumps[~(mask[1:] & mask[:-1])] = 0.0
        if np.any(jumps > phase_step):
            j = int(np.argmax(jumps > phase_step))
            raise BranchError(f"phase step too large to track near T={T:g}, u={grid_u[j]:g}",
                              T=T, u=grid_u[j])
        L[mask] = Ls[mask]
        rows.append(L)
        masks.append(mask)
    Lmat = np.array(rows)
    Mmat = np.array(masks)
    dT = np.diff(axis)
    if np.max(np.abs(dT - dT[0])) > 1e-9:
        raise DataError("maturities must be uniformly spaced")
    if abs(axis[0] - round(axis[0] / dT[0]) * dT[0]) > 1e-9:
        raise DataError("maturities must sit on a grid through T = 0")
    psi = np.gradient(Lmat, dT[0], axis=0, edge_order=1)
    res = np.zeros_like(Mmat)
    res[1:-1] = Mmat[:-2] & Mmat[2:] & Mmat[1:-1]
    res[0] = Mmat[0] & Mmat[1]
    res[-1] = Mmat[-1] & Mmat[-2]
    psi = np.where(res, psi, np.nan + 0j)
    j0 = int(round(axis[0] / dT[0]))
    n = j0 + axis.size
    full = np.full((n, grid_u.size), np.nan + 0j)
    full[j0:] = psi
    full[:j0] = psi[0]
    fullmask = np.zeros((n, grid_u.size), dtype=bool)
    fullmask[j0:] = res
    grid = GridSpec(np.arange(n) * dT[0], grid_u)
    meta = {"resolved": fullmask, "unresolved": int(np.count_nonzero(~res)),
            "variances": variances, "cf_floor": cf_floor}
    return CodebookSurface(grid, full, t, "maturity", None, meta)
