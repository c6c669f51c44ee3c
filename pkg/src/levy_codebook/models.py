"""Worked model families: constant codebooks, deterministic kernels and the BNS model.

In the BNS-type model the variance factor follows ``dZ = -lam Z dt + dM`` with a
pure-jump subordinator ``M`` of exponent ``eta``; the return has leverage
``delta <= 0`` on ``dM`` and an independent PII part ``L``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import CodebookSurface, GridSpec
from .dynamics import (BuildingBlocks, ExpKernel, SubordinatorPath, TableKernel, ZeroKernel,
                       truncate_b)
from .errors import SpecError
from .levy import (CharExponent, JumpSpec, bns_gamma, brownian_exponent, pi_exponent,
                   subordinator_exponent, zero_gamma)

__all__ = [
    "BnsParams",
    "bns_phi",
    "black_scholes_codebook",
    "pii_codebook",
    "pii_blocks",
    "min_compatible_codebook",
    "affine_blocks",
    "bns_blocks",
    "bns_closed_codebook",
    "bns_variance_path",
    "bns_local_exponent",
    "bns_violation_blocks",
    "desk_preset",
]


def bns_phi(u):
    """``-(u^2 + iu)/2``."""
    u = np.asarray(u, dtype=complex)
    return -0.5 * (u * u + 1j * u)


@dataclass(frozen=True)
class BnsParams:
    lam: float
    delta: float
    eta: CharExponent
    psiL: CharExponent
    x0: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise SpecError("lambda must be > 0")
        if self.delta > 0:
            raise SpecError("delta must be <= 0")
        if not self.eta.is_subordinator or self.eta.triplet.diffusion != 0:
            raise SpecError("eta must be a pure-jump subordinator exponent")
        if self.eta.drift_h0 != 0:
            raise SpecError("eta must have zero drift (pure jump)")
        if not self.psiL.pi_member:
            raise SpecError("psiL must be a Pi exponent")

    @classmethod
    def from_sigma(cls, lam, delta, eta_jumps, sigma_L, x0=0.0):
        return cls(lam, delta, subordinator_exponent(eta_jumps), pi_exponent(sigma_L ** 2), x0)

    @property
    def shift(self):
        """``eta(-delta i)``, real and <= 0."""
        return complex(self.eta(np.array(-self.delta * 1j))).real


def desk_preset():
    """``lam = 1``, ``delta = -0.5``, ``eta`` = compound Poisson Exp(2) at rate 1, ``sigma_L = 0.1``."""
    return BnsParams.from_sigma(1.0, -0.5, JumpSpec("compound-poisson-exp", 1.0, 2.0), 0.1)


def black_scholes_codebook(sigma, grid):
    """Constant codebook ``-(u^2 + iu) sigma^2 / 2``."""
    if not sigma > 0:
        raise SpecError("sigma must be > 0")
    psi = pi_exponent(sigma * sigma)
    return pii_codebook(psi, grid)


def pii_codebook(psi, grid):
    """Time-homogeneous codebook ``Psi(T, u) = psi(u)`` for a Pi exponent ``psi``."""
    if not psi.pi_member:
        raise SpecError("codebook exponent must be a Pi member")

    def gen(T, z):
        return psi(z) + 0.0 * np.asarray(T)

    s = CodebookSurface.from_function(grid, gen)
    s.meta["model"] = "pii"
    return s


def pii_blocks(psi, grid, x0=0.0):
    """Vanishing-volatility blocks: the codebook never moves."""
    return BuildingBlocks(x0, pii_codebook(psi, grid), ZeroKernel(), zero_gamma())


def min_compatible_codebook(vol, gamma, grid):
    """``mu(T, u) = gamma(u, -i int_0^T bm(r, u) dr)`` for a Musiela-stationary kernel."""
    if not getattr(vol, "deterministic", False) or not hasattr(vol, "stationary_integral"):
        raise SpecError("minimal codebook needs a deterministic Musiela-stationary kernel")
    integ = vol.stationary_integral(grid)
    u = grid.frequencies[None, :].astype(complex)
    vals = gamma(u, -1j * integ)
    return CodebookSurface(grid, vals, 0.0)


def _bns_arg(p, z, horizon):
    """``delta z - i phi(z) (1 - e^{-lam h}) / lam``."""
    w = -np.expm1(-p.lam * np.asarray(horizon, dtype=float)) / p.lam
    return p.delta * z - 1j * bns_phi(z) * w


def _mu(p, z, horizon):
    z = np.asarray(z, dtype=complex)
    return p.eta(_bns_arg(p, z, horizon)) - 1j * z * p.shift


def affine_blocks(psiL, phi, lam, eta, delta, grid, x0=0.0):
    """Deterministic exponential kernel ``phi e^{-lam (T - t)}`` with ``gamma = bns_gamma``.

    ``psi0 = psiL + minimal codebook``.
    """
    gamma = bns_gamma(eta, delta)
    vol = ExpKernel(phi, lam)
    mu = min_compatible_codebook(vol, gamma, grid)
    base = psiL(grid.frequencies.astype(complex))
    psi0 = CodebookSurface(grid, mu.values + base[None, :], 0.0)
    psi0.meta["model"] = "affine"
    return BuildingBlocks(x0, psi0, vol, gamma)


def bns_blocks(p, grid):
    """Building blocks of the BNS model with the closed-form initial codebook as generator."""

    def gen(T, z):
        z = np.asarray(z, dtype=complex)
        return p.psiL(z) + _mu(p, z, T)

    psi0 = CodebookSurface.from_function(grid, gen)
    psi0.meta["model"] = "bns"
    vol = ExpKernel(bns_phi, p.lam)
    return BuildingBlocks(p.x0, psi0, vol, bns_gamma(p.eta, p.delta), params=p)


def bns_variance_path(p, path, t):
    """``Z_t = sum_{s <= t} dM_s e^{-lam (t - s)}`` (Z_0 = 0, path drift included)."""
    t = np.asarray(t, dtype=float)
    tt = np.atleast_1d(t)
    out = np.zeros(tt.shape)
    for i, ti in enumerate(tt):
        m = path.times <= ti + 1e-12
        out[i] = np.sum(path.sizes[m] * np.exp(-p.lam * (ti - path.times[m])))
        if path.drift_rate:
            out[i] += path.drift_rate * (-np.expm1(-p.lam * ti)) / p.lam
    return out.reshape(t.shape)


def bns_closed_codebook(blocks, t, z_t, path=None):
    """Exact BNS codebook at time ``t`` given ``Z_t``.

    ``Psi_t(T) = psi0(T) + mu(T - t) - mu(T) + phi e^{-lam (T - t)} Z_t`` for
    ``T >= t``.  Rows ``T < t`` stopped evolving at ``T`` and need ``Z_T``
    from ``path``; without a path they are filled with the ``T = t`` row.
    """
    p = blocks.params
    if p is None:
        raise SpecError("blocks were not built by bns_blocks")
    if z_t < 0:
        raise SpecError("Z_t must be >= 0")
    grid = blocks.grid
    T = grid.maturities
    u = grid.frequencies.astype(complex)
    stop = np.minimum(T, t)
    if path is not None:
        z = bns_variance_path(p, path, stop)
        z[T >= t - 1e-12] = z_t
    else:
        z = np.full(T.shape, float(z_t))
    vals = (blocks.psi0.values + _mu(p, u[None, :], (T - stop)[:, None])
            - _mu(p, u[None, :], T[:, None])
            + bns_phi(u)[None, :] * np.exp(-p.lam * (T - stop))[:, None] * z[:, None])
    if path is None:
        j = np.searchsorted(T, t - 1e-12)
        if 0 < j < T.size:
            vals[:j] = vals[j]

    def gen(Tq, zq):
        zq = np.asarray(zq, dtype=complex)
        Tq = max(float(Tq), t)
        return (p.psiL(zq) + _mu(p, zq, Tq - t)
                + bns_phi(zq) * np.exp(-p.lam * (Tq - t)) * z_t)

    return CodebookSurface(grid, vals, float(t), "maturity", gen, {"model": "bns", "Z": float(z_t)})


def bns_local_exponent(p, u, z_left):
    """``psiL(u) + phi(u) Z_{t-} + eta(delta u) - iu eta(-delta i)``."""
    u = np.asarray(u, dtype=complex)
    return p.psiL(u) + bns_phi(u) * z_left + p.eta(p.delta * u) - 1j * u * p.shift


def bns_violation_blocks(p, grid, kappa=0.8):
    """BNS blocks whose initial codebook carries the real bump ``-kappa Re(mu(T) - mu(0))``.

    ``psi0`` still passes the necessary checks at ``t = 0`` for ``kappa < 1``,
    but frozen rows lose the ``mu`` term while keeping the bump, so the
    shifted field leaves Pi once time passes the first maturities.
    """
    blocks = bns_blocks(p, grid)
    u = grid.frequencies.astype(complex)
    mu = _mu(p, u[None, :], grid.maturities[:, None])
    # zero at T = 0 so the diagonal starts at the local exponent
    bump = -kappa * (mu.real - mu.real[:1])
    psi0 = CodebookSurface(grid, blocks.psi0.values + bump, 0.0)
    psi0.meta["model"] = "bns-violation"
    return BuildingBlocks(p.x0, psi0, blocks.vol, blocks.gamma, params=p)
