"""Parametric Levy-Khintchine triplets and characteristic exponents.

Exponents are evaluated in closed form for a small set of jump families:

* ``none``: no jumps,
* ``compound-poisson-exp``: exponential jumps with intensity ``rate`` and
  inverse scale ``theta``,
* ``compound-poisson-discrete``: finitely many jump sizes ``atoms`` with
  probabilities, arriving at intensity ``rate``,
* ``gamma``: the gamma subordinator, Levy measure
  ``shape * exp(-rate * x) / x dx`` on ``x > 0``.

Two drift conventions coexist.  Generic triplets store their drift relative
to the truncation ``h(x) = x 1{|x| <= 1}``; exponents in the martingale class
Pi are evaluated with the compensator ``e^x - 1`` instead, which makes
``psi(-i) = 0`` hold exactly rather than up to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SpecError, StripDomainError

__all__ = [
    "JumpSpec",
    "LevyTriplet",
    "CharExponent",
    "JointExponent",
    "levy_exponent",
    "pi_exponent",
    "subordinator_exponent",
    "brownian_exponent",
    "compose",
    "eval_exponent",
    "martingale_defect",
    "bns_gamma",
    "zero_gamma",
    "brownian_gamma",
]

JUMP_KINDS = ("none", "compound-poisson-exp", "compound-poisson-discrete", "gamma")


@dataclass(frozen=True)
class JumpSpec:
    """Parametric Levy measure.

    ``rate`` is the jump intensity for the compound Poisson kinds and the
    inverse scale for ``gamma``.
    """

    kind: str = "none"
    rate: float = 0.0
    theta: float | None = None
    atoms: tuple[tuple[float, float], ...] = ()
    shape: float | None = None

    def __post_init__(self):
        if self.kind not in JUMP_KINDS:
            raise SpecError(f"unknown jump kind {self.kind!r}; expected one of {JUMP_KINDS}")
        object.__setattr__(self, "atoms", tuple((float(x), float(p)) for x, p in self.atoms))
        if self.kind == "compound-poisson-exp":
            if self.rate < 0:
                raise SpecError("compound-poisson-exp: rate must be >= 0")
            if self.theta is None or not self.theta > 0:
                raise SpecError("compound-poisson-exp: theta must be > 0")
        elif self.kind == "compound-poisson-discrete":
            if self.rate < 0:
                raise SpecError("compound-poisson-discrete: rate must be >= 0")
            if not self.atoms:
                raise SpecError("compound-poisson-discrete: atoms must be non-empty")
            sizes = np.array([x for x, _ in self.atoms])
            probs = np.array([p for _, p in self.atoms])
            if np.any(sizes == 0) or not np.all(np.isfinite(sizes)):
                raise SpecError("compound-poisson-discrete: atom sizes must be finite and nonzero")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise SpecError("compound-poisson-discrete: probabilities must be >= 0 and sum to 1")
        elif self.kind == "gamma":
            if self.shape is None or not self.shape > 0:
                raise SpecError("gamma: shape must be > 0")
            if not self.rate > 0:
                raise SpecError("gamma: rate must be > 0")

    # -- closed forms -----------------------------------------------------

    @property
    def _sizes(self):
        return np.array([x for x, _ in self.atoms])

    @property
    def _probs(self):
        return np.array([p for _, p in self.atoms])

    def jump_integral(self, z):
        """``int (e^{izx} - 1) K(dx)``."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "none" or (self.kind != "gamma" and self.rate == 0):
            return np.zeros_like(z)
        if self.kind == "compound-poisson-exp":
            return self.rate * 1j * z / (self.theta - 1j * z)
        if self.kind == "compound-poisson-discrete":
            e = np.exp(1j * z[..., None] * self._sizes) - 1.0
            return self.rate * (e @ self._probs)
        return -self.shape * np.log(1.0 - 1j * z / self.rate)

    def jump_integral_deriv(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind == "none" or (self.kind != "gamma" and self.rate == 0):
            return np.zeros_like(z)
        if self.kind == "compound-poisson-exp":
            return self.rate * 1j * self.theta / (self.theta - 1j * z) ** 2
        if self.kind == "compound-poisson-discrete":
            x = self._sizes
            e = 1j * x * np.exp(1j * z[..., None] * x)
            return self.rate * (e @ self._probs)
        return 1j * self.shape / (self.rate - 1j * z)

    def truncated_mean(self):
        """``int h(x) K(dx)`` with ``h(x) = x 1{|x| <= 1}``."""
        if self.kind == "none":
            return 0.0
        if self.kind == "compound-poisson-exp":
            th = self.theta
            return self.rate * (1.0 - np.exp(-th) * (1.0 + th)) / th
        if self.kind == "compound-poisson-discrete":
            x = self._sizes
            return float(self.rate * np.sum(self._probs * x * (np.abs(x) <= 1.0)))
        return self.shape * (1.0 - np.exp(-self.rate)) / self.rate

    def mean(self):
        """``int x K(dx)`` (finite for every supported family)."""
        if self.kind == "none":
            return 0.0
        if self.kind == "compound-poisson-exp":
            return self.rate / self.theta
        if self.kind == "compound-poisson-discrete":
            return float(self.rate * np.sum(self._probs * self._sizes))
        return self.shape / self.rate

    def im_bounds(self):
        """Open interval of admissible ``Im z``."""
        if self.kind == "compound-poisson-exp" and self.rate > 0:
            return (-self.theta, np.inf)
        if self.kind == "gamma":
            return (-self.rate, np.inf)
        return (-np.inf, np.inf)

    @property
    def positive(self):
        """True if the measure lives on ``(0, inf)`` (subordinator jumps)."""
        if self.kind == "compound-poisson-discrete":
            return bool(np.all(self._sizes > 0))
        return True

    @property
    def finite_activity(self):
        return self.kind != "gamma"

    @property
    def exp_integrable(self):
        """Whether ``int_{x>1} e^x K(dx) < inf``."""
        if self.kind == "compound-poisson-exp":
            return self.rate == 0 or self.theta > 1.0
        if self.kind == "gamma":
            return self.rate > 1.0
        return True

    # -- serialisation ----------------------------------------------------

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "compound-poisson-exp":
            d.update(rate=self.rate, theta=self.theta)
        elif self.kind == "compound-poisson-discrete":
            d.update(rate=self.rate, atoms=[list(a) for a in self.atoms])
        elif self.kind == "gamma":
            d.update(shape=self.shape, rate=self.rate)
        return d

    @classmethod
    def from_dict(cls, d):
        allowed = {"kind", "rate", "theta", "atoms", "shape"}
        extra = set(d) - allowed
        if extra:
            raise SpecError(f"unknown JumpSpec fields: {sorted(extra)}")
        atoms = tuple(tuple(a) for a in d.get("atoms", ()))
        return cls(kind=d.get("kind", "none"), rate=float(d.get("rate", 0.0)),
                   theta=d.get("theta"), atoms=atoms, shape=d.get("shape"))


def _as_jump_tuple(jumps):
    if jumps is None:
        return ()
    if isinstance(jumps, JumpSpec):
        jumps = (jumps,)
    return tuple(j for j in jumps if j.kind != "none")


@dataclass(frozen=True)
class LevyTriplet:
    """``(b, c, K)`` with ``b`` relative to ``h(x) = x 1{|x| <= 1}``.

    ``jumps`` is a tuple of independent :class:`JumpSpec` components whose
    measures add up to ``K``.
    """

    drift: float = 0.0
    diffusion: float = 0.0
    jumps: tuple[JumpSpec, ...] = ()

    def __post_init__(self):
        if not self.diffusion >= 0:
            raise SpecError("diffusion must be >= 0")
        object.__setattr__(self, "jumps", _as_jump_tuple(self.jumps))

    def to_dict(self):
        jumps = [j.to_dict() for j in self.jumps]
        return {"drift": self.drift, "diffusion": self.diffusion,
                "jumps": jumps[0] if len(jumps) == 1 else (jumps or {"kind": "none"})}

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - {"drift", "diffusion", "jumps"}
        if extra:
            raise SpecError(f"unknown LevyTriplet fields: {sorted(extra)}")
        jumps = d.get("jumps", {"kind": "none"})
        if isinstance(jumps, dict):
            jumps = [jumps]
        return cls(float(d.get("drift", 0.0)), float(d.get("diffusion", 0.0)),
                   tuple(JumpSpec.from_dict(j) for j in jumps))


@dataclass(frozen=True)
class CharExponent:
    """Closed-form Levy exponent ``psi`` of a triplet.

    With ``pi_member`` set, ``psi`` is evaluated in the normalised form
    ``-(z^2 + iz) c / 2 + int (e^{izx} - 1 - iz(e^x - 1)) K(dx)`` and the
    stored triplet drift is the equivalent ``h``-drift (informational).
    """

    triplet: LevyTriplet
    pi_member: bool = False
    real_only: bool = False

    @property
    def domain(self):
        """Open interval ``(lo, hi)`` of admissible ``Im z``; ``None`` if real-only."""
        if self.real_only:
            return None
        lo, hi = -np.inf, np.inf
        for j in self.triplet.jumps:
            a, b = j.im_bounds()
            lo, hi = max(lo, a), min(hi, b)
        return (lo, hi)

    def _check(self, z):
        z = np.asarray(z, dtype=complex)
        im = z.imag
        dom = self.domain
        if dom is None:
            if np.any(im != 0):
                bad = im[im != 0].flat[0]
                raise StripDomainError(f"exponent is real-only; got Im(z)={bad:g}")
            return z
        lo, hi = dom
        bad = (im <= lo) | (im >= hi)
        if np.any(bad):
            raise StripDomainError(
                f"Im(z)={im[bad].flat[0]:g} outside strip ({lo:g}, {hi:g})")
        return z

    def __call__(self, z):
        z = self._check(z)
        t = self.triplet
        if self.pi_member:
            out = -(z * z + 1j * z) * (t.diffusion / 2.0)
            for j in t.jumps:
                out = out + j.jump_integral(z) - 1j * z * j.jump_integral(-1j).real
            return out
        out = 1j * z * t.drift - z * z * (t.diffusion / 2.0)
        for j in t.jumps:
            out = out + j.jump_integral(z) - 1j * z * j.truncated_mean()
        return out

    def derivative(self, z):
        """``d psi / dz``."""
        z = self._check(z)
        t = self.triplet
        if self.pi_member:
            out = -(2.0 * z + 1j) * (t.diffusion / 2.0)
            for j in t.jumps:
                out = out + j.jump_integral_deriv(z) - 1j * j.jump_integral(-1j).real
            return out
        out = 1j * t.drift - z * t.diffusion
        for j in t.jumps:
            out = out + j.jump_integral_deriv(z) - 1j * j.truncated_mean()
        return out

    @property
    def is_subordinator(self):
        t = self.triplet
        return t.diffusion == 0 and all(j.positive for j in t.jumps) and self.drift_h0 >= 0

    @property
    def drift_h0(self):
        """Drift relative to the truncation ``h = 0`` (finite-variation jumps only)."""
        t = self.triplet
        return t.drift - sum(j.truncated_mean() for j in t.jumps)

    def to_dict(self):
        d = self.triplet.to_dict()
        d["pi"] = self.pi_member
        return d


def levy_exponent(drift=0.0, diffusion=0.0, jumps=None):
    """Exponent of the triplet ``(drift, diffusion, jumps)`` in the ``h`` convention."""
    return CharExponent(LevyTriplet(drift, diffusion, _as_jump_tuple(jumps)))


def pi_exponent(c=0.0, jumps=None):
    """Member of Pi with diffusion ``c`` and Levy measure ``jumps``."""
    jumps = _as_jump_tuple(jumps)
    for j in jumps:
        if not j.exp_integrable:
            raise SpecError(f"{j.kind}: int_(x>1) e^x K(dx) is infinite; Pi requires it finite")
    drift = -c / 2.0 - sum(j.jump_integral(-1j).real - j.truncated_mean() for j in jumps)
    return CharExponent(LevyTriplet(drift, c, jumps), pi_member=True)


def subordinator_exponent(jumps=None, drift=0.0):
    """Extended exponent of an increasing Levy process.

    ``drift`` is the deterministic rate relative to ``h = 0``; building blocks
    use pure-jump subordinators with ``drift = 0``.
    """
    jumps = _as_jump_tuple(jumps)
    if drift < 0:
        raise SpecError("subordinator drift must be >= 0")
    for j in jumps:
        if not j.positive:
            raise SpecError("subordinator jumps must be positive")
    h = sum(j.truncated_mean() for j in jumps)
    return CharExponent(LevyTriplet(drift + h, 0.0, jumps))


def brownian_exponent(sigma, drift=None):
    """Brownian motion with volatility ``sigma``; drift defaults to ``-sigma^2/2``."""
    if drift is None:
        drift = -0.5 * sigma * sigma
    return levy_exponent(drift, sigma * sigma)


def compose(a, b):
    """Exponent of the sum of two independent Levy processes."""
    ta, tb = a.triplet, b.triplet
    trip = LevyTriplet(ta.drift + tb.drift, ta.diffusion + tb.diffusion, ta.jumps + tb.jumps)
    return CharExponent(trip, pi_member=a.pi_member and b.pi_member,
                        real_only=a.real_only or b.real_only)


def eval_exponent(exp, z):
    return exp(z)


def martingale_defect(exp):
    """``|psi(-i)|``; zero iff the exponential of the process is a local martingale."""
    dom = exp.domain
    if dom is None or not (dom[0] < -1.0 < dom[1]):
        raise StripDomainError("martingale defect needs -i inside the exponent's strip")
    return float(abs(exp(-1j)))


@dataclass(frozen=True)
class JointExponent:
    """Joint exponent ``gamma(u, v)`` of ``(X_parallel, M)`` with its ``v``-derivative."""

    fn: Callable
    d2: Callable
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, u, v):
        return self.fn(np.asarray(u, dtype=complex), np.asarray(v, dtype=complex))

    def dv(self, u, v):
        return self.d2(np.asarray(u, dtype=complex), np.asarray(v, dtype=complex))

    @property
    def subordinator(self):
        """Exponent ``v -> gamma(0, v)`` of ``M``."""
        return self.params.get("eta")


def bns_gamma(eta, delta):
    """``gamma(u, v) = eta(delta u + v) - i u eta(-delta i)``."""
    if delta > 0:
        raise SpecError("delta must be <= 0")
    if not eta.is_subordinator or eta.triplet.diffusion != 0:
        raise SpecError("eta must be the exponent of a subordinator")
    shift = complex(eta(np.array(-delta * 1j))) if delta != 0 else 0j

    def fn(u, v):
        return eta(delta * u + v) - 1j * u * shift

    def d2(u, v):
        return eta.derivative(delta * u + v) + 0.0 * u

    return JointExponent(fn, d2, "bns", {"eta": eta, "delta": float(delta), "shift": shift})


def zero_gamma():
    def fn(u, v):
        return np.zeros(np.broadcast(u, v).shape, dtype=complex)

    return JointExponent(fn, fn, "zero", {"eta": levy_exponent()})


def brownian_gamma():
    """``gamma(u, v) = -v^2 / 2``: Brownian driver locally independent of ``X``.

    Only meaningful as a drift-condition sanity mode.
    """
    def fn(u, v):
        return -0.5 * v * v + 0.0 * u

    def d2(u, v):
        return -v + 0.0 * u

    return JointExponent(fn, d2, "brownian")
