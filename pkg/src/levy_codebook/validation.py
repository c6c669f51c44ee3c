"""Monte Carlo risk-neutrality checks, static-arbitrage audit and the tau monitor."""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .codebook import CodebookSurface, integrate_maturity, pi_necessary_check
from .errors import OutOfRangeError, SpecError
from .models import BnsParams
from .pricing import PriceSurface

__all__ = [
    "McPaths",
    "CheckItem",
    "CheckReport",
    "RunningStats",
    "simulate_bns",
    "check_conditional_expectation",
    "check_martingale",
    "static_arbitrage_report",
    "plant_convexity_violation",
    "tau_monitor",
    "worker_count",
]

BATCH = 8192
ROUNDING = 1e-12


def worker_count():
    """Worker cap from ``LEVY_CODEBOOK_THREADS`` (default 1)."""
    raw = os.environ.get("LEVY_CODEBOOK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise SpecError(f"LEVY_CODEBOOK_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


@dataclass
class McPaths:
    """Simulated ``(X, Z, M)`` on ``times`` (every ``stride``-th step)."""

    times: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    M: np.ndarray
    seed: int
    steps: int
    x0: float = 0.0

    @property
    def n_paths(self):
        return self.X.shape[0]

    def index(self, T):
        k = int(np.argmin(np.abs(self.times - T)))
        if abs(self.times[k] - T) > 1e-9:
            raise OutOfRangeError(f"T={T:g} is not a recorded time")
        return k


@dataclass
class CheckItem:
    name: str
    statistic: float
    se: float
    threshold: float
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class CheckReport:
    items: list = field(default_factory=list)

    @property
    def passed(self):
        return all(i.passed for i in self.items)

    @property
    def failures(self):
        return [i for i in self.items if not i.passed]

    def extend(self, other):
        self.items.extend(other.items)
        return self

    def to_dict(self):
        return {"passed": self.passed, "checks": [asdict(i) for i in self.items]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, default=_jsonable)

    def table(self):
        rows = [f"{'check':<40} {'statistic':>12} {'se':>10} {'threshold':>10}  result"]
        for i in self.items:
            rows.append(f"{i.name:<40} {i.statistic:>12.4g} {i.se:>10.3g} {i.threshold:>10.3g}  "
                        f"{'pass' if i.passed else 'FAIL'}")
        rows.append(f"verdict: {'pass' if self.passed else 'FAIL'}")
        return "\n".join(rows)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


class RunningStats:
    """Mean and variance with the pairwise merge of Chan et al."""

    def __init__(self, shape=()):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    @classmethod
    def of(cls, samples):
        s = cls(samples.shape[1:])
        s.n = samples.shape[0]
        s.mean = samples.mean(axis=0)
        s.m2 = ((samples - s.mean) ** 2).sum(axis=0)
        return s

    def merge(self, other):
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
            return self
        n = self.n + other.n
        d = other.mean - self.mean
        self.mean = self.mean + d * other.n / n
        self.m2 = self.m2 + other.m2 + d * d * self.n * other.n / n
        self.n = n
        return self

    @property
    def se(self):
        if self.n < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


def _batched_stats(samples):
    acc = RunningStats(samples.shape[1:])
    for lo in range(0, samples.shape[0], BATCH):
        acc.merge(RunningStats.of(samples[lo:lo + BATCH]))
    return acc


def _streams(seed, batch):
    ss = np.random.SeedSequence(seed, spawn_key=(batch,))
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(3)]


def _cp_sizes(rng, spec, n):
    if spec.kind == "compound-poisson-exp":
        return rng.exponential(1.0 / spec.theta, n)
    if spec.kind == "compound-poisson-discrete":
        return spec._sizes[rng.choice(len(spec.atoms), size=n, p=spec._probs)]
    raise SpecError(f"{spec.kind} jumps are infinite activity; only compound Poisson is simulated here")


def _jumps_on_grid(rng, specs, n, T, steps):
    """Per-path jump events as flat arrays ``(path, step, time, size)``."""
    ps, ts, xs = [], [], []
    for spec in specs:
        if spec.kind == "none" or spec.rate == 0:
            continue
        counts = rng.poisson(spec.rate * T, n)
        tot = int(counts.sum())
        ps.append(np.repeat(np.arange(n), counts))
        ts.append(T * (1.0 - rng.random(tot)))
        xs.append(_cp_sizes(rng, spec, tot))
    if not ps:
        e = np.empty(0)
        return e.astype(int), e.astype(int), e, e
    p = np.concatenate(ps)
    t = np.concatenate(ts)
    x = np.concatenate(xs)
    dt = T / steps
    k = np.minimum((np.ceil(t / dt - 1e-12) - 1).astype(int), steps - 1)
    k = np.maximum(k, 0)
    return p, k, t, x


def _simulate_batch(p, n, steps, T, seed, batch, stride, mjumps=None):
    rw, rl, rm = _streams(seed, batch)
    dt = T / steps
    grid_t = np.arange(steps + 1) * dt
    lam = p.lam
    # M jumps and their decayed contributions per step
    if mjumps is None:
        mp, mk, mt, mx = _jumps_on_grid(rm, p.eta.triplet.jumps, n, T, steps)
    else:
        mp, mk, mt, mx = mjumps
    dM = np.zeros((n, steps))
    np.add.at(dM, (mp, mk), mx)
    tail = grid_t[mk + 1] - mt
    zin = np.zeros((n, steps))
    np.add.at(zin, (mp, mk), mx * np.exp(-lam * tail))
    zint = np.zeros((n, steps))
    np.add.at(zint, (mp, mk), mx * (-np.expm1(-lam * tail)) / lam)
    # L increments: diffusion, drift relative to no truncation, compound Poisson jumps
    trip = p.psiL.triplet
    drift_L = trip.drift - sum(j.truncated_mean() for j in trip.jumps)
    lp, lk, _, lx = _jumps_on_grid(rl, trip.jumps, n, T, steps)
    dL_jumps = np.zeros((n, steps))
    np.add.at(dL_jumps, (lp, lk), lx)
    sqc = np.sqrt(trip.diffusion * dt)

    decay = np.exp(-lam * dt)
    frac = -np.expm1(-lam * dt) / lam
    shift = p.shift
    rec = list(range(0, steps + 1, stride))
    if rec[-1] != steps:
        rec.append(steps)
    X = np.full(n, p.x0, dtype=float)
    Z = np.zeros(n)
    M = np.zeros(n)
    out_x = np.empty((n, len(rec)))
    out_z = np.empty((n, len(rec)))
    out_m = np.empty((n, len(rec)))
    out_x[:, 0], out_z[:, 0], out_m[:, 0] = X, Z, M
    j = 1
    for k in range(steps):
        zbar_int = Z * frac + zint[:, k]
        gw = rw.standard_normal((2, n)) if sqc > 0 else rw.standard_normal((1, n))
        dl = drift_L * dt + dL_jumps[:, k]
        if sqc > 0:
            dl = dl + sqc * gw[1]
        X = X + dl - 0.5 * zbar_int - shift * dt + np.sqrt(zbar_int) * gw[0] + p.delta * dM[:, k]
        Z = Z * decay + zin[:, k]
        M = M + dM[:, k]
        if j < len(rec) and rec[j] == k + 1:
            out_x[:, j], out_z[:, j], out_m[:, j] = X, Z, M
            j += 1
    return grid_t[rec], out_x, out_z, out_m


def simulate_bns(params, n_paths, steps, T, seed, stride=None, m_path=None):
    """Paths of ``(X, Z, M)`` under the BNS dynamics.

    ``Z`` decays exactly between exactly placed jumps.  Over a step the
    Gaussian part of ``X`` has variance ``int Z ds``, computed exactly, so
    the scheme is exact in law at the step times.  Paths are simulated in
    batches of ``BATCH`` with counter-based streams keyed by
    ``(seed, batch)``; results do not depend on the worker count.
    """
    if isinstance(params, CodebookSurface) or not isinstance(params, BnsParams):
        params = getattr(params, "params", params)
    if not isinstance(params, BnsParams):
        raise SpecError("simulate_bns needs BnsParams or BNS building blocks")
    if n_paths < 1 or steps < 1 or not T > 0:
        raise SpecError("need n_paths >= 1, steps >= 1 and T > 0")
    if stride is None:
        stride = max(1, steps // 20)
    sizes = [min(BATCH, n_paths - lo) for lo in range(0, n_paths, BATCH)]

    def fixed(n):
        if m_path is None:
            return None
        m = m_path.times <= T
        nj = int(np.count_nonzero(m))
        t = np.tile(m_path.times[m], n)
        k = np.clip(np.ceil(t / (T / steps) - 1e-12).astype(int) - 1, 0, steps - 1)
        return np.repeat(np.arange(n), nj), k, t, np.tile(m_path.sizes[m], n)

    def run(b):
        return _simulate_batch(params, sizes[b], steps, T, seed, b, stride, fixed(sizes[b]))

    workers = min(worker_count(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    times = parts[0][0]
    return McPaths(times, np.concatenate([q[1] for q in parts]),
                   np.concatenate([q[2] for q in parts]),
                   np.concatenate([q[3] for q in parts]), seed, steps, params.x0)


def _item(name, diff, se, k_se=3.0, detail=None, scale=1.0):
    """``|diff| <= k_se * se`` plus a rounding floor of ``1e-12 * scale``."""
    diff = float(abs(diff))
    se = float(se)
    thr = k_se * se + ROUNDING * max(1.0, abs(scale))
    return CheckItem(name, diff, se, thr, bool(diff <= thr), detail or {})


def check_conditional_expectation(paths, s, x0, u_list, T, k_se=3.0):
    """Sample mean of ``e^{iu(X_T - x0)}`` against ``exp(int_0^T Psi_0(r, u) dr)``.

    Real and imaginary parts are tested separately at ``k_se`` standard errors.
    """
    if T > s.grid.t_max + 1e-12:
        raise OutOfRangeError("T beyond the codebook maturities")
    k = paths.index(T)
    y = paths.X[:, k] - x0
    rep = CheckReport()
    for u in u_list:
        target = np.exp(integrate_maturity(s, 0.0, T, u))
        ph = u * y
        samples = np.stack([np.cos(ph), np.sin(ph)], axis=1)
        st = _batched_stats(samples)
        for part, idx, tv in (("re", 0, target.real), ("im", 1, target.imag)):
            rep.items.append(_item(f"cf u={u:g} T={T:g} {part}", st.mean[idx] - tv, st.se[idx],
                                   k_se, {"mean": float(st.mean[idx]), "target": float(tv)}))
    return rep


def check_martingale(paths, x0, prices=None, k_se=3.0):
    """``E e^{X_T} = e^{x0}`` at every recorded time; calls against payoff means.

    ``prices`` is a :class:`PriceSurface` with spot ``e^{x0}`` whose maturities
    are recorded path times.
    """
    rep = CheckReport()
    S0 = np.exp(x0)
    for k, T in enumerate(paths.times):
        if T == 0:
            continue
        st = _batched_stats(np.exp(paths.X[:, k])[:, None])
        rep.items.append(_item(f"martingale e^X T={T:g}", st.mean[0] - S0, st.se[0], k_se,
                               {"mean": float(st.mean[0]), "target": S0}, S0))
    if prices is not None:
        for i, T in enumerate(prices.maturities):
            k = paths.index(T)
            ST = np.exp(paths.X[:, k])
            pay = np.maximum(ST[:, None] - prices.strikes[None, :], 0.0)
            st = _batched_stats(pay)
            for j, K in enumerate(prices.strikes):
                rep.items.append(_item(f"call T={T:g} K={K:.4g}", st.mean[j] - prices.prices[i, j],
                                       st.se[j], k_se,
                                       {"mean": float(st.mean[j]), "price": float(prices.prices[i, j])},
                                       prices.spot))
    return rep


def static_arbitrage_report(p, tol=None):
    """Strike monotonicity, convexity, price bounds and calendar order.

    Each violation is one failed item; ``tol`` defaults to ``1e-8 * spot``.
    """
    if tol is None:
        tol = 1e-8 * p.spot
    S, K, C = p.spot, p.strikes, p.prices
    rep = CheckReport()
    n_checks = 0
    for i, T in enumerate(p.maturities):
        c = C[i]
        d = np.diff(c)
        for j in np.nonzero(d > tol)[0]:
            rep.items.append(CheckItem(f"monotone T={T:g} K={K[j + 1]:.4g}", float(d[j]), 0.0, tol,
                                       False, {"T": float(T), "K": float(K[j + 1])}))
        h1 = K[1:-1] - K[:-2]
        h2 = K[2:] - K[1:-1]
        bfly = (h2 * c[:-2] + h1 * c[2:]) / (h1 + h2) - c[1:-1]
        for j in np.nonzero(bfly < -tol)[0]:
            rep.items.append(CheckItem(f"convex T={T:g} K={K[j + 1]:.4g}", float(-bfly[j]), 0.0, tol,
                                       False, {"T": float(T), "K": float(K[j + 1])}))
        lo = np.maximum(S - K, 0.0) - c
        hi = c - S
        for j in np.nonzero((lo > tol) | (hi > tol))[0]:
            rep.items.append(CheckItem(f"bounds T={T:g} K={K[j]:.4g}", float(max(lo[j], hi[j])), 0.0,
                                       tol, False, {"T": float(T), "K": float(K[j])}))
        n_checks += 3
    for i in range(1, p.maturities.size):
        d = C[i - 1] - C[i]
        for j in np.nonzero(d > tol)[0]:
            rep.items.append(CheckItem(f"calendar T={p.maturities[i]:g} K={K[j]:.4g}", float(d[j]), 0.0,
                                       tol, False, {"T": float(p.maturities[i]), "K": float(K[j])}))
    if not rep.items:
        rep.items.append(CheckItem("static arbitrage", 0.0, 0.0, tol, True,
                                   {"maturities": int(p.maturities.size), "strikes": int(K.size)}))
    return rep


def plant_convexity_violation(p, maturity_index=None, strike_index=None, bump=None):
    """Copy of ``p`` with one interior price raised to break convexity there.

    Defaults pick the middle maturity and strike and a bump of twice the local
    butterfly spread.  The bump must stay below the neighbouring strike and
    calendar spreads, otherwise more than one check fires.
    """
    i = p.maturities.size // 2 if maturity_index is None else maturity_index
    j = p.strikes.size // 2 if strike_index is None else strike_index
    if not 0 < j < p.strikes.size - 1:
        raise SpecError("the bumped strike must be interior")
    K, c = p.strikes, p.prices[i]
    h1, h2 = K[j] - K[j - 1], K[j + 1] - K[j]
    if bump is None:
        bump = 2.0 * ((h2 * c[j - 1] + h1 * c[j + 1]) / (h1 + h2) - c[j]) + 1e-6 * p.spot
    prices = p.prices.copy()
    prices[i, j] += bump
    return PriceSurface(p.spot, p.strikes, p.maturities, prices, p.time)


def tau_monitor(trajectory, gamma=None, tol=1e-9):
    """First checkpoint at which the shifted field leaves the necessary Pi set.

    The field is ``Psi_t(T, u) - gamma(u, 0) 1{T <= t}``; every interval
    ``[a, b]`` of the maturity grid from ``0`` is checked.  Returns ``None``
    if all checkpoints pass.
    """
    if gamma is None:
        gamma = trajectory.blocks.gamma
    for t, s in zip(trajectory.times, trajectory.surfaces):
        g0 = np.asarray(gamma(s.grid.frequencies.astype(complex), 0.0), dtype=complex)
        frozen = s.maturity_axis() <= t + 1e-12
        shifted = s.values - np.where(frozen[:, None], g0[None, :], 0.0)
        eta = CodebookSurface(s.grid, shifted, 0.0)
        if not pi_necessary_check(eta, 0.0, tol).ok:
            return float(t)
    return None
