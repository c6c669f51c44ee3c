"""Command-line front end: ``levy-codebook {price,evolve,check,roundtrip}``.

Exit codes: 0 pass, 1 check failure, 2 usage or configuration error,
3 numerical failure.  Outputs are staged and moved into ``--out`` only when
the command completes, so an error never leaves partial files behind.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .codebook import CodebookSurface, generator_cumulant, pi_necessary_check
from .config import load_config
from .dynamics import SubordinatorPath, evolve_event_driven, evolve_picard, simulate_subordinator
from .errors import ConfigError, LevyCodebookError, NumericalError
from .io import (AtomicOutput, read_price_surface, write_codebook, write_json,
                 write_modified_slices, write_price_surface)
from .levy import subordinator_exponent
from .models import BnsParams
from .pricing import (PriceSurface, codebook_to_modified, price_from_cumulant, price_surface,
                      surface_to_codebook)
from .validation import (CheckItem, CheckReport, check_conditional_expectation, check_martingale,
                         simulate_bns, static_arbitrage_report, tau_monitor)

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
CHECKS = ("pi", "arbitrage", "cf", "martingale", "tau")


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _checks(text):
    names = [c.strip() for c in text.split(",") if c.strip()]
    if names == ["all"]:
        return list(CHECKS)
    bad = [c for c in names if c not in CHECKS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown checks {bad}; choose from {', '.join(CHECKS)}")
    return names


def build_parser():
    ap = argparse.ArgumentParser(prog="levy-codebook", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="model/run configuration JSON")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=_seed, default=0, help="random seed (default 0)")
    sub.add_parser("price", parents=[common], help="call and modified-price surfaces")
    ev = sub.add_parser("evolve", parents=[common], help="pathwise codebook evolution")
    ev.add_argument("--solver", choices=("picard", "event", "both"), default="picard")
    ck = sub.add_parser("check", parents=[common], help="validation suite")
    ck.add_argument("--checks", type=_checks, default=None,
                    help=f"comma-separated subset of {','.join(CHECKS)} (default: all applicable)")
    sub.add_parser("roundtrip", parents=[common], help="codebook -> prices -> codebook")
    return ap


# -- commands ------------------------------------------------------------------------

def _model_path(cfg, blocks, horizon, seed):
    p = blocks.params
    if p is None and cfg.model == "affine":
        p = cfg.bns_params()
    if p is None:
        return SubordinatorPath(horizon)
    return simulate_subordinator(p.eta, horizon, seed)


def cmd_price(cfg, stage, args):
    blocks = cfg.blocks()
    s = blocks.psi0
    kw = {}
    if "du" in cfg.raw.get("pricing", {}):
        kw["du"] = cfg.raw["pricing"]["du"]
    if "alpha" in cfg.raw.get("pricing", {}):
        kw["alpha"] = cfg.raw["pricing"]["alpha"]
    surface, slices = price_surface(s, cfg.spot, cfg.strikes(), cfg.maturities(),
                                    x_step=cfg.get("pricing", "x_step", 0.01), **kw)
    write_price_surface(stage / "prices.csv", surface)
    write_modified_slices(stage / "modified.csv", slices)
    write_codebook(stage / "codebook.csv", s)
    write_json(stage / "manifest.json", {
        "command": "price", "model": cfg.model, "spot": cfg.spot,
        "routes": [o.meta.get("route") for o in slices],
        "clipped": [o.meta.get("clipped", 0.0) for o in slices],
    })
    print(f"priced {surface.prices.size} calls on {surface.maturities.size} maturities")
    return EXIT_OK


def _sup_diff(a, b):
    return max(float(np.max(np.abs(x.values - y.values))) for x, y in zip(a.surfaces, b.surfaces))


def cmd_evolve(cfg, stage, args):
    blocks = cfg.blocks()
    horizon = float(cfg.get("evolve", "horizon", blocks.grid.t_max))
    path = _model_path(cfg, blocks, horizon, args.seed)
    checkpoints = cfg.get("evolve", "checkpoints", None)
    runs = {}
    if args.solver in ("picard", "both"):
        runs["picard"] = evolve_picard(blocks, path, horizon, tol=cfg.get("evolve", "tol", 1e-12),
                                       max_iter=cfg.get("evolve", "max_iter", 50),
                                       dt=cfg.get("evolve", "picard_dt", 0.05),
                                       checkpoints=checkpoints)
    if args.solver in ("event", "both"):
        runs["event"] = evolve_event_driven(blocks, path, horizon,
                                            dt=cfg.get("evolve", "event_dt", 0.01),
                                            checkpoints=checkpoints)
    manifest = {"command": "evolve", "model": cfg.model, "seed": args.seed,
                "solver": args.solver, "runs": {}}
    status = EXIT_OK
    for name, tr in runs.items():
        files = []
        for n, s in enumerate(tr.surfaces):
            fn = f"{name}/checkpoint_{n:04d}.csv"
            (stage / name).mkdir(exist_ok=True)
            write_codebook(stage / fn, s)
            files.append(fn)
        manifest["runs"][name] = dict(tr.manifest(), files=files)
    if len(runs) == 2:
        diff = _sup_diff(runs["picard"], runs["event"])
        tol = cfg.get("evolve", "agreement_tol", 1e-6)
        manifest["agreement"] = {"sup_norm": diff, "tol": tol, "passed": diff < tol}
        print(f"solver agreement: sup-norm {diff:.3e} (tol {tol:g})")
        if not diff < tol:
            status = EXIT_CHECK
    write_json(stage / "manifest.json", manifest)
    print(f"{len(next(iter(runs.values())))} checkpoints, {len(path.times)} jumps")
    return status


def _mc_params(cfg, blocks):
    if blocks.params is not None:
        return blocks.params
    if cfg.model == "affine":
        return cfg.bns_params()
    return BnsParams(1.0, 0.0, subordinator_exponent(), cfg.psiL(), cfg.x0)


def _monte_carlo(cfg, blocks, seed, report, which):
    grid = blocks.grid
    horizon = float(cfg.get("mc", "horizon", min(1.0, grid.t_max)))
    steps = int(cfg.get("mc", "steps", 100))
    k_se = float(cfg.get("mc", "k_se", 3.0))
    params = _mc_params(cfg, blocks)
    paths = simulate_bns(params, int(cfg.get("mc", "paths", 100_000)), steps, horizon, seed,
                         stride=max(1, steps // 4))
    if "cf" in which:
        us = cfg.get("mc", "frequencies", [0.5, 1.0, 2.0])
        report.extend(check_conditional_expectation(paths, blocks.psi0, params.x0, us, horizon,
                                                    k_se))
    if "martingale" in which:
        S = float(np.exp(params.x0))
        Ts = horizon * np.array([0.25, 0.5, 1.0])
        K = S * np.array([0.9, 1.0, 1.1])
        s0 = blocks.psi0
        if s0.generator is not None:
            cp = price_from_cumulant(lambda u, T: generator_cumulant(s0, 0.0, T, u), S, K, Ts,
                                     method="direct")
            prices = PriceSurface(S, K, Ts, cp)
        else:
            prices, _ = price_surface(s0, S, K, Ts)
        report.extend(check_martingale(paths, params.x0, prices, k_se))


def cmd_check(cfg, stage, args):
    report = CheckReport()
    tol = cfg.get("checks", "arbitrage_tol", None)
    if "surface" in cfg.raw:
        which = args.checks or ["arbitrage"]
        if set(which) - {"arbitrage"}:
            raise ConfigError("a surface input supports only the 'arbitrage' check")
        p = read_price_surface(cfg.surface_path(), cfg.raw.get("spot"))
        report.extend(static_arbitrage_report(p, None if tol is None else tol * p.spot))
    else:
        which = args.checks or list(CHECKS)
        blocks = cfg.blocks()
        if "pi" in which:
            rep = pi_necessary_check(blocks.psi0, 0.0, cfg.get("checks", "pi_tol", 1e-9))
            report.items.append(CheckItem("pi necessary conditions", float(len(rep)), 0.0, 0.0,
                                          rep.ok, {"flagged": len(rep), "skipped": rep.skipped}))
        if "arbitrage" in which:
            surface, _ = price_surface(blocks.psi0, cfg.spot, cfg.strikes(), cfg.maturities())
            report.extend(static_arbitrage_report(
                surface, None if tol is None else tol * cfg.spot))
        if "cf" in which or "martingale" in which:
            _monte_carlo(cfg, blocks, args.seed, report, which)
        if "tau" in which:
            horizon = float(cfg.get("evolve", "horizon", blocks.grid.t_max))
            path = _model_path(cfg, blocks, horizon, args.seed)
            tr = evolve_picard(blocks, path, horizon, dt=cfg.get("evolve", "picard_dt", 0.05))
            tau = tau_monitor(tr, tol=cfg.get("checks", "tau_tol", 1e-9))
            report.items.append(CheckItem("tau monitor", 0.0 if tau is None else 1.0, 0.0, 0.0,
                                          tau is None,
                                          {"tau": "none" if tau is None else tau}))
    (stage / "report.json").write_text(report.to_json() + "\n")
    table = report.table()
    (stage / "report.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK if report.passed else EXIT_CHECK


def _roundtrip_error(cfg, grid):
    blocks = cfg.blocks(grid)
    s = blocks.psi0
    x_max = cfg.get("roundtrip", "x_max", None)
    if x_max is None:
        # wide enough for the longest maturity's modified prices to decay
        x_max = float(codebook_to_modified(s, 0.0, grid.t_max).x[-1])
    x_max = float(x_max)
    x_step = float(cfg.get("roundtrip", "x_step", 0.01))
    m = int(round(x_max / x_step))
    strikes = cfg.spot * np.exp(np.arange(-m, m + 1) * x_step)
    surface, _ = price_surface(s, cfg.spot, strikes, grid.maturities[1:], t=0.0, x_step=x_step)
    back = surface_to_codebook(surface, u_max=float(cfg.get("roundtrip", "u_max", grid.u_max)),
                               du=float(cfg.get("roundtrip", "du", grid.du)),
                               cf_floor=float(cfg.get("roundtrip", "cf_floor", 1e-4)))
    if back.grid != grid:
        raise ConfigError("round-trip grid differs from the model grid; "
                                "set roundtrip.u_max/du to the grid values")
    interior = np.zeros(grid.shape, dtype=bool)
    interior[1:-1, 1:-1] = True
    cells = interior & back.meta["resolved"]
    err = np.abs(back.values - s.values)[cells]
    return (float(err.max()) if err.size else 0.0), int(cells.sum()), back, x_max


def cmd_roundtrip(cfg, stage, args):
    grid = cfg.grid()
    tol = float(cfg.get("roundtrip", "tol", 1e-3))
    err, n, back, x_max = _roundtrip_error(cfg, grid)
    result = {"command": "roundtrip", "model": cfg.model, "max_interior_error": err,
              "x_max": x_max,
              "cells": n, "unresolved": back.meta["unresolved"], "tol": tol, "passed": err < tol}
    try:
        coarse = cfg.grid(scale_dt=2.0)
        cerr, cn, _, _ = _roundtrip_error(cfg, coarse)
        result["coarse"] = {"dT": coarse.dT, "max_interior_error": cerr, "cells": cn}
    except LevyCodebookError as e:
        result["coarse"] = {"error": str(e)}
    write_codebook(stage / "recovered.csv", CodebookSurface(back.grid, back.values, back.time))
    write_json(stage / "roundtrip.json", result)
    print(f"max interior error {err:.3e} over {n} cells (tol {tol:g})")
    if "max_interior_error" in result["coarse"]:
        print(f"coarse grid dT={result['coarse']['dT']:g}: "
              f"{result['coarse']['max_interior_error']:.3e}")
    return EXIT_OK if err < tol else EXIT_CHECK


COMMANDS = {"price": cmd_price, "evolve": cmd_evolve, "check": cmd_check,
            "roundtrip": cmd_roundtrip}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        with AtomicOutput(args.out) as stage:
            return COMMANDS[args.command](cfg, stage, args)
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (LevyCodebookError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
