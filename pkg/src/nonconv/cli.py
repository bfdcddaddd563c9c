"""Command-line entry point: simulate, bounds, verify.

Exit codes: 0 success, 1 a check or bound verdict failed, 2 configuration
problem, 3 memory budget exceeded.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from nonconv.bounds import (
    berry_esseen_bound,
    chernoff_tail_bound,
    concentration_bound,
    mdp_rate,
    moddev_envelope,
    momthm_bound,
    variance_envelope,
)
from nonconv.config import build_experiment, load_config
from nonconv.errors import BudgetError, CheckFailure, ConfigError, OutOfWindowError
from nonconv.martingale import build_decomposition
from nonconv.montecarlo import (
    cumulant_scan,
    kolmogorov_distance,
    mdp_diagnostic,
    sums_over_grid,
    tail_estimate,
    variance_scan,
)
from nonconv.reports import RunManifest, config_hash, fmt, write_csv, write_manifest


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("nonconv")
    except Exception:
        return "0.0.0"


def _parse_grid(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad n grid {text!r}: comma-separated integers expected") from exc


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _threshold_grid(extras: dict, centered: np.ndarray) -> np.ndarray:
    sec = extras.get("tails", {})
    if "thresholds" in sec:
        return np.asarray(sec["thresholds"], dtype=float)
    sigma = float(np.std(centered, ddof=1))
    return np.linspace(0.5, 5.0, 10) * sigma


def _stat_tails(exp, sums, out, manifest):
    rows = []
    for n in exp.config.n_grid:
        s = sums[n].centered
        for t in _threshold_grid(exp.extras, s):
            te = tail_estimate(s, float(t))
            rows.append((n, te.threshold, te.p_hat, te.lower, te.upper, te.count))
    _emit(out, "tails.csv", ("n_terms", "threshold", "p_hat", "lower", "upper", "count"), rows, manifest)


def _stat_variance(exp, sums, out, manifest):
    fit = variance_scan(exp.config, sums)
    rows = [
        (n, fit.variances[i], fit.std_errors[i], fit.residuals[i])
        for i, n in enumerate(fit.n_grid)
    ]
    _emit(out, "variance.csv", ("n_terms", "variance", "std_error", "residual"), rows, manifest)
    manifest.notes["d_squared"] = fit.d_squared
    manifest.notes["d_squared_se"] = fit.d_squared_se
    manifest.notes["c1_conservative"] = fit.c1_conservative


def _stat_cumulants(exp, sums, out, manifest):
    scan = cumulant_scan(exp.config, k_max=4, sums_by_n=sums)
    rows = [
        (r.n_terms, r.order, r.estimate, r.std_error, r.normalized, r.normalized_se)
        for r in scan.rows
    ]
    _emit(
        out,
        "cumulants.csv",
        ("n_terms", "order", "estimate", "std_error", "normalized", "normalized_se"),
        rows,
        manifest,
    )


def _stat_kolmogorov(exp, sums, out, manifest):
    rows = []
    for n in exp.config.n_grid:
        s = sums[n].centered
        scale = float(np.std(s, ddof=1))
        rows.append((n, kolmogorov_distance(s, 0.0, scale), scale))
    _emit(out, "kolmogorov.csv", ("n_terms", "distance", "scale"), rows, manifest)


def _stat_mdp(exp, sums, out, manifest):
    sec = exp.extras.get("mdp", {})
    expo = float(sec.get("exponent", 0.1))
    x_grid = [float(x) for x in sec.get("x_grid", [1.0])]
    d_const = float(sec.get("d_const", 1.0))
    table = mdp_diagnostic(
        exp.config, lambda n: float(n) ** expo, x_grid, d_const, sums_by_n=sums,
        min_count=int(sec.get("min_count", 20)),
    )
    rows = [
        (c.n_terms, c.x, c.a_n, c.p_hat, c.count, c.value, c.value_lo, c.value_hi, c.rate, c.status)
        for c in table.cells
    ]
    _emit(
        out,
        "mdp.csv",
        ("n_terms", "x", "a_n", "p_hat", "count", "value", "value_lo", "value_hi", "rate", "status"),
        rows,
        manifest,
    )


_STATS = {
    "tails": _stat_tails,
    "variance": _stat_variance,
    "cumulants": _stat_cumulants,
    "kolmogorov": _stat_kolmogorov,
    "mdp": _stat_mdp,
}


def _decomp_for(exp, n):
    sec = exp.extras.get("martingale", {})
    return build_decomposition(
        exp.model,
        exp.centered,
        exp.family,
        n,
        smoothing_radius=int(sec.get("smoothing_radius", 0)),
        b_factor=float(sec.get("b", 1.0)),
    )


def _check_chernoff(exp, sums, manifest):
    refuted = 0
    sec = exp.extras.get("martingale", {})
    b = float(sec.get("b", 1.0))
    for n in exp.config.n_grid:
        d = _decomp_for(exp, n)
        s = sums[n].centered
        for t in _threshold_grid(exp.extras, s):
            bound = chernoff_tail_bound(
                float(t), n, d.arity, d.delta1_plain, d.delta2_plain, b
            )
            if tail_estimate(s, float(t) + b * d.delta2_plain).lower > bound:
                refuted += 1
    manifest.record("chernoff", "fail" if refuted else "pass")
    manifest.notes["chernoff_refuted_points"] = refuted


def _check_concentration(exp, sums, manifest):
    sec = exp.extras.get("bounds", {})
    c1 = float(sec.get("c1", 1.0))
    c2 = float(sec.get("c2", 1.0))
    refuted = 0
    for n in exp.config.n_grid:
        s = sums[n].centered
        for x in np.linspace(0.5, 5.0, 10):
            bound = concentration_bound(float(x), n, c1, c2, exp.gamma)
            if tail_estimate(s, float(x) * math.sqrt(n)).lower > bound:
                refuted += 1
    manifest.record("concentration", "fail" if refuted else "pass")
    manifest.notes["concentration_refuted_points"] = refuted


_BOUND_CHECKS = {"chernoff": _check_chernoff, "concentration": _check_concentration}


def _emit(out_dir, name, header, rows, manifest):
    path = os.path.join(out_dir, name)
    write_csv(path, header, rows)
    manifest.outputs.append(name)


def _cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    raw = load_config(args.config)
    exp = build_experiment(
        raw,
        seed=args.seed,
        replicates=args.replicates,
        n_grid=_parse_grid(args.n_grid),
        workers=args.workers,
    )
    for name in exp.config.statistics:
        if name not in _STATS:
            raise ConfigError(f"unknown statistic {name!r}; choose from {sorted(_STATS)}")
    for name in exp.config.bound_checks:
        if name not in _BOUND_CHECKS:
            raise ConfigError(f"unknown bound check {name!r}; choose from {sorted(_BOUND_CHECKS)}")

    os.makedirs(args.out_dir, exist_ok=True)
    manifest = RunManifest(
        config_hash=config_hash(raw.sections),
        master_seed=exp.config.master_seed,
        version=_version(),
    )
    sums = sums_over_grid(exp.config)
    _emit(
        args.out_dir,
        "sums.csv",
        ("n_terms", "replicate", "sum"),
        (
            (n, j, float(v))
            for n in exp.config.n_grid
            for j, v in enumerate(sums[n].sums)
        ),
        manifest,
    )
    for name in exp.config.statistics:
        _STATS[name](exp, sums, args.out_dir, manifest)
    for name in exp.config.bound_checks:
        _BOUND_CHECKS[name](exp, sums, manifest)

    manifest.wall_clock_s = time.perf_counter() - t0
    write_manifest(os.path.join(args.out_dir, "manifest.json"), manifest)
    for name, verdict in manifest.verdicts.items():
        print(f"{verdict.upper():4s} {name}")
    print(f"wrote {len(manifest.outputs)} files to {args.out_dir}")
    return 1 if manifest.failed else 0


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def _cmd_bounds(args) -> int:
    kind = args.evaluator
    if kind == "berry-esseen":
        print(fmt(berry_esseen_bound(args.delta, args.gamma)))
    elif kind == "moddev":
        try:
            print(fmt(moddev_envelope(args.x, args.n, args.c5, args.gamma, c4=args.c4)))
        except OutOfWindowError:
            print("OUT_OF_WINDOW")
    elif kind == "momthm":
        print(fmt(momthm_bound(args.p, args.n, args.c0, args.gamma)))
    elif kind == "concentration":
        print(fmt(concentration_bound(args.x, args.n, args.c1, args.c2, args.gamma)))
    elif kind == "chernoff":
        print(fmt(chernoff_tail_bound(args.t, args.n, args.arity, args.delta1, args.delta2, args.b)))
    elif kind == "variance":
        print(fmt(variance_envelope(args.n, args.c)))
    elif kind == "mdp-rate":
        print(fmt(mdp_rate(args.x)))
    else:  # argparse choices make this unreachable
        raise ConfigError(f"unknown evaluator {kind!r}")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _cmd_verify(args) -> int:
    from nonconv.verification import run_suite

    results = run_suite(args.suite, workers=args.workers)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        tag = {"pass": "PASS", "fail": "FAIL"}.get(r.status, "INCONCLUSIVE")
        if r.status == "fail":
            failed += 1
        print(f"{tag:4s} {r.name:<{width}s} ({r.seconds:7.2f}s)  {r.detail}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nonconv", description=__doc__)
    p.add_argument("--version", action="version", version=_version())
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a configured experiment and write CSV reports")
    sim.add_argument("config", help="path to the experiment config file")
    sim.add_argument("--out-dir", default="nonconv-out")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--replicates", type=int, default=None)
    sim.add_argument("--n-grid", default=None, help="comma-separated term counts")
    sim.add_argument("--workers", type=int, default=None)
    sim.set_defaults(func=_cmd_simulate)

    b = sub.add_parser("bounds", help="evaluate one closed-form bound and print the value")
    b.add_argument(
        "evaluator",
        choices=(
            "berry-esseen",
            "moddev",
            "momthm",
            "concentration",
            "chernoff",
            "variance",
            "mdp-rate",
        ),
    )
    b.add_argument("--x", type=float, default=1.0)
    b.add_argument("--t", type=float, default=1.0)
    b.add_argument("--n", type=float, default=1.0)
    b.add_argument("--p", type=int, default=3)
    b.add_argument("--arity", type=int, default=1)
    b.add_argument("--gamma", type=float, default=1.0)
    b.add_argument("--delta", type=float, default=0.1)
    b.add_argument("--delta1", type=float, default=1.0)
    b.add_argument("--delta2", type=float, default=1.0)
    b.add_argument("--b", type=float, default=1.0)
    b.add_argument("--c", type=float, default=1.0)
    b.add_argument("--c0", type=float, default=1.0)
    b.add_argument("--c1", type=float, default=1.0)
    b.add_argument("--c2", type=float, default=1.0)
    b.add_argument("--c4", type=float, default=None)
    b.add_argument("--c5", type=float, default=1.0)
    b.set_defaults(func=_cmd_bounds)

    v = sub.add_parser("verify", help="run a self-check suite")
    v.add_argument("suite", help="quick, full, martingale, cumulants, or mdp")
    v.add_argument("--workers", type=int, default=1)
    v.set_defaults(func=_cmd_verify)
    return p


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BudgetError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return 3
    except CheckFailure as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
