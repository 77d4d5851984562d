"""Batch front end: configuration parsing, experiment orchestration, and
bit-stable result emission.

Every subcommand writes CSV/JSON artifacts whose bytes are a deterministic
function of the configuration and master seed — per-sample RNG streams are
keyed by (seed, sample index) and reductions are exact integer sums, so the
worker count never changes an output byte.  Exit codes follow the CI
contract: 0 when every configured check passes, 2 when a check fails, 1 on
any error (bad configuration, missing closed form, numerical escape, ...).

The ``run`` subcommand drives a flat key=value configuration file::

    # lines starting with '#' are comments
    map = boole                  # or: thaler  (with p = ..., K0 = ...)
    partition = canonical        # or: 0.3, 0.7
    seed = 42
    workers = 2
    output_dir = results
    experiments = verify-identities, ld

    # per-experiment keys use the subcommand name as a dotted prefix;
    # key names are the long CLI flags with '-' replaced by '_'
    ld.statistic = Z
    ld.theta = 0.3
    ld.n = 1e3, 1e4, 1e5
    ld.samples = 20000
    ld.law = entrance

Initial laws are named: ``uniform`` (= uniform on [0.2, 0.8]),
``uniform:a,b``, ``entrance`` (two-sided asymptotic entrance law),
``entrance0`` / ``entrance1`` (one-sided), ``muY`` (normalized invariant
measure on the window).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import _csvio
from .entrance import (
    check_identity_renewal,
    entrance_density,
    entrance_density_side,
)
from .errors import (
    BudgetExceeded,
    ConfigError,
    ErgolabError,
)
from .experiments import (
    STATISTICS,
    DoubleLaplaceSpec,
    ExperimentSpec,
    cdf_experiment_batch,
    double_laplace_check_SA,
    double_laplace_check_SY,
    double_laplace_check_Z,
    ld_experiment,
    orbit_statistics,
    thaler_asymptotics_check,
    y_restricted_law,
)
from .invariant import (
    fit_regular_variation,
    invariant_density,
    measure_interval,
    wandering_table,
)
from .maps import (
    MapModel,
    ReferencePartition,
    boole_map,
    canonical_partition,
    inverse_branch,
    make_partition,
    thaler_map,
)
from .sampling import (
    EntranceLaw,
    InitialLaw,
    UniformInterval,
    counterexample_density,
    halving_c,
)
from .specfun import (
    dk_limit_cdf_boole,
    dynkin_lamperti_cdf,
    lamperti_cdf,
    mittag_leffler_cdf,
    write_cdf_table,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK_FAILED = 2

_ENTRANCE_DEPTH = 512  # truncation index of the entrance-density approximants


# ---------------------------------------------------------------------------
# Argument plumbing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Parser whose errors raise instead of exiting.

    argparse exits with status 2 on bad arguments, which would collide with
    the check-failure code; raising ConfigError routes everything through
    the single error path (exit 1).
    """

    def error(self, message: str):  # noqa: A003 - argparse API
        raise ConfigError(f"{self.prog}: {message}")


def _float_list(text: str) -> Tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected a comma-separated float list, got {text!r}")
    if not vals:
        raise ConfigError("expected at least one value")
    return vals


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in _float_list(text))


def _float_pair(text: str) -> Tuple[float, float]:
    vals = _float_list(text)
    if len(vals) != 2:
        raise ConfigError(f"expected two comma-separated values, got {text!r}")
    return vals[0], vals[1]


def _scale_int(text: str) -> int:
    try:
        return int(float(text))
    except ValueError:
        raise ConfigError(f"expected an integer (scientific notation ok), "
                          f"got {text!r}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--map", choices=("boole", "thaler"), default="boole",
                        help="map family (default: boole)")
    parser.add_argument("--p", type=float, default=2.0,
                        help="polynomial-family branch exponent (thaler only)")
    parser.add_argument("--K0", type=float, default=1.0,
                        help="polynomial-family right-branch coefficient")
    parser.add_argument("--partition", default="canonical",
                        help="'canonical' or explicit cuts 'c0,c1'")
    parser.add_argument("--seed", type=_scale_int, default=0,
                        help="master seed; all draws derive from (seed, index)")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes for the orbit batches")
    parser.add_argument("--out", default=None,
                        help="output directory (default: $ERGOLAB_OUTPUT_DIR "
                             "or ./ergolab-out)")


def _resolve_out(args) -> str:
    out = args.out or os.environ.get("ERGOLAB_OUTPUT_DIR") or "ergolab-out"
    os.makedirs(out, exist_ok=True)
    return out


def _build_map(args) -> MapModel:
    if args.map == "boole":
        return boole_map()
    return thaler_map(args.p, args.K0)


def _build_partition(m: MapModel, text: str) -> ReferencePartition:
    text = text.strip()
    if text == "canonical":
        return canonical_partition(m)
    c0, c1 = _float_pair(text)
    return make_partition(m, c0, c1)


def _build_law(name: str, m: MapModel, part: ReferencePartition) -> InitialLaw:
    name = name.strip()
    if name == "uniform":
        return UniformInterval(0.2, 0.8)
    if name.startswith("uniform:"):
        a, b = _float_pair(name[len("uniform:"):])
        return UniformInterval(a, b)
    if name == "entrance":
        return EntranceLaw(entrance_density(m, part, _ENTRANCE_DEPTH), m)
    if name in ("entrance0", "entrance1"):
        side = int(name[-1])
        return EntranceLaw(
            entrance_density_side(m, part, _ENTRANCE_DEPTH, side), m)
    if name == "muY":
        return y_restricted_law(m, part)
    raise ConfigError(
        f"unknown initial law {name!r}; expected uniform, uniform:a,b, "
        "entrance, entrance0, entrance1 or muY")


def _config_echo(args, keys: Sequence[str]) -> Dict[str, object]:
    cfg = {"command": args.command, "map": args.map, "partition": args.partition,
           "seed": args.seed}
    if args.map == "thaler":
        cfg["p"] = args.p
        cfg["K0"] = args.K0
    for k in keys:
        cfg[k] = getattr(args, k.replace("-", "_"))
    return cfg


def _write_json(path: str, payload: Mapping) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"not JSON serializable: {type(value)!r}")


def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


# ---------------------------------------------------------------------------
# Subcommand planners.  Each validates its full configuration and constructs
# every input object, then returns a zero-argument runner (True iff the
# configured checks pass).  The split lets `run` validate every experiment
# in a config file before any of them starts working or writing.
# ---------------------------------------------------------------------------


def _plan_simulate(args):
    m = _build_map(args)
    part = _build_partition(m, args.partition)
    law = _build_law(args.law, m, part)
    cfg = _config_echo(args, ("n", "samples", "law"))

    def run() -> bool:
        out = _resolve_out(args)
        sy, zy, sa0, sa1 = orbit_statistics(
            m, part, law, [args.n], args.samples, args.seed,
            workers=args.workers)
        path = os.path.join(out, "simulate.csv")
        _csvio.write_csv(path, {
            "index": np.arange(args.samples),
            "S_Y": sy[:, 0], "Z": zy[:, 0],
            "S_A0": sa0[:, 0], "S_A1": sa1[:, 0],
        }, meta={"config_hash": _csvio.config_hash(cfg), "seed": args.seed,
                 "n": args.n})
        print(f"simulate: {args.samples} orbits to n={args.n} -> {path}")
        return True

    return run


def _plan_wandering(args):
    m = _build_map(args)
    part = _build_partition(m, args.partition)
    if args.N < 64:
        raise ConfigError("--N must be at least 64 (the fit needs a window)")
    # the exact level table needs the closed form; fail before any work
    invariant_density(m).density(0.5)
    cfg = _config_echo(args, ("N",))

    def run() -> bool:
        out = _resolve_out(args)
        table = wandering_table(m, part, args.N)
        fit = fit_regular_variation(table, max(10, args.N // 100), args.N)
        path = os.path.join(out, "wandering.csv")
        table.write_csv(path, meta={"config_hash": _csvio.config_hash(cfg),
                                    "seed": args.seed})
        tot = table.w_A0[table.N] + table.w_A1[table.N]
        payload = {
            "config": cfg,
            "config_hash": _csvio.config_hash(cfg),
            "seed": args.seed,
            "mu_Y": table.mu_Y,
            "exponent": fit.exponent,
            "alpha_hat": fit.alpha_hat,
            "window": list(fit.window),
            "beta0_hat": table.w_A0[table.N] / tot,
            "beta1_hat": table.w_A1[table.N] / tot,
            "ell_at_N": fit.ell_at([float(table.N)])[0],
        }
        jpath = os.path.join(out, "wandering.json")
        _write_json(jpath, payload)
        print(f"wandering: N={args.N} exponent={fit.exponent:.4f} "
              f"(theory {1.0 - m.alpha:.4f}) -> {path}, {jpath}")
        return True

    return run


_MEASURE_PROBES = ((0.05, 0.15), (0.2, 0.4), (0.45, 0.72), (0.9, 0.97))


def _plan_verify_identities(args):
    m = _build_map(args)
    part = _build_partition(m, args.partition)
    cfg = _config_echo(args, ("tol_measure", "tol_renewal", "tol_laplace",
                              "nodes", "horizon", "s"))
    suites = []
    for name, fn, kw in (
            ("double-laplace-waiting", double_laplace_check_Z,
             dict(s1=0.5, s2=0.3)),
            ("double-laplace-occupation", double_laplace_check_SY,
             dict(s1=0.4, s2=0.6)),
            ("double-laplace-rays", double_laplace_check_SA,
             dict(s1=0.5, s_sides=(0.2, 0.7))),
    ):
        suites.append((name, fn,
                       DoubleLaplaceSpec(m=m, part=part, nodes=args.nodes,
                                         horizon=args.horizon,
                                         level_cap=args.horizon,
                                         tol=args.tol_laplace, **kw)))

    def run() -> bool:
        out = _resolve_out(args)
        checks: List[Tuple[str, float, float]] = []

        # T-invariance of mu probed on intervals: mu(T^{-1} I) = mu(I),
        # with T^{-1} I the union of the two (increasing) branch preimages.
        probes = _MEASURE_PROBES + ((part.c0, part.c1),)
        worst = 0.0
        for (a, b) in probes:
            pre = sum(measure_interval(m, inverse_branch(m, br, a),
                                       inverse_branch(m, br, b))
                      for br in (0, 1))
            worst = max(worst, abs(pre - measure_interval(m, a, b)))
        checks.append(("measure-preservation", worst, args.tol_measure))

        # the renewal identity tying the entrance densities to Q^Y
        residual = check_identity_renewal(m, part, args.s)
        checks.append((f"renewal(s={args.s})", residual, args.tol_renewal))

        # the three double-Laplace identities behind the limit laws
        budget_failures: List[str] = []
        for name, fn, spec in suites:
            try:
                res = fn(spec)
                checks.append((name, abs(res.rel_error), args.tol_laplace))
            except BudgetExceeded as exc:
                budget_failures.append(f"{name}: {exc}")
                checks.append((name, math.inf, args.tol_laplace))

        passed = all(v <= tol for _, v, tol in checks)
        payload = {
            "config": cfg,
            "config_hash": _csvio.config_hash(cfg),
            "seed": args.seed,
            "checks": [{"name": n, "residual": v, "tolerance": tol,
                        "pass": bool(v <= tol)} for n, v, tol in checks],
            "budget_failures": budget_failures,
            "pass": bool(passed),
        }
        path = os.path.join(out, "identities.json")
        _write_json(path, payload)
        for n, v, tol in checks:
            print(f"verify-identities: {n} residual {v:.3e} "
                  f"(tol {tol:g}) {_status(v <= tol)}")
        print(f"verify-identities: {_status(passed)} -> {path}")
        return passed

    return run


def _plan_dk(args):
    return _plan_cdf_check(args, "SY", "dk", normalization=args.normalization)


def _plan_arcsine(args):
    return _plan_cdf_check(args, args.statistic,
                           f"arcsine-{args.statistic.lower()}")


def _plan_cdf_check(args, statistic: str, stem: str, *,
                    normalization: str = "auto"):
    m = _build_map(args)
    part = _build_partition(m, args.partition)
    law = _build_law(args.law, m, part)
    keys = ["n", "samples", "law", "ks_max"]
    if statistic == "SY":
        keys.append("normalization")
    cfg = _config_echo(args, keys)
    cfg["statistic"] = statistic
    if args.samples < 1 or args.n < 1:
        raise ConfigError("--n and --samples must be positive")

    def run() -> bool:
        out = _resolve_out(args)
        res = cdf_experiment_batch(
            m, part, law, (statistic,), args.n, args.samples, args.seed,
            normalization=normalization, workers=args.workers)[statistic]
        ok = res.ks <= args.ks_max
        chash = _csvio.config_hash(cfg)
        path = os.path.join(out, f"{stem}.csv")
        res.write_csv(path, meta={"config_hash": chash, "seed": args.seed})
        jpath = os.path.join(out, f"{stem}.json")
        _write_json(jpath, {
            "config": cfg, "config_hash": chash, "seed": args.seed,
            "statistic": statistic, "normalization": res.normalization,
            "n": res.n, "samples": res.n_samples, "ks": res.ks,
            "ks_max": args.ks_max, "pass": bool(ok),
        })
        print(f"{args.command}: {statistic} KS={res.ks:.4f} vs "
              f"{res.normalization} limit (max {args.ks_max}) "
              f"{_status(ok)} -> {path}")
        return ok

    return run


def _build_ld_spec(args, m: MapModel, part: ReferencePartition,
                   law: InitialLaw) -> ExperimentSpec:
    kw = dict(m=m, part=part, law=law, statistic=args.statistic,
              n_grid=args.n, n_samples=args.samples, seed=args.seed,
              weights=args.weights)
    if args.statistic == "SY":
        if args.theta is None:
            raise ConfigError("the window statistic needs --theta "
                              "(threshold exponent for a(n)^(-theta))")
        if args.c_table is not None:
            raise ConfigError("--c-table applies to the n-scaled statistics "
                              "only; the window statistic uses --theta")
        kw["theta_tilde"] = args.theta
    elif args.c_table is not None:
        if args.theta is not None:
            raise ConfigError("--theta and --c-table are mutually exclusive")
        kw["c_table"] = args.c_table
    else:
        if args.theta is None:
            raise ConfigError("need --theta (c(n) = n^(-theta)) or --c-table")
        kw["theta"] = args.theta
    return ExperimentSpec(**kw)


def _plan_ld(args):
    m = _build_map(args)
    part = _build_partition(m, args.partition)
    law = _build_law(args.law, m, part)
    spec = _build_ld_spec(args, m, part, law)

    def run() -> bool:
        out = _resolve_out(args)
        report = ld_experiment(spec, workers=args.workers)
        path = os.path.join(out, "ld.csv")
        report.write_csv(path, meta={"law": args.law})
        for row in report.rows:
            print(f"ld[{spec.statistic}]: n={row.n} count={row.count} "
                  f"estimate={row.estimate:.6g} ratio={row.ratio:.4f}")
        print(f"ld[{spec.statistic}]: plateau ratio in "
              f"[{report.plateau_min:.4f}, {report.plateau_max:.4f}], "
              f"spread {report.plateau_spread:.4f}, "
              f"sharp target {report.rate_constant:.4f}")
        passes: Dict[str, bool] = {}
        if args.band is not None:
            lo, hi = args.band
            final = report.rows[-1].ratio
            passes["band"] = bool(lo <= final <= hi)
            print(f"ld[{spec.statistic}]: final ratio {final:.4f} in "
                  f"[{lo:g}, {hi:g}] {_status(passes['band'])}")
        if args.spread_max is not None:
            passes["spread"] = bool(
                report.plateau_spread <= args.spread_max)
            print(f"ld[{spec.statistic}]: spread {report.plateau_spread:.4f} "
                  f"<= {args.spread_max:g} {_status(passes['spread'])}")
        jpath = os.path.join(out, "ld.json")
        report.write_json(jpath, passes=passes if passes else None)
        ok = all(passes.values()) if passes else True
        print(f"ld[{spec.statistic}]: {_status(ok)} -> {path}, {jpath}")
        return ok

    return run


def _plan_counterexample(args):
    m = _build_map(args)
    part = _build_partition(m, args.partition)
    if args.levels < 2:
        raise ConfigError("--levels must be at least 2")
    cfg = _config_echo(args, ("levels", "samples", "min_final"))
    law = counterexample_density(m, part, halving_c, m.alpha,
                                 n_levels=args.levels + 4)
    grid = law.levels[:args.levels]
    c_table = tuple(halving_c(n) for n in grid)
    spec = ExperimentSpec(m=m, part=part, law=law, statistic="Z",
                          n_grid=grid, n_samples=args.samples,
                          seed=args.seed, c_table=c_table)

    def run() -> bool:
        out = _resolve_out(args)
        report = ld_experiment(spec, workers=args.workers)
        ratios = [r.ratio for r in report.rows]
        monotone = all(b > a for a, b in zip(ratios, ratios[1:]))
        final_ok = ratios[-1] > args.min_final
        ok = monotone and final_ok
        chash = _csvio.config_hash(cfg)
        path = os.path.join(out, "counterexample.csv")
        report.write_csv(path, meta={"law": "return-level",
                                     "run_hash": chash})
        jpath = os.path.join(out, "counterexample.json")
        _write_json(jpath, {
            "config": cfg, "config_hash": chash, "seed": args.seed,
            "levels": list(grid), "ratios": ratios,
            "checks": {"monotone": bool(monotone), "final": bool(final_ok)},
            "min_final": args.min_final, "pass": bool(ok),
        })
        print(f"counterexample: rescaled ratio {ratios[0]:.3f} -> "
              f"{ratios[-1]:.3f} over {len(grid)} levels; "
              f"monotone {_status(monotone)}, "
              f"final > {args.min_final:g} {_status(final_ok)}")
        print(f"counterexample: {_status(ok)} -> {path}, {jpath}")
        return ok

    return run


def _plan_thaler_asymptotics(args):
    m = _build_map(args)
    if m.family != "thaler":
        raise ConfigError("thaler-asymptotics needs --map thaler")
    if args.partition != "canonical":
        part = _build_partition(m, args.partition)
    else:
        part = None
    cfg = _config_echo(args, ("n", "ratio_tol", "mc_samples", "mc_tol"))

    def run() -> bool:
        out = _resolve_out(args)
        report = thaler_asymptotics_check(m, args.n, part=part,
                                          mc_samples=args.mc_samples,
                                          seed=args.seed)
        chash = _csvio.config_hash(cfg)
        path = os.path.join(out, "thaler.csv")
        report.write_csv(path, meta={"config_hash": chash,
                                     "seed": args.seed})
        final = abs(report.ratio[-1] - 1.0)
        checks = {"pullback_ratio": bool(final <= args.ratio_tol)}
        print(f"thaler-asymptotics: |f0^n(1)/u0^-1(n) - 1| = {final:.4f} at "
              f"n={report.n[-1]} (tol {args.ratio_tol:g}) "
              f"{_status(checks['pullback_ratio'])}")
        payload = {
            "config": cfg, "config_hash": chash, "seed": args.seed,
            "p": report.p, "final_ratio_error": final,
        }
        if args.mc_samples > 0:
            target = -1.0 / args.p
            err = abs(report.mc_exponent - target)
            checks["tail_exponent"] = bool(err <= args.mc_tol)
            payload["mc_exponent"] = report.mc_exponent
            payload["mc_exponent_target"] = target
            print(f"thaler-asymptotics: tail exponent "
                  f"{report.mc_exponent:.4f} vs {target:.4f} "
                  f"(tol {args.mc_tol:g}) "
                  f"{_status(checks['tail_exponent'])}")
        ok = all(checks.values())
        payload["checks"] = checks
        payload["pass"] = bool(ok)
        jpath = os.path.join(out, "thaler.json")
        _write_json(jpath, payload)
        print(f"thaler-asymptotics: {_status(ok)} -> {path}, {jpath}")
        return ok

    return run


_CDF_TABLES = {
    "mittag-leffler": lambda a, b, t: mittag_leffler_cdf(a, t),
    "dynkin-lamperti": lambda a, b, t: dynkin_lamperti_cdf(a, t),
    "lamperti": lambda a, b, t: lamperti_cdf(a, b, t),
    "boole-dk": lambda a, b, t: dk_limit_cdf_boole(t),
}
_CDF_TMAX = {"mittag-leffler": 3.0, "dynkin-lamperti": 1.0,
             "lamperti": 1.0, "boole-dk": 6.0}


def _plan_dump_cdf(args):
    cfg = _config_echo(args, ("law", "alpha", "b", "t_max", "points"))
    t_max = args.t_max if args.t_max is not None else _CDF_TMAX[args.law]
    if args.points < 2:
        raise ConfigError("--points must be >= 2")
    if not 0.0 < args.alpha < 1.0:
        raise ConfigError("--alpha must lie in (0,1)")

    def run() -> bool:
        out = _resolve_out(args)
        t = np.linspace(0.0, t_max, args.points)
        cdf = _CDF_TABLES[args.law](args.alpha, args.b, t)
        path = os.path.join(out, f"cdf-{args.law}.csv")
        write_cdf_table(path, args.law, t, np.asarray(cdf, dtype=float),
                        alpha=args.alpha, b=args.b,
                        config_hash=_csvio.config_hash(cfg), seed=args.seed)
        print(f"dump-cdf: {args.law} on [0, {t_max:g}] "
              f"({args.points} points) -> {path}")
        return True

    return run


def _plan_plot_script(args):
    def run() -> bool:
        if args.script_out:
            with open(args.script_out, "w") as fh:
                fh.write(_PLOT_SCRIPT)
            print(f"plot-script: -> {args.script_out}")
        else:
            sys.stdout.write(_PLOT_SCRIPT)
        return True

    return run


# ---------------------------------------------------------------------------
# run: flat key=value configuration files
# ---------------------------------------------------------------------------


_KEY_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")
_GLOBAL_KEYS = ("map", "p", "K0", "partition", "seed", "workers",
                "output_dir", "experiments")


def _parse_config_file(path: str) -> Dict[str, Tuple[str, int]]:
    """key -> (value, line number); raises ConfigError with line context."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    entries: Dict[str, Tuple[str, int]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not _KEY_RE.match(key):
            raise ConfigError(f"{path}:{lineno}: invalid key {key!r}")
        if not value:
            raise ConfigError(f"{path}:{lineno}: empty value for {key!r}")
        if key in entries:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r} "
                              f"(first set on line {entries[key][1]})")
        entries[key] = (value, lineno)
    return entries


def _plan_run(args):
    path = args.config
    entries = _parse_config_file(path)
    used = set()

    def take(key: str, default: Optional[str] = None) -> Optional[str]:
        if key in entries:
            used.add(key)
            return entries[key][0]
        return default

    exp_text = take("experiments")
    if exp_text is None:
        raise ConfigError(f"{path}: missing required key 'experiments'")
    experiments = [e.strip() for e in exp_text.split(",") if e.strip()]
    if not experiments:
        raise ConfigError(f"{path}:{entries['experiments'][1]}: "
                          "'experiments' lists no experiment")
    for name in experiments:
        if name not in _RUNNABLE:
            raise ConfigError(
                f"{path}:{entries['experiments'][1]}: unknown experiment "
                f"{name!r}; choose from {', '.join(sorted(_RUNNABLE))}")
    if len(set(experiments)) != len(experiments):
        raise ConfigError(f"{path}:{entries['experiments'][1]}: "
                          "duplicate experiment names")

    common: List[str] = []
    for key, flag in (("map", "--map"), ("p", "--p"), ("K0", "--K0"),
                      ("partition", "--partition"), ("seed", "--seed"),
                      ("workers", "--workers")):
        value = take(key)
        if value is not None:
            common.extend((flag, value))
    outdir = take("output_dir") or args.out
    if outdir is not None:
        common.extend(("--out", outdir))

    # every remaining key must be '<experiment>.<flag>' for a listed
    # experiment; translated to the subcommand's long flags so that config
    # files and the command line share one validation path
    argv_by_exp: Dict[str, List[str]] = {name: [] for name in experiments}
    lineno_by_flag: Dict[str, int] = {}
    for key, (value, lineno) in entries.items():
        if key in used:
            continue
        if "." not in key:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        prefix, _, option = key.partition(".")
        if prefix not in argv_by_exp:
            raise ConfigError(
                f"{path}:{lineno}: key {key!r} names "
                f"{'an unlisted experiment' if prefix in _RUNNABLE else 'no known experiment'} "
                f"{prefix!r}")
        flag = "--" + option.replace("_", "-")
        argv_by_exp[prefix].extend((flag, value))
        lineno_by_flag[flag] = lineno

    # plan (and thereby fully validate) every job before running any
    parser = build_parser()
    jobs = []
    for name in experiments:
        argv = [name] + common + argv_by_exp[name]
        try:
            job_args = parser.parse_args(argv)
            jobs.append((name, job_args.handler(job_args)))
        except ConfigError as exc:
            msg = str(exc)
            match = re.search(r"(?:argument|unrecognized arguments:) "
                              r"(--[A-Za-z0-9\-]+)", msg)
            if match and match.group(1) in lineno_by_flag:
                raise ConfigError(
                    f"{path}:{lineno_by_flag[match.group(1)]}: {msg}")
            raise ConfigError(f"{path} [{name}]: {msg}")
        except ErgolabError as exc:
            raise ConfigError(
                f"{path} [{name}]: {type(exc).__name__}: {exc}")

    def run() -> bool:
        all_ok = True
        for name, runner in jobs:
            print(f"== {name} ==")
            ok = runner()
            all_ok = all_ok and ok
        print(f"run: {_status(all_ok)} ({len(jobs)} experiment(s))")
        return all_ok

    return run


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


_RUNNABLE = {"simulate", "wandering", "verify-identities", "dk", "arcsine",
             "ld", "counterexample", "thaler-asymptotics", "dump-cdf"}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ergolab", allow_abbrev=False, description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def add(name: str, handler, help_text: str, common: bool = True):
        p = sub.add_parser(name, help=help_text, allow_abbrev=False)
        if common:
            _add_common(p)
        p.set_defaults(handler=handler, command=name)
        return p

    p = add("simulate", _plan_simulate, "per-orbit statistic summaries")
    p.add_argument("--n", type=_scale_int, default=10_000,
                   help="orbit horizon")
    p.add_argument("--samples", type=_scale_int, default=1000)
    p.add_argument("--law", default="uniform")

    p = add("wandering", _plan_wandering,
            "exact wandering-rate table and regular-variation fit")
    p.add_argument("--N", type=_scale_int, default=4096)

    p = add("verify-identities", _plan_verify_identities,
            "exact identity suite: measure preservation, renewal, "
            "double-Laplace")
    p.add_argument("--tol-measure", type=float, default=1e-10)
    p.add_argument("--tol-renewal", type=float, default=1e-6)
    p.add_argument("--tol-laplace", type=float, default=1e-3)
    p.add_argument("--s", type=float, default=0.5,
                   help="renewal-identity Laplace point")
    p.add_argument("--nodes", type=int, default=2048,
                   help="quadrature nodes for the double-Laplace checks")
    p.add_argument("--horizon", type=int, default=96,
                   help="series/level truncation for the double-Laplace "
                        "checks")

    p = add("dk", _plan_dk, "window occupation time against its limit CDF")
    p.add_argument("--n", type=_scale_int, default=100_000)
    p.add_argument("--samples", type=_scale_int, default=10_000)
    p.add_argument("--law", default="uniform")
    p.add_argument("--normalization", choices=("auto", "boole-dk", "ml"),
                   default="auto")
    p.add_argument("--ks-max", type=float, default=0.05)

    p = add("arcsine", _plan_arcsine,
            "waiting time or ray occupation against the arcsine laws")
    p.add_argument("--statistic", choices=("Z", "SA0", "SA1"), default="Z")
    p.add_argument("--n", type=_scale_int, default=100_000)
    p.add_argument("--samples", type=_scale_int, default=10_000)
    p.add_argument("--law", default="uniform")
    p.add_argument("--ks-max", type=float, default=0.05)

    p = add("ld", _plan_ld, "small-threshold event rates across an n-grid")
    p.add_argument("--statistic", choices=STATISTICS, default="Z")
    p.add_argument("--theta", type=float, default=None,
                   help="threshold exponent: c(n)=n^-theta, or "
                        "a(n)^-theta for the window statistic")
    p.add_argument("--c-table", type=_float_list, default=None,
                   help="explicit c(n) values, one per grid point")
    p.add_argument("--n", type=_int_list, default=(1000, 10_000, 100_000),
                   help="comma-separated horizons, e.g. 1e3,1e4,1e5")
    p.add_argument("--samples", type=_scale_int, default=20_000)
    p.add_argument("--law", default="entrance")
    p.add_argument("--weights", type=_float_pair, default=(1.0, 0.0),
                   help="ray weights for the weighted statistic")
    p.add_argument("--band", type=_float_pair, default=None,
                   help="enforce final rescaled ratio inside lo,hi")
    p.add_argument("--spread-max", type=float, default=None,
                   help="enforce plateau spread below this value")

    p = add("counterexample", _plan_counterexample,
            "level-set law with unbounded rescaled LD ratio")
    p.add_argument("--levels", type=int, default=21,
                   help="number of return-time levels in the grid")
    p.add_argument("--samples", type=_scale_int, default=100_000)
    p.add_argument("--min-final", type=float, default=10.0)

    p = add("thaler-asymptotics", _plan_thaler_asymptotics,
            "left-branch pullback asymptotics and return-tail exponent")
    p.add_argument("--n", type=_int_list, default=(100, 1000, 10_000, 100_000))
    p.add_argument("--ratio-tol", type=float, default=0.05)
    p.add_argument("--mc-samples", type=_scale_int, default=0)
    p.add_argument("--mc-tol", type=float, default=0.05)

    p = add("dump-cdf", _plan_dump_cdf, "tabulate a limit-law CDF as CSV")
    p.add_argument("--law", choices=sorted(_CDF_TABLES), required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--points", type=int, default=201)

    p = add("plot-script", _plan_plot_script,
            "emit a matplotlib script for the CSV outputs", common=False)
    p.set_defaults(map="boole", partition="canonical", seed=0, workers=1,
                   out=None)
    p.add_argument("--script-out", default=None,
                   help="write the script here instead of stdout")

    p = add("run", _plan_run, "execute experiments from a key=value config "
                             "file", common=False)
    p.set_defaults(out=None)
    p.add_argument("config", help="path to the configuration file")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        runner = args.handler(args)   # plan: validate and construct
        ok = runner()                 # execute and write artifacts
        return EXIT_OK if ok else EXIT_CHECK_FAILED
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ErgolabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


# ---------------------------------------------------------------------------
# The emitted plotting script (data, not a UI)
# ---------------------------------------------------------------------------


_PLOT_SCRIPT = '''#!/usr/bin/env python3
"""Plot ergolab CSV outputs.

Usage: python plot_ergolab.py FILE [FILE ...]

Dispatches on the column header: large-deviation reports (ratio plateaus
with confidence bands), CDF comparisons (empirical vs theory), tabulated
limit CDFs and wandering-rate tables are all recognized.  Writes one PNG
next to each input file.
"""
import sys


def read_csv(path):
    meta, names, rows = {}, None, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, value = line[1:].split("=", 1)
                    meta[key.strip()] = value.strip()
                continue
            parts = line.split(",")
            if names is None:
                names = parts
                continue
            rows.append([float(p) for p in parts])
    cols = {n: [r[i] for r in rows] for i, n in enumerate(names)}
    return meta, cols


TWO_OVER_PI = 0.6366197723675814


def plot_file(path, ax):
    meta, cols = read_csv(path)
    if "ratio" in cols and "ci_lo" in cols:
        n, est = cols["n"], cols["estimate"]
        ratio = cols["ratio"]
        scale = [r / e if e else float("nan") for r, e in zip(ratio, est)]
        lo = [c * s for c, s in zip(cols["ci_lo"], scale)]
        hi = [c * s for c, s in zip(cols["ci_hi"], scale)]
        err = [[r - a for r, a in zip(ratio, lo)],
               [b - r for r, b in zip(ratio, hi)]]
        ax.errorbar(n, ratio, yerr=err, fmt="o-", capsize=3)
        ax.axhline(TWO_OVER_PI, ls="--", lw=1, color="gray",
                   label="sharp target 2/pi")
        ax.set_xscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel("estimate / predicted rate")
        ax.legend()
        title = meta.get("statistic", "LD")
        ax.set_title(f"rescaled small-threshold ratio [{title}]")
    elif "empirical" in cols:
        ax.plot(cols["t"], cols["theory"], "-", label="limit law")
        ax.step(cols["t"], cols["empirical"], where="post",
                label="empirical")
        ax.set_xlabel(meta.get("normalization", "t"))
        ax.set_ylabel("CDF")
        ks = meta.get("ks", "")
        ax.set_title(f"{meta.get('statistic', '')} n={meta.get('n', '?')}"
                     f"  KS={ks[:6]}")
        ax.legend()
    elif "cdf" in cols:
        ax.plot(cols["t"], cols["cdf"], "-")
        ax.set_xlabel("t")
        ax.set_ylabel("CDF")
        ax.set_title(meta.get("law", path))
    elif "w" in cols:
        n = cols["n"][1:]
        ax.loglog(n, cols["w"][1:], label="w_n")
        if "w_A0" in cols:
            ax.loglog(n, cols["w_A0"][1:], label="w_n(A0)", ls="--")
            ax.loglog(n, cols["w_A1"][1:], label="w_n(A1)", ls=":")
        ax.set_xlabel("n")
        ax.set_ylabel("wandering rate")
        ax.legend()
        ax.set_title("wandering rates")
    else:
        ax.text(0.5, 0.5, f"unrecognized table: {path}", ha="center")
    return meta


def main(paths):
    if not paths:
        print(__doc__)
        return 1
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    for path in paths:
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        plot_file(path, ax)
        out = path.rsplit(".", 1)[0] + ".png"
        fig.tight_layout()
        fig.savefig(out, dpi=150)
        plt.close(fig)
        print(f"{path} -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
'''


if __name__ == "__main__":
    sys.exit(main())
