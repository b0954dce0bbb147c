"""Command line interface: ``gffx <subcommand> ...``.

Exit status is 0 on success, 2 when an acceptance check fails and 1 on error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import constants
from .compare import check_slepian_premise, mc_order_compare
from .extremes import pair_max_restricted, summarize
from .green import (
    DENSE_MAX_N,
    boundary_resistance,
    build_green,
    effective_resistance,
    gff_cov_profile_check,
    green_column,
    green_mc_oracle,
)
from .harness import checks
from .harness.experiment import ExperimentConfig, dumps_json, formula_center, geometry_experiment, run_experiment
from .harness.io import read_field, write_field
from .harness.tail import estimate_tail
from .samplers import FieldKind, mbrw_deviation_profile, sample
from .streams import RngStream

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2


def _vertex(s: str) -> tuple[int, int]:
    try:
        x, y = (int(t) for t in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y got {s!r}") from None
    return x, y


def _levels(s: str) -> tuple[int, int]:
    try:
        a, b = (int(t) for t in s.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b got {s!r}") from None
    return a, b


def _floats(s: str) -> list[float]:
    return [float(t) for t in s.split(",") if t]


def _emit(obj, out: str | None = None) -> None:
    text = dumps_json(obj)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_sample(a) -> int:
    f = sample(a.kind, a.n, RngStream(a.seed, a.replicate), a.levels)
    write_field(a.out, f)
    _emit({"kind": f.kind.name.lower(), "N": f.N, "seed": a.seed, "replicate": a.replicate, "levels": f.level_range, "out": a.out})
    return EXIT_OK


def _green_value(N: int, x, y) -> float:
    if N <= DENSE_MAX_N:
        return build_green(N)(x, y)
    return float(green_column(N, y)[x])


def cmd_green(a) -> int:
    exact = _green_value(a.n, a.x, a.y)
    mc, se = green_mc_oracle(a.n, a.x, a.y, a.walks, a.seed)
    _emit({"N": a.n, "x": a.x, "y": a.y, "solver": exact, "mc": mc, "mc_se": se, "walks": a.walks, "z": (mc - exact) / se if se > 0 else None})
    return EXIT_OK


def cmd_resistance(a) -> int:
    gv = lambda p, q: _green_value(a.n, p, q)
    var = gv(a.u, a.u) + gv(a.v, a.v) - 2 * gv(a.u, a.v)
    out = {"N": a.n, "u": a.u, "v": a.v, "increment_variance": var}
    if a.u == a.v:
        out["four_R_eff"] = 0.0
    else:
        out["four_R_eff"] = 4 * effective_resistance(a.n, a.u, a.v)
    out["abs_diff"] = abs(out["increment_variance"] - out["four_R_eff"])
    out["boundary_resistance_u"] = boundary_resistance(a.n, a.u)
    _emit(out)
    return EXIT_OK


def cmd_covcheck(a) -> int:
    if a.kind == "gff":
        _emit(gff_cov_profile_check(a.n, a.sources, a.seed))
    else:
        _emit(mbrw_deviation_profile(a.n))
    return EXIT_OK


def _center(field, mode: str) -> float:
    if mode == "auto":
        return formula_center(field.kind, field.N)
    if mode == "formula":
        return constants.m_N(field.N)
    return float(mode)


def cmd_extremes(a) -> int:
    f = read_field(a.infile)
    c = _center(f, a.center)
    s = summarize(f, a.topk, c, a.lam or ())
    _emit({"kind": f.kind.name.lower(), "N": f.N, "seed": f.seed, **s.to_dict()})
    return EXIT_OK


def cmd_pairmax(a) -> int:
    f = read_field(a.infile)
    r = pair_max_restricted(f, a.r, a.metric)
    _emit({"N": f.N, "r": a.r, "metric": a.metric, "value": r.value, "pair": None if r.pair is None else [list(p) for p in r.pair]})
    return EXIT_OK


def cmd_tail(a) -> int:
    with open(a.csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if a.n is not None:
        rows = [r for r in rows if int(r["N"]) == a.n]
    x = np.array([float(r[a.column]) for r in rows])
    center = float(x.mean()) if a.center == "mean" else float(a.center)
    est = estimate_tail(x, center, a.lam, a.model, a.min_samples)
    _emit(est.to_dict() | {"center": center, "column": a.column})
    return EXIT_OK


def _experiment_config(a, extra: dict) -> ExperimentConfig:
    text = open(a.config).read() if a.config else ""
    over = dict(extra)
    for kv in a.set or ():
        k, _, v = kv.partition("=")
        over[k] = v
    return ExperimentConfig.parse(text, over)


def cmd_geometry(a) -> int:
    extra = {"kind": "gff"}
    if a.n:
        extra["N"] = a.n
    for k, v in (("replicates", a.reps), ("seed", a.seed), ("geometry_r", a.r), ("geometry_c", a.c)):
        if v is not None:
            extra[k] = v
    extra.setdefault("statistics", "max,gap,geometry")
    extra.setdefault("second_pass", "resample")
    if a.csv:
        extra["csv"] = a.csv
    cfg = _experiment_config(a, extra)
    rep = geometry_experiment(cfg)
    _emit(rep.to_dict(), a.json)
    return EXIT_OK


def cmd_compare_sm(a) -> int:
    X = np.loadtxt(a.covx, delimiter=",", ndmin=2)
    Y = np.loadtxt(a.covy, delimiter=",", ndmin=2)
    prem = check_slepian_premise(X, Y)
    out = {"premise": prem.to_dict()}
    if not prem.passed:
        out["rows"] = []
        _emit(out)
        return EXIT_CHECK
    rows = mc_order_compare(X, Y, [int(m) for m in a.m.split(",")], a.reps, a.seed)
    out["rows"] = [vars(r) for r in rows]
    _emit(out)
    return EXIT_OK if all(r.passed for r in rows) else EXIT_CHECK


def cmd_run(a) -> int:
    res = run_experiment(_experiment_config(a, {}))
    _emit(res.summary, a.json)
    return EXIT_OK


def cmd_recipe(a) -> int:
    over = {}
    for kv in a.set or ():
        k, _, v = kv.partition("=")
        over[k] = v
    if a.reps is not None:
        over["replicates"] = a.reps
    if a.csv:
        over["csv"] = a.csv
    if a.json:
        over["json"] = a.json
    if a.workers is not None:
        over["workers"] = a.workers
    res, results = checks.run_recipe(a.name, over)
    for c in results:
        print(c.line())
    return EXIT_OK if all(c.passed for c in results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gffx", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("sample", help="sample a field to a binary file")
    s.add_argument("--kind", choices=["gff", "mbrw", "brw"], required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--replicate", type=int, default=0)
    s.add_argument("--levels", type=_levels)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sample)

    s = sub.add_parser("green", help="Green function: solver vs random-walk estimate")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--x", type=_vertex, required=True)
    s.add_argument("--y", type=_vertex, required=True)
    s.add_argument("--walks", type=int, default=20000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_green)

    s = sub.add_parser("resistance", help="increment variance vs 4 x effective resistance")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--u", type=_vertex, required=True)
    s.add_argument("--v", type=_vertex, required=True)
    s.set_defaults(fn=cmd_resistance)

    s = sub.add_parser("covcheck", help="log-correlation profile of GFF or MBRW covariance")
    s.add_argument("--kind", choices=["gff", "mbrw"], default="gff")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--sources", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_covcheck)

    s = sub.add_parser("extremes", help="max, gap, top-k of a field file")
    s.add_argument("--in", dest="infile", required=True)
    s.add_argument("--topk", type=int, default=20)
    s.add_argument("--center", default="auto", help="auto (per kind), formula (GFF m_N) or a number")
    s.add_argument("--lambda", dest="lam", type=_floats)
    s.set_defaults(fn=cmd_extremes)

    s = sub.add_parser("pairmax", help="restricted pair maximum of a field file")
    s.add_argument("--in", dest="infile", required=True)
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--metric", choices=["plain", "torus"], default="plain")
    s.set_defaults(fn=cmd_pairmax)

    s = sub.add_parser("tail", help="tail fit on a column of a per-replicate CSV")
    s.add_argument("--csv", required=True)
    s.add_argument("--column", default="max")
    s.add_argument("--n", type=int)
    s.add_argument("--center", default="mean")
    s.add_argument("--lambda", dest="lam", type=_floats, required=True)
    s.add_argument("--model", choices=["exponential", "polyexp", "gaussian"], default="polyexp")
    s.add_argument("--min-samples", type=int, default=1000)
    s.set_defaults(fn=cmd_tail)

    s = sub.add_parser("geometry", help="annulus near-max pair probabilities")
    s.add_argument("--config")
    s.add_argument("--n")
    s.add_argument("--reps")
    s.add_argument("--seed")
    s.add_argument("--r")
    s.add_argument("--c")
    s.add_argument("--csv")
    s.add_argument("--json")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.set_defaults(fn=cmd_geometry)

    s = sub.add_parser("compare-sm", help="E S_m ordering for two covariance matrices (CSV)")
    s.add_argument("--covx", required=True)
    s.add_argument("--covy", required=True)
    s.add_argument("--m", default="1,2,4")
    s.add_argument("--reps", type=int, default=100000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_compare_sm)

    s = sub.add_parser("run", help="run an experiment from a key=value config file")
    s.add_argument("config")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--json")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("recipe", help="run a named recipe and its checks")
    s.add_argument("name", choices=checks.RECIPES)
    s.add_argument("--reps", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--csv")
    s.add_argument("--json")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.set_defaults(fn=cmd_recipe)
    return p


def main(argv=None) -> int:
    p = build_parser()
    a = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.fn(a)
    except Exception as e:  # noqa: BLE001 - map every failure to exit 1
        if a.verbose:
            raise
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
