"""Reproducible Monte Carlo experiments over GFF / MBRW / BRW fields.

Replicate ``i`` at side ``N`` always draws from the substream keyed by
``(seed_N, i)``, so output does not depend on the worker count or on the
order in which replicates finish. Centering at the empirical mean of the
maximum takes two passes: the first records per-replicate summaries
(including the top ``K`` values), the second evaluates threshold statistics
from the stored top ``K`` when it provably contains every vertex above the
threshold, and otherwise regenerates the field bit-exactly from its
substream (or raises, with ``second_pass=strict``).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .. import constants
from ..extremes import (
    annulus_pair_exists,
    block_max_pyramid,
    brw_level_counts,
    brw_pair_max_split,
    neighbor_avg_field,
    pair_max_restricted,
    sum_top_m,
    top_k_flat,
)
from ..lattice import log2_exact
from ..samplers import FieldKind, sample
from ..streams import MASK64, RngStream, substream_key
from .tail import estimate_tail

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
WORKERS_ENV = "GFFX_WORKERS"
STATISTICS = ("max", "gap", "near_max", "pair_max", "geometry", "top_m", "zeta", "brw")


class ConfigError(ValueError):
    pass


class TopKInsufficient(RuntimeError):
    pass


def _floats(s) -> list[float]:
    if isinstance(s, (list, tuple)):
        return [float(t) for t in s]
    return [float(t) for t in str(s).split(",") if t.strip()]


def _ints(s) -> list[int]:
    if isinstance(s, (list, tuple)):
        return [int(t) for t in s]
    return [int(t) for t in str(s).split(",") if t.strip()]


def _strs(s) -> list[str]:
    if isinstance(s, (list, tuple)):
        return [str(t) for t in s]
    return [t.strip() for t in str(s).split(",") if t.strip()]


@dataclass
class ExperimentConfig:
    kind: str = "gff"
    N: list[int] = field(default_factory=lambda: [64])
    replicates: int = 100
    seed: int = 0
    statistics: list[str] = field(default_factory=lambda: ["max", "gap"])
    centering: str = "empirical"
    levels: str = ""
    near_lambda: list[float] = field(default_factory=list)
    pair_r: list[float] = field(default_factory=list)
    pair_metric: str = "plain"
    geometry_r: list[float] = field(default_factory=list)
    geometry_c: list[float] = field(default_factory=list)
    top_m: list[int] = field(default_factory=list)
    brw_x: list[int] = field(default_factory=list)
    brw_split_r: list[int] = field(default_factory=list)
    tail_max: list[str] = field(default_factory=list)
    tail_max_lambda: list[float] = field(default_factory=list)
    tail_gap: list[str] = field(default_factory=list)
    tail_gap_lambda: list[float] = field(default_factory=list)
    gap_delta: list[float] = field(default_factory=list)
    top_k: int = 64
    second_pass: str = "strict"
    workers: int = 1
    csv: str = ""
    json: str = ""
    check: str = ""
    name: str = ""

    _LISTS_F = ("near_lambda", "pair_r", "geometry_r", "geometry_c", "tail_max_lambda", "tail_gap_lambda", "gap_delta")
    _LISTS_I = ("N", "top_m", "brw_x", "brw_split_r")
    _LISTS_S = ("statistics", "tail_max", "tail_gap")

    @classmethod
    def from_mapping(cls, m: dict[str, Any]) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__ if not f.startswith("_")}
        kw = {}
        for k, v in m.items():
            k = k.strip()
            if k not in known:
                raise ConfigError(f"unknown config key {k!r}")
            if k in cls._LISTS_F:
                kw[k] = _floats(v)
            elif k in cls._LISTS_I:
                kw[k] = _ints(v)
            elif k in cls._LISTS_S:
                kw[k] = _strs(v)
            elif k in ("replicates", "seed", "top_k", "workers"):
                kw[k] = int(v)
            else:
                kw[k] = str(v).strip()
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def parse(cls, text: str, overrides: dict[str, Any] | None = None) -> "ExperimentConfig":
        """Parse ``key=value`` lines; ``#`` starts a comment."""
        m: dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            k, v = line.split("=", 1)
            m[k.strip()] = v.strip()
        m.update(overrides or {})
        return cls.from_mapping(m)

    def to_text(self) -> str:
        out = []
        for k, v in asdict(self).items():
            if isinstance(v, list):
                v = ",".join(format(t, "g") if isinstance(t, float) else str(t) for t in v)
            out.append(f"{k}={v}")
        return "\n".join(out) + "\n"

    def validate(self) -> None:
        try:
            FieldKind.parse(self.kind)
        except KeyError:
            raise ConfigError(f"unknown field kind {self.kind!r}") from None
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.N:
            raise ConfigError("N list is empty")
        bad = set(self.statistics) - set(STATISTICS)
        if bad:
            raise ConfigError(f"unknown statistics {sorted(bad)}")
        if self.centering not in ("empirical", "formula"):
            raise ConfigError("centering must be 'empirical' or 'formula'")
        if self.second_pass not in ("resample", "strict"):
            raise ConfigError("second_pass must be 'resample' or 'strict'")
        if self.top_k < 2:
            raise ConfigError("top_k must be >= 2")
        need = {
            "near_max": ("near_lambda",),
            "pair_max": ("pair_r",),
            "geometry": ("geometry_r", "geometry_c"),
            "top_m": ("top_m",),
        }
        for stat, keys in need.items():
            if stat in self.statistics:
                for k in keys:
                    if not getattr(self, k):
                        raise ConfigError(f"statistic {stat!r} needs a nonempty {k}")
        hier = FieldKind.parse(self.kind) is not FieldKind.GFF
        for N in self.N:
            if hier:
                try:
                    log2_exact(N)
                except ValueError as e:
                    raise ConfigError(str(e)) from None
            elif N < 3:
                raise ConfigError("GFF needs N >= 3")
            for r in self.pair_r:
                if "pair_max" in self.statistics and (r < 1 or r * r > N * (1 + 1e-12)):
                    raise ConfigError(f"pair_r={r} gives an empty annulus at N={N}")
        if "zeta" in self.statistics and hier:
            raise ConfigError("zeta statistic needs a GFF field")
        if "brw" in self.statistics and FieldKind.parse(self.kind) is not FieldKind.BRW:
            raise ConfigError("brw statistic needs a BRW field")
        if self.tail_max and not self.tail_max_lambda:
            raise ConfigError("tail_max needs tail_max_lambda")
        if self.tail_gap and not self.tail_gap_lambda:
            raise ConfigError("tail_gap needs tail_gap_lambda")
        for t in (*self.tail_max, *self.tail_gap):
            if t not in ("exponential", "polyexp", "gaussian"):
                raise ConfigError(f"unknown tail model {t!r}")

    def level_range(self, N: int):
        if not self.levels or FieldKind.parse(self.kind) is FieldKind.GFF:
            return None
        n = log2_exact(N)
        lo, hi = self.levels.split(":")
        ev = lambda s: int(eval(s.strip(), {"__builtins__": {}}, {"n": n}))  # e.g. "n-1"
        return ev(lo), ev(hi)

    def effective_workers(self) -> int:
        env = os.environ.get(WORKERS_ENV)
        return max(1, int(env)) if env else max(1, self.workers)


def formula_center(kind, N: int) -> float:
    kind = FieldKind.parse(kind)
    if kind is FieldKind.GFF:
        return constants.m_N(N)
    if kind is FieldKind.MBRW:
        return constants.m_tilde(N)
    return constants.t_n(log2_exact(N))


def seed_for_N(seed: int, N: int) -> int:
    return substream_key(seed, N, -1, "experiment-N") & MASK64


def make_field(cfg: ExperimentConfig, N: int, rep: int):
    return sample(cfg.kind, N, RngStream(seed_for_N(cfg.seed, N), rep), cfg.level_range(N))


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# --- pass 1 -----------------------------------------------------------------


def _threshold_stats(cfg: ExperimentConfig, N: int, center: float, coords, vals) -> dict:
    """Near-max counts and geometry indicators from a set containing every vertex above threshold."""
    row = {}
    if "near_max" in cfg.statistics:
        s = np.sort(vals)
        for lam in cfg.near_lambda:
            row[f"A_lam{lam:g}"] = int(s.size - np.searchsorted(s, center - lam, side="left"))
    if "geometry" in cfg.statistics:
        for r in cfg.geometry_r:
            for c in cfg.geometry_c:
                thr = geometry_threshold(center, r, c)
                sel = vals >= thr
                row[f"geom_r{r:g}_c{c:g}"] = int(annulus_pair_exists(coords[sel], r, N))
    return row


def geometry_threshold(center: float, r: float, c: float) -> float:
    ll = math.log(math.log(r)) if r > 1 else -math.inf
    if math.isinf(c):
        return -math.inf if ll > 0 else math.inf
    return center - c * ll


def _min_threshold(cfg: ExperimentConfig, center: float) -> float:
    t = math.inf
    if "near_max" in cfg.statistics:
        t = min(t, center - max(cfg.near_lambda))
    if "geometry" in cfg.statistics:
        for r in cfg.geometry_r:
            for c in cfg.geometry_c:
                t = min(t, geometry_threshold(center, r, c))
    return t


def _replicate_pass1(cfg: ExperimentConfig, N: int, rep: int, center: float | None):
    f = make_field(cfg, N, rep)
    a = f.values
    vals, idx = top_k_flat(a, cfg.top_k)
    row = {
        "N": N,
        "replicate": rep,
        "max": float(vals[0]),
        "argmax_x": int(idx[0] // N),
        "argmax_y": int(idx[0] % N),
        "gap": float(vals[0] - vals[1]),
    }
    if "zeta" in cfg.statistics:
        row["zeta_max_even"] = neighbor_avg_field(f)[1]
    if "pair_max" in cfg.statistics:
        for r in cfg.pair_r:
            row[f"pairmax_r{r:g}"] = pair_max_restricted(f, r, cfg.pair_metric).value
    if "top_m" in cfg.statistics:
        for m in cfg.top_m:
            row[f"S_m{m}"] = sum_top_m(a, m)
    if "brw" in cfg.statistics:
        n = f.n
        if cfg.brw_x:
            for x, c in brw_level_counts(f, cfg.brw_x).items():
                row[f"xi_{x}"] = c
        pyr = block_max_pyramid(a) if cfg.brw_split_r else None
        for r in cfg.brw_split_r:
            if 1 <= r <= n - r:
                row[f"split_r{r}"] = brw_pair_max_split(f, (r, n - r), pyr).value
    if center is not None:
        thr = _min_threshold(cfg, center)
        flat = a.ravel()
        sel = np.flatnonzero(flat >= thr)
        coords = np.column_stack([sel // N, sel % N])
        row.update(_threshold_stats(cfg, N, center, coords, flat[sel]))
    return row, vals, idx


def _pass1_chunk(args):
    cfg, N, reps, center = args
    return [_replicate_pass1(cfg, N, r, center) for r in reps]


def _pass2_chunk(args):
    cfg, N, reps, center = args
    out = []
    for r in reps:
        a = make_field(cfg, N, r).values.ravel()
        sel = np.flatnonzero(a >= _min_threshold(cfg, center))
        out.append(_threshold_stats(cfg, N, center, np.column_stack([sel // N, sel % N]), a[sel]))
    return out


def _chunks(n: int, size: int):
    for s in range(0, n, size):
        yield range(s, min(n, s + size))


def _run_chunks(fn, jobs, workers: int):
    if workers == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


# --- driver -------------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    summary: dict
    columns: list[str]

    def rows_for(self, N: int) -> list[dict]:
        return [r for r in self.rows if r["N"] == N]

    def column(self, N: int, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows_for(N)], dtype=np.float64)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in self.columns])
        return buf.getvalue()


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    cfg.validate()
    workers = cfg.effective_workers()
    chunk = max(1, min(1000, math.ceil(cfg.replicates / (4 * workers))))
    needs_center = bool({"near_max", "geometry"} & set(cfg.statistics))
    rows: list[dict] = []
    per_N: dict[int, dict] = {}
    for N in cfg.N:
        fcenter = formula_center(cfg.kind, N)
        pass1_center = fcenter if (needs_center and cfg.centering == "formula") else None
        jobs = [(cfg, N, rr, pass1_center) for rr in _chunks(cfg.replicates, chunk)]
        res = [t for part in _run_chunks(_pass1_chunk, jobs, workers) for t in part]
        nrows = [t[0] for t in res]
        mx = np.array([r["max"] for r in nrows])
        center = fcenter if cfg.centering == "formula" else float(mx.mean())
        if needs_center and cfg.centering == "empirical":
            thr = _min_threshold(cfg, center)
            missing = []
            for i, (row, vals, idx) in enumerate(res):
                if vals.size == N * N or vals[-1] < thr:
                    sel = vals >= thr
                    coords = np.column_stack([idx[sel] // N, idx[sel] % N])
                    row.update(_threshold_stats(cfg, N, center, coords, vals[sel]))
                else:
                    missing.append(i)
            if missing:
                if cfg.second_pass == "strict":
                    raise TopKInsufficient(
                        f"top_k={cfg.top_k} cannot resolve threshold {thr:.3f} for {len(missing)} replicates at N={N}"
                    )
                log.info("N=%d: regenerating %d/%d replicates for threshold statistics", N, len(missing), len(res))
                jobs2 = [(cfg, N, [missing[j] for j in rr], center) for rr in _chunks(len(missing), chunk)]
                extra = [t for part in _run_chunks(_pass2_chunk, jobs2, workers) for t in part]
                for i, st in zip(missing, extra):
                    nrows[i].update(st)
        rows.extend(nrows)
        per_N[N] = {"center": center, "formula_center": fcenter}
    columns = _columns(cfg, rows)
    result = ExperimentResult(cfg, rows, {}, columns)
    result.summary = summarize_result(result, per_N)
    if cfg.csv:
        _write_text(cfg.csv, result.csv_text())
    if cfg.json:
        _write_text(cfg.json, dumps_json(result.summary))
    return result


def jsonable(obj):
    """Recursively replace non-finite floats (not valid JSON) by None."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    return obj


def dumps_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_text(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _columns(cfg: ExperimentConfig, rows: list[dict]) -> list[str]:
    cols = ["N", "replicate", "max", "argmax_x", "argmax_y", "gap"]
    if "zeta" in cfg.statistics:
        cols.append("zeta_max_even")
    cols += [f"pairmax_r{r:g}" for r in cfg.pair_r] if "pair_max" in cfg.statistics else []
    cols += [f"S_m{m}" for m in cfg.top_m] if "top_m" in cfg.statistics else []
    if "brw" in cfg.statistics:
        cols += [f"xi_{x}" for x in cfg.brw_x]
        present = set().union(*(r.keys() for r in rows)) if rows else set()
        cols += [f"split_r{r}" for r in cfg.brw_split_r if f"split_r{r}" in present]
    cols += [f"A_lam{lam:g}" for lam in cfg.near_lambda] if "near_max" in cfg.statistics else []
    if "geometry" in cfg.statistics:
        cols += [f"geom_r{r:g}_c{c:g}" for r in cfg.geometry_r for c in cfg.geometry_c]
    for r in rows:
        for c in cols:
            r.setdefault(c, math.nan)
    return cols


def _mean_se(x: np.ndarray) -> dict:
    x = np.asarray(x, dtype=np.float64)
    x = x[~np.isnan(x)]
    if x.size == 0:
        return {"mean": None, "se": None, "n": 0}
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else None
    return {"mean": float(x.mean()), "se": se, "n": int(x.size)}


def _binom(hits: np.ndarray) -> dict:
    p = float(np.mean(hits))
    return {"p": p, "se": math.sqrt(p * (1 - p) / hits.size)}


def ols_slope(x, y) -> tuple[float, float]:
    x, y = np.asarray(x, float), np.asarray(y, float)
    X = np.column_stack([np.ones_like(x), x])
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    if x.size > 2:
        s2 = np.sum((y - X @ beta) ** 2) / (x.size - 2)
        se = math.sqrt(s2 * np.linalg.inv(X.T @ X)[1, 1])
    else:
        se = math.nan
    return float(beta[1]), se


def summarize_result(res: ExperimentResult, per_N: dict[int, dict]) -> dict:
    cfg = res.config
    out: dict[str, Any] = {"schema": SCHEMA_VERSION, "name": cfg.name, "config": asdict(cfg), "by_N": {}}
    for N in cfg.N:
        s: dict[str, Any] = dict(per_N[N])
        s["replicates"] = len(res.rows_for(N))
        mx = res.column(N, "max")
        gp = res.column(N, "gap")
        s["max"] = _mean_se(mx)
        s["gap"] = _mean_se(gp)
        if cfg.gap_delta:
            s["gap_cdf"] = {f"{d:g}": _binom(gp <= d) for d in cfg.gap_delta}
        if "zeta" in cfg.statistics:
            s["zeta_max_even"] = _mean_se(res.column(N, "zeta_max_even"))
        if "pair_max" in cfg.statistics:
            s["pair_max"] = {f"{r:g}": _mean_se(res.column(N, f"pairmax_r{r:g}")) for r in cfg.pair_r}
        if "top_m" in cfg.statistics:
            s["top_m"] = {str(m): _mean_se(res.column(N, f"S_m{m}")) for m in cfg.top_m}
        if "brw" in cfg.statistics:
            n = log2_exact(N)
            b: dict[str, Any] = {"n": n, "t_n": constants.t_n(n), "T_n": _mean_se(mx)}
            b["xi"] = {str(x): _mean_se(res.column(N, f"xi_{x}")) for x in cfg.brw_x}
            b["split"] = {
                str(r): _mean_se(res.column(N, f"split_r{r}")) for r in cfg.brw_split_r if f"split_r{r}" in res.columns
            }
            s["brw"] = b
        if "near_max" in cfg.statistics:
            s["near_max"] = {f"{lam:g}": _mean_se(res.column(N, f"A_lam{lam:g}")) for lam in cfg.near_lambda}
        if "geometry" in cfg.statistics:
            g = {}
            for r in cfg.geometry_r:
                g[f"{r:g}"] = {}
                for c in cfg.geometry_c:
                    cell = _binom(res.column(N, f"geom_r{r:g}_c{c:g}") > 0.5)
                    cell["threshold"] = geometry_threshold(s["center"], r, c)
                    g[f"{r:g}"][f"{c:g}"] = cell
            s["geometry"] = g
        tails = {}
        for model in cfg.tail_max:
            tails[f"max/{model}"] = estimate_tail(mx, s["center"], cfg.tail_max_lambda, model, min_samples=1).to_dict()
        for model in cfg.tail_gap:
            tails[f"gap/{model}"] = estimate_tail(gp, 0.0, cfg.tail_gap_lambda, model, min_samples=1).to_dict()
        if tails:
            s["tails"] = tails
        out["by_N"][str(N)] = s
    if len(cfg.N) >= 2:
        means = [out["by_N"][str(N)]["max"]["mean"] for N in cfg.N]
        slope, se = ols_slope(np.log(cfg.N), means)
        out["max_vs_logN"] = {"slope": slope, "se": se, "reference": constants.MN_SLOPE}
    return out


@dataclass
class GeometryReport:
    N: list[int]
    r: list[float]
    c: list[float]
    p: np.ndarray  # (len(N), len(r), len(c))
    se: np.ndarray
    threshold: np.ndarray
    result: ExperimentResult = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "r": self.r,
            "c": self.c,
            "p": self.p.tolist(),
            "se": self.se.tolist(),
            "threshold": self.threshold.tolist(),
        }


def geometry_experiment(cfg: ExperimentConfig) -> GeometryReport:
    """Probability matrix over ``(r, c)`` that some annulus pair is near-maximal."""
    if FieldKind.parse(cfg.kind) is not FieldKind.GFF:
        raise ConfigError("geometry experiment needs a GFF field")
    if not cfg.geometry_r or not cfg.geometry_c:
        raise ConfigError("geometry experiment needs nonempty geometry_r and geometry_c")
    if "geometry" not in cfg.statistics:
        cfg.statistics = [*cfg.statistics, "geometry"]
    res = run_experiment(cfg)
    shape = (len(cfg.N), len(cfg.geometry_r), len(cfg.geometry_c))
    p, se, thr = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    for a, N in enumerate(cfg.N):
        g = res.summary["by_N"][str(N)]["geometry"]
        for b, r in enumerate(cfg.geometry_r):
            for c_, c in enumerate(cfg.geometry_c):
                cell = g[f"{r:g}"][f"{c:g}"]
                p[a, b, c_], se[a, b, c_], thr[a, b, c_] = cell["p"], cell["se"], cell["threshold"]
    return GeometryReport(list(cfg.N), list(cfg.geometry_r), list(cfg.geometry_c), p, se, thr, res)
