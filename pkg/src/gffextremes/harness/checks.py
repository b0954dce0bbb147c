"""Named recipes and the pass/fail checks applied to their summaries.

Recipes certify monotone trends and finite-N magnitudes at fixed sizes; none
of them certifies a limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.stats import norm

from .. import constants
from .experiment import ExperimentConfig, ExperimentResult, ols_slope, run_experiment

RECIPES = ("thm1.1", "thm1.2", "thm1.3", "thm1.4", "mn-slope", "brw")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def recipe_text(name: str) -> str:
    if name not in RECIPES:
        raise KeyError(f"unknown recipe {name!r}; available: {', '.join(RECIPES)}")
    return resources.files(__package__).joinpath("recipes", f"{name}.cfg").read_text()


def load_recipe(name: str, overrides: dict | None = None) -> ExperimentConfig:
    return ExperimentConfig.parse(recipe_text(name), overrides)


# --- individual checks ----------------------------------------------------------


def check_mn_slope(res: ExperimentResult, rel_tol: float = 0.10) -> list[Check]:
    s = res.summary["max_vs_logN"]
    rel = abs(s["slope"] / constants.MN_SLOPE - 1)
    return [Check("mn-slope", rel <= rel_tol, f"slope={s['slope']:.4f} (se {s['se']:.4f}) vs {constants.MN_SLOPE:.4f}, rel err {rel:.3f} <= {rel_tol}")]


def check_tail_exponent(res: ExperimentResult, rel_tol: float = 0.25) -> list[Check]:
    out = []
    for N, s in res.summary["by_N"].items():
        t = s["tails"]["max/polyexp"]
        a = t["exponent"]
        ok = not t["degenerate"] and a is not None and abs(a / constants.RIGHT_TAIL_EXPONENT - 1) <= rel_tol
        desc = "degenerate" if a is None else f"a={a:.4f} CI=[{t['ci'][0]:.3f},{t['ci'][1]:.3f}] vs {constants.RIGHT_TAIL_EXPONENT:.4f}"
        out.append(Check(f"tail-exponent N={N}", ok, f"{desc}, tol {rel_tol:.0%}"))
    return out


def check_gap(res: ExperimentResult, small: float = 0.1, big: float = 0.5, bound: float = 0.15) -> list[Check]:
    out = []
    for N, s in res.summary["by_N"].items():
        g, e = s["tails"]["gap/gaussian"], s["tails"]["gap/exponential"]
        ok = (
            not g["degenerate"]
            and not e["degenerate"]
            and g["weighted_r2"] > e["weighted_r2"]
            and g["exponent"] > 0
        )
        out.append(
            Check(
                f"gap-gaussian-fit N={N}",
                ok,
                f"R2 gaussian={g['weighted_r2']} vs exponential={e['weighted_r2']}, a={g['exponent']}",
            )
        )
        cdf = s["gap_cdf"]
        ds = sorted(cdf, key=float)
        ps = [cdf[d]["p"] for d in ds]
        mono = all(a <= b for a, b in zip(ps, ps[1:]))
        p_s, p_b = cdf[f"{small:g}"]["p"], cdf[f"{big:g}"]["p"]
        out.append(
            Check(
                f"gap-lower N={N}",
                mono and p_s < bound and p_s < p_b,
                f"P(gap<={small:g})={p_s:.4f} < {bound}, < P(gap<={big:g})={p_b:.4f}, cdf nondecreasing={mono}",
            )
        )
    return out


def near_max_envelope(lams, means) -> dict:
    """Linear fit of ``log E|A_lambda|`` with the tightest parallel envelope around it."""
    lams = np.asarray(lams, float)
    y = np.log(np.asarray(means, float))
    slope, se = ols_slope(lams, y)
    icpt = float(np.mean(y) - slope * np.mean(lams))
    resid = y - (icpt + slope * lams)
    return {
        "slope": slope,
        "slope_se": se,
        "intercept": icpt,
        "halfwidth": float(np.abs(resid).max()),
        "rise": float(y[-1] - y[0]),
        "increasing": bool(np.all(np.diff(y) > 0)),
    }


def check_near_max(res: ExperimentResult) -> list[Check]:
    out = []
    for N, s in res.summary["by_N"].items():
        nm = s["near_max"]
        lams = sorted(nm, key=float)
        means = [nm[l]["mean"] for l in lams]
        if min(means) <= 0:
            out.append(Check(f"near-max N={N}", False, f"zero mean count in {means}"))
            continue
        env = near_max_envelope([float(l) for l in lams], means)
        ok = env["increasing"] and env["slope"] > 0 and env["halfwidth"] < env["rise"]
        out.append(
            Check(
                f"near-max N={N}",
                ok,
                f"log-mean increasing={env['increasing']}, slope={env['slope']:.4f}, envelope halfwidth {env['halfwidth']:.4f} < rise {env['rise']:.4f}",
            )
        )
    return out


def trend_nonincreasing(p, se, k_sigma: float = 2.0, allowed: int = 1) -> tuple[bool, list]:
    """Nonincreasing up to ``allowed`` rises each within ``k_sigma`` combined SEs."""
    rises = []
    for i in range(len(p) - 1):
        d = p[i + 1] - p[i]
        if d > 0:
            rises.append((i, d, math.hypot(se[i], se[i + 1])))
    ok = len(rises) <= allowed and all(d <= k_sigma * s for _, d, s in rises)
    return ok, rises


def check_geometry(res: ExperimentResult) -> list[Check]:
    out = []
    cfg = res.config
    for N, s in res.summary["by_N"].items():
        g = s["geometry"]
        for c in cfg.geometry_c:
            rs = sorted(cfg.geometry_r)
            p = [g[f"{r:g}"][f"{c:g}"]["p"] for r in rs]
            se = [g[f"{r:g}"][f"{c:g}"]["se"] for r in rs]
            ok, rises = trend_nonincreasing(p, se)
            ptxt = ", ".join(f"r={r:g}:{q:.4f}" for r, q in zip(rs, p))
            out.append(Check(f"geometry-trend N={N} c={c:g}", ok, f"{ptxt}; rises={[(round(d, 4), round(e, 4)) for _, d, e in rises]}"))
    return out


def xi_envelope(n: int, x) -> np.ndarray:
    x = np.asarray(x, float)
    return n * np.exp(constants.C_STAR * x - x * x / (2 * n))


def xi_mean_exact(n: int, x) -> np.ndarray:
    """``4^n P(G in [t_n - x - 1, t_n - x])`` for ``G ~ N(0, n)``."""
    x = np.asarray(x, float)
    t = constants.t_n(n)
    sd = math.sqrt(n)
    return 4.0**n * (norm.sf((t - x - 1) / sd) - norm.sf((t - x) / sd))


def check_brw(res: ExperimentResult, tol: float = 1.0) -> list[Check]:
    out = []
    cfg = res.config
    by = res.summary["by_N"]
    Ns = sorted(int(N) for N in by)
    dev = {}
    for N in Ns:
        b = by[str(N)]["brw"]
        dev[b["n"]] = b["T_n"]["mean"] - b["t_n"]
    worst = max(abs(d) for d in dev.values())
    out.append(Check("brw-max-centering", worst <= tol, "mean T_n - t_n: " + ", ".join(f"n={n}:{d:+.3f}" for n, d in dev.items()) + f"; |.| <= {tol}"))
    if cfg.brw_x:
        xs = np.array(sorted(cfg.brw_x), float)
        # one C for every (n, x): the smallest constant putting all means under the envelope
        ratios = {}
        for N in Ns:
            b = by[str(N)]["brw"]
            m = np.array([b["xi"][str(int(x))]["mean"] for x in xs])
            ratios[b["n"]] = m / xi_envelope(b["n"], xs)
        C = float(max(r.max() for r in ratios.values()))
        drift = {n: float(r.max()) for n, r in ratios.items()}
        out.append(
            Check(
                "brw-xi-envelope",
                math.isfinite(C) and 0 < C and all(np.all(r <= C) for r in ratios.values()),
                f"single C={C:.4f}; max ratio mean/(n e^(c*x - x^2/2n)) by n: "
                + ", ".join(f"{n}:{d:.4f}" for n, d in drift.items()),
            )
        )
        zmax = 0.0
        for N in Ns:
            b = by[str(N)]["brw"]
            exact = xi_mean_exact(b["n"], xs)
            for x, e in zip(xs, exact):
                d = b["xi"][str(int(x))]
                if d["se"]:
                    zmax = max(zmax, abs(d["mean"] - e) / d["se"])
        out.append(Check("brw-xi-exact-mean", zmax <= 4.0, f"max |mean - 4^n P(window)| / SE = {zmax:.3f} <= 4"))
    return out


CHECKS = {
    "mn-slope": check_mn_slope,
    "thm1.4": check_tail_exponent,
    "thm1.3": check_gap,
    "thm1.2": check_near_max,
    "thm1.1": check_geometry,
    "brw": check_brw,
}


def evaluate(res: ExperimentResult) -> list[Check]:
    name = res.config.check
    if not name:
        return []
    if name not in CHECKS:
        raise KeyError(f"unknown check {name!r}")
    return CHECKS[name](res)


def run_recipe(name: str, overrides: dict | None = None) -> tuple[ExperimentResult, list[Check]]:
    res = run_experiment(load_recipe(name, overrides))
    return res, evaluate(res)
