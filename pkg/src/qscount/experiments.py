"""Experiment orchestration: T-sweeps for counting and volume asymptotics,
the ternary growth construction, CSV emission and reproducibility manifests.

Every run produces a manifest (inputs hash, seed, version, workers) next
to its results; reruns with the same manifest are byte-identical.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import time as _time
from dataclasses import dataclass, field
from fractions import Fraction

from . import __version__
from .counting import count_N, mapped_null_vectors, null_vectors, perturb_beta
from .errors import QSError
from .qform import INF_PLACE, QuadraticFormS, Region, SInterval, STime
from .volume import lambda_constants, volume_V

CSV_COLUMNS = ["T_inf", "N", "V", "lambda_pred", "ratio", "undecided", "wall_ms", "error"]


def csv_columns(primes):
    cols = ["T_inf"] + [f"T_{p}" for p in primes]
    return cols + CSV_COLUMNS[1:]


@dataclass
class CountReport:
    time: STime
    N: int | None = None
    V: float | None = None
    lambda_pred: float | None = None
    undecided: int | None = None
    wall_ms: float | None = None
    error: str = ""

    @property
    def ratio(self):
        if self.N is None or not self.lambda_pred:
            return None
        return self.N / self.lambda_pred

    def row(self, primes):
        vals = [self.time.t_inf] + [float(self.time.at(p)) for p in primes]
        vals += [self.N, self.V, self.lambda_pred, self.ratio,
                 self.undecided, self.wall_ms, self.error]
        return vals


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def render_csv(columns, rows) -> str:
    """Fixed column order; RFC-style quoting for the error field."""
    buf = io.StringIO()
    buf.write(",".join(columns) + "\r\n")
    for row in rows:
        cells = []
        for x in row:
            s = _fmt(x)
            if any(c in s for c in ",\"\n"):
                s = '"' + s.replace('"', '""') + '"'
            cells.append(s)
        buf.write(",".join(cells) + "\r\n")
    return buf.getvalue()


def manifest_for(kind: str, config: dict, seed, workers: int) -> dict:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return {
        "kind": kind,
        "inputs_sha256": hashlib.sha256(canon.encode()).hexdigest(),
        "seed": seed,
        "workers": workers,
        "version": __version__,
    }


# -- sweeps -------------------------------------------------------------------

def asymptotics_experiment(q: QuadraticFormS, interval: SInterval, region: Region,
                           times, samples: int, seed: int, workers: int = 1,
                           compute_volume: bool = True, lambda_T0: float = 16.0,
                           include_timing: bool = False):
    """One CountReport per S-time: N, V, the prediction lambda*|I|*||T||^(n-2),
    and their ratio.  Partial failures mark the row, they do not abort.

    Timing is opt-in: with include_timing=False the wall_ms column stays
    empty so reruns with the same manifest are byte-identical."""
    lam = lambda_constants(q, region, samples, seed, T0=lambda_T0)
    reports = []
    for idx, T in enumerate(times):
        rep = CountReport(time=T)
        try:
            res = count_N(q, interval, region, T, workers=workers)
            rep.N = res.count
            rep.undecided = res.undecided
            if include_timing:
                rep.wall_ms = round(res.wall_ms, 3)
            rep.lambda_pred = (lam.product * interval.measure()
                               * T.norm() ** (q.n - 2))
            if compute_volume:
                v, _ = volume_V(q, interval, region, T, samples, seed + 1000 + idx)
                rep.V = v
        except QSError as exc:
            rep.error = f"{type(exc).__name__}: {exc}"
        reports.append(rep)
    return reports, lam


def volume_sweep(q: QuadraticFormS, interval: SInterval, region: Region,
                 times, samples: int, seed: int, lambda_T0: float = 16.0):
    """V / (lambda |I| ||T||^(n-2)) along a sweep; stderr columns included."""
    lam = lambda_constants(q, region, samples, seed, T0=lambda_T0)
    rows = []
    for idx, T in enumerate(times):
        pred = lam.product * interval.measure() * T.norm() ** (q.n - 2)
        try:
            v, err = volume_V(q, interval, region, T, samples, seed + 1000 + idx)
            rows.append({"time": T, "V": v, "stderr": err, "pred": pred,
                         "ratio": v / pred if pred else None, "error": ""})
        except QSError as exc:
            rows.append({"time": T, "V": None, "stderr": None, "pred": pred,
                         "ratio": None, "error": f"{type(exc).__name__}: {exc}"})
    return rows, lam


def counterexample_experiment(alpha, epsilon: float, times, workers: int = 1,
                              unit_choices=None, include_timing: bool = False):
    """For each T: build the perturbed ternary form, count N, and compare both
    N and the certified floor (constructed null vectors) against
    ||T|| (log ||T||)^(1-eps).  Natural logarithm.
    """
    if not 0 < epsilon < 1:
        raise QSError("epsilon must be in (0, 1)")
    rows = []
    for T in times:
        t0 = _time.perf_counter()
        pert = perturb_beta(alpha, T, unit_choices=unit_choices)
        q = pert.form()
        # endpoints with denominator 7: the beta^2 denominators are 2-5-smooth
        # for p-power times, so scaled form values can never land on them
        interval = SInterval((-1 / 7, 8 / 7), {p: (0, 0) for p in T.primes})
        region = Region.unit_balls(3, T.primes)
        family = mapped_null_vectors(alpha, T)
        floor = len(family)
        res = count_N(q, interval, region, T, workers=workers)
        tnorm = T.norm()
        bound = tnorm * math.log(tnorm) ** (1 - epsilon)
        rows.append({
            "time": T,
            "floor_certified": floor,
            "N": res.count,
            "undecided": res.undecided,
            "bound": bound,
            "floor_exceeds": floor > bound,
            "count_exceeds": res.count > bound,
            "wall_ms": round((_time.perf_counter() - t0) * 1e3, 3) if include_timing else None,
        })
    return rows


def growth_fit(rows):
    """Least-squares slope of log N against log||T|| + (1-eps)*log log||T||
    is reported by the caller; here: slope of log N vs log ||T||."""
    xs = [math.log(r["time"].norm()) for r in rows]
    ys = [math.log(r["N"]) for r in rows if r["N"] > 0]
    if len(ys) != len(xs) or len(xs) < 2:
        raise QSError("need at least two positive counts")
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / sxx


# -- the run() entry point ------------------------------------------------------

def run(kind: str, config: dict, seed, workers: int):
    """Dispatch one experiment; returns (exit_code, artifacts).

    artifacts: {"csv": str, "manifest": dict, "rows": list}.  Row-level
    failures are error markers in the CSV, not aborts; schema problems
    raise QSError before any work is done.
    """
    from . import serialize as ser

    man = manifest_for(kind, config, seed, workers)
    if kind == "asymptotics":
        q = ser.form_from_json(config["form"])
        interval = ser.interval_from_json(config["interval"])
        region = ser.region_from_json(config.get("region", {}), q.n)
        times = [ser.time_from_json(t) for t in config["times"]]
        samples = int(config.get("samples", 200_000))
        reports, lam = asymptotics_experiment(
            q, interval, region, times, samples, seed, workers,
            compute_volume=bool(config.get("compute_volume", True)),
            lambda_T0=float(config.get("lambda_T0", 16.0)),
            include_timing=bool(config.get("timing", False)))
        primes = q.finite_primes
        csv = render_csv(csv_columns(primes), [r.row(primes) for r in reports])
        rows = [dict(zip(csv_columns(primes), r.row(primes))) for r in reports]
        extra = {"lambda_p": {str(p): str(v) for p, v in lam.finite.items()},
                 "lambda_inf": {"value": lam.inf_value, "stderr": lam.inf_stderr},
                 "product": lam.product}
        code = 1 if any(r.error for r in reports) else 0
        return code, {"csv": csv, "manifest": man, "rows": rows, "lambda": extra}
    if kind == "volume-sweep":
        q = ser.form_from_json(config["form"])
        interval = ser.interval_from_json(config["interval"])
        region = ser.region_from_json(config.get("region", {}), q.n)
        times = [ser.time_from_json(t) for t in config["times"]]
        samples = int(config.get("samples", 200_000))
        rows, lam = volume_sweep(q, interval, region, times, samples, seed,
                                 lambda_T0=float(config.get("lambda_T0", 16.0)))
        primes = q.finite_primes
        cols = ["T_inf"] + [f"T_{p}" for p in primes] + ["V", "stderr", "pred", "ratio", "error"]
        table = []
        for r in rows:
            T = r["time"]
            table.append([T.t_inf] + [float(T.at(p)) for p in primes]
                         + [r["V"], r["stderr"], r["pred"], r["ratio"], r["error"]])
        csv = render_csv(cols, table)
        code = 1 if any(r["error"] for r in rows) else 0
        return code, {"csv": csv, "manifest": man,
                      "rows": [dict(zip(cols, t)) for t in table]}
    if kind == "counterexample":
        alpha = ser.parse_rational(config.get("alpha", 1))
        epsilon = float(config.get("epsilon", 0.1))
        times = [ser.time_from_json(t) for t in config["times"]]
        rows = counterexample_experiment(alpha, epsilon, times, workers=workers,
                                         unit_choices=config.get("unit_choices"),
                                         include_timing=bool(config.get("timing", False)))
        primes = times[0].primes if times else []
        cols = (["T_inf"] + [f"T_{p}" for p in primes]
                + ["floor_certified", "N", "undecided", "bound",
                   "floor_exceeds", "count_exceeds", "wall_ms"])
        table = []
        for r in rows:
            T = r["time"]
            table.append([T.t_inf] + [float(T.at(p)) for p in primes]
                         + [r["floor_certified"], r["N"], r["undecided"],
                            r["bound"], r["floor_exceeds"], r["count_exceeds"],
                            r["wall_ms"]])
        csv = render_csv(cols, table)
        return 0, {"csv": csv, "manifest": man,
                   "rows": [dict(zip(cols, t)) for t in table]}
    raise QSError(f"unknown experiment kind {kind!r}")
