"""FastAPI service exposing the library: classification, standard-form
reduction, Witt lifting, lattice geometry, volume constants, counting,
and the experiment sweeps.  The CLI is a thin client of this app."""

from __future__ import annotations

from typing import Any, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, field_validator

from . import serialize as ser
from .errors import QSError
from .ortho import lift_isometry
from .padic import valuation
from .qform import (INF_PLACE, QuadraticFormS, invariants, is_exceptional,
                    is_isotropic, is_split, to_standard)
from .slattice import SLattice, alpha, alpha_i_sq, project_to_real
from .volume import lambda_constants
from .counting import count_N
from . import experiments

app = FastAPI(title="qscount", version="0.1.0")


class FormDoc(BaseModel):
    n: int = Field(ge=2, le=8)
    places: list
    irrational: bool = False


class ClassifyRequest(BaseModel):
    form: FormDoc


class StandardizeRequest(BaseModel):
    form: FormDoc
    p: int
    prec: int = 40


class WittLiftRequest(BaseModel):
    form: FormDoc
    p: int
    target: list
    prec: int = 20


class LatticeDoc(BaseModel):
    S: list[int]
    basis: list


class AlphaRequest(BaseModel):
    lattice: LatticeDoc
    i: Optional[int] = None


class ProjectRequest(BaseModel):
    lattice: LatticeDoc


class LambdaRequest(BaseModel):
    form: FormDoc
    region: dict = Field(default_factory=dict)
    samples: int = Field(default=200_000, ge=1000)
    seed: int


class CountRequest(BaseModel):
    form: FormDoc
    interval: dict
    region: dict = Field(default_factory=dict)
    T: dict
    workers: int = Field(default=1, ge=1, le=64)


class ExperimentRequest(BaseModel):
    config: dict
    seed: int = 0
    workers: int = Field(default=1, ge=1, le=64)

    @field_validator("config")
    @classmethod
    def _has_times(cls, v):
        if "times" not in v:
            raise ValueError("config requires a 'times' sweep list")
        return v


def _form(doc: FormDoc) -> QuadraticFormS:
    try:
        return ser.form_from_json(doc.model_dump())
    except QSError as exc:
        raise HTTPException(422, str(exc))


@app.get("/healthz")
def healthz():
    return {"ok": True, "version": app.version}


@app.post("/classify")
def classify(req: ClassifyRequest):
    q = _form(req.form)
    out: dict[str, Any] = {"n": q.n, "places": {}}
    for p in [INF_PLACE] + q.finite_primes:
        f = q.at(p)
        entry: dict[str, Any] = {"isotropic": is_isotropic(f), "split": is_split(f)}
        if p == INF_PLACE:
            entry["signature"] = list(f.signature())
        else:
            inv = invariants(f)
            entry["invariants"] = {
                "rank": inv.rank,
                "disc_parity": inv.disc_parity,
                "disc_residue": inv.disc_residue,
                "hasse": inv.hasse,
            }
        out["places"][str(p)] = entry
    out["exceptional"] = is_exceptional(q)
    out["irrational_declared"] = q.irrational
    return out


@app.post("/standardize")
def standardize(req: StandardizeRequest):
    q = _form(req.form)
    try:
        coeffs, g, warning = to_standard(q.at(req.p), N=req.prec)
    except QSError as exc:
        raise HTTPException(422, str(exc))
    return {
        "coeffs": [ser.dump_rational(c) for c in coeffs],
        "g": [[ser.dump_rational(c) for c in row] for row in g],
        "warning_no_nonsquare_ratio": warning,
        "prec": req.prec,
    }


@app.post("/witt-lift")
def witt_lift(req: WittLiftRequest):
    q = _form(req.form)
    target = [ser.parse_rational(c) if not isinstance(c, dict)
              else ser.parse_padic(c, req.p) for c in req.target]
    try:
        elem = lift_isometry(q.at(req.p), target, N=req.prec)
    except QSError as exc:
        raise HTTPException(422, str(exc))
    checks = elem.verify()
    return {"matrix": [[int(c) for c in row] for row in elem.matrix],
            "mod": f"{req.p}^{req.prec}",
            "verification": checks}


@app.post("/alpha")
def alpha_endpoint(req: AlphaRequest):
    try:
        lat = ser.lattice_from_json(req.lattice.model_dump())
        if req.i is None:
            val = alpha(lat)
            sq = None
        else:
            sq = alpha_i_sq(lat, req.i)
            val = float(sq) ** 0.5
    except QSError as exc:
        raise HTTPException(422, str(exc))
    return {"alpha": val, "alpha_sq": ser.dump_rational(sq) if sq is not None else None,
            "i": req.i}


@app.post("/project")
def project(req: ProjectRequest):
    try:
        lat = ser.lattice_from_json(req.lattice.model_dump())
        P = project_to_real(lat)
    except QSError as exc:
        raise HTTPException(422, str(exc))
    return {"basis": [[ser.dump_rational(c) for c in row] for row in P]}


@app.post("/lambda")
def lambda_endpoint(req: LambdaRequest):
    q = _form(req.form)
    try:
        region = ser.region_from_json(req.region, q.n)
        lam = lambda_constants(q, region, req.samples, req.seed)
    except QSError as exc:
        raise HTTPException(422, str(exc))
    return {"lambda_p": {str(p): ser.dump_rational(v) for p, v in lam.finite.items()},
            "lambda_inf": {"value": lam.inf_value, "stderr": lam.inf_stderr},
            "product": lam.product}


@app.post("/count")
def count(req: CountRequest):
    q = _form(req.form)
    try:
        interval = ser.interval_from_json(req.interval)
        region = ser.region_from_json(req.region, q.n)
        T = ser.time_from_json(req.T)
        res = count_N(q, interval, region, T, workers=req.workers)
    except QSError as exc:
        raise HTTPException(422, str(exc))
    return {"N": res.count, "undecided": res.undecided,
            "wall_ms": res.wall_ms,
            "plan": {"D": res.plan.D, "box": res.plan.box, "fast": res.plan.fast,
                     "modulus": res.plan.total_modulus(), "notes": res.plan.notes}}


@app.post("/experiment/{kind}")
def experiment(kind: str, req: ExperimentRequest):
    try:
        code, artifacts = experiments.run(kind, req.config, req.seed, req.workers)
    except QSError as exc:
        raise HTTPException(422, str(exc))
    artifacts["exit_code"] = code
    return artifacts
