"""JSON wire formats: rationals as "num/den" strings, p-adic literals as
{"val": v, "digits": [d0, d1, ...]} (base-p, little-endian), and the
form/lattice/region/interval/time documents used by the CLI and service."""

from __future__ import annotations

from fractions import Fraction

from .errors import QSError
from .padic import PadicNumber
from .qform import (INF_PLACE, QuadraticFormP, QuadraticFormS, Region,
                    SInterval, STime)
from .slattice import SLattice


def parse_rational(x) -> Fraction:
    if isinstance(x, str):
        if "/" in x:
            num, den = x.split("/")
            return Fraction(int(num), int(den))
        return Fraction(x)
    if isinstance(x, bool):
        raise QSError("booleans are not numbers")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    raise QSError(f"cannot parse rational from {x!r}")


def dump_rational(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)


def parse_padic(obj, p: int) -> PadicNumber:
    """{"val": v, "digits": [...]} little-endian base p."""
    digits = obj["digits"]
    unit = 0
    for d in reversed(digits):
        if not 0 <= int(d) < p:
            raise QSError("digit out of range")
        unit = unit * p + int(d)
    if unit % p == 0:
        raise QSError("leading digit must be nonzero (unit part)")
    return PadicNumber(p, int(obj["val"]), unit, len(digits))


def dump_padic(x: PadicNumber, count: int | None = None):
    return {"val": x.val, "digits": x.digits(count or x.prec)}


def _parse_entry(x, p):
    if isinstance(x, dict):
        if p == INF_PLACE:
            raise QSError("p-adic literals are for finite places")
        return parse_padic(x, p)
    if p == INF_PLACE and isinstance(x, float):
        return x
    return parse_rational(x)


def form_from_json(doc) -> QuadraticFormS:
    places = {}
    for entry in doc["places"]:
        p = entry["p"]
        p = INF_PLACE if p in (INF_PLACE, "oo", "infinity") else int(p)
        gram = [[_parse_entry(x, p) for x in row] for row in entry["gram"]]
        places[p] = QuadraticFormP(p, gram)
    return QuadraticFormS(places, irrational=bool(doc.get("irrational", False)))


def form_to_json(q: QuadraticFormS):
    places = []
    for p in [INF_PLACE] + q.finite_primes:
        gram = q.at(p).gram
        if p == INF_PLACE:
            rows = [[float(c) for c in row] for row in gram]
        else:
            rows = [[dump_rational(c) for c in row] for row in gram]
        places.append({"p": p, "gram": rows})
    return {"n": q.n, "places": places, "irrational": q.irrational}


def lattice_from_json(doc) -> SLattice:
    basis = [[parse_rational(c) for c in row] for row in doc["basis"]]
    return SLattice(basis, [int(p) for p in doc["S"]])


def lattice_to_json(lat: SLattice):
    return {"S": list(lat.primes),
            "basis": [[dump_rational(c) for c in row] for row in lat.basis]}


def interval_from_json(doc) -> SInterval:
    real = doc[INF_PLACE]
    finite = {}
    for key, spec in doc.items():
        if key == INF_PLACE:
            continue
        p = int(key)
        center = spec["center"]
        center = parse_padic(center, p) if isinstance(center, dict) else parse_rational(center)
        finite[p] = (center, int(spec["scale"]))
    return SInterval((float(real[0]), float(real[1])), finite)


def interval_to_json(iv: SInterval):
    out = {INF_PLACE: [float(iv.real[0]), float(iv.real[1])]}
    for p, (center, scale) in iv.finite.items():
        c = dump_padic(center) if isinstance(center, PadicNumber) else dump_rational(center)
        out[str(p)] = {"center": c, "scale": scale}
    return out


def region_from_json(doc, n: int) -> Region:
    inf_spec = doc.get(INF_PLACE, {"kind": "ball", "radius": 1.0})
    if inf_spec["kind"] != "ball":
        raise QSError("JSON regions support balls at the real place")
    finite = {}
    for key, spec in doc.items():
        if key == INF_PLACE:
            continue
        p = int(key)
        if spec["kind"] == "ball":
            finite[p] = ("ball", int(spec["exp"]))
        elif spec["kind"] == "table":
            table = {tuple(int(t) for t in cls.split(",")): int(z)
                     for cls, z in spec["rho"].items()}
            finite[p] = ("table", int(spec["k"]), table)
        else:
            raise QSError("unknown region kind")
    return Region(n, inf=("ball", float(inf_spec["radius"])), finite=finite)


def region_to_json(region: Region):
    if region.inf[0] != "ball":
        raise QSError("only ball regions serialize at the real place")
    out = {INF_PLACE: {"kind": "ball", "radius": region.inf[1]}}
    for p, spec in region.finite.items():
        if spec[0] == "ball":
            out[str(p)] = {"kind": "ball", "exp": spec[1]}
        else:
            _, k, table = spec
            out[str(p)] = {"kind": "table", "k": k,
                           "rho": {",".join(map(str, cls)): z for cls, z in table.items()}}
    return out


def time_from_json(doc) -> STime:
    t_inf = float(doc[INF_PLACE])
    exps = {}
    for key, val in doc.items():
        if key == INF_PLACE:
            continue
        p = int(key)
        exps[p] = _exponent_of(p, val)
    return STime(t_inf, exps)


def _exponent_of(p, val):
    """Accept either the p-power value (9 for p=3) or {"exp": e}."""
    if isinstance(val, dict):
        return int(val["exp"])
    v = Fraction(val)
    e = 0
    while v % p == 0 and v != 1:
        v /= p
        e += 1
    while v.denominator % p == 0:
        v *= p
        e -= 1
    if v != 1:
        raise QSError(f"T_{p} = {val} is not a power of {p}")
    return e


def time_to_json(t: STime):
    out = {INF_PLACE: t.t_inf}
    for p, e in t.exponents.items():
        out[str(p)] = int(p ** e) if e >= 0 else {"exp": e}
    return out


def time_from_cli(spec: str) -> STime:
    """Parse "inf=200,3=9,5=5" (finite entries are the T_p values)."""
    doc = {}
    for part in spec.split(","):
        key, val = part.split("=")
        key = key.strip()
        doc[key if key == INF_PLACE else key] = float(val) if key == INF_PLACE else int(val)
    return time_from_json(doc)
