"""Thin command-line client for the qscount service.

By default the requests run against an in-process instance of the app;
pass --server URL to talk to a remote deployment instead.  Monte-Carlo
commands require --seed.  QSCOUNT_WORKERS sets the default worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import httpx

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_ROWS = 1


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # in-process: drive the ASGI app synchronously
    from starlette.testclient import TestClient

    from .service import app
    return TestClient(app)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    except json.JSONDecodeError as exc:
        print(f"{path} is not valid JSON: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _post(client, url, payload):
    resp = client.post(url, json=payload)
    if resp.status_code == 422:
        print(f"invalid request: {resp.text}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    resp.raise_for_status()
    return resp.json()


def _emit(doc, out=None):
    text = json.dumps(doc, indent=2, sort_keys=True, default=str)
    if out:
        try:
            with open(out, "w") as fh:
                fh.write(text + "\n")
        except OSError as exc:
            print(f"cannot write {out}: {exc}", file=sys.stderr)
            raise SystemExit(EXIT_IO)
    else:
        print(text)


def build_parser():
    ap = argparse.ArgumentParser(prog="qscount")
    ap.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    default_workers = int(os.environ.get("QSCOUNT_WORKERS", "1"))
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", help="per-place invariants and the exceptional flag")
    c.add_argument("--form", required=True)
    c.add_argument("--out")

    s = sub.add_parser("standardize", help="reduce to x1*xn + a2 x2^2 + ... at a place")
    s.add_argument("--form", required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--prec", type=int, default=40)
    s.add_argument("--out")

    w = sub.add_parser("witt-lift", help="p-integral isometry with prescribed first column")
    w.add_argument("--form", required=True)
    w.add_argument("--p", type=int, required=True)
    w.add_argument("--target", required=True, help="JSON file with the target vector")
    w.add_argument("--prec", type=int, default=20)
    w.add_argument("--out")

    a = sub.add_parser("alpha", help="alpha_i of an S-lattice")
    a.add_argument("--lattice", required=True)
    a.add_argument("--i", type=int, default=None)
    a.add_argument("--out")

    pr = sub.add_parser("project", help="covolume-1 real lattice of a unimodular S-lattice")
    pr.add_argument("--lattice", required=True)
    pr.add_argument("--out")

    lam = sub.add_parser("lambda", help="volume constants lambda_p and lambda_inf")
    lam.add_argument("--form", required=True)
    lam.add_argument("--region", default=None)
    lam.add_argument("--samples", type=float, default=2e5)
    lam.add_argument("--seed", type=int, required=True)
    lam.add_argument("--out")

    ct = sub.add_parser("count", help="count S-integral vectors in a dilated region")
    ct.add_argument("--form", required=True)
    ct.add_argument("--interval", required=True)
    ct.add_argument("--region", default=None)
    ct.add_argument("--T", required=True, help='e.g. "inf=200,3=9,5=5"')
    ct.add_argument("--workers", type=int, default=default_workers)
    ct.add_argument("--out")

    ex = sub.add_parser("experiment", help="run a sweep and emit CSV + manifest")
    ex.add_argument("kind", choices=["asymptotics", "counterexample", "volume-sweep"])
    ex.add_argument("--sweep", required=True, help="JSON sweep configuration")
    ex.add_argument("--out", required=True, help="CSV output path")
    ex.add_argument("--seed", type=int, required=True)
    ex.add_argument("--workers", type=int, default=default_workers)

    sv = sub.add_parser("serve", help="run the HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn
        from .service import app
        uvicorn.run(app, host=args.host, port=args.port)
        return 0
    with _client(args.server) as client:
        if args.command == "classify":
            doc = _post(client, "/classify", {"form": _load_json(args.form)})
            _emit(doc, args.out)
        elif args.command == "standardize":
            doc = _post(client, "/standardize", {"form": _load_json(args.form),
                                                 "p": args.p, "prec": args.prec})
            _emit(doc, args.out)
        elif args.command == "witt-lift":
            doc = _post(client, "/witt-lift", {"form": _load_json(args.form),
                                               "p": args.p,
                                               "target": _load_json(args.target),
                                               "prec": args.prec})
            _emit(doc, args.out)
        elif args.command == "alpha":
            doc = _post(client, "/alpha", {"lattice": _load_json(args.lattice), "i": args.i})
            _emit(doc, args.out)
        elif args.command == "project":
            doc = _post(client, "/project", {"lattice": _load_json(args.lattice)})
            _emit(doc, args.out)
        elif args.command == "lambda":
            payload = {"form": _load_json(args.form),
                       "region": _load_json(args.region) if args.region else {},
                       "samples": int(args.samples), "seed": args.seed}
            doc = _post(client, "/lambda", payload)
            _emit(doc, args.out)
        elif args.command == "count":
            from . import serialize as ser
            T = ser.time_to_json(ser.time_from_cli(args.T))
            payload = {"form": _load_json(args.form),
                       "interval": _load_json(args.interval),
                       "region": _load_json(args.region) if args.region else {},
                       "T": T, "workers": args.workers}
            doc = _post(client, "/count", payload)
            _emit(doc, args.out)
        elif args.command == "experiment":
            config = _load_json(args.sweep)
            doc = _post(client, f"/experiment/{args.kind}",
                        {"config": config, "seed": args.seed, "workers": args.workers})
            try:
                with open(args.out, "w", newline="") as fh:
                    fh.write(doc["csv"])
                with open(args.out + ".manifest.json", "w") as fh:
                    json.dump(doc["manifest"], fh, indent=2, sort_keys=True)
                    fh.write("\n")
            except OSError as exc:
                print(f"cannot write outputs: {exc}", file=sys.stderr)
                return EXIT_IO
            print(f"wrote {args.out} and {args.out}.manifest.json")
            return doc.get("exit_code", 0)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
