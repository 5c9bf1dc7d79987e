"""mapfluct command line: cumulant, whfactor and verify.

Exit codes: 0 success/all checks pass, 1 some check failed, 2 invalid input,
3 domain error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import cumulant as cu
from . import ladder as la
from . import suites
from .errors import (DomainViolation, MapfluctError, ModelValidationError, NoDensity, NoFiniteRoot,
                     SchemaError, ShapeViolation)
from .model import BUILTIN_NAMES, ValidatedModel, load_builtin, load_model_file

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_DOMAIN = 0, 1, 2, 3
DEFAULT_SEED = 7

SUITE_DEFAULT_MODEL = {
    "structure": "MODEL-A", "wh": "MODEL-A", "independence": "MODEL-D",
    "rogozin": "MODEL-B", "kendall": "MODEL-A", "ballot": "MODEL-C",
}


@dataclass
class RunReport:
    command: str
    model: str
    parameters: dict
    results: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    wall_clock: float = 0.0
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_json(self) -> str:
        d = asdict(self)
        d["passed"] = self.passed
        return json.dumps(d, indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return _matrix_json(x)
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    raise TypeError(type(x))


def _matrix_json(M):
    M = np.asarray(M)
    if np.iscomplexobj(M) and np.max(np.abs(M.imag)) > 0:
        return {"re": M.real.tolist(), "im": M.imag.tolist()}
    return np.real(M).tolist()


def _matrix_csv(name: str, M: np.ndarray) -> str:
    M = np.atleast_2d(np.real_if_close(np.asarray(M)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([name] + [f"j={j}" for j in range(M.shape[1])])
    for i, row in enumerate(M):
        w.writerow([f"i={i}"] + [repr(complex(v)) if np.iscomplexobj(M) else repr(float(v)) for v in row])
    return buf.getvalue()


def _default_seed() -> int:
    v = os.environ.get("MAPFLUCT_SEED")
    if v is None:
        return DEFAULT_SEED
    try:
        return int(v)
    except ValueError:
        raise SchemaError("MAPFLUCT_SEED", f"not an integer: {v!r}") from None


def load_model(arg: str) -> ValidatedModel:
    """A built-in name (MODEL-A ...) or a path to a JSON model file."""
    if arg.upper() in BUILTIN_NAMES:
        return load_builtin(arg.upper())
    return load_model_file(arg)


# ---------------------------------------------------------------------------
# commands

def cmd_cumulant(args) -> tuple[RunReport, str | None]:
    model = load_model(args.model)
    rep = RunReport("cumulant", args.model, {"alpha": args.alpha, "q": args.q})
    rows = []
    for a in args.alpha:
        model.check_domain(a)
        t = cu.perron(model, a)
        rows.append({"alpha": a, "F": cu.cgm(model, a), "kappa": t.kappa, "h": t.h, "v": t.v})
    rep.results["cumulant"] = rows
    if args.q:
        rep.results["Phi"] = [{"q": q, "Phi": cu.phi_inverse(model, q)} for q in args.q]
    if args.csv:
        out = []
        for r in rows:
            out.append(f"# alpha={r['alpha']} kappa={r['kappa']!r}")
            out.append(_matrix_csv("F", r["F"]))
        for r in rep.results.get("Phi", []):
            out.append(f"# q={r['q']} Phi={r['Phi']!r}")
        return rep, "\n".join(out)
    return rep, None


def cmd_whfactor(args) -> tuple[RunReport, str | None]:
    model = load_model(args.model)
    params = {"q": args.q, "alpha": args.alpha, "xi": args.xi, "side": args.side, "cond": args.cond}
    rep = RunReport("whfactor", args.model, params)
    fn = la.sup_factor if args.side == "sup" else la.inf_factor
    M = fn(model, args.q, args.alpha, args.xi, args.cond)
    rep.results["matrix"] = M
    if args.csv:
        return rep, _matrix_csv(f"{args.side}_{args.cond}", M)
    return rep, None


def run_suite(name: str, model: ValidatedModel, paths: int | None, seed: int, tol: float | None,
              threads: int) -> list:
    kw = {}
    if name == "structure":
        checks = suites.structure_suite(model)
        if model.n_states >= 1:
            checks += suites.scalar_reduction_checks()
        return checks
    if name == "rogozin":
        return suites.rogozin_suite(model)
    if paths is not None:
        kw["paths"] = paths
    kw.update(seed=seed, threads=threads)
    if name == "wh":
        if tol is not None:
            kw["n_se"] = tol
        return suites.wh_suite(model, **kw)
    if name == "independence":
        if tol is not None:
            kw["n_se"] = tol
        checks = suites.independence_suite(model, **kw)
        return checks + suites.reversal_ks(model, n=kw.get("paths", 100_000) // 2 or 1,
                                           seed=seed + 100, threads=threads)
    if name == "kendall":
        if tol is not None:
            kw["tol"] = tol
        return suites.kendall_suite(model, **kw)
    if name == "ballot":
        if tol is not None:
            kw["n_se"] = tol
        return suites.ballot_suite(model, **kw)
    raise SchemaError("--suite", f"unknown suite {name!r}")


def cmd_verify(args) -> tuple[RunReport, str | None]:
    model_arg = args.model or SUITE_DEFAULT_MODEL[args.suite]
    model = load_model(model_arg)
    seed = args.seed if args.seed is not None else _default_seed()
    rep = RunReport("verify", model_arg, {"suite": args.suite, "paths": args.paths, "tol": args.tol,
                                          "threads": args.threads}, seed=seed)
    checks = run_suite(args.suite, model, args.paths, seed, args.tol, args.threads)
    rep.checks = [asdict(c) for c in checks]
    text = "\n".join(c.line() for c in checks)
    if args.dump_samples:
        from .simulate import killed_stats
        killed_stats(model, 1.0, args.paths or 1000, seed, threads=args.threads).to_csv(args.dump_samples)
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "value", "threshold", "passed"])
        for c in checks:
            w.writerow([c.name, repr(c.value), repr(c.threshold), int(c.passed)])
        return rep, buf.getvalue()
    return rep, None if args.json else text


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mapfluct", description="Wiener-Hopf identities for spectrally negative MAPs")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cumulant", help="F(alpha), Perron triple and Phi(q)")
    c.add_argument("--model", required=True, help="model JSON file or built-in name (MODEL-A..MODEL-D)")
    c.add_argument("--alpha", type=float, nargs="+", default=[0.0])
    c.add_argument("--q", type=float, nargs="*", default=[])
    c.add_argument("--csv", action="store_true")

    w = sub.add_parser("whfactor", help="closed-form sup/inf Wiener-Hopf factor")
    w.add_argument("--model", required=True)
    w.add_argument("--q", type=float, required=True)
    w.add_argument("--alpha", type=float, default=0.0)
    w.add_argument("--xi", type=float, default=0.0)
    w.add_argument("--side", choices=("sup", "inf"), default="sup")
    w.add_argument("--cond", choices=("at_G", "at_eq"), default="at_eq")
    w.add_argument("--csv", action="store_true")

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", choices=suites.SUITES, required=True)
    v.add_argument("--model", default=None, help="defaults to the suite's reference model")
    v.add_argument("--paths", type=int, default=None)
    v.add_argument("--seed", type=int, default=None, help="default: $MAPFLUCT_SEED or 7")
    v.add_argument("--tol", type=float, default=None,
                   help="override the suite tolerance (SE multiple, or relative deviation for kendall)")
    v.add_argument("--threads", type=int, default=1)
    v.add_argument("--csv", action="store_true")
    v.add_argument("--json", action="store_true", help="print the JSON report instead of check lines")
    v.add_argument("--dump-samples", default=None, help="write raw killed-path samples (q=1) to this CSV")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    t0 = time.perf_counter()
    handler = {"cumulant": cmd_cumulant, "whfactor": cmd_whfactor, "verify": cmd_verify}[args.command]
    try:
        rep, text = handler(args)
    except (ModelValidationError, SchemaError, json.JSONDecodeError, OSError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DomainViolation, NoFiniteRoot, NoDensity, ShapeViolation) as exc:
        state = getattr(exc, "state", None)
        extra = f" (state {state})" if state is not None and f"(state {state})" not in str(exc) else ""
        print(f"error: {type(exc).__name__}: {exc}{extra}", file=sys.stderr)
        return EXIT_DOMAIN
    except MapfluctError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    rep.wall_clock = time.perf_counter() - t0
    print(text if text is not None else rep.to_json())
    if args.command == "verify":
        return EXIT_OK if rep.passed else EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
