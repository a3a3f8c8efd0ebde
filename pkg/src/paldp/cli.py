"""Command-line experiment driver.

Every run writes its output tables (CSV) and summaries (JSON) into ``--out``
together with ``manifest.json`` (config hash, master seed, package
versions, output checksums and the only timestamp).  Exit codes: 0 ok,
2 validation error, 3 runtime error; failures also write ``error.json``
and print the same record on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import schemas
from .events import PredicateSyntaxError, as_predicate
from .generator import CorruptedLog, generate
from .measures import (DegreeMeasure, MeasureError, PairMeasure, PathMeasure, StructureError,
                       UndefinedConditional, degree_marginal)
from .weights import ConfigError, InvalidSpec, WeightSpec, read_config

DEFAULT_CONFIG = """\
[colors]
alphabet = x

[weights]
gamma = 1
beta = 1
"""

VALIDATION_ERRORS = (ConfigError, InvalidSpec, MeasureError, StructureError, UndefinedConditional,
                     PredicateSyntaxError, CorruptedLog, schemas.SchemaError)


class UsageError(ValueError):
    """Bad command-line arguments (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class Run:
    """Resolved inputs of one invocation and the files it produces."""

    def __init__(self, args, argv):
        self.args, self.argv = args, argv
        text = Path(args.config).read_text() if args.config else DEFAULT_CONFIG
        self.config_text = text
        self.spec, self.mu, self.experiment = read_config(text)
        self.spec.require_valid()
        self.outputs: dict[str, str] = {}

    def option(self, name, default=None, cast=int):
        val = getattr(self.args, name, None)
        if val is not None:
            return val
        if name in self.experiment:
            return cast(self.experiment[name])
        return default

    @property
    def seed(self):
        return self.option("seed", 0)

    def write_csv(self, name, kind, text):
        schemas.validate_csv(kind, text)
        self.outputs[name] = text

    def write_json(self, name, kind, obj):
        schemas.validate_json(kind, obj)
        self.outputs[name] = json.dumps(obj, indent=2, sort_keys=True) + "\n"

    def flush(self, subcommand):
        out = Path(self.args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.outputs.items():
            (out / name).write_text(text)
        manifest = {
            "subcommand": subcommand,
            "argv": list(self.argv),
            "config_sha256": hashlib.sha256(self.config_text.encode()).hexdigest(),
            "seed": self.seed,
            "versions": _versions(),
            "outputs": {name: hashlib.sha256(text.encode()).hexdigest()
                        for name, text in self.outputs.items()},
            "created": datetime.now(timezone.utc).isoformat(),
        }
        schemas.validate_json("manifest", manifest)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _versions() -> dict:
    from importlib import metadata
    out = {"python": platform.python_version(), "numpy": np.__version__}
    for dist in ("artifact", "scipy", "mpmath", "jsonschema"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            pass
    return out


def _jnum(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def load_measure(path: str):
    """Read a degree, pair or path measure from a CSV table or JSON record."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        kind = json.loads(text).get("type")
        cls = {"DegreeMeasure": DegreeMeasure, "PairMeasure": PairMeasure, "PathMeasure": PathMeasure}.get(kind)
        if cls is None:
            raise MeasureError(f"{path}: unknown measure record type {kind!r}")
        return cls.from_json(text)
    header = text.split("\n", 1)[0].strip()
    if header == "k,value":
        return DegreeMeasure.from_table(text)
    if header == "k,parent_color,child_color,value":
        return PairMeasure.from_table(text)
    raise MeasureError(f"{path}: unrecognised measure table header {header!r}")


# subcommands ---------------------------------------------------------------------

def cmd_generate(run: Run):
    n = run.option("n", 1000)
    log = generate(run.spec, run.mu, n, seed=run.seed)
    # the log is replay-validated instead of row-by-row pattern matching
    run.outputs["eventlog.csv"] = log.check().to_csv()
    grid = run.option("grid")
    if grid:
        from .empirics import snapshot_path, uniform_grid
        run.write_csv("snapshots.csv", "path_measure", snapshot_path(log, uniform_grid(n, grid)).to_table())
    return {"n": n, "file": "eventlog.csv"}


def cmd_limit_dist(run: Run):
    from .rates import pi_f
    kmax = run.option("kmax", 10)
    spec = run.spec
    if spec.n_pairs == 1:
        table = pi_f(spec, 0, kmax).to_table()
        run.write_csv("limit_dist.csv", "degree_measure", table)
    else:
        rows = ["k,parent_color,child_color,value"]
        conds = [pi_f(spec, p, kmax) for p in range(spec.n_pairs)]
        for k in range(kmax + 1):
            for (x1, x2), c in zip(spec.pairs, conds):
                rows.append(f"{k},{x1},{x2},{_fmt(c.probs[k])}")
        for (x1, x2), c in zip(spec.pairs, conds):
            rows.append(f"tail,{x1},{x2},{_fmt(c.tail_mass)}")
        run.write_csv("limit_dist.csv", "pair_measure", "\n".join(rows) + "\n")
    return {"kmax": kmax, "file": "limit_dist.csv"}


def cmd_rate(run: Run):
    from . import rates
    a = run.args
    which = a.which
    measure = load_measure(a.measure)
    spec, mu = run.spec, run.mu
    if which == "I":
        ell = degree_marginal(measure) if isinstance(measure, PairMeasure) else measure
        g, b = float(spec.gamma[0, 0]), float(spec.beta[0, 0])
        if spec.n_pairs != 1 or not spec.time_constant:
            raise ConfigError("rate I needs a one-colour, time-constant weight config")
        res = rates.rate_I(ell, g, b)
    else:
        omega = measure if isinstance(measure, PairMeasure) else PairMeasure.from_degree_measure(measure, spec.colors)
        if which == "J":
            res = rates.rate_J(omega, mu, spec)
        else:
            if not a.path:
                raise UsageError(f"rate {which} needs --path")
            nu = load_measure(a.path)
            if not isinstance(nu, PathMeasure):
                raise MeasureError("--path must hold a PathMeasure record")
            if which == "Jtilde":
                res = rates.rate_J_tilde(omega, nu, mu, spec)
            elif which == "K":
                res = rates.rate_K(omega, nu, mu, spec)
            else:
                kh = rates.variational_K_hat(omega, nu, mu, spec)
                res = rates.RateResult(kh.value, 0.0, np.array([kh.sweeps]))
    obj = {"which": which, **res.to_dict()}
    run.write_json("rate.json", "rate", obj)
    return obj


def _lln_replica(payload):
    spec_cfg, n, seed, r = payload
    spec, mu, _ = read_config(spec_cfg)
    return _lln_tv(spec, mu, n, seed, r)


def _lln_tv(spec, mu, n, seed, r):
    from .empirics import attachment_measure
    from .measures import tv_distance
    from .rates import pi_f
    log = generate(spec, mu, n, seed=seed, replica=r)
    M = attachment_measure(log)
    K = M.kmax
    w = M.probs.sum(axis=0) + M.tails
    pis = [pi_f(spec, p, K) for p in range(spec.n_pairs)]
    target = PairMeasure(np.array([pi.probs for pi in pis]).T * w, spec.colors,
                         np.array([pi.tail_mass for pi in pis]) * w)
    # tail law: k -> pi(k+1) + pi(k+2) + ... of the limit law
    hats = []
    for pi in pis:
        hat = np.cumsum(pi.probs[::-1])[::-1]
        hats.append(np.append(hat[1:], 0.0) + pi.tail_mass)
    hats = np.array(hats).T
    tail_hat = 1.0 - hats.sum(axis=0)
    target_hat = PairMeasure(hats * w, spec.colors, tail_hat * w)
    return K, tv_distance(M, target), tv_distance(M, target_hat)


def cmd_lln(run: Run):
    n = run.option("n", 100000)
    reps = run.option("reps", 5)
    threads = run.option("threads", 1)
    seed = run.seed
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_lln_replica, [(run.config_text, n, seed, r) for r in range(reps)]))
    else:
        results = [_lln_tv(run.spec, run.mu, n, seed, r) for r in range(reps)]
    rows = ["replica,n,kmax,tv,tv_tail_law"]
    rows += [f"{r},{n},{K},{_fmt(tv)},{_fmt(tvh)}" for r, (K, tv, tvh) in enumerate(results)]
    run.write_csv("lln.csv", "lln", "\n".join(rows) + "\n")
    obj = {"n": n, "reps": reps, "tv": [tv for _, tv, _ in results],
           "tv_tail_law": [tvh for _, _, tvh in results]}
    run.write_json("lln.json", "lln", obj)
    return obj


def cmd_rare_event(run: Run):
    from .optimize import minimize_rate_I
    from .rare_events import Tilt, is_estimate, naive_estimate, suggest_tilt
    a = run.args
    event = a.event or run.experiment.get("event", "M(0)>=0.75")
    pred = as_predicate(event)
    n = run.option("n", 100)
    reps = run.option("reps", 10000)
    seed = run.seed
    spec, mu = run.spec, run.mu
    tilt_kind = a.tilt or run.experiment.get("tilt", "suggest")
    if tilt_kind == "identity":
        tilt = Tilt.identity(spec, kg=n)
    elif tilt_kind == "suggest":
        if spec.n_pairs != 1:
            raise ConfigError("the suggested tilt is built from the plain rate; use a one-colour config")
        kmax = run.option("kmax", 20)
        opt = minimize_rate_I(pred, float(spec.gamma[0, 0]), float(spec.beta[0, 0]), kmax)
        tilt = suggest_tilt(opt.measure, spec)
    else:
        raise UsageError(f"unknown tilt {tilt_kind!r} (use suggest or identity)")
    naive = naive_estimate(pred, spec, mu, n, reps, seed=(seed, 0))
    imp = is_estimate(pred, spec, mu, tilt, n, reps, seed=(seed, 1))
    obj = {"event": str(pred), "n": n, "tilt": tilt_kind,
           "naive": {k: _jnum(v) if isinstance(v, float) else v for k, v in naive.to_dict().items()},
           "is": {k: _jnum(v) if isinstance(v, float) else v for k, v in imp.to_dict().items()}}
    run.write_json("rare_event.json", "rare_event", obj)
    return obj


def cmd_oracle(run: Run):
    from .oracle import exact_law, outcome_table
    n = run.option("n", 4)
    spec, mu = run.spec, run.mu
    run.write_csv("oracle_outcomes.csv", "oracle_outcomes", outcome_table(spec, mu, n))
    law = exact_law(spec, mu, n)
    rows = ["measure,numerator,denominator"]
    for key in sorted(law, key=lambda k: (-law[k], k)):
        rows.append(f"{' '.join(str(x) for x in key)},{law[key].numerator},{law[key].denominator}")
    run.write_csv("oracle_law.csv", "oracle_law", "\n".join(rows) + "\n")
    return {"n": n, "law": {" ".join(str(x) for x in k): str(v) for k, v in law.items()}}


def cmd_minimize(run: Run):
    from .optimize import minimize_rate_I
    if run.spec.n_pairs != 1 or not run.spec.time_constant:
        raise ConfigError("minimize works on the plain rate; use a one-colour, time-constant config")
    cons = run.args.constraints or run.experiment.get("constraints", "true")
    kmax = run.option("kmax", 20)
    res = minimize_rate_I(cons, float(run.spec.gamma[0, 0]), float(run.spec.beta[0, 0]), kmax,
                          seed=run.seed)
    obj = {"constraints": str(as_predicate(cons)), "value": _jnum(res.value), "residual": _jnum(res.residual),
           "measure": res.measure.coordinates().tolist(),
           "start_values": [_jnum(v) for v in res.start_values]}
    run.write_json("minimize.json", "minimize", obj)
    run.write_csv("minimizer.csv", "degree_measure", res.measure.to_table())
    return obj


def cmd_contract(run: Run):
    from .optimize import contraction_check
    from .rates import pi_f
    kmax = run.option("kmax", 5)
    if run.args.measure:
        ell = load_measure(run.args.measure)
        if isinstance(ell, PairMeasure):
            ell = degree_marginal(ell)
    else:
        g, b = float(run.spec.gamma[0, 0]), float(run.spec.beta[0, 0])
        ell = pi_f(WeightSpec.plain(g, b), 0, kmax)
    res = contraction_check(ell, run.mu, run.spec, kmax, seed=run.seed)
    obj = {k: _jnum(v) if isinstance(v, float) else v for k, v in res.to_dict().items()}
    run.write_json("contract.json", "contract", obj)
    return obj


def cmd_decay_scan(run: Run):
    from .rare_events import decay_rate_scan
    event = run.args.event or run.experiment.get("event", "M(0)>=0.99")
    n_list = run.args.n_list or run.experiment.get("n_list", "3,4,5,6,7,8,9,10")
    ns = [int(v) for v in str(n_list).split(",") if v.strip()]
    predicted = None
    if run.args.predict:
        from .optimize import minimize_rate_I
        predicted = minimize_rate_I(event, float(run.spec.gamma[0, 0]), float(run.spec.beta[0, 0]),
                                    run.option("kmax", 20)).value
    rows = decay_rate_scan(event, ns, run.spec, run.mu, reps=run.option("reps", 10000), seed=run.seed,
                           predicted=predicted)
    lines = ["n,p_hat,stderr,rate,method,exact,predicted"]
    for r in rows:
        lines.append(",".join([str(r["n"]), _fmt(r["p_hat"]), _fmt(r["stderr"]), _fmt(r["rate"]),
                               r["method"], r["exact"] or "",
                               "" if r["predicted"] is None else _fmt(r["predicted"])]))
    run.write_csv("decay_scan.csv", "decay_scan", "\n".join(lines) + "\n")
    return {"rows": rows}


COMMANDS = {
    "generate": (cmd_generate, "emit one event log as CSV"),
    "limit-dist": (cmd_limit_dist, "tabulate the limit degree law"),
    "rate": (cmd_rate, "evaluate a rate function on measure files"),
    "lln": (cmd_lln, "total variation of the attachment measure from the limit law, per replica"),
    "rare-event": (cmd_rare_event, "naive and importance-sampling estimates of an event"),
    "oracle": (cmd_oracle, "exact outcome table and attachment-measure law"),
    "minimize": (cmd_minimize, "constrained minimum of the degree rate"),
    "contract": (cmd_contract, "pair-rate minimum over a fixed degree marginal"),
    "decay-scan": (cmd_decay_scan, "-log(p)/n for an event over a list of n"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--reps", type=int, help="number of replicas")
    common.add_argument("--n", type=int, help="number of vertices")
    common.add_argument("--kmax", type=int, help="degree truncation")
    common.add_argument("--grid", type=int, help="number of uniform snapshot times")
    common.add_argument("--config", help="INI file with [colors], [weights], [experiment]")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    common.add_argument("--threads", type=int, help="worker processes for replicas")
    parser = _Parser(prog="paldp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "rate":
            p.add_argument("--which", choices=["I", "J", "Jtilde", "K", "Khat"], default="I")
            p.add_argument("--measure", required=True, help="degree or pair measure (CSV or JSON)")
            p.add_argument("--path", help="path measure JSON (for Jtilde, K, Khat)")
        if name in ("rare-event", "decay-scan"):
            p.add_argument("--event", help="predicate such as 'M(0)>=0.75'")
        if name == "rare-event":
            p.add_argument("--tilt", choices=["suggest", "identity"])
        if name == "decay-scan":
            p.add_argument("--n-list", dest="n_list", help="comma-separated n values")
            p.add_argument("--predict", action="store_true", help="add the optimised rate infimum")
        if name == "minimize":
            p.add_argument("--constraints", help="clauses such as 'M(0)>=0.9'")
        if name == "contract":
            p.add_argument("--measure", help="degree measure file (default: limit law at --kmax)")
    return parser


def _fail(kind: str, message: str, code: int, out: str | None) -> int:
    record = {"error": True, "kind": kind, "message": message, "exit_code": code}
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def _out_from_argv(argv) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--out" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--out="):
            return tok.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = _out_from_argv(argv)  # so that even argument errors leave an error record
    try:
        args = build_parser().parse_args(argv)
        out = args.out
        run = Run(args, argv)
        summary = COMMANDS[args.command][0](run)
        run.flush(args.command)
    except (UsageError, FileNotFoundError) + VALIDATION_ERRORS as exc:
        return _fail(type(exc).__name__, str(exc), 2, out)
    except ValueError as exc:
        # domain errors raised by library calls on user-supplied values
        return _fail(type(exc).__name__, str(exc), 2, out)
    except Exception as exc:  # noqa: BLE001 - every failure must yield an error record
        return _fail(type(exc).__name__, str(exc), 3, out)
    print(json.dumps(summary, default=str, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
