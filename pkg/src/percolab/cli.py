"""``percolab`` command line.

Exit codes: 0 success, 2 invalid input, 3 data quality, 1 a violated exact law.
"""
from __future__ import annotations

import argparse
import json
import os
import re
import sys
import tempfile
from pathlib import Path

from . import __version__
from .chemdist import INFINITY, chemical_distance, modified_distance
from .clusters import label_clusters
from .errors import (DataQualityError, DomainError, FormatError, InsufficientDataError, LawViolation,
                     RangeError, UnavailableError)
from .experiments import KINDS, ExperimentPlan, run_experiment, signed_permutations
from .lattice import LatticeBox, RenormScheme, deserialize, sample_configuration, serialize
from .renorm import renorm_distance
from .subadd import HTable, NormEstimate, build_norm, estimate_mu, gap_check

_VECTOR = re.compile(r"^-?\d+(,-?\d+)*$")
_DECIMAL = re.compile(r"^(\d+(\.\d*)?|\.\d+)$")


def vector(text: str) -> tuple[int, ...]:
    if not _VECTOR.match(text):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers without spaces, got {text!r}")
    return tuple(int(c) for c in text.split(","))


def probability(text: str) -> float:
    if not _DECIMAL.match(text) or not 0.0 <= float(text) <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a decimal in [0, 1], got {text!r}")
    return float(text)


def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def seed_int(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def renorm_pair(text: str) -> tuple[int, float]:
    parts = text.split(",")
    try:
        if len(parts) != 2:
            raise ValueError
        return int(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected t,K such as 4,17, got {text!r}") from None


def int_list(text: str) -> tuple[int, ...]:
    v = vector(text)
    if any(x < 1 for x in v):
        raise argparse.ArgumentTypeError("expected positive integers")
    return v


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temporary file in the target directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _env_int(name: str, default: int | None) -> int | None:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw, 0)
    except ValueError:
        raise DomainError(f"{name} must be an integer, got {raw!r}") from None


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _print_plan(plan: dict) -> None:
    _log("resolved plan: " + json.dumps(plan, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="percolab",
        description="Chemical distances and time-constant estimates for bond percolation on Z^d.")
    ap.add_argument("--version", action="version", version=f"percolab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="<sub>")

    s = sub.add_parser("sample", help="sample a configuration and write it in PERCCFG1 format")
    s.add_argument("--dim", type=positive_int, required=True, help="lattice dimension d")
    s.add_argument("--size", type=positive_int, required=True, help="side length of the box")
    s.add_argument("--origin", type=vector, default=None,
                   help="lowest corner (default: centred so that 0 is inside)")
    s.add_argument("--p", type=probability, required=True, help="edge-opening probability")
    s.add_argument("--seed", type=seed_int, default=None, help="seed (default $PERCOLAB_SEED or 0)")
    s.add_argument("--out", required=True, help="output .perc file")

    s = sub.add_parser("dist", help="chemical, modified or renormalized distance on a stored configuration")
    s.add_argument("--config", required=True, help="input .perc file")
    s.add_argument("--from", dest="source", type=vector, required=True, help="source vertex, e.g. 0,0 (write --from=-3,1 for a leading minus)")
    s.add_argument("--to", dest="target", type=vector, required=True, help="target vertex, e.g. 3,4")
    s.add_argument("--star", action="store_true", help="modified distance D* between giant projections")
    s.add_argument("--renorm", type=renorm_pair, default=None, metavar="t,K",
                   help="renormalized distance D^t with red weight K*t")
    s.add_argument("--rho", type=float, default=4.0, help="constant rho of the renormalization scheme")

    s = sub.add_parser("mu", help="estimate the time constant along directions; write a norm")
    s.add_argument("--dim", type=positive_int, default=2, help="lattice dimension d")
    s.add_argument("--p", type=probability, required=True, help="edge-opening probability")
    s.add_argument("--direction", type=vector, action="append", required=True,
                   help="direction y (repeatable)")
    s.add_argument("--ns", type=int_list, default=(16, 32, 64, 128), help="increasing schedule of n")
    s.add_argument("--replicates", type=positive_int, default=100, help="replicates per n")
    s.add_argument("--margin", type=positive_int, default=16, help="extra box side beyond 2n|y|_1")
    s.add_argument("--symmetrize", action="store_true",
                   help="spread each estimate over signed coordinate permutations")
    s.add_argument("--seed", type=seed_int, default=None, help="seed (default $PERCOLAB_SEED or 0)")
    s.add_argument("--workers", type=positive_int, default=None,
                   help="worker threads (default $PERCOLAB_WORKERS or 1)")
    s.add_argument("--out", default=None, help="norm JSON output")
    s.add_argument("--htable", default=None, help="h-table JSON output")

    s = sub.add_parser("gap", help="check an h-table against a norm with the GAP bound")
    s.add_argument("--norm", required=True, help="norm JSON")
    s.add_argument("--htable", required=True, help="h-table JSON")
    s.add_argument("--M", type=float, default=8.0, help="minimal |x|_1 checked")
    s.add_argument("--C", type=float, default=1.0, help="GAP constant")
    s.add_argument("--seed", type=seed_int, default=None, help="bootstrap seed")
    s.add_argument("--out", default=None, help="JSON certificate output")

    s = sub.add_parser("experiment", help="run an experiment plan and write its report")
    s.add_argument("kind", choices=sorted(KINDS), help="experiment kind")
    s.add_argument("--plan", required=True, help="plan JSON")
    s.add_argument("--out", required=True, help="report JSON output")
    s.add_argument("--csv", default=None, help="directory for CSV series")
    s.add_argument("--seed", type=seed_int, default=None, help="override the plan seed")
    s.add_argument("--workers", type=positive_int, default=None, help="override the plan worker count")

    s = sub.add_parser("inspect", help="summarize a .perc file or a percolab JSON document")
    s.add_argument("path", help="file to inspect")
    return ap


def _seed(args) -> int:
    return args.seed if args.seed is not None else _env_int("PERCOLAB_SEED", 0)


def _workers(args) -> int:
    return args.workers if args.workers is not None else _env_int("PERCOLAB_WORKERS", 1)


def _read(path) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return p.read_bytes()


def cmd_sample(args) -> int:
    seed = _seed(args)
    origin = args.origin if args.origin is not None else (-(args.size // 2),) * args.dim
    box = LatticeBox((args.size,) * args.dim, origin)
    _print_plan({"command": "sample", "dim": args.dim, "size": args.size, "origin": list(box.origin),
                 "p": args.p, "seed": seed, "out": args.out})
    config = sample_configuration(box, args.p, seed)
    atomic_write(args.out, serialize(config))
    _log(f"percolab {__version__} seed={seed} digest={config.digest()}")
    print(config.digest())
    return 0


def cmd_dist(args) -> int:
    config = deserialize(_read(args.config))
    plan = {"command": "dist", "config": args.config, "from": list(args.source), "to": list(args.target),
            "star": args.star, "renorm": list(args.renorm) if args.renorm else None, "rho": args.rho}
    _print_plan(plan)
    _log(f"percolab {__version__} digest={config.digest()}")
    if args.renorm:
        t, K = args.renorm
        d = renorm_distance(config, RenormScheme(t, K, args.rho), args.source, args.target)
    elif args.star:
        d = modified_distance(config, label_clusters(config), args.source, args.target)
    else:
        d = chemical_distance(config, args.source, args.target)
    print("inf" if d == INFINITY else (int(d) if float(d).is_integer() else d))
    return 0


def cmd_mu(args) -> int:
    seed, workers = _seed(args), _workers(args)
    for y in args.direction:
        if len(y) != args.dim:
            raise DomainError(f"direction {y} does not have {args.dim} coordinates")
    _print_plan({"command": "mu", "dim": args.dim, "p": args.p, "direction": [list(y) for y in args.direction],
                 "ns": list(args.ns), "replicates": args.replicates, "margin": args.margin,
                 "symmetrize": args.symmetrize, "seed": seed, "workers": workers,
                 "out": args.out, "htable": args.htable})
    rows, table = [], HTable(args.dim)
    for y in args.direction:
        est = estimate_mu(y, args.ns, args.p, args.replicates, seed, args.margin, workers)
        print(json.dumps(est.to_dict(), sort_keys=True))
        for w in est.warnings:
            _log(f"warning: {tuple(y)}: {w}")
        zs = signed_permutations(y) if args.symmetrize else [tuple(y)]
        rows.extend((z, est.mu, est.ci) for z in zs)
        if est.table is not None:
            table.rows.update(est.table.rows)
            table.n_excluded += est.table.n_excluded
    if args.out:
        atomic_write(args.out, build_norm(rows).to_json())
    if args.htable:
        atomic_write(args.htable, table.to_json())
    return 0


def cmd_gap(args) -> int:
    norm = NormEstimate.from_json(_read(args.norm).decode("utf-8"))
    table = HTable.from_json(_read(args.htable).decode("utf-8"))
    seed = _seed(args)
    _print_plan({"command": "gap", "norm": args.norm, "htable": args.htable, "M": args.M, "C": args.C,
                 "seed": seed, "out": args.out})
    rep = gap_check(norm, table, args.M, args.C, seed=seed)
    doc = json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n"
    print(doc, end="")
    if args.out:
        atomic_write(args.out, doc)
    return 0


def cmd_experiment(args) -> int:
    doc = json.loads(_read(args.plan).decode("utf-8"))
    doc["kind"] = doc.get("kind", args.kind)
    if doc["kind"] != args.kind:
        raise DomainError(f"plan kind {doc['kind']!r} does not match subcommand kind {args.kind!r}")
    seed = args.seed if args.seed is not None else _env_int("PERCOLAB_SEED", None)
    workers = args.workers if args.workers is not None else _env_int("PERCOLAB_WORKERS", None)
    plan = ExperimentPlan.from_dict(doc, seed=seed, workers=workers, out=args.out, csv=args.csv)
    _print_plan(plan.to_dict())
    report = run_experiment(plan)
    atomic_write(args.out, report.to_json())
    if args.csv:
        report.write_csv(args.csv)
    _log(f"percolab {__version__} seed={plan.seed} runtime={report.provenance.get('runtime_s')}s")
    for v in report.verdicts:
        print(f"{v.status.upper():12s} {v.name}: value={v.value} tolerance={v.tolerance}")
    return 0


def cmd_inspect(args) -> int:
    data = _read(args.path)
    _print_plan({"command": "inspect", "path": args.path})
    if data[:8] == b"PERCCFG1":
        config = deserialize(data)
        box = config.box
        lab = label_clusters(config)
        info = {"format": "PERCCFG1", "d": box.d, "sides": list(box.sides), "origin": list(box.origin),
                "p": config.p, "seed": config.seed, "edges": box.n_edges,
                "open_edges": int(config.open.sum()), "digest": config.digest(),
                "giant_size": int(lab.size[lab.giant]) if lab.giant is not None else 0,
                "giant_valid": lab.valid}
    else:
        try:
            doc = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise FormatError(f"neither PERCCFG1 nor JSON: {err}", 0) from None
        info = {"schema": doc.get("schema", "unknown")}
        if "verdicts" in doc:
            info["verdicts"] = {v["name"]: v["status"] for v in doc["verdicts"]}
        if "rows" in doc:
            info["rows"] = len(doc["rows"])
        if "directions" in doc:
            info["directions"] = len(doc["directions"])
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


COMMANDS = {"sample": cmd_sample, "dist": cmd_dist, "mu": cmd_mu, "gap": cmd_gap,
            "experiment": cmd_experiment, "inspect": cmd_inspect}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except LawViolation as err:
        _log(f"law violated: {err} (configuration {err.digest})")
        return 1
    except (DataQualityError, InsufficientDataError) as err:
        _log(f"data quality: {err}")
        return 3
    except (DomainError, RangeError, FormatError, UnavailableError, FileNotFoundError,
            json.JSONDecodeError, ValueError, KeyError) as err:
        _log(f"error: {err}")
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
