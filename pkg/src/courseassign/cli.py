"""Command-line frontend: ``courseassign <command> [options]``.

Every command writes its outputs into ``--output`` (default: the current
directory) together with ``manifest.<command>.json``, which records the
arguments, seeds, input and output digests, version and timings.

Exit codes: 0 success, 2 usage error, 3 data error, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import secrets
import sys
import time
from pathlib import Path

from . import __version__
from .elicitation import ElicitationParameters, build_profile
from .generator import GeneratorConfig, generate
from .lottery import LotteryConfig, decompose, draw
from .mechanisms import MAX_EXACT_STUDENTS, enumerate_brsd_exact, estimate_brsd, run_bps
from .metrics import ProfileMismatch, profile_csv, summary
from .model import (
    InstanceError,
    bundle_key,
    load_assignment,
    load_instance,
    load_lottery,
    load_profile,
    serialize,
)
from .numeric import LPError
from .rev import RevInstance, solve_rev

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 0, 2, 3, 4

log = logging.getLogger("courseassign")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class Run:
    """Collects manifest fields while a command executes."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.output)
        self.inputs: dict = {}
        self.outputs: dict = {}
        self.seeds: dict = {}
        self.extra: dict = {}
        self.status = "ok"
        self.t0 = time.perf_counter()
        self.timings: dict = {}

    def read(self, path) -> str:
        p = Path(path)
        try:
            data = p.read_bytes()
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
        self.inputs[str(p)] = hashlib.sha256(data).hexdigest()
        return data.decode("utf-8")

    def write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        data = text.encode("utf-8")
        p.write_bytes(data)
        self.outputs[str(p)] = hashlib.sha256(data).hexdigest()
        return p

    def seed(self, name: str, value):
        if value is None:
            value = secrets.randbits(63)
        self.seeds[name] = value
        return value

    def lap(self, name: str, since: float):
        self.timings[name] = round(time.perf_counter() - since, 6)

    def finish(self):
        self.timings["total"] = round(time.perf_counter() - self.t0, 6)
        config = {k: v for k, v in vars(self.args).items() if k != "func"}
        manifest = {
            "command": self.args.command,
            "argv": sys.argv[1:],
            "tool": "courseassign",
            "version": __version__,
            "status": self.status,
            "config": config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "timings": self.timings,
            **self.extra,
        }
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / f"manifest.{self.args.command}.json").write_text(json.dumps(manifest, indent=2, default=str))


def _dump(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _parse(loader, text, what):
    try:
        return loader(text)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid {what}: {exc}") from exc


# --------------------------------------------------------------------------
# commands


def cmd_gen(args, run: Run) -> int:
    if args.config:
        base = json.loads(run.read(args.config))
    else:
        base = {}
    for key in ("students", "classes", "groups_per_class", "capacity", "max_bundles"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    base["seed"] = run.seed("generator", args.seed if args.seed is not None else base.get("seed"))
    try:
        cfg = GeneratorConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid generator config: {exc}") from exc
    t = time.perf_counter()
    try:
        inst, params = generate(cfg)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    run.lap("generate", t)
    run.extra["generatorConfig"] = cfg.to_dict()
    run.write("instance.json", serialize(inst, indent=2) + "\n")
    run.write("params.json", _dump({s: p.to_dict() for s, p in params.items()}))
    print(f"generated {len(inst.students)} students, {len(inst.classes)} classes, {len(inst.groups)} groups")
    return EXIT_OK


def cmd_elicit(args, run: Run) -> int:
    inst = _parse(load_instance, run.read(args.instance), "instance")
    raw = _parse(json.loads, run.read(args.params), "parameters")
    try:
        params = {s: ElicitationParameters.from_dict(d) for s, d in raw.items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid parameters: {exc}") from exc
    t = time.perf_counter()
    prof = build_profile(inst, params, threads=args.threads)
    run.lap("elicit", t)
    empty = [s for s in params if not prof[s]]
    for s in empty:
        log.warning("student %s has an empty ranking", s)
    distinct = len(prof.distinct_bundles())
    run.extra["summary"] = {"students": len(params), "distinctBundles": distinct, "emptyRankings": empty}
    run.write("profiles.json", serialize(prof, indent=1) + "\n")
    lengths = [len(prof[s]) for s in params]
    print(
        f"{len(params)} students, {distinct} distinct bundles, "
        f"list length min {min(lengths, default=0)} max {max(lengths, default=0)}, {len(empty)} empty"
    )
    return EXIT_OK


def cmd_match(args, run: Run) -> int:
    inst = _parse(load_instance, run.read(args.instance), "instance")
    prof = _parse(load_profile, run.read(args.profiles), "profiles")
    t = time.perf_counter()
    if args.mechanism == "bps":
        x, trace = run_bps(inst, prof)
        run.write("trace.bps.json", _dump(trace.to_dict()))
        name = "bps"
    elif args.exact:
        if len(inst.students) > MAX_EXACT_STUDENTS:
            raise UsageError(f"--exact supports at most {MAX_EXACT_STUDENTS} students, instance has {len(inst.students)}")
        x = enumerate_brsd_exact(inst, prof)
        name = "brsd-exact"
    else:
        seed = run.seed("brsd", args.seed)
        x = estimate_brsd(inst, prof, args.reps, seed, threads=args.threads)
        name = "brsd"
    run.lap("match", t)
    problems = x.check(inst)
    if problems:
        raise DataError("assignment violates constraints: " + "; ".join(problems[:3]))
    path = run.write(f"assignment.{name}.json", serialize(x, indent=1) + "\n")
    size = sum(x.mass(s) for s in x.students)
    print(f"{name}: expected size {float(size):.6g} of {len(x.students)} students -> {path}")
    return EXIT_OK


def _lottery_csv(lot) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["matching", "lambda", "size"])
    for k, (m, lam) in enumerate(lot.support, 1):
        w.writerow([k, repr(float(lam)), m.size])
    return buf.getvalue()


def cmd_lottery(args, run: Run) -> int:
    inst = _parse(load_instance, run.read(args.instance), "instance")
    x = _parse(load_assignment, run.read(args.assignment), "assignment")
    delta = "auto" if args.delta is None else args.delta
    cfg = LotteryConfig(
        epsilon=args.epsilon,
        delta=delta,
        alpha=args.alpha,
        max_iterations=args.max_iterations,
        arithmetic=args.arithmetic or "float",
        strict_probe=args.strict_probe,
    )
    t = time.perf_counter()
    try:
        dec = decompose(inst, x, cfg)
    except (LPError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    run.lap("decompose", t)
    run.write("lottery.json", serialize(dec.lottery, indent=1) + "\n")
    run.write("lottery.csv", _lottery_csv(dec.lottery))
    report = {
        "distance": dec.distance,
        "epsilon": args.epsilon,
        "effectiveEpsilon": dec.effective_epsilon,
        "converged": dec.converged,
        "iterations": dec.iterations,
        "alpha": dec.alpha,
        "delta": dec.delta,
        "thresholdMisses": dec.threshold_misses,
        "supportSize": len(dec.lottery.support),
        "overAllocation": dec.report.to_dict(),
        "message": dec.message,
    }
    run.write("overallocation.json", _dump(report))
    run.extra["convergence"] = {"converged": dec.converged, "distance": dec.distance, "message": dec.message}
    print(
        f"lottery with {len(dec.lottery.support)} matchings, distance {dec.distance:.4g} "
        f"(epsilon {args.epsilon}), E = {dec.report.expected}"
    )
    if not dec.converged:
        run.status = "non-converged"
        print(f"warning: decomposition did not converge: {dec.message}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_draw(args, run: Run) -> int:
    lot = _parse(load_lottery, run.read(args.lottery), "lottery")
    seed = run.seed("draw", args.seed)
    m = draw(lot, seed)
    doc = {s: (list(bundle_key(b)) if b is not None else None) for s, b in m.assignment.items()}
    run.write("matching.json", _dump(doc))
    print(f"drew a matching of size {m.size}")
    return EXIT_OK


def cmd_metrics(args, run: Run) -> int:
    prof = _parse(load_profile, run.read(args.profiles), "profiles")
    x = _parse(load_assignment, run.read(args.assignment), "assignment")
    other = _parse(load_assignment, run.read(args.against), "assignment") if args.against else None
    ks = tuple(args.ks)
    t = time.perf_counter()
    try:
        rep = summary(x, prof, ks=ks, envy=not args.no_envy, against=other)
    except ProfileMismatch as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    run.lap("metrics", t)
    run.write("metrics.json", _dump(rep.to_dict()))
    run.write("profile.csv", profile_csv(rep))
    line = f"exp. rank {float(rep.expected_rank or 0):.6g}, exp. size {float(rep.expected_size):.6g}, AUPCR {float(rep.aupcr):.6g}"
    if rep.envy is not None:
        line += f", envy strong {rep.envy[0]} weak {rep.envy[1]}"
    if rep.popularity_vs is not None:
        a, b, rest = rep.popularity_vs["sd_prefer"]
        line += f", popularity {float(rep.popularity_vs['score']):.6g}, SD-prefer ({a}|{b}) rest {rest}"
    print(line)
    return EXIT_OK


def cmd_rev(args, run: Run) -> int:
    prof = _parse(load_profile, run.read(args.ranking), "ranking")
    students = prof.students
    if args.student is None:
        if len(students) != 1:
            raise UsageError("ranking file holds several students; pick one with --student")
        student = students[0]
    else:
        student = args.student
        if student not in students:
            raise DataError(f"student {student!r} not in ranking file")
    ranking = prof[student]
    if len(ranking) < 2:
        raise DataError(f"ranking of {student} has {len(ranking)} bundle(s); at least two are needed")
    t = time.perf_counter()
    res = solve_rev(RevInstance(ranking, gamma=args.gamma), arithmetic=args.arithmetic or "auto")
    run.lap("rev", t)
    doc = {"student": student, "bundles": len(ranking), **res.to_dict()}
    run.write(f"rev.{student}.json", _dump(doc))
    print(f"{student}: {len(ranking)} bundles, err = {float(res.err):.6g} at gamma {args.gamma}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _positive(v: str) -> int:
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {n}")
    return n


def _capacity(v: str):
    if "-" in v:
        lo, hi = v.split("-", 1)
        lo, hi = _positive(lo), _positive(hi)
        if hi < lo:
            raise argparse.ArgumentTypeError("capacity range must be lo-hi with lo <= hi")
        return [lo, hi]
    return _positive(v)


def _globals(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--threads", type=_positive, default=d(1), help="worker processes for parallel steps")
    p.add_argument("--arithmetic", choices=("exact", "float"), default=d(None), help="LP arithmetic")
    p.add_argument("--output", "-o", default=d("."), help="output directory")
    p.add_argument("--verbose", "-v", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="courseassign", description="Course assignment with bundled random mechanisms.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)

    p = sub.add_parser("gen", parents=[common], help="generate an instance and student parameters")
    p.add_argument("--config", help="generator config JSON; flags override its fields")
    p.add_argument("--students", type=_positive)
    p.add_argument("--classes", type=_positive)
    p.add_argument("--groups", dest="groups_per_class", type=_positive)
    p.add_argument("--capacity", type=_capacity, help="seats per group, or a range lo-hi")
    p.add_argument("--max-bundles", dest="max_bundles", type=_positive)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("elicit", parents=[common], help="rank bundles for every student")
    p.add_argument("--instance", required=True)
    p.add_argument("--params", required=True)
    p.set_defaults(func=cmd_elicit)

    p = sub.add_parser("match", parents=[common], help="run BPS or BRSD")
    p.add_argument("mechanism", choices=("bps", "brsd"))
    p.add_argument("--instance", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--reps", type=_positive, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--exact", action="store_true", help="enumerate all student orders (BRSD, small instances)")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("lottery", parents=[common], help="decompose a fractional assignment into a lottery")
    p.add_argument("--instance", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--delta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--max-iterations", dest="max_iterations", type=_positive)
    p.add_argument("--strict-probe", dest="strict_probe", action="store_true")
    p.set_defaults(func=cmd_lottery)

    p = sub.add_parser("draw", parents=[common], help="sample one matching from a lottery")
    p.add_argument("--lottery", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_draw)

    p = sub.add_parser("metrics", parents=[common], help="evaluate an assignment")
    p.add_argument("--profiles", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--against", help="second assignment for popularity and SD-prefer counts")
    p.add_argument("--ks", type=_positive, nargs="+", default=[1, 10, 100])
    p.add_argument("--no-envy", dest="no_envy", action="store_true", help="skip the quadratic envy check")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("rev", parents=[common], help="revealed-preference representability check")
    p.add_argument("--ranking", required=True, help="profile file")
    p.add_argument("--student")
    p.add_argument("--gamma", type=float, default=1e-3)
    p.set_defaults(func=cmd_rev)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "gamma", 0) < 0:
        parser.error("--gamma must be non-negative")
    if getattr(args, "epsilon", 1) <= 0:
        parser.error("--epsilon must be positive")
    run = Run(args)
    try:
        code = args.func(args, run)
    except UsageError as exc:
        print(f"courseassign {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, InstanceError) as exc:
        print(f"courseassign {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    run.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
