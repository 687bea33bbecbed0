"""Command-line interface: ``autoconv {eval,certify,search,convert}``.

Exit codes: 0 success, 2 input error, 3 checkpoint/state error,
75 run stopped early with a resumable checkpoint on disk.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .certify import CELLS, METHODS, Checkpoint, Interrupted, certify, resume
from .core import (
    CoefficientProfile,
    RangeMode,
    ScaledConstants,
    make_profile,
    objective,
    step_function_nodes,
    step_sup,
)
from .errors import AutoconvError, CheckpointError
from .lattice import MeshSpec
from .search import SearchConfig, multistart

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_STATE = 3
EXIT_INCOMPLETE = 75

REPORT_SCHEMA = 1


class InputError(Exception):
    pass


def truncate(q, places: int = 6) -> str:
    """Decimal rendering rounded toward zero (never overstates a lower bound)."""
    q = Fraction(q)
    scale = 10**places
    t = math.trunc(q * scale)
    sign = "-" if t < 0 or (t == 0 and q < 0) else ""
    t = abs(t)
    return f"{sign}{t // scale}.{t % scale:0{places}d}"


def round_up(q, places: int = 6) -> str:
    q = Fraction(q)
    scale = 10**places
    t = math.ceil(q * scale)
    sign = "-" if t < 0 else ""
    t = abs(t)
    return f"{sign}{t // scale}.{t % scale:0{places}d}"


def parse_numbers(text: str, exact: bool) -> list:
    tokens = [tok for tok in text.replace("\n", ",").split(",") if tok.strip()]
    try:
        return [Fraction(tok.strip()) if exact else float(tok) for tok in tokens]
    except ValueError as exc:
        raise InputError(f"cannot parse coefficients: {exc}") from exc


def read_coefficients(args) -> list:
    if args.coeffs is not None and args.file is not None:
        raise InputError("give --coeffs or --file, not both")
    if args.coeffs is not None:
        return parse_numbers(args.coeffs, args.exact)
    if args.file is not None:
        try:
            return parse_numbers(Path(args.file).read_text(), args.exact)
        except OSError as exc:
            raise InputError(str(exc)) from exc
    raise InputError("one of --coeffs or --file is required")


def load_profile(args) -> CoefficientProfile:
    raw = read_coefficients(args)
    if args.normalize:
        return make_profile(args.n, raw, normalize=True, exact=args.exact)
    return CoefficientProfile(args.n, tuple(raw), normalized=False)


def env_threads() -> int:
    try:
        return max(1, int(os.environ.get("AUTOCONV_THREADS", "1")))
    except ValueError:
        return 1


def environment_stamp(threads: int) -> dict:
    return {"version": __version__, "python": platform.python_version(), "threads": threads}


def write_report(path, command: list, inputs: dict, outputs: dict, derived: dict, threads: int, wall: float):
    report = {
        "schema_version": REPORT_SCHEMA,
        "command": command,
        "inputs": inputs,
        "outputs": outputs,
        "derived": derived,
        "environment": environment_stamp(threads),
        "wall_time_s": wall,
    }
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def banner(mode: RangeMode, out) -> None:
    if mode is RangeMode.THEOREM:
        print("** range mode: theorem (2 <= ell <= 2n, -n <= k <= n-ell); not the default **", file=out)


def _fmt(x) -> str:
    return str(x) if isinstance(x, Fraction) else repr(float(x))


def cmd_eval(args, out) -> int:
    p = load_profile(args)
    modes = [RangeMode.THEOREM, RangeMode.PROOF] if args.range == "both" else [RangeMode(args.range)]
    for mode in modes:
        banner(mode, out)
        ev = objective(p, mode)
        wins = " ".join(f"(k={w.k},ell={w.ell})" for w in ev.argmax)
        print(f"[{mode.value}] value = {_fmt(ev.value)}", file=out)
        print(f"[{mode.value}] argmax = {wins}", file=out)
    try:
        print(f"step_sup = {_fmt(step_sup(p))}", file=out)
    except AutoconvError:
        print("step_sup = n/a (coefficients do not sum to 4n)", file=out)
    return EXIT_OK


def cmd_certify(args, out) -> int:
    mesh = MeshSpec(args.n, args.m)
    mode = RangeMode(args.range)
    threads = args.threads or env_threads()
    banner(mode, out)
    t0 = time.perf_counter()
    cp_path = args.checkpoint
    try:
        if cp_path is not None and Path(cp_path).exists():
            print(f"resuming from {cp_path}", file=out)
            cert = resume(cp_path, threads=threads, max_chunks=args.max_chunks, expect=(mesh, mode, args.method))
        else:
            cert = certify(mesh, mode, args.method, threads=threads, checkpoint_path=cp_path,
                           max_chunks=args.max_chunks)
    except Interrupted as exc:
        where = cp_path if cp_path else "(no --checkpoint given; progress discarded)"
        print(f"stopped before completion at chunk {exc.checkpoint.frontier.encode()}; checkpoint: {where}", file=out)
        return EXIT_INCOMPLETE
    except KeyboardInterrupt:
        print("interrupted; rerun with the same --checkpoint to resume", file=sys.stderr)
        return EXIT_INCOMPLETE
    wall = time.perf_counter() - t0
    text = cert.to_json(timing=args.timing)
    if args.output:
        Path(args.output).write_text(text)
    print(f"n = {cert.n}, m = {cert.m}, method = {cert.method}", file=out)
    print(f"lattice_min = {cert.lattice_min} ~ {truncate(cert.lattice_min, 9)}", file=out)
    print(f"certified_bound = {truncate(cert.certified_exact)}", file=out)
    derived = {}
    if cert.certified_exact > 0:
        sigma = round_up(Fraction(math.sqrt(2 / cert.certified_bound)) + Fraction(1, 10**12))
        print(f"implied: c >= {truncate(cert.certified_exact)}, sigma <= {sigma}", file=out)
        derived = {"c_lower": truncate(cert.certified_exact), "sigma_upper": sigma}
    if args.report:
        write_report(args.report, sys.argv, {"n": args.n, "m": args.m, "range_mode": mode.value,
                                             "method": args.method}, cert.to_dict(timing=True), derived,
                     threads, wall)
    return EXIT_OK


def cmd_search(args, out) -> int:
    mode = RangeMode(args.range)
    threads = args.threads or env_threads()
    banner(mode, out)
    cfg = SearchConfig(n=args.n, range_mode=mode, seed=args.seed, restarts=args.restarts,
                       max_iter=args.max_iter, symmetric=args.symmetric)
    t0 = time.perf_counter()
    res = multistart(cfg, threads=threads)
    wall = time.perf_counter() - t0
    data = res.to_dict()
    if args.output:
        Path(args.output).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    if args.csv:
        rows = ["restart,start_value,final_value,iterations"]
        rows += [f"{r.index},{r.start_value!r},{r.final_value!r},{r.iterations}" for r in res.per_restart]
        Path(args.csv).write_text("\n".join(rows) + "\n")
    print(f"best_value = {res.best_value:.9f}  (upper bound for a_{args.n}; no claim about c)", file=out)
    print("best_profile = " + ",".join(f"{x:.9f}" for x in res.best_profile.coeffs), file=out)
    print(f"step_sup = {res.step_sup:.9f}  (upper bound for c)", file=out)
    if res.asymmetric:
        print("NOTE: best profile is not reflection-symmetric", file=out)
    if args.report:
        write_report(args.report, sys.argv, {"config": {**vars(cfg), "range_mode": mode.value}},
                     data, {"c_upper_from_step_sup": res.step_sup}, threads, wall)
    return EXIT_OK


def cmd_convert(args, out) -> int:
    given = [x is not None for x in (args.c, args.sigma, args.coeffs or args.file)]
    if sum(given) != 1:
        raise InputError("give exactly one of --c, --sigma, --coeffs/--file")
    if args.c is not None:
        sc = ScaledConstants.from_c(args.c)
        print(f"c = {sc.c_value!r}  ->  sigma = sqrt(2/c) = {sc.sigma_value!r}", file=out)
        return EXIT_OK
    if args.sigma is not None:
        sc = ScaledConstants.from_sigma(args.sigma)
        print(f"sigma = {sc.sigma_value!r}  ->  c = 2/sigma^2 = {sc.c_value!r}", file=out)
        return EXIT_OK
    if args.n is None:
        raise InputError("--n is required with --coeffs/--file")
    args.normalize = True
    p = load_profile(args)
    print(f"step function on (-1/4, 1/4), {2 * p.n} steps of width 1/{4 * p.n}", file=out)
    print("x, (f*f)(x)", file=out)
    for x, y in step_function_nodes(p):
        print(f"{x}, {_fmt(y)}", file=out)
    sup = step_sup(p)
    print(f"sup f*f = {_fmt(sup)}  (c <= this; sigma >= {math.sqrt(2 / float(sup))!r})", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autoconv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_coeffs(p):
        p.add_argument("--coeffs", help="comma-separated coefficients a_{-n} .. a_{n-1}")
        p.add_argument("--file", help="file with one coefficient per line or one comma-separated line")
        p.add_argument("--exact", action="store_true", help="parse coefficients as exact rationals")

    p = sub.add_parser("eval", help="evaluate the window objective of a profile")
    p.add_argument("--n", type=int, required=True)
    add_coeffs(p)
    p.add_argument("--range", choices=["proof", "theorem", "both"], default="proof")
    p.add_argument("--normalize", action="store_true", help="rescale coefficients to sum 4n")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("certify", help="certify a lower bound on a_n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True, help="mass quanta of the lattice")
    p.add_argument("--range", choices=["proof", "theorem"], default="proof")
    p.add_argument("--method", choices=METHODS, default=CELLS)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $AUTOCONV_THREADS or 1)")
    p.add_argument("--checkpoint", help="checkpoint file; resumed if it exists")
    p.add_argument("--output", help="certificate JSON path")
    p.add_argument("--report", help="run report JSON path")
    p.add_argument("--timing", action="store_true", help="record elapsed_s in the certificate")
    p.add_argument("--max-chunks", type=int, default=None, help="stop after this many chunks")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("search", help="multistart descent for upper bounds on a_n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--symmetric", action="store_true")
    p.add_argument("--range", choices=["proof", "theorem"], default="proof")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--output", help="search result JSON path")
    p.add_argument("--csv", help="per-restart summary CSV path")
    p.add_argument("--report", help="run report JSON path")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("convert", help="convert between c and sigma, or describe a step function")
    p.add_argument("--c", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--n", type=int)
    add_coeffs(p)
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args, out)
    except CheckpointError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_STATE
    except (InputError, AutoconvError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
