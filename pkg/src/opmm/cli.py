"""Command-line entry point: ``opmm {simulate,detect,estimate,bench}``.

Exit codes: 0 success, 1 I/O or unreadable input, 2 invalid argument,
3 nothing left to process.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
import time
from pathlib import Path

from .errors import DomainError, InputError, ModelLookupError, OpmmError
from .estimation import FAILED, EstimationConfig, estimate_batch
from .plant import get_model, simulate
from .report import (
    accuracy, benchmark, format_bench_table, throughput, write_bench_csv, write_results_csv,
)
from .synthetic import synthetic_saccades
from .trajectory import (
    DEFAULT_IVT_THRESHOLD, DEFAULT_MIN_AMPLITUDE, DEFAULT_MIN_DURATION, detect_saccades,
    parse_recording,
)

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_EMPTY = 0, 1, 2, 3

log = logging.getLogger("opmm")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {text!r}")
    return value


def _worker_list(text: str) -> list[int]:
    return [_positive_int(part) for part in text.split(",") if part.strip()]


def _override(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--model", default="komogortsev18", help="registered model id")
    shared.add_argument("--out", type=Path, help="output file (default: stdout)")
    shared.add_argument("--workers", type=_worker_list, default=[1],
                        help="worker processes; bench accepts a comma-separated list")
    shared.add_argument("--ivt-threshold", type=_positive_float, default=DEFAULT_IVT_THRESHOLD,
                        help="I-VT velocity threshold, deg/s")
    shared.add_argument("--min-amplitude", type=_positive_float, default=DEFAULT_MIN_AMPLITUDE,
                        help="discard saccades smaller than this, deg")
    shared.add_argument("--min-duration", type=_positive_float, default=DEFAULT_MIN_DURATION,
                        help="discard saccades shorter than this, ms")
    shared.add_argument("--tol-x", type=_positive_float, default=1e-4)
    shared.add_argument("--tol-f", type=_positive_float, default=1e-4)
    shared.add_argument("--max-iters", type=_positive_int, default=None,
                        help="Nelder-Mead iteration cap (default 200 per parameter)")
    shared.add_argument("--time-budget", type=_positive_float, default=10.0,
                        help="CPU seconds allowed per saccade")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="opmm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[shared], help="simulate one saccade")
    p.add_argument("--set", dest="overrides", type=_override, action="append", default=[],
                   metavar="NAME=VALUE", help="override one model parameter")
    p.add_argument("--duration", type=_positive_float, default=46.0, help="ms")
    p.add_argument("--amplitude", type=float, default=10.0, help="landing target, deg")
    p.add_argument("--dt", type=_positive_float, default=1.0, help="ms")
    p.add_argument("--initial", type=float, default=0.0, help="onset position, deg")

    p = sub.add_parser("detect", parents=[shared], help="list saccades found in a recording")
    p.add_argument("input", type=Path)

    p = sub.add_parser("estimate", parents=[shared], help="estimate OPCs for every saccade")
    p.add_argument("inputs", type=Path, nargs="+")
    p.add_argument("--with-exit-reason", action="store_true",
                   help="append an exit_reason column to the results")

    p = sub.add_parser("bench", parents=[shared], help="compare worker counts")
    p.add_argument("inputs", type=Path, nargs="*")
    p.add_argument("--synthetic", type=_positive_int, metavar="N",
                   help="use N deterministic synthetic saccades as the workload")
    return parser


@contextlib.contextmanager
def _open_out(path: Path | None):
    if path is None:
        yield sys.stdout
        return
    try:
        handle = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from None
    with handle:
        yield handle


def _model(args):
    try:
        return get_model(args.model)
    except ModelLookupError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def _config(args) -> EstimationConfig:
    return EstimationConfig(tol_x=args.tol_x, tol_f=args.tol_f, max_iterations=args.max_iters,
                            time_budget=args.time_budget)


def _load_saccades(args, paths):
    saccades = []
    for path in paths:
        try:
            with open(path, "rb") as fh:
                samples = parse_recording(fh)
        except OSError as exc:
            raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None
        except InputError as exc:
            raise CliError(f"{path}: {exc}", EXIT_IO) from None
        saccades += detect_saccades(samples, args.ivt_threshold, args.min_amplitude,
                                    args.min_duration, first_id=len(saccades) + 1)
    return saccades


def cmd_simulate(args) -> int:
    model = _model(args)
    opc = model.default_opc()
    try:
        opc = opc.replace(**dict(args.overrides))
    except KeyError as exc:
        raise CliError(f"unknown parameter: {exc.args[0]}", EXIT_USAGE) from None
    try:
        traj = simulate(opc, args.duration, args.amplitude, args.dt, args.initial)
    except DomainError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    with _open_out(args.out) as out:
        out.write("t_ms,position_deg,velocity_dps\n")
        for t, pos, vel in zip(traj.times, traj.positions, traj.velocities):
            out.write(f"{t:.6f},{pos:.6f},{vel:.6f}\n")
    return EXIT_OK


def cmd_detect(args) -> int:
    saccades = _load_saccades(args, [args.input])
    with _open_out(args.out) as out:
        out.write("saccade_id,onset_ms,duration_ms,amplitude_deg,n_samples\n")
        for s in saccades:
            out.write(f"{s.saccade_id},{s.onset_time:.6f},{s.duration:.6f},"
                      f"{s.amplitude:.6f},{s.n_samples}\n")
    return EXIT_OK


def cmd_estimate(args) -> int:
    model = _model(args)
    if len(args.workers) != 1:
        raise CliError("estimate takes a single --workers value", EXIT_USAGE)
    saccades = _load_saccades(args, args.inputs)
    if not saccades:
        raise CliError("no saccades left after detection and filtering", EXIT_EMPTY)
    started = time.perf_counter()
    results = estimate_batch(saccades, model, _config(args), workers=args.workers[0])
    wall = time.perf_counter() - started
    with _open_out(args.out) as out:
        write_results_csv(results, out, model, with_exit_reason=args.with_exit_reason)

    ok = [r for r in results if r.exit_reason != FAILED]
    summary = sys.stdout if args.out is not None else sys.stderr
    print(f"saccades: {len(results)} ({len(results) - len(ok)} failed)", file=summary)
    print(f"wall time: {wall:.3f} s", file=summary)
    print(f"throughput: {throughput(len(results), wall):.2f} OPC vectors/s", file=summary)
    if ok:
        residual = accuracy([r.opt_err for r in ok], [r.n_samples for r in ok])
        print(f"mean residual: {residual:.6f} deg/sample", file=summary)
    if not ok:
        raise CliError("no saccades could be estimated", EXIT_EMPTY)
    return EXIT_OK


def cmd_bench(args) -> int:
    model = _model(args)
    if args.synthetic:
        saccades = [s.saccade for s in synthetic_saccades(
            model, args.synthetic, initial_positions=(-10.0, -5.0, 0.0, 5.0, 10.0))]
    elif args.inputs:
        saccades = _load_saccades(args, args.inputs)
    else:
        raise CliError("bench needs input recordings or --synthetic N", EXIT_USAGE)
    if not saccades:
        raise CliError("no saccades to benchmark", EXIT_EMPTY)
    stats = benchmark(saccades, model, _config(args), args.workers)
    with _open_out(args.out) as out:
        write_bench_csv(stats, out)
    print(format_bench_table(stats), file=sys.stdout if args.out is not None else sys.stderr)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "detect": cmd_detect, "estimate": cmd_estimate,
            "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"opmm {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except OpmmError as exc:
        print(f"opmm {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
