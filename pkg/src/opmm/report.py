"""Performance metrics, the results CSV and the worker-count benchmark."""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from typing import Sequence, TextIO

from .errors import InputError, SchemaError
from .estimation import EstimationConfig, EstimationResult, estimate_batch
from .plant import ModelSpec, get_model
from .trajectory import SaccadeTrajectory

BENCH_HEADER = "workers,n,wall_time_s,throughput_per_s,speedup,mean_residual_deg"


def speedup(t_reference: float, t_candidate: float) -> float:
    if not (t_reference > 0 and t_candidate > 0):
        raise InputError("speedup needs positive run times")
    return t_reference / t_candidate


def throughput(n: int, wall_time: float) -> float:
    """OPC vectors returned per second."""
    if not wall_time > 0:
        raise InputError("throughput needs a positive wall time")
    return n / wall_time


def accuracy(per_saccade_errors: Sequence[float], per_saccade_sample_counts: Sequence[int]) -> float:
    """Mean over saccades of the per-sample absolute residual (deg)."""
    if not per_saccade_errors:
        raise InputError("accuracy of an empty run is undefined")
    if len(per_saccade_errors) != len(per_saccade_sample_counts):
        raise InputError("errors and sample counts differ in length")
    if any(c < 1 for c in per_saccade_sample_counts):
        raise InputError("sample counts must be at least 1")
    per_sample = [e / c for e, c in zip(per_saccade_errors, per_saccade_sample_counts)]
    return sum(per_sample) / len(per_sample)


def results_header(model: ModelSpec, with_exit_reason: bool = False) -> str:
    cols = ["SacNo", "OptErr", "CPU_check"] + [label for label, _ in model.result_columns]
    if with_exit_reason:
        cols.append("exit_reason")
    return ",".join(cols)


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def format_result_row(result: EstimationResult, model: ModelSpec,
                      with_exit_reason: bool = False) -> str:
    opc = result.opc
    cells = [str(result.saccade_id), _fmt(result.opt_err), _fmt(result.cpu_check)]
    cells += [_fmt(opc[name]) for _, name in model.result_columns]
    if with_exit_reason:
        cells.append(result.exit_reason)
    return ",".join(cells)


def write_results_csv(results: Sequence[EstimationResult], sink: TextIO,
                      model: ModelSpec | None = None, with_exit_reason: bool = False) -> int:
    """Write one row per result in ``SacNo`` order; returns the number of bytes written.

    Every real is printed with six decimals and lines end in ``\\n``.
    ``model`` is only needed for an empty result list (default: the
    18-parameter model).
    """
    model_ids = {r.opc.model_id for r in results}
    if len(model_ids) > 1:
        raise SchemaError(f"results mix models: {sorted(model_ids)}")
    if model_ids:
        (model_id,) = model_ids
        if model is not None and model.model_id != model_id:
            raise SchemaError(f"results are for {model_id!r}, not {model.model_id!r}")
        model = get_model(model_id) if model is None else model
    elif model is None:
        model = get_model("komogortsev18")

    lines = [results_header(model, with_exit_reason)]
    lines += [format_result_row(r, model, with_exit_reason)
              for r in sorted(results, key=lambda r: r.saccade_id)]
    text = "\n".join(lines) + "\n"
    sink.write(text)
    return len(text.encode("utf-8"))


def results_csv_text(results: Sequence[EstimationResult], model: ModelSpec | None = None,
                     with_exit_reason: bool = False) -> str:
    buf = io.StringIO()
    write_results_csv(results, buf, model, with_exit_reason)
    return buf.getvalue()


@dataclass(frozen=True)
class RunStats:
    n_saccades: int
    wall_time: float
    workers: int
    per_saccade_errors: list[float] = field(default_factory=list)
    per_saccade_samples: list[int] = field(default_factory=list)
    speedup: float = 1.0

    def __post_init__(self):
        if not self.wall_time > 0:
            raise InputError("wall_time must be positive")
        if len(self.per_saccade_errors) != self.n_saccades:
            raise InputError("one error per saccade expected")

    @property
    def throughput(self) -> float:
        return throughput(self.n_saccades, self.wall_time)

    @property
    def mean_residual(self) -> float:
        return accuracy(self.per_saccade_errors, self.per_saccade_samples)

    @property
    def mean_raw_residual(self) -> float:
        return sum(self.per_saccade_errors) / len(self.per_saccade_errors)


def benchmark(saccades: Sequence[SaccadeTrajectory], model: ModelSpec,
              config: EstimationConfig | None, worker_counts: Sequence[int]) -> list[RunStats]:
    """Run the batch once per worker count, one configuration at a time.

    Speedup is relative to the ``workers=1`` row when present, else the first row.
    """
    if not worker_counts:
        raise InputError("worker_counts must not be empty")
    if not saccades:
        raise InputError("benchmark needs at least one saccade")
    rows = []
    for workers in worker_counts:
        started = time.perf_counter()
        results = estimate_batch(saccades, model, config, workers=workers)
        wall = time.perf_counter() - started
        rows.append((workers, wall, results))

    reference = next((wall for w, wall, _ in rows if w == 1), rows[0][1])
    return [
        RunStats(
            n_saccades=len(results), wall_time=wall, workers=workers,
            per_saccade_errors=[r.opt_err for r in results],
            per_saccade_samples=[r.n_samples for r in results],
            speedup=speedup(reference, wall),
        )
        for workers, wall, results in rows
    ]


def write_bench_csv(stats: Sequence[RunStats], sink: TextIO) -> None:
    sink.write(BENCH_HEADER + "\n")
    for s in stats:
        sink.write(f"{s.workers},{s.n_saccades},{s.wall_time:.6f},{s.throughput:.6f},"
                   f"{s.speedup:.6f},{s.mean_residual:.6f}\n")


def format_bench_table(stats: Sequence[RunStats]) -> str:
    head = (f"{'workers':>7} {'n':>6} {'wall (s)':>10} {'OPC/s':>10} {'speedup':>8} "
            f"{'resid/sample':>13} {'resid/saccade':>14}")
    lines = [head, "-" * len(head)]
    for s in stats:
        lines.append(
            f"{s.workers:>7d} {s.n_saccades:>6d} {s.wall_time:>10.3f} {s.throughput:>10.2f} "
            f"{s.speedup:>8.2f} {s.mean_residual:>13.6f} {s.mean_raw_residual:>14.6f}"
        )
    return "\n".join(lines)
