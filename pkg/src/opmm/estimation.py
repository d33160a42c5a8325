"""OPC estimation: trajectory-matching objective, per-saccade search and batch execution."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DivergenceError, InputError, ValidationError
from .plant import ModelSpec, OpcVector, get_model, register_model, simulate
from .simplex import DEFAULT_INIT_SCALE, nelder_mead
from .trajectory import SaccadeTrajectory

log = logging.getLogger(__name__)

DEFAULT_PENALTY = 1e10
FAILED = "failed"
CPU_CHECK_MISMATCH = "cpu_check_mismatch"
CPU_CHECK_RTOL = 1e-9


@dataclass(frozen=True)
class EstimationConfig:
    tol_x: float = 1e-4
    tol_f: float = 1e-4
    max_iterations: int | None = None  # None: 200 per estimated parameter
    time_budget: float = 10.0          # CPU seconds per saccade
    simplex_init_scale: float = DEFAULT_INIT_SCALE
    penalty_base: float = DEFAULT_PENALTY

    def __post_init__(self):
        if not (self.tol_x > 0 and self.tol_f > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.time_budget > 0:
            raise ValueError("time_budget must be positive")
        if not self.simplex_init_scale > 0:
            raise ValueError("simplex_init_scale must be positive")
        if not self.penalty_base > 0:
            raise ValueError("penalty_base must be positive")


@dataclass(frozen=True)
class EstimationResult:
    saccade_id: int
    opt_err: float
    cpu_check: float
    opc: OpcVector
    iterations: int
    exit_reason: str
    n_samples: int


class SaccadeObjective:
    """Sum of absolute position errors (deg) between a recording and its simulation.

    Leftward saccades are mirrored about their onset position so the plant
    is always driven in its positive direction.  Candidates below the
    model's physical floors are rejected with ``penalty_base * (1 + violation)``
    without simulating; a diverging simulation scores ``penalty_base``.
    """

    def __init__(self, saccade: SaccadeTrajectory, model: ModelSpec,
                 penalty_base: float = DEFAULT_PENALTY):
        if not isinstance(saccade, SaccadeTrajectory):
            raise InputError("expected a SaccadeTrajectory")
        self.model = model
        self.penalty_base = penalty_base
        rec = saccade.positions
        onset = float(rec[0])
        self.mirrored = saccade.displacement < 0
        self.recorded = 2.0 * onset - rec if self.mirrored else rec
        self.initial_theta = float(self.recorded[0])
        self.target = float(self.recorded[-1] - self.recorded[0])
        self.dt = saccade.dt
        self.duration = saccade.duration

    def __call__(self, values) -> float:
        violation = self.model.bound_violation(values)
        if violation > 0:
            return self.penalty_base * (1.0 + violation)
        try:
            sim = simulate(self.model.opc(values), self.duration, self.target, self.dt,
                           self.initial_theta)
        except DivergenceError:
            return self.penalty_base
        return float(np.sum(np.abs(sim.positions - self.recorded)))


def objective(opc_values, saccade: SaccadeTrajectory, model: ModelSpec,
              penalty_base: float = DEFAULT_PENALTY) -> float:
    return SaccadeObjective(saccade, model, penalty_base)(opc_values)


def starting_point(saccade: SaccadeTrajectory, model: ModelSpec) -> np.ndarray:
    """Model defaults with duration-dependent placeholders resolved for ``saccade``."""
    return model.resolve(model.defaults, saccade.duration, saccade.dt)


def estimate_saccade(saccade: SaccadeTrajectory, model: ModelSpec,
                     config: EstimationConfig | None = None) -> EstimationResult:
    config = config or EstimationConfig()
    if not isinstance(saccade, SaccadeTrajectory):
        raise InputError("expected a SaccadeTrajectory")
    obj = SaccadeObjective(saccade, model, config.penalty_base)
    full = starting_point(saccade, model)
    free = np.flatnonzero(model.estimation_mask)

    def search_objective(z):
        x = full.copy()
        x[free] = z
        return obj(x)

    res = nelder_mead(
        search_objective, full[free], tol_x=config.tol_x, tol_f=config.tol_f,
        max_iterations=config.max_iterations, time_budget=config.time_budget,
        init_scale=config.simplex_init_scale,
    )
    best = full.copy()
    best[free] = res.x
    return EstimationResult(
        saccade_id=saccade.saccade_id,
        opt_err=res.fun,
        cpu_check=obj(best),
        opc=model.opc(best),
        iterations=res.iterations,
        exit_reason=res.exit_reason,
        n_samples=saccade.n_samples,
    )


def failed_result(saccade: SaccadeTrajectory, model: ModelSpec) -> EstimationResult:
    return EstimationResult(
        saccade_id=saccade.saccade_id, opt_err=math.nan, cpu_check=math.nan,
        opc=model.opc(starting_point(saccade, model)), iterations=0, exit_reason=FAILED,
        n_samples=saccade.n_samples,
    )


def _estimate_task(args) -> EstimationResult:
    saccade, model, config = args
    try:
        get_model(model.model_id)
    except LookupError:
        # Worker started without the parent's runtime registrations.
        register_model(model)
    try:
        return estimate_saccade(saccade, model, config)
    except Exception:
        log.exception("estimation failed for saccade %s", saccade.saccade_id)
        return failed_result(saccade, model)


def cpu_check(result: EstimationResult, saccade: SaccadeTrajectory, model: ModelSpec,
              penalty_base: float = DEFAULT_PENALTY) -> EstimationResult:
    """Recompute the objective in the calling thread and compare with ``opt_err``.

    Failed results carry no error to check and are returned unchanged.
    """
    if result.exit_reason == FAILED:
        return result
    value = objective(np.array(result.opc.values), saccade, model, penalty_base)
    checked = replace(result, cpu_check=value)
    if not abs(value - result.opt_err) <= CPU_CHECK_RTOL * max(1.0, abs(result.opt_err)):
        raise ValidationError(
            f"saccade {result.saccade_id}: OptErr {result.opt_err!r} "
            f"disagrees with serial recomputation {value!r}"
        )
    return checked


def estimate_batch(saccades: Sequence[SaccadeTrajectory], model: ModelSpec,
                   config: EstimationConfig | None = None, workers: int = 1,
                   validate: bool = True) -> list[EstimationResult]:
    """Estimate every saccade independently on up to ``workers`` processes.

    Output order follows input order and equals the serial map regardless of
    ``workers``.  A saccade that fails is reported through its
    ``exit_reason`` instead of aborting the batch.  With ``validate`` the
    returned ``cpu_check`` values are recomputed serially in this process.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    config = config or EstimationConfig()
    tasks = [(s, model, config) for s in saccades]
    if not tasks:
        return []
    if workers == 1 or len(tasks) == 1:
        results = [_estimate_task(t) for t in tasks]
    else:
        chunksize = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_estimate_task, tasks, chunksize=chunksize))
    if not validate:
        return results
    checked = []
    for result, saccade in zip(results, saccades):
        try:
            checked.append(cpu_check(result, saccade, model, config.penalty_base))
        except ValidationError as exc:
            log.error("%s", exc)
            checked.append(replace(result, exit_reason=CPU_CHECK_MISMATCH))
    return checked
