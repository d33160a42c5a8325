"""Nelder-Mead simplex minimization (Lagarias et al. decision step)."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

RHO = 1.0    # reflection
CHI = 2.0    # expansion
GAMMA = 0.5  # contraction
SIGMA = 0.5  # shrink

DEFAULT_INIT_SCALE = 0.05
# Absolute perturbation, before scaling, for coordinates that start at zero.
ZERO_COORD_STEP = 0.00025

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
TIME_BUDGET = "time_budget"


@dataclass
class SimplexState:
    vertices: np.ndarray  # (n + 1, n)
    fvals: np.ndarray     # (n + 1,)

    @property
    def n(self) -> int:
        return self.vertices.shape[1]

    def sort(self) -> None:
        order = np.argsort(self.fvals, kind="stable")
        self.vertices = self.vertices[order]
        self.fvals = self.fvals[order]

    def x_spread(self) -> float:
        if len(self.vertices) < 2:
            return 0.0
        return float(np.max(np.abs(self.vertices[1:] - self.vertices[0])))

    def f_spread(self) -> float:
        if len(self.fvals) < 2:
            return 0.0
        return float(np.max(np.abs(self.fvals[1:] - self.fvals[0])))


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    exit_reason: str
    evaluations: int


def initial_simplex(x0, scale: float = DEFAULT_INIT_SCALE) -> np.ndarray:
    """Vertex 0 is ``x0``; vertex ``i`` scales coordinate ``i-1`` by ``1 + scale``."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    vertices = np.tile(x0, (n + 1, 1))
    for i in range(n):
        if x0[i] != 0.0:
            vertices[i + 1, i] = (1.0 + scale) * x0[i]
        else:
            vertices[i + 1, i] = scale * ZERO_COORD_STEP
    return vertices


def _finite_or_inf(value) -> float:
    value = float(value)
    return math.inf if math.isnan(value) else value


def nelder_mead(f: Callable[[np.ndarray], float], x0, *, tol_x: float = 1e-4,
                tol_f: float = 1e-4, max_iterations: int | None = None,
                time_budget: float | None = None, init_scale: float = DEFAULT_INIT_SCALE,
                callback: Callable[[SimplexState], None] | None = None) -> SimplexResult:
    """Minimize ``f`` from ``x0``.

    Exits ``converged`` once the largest coordinate distance of any vertex
    from the best one is within ``tol_x`` *and* the largest objective gap is
    within ``tol_f``.  Otherwise stops after ``max_iterations`` decision
    steps (default ``200 * n``) or once ``time_budget`` seconds of CPU time
    have been spent in the calling thread.  NaN objective values rank as
    ``+inf``.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    if max_iterations is None:
        max_iterations = 200 * max(n, 1)
    started = time.thread_time()
    evaluations = 0

    def fx(x):
        nonlocal evaluations
        evaluations += 1
        return _finite_or_inf(f(x))

    vertices = initial_simplex(x0, init_scale)
    state = SimplexState(vertices, np.array([fx(v) for v in vertices]))
    state.sort()

    iterations = 0
    while True:
        if callback is not None:
            callback(state)
        if state.x_spread() <= tol_x and state.f_spread() <= tol_f:
            reason = CONVERGED
            break
        if iterations >= max_iterations:
            reason = MAX_ITERATIONS
            break
        if time_budget is not None and time.thread_time() - started >= time_budget:
            reason = TIME_BUDGET
            break

        v, fv = state.vertices, state.fvals
        worst = v[-1]
        centroid = v[:-1].mean(axis=0)

        xr = (1.0 + RHO) * centroid - RHO * worst
        fr = fx(xr)
        shrink = False
        if fr < fv[0]:
            xe = (1.0 + RHO * CHI) * centroid - RHO * CHI * worst
            fe = fx(xe)
            if fe < fr:
                v[-1], fv[-1] = xe, fe
            else:
                v[-1], fv[-1] = xr, fr
        elif fr < fv[-2]:
            v[-1], fv[-1] = xr, fr
        elif fr < fv[-1]:
            xc = (1.0 + RHO * GAMMA) * centroid - RHO * GAMMA * worst
            fc = fx(xc)
            if fc <= fr:
                v[-1], fv[-1] = xc, fc
            else:
                shrink = True
        else:
            xcc = (1.0 - GAMMA) * centroid + GAMMA * worst
            fcc = fx(xcc)
            if fcc < fv[-1]:
                v[-1], fv[-1] = xcc, fcc
            else:
                shrink = True
        if shrink:
            for i in range(1, n + 1):
                v[i] = v[0] + SIGMA * (v[i] - v[0])
                fv[i] = fx(v[i])
        state.sort()
        iterations += 1

    return SimplexResult(
        x=state.vertices[0].copy(), fun=float(state.fvals[0]), iterations=iterations,
        exit_reason=reason, evaluations=evaluations,
    )
