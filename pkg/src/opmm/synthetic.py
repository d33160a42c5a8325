"""Deterministic synthetic saccade workloads.

Each saccade perturbs one parameter of the model defaults; the perturbed
parameter cycles fastest and the relative level cycles once per full pass
over the parameters, so the workload is reproducible without any RNG.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .plant import ModelSpec, OpcVector, simulate
from .trajectory import RecordingSample, SaccadeTrajectory

DEFAULT_LEVELS = (0.05, -0.05, 0.10, -0.10, 0.20, -0.20)
DEFAULT_DURATION = 46.0
DEFAULT_AMPLITUDE = 10.0


@dataclass(frozen=True)
class SyntheticSaccade:
    saccade: SaccadeTrajectory
    opc: OpcVector
    target: float


def self_consistent_target(opc: OpcVector, duration: float, dt: float,
                           guess: float = DEFAULT_AMPLITUDE) -> float:
    """Landing target whose simulation ends exactly on that target.

    The objective reads the target from the recording's last sample, so a
    synthetic recording only has the generating vector as an exact zero if
    its final position equals the target it was generated with.
    """
    def gap(a):
        return simulate(opc, duration, a, dt).positions[-1] - a

    hi = max(guess, 1.0)
    while gap(hi) > 0:
        hi *= 2.0
    return float(brentq(gap, 0.0, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps))


def perturbation_schedule(model: ModelSpec, n: int, parameters: Sequence[str] | None = None,
                          levels: Sequence[float] = DEFAULT_LEVELS) -> list[tuple[str, float]]:
    parameters = list(parameters or model.parameter_names)
    return [(parameters[i % len(parameters)], levels[(i // len(parameters)) % len(levels)])
            for i in range(n)]


def sign_pattern_schedule(n: int, parameters: Sequence[str], level: float
                          ) -> list[dict[str, float]]:
    """Perturb every parameter at once; saccade ``i`` takes its signs from the bits of ``i``."""
    k = len(parameters)
    return [{name: level if ((i % (1 << k)) >> j) & 1 else -level
             for j, name in enumerate(parameters)} for i in range(n)]


def synthetic_saccades(model: ModelSpec, n: int, parameters: Sequence[str] | None = None,
                       levels: Sequence[float] = DEFAULT_LEVELS,
                       durations: Sequence[float] = (DEFAULT_DURATION,), dt: float = 1.0,
                       initial_positions: Sequence[float] = (0.0,),
                       joint: bool = False) -> list[SyntheticSaccade]:
    """``n`` simulated saccades with ids ``1..n``.

    With ``joint`` every listed parameter is perturbed by ``levels[0]`` in
    each saccade, signs following :func:`sign_pattern_schedule`; otherwise
    one parameter per saccade follows :func:`perturbation_schedule`.
    Durations (ms) and onset positions (deg) are cycled in step with ``i``.
    """
    if joint:
        plan = sign_pattern_schedule(n, list(parameters or model.parameter_names), levels[0])
    else:
        plan = [{name: level} for name, level in perturbation_schedule(model, n, parameters, levels)]
    out = []
    for i, changes in enumerate(plan):
        duration = durations[i % len(durations)]
        base = model.resolve(model.defaults, duration, dt)
        for name, level in changes.items():
            base[model.parameter_names.index(name)] *= 1.0 + level
        opc = model.opc(base)
        target = self_consistent_target(opc, duration, dt)
        start = initial_positions[i % len(initial_positions)]
        sim = simulate(opc, duration, target, dt, start)
        out.append(SyntheticSaccade(SaccadeTrajectory(i + 1, dt, sim.positions, 0.0), opc, target))
    return out


def synthetic_recording(saccades: Sequence[SaccadeTrajectory], fixation_samples: int = 100,
                        dt: float = 1.0) -> list[RecordingSample]:
    """Splice saccades into one recording separated by steady fixations.

    Each saccade is shifted to start where the previous one landed.
    """
    samples = []
    t = 0.0
    position = 0.0
    for sac in saccades:
        for _ in range(fixation_samples):
            samples.append(RecordingSample(t, position))
            t += dt
        shape = sac.positions - sac.positions[0] + position
        for value in shape[1:]:
            samples.append(RecordingSample(t, float(value)))
            t += dt
        position = float(shape[-1])
    for _ in range(fixation_samples):
        samples.append(RecordingSample(t, position))
        t += dt
    return samples
