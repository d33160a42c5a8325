"""Linear homeomorphic oculomotor plant: parameter models, pulse-step control and RK4 simulation.

Units follow one self-consistent family: stiffness g/deg, damping g*s/deg,
inertia g*s^2/deg, forces g, time constants and time steps ms.  Angular
velocity is carried in deg/s so it can be fed straight to I-VT tooling.

State vector layout (all views of the same 6-vector)::

    0 theta   eye rotation relative to saccade onset (deg)
    1 omega   angular velocity (deg/s)
    2 x_ag    agonist muscle node displacement (deg)
    3 x_ant   antagonist muscle node displacement (deg)
    4 f_ag    agonist active-state tension (g)
    5 f_ant   antagonist active-state tension (g)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DivergenceError, DomainError, DuplicateModelError, ModelLookupError

# Canonical order of the full two-muscle parameter set.
PLANT_PARAMETERS = (
    "K_SE_AG", "K_SE_ANT", "K_LT_AG", "K_LT_ANT", "B_AG", "B_ANT", "B_P",
    "N_C_AG", "N_C_ANT", "J", "TAU_AC_AG", "TAU_AC_ANT", "TAU_DE_AG", "TAU_DE_ANT",
    "N_C_FIX", "N_SAC_AG", "N_SAC_ANT", "PW",
)
(K_SE_AG, K_SE_ANT, K_LT_AG, K_LT_ANT, B_AG, B_ANT, B_P, N_C_AG, N_C_ANT, J,
 TAU_AC_AG, TAU_AC_ANT, TAU_DE_AG, TAU_DE_ANT, N_C_FIX, N_SAC_AG, N_SAC_ANT, PW) = range(18)

STATE_FIELDS = ("theta", "omega", "x_ag", "x_ant", "f_ag", "f_ant")

# Offset subtracted from the saccade duration when the pulse width is left to the data.
PULSE_WIDTH_OFFSET_MS = 6.0
# Innervation targets are never allowed below this level.
MIN_INNERVATION = 0.01
# Marks a default that is resolved from the saccade being simulated.
FROM_DURATION = math.nan

MS_PER_S = 1000.0


@dataclass(frozen=True)
class OpcVector:
    """Named, immutable parameter vector belonging to one registered model."""

    model_id: str
    names: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ValueError(
                f"{self.model_id}: {len(self.values)} values for {len(self.names)} parameters"
            )
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __getattr__(self, name):
        # Only reached for names that are not dataclass fields.
        names = object.__getattribute__(self, "names")
        if name in names:
            return object.__getattribute__(self, "values")[names.index(name)]
        raise AttributeError(name)

    def __getitem__(self, name: str) -> float:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def __len__(self):
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))

    def replace(self, **updates: float) -> "OpcVector":
        unknown = set(updates) - set(self.names)
        if unknown:
            raise KeyError(f"unknown parameter(s) for {self.model_id}: {sorted(unknown)}")
        return OpcVector(
            self.model_id, self.names, tuple(updates.get(n, v) for n, v in zip(self.names, self.values))
        )

    def with_values(self, values: Sequence[float]) -> "OpcVector":
        return OpcVector(self.model_id, self.names, tuple(values))


@dataclass(frozen=True)
class ModelSpec:
    """A registered plant model.

    ``expand`` maps this model's parameter values onto the full 18-entry
    plant parameter set, for models that reuse the linear homeomorphic
    dynamics.  Models with dynamics of their own supply ``simulator``
    instead; it is called as ``simulator(opc, duration, target, dt, initial_theta)``.
    ``result_columns`` lists ``(csv label, parameter name)`` in output order.
    """

    model_id: str
    parameter_names: tuple[str, ...]
    defaults: tuple[float, ...]
    physical_lower_bounds: tuple[float, ...]
    estimation_mask: tuple[bool, ...]
    expand: Callable[[np.ndarray, float, float], np.ndarray] | None = None
    simulator: Callable[..., "SimulatedTrajectory"] | None = None
    duration_placeholders: Mapping[str, float] = field(default_factory=dict)
    result_columns: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        n = len(self.parameter_names)
        if len(set(self.parameter_names)) != n:
            raise ValueError(f"{self.model_id}: parameter names are not unique")
        for label, seq in (("defaults", self.defaults),
                           ("physical_lower_bounds", self.physical_lower_bounds),
                           ("estimation_mask", self.estimation_mask)):
            if len(seq) != n:
                raise ValueError(f"{self.model_id}: {label} has {len(seq)} entries, expected {n}")
        if any(b < 0 for b in self.physical_lower_bounds):
            raise ValueError(f"{self.model_id}: physical floors must be nonnegative")
        if self.expand is None and self.simulator is None:
            raise ValueError(f"{self.model_id}: needs either expand or simulator")
        if not set(self.duration_placeholders) <= set(self.parameter_names):
            raise ValueError(f"{self.model_id}: placeholder for unknown parameter")
        for _, name in self.result_columns:
            if name not in self.parameter_names:
                raise ValueError(f"{self.model_id}: result column for unknown parameter {name}")

    @property
    def n_parameters(self) -> int:
        return len(self.parameter_names)

    def default_opc(self) -> OpcVector:
        return OpcVector(self.model_id, self.parameter_names, self.defaults)

    def opc(self, values: Sequence[float]) -> OpcVector:
        return OpcVector(self.model_id, self.parameter_names, tuple(values))

    def resolve(self, values: Sequence[float], duration: float, dt: float) -> np.ndarray:
        """Fill duration-dependent placeholders (NaN defaults) for one saccade."""
        out = np.array(values, dtype=float)
        for name, offset in self.duration_placeholders.items():
            i = self.parameter_names.index(name)
            if math.isnan(out[i]):
                out[i] = max(duration - offset, dt)
        return out

    def bound_violation(self, values: Sequence[float]) -> float:
        """Total amount by which ``values`` fall below the physical floors.

        NaN entries other than unresolved placeholders count as infinitely
        far outside the region.
        """
        total = 0.0
        for name, v, lo in zip(self.parameter_names, values, self.physical_lower_bounds):
            if math.isnan(v):
                if name in self.duration_placeholders:
                    continue
                return math.inf
            if v < lo:
                total += lo - v
        return total

    def is_physical(self, values: Sequence[float]) -> bool:
        return self.bound_violation(values) == 0.0

    def check_physical(self, values: Sequence[float]) -> None:
        for name, v, lo in zip(self.parameter_names, values, self.physical_lower_bounds):
            if math.isnan(v) and name in self.duration_placeholders:
                continue
            if not v >= lo:
                raise DomainError(f"non-physical parameter {name}={v!r} (floor {lo})")


@dataclass(frozen=True)
class ControlSignal:
    """Pulse-step innervation held constant across each integration step.

    ``pulse_window`` is ``[onset, offset)`` in step indices; a step whose
    span is only partly covered by the pulse belongs to the window and is
    integrated in two pieces split at ``pulse_width`` (ms).
    """

    dt: float
    n_ag: np.ndarray
    n_ant: np.ndarray
    pulse_window: tuple[int, int]
    pulse_width: float
    pulse_levels: tuple[float, float]
    step_levels: tuple[float, float]
    hold_levels: tuple[float, float]

    @property
    def n_steps(self) -> int:
        return len(self.n_ag)


@dataclass(frozen=True)
class SimulatedTrajectory:
    dt: float
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.positions) != len(self.velocities) or len(self.positions) < 1:
            raise ValueError("positions and velocities must have equal nonzero length")

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.positions)) * self.dt


# ---------------------------------------------------------------------------
# registry

_REGISTRY: dict[str, ModelSpec] = {}


def register_model(spec: ModelSpec) -> ModelSpec:
    if spec.model_id in _REGISTRY:
        raise DuplicateModelError(f"model {spec.model_id!r} is already registered")
    _REGISTRY[spec.model_id] = spec
    return spec


def get_model(model_id: str) -> ModelSpec:
    try:
        return _REGISTRY[model_id]
    except KeyError:
        raise ModelLookupError(
            f"unknown model {model_id!r}; registered: {', '.join(sorted(_REGISTRY))}"
        ) from None


def registered_models() -> list[str]:
    return sorted(_REGISTRY)


def default_opc(model_id: str) -> OpcVector:
    return get_model(model_id).default_opc()


# ---------------------------------------------------------------------------
# dynamics


def n_steps_for(duration: float, dt: float) -> int:
    # Tolerate durations reconstructed as (n - 1) * dt in floating point.
    return max(int(math.ceil(duration / dt - 1e-9)), 0)


def hold_levels(p: np.ndarray, theta: float) -> tuple[float, float]:
    """Innervation pair that holds the plant in static balance at ``theta``.

    The pair is split symmetrically about the tension intercept.  If that
    would drive either muscle below ``MIN_INNERVATION`` the weaker muscle is
    floored and the other one re-solved so the balance still holds.
    """
    # Per muscle at rest: n_m = a_m * theta_m + T * c_m with T the common tendon tension.
    a_ag = p[N_C_AG] + p[K_LT_AG]
    a_ant = p[N_C_ANT] + p[K_LT_ANT]
    c_ag = 1.0 + p[K_LT_AG] / p[K_SE_AG]
    c_ant = 1.0 + p[K_LT_ANT] / p[K_SE_ANT]
    tension = (2.0 * p[N_C_FIX] - (a_ag - a_ant) * theta) / (c_ag + c_ant)
    n_ag = a_ag * theta + tension * c_ag
    n_ant = -a_ant * theta + tension * c_ant
    if n_ant < MIN_INNERVATION:
        n_ant = MIN_INNERVATION
        tension = (n_ant + a_ant * theta) / c_ant
        n_ag = a_ag * theta + tension * c_ag
    elif n_ag < MIN_INNERVATION:
        n_ag = MIN_INNERVATION
        tension = (n_ag - a_ag * theta) / c_ag
        n_ant = -a_ant * theta + tension * c_ant
    return float(n_ag), float(n_ant)


def equilibrium_state(p: np.ndarray, theta: float = 0.0) -> np.ndarray:
    """Resting state at ``theta`` under :func:`hold_levels` innervation."""
    n_ag, n_ant = hold_levels(p, theta)
    # Node balance per muscle with theta_m = s_m * theta and x_m = theta_m + T / K_SE_m.
    tension = (n_ag - (p[N_C_AG] + p[K_LT_AG]) * theta) / (1.0 + p[K_LT_AG] / p[K_SE_AG])
    x_ag = theta + tension / p[K_SE_AG]
    x_ant = -theta + tension / p[K_SE_ANT]
    return np.array([theta, 0.0, x_ag, x_ant, n_ag, n_ant])


def system_matrices(p: np.ndarray, n_ag: float, n_ant: float, in_pulse: bool):
    """Return ``(A, b)`` with state derivative ``A @ s + b`` in units per ms."""
    tau_ag = p[TAU_AC_AG] if in_pulse else p[TAU_DE_AG]
    tau_ant = p[TAU_AC_ANT] if in_pulse else p[TAU_DE_ANT]
    kse_ag, kse_ant = p[K_SE_AG], p[K_SE_ANT]
    inv_j = 1.0 / (p[J] * MS_PER_S)
    inv_b_ag = 1.0 / (p[B_AG] * MS_PER_S)
    inv_b_ant = 1.0 / (p[B_ANT] * MS_PER_S)

    A = np.zeros((6, 6))
    A[0, 1] = 1.0 / MS_PER_S
    # J * omega' = K_SE_AG (x_ag - theta) - K_SE_ANT (x_ant + theta) - B_P * omega
    A[1, 0] = -(kse_ag + kse_ant) * inv_j
    A[1, 1] = -p[B_P] * inv_j
    A[1, 2] = kse_ag * inv_j
    A[1, 3] = -kse_ant * inv_j
    # B_m * x_m' = f_m - N_C_m * theta_m - K_LT_m * x_m - K_SE_m * (x_m - theta_m)
    A[2, 0] = (kse_ag - p[N_C_AG]) * inv_b_ag
    A[2, 2] = -(p[K_LT_AG] + kse_ag) * inv_b_ag
    A[2, 4] = inv_b_ag
    A[3, 0] = (p[N_C_ANT] - kse_ant) * inv_b_ant
    A[3, 3] = -(p[K_LT_ANT] + kse_ant) * inv_b_ant
    A[3, 5] = inv_b_ant
    A[4, 4] = -1.0 / tau_ag
    A[5, 5] = -1.0 / tau_ant

    b = np.zeros(6)
    b[4] = n_ag / tau_ag
    b[5] = n_ant / tau_ant
    return A, b


def plant_parameters(opc: OpcVector, duration: float, dt: float) -> np.ndarray:
    """Full 18-entry plant parameter array for ``opc`` with placeholders resolved."""
    spec = get_model(opc.model_id)
    if spec.expand is None:
        raise DomainError(f"model {opc.model_id!r} does not use the linear homeomorphic plant")
    return spec.expand(spec.resolve(opc.values, duration, dt), duration, dt)


def plant_derivatives(state, n_ag: float, n_ant: float, in_pulse: bool, opc) -> np.ndarray:
    """Time derivative of ``state`` (per ms) under constant innervation.

    ``opc`` is an :class:`OpcVector` of a homeomorphic model or a raw
    18-entry plant parameter array.  The pulse width does not enter here,
    so an unresolved placeholder is harmless.
    """
    if isinstance(opc, OpcVector):
        spec = get_model(opc.model_id)
        p = spec.expand(spec.resolve(opc.values, 1.0, 1.0), 1.0, 1.0)
    else:
        p = np.asarray(opc, dtype=float)
    th, om, x_ag, x_ant, f_ag, f_ant = (float(v) for v in state)
    tau_ag = p[TAU_AC_AG] if in_pulse else p[TAU_DE_AG]
    tau_ant = p[TAU_AC_ANT] if in_pulse else p[TAU_DE_ANT]
    t_ag = p[K_SE_AG] * (x_ag - th)
    t_ant = p[K_SE_ANT] * (x_ant + th)
    return np.array([
        om / MS_PER_S,
        (t_ag - t_ant - p[B_P] * om) / p[J] / MS_PER_S,
        (f_ag - p[N_C_AG] * th - p[K_LT_AG] * x_ag - t_ag) / p[B_AG] / MS_PER_S,
        (f_ant + p[N_C_ANT] * th - p[K_LT_ANT] * x_ant - t_ant) / p[B_ANT] / MS_PER_S,
        (n_ag - f_ag) / tau_ag,
        (n_ant - f_ant) / tau_ant,
    ])


def rk4_step(f, y: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``y' = f(y)``."""
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_affine_map(A: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """Augmented 7x7 matrix of one RK4 step for the affine system ``y' = A y + b``.

    For such systems the four stages collapse to
    ``y + h * phi(hA) (A y + b)`` with ``phi(z) = 1 + z/2 + z^2/6 + z^3/24``.
    """
    n = A.shape[0]
    hA = h * A
    eye = np.eye(n)
    phi = eye + hA @ (eye / 2.0 + hA @ (eye / 6.0 + hA / 24.0))
    G = np.eye(n + 1)
    G[:n, :n] += h * (phi @ A)
    G[:n, n] = h * (phi @ b)
    return G


def _check_degenerate(p: np.ndarray) -> None:
    for idx in (K_SE_AG, K_SE_ANT, B_AG, B_ANT, J, TAU_AC_AG, TAU_AC_ANT, TAU_DE_AG, TAU_DE_ANT):
        if p[idx] <= 0.0:
            raise DivergenceError(f"{PLANT_PARAMETERS[idx]} = 0 makes the plant singular", step=0)


def control_signal_from_parameters(p: np.ndarray, duration: float, target_amplitude: float,
                                   dt: float) -> ControlSignal:
    _check_degenerate(p)
    n = n_steps_for(duration, dt)
    pw = float(p[PW])
    offset = min(n, n_steps_for(pw, dt))
    pulse = (float(p[N_SAC_AG]), float(p[N_SAC_ANT]))
    step = hold_levels(p, target_amplitude)
    n_ag = np.full(n, step[0])
    n_ant = np.full(n, step[1])
    n_ag[:offset] = pulse[0]
    n_ant[:offset] = pulse[1]
    n_ag.flags.writeable = False
    n_ant.flags.writeable = False
    return ControlSignal(
        dt=dt, n_ag=n_ag, n_ant=n_ant, pulse_window=(0, offset), pulse_width=pw,
        pulse_levels=pulse, step_levels=step, hold_levels=hold_levels(p, 0.0),
    )


def build_control_signal(opc: OpcVector, saccade_duration: float, target_amplitude: float,
                         dt: float) -> ControlSignal:
    if saccade_duration <= 0 or dt <= 0:
        raise ValueError("saccade_duration and dt must be positive")
    get_model(opc.model_id).check_physical(opc.values)
    p = plant_parameters(opc, saccade_duration, dt)
    return control_signal_from_parameters(p, saccade_duration, target_amplitude, dt)


def integrate_plant(p: np.ndarray, duration: float, target_amplitude: float, dt: float,
                    initial_theta: float = 0.0) -> SimulatedTrajectory:
    """RK4 integration of the homeomorphic plant from rest at saccade onset.

    The plant is simulated in onset-relative coordinates and shifted by
    ``initial_theta`` on output.
    """
    sig = control_signal_from_parameters(p, duration, target_amplitude, dt)
    n = sig.n_steps
    pulse_map = rk4_affine_map(*system_matrices(p, *sig.pulse_levels, True), dt)
    step_map = rk4_affine_map(*system_matrices(p, *sig.step_levels, False), dt)

    full = min(n, int(math.floor(sig.pulse_width / dt + 1e-12)))
    remainder = sig.pulse_width - full * dt
    split_map = None
    if full < n and remainder > 1e-12 * dt:
        # Pulse ends inside step `full`: pulse part first, then the step part.
        split_map = (rk4_affine_map(*system_matrices(p, *sig.step_levels, False), dt - remainder)
                     @ rk4_affine_map(*system_matrices(p, *sig.pulse_levels, True), remainder))

    states = np.empty((n + 1, 7))
    states[0, :6] = equilibrium_state(p, 0.0)
    states[0, 6] = 1.0
    with np.errstate(all="ignore"):
        s = states[0]
        for k in range(n):
            if k < full:
                G = pulse_map
            elif k == full and split_map is not None:
                G = split_map
            else:
                G = step_map
            s = G @ s
            states[k + 1] = s
    if not np.isfinite(states).all():
        bad = int(np.argmax(~np.isfinite(states).all(axis=1)))
        raise DivergenceError(f"non-finite plant state at step {bad}", step=bad)
    positions = states[:, 0] + initial_theta
    velocities = states[:, 1].copy()
    positions.flags.writeable = False
    velocities.flags.writeable = False
    return SimulatedTrajectory(dt=dt, positions=positions, velocities=velocities)


def simulate(opc: OpcVector, duration: float, target_amplitude: float, dt: float = 1.0,
             initial_theta: float = 0.0) -> SimulatedTrajectory:
    """Simulate one saccade of ``duration`` ms landing ``target_amplitude`` deg from onset.

    Returns ``ceil(duration / dt) + 1`` samples starting at ``initial_theta``.
    Raises :class:`DomainError` for non-physical parameters and
    :class:`DivergenceError` when the integration blows up.
    """
    if duration <= 0 or dt <= 0:
        raise ValueError("duration and dt must be positive")
    spec = get_model(opc.model_id)
    spec.check_physical(opc.values)
    if spec.simulator is not None:
        return spec.simulator(opc, duration, target_amplitude, dt, initial_theta)
    p = spec.expand(spec.resolve(opc.values, duration, dt), duration, dt)
    return integrate_plant(p, duration, target_amplitude, dt, initial_theta)


# ---------------------------------------------------------------------------
# built-in models

KOMOGORTSEV18_DEFAULTS = (
    2.5, 2.5, 1.2, 1.2, 0.046, 0.022, 0.06, 0.8, 0.5, 0.000043,
    11.7, 2.4, 2.0, 1.9, 14.0, 55.0, 0.5, FROM_DURATION,
)

# Output column order of the results file; tension slope precedes viscosity.
KOMOGORTSEV18_COLUMNS = (
    ("SE_ag", "K_SE_AG"), ("SE_ant", "K_SE_ANT"), ("LT_ag", "K_LT_AG"), ("LT_ant", "K_LT_ANT"),
    ("PE_ag", "N_C_AG"), ("PE_ant", "N_C_ANT"), ("Vis", "B_P"), ("FV_ag", "B_AG"),
    ("FV_ant", "B_ANT"), ("Inert", "J"), ("Act_ag", "TAU_AC_AG"), ("Act_ant", "TAU_AC_ANT"),
    ("Deact_ag", "TAU_DE_AG"), ("Deact_ant", "TAU_DE_ANT"), ("Step", "N_C_FIX"),
    ("H_ag", "N_SAC_AG"), ("H_ant", "N_SAC_ANT"), ("W", "PW"),
)

KOMOGORTSEV9_PARAMETERS = ("K_SE", "K_LT", "B_AG", "B_ANT", "B_P", "N_C_AG", "N_C_ANT", "J", "N_C_FIX")
KOMOGORTSEV9_DEFAULTS = (2.5, 1.2, 0.046, 0.022, 0.06, 0.8, 0.5, 0.000043, 14.0)
KOMOGORTSEV9_COLUMNS = (
    ("SE", "K_SE"), ("LT", "K_LT"), ("PE_ag", "N_C_AG"), ("PE_ant", "N_C_ANT"), ("Vis", "B_P"),
    ("FV_ag", "B_AG"), ("FV_ant", "B_ANT"), ("Inert", "J"), ("Step", "N_C_FIX"),
)


def _expand_identity(values: np.ndarray, duration: float, dt: float) -> np.ndarray:
    return np.asarray(values, dtype=float)


def _expand_komogortsev9(values: np.ndarray, duration: float, dt: float) -> np.ndarray:
    k_se, k_lt, b_ag, b_ant, b_p, nc_ag, nc_ant, j, nc_fix = values
    # Neural drive is not part of this model: fixed canonical pulse and time constants.
    return np.array([
        k_se, k_se, k_lt, k_lt, b_ag, b_ant, b_p, nc_ag, nc_ant, j,
        11.7, 2.4, 2.0, 1.9, nc_fix, 55.0, 0.5,
        max(duration - PULSE_WIDTH_OFFSET_MS, dt),
    ])


KOMOGORTSEV18 = ModelSpec(
    model_id="komogortsev18",
    parameter_names=PLANT_PARAMETERS,
    defaults=KOMOGORTSEV18_DEFAULTS,
    physical_lower_bounds=(0.0,) * 18,
    estimation_mask=(True,) * 18,
    expand=_expand_identity,
    duration_placeholders={"PW": PULSE_WIDTH_OFFSET_MS},
    result_columns=KOMOGORTSEV18_COLUMNS,
)

KOMOGORTSEV9 = ModelSpec(
    model_id="komogortsev9",
    parameter_names=KOMOGORTSEV9_PARAMETERS,
    defaults=KOMOGORTSEV9_DEFAULTS,
    physical_lower_bounds=(0.0,) * 9,
    estimation_mask=(True,) * 9,
    expand=_expand_komogortsev9,
    result_columns=KOMOGORTSEV9_COLUMNS,
)

register_model(KOMOGORTSEV18)
register_model(KOMOGORTSEV9)
