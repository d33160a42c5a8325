import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from opmm.errors import DivergenceError, DomainError, DuplicateModelError, ModelLookupError
from opmm.plant import (
    KOMOGORTSEV18, ModelSpec, OpcVector, build_control_signal, default_opc, equilibrium_state,
    get_model, hold_levels, plant_derivatives, plant_parameters, register_model, rk4_step,
    simulate, system_matrices,
)

DEFAULTS_18 = {
    "K_SE_AG": 2.5, "K_SE_ANT": 2.5, "K_LT_AG": 1.2, "K_LT_ANT": 1.2, "B_AG": 0.046,
    "B_ANT": 0.022, "B_P": 0.06, "N_C_AG": 0.8, "N_C_ANT": 0.5, "J": 0.000043,
    "TAU_AC_AG": 11.7, "TAU_AC_ANT": 2.4, "TAU_DE_AG": 2.0, "TAU_DE_ANT": 1.9,
    "N_C_FIX": 14.0, "N_SAC_AG": 55.0, "N_SAC_ANT": 0.5,
}
DEFAULTS_9 = {
    "K_SE": 2.5, "K_LT": 1.2, "B_AG": 0.046, "B_ANT": 0.022, "B_P": 0.06, "N_C_AG": 0.8,
    "N_C_ANT": 0.5, "J": 0.000043, "N_C_FIX": 14.0,
}


def zero_pulse(opc):
    """Replace the pulse by the innervation that already holds the eye at onset."""
    n_ag, n_ant = hold_levels(plant_parameters(opc, 46.0, 1.0), 0.0)
    return opc.replace(N_SAC_AG=n_ag, N_SAC_ANT=n_ant)


def test_builtin_model_defaults(model18, model9):
    assert len(model18.parameter_names) == 18
    assert len(model9.parameter_names) == 9
    d18 = model18.default_opc().as_dict()
    for name, value in DEFAULTS_18.items():
        assert d18[name] == value
    assert math.isnan(d18["PW"])
    assert model9.default_opc().as_dict() == DEFAULTS_9


def test_default_opc_lookup():
    assert default_opc("komogortsev18").J == 0.000043
    assert default_opc("komogortsev9").K_SE == 2.5
    with pytest.raises(ModelLookupError):
        default_opc("nosuch")


def test_duplicate_registration_rejected():
    with pytest.raises(DuplicateModelError):
        register_model(KOMOGORTSEV18)


def test_model_spec_validates_names():
    with pytest.raises(ValueError):
        ModelSpec("bad", ("a", "a"), (1.0, 1.0), (0.0, 0.0), (True, True),
                  expand=lambda v, d, dt: v)


def test_opc_vector_access():
    opc = default_opc("komogortsev9")
    assert opc["K_LT"] == 1.2
    assert opc.replace(J=1.0).J == 1.0
    assert opc.J == 0.000043
    with pytest.raises(KeyError):
        opc.replace(nope=1.0)
    with pytest.raises(AttributeError):
        opc.nope


def test_control_signal_pulse_width_from_duration():
    sig = build_control_signal(default_opc("komogortsev18"), 46.0, 10.0, 1.0)
    assert sig.pulse_width == 40.0
    assert sig.pulse_window == (0, 40)
    assert sig.n_steps == 46
    assert (sig.n_ag[0], sig.n_ant[0]) == (55.0, 0.5)
    assert np.all(sig.n_ag[:40] == 55.0) and np.all(sig.n_ant[:40] == 0.5)


def test_control_signal_short_duration_floors_pulse_at_dt():
    sig = build_control_signal(default_opc("komogortsev18"), 4.0, 1.0, 1.0)
    assert sig.pulse_width == 1.0


def test_zero_target_step_levels_equal_intercept():
    sig = build_control_signal(default_opc("komogortsev18"), 46.0, 0.0, 1.0)
    assert sig.step_levels == (14.0, 14.0)
    assert np.all(sig.n_ag[40:] == 14.0)


def test_step_levels_balance_target():
    # Symmetric elasticities: difference is (N_C_AG + N_C_ANT + 2 K_LT) * target.
    p = plant_parameters(default_opc("komogortsev18"), 46.0, 1.0)
    n_ag, n_ant = hold_levels(p, 3.0)
    assert n_ag - n_ant == pytest.approx((0.8 + 0.5 + 2.4) * 3.0)
    assert n_ag + n_ant == pytest.approx(28.0)
    n_ag, n_ant = hold_levels(p, 10.0)
    assert n_ant == 0.01
    assert n_ag - n_ant == pytest.approx(37.0)


def test_non_physical_rejected():
    bad = default_opc("komogortsev18").replace(K_SE_AG=-1.0)
    with pytest.raises(DomainError):
        build_control_signal(bad, 46.0, 10.0, 1.0)
    with pytest.raises(DomainError):
        simulate(bad, 46.0, 10.0)


def test_equilibrium_node_displacement():
    state = equilibrium_state(plant_parameters(default_opc("komogortsev18"), 46.0, 1.0))
    # Node balance at rest: 14 = (K_LT + K_SE) * x.
    assert state[2] == pytest.approx(14.0 / 3.7, abs=1e-12)
    assert state[2] == pytest.approx(3.783784, abs=5e-7)
    assert state[3] == pytest.approx(14.0 / 3.7, abs=1e-12)


def test_derivatives_vanish_at_equilibrium():
    opc = default_opc("komogortsev18")
    state = equilibrium_state(plant_parameters(opc, 46.0, 1.0))
    for in_pulse in (False, True):
        d = plant_derivatives(state, 14.0, 14.0, in_pulse, opc)
        assert np.all(np.abs(d) < 1e-12)


def test_activation_rate_at_pulse_onset():
    opc = default_opc("komogortsev18")
    state = equilibrium_state(plant_parameters(opc, 46.0, 1.0))
    d = plant_derivatives(state, 55.0, 0.5, True, opc)
    assert d[4] == pytest.approx(41.0 / 11.7)
    assert d[4] == pytest.approx(3.504, abs=5e-4)


def test_derivatives_match_matrix_form():
    p = plant_parameters(default_opc("komogortsev18"), 46.0, 1.0)
    s = np.array([1.5, 30.0, 4.0, 2.0, 20.0, 3.0])
    for in_pulse in (True, False):
        A, b = system_matrices(p, 55.0, 0.5, in_pulse)
        assert np.allclose(A @ s + b, plant_derivatives(s, 55.0, 0.5, in_pulse, p), rtol=1e-13)


def stagewise_reference(opc, duration, target, dt):
    """Plain RK4 through plant_derivatives, one stage at a time."""
    p = plant_parameters(opc, duration, dt)
    sig = build_control_signal(opc, duration, target, dt)
    s = equilibrium_state(p)
    out = [s[0]]
    for k in range(sig.n_steps):
        in_pulse = k < sig.pulse_window[1]
        s = rk4_step(lambda y: plant_derivatives(y, sig.n_ag[k], sig.n_ant[k], in_pulse, p), s, dt)
        out.append(s[0])
    return np.array(out)


@pytest.mark.parametrize("dt", [1.0, 0.5])
def test_simulation_equals_stagewise_rk4(dt):
    opc = default_opc("komogortsev18")
    ref = stagewise_reference(opc, 46.0, 10.0, dt)
    sim = simulate(opc, 46.0, 10.0, dt)
    assert np.max(np.abs(sim.positions - ref)) < 1e-10


def test_simulation_close_to_adaptive_solver():
    opc = default_opc("komogortsev18").replace(PW=40.0)
    p = plant_parameters(opc, 46.0, 1.0)
    n_step = hold_levels(p, 10.0)
    A1, b1 = system_matrices(p, 55.0, 0.5, True)
    A2, b2 = system_matrices(p, *n_step, False)
    first = solve_ivp(lambda t, y: A1 @ y + b1, (0, 40), equilibrium_state(p),
                      method="DOP853", rtol=1e-12, atol=1e-12, t_eval=np.arange(41.0))
    second = solve_ivp(lambda t, y: A2 @ y + b2, (40, 46), first.y[:, -1],
                       method="DOP853", rtol=1e-12, atol=1e-12, t_eval=np.arange(40.0, 47.0))
    ref = np.concatenate([first.y[0], second.y[0, 1:]])
    sim = simulate(opc, 46.0, 10.0, 0.05)
    assert np.max(np.abs(sim.positions[::20] - ref)) < 1e-6


def test_output_length():
    opc = default_opc("komogortsev18")
    assert len(simulate(opc, 46.0, 10.0, 1.0).positions) == 47
    assert len(simulate(opc, 45.5, 10.0, 1.0).positions) == 47
    assert len(simulate(opc, 10.0, 10.0, 0.25).positions) == 41


def test_zero_pulse_is_fixed_point():
    opc = zero_pulse(default_opc("komogortsev18").replace(PW=40.0))
    sim = simulate(opc, 46.0, 0.0, 1.0, initial_theta=3.0)
    assert np.all(sim.positions == 3.0)


def test_default_saccade_rises_monotonically_and_settles():
    # Trajectory end at 46 ms is still short of the target; settling needs ~90 ms.
    opc = default_opc("komogortsev18").replace(PW=40.0)
    sim = simulate(opc, 150.0, 10.0, 1.0)
    assert np.all(np.diff(sim.positions) >= 0)
    assert abs(sim.positions[-1] - 10.0) < 0.5
    fine = simulate(opc, 150.0, 10.0, 0.01)
    assert np.all(np.diff(fine.positions) >= -1e-12)
    assert abs(fine.positions[-1] - 10.0) < 0.5


def test_heavier_globe_accelerates_more_slowly():
    # The tenfold globe is underdamped, so its later velocity overshoots the
    # default; the early rise and the position lag are what inertia guarantees.
    opc = default_opc("komogortsev18")
    light = simulate(opc, 46.0, 10.0, 0.1)
    heavy = simulate(opc.replace(J=10 * opc.J), 46.0, 10.0, 0.1)
    early = slice(1, 201)
    assert np.all(heavy.velocities[early] < light.velocities[early])
    assert np.all(heavy.positions[1:] < light.positions[1:])


def test_divergence_is_an_error():
    # Far outside the RK4 stability region at 1 ms steps.
    opc = default_opc("komogortsev18").replace(J=1e-9)
    with pytest.raises(DivergenceError) as exc:
        simulate(opc, 200.0, 10.0, 1.0)
    assert exc.value.step is not None and exc.value.step > 0


def test_zero_stiffness_is_degenerate():
    with pytest.raises(DivergenceError):
        simulate(default_opc("komogortsev18").replace(K_SE_AG=0.0), 46.0, 10.0)


def test_nine_parameter_model_matches_expanded_eighteen():
    nine = simulate(default_opc("komogortsev9"), 46.0, 10.0)
    eighteen = simulate(default_opc("komogortsev18"), 46.0, 10.0)
    assert np.array_equal(nine.positions, eighteen.positions)


def test_deterministic():
    opc = default_opc("komogortsev18")
    a = simulate(opc, 46.0, 10.0, 1.0, 2.0)
    b = simulate(opc, 46.0, 10.0, 1.0, 2.0)
    assert a.positions.tobytes() == b.positions.tobytes()


def test_rk4_fourth_order():
    opc = default_opc("komogortsev18").replace(PW=40.0)
    runs = {dt: simulate(opc, 46.0, 10.0, dt).positions for dt in (1.0, 0.5, 0.25)}
    keep = np.abs(np.arange(47.0) - 40.0) > 1.0
    d1 = np.max(np.abs(runs[1.0] - runs[0.5][::2])[keep])
    d2 = np.max(np.abs(runs[0.5][::2] - runs[0.25][::4])[keep])
    assert d1 / d2 >= 12.0


def test_fractional_pulse_width_is_continuous():
    opc = default_opc("komogortsev18")
    ends = [simulate(opc.replace(PW=pw), 46.0, 8.0).positions[-1] for pw in (39.999, 40.0, 40.001)]
    assert abs(ends[0] - ends[1]) < 1e-3 and abs(ends[2] - ends[1]) < 1e-3
    assert ends[0] < ends[1] < ends[2]


physical_scale = st.floats(0.7, 1.3)


@settings(max_examples=40, deadline=None)
@given(scales=st.lists(physical_scale, min_size=14, max_size=14),
       theta0=st.floats(-20.0, 20.0))
def test_equilibrium_fixed_point_property(scales, theta0):
    base = default_opc("komogortsev18")
    values = [v * s for v, s in zip(base.values[:14], scales)] + list(base.values[14:])
    opc = zero_pulse(base.with_values(values).replace(PW=30.0))
    sim = simulate(opc, 100.0, 0.0, 1.0, theta0)
    assert np.max(np.abs(sim.positions - theta0)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(pulse=st.floats(15.0, 120.0), antagonist=st.floats(0.0, 13.0),
       pw=st.floats(5.0, 60.0), target=st.floats(0.0, 20.0))
def test_positive_pulse_moves_eye_forward(pulse, antagonist, pw, target):
    opc = default_opc("komogortsev18").replace(N_SAC_AG=pulse, N_SAC_ANT=antagonist, PW=pw)
    sim = simulate(opc, 80.0, target, 1.0, initial_theta=-4.0)
    assert np.all(sim.positions >= -4.0)


@pytest.mark.parametrize("target, shortest_pw", [
    (2.0, 1.0), (5.0, 1.0), (8.0, 15.0), (10.0, 15.0), (12.0, 15.0),
])
def test_longer_pulse_never_shrinks_amplitude(target, shortest_pw):
    # Pulses of a few ms activate more slowly than the step that follows them
    # (TAU_AC_AG > TAU_DE_AG), so very short pulses are excluded for large targets.
    opc = default_opc("komogortsev18")
    finals = [simulate(opc.replace(PW=pw), 60.0, target).positions[-1]
              for pw in np.arange(shortest_pw, 60.0, 0.5)]
    assert np.all(np.diff(finals) >= 0)


def test_custom_simulator_plugs_in():
    def flat(opc, duration, target, dt, initial_theta):
        from opmm.plant import SimulatedTrajectory, n_steps_for
        n = n_steps_for(duration, dt) + 1
        return SimulatedTrajectory(dt, np.full(n, initial_theta + opc["gain"]), np.zeros(n))

    spec = ModelSpec("flat_test_plant", ("gain",), (1.0,), (0.0,), (True,), simulator=flat)
    register_model(spec)
    assert get_model("flat_test_plant") is spec
    sim = simulate(spec.default_opc(), 10.0, 0.0, 1.0, 2.0)
    assert np.all(sim.positions == 3.0)
    assert isinstance(spec.default_opc(), OpcVector)
