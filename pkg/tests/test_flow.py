"""Flow engine: stationarity, conservation, stepping orders, stopping events."""

import numpy as np
import pytest

import oracles
from torusflow import shapes
from torusflow.flow import (
    DEFAULT_C_CFL,
    FlowParams,
    StoppingMonitor,
    _evaluate,
    _rk4_step,
    adaptive_dt,
    enforce_volume,
    make_state,
    run,
    sd_normal_velocity,
    step,
)
from torusflow.geometry import enclosed_area, height_function


def test_stationary_circle_sd():
    st = make_state(shapes.circle(0.2, n=256), "sd")
    assert np.abs(sd_normal_velocity(st).values).max() < 1e-6


def test_stationary_lamella_both():
    lam = shapes.strip(0.5, n=256)
    assert np.abs(_evaluate(make_state(lam, "sd"))["V"]).max() < 1e-8
    assert np.abs(_evaluate(make_state(lam, "ms", gamma=1.0))["V"]).max() < 1e-8


def test_sd_gamma_forced_zero():
    st = make_state(shapes.circle(0.2, n=64), "sd", gamma=3.0)
    assert st.gamma == 0.0


def test_sd_linearized_velocity():
    eps, k = 1e-4, 2
    p = shapes.perturbed_strip(0.5, eps, k, n=256)
    V = sd_normal_velocity(make_state(p, "sd"))
    x = p.markers()[:, 0]
    sl = p.loop_slices()
    amp = 2 * np.mean(V.values[sl[1]] * np.sin(2 * np.pi * k * x[sl[1]]))
    assert amp == pytest.approx(-oracles.sd_flat_rate(k) * eps, rel=1e-2)
    from torusflow.geometry import integrate_ds

    assert abs(integrate_ds(p, V.values)) < 1e-8 * np.abs(V.values).max()


def test_adaptive_dt_scaling():
    p1 = shapes.perturbed_strip(0.5, 1e-6, 1, n=64)
    p2 = shapes.perturbed_strip(0.5, 1e-6, 1, n=128)
    sd1 = adaptive_dt(make_state(p1, "sd"))
    sd2 = adaptive_dt(make_state(p2, "sd"))
    assert sd1 / sd2 == pytest.approx(16.0, rel=1e-6)
    ms1 = adaptive_dt(make_state(p1, "ms"))
    ms2 = adaptive_dt(make_state(p2, "ms"))
    assert ms1 / ms2 == pytest.approx(8.0, rel=2e-2)
    assert DEFAULT_C_CFL == {"sd": 0.2, "ms": 0.5}


def test_adaptive_dt_zero_velocity_cap():
    st = make_state(shapes.strip(0.5, n=64), "sd")
    h = 0.5 / 64 * 32  # min spacing: loops of length 1 with 64 markers
    dt = adaptive_dt(st)
    from torusflow.flow import RK4_REAL_AXIS_LIMIT

    expect = 0.2 * RK4_REAL_AXIS_LIMIT / np.pi**4 * (1 / 64) ** 4
    assert dt == pytest.approx(expect, rel=1e-12)


def test_enforce_volume():
    st = make_state(shapes.circle(0.2, n=128), "sd")
    st2, delta = enforce_volume(st)
    assert delta == pytest.approx(0.0, abs=1e-14)
    # shrink the target and check the first-order offset
    st.target_area -= 1e-5
    st3, delta3 = enforce_volume(st)
    assert delta3 == pytest.approx(-1e-5 / (0.4 * np.pi), rel=1e-3)
    # one safeguarded Newton step leaves the quadratic remainder ~ delta^2 kappa
    assert abs(enclosed_area(st3.curve) - st.target_area) < 5e-10
    st4, delta4 = enforce_volume(st3)
    assert abs(delta4) < 1e-9
    assert abs(enclosed_area(st4.curve) - st.target_area) < 1e-12


def test_step_zero_velocity_identity():
    st = make_state(shapes.strip(0.5, n=64), "sd")
    out = step(st, 1e-8)
    assert np.abs(out.curve.lifts() - st.curve.lifts()).max() < 1e-12


def test_rk4_self_convergence_order():
    # one step vs two half-steps vs four quarter-steps (pure RK4 substeps,
    # no resampling) measured through the height over the unperturbed circle.
    # 16 markers keep the stability cap close to the physical time scale so
    # the dt^5 local error is measurable above round-off.
    base = shapes.circle(0.2, n=16)
    c0 = shapes.perturbed_circle(0.2, 5e-3, 2, n=16)
    st = make_state(c0, "ms")
    dt = 0.9 * adaptive_dt(st)

    def advance(n_sub):
        cur = st
        out = cur.curve
        for _ in range(n_sub):
            out = _rk4_step(cur, dt / n_sub)
            cur = make_state(out, "ms")
        return height_function(out, base).values

    p1, p2, p4 = advance(1), advance(2), advance(4)
    e12 = np.abs(p1 - p2).max()
    e24 = np.abs(p2 - p4).max()
    order = np.log2(e12 / e24)
    assert order >= 3.8


def test_rk4_time_reversal():
    # one step forward then backward returns the markers to O(dt^5)
    c0 = shapes.perturbed_circle(0.2, 5e-3, 2, n=16)
    errs = []
    for fac in (0.8, 0.4):
        st = make_state(c0, "ms")
        dt = fac * adaptive_dt(st)
        fwd = _rk4_step(st, dt)
        back = _rk4_step(make_state(fwd, "ms"), -dt)
        errs.append(np.abs(back.lifts() - c0.lifts()).max())
    assert errs[0] < 1e-7
    assert errs[0] / errs[1] >= 20  # at least the dt^5 local-error scaling


def test_run_conservation_and_monotonicity_rk4():
    p = shapes.perturbed_strip(0.5, 1e-3, 1, n=96)
    st = make_state(p, "sd")
    res = run(st, t_end=60 * adaptive_dt(st))
    J = res.trace.column("J")
    A = res.trace.column("area")
    assert res.event == "completed"
    assert np.all(np.diff(J) <= 1e-9 * np.abs(J[:-1]))
    assert np.abs(A - A[0]).max() / A[0] < 1e-6
    assert np.all(res.trace.column("dissipation") >= 0)


def test_run_ms_gamma_positive_monotone():
    p = shapes.perturbed_strip(0.4, 1e-3, 1, n=64)
    params = FlowParams(scheme="ssd", dt=2e-5, grid_n=128)
    st = make_state(p, "ms", gamma=1.0, params=params)
    res = run(st, t_end=40 * 2e-5)
    J = res.trace.column("J")
    assert res.event == "completed"
    assert np.all(np.diff(J) <= 1e-9 * np.abs(J[:-1]))
    assert res.trace.column("nonlocal")[0] > 0


def test_run_determinism():
    def one():
        p = shapes.perturbed_strip(0.5, 1e-3, 1, n=64)
        st = make_state(p, "sd", params=FlowParams(scheme="ssd", dt=5e-5))
        return run(st, t_end=8 * 5e-5).trace

    t1, t2 = one(), one()
    for col in ("t", "J", "area", "dissipation", "volume_correction"):
        assert np.array_equal(t1.column(col), t2.column(col))


def test_tilted_lamella_stationary_and_steppable():
    # diagonal winding (1,1): flat geodesic, stationary for both flows
    tilted = shapes.strip(0.3, angle=45, n=128)
    assert np.abs(_evaluate(make_state(tilted, "sd"))["V"]).max() < 1e-8
    assert np.abs(_evaluate(make_state(tilted, "ms", gamma=1.0))["V"]).max() < 1e-7
    st = make_state(tilted, "sd", params=FlowParams(scheme="ssd", dt=1e-5))
    res = run(st, t_end=5e-5)
    assert res.event == "completed"
    assert abs(enclosed_area(res.state.curve) - 0.3) < 1e-9


def test_run_stationary_circle_energy_constant():
    st = make_state(
        shapes.circle(0.2, n=128), "sd", params=FlowParams(scheme="ssd", dt=2e-5)
    )
    res = run(st, t_end=1e-3)
    J = res.trace.column("J")
    assert res.event == "completed"
    assert np.abs(J - J[0]).max() <= 1e-9 * J[0]


def test_run_graph_failure_event():
    # reference far from the curve: the C^1 surveillance cannot see a graph
    p = shapes.perturbed_strip(0.5, 1e-3, 1, n=64)
    st = make_state(p, "sd", params=FlowParams(scheme="ssd", dt=1e-6))
    mon = StoppingMonitor(eps0=1.0, delta0=1e9, reference=shapes.circle(0.2, n=64))
    res = run(st, monitor=mon, t_end=1e-5)
    assert res.event == "graph_failure"


def test_monitor_dissipation_event():
    p = shapes.perturbed_strip(0.5, 1e-3, 1, n=64)
    st = make_state(p, "sd", params=FlowParams(scheme="ssd", dt=1e-6))
    mon = StoppingMonitor(eps0=1.0, delta0=1e-12, reference=shapes.strip(0.5, n=64))
    res = run(st, monitor=mon, t_end=1e-4)
    assert res.event == "dissipation_exceeded"
    assert res.trace.rows[-1]["event"] == "dissipation_exceeded"


def test_monitor_c1_event():
    p = shapes.perturbed_strip(0.5, 2e-3, 1, n=64)
    st = make_state(p, "sd", params=FlowParams(scheme="ssd", dt=1e-6))
    mon = StoppingMonitor(eps0=1e-4, delta0=1e9, reference=shapes.strip(0.5, n=64))
    res = run(st, monitor=mon, t_end=1e-4)
    assert res.event == "c1_exceeded"


def test_monitor_threshold_validation():
    with pytest.raises(ValueError):
        StoppingMonitor(eps0=-1.0, delta0=1.0)


def test_ssd_matches_rk4_short_horizon():
    # the two integrators agree on a resolvable horizon
    p = shapes.perturbed_strip(0.5, 1e-3, 2, n=64)
    st_r = make_state(p, "sd")
    t_end = 30 * adaptive_dt(st_r)
    res_r = run(st_r, t_end=t_end)
    st_s = make_state(p, "sd", params=FlowParams(scheme="ssd", dt=t_end / 60))
    res_s = run(st_s, t_end=t_end)
    base = shapes.strip(0.5, n=64)
    pr = height_function(res_r.state.curve, base).values
    ps = height_function(res_s.state.curve, base).values
    assert np.abs(pr - ps).max() < 1e-3 * max(np.abs(pr).max(), 1e-12) + 1e-12


def test_snapshots_collected():
    p = shapes.perturbed_strip(0.5, 1e-3, 1, n=64)
    st = make_state(p, "sd", params=FlowParams(scheme="ssd", dt=5e-5))
    res = run(st, t_end=10 * 5e-5, snapshot_every=4)
    assert len(res.snapshots) == 2
