"""Time integration of the two flows with volume control and stopping surveillance.

Two integrators:

* "rk4": classical explicit Runge-Kutta on marker positions moved along the
  stage normals, stability-capped time step (fourth-order stiffness for
  surface diffusion, third-order for Mullins-Sekerka), equal-arclength
  resampling and a uniform-normal-offset volume correction after every step.

* "ssd": a small-scale-decomposition scheme in tangent-angle/length
  variables: the constant-coefficient leading symbol (-q^4 for surface
  diffusion, -2|q|^3 for Mullins-Sekerka) is applied through its exact
  exponential propagator in a Strang split around an explicit midpoint step
  for the lower-order remainder.  This removes the stiffness cap and is the
  integrator for runs that must reach the decay time scale.

The stopping monitor mirrors the proof-style surveillance: C^1 closeness to a
reference via the height function, and a dissipation threshold; all stopping
events are reported outcomes, not failures.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import bie
from .diagnostics import EnergyTrace
from .errors import GraphFailure, ResolutionError, TopologyError
from .fields import dirichlet_energy, potential_of_set
from .geometry import (
    CurveSamples,
    MarkerLoop,
    PeriodicCurve,
    _modes,
    _spectral_derivative_coeffs,
    arclength_derivative,
    curvature,
    enclosed_area,
    height_function,
    integrate_ds,
    perimeter,
    resample_equal_arclength,
    surface_laplacian,
)

RK4_REAL_AXIS_LIMIT = 2.785
# dt = c_cfl * STIFF_CONST * h^p keeps the highest resolved mode inside the
# RK4 real-axis stability region (symbol q^4 resp. 2 q^3 at q = pi/h)
STIFF_CONST = {
    "sd": RK4_REAL_AXIS_LIMIT / np.pi**4,
    "ms": RK4_REAL_AXIS_LIMIT / (2.0 * np.pi**3),
}
DEFAULT_C_CFL = {"sd": 0.2, "ms": 0.5}


@dataclass
class FlowParams:
    scheme: str = "rk4"  # rk4 | ssd
    c_cfl: float | None = None  # fraction of the RK4 stability limit
    dt: float | None = None  # explicit step cap (ssd runs should set this)
    grid_n: int = 256
    area_tol: float = 1e-7
    advective_fraction: float = 0.25  # max|V| dt <= advective_fraction * h


@dataclass
class FlowState:
    time: float
    curve: PeriodicCurve
    flow_kind: str  # "ms" | "sd"
    gamma: float
    target_area: float
    params: FlowParams = field(default_factory=FlowParams)
    cached: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.flow_kind not in ("ms", "sd"):
            raise ValueError("flow_kind must be 'ms' or 'sd'")
        if self.flow_kind == "sd":
            # surface diffusion is the gamma=0 gradient flow by definition
            self.gamma = 0.0
        a = enclosed_area(self.curve)
        if abs(a - self.target_area) > self.params.area_tol:
            raise ValueError(
                f"area {a:.10f} violates target {self.target_area:.10f} "
                f"beyond tolerance {self.params.area_tol:.1e}"
            )


def make_state(curve, flow_kind, gamma=0.0, params=None, time=0.0):
    return FlowState(
        time=time,
        curve=curve,
        flow_kind=flow_kind,
        gamma=gamma,
        target_area=enclosed_area(curve),
        params=params or FlowParams(),
    )


@dataclass
class StoppingMonitor:
    """Thresholds of the continuation argument: C^1 closeness and dissipation."""

    eps0: float = np.inf
    delta0: float = np.inf
    reference: PeriodicCurve | None = None

    def __post_init__(self):
        if self.eps0 <= 0 or self.delta0 <= 0:
            raise ValueError("monitor thresholds must be positive")


def sd_normal_velocity(state):
    """V = Lap_tau H; zero mean per loop, so the flow is volume preserving."""
    kap = curvature(state.curve)
    return CurveSamples(surface_laplacian(state.curve, kap).values, kind="velocity")


def _evaluate(state, curve=None):
    """Velocity plus energy bookkeeping at a curve (defaults to the state's)."""
    c = state.curve if curve is None else curve
    if state.flow_kind == "sd":
        kap = curvature(c)
        V = surface_laplacian(c, kap).values
        dk = arclength_derivative(c, kap).values
        return {"V": V, "dissipation": integrate_ds(c, dk**2), "nonlocal": 0.0}
    kap = curvature(c).values
    nl = 0.0
    if state.gamma != 0.0:
        v, trace = potential_of_set(c, n=state.params.grid_n)
        nl = state.gamma * dirichlet_energy(v)
        g = kap + 4.0 * state.gamma * trace.boundary_values.values
    else:
        g = kap
    sol = bie.solve_jump(c, CurveSamples(g, kind="boundary-data"))
    return {
        "V": sol.jump.values.copy(),
        "dissipation": sol.dissipation(),
        "nonlocal": nl,
        "jump_solution": sol,
    }


def adaptive_dt(state, vmax=None):
    """Stability-capped step: c_cfl * C_stab * h^4 (sd) or h^3 (ms), further
    limited so max|V| dt stays below a fraction of the marker spacing."""
    p = state.params
    h = min(lp.length() / lp.n for lp in state.curve.components)
    c_cfl = p.c_cfl if p.c_cfl is not None else DEFAULT_C_CFL[state.flow_kind]
    if p.scheme == "ssd":
        dt = p.dt if p.dt is not None else h
    else:
        power = 4 if state.flow_kind == "sd" else 3
        dt = c_cfl * STIFF_CONST[state.flow_kind] * h**power
        if p.dt is not None:
            dt = min(dt, p.dt)
    if vmax is None:
        ev = state.cached.get("eval")
        if ev is None:
            ev = _evaluate(state)
            state.cached["eval"] = ev
        vmax = float(np.abs(ev["V"]).max())
    if vmax > 0:
        dt = min(dt, p.advective_fraction * h / vmax)
    return float(dt)


def enforce_volume(state):
    """One safeguarded Newton step of a uniform normal offset onto the target area.

    The derivative of the area with respect to a uniform offset is the
    perimeter; the offset is clamped to a quarter marker spacing.
    """
    a = enclosed_area(state.curve)
    per = perimeter(state.curve)
    h = min(lp.length() / lp.n for lp in state.curve.components)
    delta = float(np.clip((state.target_area - a) / per, -0.25 * h, 0.25 * h))
    if delta == 0.0:
        return state, 0.0
    nus = state.curve.normals()
    loops = [
        MarkerLoop(lp.lift + delta * nus[sl], lp.winding)
        for lp, sl in zip(state.curve.components, state.curve.loop_slices())
    ]
    newc = PeriodicCurve(loops, check=False)
    return replace(state, curve=newc, cached={}), delta


# -- RK4 ------------------------------------------------------------------------


def _displace(curve, disp):
    loops = [
        MarkerLoop(lp.lift + disp[sl], lp.winding)
        for lp, sl in zip(curve.components, curve.loop_slices())
    ]
    return PeriodicCurve(loops, check=False)


def _rk4_step(state, dt):
    c0 = state.curve
    ev1 = state.cached.get("eval")
    if ev1 is None:
        ev1 = _evaluate(state)
    k1 = ev1["V"][:, None] * c0.normals()
    c2 = _displace(c0, 0.5 * dt * k1)
    k2 = _evaluate(state, c2)["V"][:, None] * c2.normals()
    c3 = _displace(c0, 0.5 * dt * k2)
    k3 = _evaluate(state, c3)["V"][:, None] * c3.normals()
    c4 = _displace(c0, dt * k3)
    k4 = _evaluate(state, c4)["V"][:, None] * c4.normals()
    return _displace(c0, (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


# -- SSD (tangent angle / length form) --------------------------------------------


def _extract_theta(curve):
    """Per-loop tangent-angle data: periodic deviation, turning number, length, mean."""
    out = []
    for lp in curve.components:
        tau = lp.tangent()
        theta = np.unwrap(np.arctan2(tau[:, 1], tau[:, 0]))
        turn = 0 if np.any(lp.winding != 0) else (1 if lp.orientation > 0 else -1)
        alpha = 2.0 * np.pi * np.arange(lp.n) / lp.n
        out.append(
            {
                "dev": theta - turn * alpha,
                "turn": turn,
                "L": lp.length(),
                "mean": lp.lift.mean(axis=0),
                "winding": np.asarray(lp.winding, dtype=float),
                "n": lp.n,
            }
        )
    return out


def _antiderivative(values):
    """Spectral antiderivative of the zero-mean part, nodal values."""
    n = values.shape[0]
    ch = np.fft.fft(values, axis=0) / n
    k = _modes(n)
    anti = np.zeros_like(ch)
    nz = k != 0
    kk = k[nz]
    if ch.ndim == 2:
        anti[nz] = ch[nz] / (1j * kk)[:, None]
    else:
        anti[nz] = ch[nz] / (1j * kk)
    return np.fft.ifft(anti * n, axis=0).real


def _reconstruct(loopdata):
    loops = []
    for ld in loopdata:
        n = ld["n"]
        alpha = 2.0 * np.pi * np.arange(n) / n
        theta = ld["dev"] + ld["turn"] * alpha
        tau = np.column_stack([np.cos(theta), np.sin(theta)])
        mean_tau = tau.mean(axis=0)
        x = (ld["L"] / (2.0 * np.pi)) * (_antiderivative(tau) + np.outer(alpha, mean_tau))
        # distribute the closure defect linearly so x(2pi) - x(0) = winding exactly
        defect = ld["L"] * mean_tau - ld["winding"]
        x -= np.outer(alpha / (2.0 * np.pi), defect)
        x += ld["mean"] - x.mean(axis=0)
        loops.append(MarkerLoop(x, ld["winding"].astype(int)))
    return PeriodicCurve(loops, check=False)


def _ssd_symbol(flow_kind, L, n):
    q = np.abs(_modes(n)) * (2.0 * np.pi / L)
    return -(q**4) if flow_kind == "sd" else -2.0 * q**3


def _ssd_linear_halfstep(loopdata, flow_kind, dt):
    for ld in loopdata:
        lam = _ssd_symbol(flow_kind, ld["L"], ld["n"])
        ld["dev"] = np.fft.ifft(np.fft.fft(ld["dev"]) * np.exp(lam * 0.5 * dt)).real


def _ssd_rhs(state, loopdata):
    """Remainder dynamics of (theta_dev, L, mean) after subtracting the symbol."""
    curve = _reconstruct(loopdata)
    ev = _evaluate(state, curve)
    V = ev["V"]
    out = []
    for ld, sl in zip(loopdata, curve.loop_slices()):
        n = ld["n"]
        alpha = 2.0 * np.pi * np.arange(n) / n
        v = V[sl]
        s_alpha = ld["L"] / (2.0 * np.pi)
        theta = ld["dev"] + ld["turn"] * alpha
        theta_a = (
            np.fft.ifft(_spectral_derivative_coeffs(np.fft.fft(ld["dev"]), 1)).real
            + ld["turn"]
        )
        integrand = theta_a * v
        mean_i = float(integrand.mean())
        T = -_antiderivative(integrand)  # dT/dalpha = -(theta_a v - mean)
        va = np.fft.ifft(_spectral_derivative_coeffs(np.fft.fft(v), 1)).real
        theta_t = (-va + T * theta_a) / s_alpha
        lam = _ssd_symbol(state.flow_kind, ld["L"], n)
        linear = np.fft.ifft(lam * np.fft.fft(ld["dev"])).real
        tau = np.column_stack([np.cos(theta), np.sin(theta)])
        nu = np.column_stack([tau[:, 1], -tau[:, 0]])
        mean_dot = (v[:, None] * nu).mean(axis=0) + (T[:, None] * tau).mean(axis=0)
        out.append(
            {
                "dev_dot": theta_t - linear,
                "L_dot": 2.0 * np.pi * mean_i,
                "mean_dot": mean_dot,
            }
        )
    return out, ev


def _ssd_apply(loopdata, rhs, dt):
    return [
        {
            **ld,
            "dev": ld["dev"] + dt * r["dev_dot"],
            "L": ld["L"] + dt * r["L_dot"],
            "mean": ld["mean"] + dt * r["mean_dot"],
        }
        for ld, r in zip(loopdata, rhs)
    ]


def _ssd_step(state, dt):
    loopdata = _extract_theta(state.curve)
    _ssd_linear_halfstep(loopdata, state.flow_kind, dt)
    rhs_a, _ = _ssd_rhs(state, loopdata)
    mid = _ssd_apply(loopdata, rhs_a, 0.5 * dt)
    rhs_m, _ = _ssd_rhs(state, mid)
    loopdata = _ssd_apply(loopdata, rhs_m, dt)
    _ssd_linear_halfstep(loopdata, state.flow_kind, dt)
    return _reconstruct(loopdata)


def step(state, dt, scheme=None):
    """Advance one step, keep markers equidistributed, restore the volume."""
    scheme = scheme or state.params.scheme
    if scheme == "rk4":
        newc = _rk4_step(state, dt)
        newc = resample_equal_arclength(newc, state.curve.components[0].n)
    elif scheme == "ssd":
        newc = _ssd_step(state, dt)
        newc.validate(check_intersections=True, probe_area=False)
    else:
        raise ValueError(f"unknown scheme '{scheme}'")
    out = replace(state, time=state.time + dt, curve=newc, cached={})
    out, delta = enforce_volume(out)
    out.cached["volume_correction"] = delta
    return out


@dataclass
class RunResult:
    trace: EnergyTrace
    event: str
    state: FlowState
    snapshots: list


def _psi_c1(curve, reference):
    """sup|psi| + sup|psi'| with the derivative taken both spectrally and by
    finite differences (the conservative max of the two estimates)."""
    psi = height_function(curve, reference)
    vals = psi.values
    dpsi_spec = arclength_derivative(reference, psi).values
    fd = [
        np.gradient(part, lp.length() / lp.n)
        for part, lp in zip(reference.split(vals), reference.components)
    ]
    dmax = max(float(np.abs(dpsi_spec).max()), float(np.abs(np.concatenate(fd)).max()))
    return float(np.abs(vals).max()) + dmax, psi


def _record(state, trace, monitor, event=""):
    ev = state.cached.get("eval")
    if ev is None:
        ev = _evaluate(state)
        state.cached["eval"] = ev
    per = perimeter(state.curve)
    psi_c1 = np.nan
    if monitor is not None and monitor.reference is not None:
        psi_c1, _ = _psi_c1(state.curve, monitor.reference)
    trace.append_row(
        {
            "t": state.time,
            "J": per + ev["nonlocal"],
            "perimeter": per,
            "nonlocal": ev["nonlocal"],
            "area": enclosed_area(state.curve),
            "dissipation": ev["dissipation"],
            "volume_correction": state.cached.get("volume_correction", 0.0),
            "psi_c1": psi_c1,
            "event": event,
        }
    )
    return ev, psi_c1


def run(initial, monitor=None, t_end=1e-3, snapshot_every=0, max_steps=10**7):
    """Integrate until t_end or a stopping event; one trace record per step.

    Stopping reasons: 'graph_failure' (curve degenerated or left the graph
    neighborhood), 'c1_exceeded' (C^1 distance >= eps0),
    'dissipation_exceeded' (dissipation >= 2*delta0), 'dt_underflow'; a clean
    finish reports 'completed'.
    """
    state = initial
    trace = EnergyTrace()
    snapshots = []
    try:
        ev, psi_c1 = _record(state, trace, monitor)
    except GraphFailure:
        # the initial state already fails the graph surveillance
        _record(state, trace, None, event="graph_failure")
        return RunResult(
            trace=trace, event="graph_failure", state=state, snapshots=snapshots
        )
    event = ""
    steps = 0
    while state.time < t_end * (1.0 - 1e-12) and steps < max_steps:
        vmax = float(np.abs(ev["V"]).max())
        dt = min(adaptive_dt(state, vmax=vmax), t_end - state.time)
        if dt < 1e-16 * max(t_end, 1.0):
            event = "dt_underflow"
            break
        try:
            state = step(state, dt)
            steps += 1
            ev, psi_c1 = _record(state, trace, monitor)
        except (GraphFailure, TopologyError, ResolutionError):
            event = "graph_failure"
            break
        if snapshot_every and steps % snapshot_every == 0:
            snapshots.append((state.time, state.curve))
        if monitor is not None:
            if np.isfinite(psi_c1) and psi_c1 >= monitor.eps0:
                event = "c1_exceeded"
                break
            if ev["dissipation"] >= 2.0 * monitor.delta0:
                event = "dissipation_exceeded"
                break
    if not event:
        event = "completed" if state.time >= t_end * (1.0 - 1e-12) else "max_steps"
    trace.rows[-1]["event"] = event
    return RunResult(trace=trace, event=event, state=state, snapshots=snapshots)
