"""Closed-loop simulation and verification of nested feedback laws.

The chain ``x_i' = x_{i+1}, x_n' = nu(x)`` is integrated with fixed-step RK4.
Control derivatives are propagated exactly through the nested layers with the
Faa di Bruno formula; finite differences serve as an independent check.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt
import structlog

from satstack.bell import faa_di_bruno
from satstack.models import (
    BatteryReport,
    CounterexampleConfig,
    DerivativeMethod,
    GrowthReport,
    GrowthRow,
    PeakEstimate,
    Scenario,
    SimConfig,
    SynthesisConfig,
    VerificationReport,
)
from satstack.monitoring import monitor_performance
from satstack.saturation import SaturationFunction, from_spec
from satstack.synthesis import NestedFeedbackLaw, assemble_feedback, eval_feedback

logger = structlog.get_logger(__name__)

FloatArray = npt.NDArray[np.float64]
Rhs = Callable[[FloatArray], FloatArray]

STEP_FACTOR = 0.01
SOUNDNESS_SLACK = 1e-6
PEAK_COUNT = 3

# 4th-order central stencils, offsets -3..3
_STENCILS: dict[int, tuple[float, ...]] = {
    1: (0.0, 1 / 12, -8 / 12, 0.0, 8 / 12, -1 / 12, 0.0),
    2: (0.0, -1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12, 0.0),
    3: (1 / 8, -1.0, 13 / 8, 0.0, -13 / 8, 1.0, -1 / 8),
    4: (-1 / 6, 2.0, -13 / 2, 28 / 3, -13 / 2, 2.0, -1 / 6),
}


class SimulationError(RuntimeError):
    """Raised when the integrated state stops being finite."""


# --- integration -------------------------------------------------------------------


def rk4_step(rhs: Rhs, x: FloatArray, h: float) -> FloatArray:
    """One classical Runge-Kutta step of the autonomous system ``x' = rhs(x)``."""
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_count(step: float, horizon: float) -> int:
    if not (step > 0 and horizon > 0):
        raise ValueError(f"step and horizon must be positive, got {step}, {horizon}")
    return max(1, math.ceil(horizon / step - 1e-9))


def integrate(rhs: Rhs, x0: FloatArray, step: float, horizon: float) -> tuple[FloatArray, FloatArray]:
    """Fixed-step RK4 from ``x0``; a leading batch axis in ``x0`` is carried along.

    Returns the time grid and the states with time as the first axis.
    """
    steps = step_count(step, horizon)
    x = np.asarray(x0, dtype=float)
    states = np.empty((steps + 1, *x.shape))
    states[0] = x
    for m in range(1, steps + 1):
        x = rk4_step(rhs, x, step)
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"non-finite state at t = {m * step:.6g}")
        states[m] = x
    return np.arange(steps + 1) * step, states


def closed_loop_rhs(law: NestedFeedbackLaw) -> Rhs:
    """Vector field of the chain under ``law``; works on a state or a batch of states."""

    def rhs(x: FloatArray) -> FloatArray:
        dx = np.empty_like(x)
        dx[..., :-1] = x[..., 1:]
        dx[..., -1] = eval_feedback(law, x).u
        return dx

    return rhs


def scalar_feedback(law: NestedFeedbackLaw) -> Callable[[Sequence[float]], float]:
    """``x -> nu(x)`` on plain floats, for single-trajectory integration."""
    rows = [tuple(float(v) for v in row) for row in law.k]
    gains = [float(v) for v in law.a]
    sats = [sat.value for sat in law.sats]
    last = len(rows) - 1

    def feedback(x: Sequence[float]) -> float:
        s = 0.0
        for i, row in enumerate(rows):
            linear = sum(kv * xv for kv, xv in zip(row, x, strict=True))
            s = linear if i == 0 else linear + gains[i - 1] * sats[i - 1](s)
        return -gains[last] * sats[last](s)

    return feedback


def integrate_single(
    feedback: Callable[[Sequence[float]], float],
    x0: Sequence[float],
    step: float,
    horizon: float,
) -> tuple[FloatArray, FloatArray]:
    """RK4 of the chain ``x' = (x_2, ..., x_n, feedback(x))`` from one state."""
    steps = step_count(step, horizon)
    x = [float(v) for v in x0]
    n = len(x)
    states = np.empty((steps + 1, n))
    states[0] = x
    h, half = step, 0.5 * step

    def rhs(y: list[float]) -> list[float]:
        return [*y[1:], feedback(y)]

    for m in range(1, steps + 1):
        k1 = rhs(x)
        k2 = rhs([xi + half * ki for xi, ki in zip(x, k1, strict=True)])
        k3 = rhs([xi + half * ki for xi, ki in zip(x, k2, strict=True)])
        k4 = rhs([xi + h * ki for xi, ki in zip(x, k3, strict=True)])
        x = [
            xi + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            for xi, a, b, c, d in zip(x, k1, k2, k3, k4, strict=True)
        ]
        if not all(map(math.isfinite, x)):
            raise SimulationError(f"non-finite state at t = {m * step:.6g}")
        states[m] = x
    return np.arange(steps + 1) * step, states


def default_step(law: NestedFeedbackLaw) -> float:
    """``0.01 / alpha_mu_n``, a hundredth of the slowest linear time constant."""
    return STEP_FACTOR / law.alpha_mu_n


def _as_state(law: NestedFeedbackLaw, x0: Sequence[float] | FloatArray) -> FloatArray:
    x = np.asarray(x0, dtype=float)
    if x.shape[-1:] != (law.n,):
        raise ValueError(f"initial state must have {law.n} components, got shape {x.shape}")
    return x


# --- trajectories ------------------------------------------------------------------


def sustained_entry(times: FloatArray, inside: npt.NDArray[np.bool_]) -> float | None:
    """First grid time from which ``inside`` holds until the end, or None."""
    outside = np.nonzero(~inside)[0]
    if outside.size == 0:
        return float(times[0])
    last = int(outside[-1])
    if last == len(times) - 1:
        return None
    return float(times[last + 1])


@dataclass(frozen=True)
class Trajectory:
    """Sampled closed-loop solution; ``u_derivs[j-1]`` holds u^(j) on the grid."""

    times: FloatArray
    states: FloatArray
    u: FloatArray
    nested_args: FloatArray
    layer_entry: tuple[float | None, ...]
    u_derivs: FloatArray = field(default_factory=lambda: np.empty((0, 0)))
    derivative_discrepancy: tuple[float, ...] | None = None

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def linear_region_entry(self) -> float | None:
        """Time after which every layer stays linear, once all layers have entered."""
        if any(t is None for t in self.layer_entry):
            return None
        return max((t for t in self.layer_entry if t is not None), default=0.0)


def _trajectory(law: NestedFeedbackLaw, times: FloatArray, states: FloatArray) -> Trajectory:
    value = eval_feedback(law, states)
    z = value.z
    thresholds = np.array([mu.L for mu in law.mu_chain])
    layer_entry = tuple(
        sustained_entry(times, np.abs(z[:, i]) <= thresholds[i]) for i in range(law.n)
    )
    return Trajectory(
        times=times,
        states=states,
        u=np.asarray(value.u, dtype=float),
        nested_args=z,
        layer_entry=layer_entry,
    )


@monitor_performance
def integrate_closed_loop(
    law: NestedFeedbackLaw, x0: Sequence[float] | FloatArray, cfg: SimConfig | None = None
) -> Trajectory:
    """RK4 trajectory of the closed loop on ``[0, horizon]``."""
    cfg = cfg or SimConfig()
    x = _as_state(law, x0)
    if x.ndim != 1:
        raise ValueError("integrate_closed_loop takes a single state; use run_battery for batches")
    step = cfg.step or default_step(law)
    times, states = integrate_single(scalar_feedback(law), x.tolist(), step, cfg.horizon)
    return _trajectory(law, times, states)


# --- control derivatives -----------------------------------------------------------


def analytic_derivatives(law: NestedFeedbackLaw, states: FloatArray, p: int) -> FloatArray:
    """``u^(j)`` for j = 1..p at every row of ``states``, shape ``(p, len(states))``.

    State derivatives follow the chain (``x_n^(j) = u^(j-1)``); each layer's
    argument derivatives feed the Faa di Bruno formula of the next.
    """
    if p > min(sat.p for sat in law.sats):
        raise ValueError(f"order {p} exceeds the smoothness of the saturations")
    states = np.atleast_2d(np.asarray(states, dtype=float))
    value = eval_feedback(law, states)
    s = value.s
    n = law.n
    sat_derivs = [
        [sat(s[:, i], a) for a in range(1, p + 1)] for i, sat in enumerate(law.sats)
    ]
    x_deriv = states
    u_derivs: list[FloatArray] = [np.asarray(value.u, dtype=float)]
    arg_derivs: list[list[FloatArray]] = [[] for _ in range(n)]
    for j in range(1, p + 1):
        nxt = np.empty_like(x_deriv)
        nxt[:, :-1] = x_deriv[:, 1:]
        nxt[:, -1] = u_derivs[j - 1]
        x_deriv = nxt
        linear = x_deriv @ law.k.T
        for i in range(n):
            d = linear[:, i]
            if i > 0:
                d = d + law.a[i - 1] * faa_di_bruno(j, sat_derivs[i - 1], arg_derivs[i - 1])
            arg_derivs[i].append(d)
        u_derivs.append(-law.a[-1] * faa_di_bruno(j, sat_derivs[-1], arg_derivs[-1]))
    return np.array(u_derivs[1:]).reshape(p, len(states))


def finite_difference_derivatives(u: FloatArray, step: float, order: int) -> FloatArray:
    """Fourth-order central difference of the given order (1-4); NaN near the ends."""
    if order not in _STENCILS:
        raise ValueError(f"finite differences cover orders 1-4, got {order}")
    u = np.asarray(u, dtype=float)
    out = np.full_like(u, np.nan)
    if u.size < 7:
        return out
    weights = _STENCILS[order]
    inner = np.zeros(u.size - 6)
    for offset, w in enumerate(weights):
        if w:
            inner += w * u[offset : u.size - 6 + offset]
    out[3:-3] = inner / step**order
    return out


def _relative_discrepancy(analytic: FloatArray, fd: FloatArray) -> float:
    valid = np.isfinite(fd)
    if not np.any(valid):
        return 0.0
    scale = max(float(np.max(np.abs(analytic[valid]))), 1e-300)
    return float(np.max(np.abs(analytic[valid] - fd[valid]))) / scale


def control_derivatives_along(
    traj: Trajectory,
    law: NestedFeedbackLaw,
    p: int | None = None,
    method: DerivativeMethod = DerivativeMethod.ANALYTIC,
) -> Trajectory:
    """Return ``traj`` with ``u_derivs`` filled by the requested method."""
    p = law.p if p is None else p
    if method is DerivativeMethod.FINITE_DIFFERENCE:
        if p > 4:
            raise ValueError(f"finite differences cover orders 1-4, got p = {p}")
        fd = np.array([finite_difference_derivatives(traj.u, traj.step, j) for j in range(1, p + 1)])
        return replace(traj, u_derivs=fd.reshape(p, len(traj.times)))
    derivs = analytic_derivatives(law, traj.states, p)
    if method is DerivativeMethod.ANALYTIC:
        return replace(traj, u_derivs=derivs)
    discrepancy = tuple(
        _relative_discrepancy(derivs[j - 1], finite_difference_derivatives(traj.u, traj.step, j))
        for j in range(1, min(p, 4) + 1)
    )
    logger.debug("derivative cross-check", discrepancy=discrepancy)
    return replace(traj, u_derivs=derivs, derivative_discrepancy=discrepancy)


# --- verification ------------------------------------------------------------------


def settle_time(times: FloatArray, states: FloatArray, tolerance: float) -> float | None:
    """First time from which ``||x|| < tolerance`` for the rest of the grid."""
    return sustained_entry(times, np.linalg.norm(states, axis=-1) < tolerance)


def verify_linear_region_entry(traj: Trajectory, law: NestedFeedbackLaw) -> float | None:
    """Time after which every ``|z_i| <= L_{mu_i}``, or None within the horizon."""
    thresholds = np.array([mu.L for mu in law.mu_chain])
    inside = np.all(np.abs(traj.nested_args) <= thresholds, axis=1)
    return sustained_entry(traj.times, inside)


def top_peaks(times: FloatArray, values: FloatArray, count: int = PEAK_COUNT) -> list[PeakEstimate]:
    """Largest local maxima of ``|values|`` refined by a parabola through three samples."""
    v = np.abs(np.asarray(values, dtype=float))
    if v.size < 3:
        return []
    left, mid, right = v[:-2], v[1:-1], v[2:]
    idx = np.nonzero((mid >= left) & (mid >= right) & np.isfinite(mid) & (mid > 0))[0] + 1
    if idx.size == 0:
        return []
    idx = idx[np.argsort(v[idx])[::-1][:count]]
    h = float(times[1] - times[0])
    peaks = []
    for i in idx:
        a, b, c = v[i - 1], v[i], v[i + 1]
        curvature = a - 2.0 * b + c
        delta = 0.5 * (a - c) / curvature if curvature < 0 else 0.0
        peaks.append(
            PeakEstimate(time=float(times[i] + delta * h), value=float(b - 0.25 * (a - c) * delta))
        )
    return peaks


def verify_p_bounded(
    traj: Trajectory,
    budgets: Sequence[float],
    u_bound: Sequence[float],
    *,
    settle_tolerance: float = 1e-3,
) -> VerificationReport:
    """Grid suprema of ``|u|`` and ``|u^(j)|`` against budgets and a-priori bounds."""
    p = traj.u_derivs.shape[0]
    if len(budgets) < p + 1 or len(u_bound) < p:
        raise ValueError(f"order {p} needs {p + 1} budgets and {p} bounds")
    sup_u = float(np.max(np.abs(traj.u)))
    sups = [float(np.nanmax(np.abs(d))) if d.size else 0.0 for d in traj.u_derivs]
    budget_pass = [sup_u <= budgets[0] * (1.0 + 1e-12)]
    budget_pass += [s <= r for s, r in zip(sups, budgets[1:], strict=False)]
    soundness = [s <= b * (1.0 + SOUNDNESS_SLACK) for s, b in zip(sups, u_bound, strict=False)]
    return VerificationReport(
        sup_abs_u=sup_u,
        sup_abs_u_deriv=sups,
        budgets=list(budgets[: p + 1]),
        budget_pass=budget_pass,
        u_bound=list(u_bound[:p]),
        bound_soundness=soundness,
        peaks=[top_peaks(traj.times, d) for d in traj.u_derivs],
        settle_time=settle_time(traj.times, traj.states, settle_tolerance),
        linear_region_entry=traj.linear_region_entry,
        derivative_discrepancy=(
            list(traj.derivative_discrepancy) if traj.derivative_discrepancy is not None else None
        ),
    )


def simulate_and_verify(
    law: NestedFeedbackLaw, x0: Sequence[float] | FloatArray, cfg: SimConfig | None = None
) -> tuple[Trajectory, VerificationReport]:
    """Integrate, differentiate and verify one run."""
    cfg = cfg or SimConfig()
    traj = integrate_closed_loop(law, x0, cfg)
    traj = control_derivatives_along(traj, law, law.p, cfg.derivative_method)
    report = verify_p_bounded(
        traj, law.budgets, law.bounds.u_bound.tolist(), settle_tolerance=cfg.settle_tolerance
    )
    logger.info(
        "run verified",
        settle_time=report.settle_time,
        sup_abs_u_deriv=report.sup_abs_u_deriv,
        within_budget=report.within_budget,
    )
    return traj, report


def settle_horizon_estimate(law: NestedFeedbackLaw, x0: Sequence[float] | FloatArray) -> FloatArray:
    """Drift time ``|y_1(0)| / (alpha_mu_n mu_1^max)`` before the outer layer turns linear.

    While mu_1 saturates, y_1 drifts toward zero at roughly ``alpha_mu_n mu_1^max`` per
    unit time, so settling takes about this long. Accepts a state or a batch of states.
    """
    y = law.coordinates.apply(_as_state(law, x0))
    return np.abs(y[..., 0]) / (law.alpha_mu_n * law.mu_chain[0].sigma_max)


def random_initial_states(n: int, runs: int, radius: float, seed: int) -> FloatArray:
    """``runs`` states drawn uniformly from the ball of ``radius`` in R^n."""
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(runs, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=(runs, 1)) ** (1.0 / n)
    return directions * radii


@monitor_performance
def run_battery(
    law: NestedFeedbackLaw,
    runs: int,
    radius: float,
    seed: int,
    cfg: SimConfig | None = None,
) -> BatteryReport:
    """Seeded random battery integrated as one batch, one report per run."""
    cfg = cfg or SimConfig()
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    x0 = random_initial_states(law.n, runs, radius, seed)
    step = cfg.step or default_step(law)
    times, states = integrate(closed_loop_rhs(law), x0, step, cfg.horizon)
    reports = []
    for r in range(runs):
        traj = _trajectory(law, times, states[:, r, :])
        traj = control_derivatives_along(traj, law, law.p, cfg.derivative_method)
        reports.append(
            verify_p_bounded(
                traj,
                law.budgets,
                law.bounds.u_bound.tolist(),
                settle_tolerance=cfg.settle_tolerance,
            )
        )
    report = BatteryReport(
        seed=seed,
        runs=runs,
        radius=radius,
        settled=sum(rep.settle_time is not None for rep in reports),
        within_budget=sum(rep.within_budget for rep in reports),
        sound=sum(all(rep.bound_soundness) for rep in reports),
        horizon=cfg.horizon,
        settle_horizon=float(np.max(settle_horizon_estimate(law, x0))),
        reports=reports,
    )
    logger.info(
        "battery finished",
        runs=runs,
        settled=report.settled,
        within_budget=report.within_budget,
        sound=report.sound,
        settle_horizon=report.settle_horizon,
    )
    if report.settle_horizon > cfg.horizon:
        logger.warning(
            "horizon shorter than the settle estimate",
            horizon=cfg.horizon,
            settle_horizon=report.settle_horizon,
        )
    return report


def richardson_order(
    law: NestedFeedbackLaw, x0: Sequence[float] | FloatArray, step: float, horizon: float
) -> float:
    """Observed order of the integrator from terminal states at step, step/2, step/4."""
    x = _as_state(law, x0)
    if x.ndim != 1:
        raise ValueError("richardson_order takes a single state")
    feedback = scalar_feedback(law)
    finals = [integrate_single(feedback, x.tolist(), step / 2**m, horizon)[1][-1] for m in range(3)]
    coarse = float(np.linalg.norm(finals[0] - finals[1]))
    fine = float(np.linalg.norm(finals[1] - finals[2]))
    if fine == 0.0:
        return math.inf
    return math.log2(coarse / fine)


# --- counterexamples ---------------------------------------------------------------


def _scenario_rhs(
    scenario: Scenario, cfg: CounterexampleConfig, sigma: SaturationFunction
) -> tuple[Rhs, Callable[[FloatArray], tuple[FloatArray, FloatArray]]]:
    """Vector field and ``x -> (u, u')`` of a counterexample scenario."""
    a, b, c, d = cfg.a, cfg.b, cfg.c, cfg.d

    if scenario is Scenario.LINEAR_COMBINATION:

        def control(x: FloatArray) -> tuple[FloatArray, FloatArray]:
            x1, x2 = x[..., 0], x[..., 1]
            u = -a * sigma(b * x2) - c * sigma(d * (x1 + x2))
            rate = -a * b * sigma(b * x2, 1) * u - c * d * sigma(d * (x1 + x2), 1) * (x2 + u)
            return u, rate

        def rhs(x: FloatArray) -> FloatArray:
            return np.stack([x[..., 1], control(x)[0]], axis=-1)

    else:

        def control(x: FloatArray) -> tuple[FloatArray, FloatArray]:
            x1, x2 = x[..., 0], x[..., 1]
            u = -a * sigma(b * x2)
            rate = -a * b * sigma(b * x2, 1) * (-x1 + u)
            return u, rate

        def rhs(x: FloatArray) -> FloatArray:
            return np.stack([x[..., 1], -x[..., 0] + control(x)[0]], axis=-1)

    return rhs, control


def scenario_initial_state(scenario: Scenario, scale: float) -> FloatArray:
    """``(-s, s)`` for the linear combination, ``(s, 0)`` for the oscillator."""
    if scenario is Scenario.LINEAR_COMBINATION:
        return np.array([-scale, scale])
    return np.array([scale, 0.0])


def linear_combination_initial_rate(cfg: CounterexampleConfig, scale: float) -> float:
    """``|u'(0)| = c d sigma'(0) |x_20 + u(0)|`` with ``x_0 = (-s, s)`` and ``b s >= S``."""
    sigma = from_spec(cfg.saturation)
    u0 = -cfg.a * sigma(cfg.b * scale)
    return cfg.c * cfg.d * sigma(0.0, 1) * abs(scale + u0)


def _predicted_initial_rate(
    scenario: Scenario, cfg: CounterexampleConfig, sigma: SaturationFunction, scale: float
) -> float:
    if scenario is Scenario.LINEAR_COMBINATION:
        return linear_combination_initial_rate(cfg, scale)
    return cfg.a * cfg.b * sigma(0.0, 1) * abs(scale)


def contrast_law(cfg: CounterexampleConfig) -> NestedFeedbackLaw:
    """Nested law for the double integrator with the contrast budgets."""
    config = SynthesisConfig(
        n=2,
        p=len(cfg.contrast_budgets) - 1,
        budgets=list(cfg.contrast_budgets),
        saturations=[cfg.saturation, cfg.saturation],
    )
    return assemble_feedback(config)


@monitor_performance
def run_counterexample(
    scenario: Scenario,
    scales: Sequence[float],
    cfg: CounterexampleConfig | None = None,
) -> GrowthReport:
    """Ladder of initial-condition scales for a scenario and the nested contrast law."""
    cfg = cfg or CounterexampleConfig()
    sigma = from_spec(cfg.saturation)
    rhs, control = _scenario_rhs(scenario, cfg, sigma)
    law = contrast_law(cfg)
    sim = SimConfig(step=cfg.step, horizon=cfg.horizon)
    rows = []
    for scale in scales:
        x0 = scenario_initial_state(scenario, float(scale))
        _, states = integrate(rhs, x0[None, :], cfg.step, cfg.horizon)
        _, rates = control(states[:, 0, :])
        contrast = control_derivatives_along(integrate_closed_loop(law, x0, sim), law, 1)
        rows.append(
            GrowthRow(
                scale=float(scale),
                initial_rate=float(abs(rates[0])),
                predicted_initial_rate=_predicted_initial_rate(scenario, cfg, sigma, float(scale)),
                sup_abs_u_dot=float(np.max(np.abs(rates))),
                contrast_sup_abs_u_dot=float(np.max(np.abs(contrast.u_derivs[0]))),
                contrast_u_bound=float(law.bounds.u_bound[0]),
            )
        )
    report = GrowthReport(scenario=scenario, rows=rows)
    logger.info(
        "counterexample ladder",
        scenario=scenario.value,
        growth_factors=report.growth_factors,
        contrast_bounded=report.contrast_bounded,
    )
    return report


__all__ = [
    "SimulationError",
    "Trajectory",
    "analytic_derivatives",
    "closed_loop_rhs",
    "contrast_law",
    "control_derivatives_along",
    "default_step",
    "finite_difference_derivatives",
    "integrate",
    "integrate_closed_loop",
    "integrate_single",
    "random_initial_states",
    "linear_combination_initial_rate",
    "richardson_order",
    "rk4_step",
    "run_battery",
    "run_counterexample",
    "scalar_feedback",
    "scenario_initial_state",
    "settle_horizon_estimate",
    "settle_time",
    "simulate_and_verify",
    "step_count",
    "sustained_entry",
    "top_peaks",
    "verify_linear_region_entry",
    "verify_p_bounded",
]
