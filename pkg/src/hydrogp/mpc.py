"""Successive convex approximation over one window, and the receding
horizon driver that applies the first control, advances the tanks, and
repeats for the full simulation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HydrogpError, InfeasibleProblemError, SolverFailureError
from .gp_core import SolveStatus, solve as gp_solve
from .gp_model import (
    WindowConfig,
    WindowProblem,
    WindowSolution,
    build_window,
    coefficients_from_iterate,
    encode_states,
)
from .hydraulics import S_MIN, HydraulicState, dae_residual, solve_wfp_newton, tank_step
from .network import DAEMatrices, DemandPattern, Network, incidence_matrices


@dataclass
class SCAConfig:
    """Knobs of the convexify-solve-refreeze loop and the MPC around it."""

    base: float = 1.005
    threshold: float = 0.5
    max_iter: int = 40
    horizon: int = 10
    dt: float = 3600.0
    solver_tol: float = 1e-8
    flow_scale: float = 60.0
    junction_head_max: float = 2000.0
    safety_weight: float = 1.0
    smoothness_weight: float = 1.0
    safety_form: str = "epigraph"
    pinned_speeds: dict[str, float] = field(default_factory=dict)
    initial_flows: dict[str, float] | None = None

    def __post_init__(self):
        if self.base <= 1:
            raise ValueError("base must exceed 1")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.max_iter < 1 or self.horizon < 1:
            raise ValueError("max_iter and horizon must be >= 1")

    def window_config(self) -> WindowConfig:
        return WindowConfig(
            base=self.base,
            junction_head_max=self.junction_head_max,
            safety_weight=self.safety_weight,
            smoothness_weight=self.smoothness_weight,
            flow_scale=self.flow_scale,
            safety_form=self.safety_form,
            pinned_speeds=dict(self.pinned_speeds),
        )


@dataclass
class WindowResult:
    """Final iterate of one window plus the full iteration log."""

    solution: WindowSolution
    errors: list[float]
    iterations: int
    converged: bool
    problem: WindowProblem


@dataclass
class MPCTrajectory:
    """Everything recorded over a closed-loop run.

    Per step k: applied controls u[k], s[k]; realized state x[k] (head at
    the step start), l[k], v[k]; iteration count and error series of the
    window solve; residual norms of the nonlinear model at the applied
    transition.  x has one extra row for the final head.
    """

    tank_ids: tuple[str, ...]
    junction_ids: tuple[str, ...]
    pipe_ids: tuple[str, ...]
    pump_ids: tuple[str, ...]
    x: np.ndarray
    l: np.ndarray
    u: np.ndarray
    v: np.ndarray
    s: np.ndarray
    demands: np.ndarray
    iterations: list[int]
    error_series: list[list[float]]
    converged: list[bool]
    residual_mass: np.ndarray
    residual_energy: np.ndarray
    residual_tank: np.ndarray
    u_start: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.u.shape[0]


def initial_window_iterate(
    net: Network,
    mats: DAEMatrices,
    x0: np.ndarray,
    demands: np.ndarray,
    cfg: SCAConfig,
) -> WindowSolution:
    """Flow initialization for the first SCA pass.

    Without explicit per-link values, flows at every step are set to the
    least-norm solution of that step's junction mass balance (each
    consumer's draw shared across the feeding links), speeds start at
    full, and tank heads follow the guessed flows.
    """
    Hp = demands.shape[0]
    n_j, n_m, n_p = net.n_junctions, net.n_pumps, net.n_pipes

    if cfg.initial_flows is not None:
        u_g0 = np.array([cfg.initial_flows.get(m, 0.0) for m in net.pump_ids])
        v_g0 = np.array([cfg.initial_flows.get(p, 0.0) for p in net.pipe_ids])
        flow_plan = [(u_g0.copy(), v_g0.copy()) for _ in range(Hp)]
    else:
        E = np.hstack([mats.E_u.toarray(), mats.E_v.toarray()])
        # feed demands from the fixed-head sources, not the storage: pin
        # tank-incident links to zero where that still balances mass
        tank_cols = np.zeros((0, E.shape[1]))
        pins = []
        for t, tid in enumerate(net.tank_ids):
            for link in net.links_in(tid) + net.links_out(tid):
                row = np.zeros(E.shape[1])
                if link.kind == "pump":
                    row[net.pump_ids.index(link.id)] = 1.0
                else:
                    row[n_m + net.pipe_ids.index(link.id)] = 1.0
                pins.append(row)
        if pins:
            tank_cols = np.array(pins)
        flow_plan = []
        for k in range(Hp):
            if len(tank_cols):
                A_sys = np.vstack([E, tank_cols])
                rhs = np.concatenate([demands[k], np.zeros(len(tank_cols))])
                flows, *_ = np.linalg.lstsq(A_sys, rhs, rcond=None)
                if np.max(np.abs(E @ flows - demands[k]), initial=0.0) > 1e-9:
                    flows, *_ = np.linalg.lstsq(E, demands[k], rcond=None)
            else:
                flows, *_ = np.linalg.lstsq(E, demands[k], rcond=None)
            flow_plan.append((flows[:n_m], flows[n_m:]))

    def clamp(u_g: np.ndarray, v_g: np.ndarray):
        u_g = np.maximum(u_g, 0.0)
        for j, mid in enumerate(net.pump_ids):
            link = net.links[mid]
            u_g[j] = min(max(u_g[j], link.flow_min), link.flow_max)
        for i, pid in enumerate(net.pipe_ids):
            link = net.links[pid]
            v_g[i] = min(max(v_g[i], link.flow_min), link.flow_max)
        return u_g, v_g

    flow_plan = [clamp(u, v) for u, v in flow_plan]
    s_g = np.ones(n_m)
    for j, mid in enumerate(net.pump_ids):
        if mid in cfg.pinned_speeds:
            s_g[j] = cfg.pinned_speeds[mid]

    fixed = np.concatenate([np.asarray(x0, dtype=float), net.reservoir_heads()])
    l_g = np.full(n_j, float(np.mean(fixed)) if fixed.size else 0.0)

    states: list[HydraulicState] = []
    x_traj = np.zeros((Hp + 1, net.n_tanks))
    x_traj[0] = x0
    for k in range(Hp):
        u_g, v_g = flow_plan[k]
        states.append(
            HydraulicState(x=x_traj[k], l=l_g.copy(), u=u_g.copy(),
                           v=v_g.copy(), s=s_g.copy())
        )
        x_traj[k + 1] = (
            mats.A @ x_traj[k] + mats.B_u @ u_g + mats.B_v @ v_g
            if net.n_tanks
            else x_traj[k]
        )
    # keep the guessed trajectory inside the tank box so the deficit
    # activation pattern starts from something physically admissible
    for t, tid in enumerate(net.tank_ids):
        tank = net.tank(tid)
        x_traj[:, t] = np.clip(x_traj[:, t], tank.head_min, tank.head_max)
    for k in range(Hp):
        states[k].x = x_traj[k]
    return WindowSolution(
        states=states,
        x_traj=x_traj,
        z_hat=np.ones((Hp, net.n_tanks)),
        p_hat=np.ones((Hp, n_m)),
    )


def solve_window(
    net: Network,
    mats: DAEMatrices,
    x0: np.ndarray,
    demand_forecast: np.ndarray,
    cfg: SCAConfig,
    warm: WindowSolution | None = None,
    u_prev: np.ndarray | None = None,
    step_index: int = 0,
) -> WindowResult:
    """Run the convexification loop on one optimization window.

    Each pass freezes the pipe/pump constants, the deficit activation and
    the control-change exponents at the previous iterate, solves the
    resulting geometric program, and measures the hat-space distance
    between consecutive solutions.  The loop stops as soon as that error
    drops below the threshold or the iteration budget is spent; hitting
    the budget is reported through ``converged``, not an exception.
    """
    Hp = cfg.horizon
    x0 = np.asarray(x0, dtype=float)
    demand_forecast = np.atleast_2d(np.asarray(demand_forecast, dtype=float))
    if demand_forecast.shape[0] < Hp:
        raise ValueError("forecast shorter than the horizon")
    demand_forecast = demand_forecast[:Hp]

    iterate = warm if warm is not None else initial_window_iterate(
        net, mats, x0, demand_forecast, cfg
    )
    wcfg = cfg.window_config()
    errors: list[float] = []
    problem: WindowProblem | None = None
    xi_last: np.ndarray | None = None
    converged = False

    n = 0
    relaxed_last = False
    while n < cfg.max_iter:
        n += 1
        coeffs = coefficients_from_iterate(
            net, iterate, cfg.base, u_prev, flow_scale=cfg.flow_scale
        )
        problem = build_window(
            net, mats, x0, demand_forecast, coeffs, Hp, wcfg, u_prev=u_prev
        )
        if xi_last is None:
            xi_last = problem.hat_vector(iterate)
        warm_values = encode_states(problem, iterate)
        try:
            result = gp_solve(problem.problem, warm_start=warm_values,
                              tol=cfg.solver_tol)
        except HydrogpError as exc:
            raise SolverFailureError(step_index, n, exc) from exc
        relaxed_last = False
        if result.status is SolveStatus.INFEASIBLE:
            # a transiently infeasible linearization: step across it with
            # the elastic window so the iteration can keep refreshing the
            # frozen constants; convergence is only accepted on strict solves
            elastic_problem = build_window(
                net, mats, x0, demand_forecast, coeffs, Hp, wcfg,
                u_prev=u_prev, elastic=True,
            )
            warm_values = encode_states(elastic_problem, iterate)
            try:
                result = gp_solve(elastic_problem.problem, warm_start=warm_values,
                                  tol=cfg.solver_tol)
            except HydrogpError as exc:
                raise SolverFailureError(step_index, n, exc) from exc
            if result.status is not SolveStatus.OPTIMAL:
                raise SolverFailureError(
                    step_index, n,
                    InfeasibleProblemError(float("nan"), result.message),
                )
            relaxed_last = True
            iterate = elastic_problem.decode(result.values)
        else:
            iterate = problem.decode(result.values)
        xi_sol = problem.hat_vector(iterate)
        error = float(np.linalg.norm(xi_sol - xi_last))
        errors.append(error)
        xi_last = xi_sol
        if error < cfg.threshold and not relaxed_last:
            converged = True
            break

    return WindowResult(
        solution=iterate,
        errors=errors,
        iterations=n,
        converged=converged,
        problem=problem,
    )


def run_mpc(
    net: Network,
    t_final: int,
    cfg: SCAConfig,
    patterns: DemandPattern | None = None,
    plant: str = "nominal",
) -> MPCTrajectory:
    """Receding-horizon closed loop for ``t_final`` sampling steps.

    At every step the first window control is applied and the tanks are
    advanced with the solved flows.  ``plant='oracle'`` replays the
    commanded speeds through the independent Newton solver instead, which
    quantifies the model/plant gap.
    """
    if plant not in ("nominal", "oracle"):
        raise ValueError("plant must be 'nominal' or 'oracle'")
    patterns = patterns if patterns is not None else net.patterns
    mats = incidence_matrices(net, cfg.dt)
    n_t, n_j = net.n_tanks, net.n_junctions
    n_p, n_m = net.n_pipes, net.n_pumps

    x = net.initial_tank_heads()
    x_hist = np.zeros((t_final + 1, n_t))
    x_hist[0] = x
    l_hist = np.zeros((t_final, n_j))
    u_hist = np.zeros((t_final, n_m))
    v_hist = np.zeros((t_final, n_p))
    s_hist = np.zeros((t_final, n_m))
    d_hist = np.zeros((t_final, n_j))
    r_mass = np.zeros(t_final)
    r_energy = np.zeros(t_final)
    r_tank = np.zeros(t_final)
    iterations: list[int] = []
    error_series: list[list[float]] = []
    converged: list[bool] = []

    warm: WindowSolution | None = None
    u_prev: np.ndarray | None = None
    u_start = np.zeros(n_m)

    for t0 in range(t_final):
        forecast = np.stack(
            [patterns.at(list(net.junction_ids), t0 + k) for k in range(cfg.horizon)]
        )
        if u_prev is None:
            guess = initial_window_iterate(net, mats, x, forecast, cfg)
            u_prev = guess.states[0].u.copy()
            u_start = u_prev.copy()
        try:
            res = solve_window(
                net, mats, x, forecast, cfg, warm=warm, u_prev=u_prev,
                step_index=t0,
            )
        except SolverFailureError:
            raise
        sol = res.solution
        first = sol.states[0]
        u0 = first.u.copy()
        s0 = np.clip(first.s, S_MIN, 1.0)
        d0 = forecast[0]

        if plant == "oracle":
            realized = solve_wfp_newton(net, x, s0, d0, mats=mats)
        else:
            realized = HydraulicState(
                x=x.copy(), l=first.l.copy(), u=u0.copy(), v=first.v.copy(), s=s0
            )
        x_next = np.array(
            [
                tank_step(
                    x[t],
                    [self_flow(realized, net, link) for link in net.links_in(tid)],
                    [self_flow(realized, net, link) for link in net.links_out(tid)],
                    cfg.dt,
                    net.tank(tid).cross_section,
                )
                for t, tid in enumerate(net.tank_ids)
            ]
        )
        rt, rm, re = dae_residual(net, mats, realized, x_next, d0)
        r_tank[t0] = float(np.max(np.abs(rt), initial=0.0))
        r_mass[t0] = float(np.max(np.abs(rm), initial=0.0))
        r_energy[t0] = float(np.max(np.abs(re), initial=0.0))

        x_hist[t0 + 1] = x_next
        l_hist[t0] = realized.l
        u_hist[t0] = realized.u
        v_hist[t0] = realized.v
        s_hist[t0] = s0
        d_hist[t0] = d0
        iterations.append(res.iterations)
        error_series.append(res.errors)
        converged.append(res.converged)

        # shift the final iterate one step for the next window's warm start
        warm = shift_iterate(sol, x_next)
        u_prev = u0
        x = x_next

    return MPCTrajectory(
        tank_ids=net.tank_ids,
        junction_ids=net.junction_ids,
        pipe_ids=net.pipe_ids,
        pump_ids=net.pump_ids,
        x=x_hist,
        l=l_hist,
        u=u_hist,
        v=v_hist,
        s=s_hist,
        demands=d_hist,
        iterations=iterations,
        error_series=error_series,
        converged=converged,
        residual_mass=r_mass,
        residual_energy=r_energy,
        residual_tank=r_tank,
        u_start=u_start,
    )


def self_flow(state: HydraulicState, net: Network, link) -> float:
    """Flow through a link in the given state, by link kind."""
    if link.kind == "pipe":
        return float(state.v[net.pipe_ids.index(link.id)])
    return float(state.u[net.pump_ids.index(link.id)])


def shift_iterate(sol: WindowSolution, x_new: np.ndarray) -> WindowSolution:
    """Advance a window iterate one step: drop the first state, repeat the
    last, and re-anchor the tank trajectory at the realized head."""
    states = [s for s in sol.states[1:]] + [sol.states[-1]]
    x_traj = np.vstack([sol.x_traj[1:], sol.x_traj[-1:]])
    x_traj[0] = x_new
    states[0] = HydraulicState(
        x=np.asarray(x_new, float),
        l=states[0].l,
        u=states[0].u,
        v=states[0].v,
        s=states[0].s,
    )
    return WindowSolution(
        states=states,
        x_traj=x_traj,
        z_hat=np.vstack([sol.z_hat[1:], sol.z_hat[-1:]]),
        p_hat=np.vstack([sol.p_hat[1:], sol.p_hat[-1:]]),
    )


def evaluate_objectives(
    traj: MPCTrajectory, x_sf: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Original-space objective series along a trajectory.

    The storage-deficit term uses the head reached after each step; the
    smoothness term compares each applied control with its predecessor
    (the recorded pre-simulation flow for the first step).
    """
    x_sf = np.asarray(x_sf, dtype=float)
    T = traj.n_steps
    gamma1 = np.zeros(T)
    gamma2 = np.zeros(T)
    for k in range(T):
        deficit = np.maximum(x_sf - traj.x[k + 1], 0.0)
        gamma1[k] = float(deficit @ deficit)
        prev = traj.u_start if k == 0 else traj.u[k - 1]
        du = traj.u[k] - prev
        gamma2[k] = float(du @ du)
    return gamma1, gamma2
