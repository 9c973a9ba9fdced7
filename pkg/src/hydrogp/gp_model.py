"""Conversion of one MPC window into a geometric program.

Heads, flows, demands and speeds are mapped to positive variables through
x_hat = b**x.  Tank updates and junction balances exponentiate into exact
monomial equalities; pipe and pump energy balances become monomial
equalities only after freezing flow-dependent constants at the previous
iterate, which is what makes the scheme a successive convex approximation.
Objectives enter through auxiliary variables: a per-tank deficit variable
(below the safety head) and a per-pump control-change variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegeneratePumpStateError,
    ExponentOverflowError,
    InfeasibleBoxBoundsError,
    NonPositiveValueError,
)
from .gp_core import GPProblem, Monomial, Posynomial
from .hydraulics import S_MIN, HydraulicState, resistance_coefficient, ResistanceSpec
from .network import DAEMatrices, Network


def _exponent_limit(b: float) -> float:
    return 700.0 / math.log(b)


def _check_exponent(value: float, b: float) -> float:
    if abs(value) > _exponent_limit(b):
        raise ExponentOverflowError(value, _exponent_limit(b))
    return value


def pipe_coefficient(q_prev: float, R: float, mu: float, b: float) -> float:
    """Frozen pipe constant  b ** (q_prev (R |q_prev|^(mu-1) - 1))."""
    exponent = q_prev * (R * abs(q_prev) ** (mu - 1.0) - 1.0)
    return b ** _check_exponent(exponent, b)


def pump_coefficients(
    q_prev: float, s_prev: float, h0: float, r: float, nu: float
) -> tuple[float, float]:
    """Frozen pump exponents (C1 on the speed variable, C2 on the flow)."""
    if s_prev < S_MIN:
        raise DegeneratePumpStateError(s_prev, S_MIN)
    if q_prev < 0:
        raise ValueError("pump flow must be nonnegative")
    c1 = -s_prev * h0
    c2 = r * q_prev ** (nu - 1.0) * s_prev ** (2.0 - nu)
    return c1, c2


@dataclass
class CoefficientSet:
    """Per-iteration linearization data, refreshed from the previous iterate.

    ``F_v[k, i]`` is the pipe constant for pipe i at window offset k;
    ``F_s`` / ``F_u`` hold the pump exponents.  ``safety_active`` marks the
    tank/step pairs whose deficit objective is switched on, and
    ``du_frozen`` carries the control changes whose values weight the
    smoothness monomials; both come from the same previous iterate.
    """

    F_v: np.ndarray
    F_s: np.ndarray
    F_u: np.ndarray
    base: float
    flow_scale: float = 1.0
    safety_active: np.ndarray | None = None
    du_frozen: np.ndarray | None = None

    def __post_init__(self):
        self.F_v = np.atleast_2d(np.asarray(self.F_v, dtype=float))
        self.F_s = np.atleast_2d(np.asarray(self.F_s, dtype=float))
        self.F_u = np.atleast_2d(np.asarray(self.F_u, dtype=float))
        if np.any(self.F_v <= 0) or not np.all(np.isfinite(self.F_v)):
            raise ValueError("pipe constants must be positive and finite")
        if not (np.all(np.isfinite(self.F_s)) and np.all(np.isfinite(self.F_u))):
            raise ValueError("pump constants must be finite")

    @property
    def horizon(self) -> int:
        return self.F_v.shape[0]


def coefficients_from_iterate(
    net: Network,
    iterate: "WindowSolution",
    b: float,
    u_prev: np.ndarray | None = None,
    flow_scale: float = 1.0,
) -> CoefficientSet:
    """Freeze the linearization constants at a window iterate.

    Flow/speed constants come from the per-step states (flows and curve
    parameters expressed in the scaled flow unit); the deficit activation
    pattern from the decided tank heads x(1..Hp); the frozen control
    changes (in cfs) from consecutive pump flows, with ``u_prev`` supplying
    the control applied one step before the window.
    """
    states = iterate.states
    Hp = len(states)
    gamma = flow_scale
    n_p, n_m, n_t = net.n_pipes, net.n_pumps, net.n_tanks
    F_v = np.ones((Hp, n_p))
    F_s = np.zeros((Hp, n_m))
    F_u = np.zeros((Hp, n_m))
    active = np.zeros((Hp, n_t), dtype=bool)
    du = np.zeros((Hp, n_m))

    pipe_Rmu = [
        resistance_coefficient(ResistanceSpec.from_pipe(net.links[p]))
        for p in net.pipe_ids
    ]
    pumps = [net.links[m] for m in net.pump_ids]

    for k, st in enumerate(states):
        for i, (R, mu) in enumerate(pipe_Rmu):
            F_v[k, i] = pipe_coefficient(
                gamma * float(st.v[i]), R / gamma**mu, mu, b
            )
        for j, pump in enumerate(pumps):
            s_prev = max(float(st.s[j]), S_MIN)
            q_prev = gamma * max(float(st.u[j]), 0.0)
            nu = pump.curve_exponent
            F_s[k, j], F_u[k, j] = pump_coefficients(
                q_prev, s_prev, pump.shutoff_head,
                pump.curve_coefficient / gamma**nu, nu,
            )
        for t, tid in enumerate(net.tank_ids):
            active[k, t] = float(iterate.x_traj[k + 1, t]) < net.tank(tid).safety_head
        if n_m:
            prev_u = (
                np.asarray(u_prev, dtype=float)
                if k == 0 and u_prev is not None
                else (states[k - 1].u if k > 0 else st.u)
            )
            du[k] = st.u - prev_u
    return CoefficientSet(
        F_v=F_v, F_s=F_s, F_u=F_u, base=b, flow_scale=gamma,
        safety_active=active, du_frozen=du,
    )


@dataclass
class WindowConfig:
    """Static knobs for window construction.

    ``flow_scale`` sets the unit in which flows enter the exponential
    encoding (scaled flow = flow_scale * cfs).  The converged physics is
    invariant to it, but it acts as the damping of the convexification
    loop: the linearized head/flow slope of every pipe row equals one head
    unit per scaled flow unit, so choosing it near the typical hydraulic
    slope (ft per cfs) keeps the iteration contractive.
    """

    base: float = 1.005
    junction_head_max: float = 2000.0
    safety_weight: float = 1.0
    smoothness_weight: float = 1.0
    speed_floor: float = S_MIN
    flow_scale: float = 60.0
    safety_form: str = "epigraph"
    pinned_speeds: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.safety_form not in ("epigraph", "activation"):
            raise ValueError("safety_form must be 'epigraph' or 'activation'")


def safety_objective(z_vars: list[str], weight: float = 1.0) -> Posynomial:
    """Product of the active tank-deficit variables (1 when none active)."""
    if not z_vars:
        return Posynomial((Monomial(1.0, {}),))
    return Posynomial((Monomial(1.0, {z: weight for z in z_vars}),))


def smoothness_objective(
    p_vars: list[str], du_prev: np.ndarray, weight: float = 1.0
) -> Posynomial:
    """Control-change monomial with exponents frozen at the previous iterate."""
    exponents = {
        p: weight * float(d) for p, d in zip(p_vars, np.atleast_1d(du_prev)) if d != 0.0
    }
    if not exponents:
        return Posynomial((Monomial(1.0, {}),))
    return Posynomial((Monomial(1.0, exponents),))


@dataclass
class WindowProblem:
    """A GPProblem plus the bookkeeping to map its variables back to states."""

    problem: GPProblem
    net: Network
    base: float
    flow_scale: float
    horizon: int
    x0: np.ndarray
    safety_active: np.ndarray
    du_frozen: np.ndarray
    var_names: dict[tuple[str, str, int], str]
    n_equalities: int
    n_inequalities: int
    cfg: "WindowConfig"

    def var(self, kind: str, element: str, k: int) -> str:
        return self.var_names[(kind, element, k)]

    def has_var(self, kind: str, element: str, k: int) -> bool:
        return (kind, element, k) in self.var_names

    def hat_vector(self, sol: "WindowSolution") -> np.ndarray:
        """Encode a window iterate into the fixed hat-space ordering used by
        the SCA error norm (physical variables only, no auxiliaries)."""
        b, g = self.base, self.flow_scale
        vals: list[np.ndarray] = []
        for st in sol.states:
            vals.extend((b**st.l, b ** (g * st.u), b ** (g * st.v), b**st.s))
        vals.append((b ** sol.x_traj[1:]).ravel())
        return np.concatenate([np.atleast_1d(v) for v in vals])

    def decode(self, values: dict[str, float]) -> "WindowSolution":
        """Map a hat-space solution back to heads/flows/speeds per step."""
        b = self.base
        net = self.net
        log_b = math.log(b)

        def dec(name: str) -> float:
            val = values[name]
            if not (val > 0 and math.isfinite(val)):
                raise NonPositiveValueError(f"{name} = {val}")
            return math.log(val) / log_b

        states: list[HydraulicState] = []
        x_traj = np.zeros((self.horizon + 1, net.n_tanks))
        x_traj[0] = self.x0
        for k in range(1, self.horizon + 1):
            x_traj[k] = [dec(self.var("x", t, k)) for t in net.tank_ids]
        g = self.flow_scale
        for k in range(self.horizon):
            states.append(
                HydraulicState(
                    x=x_traj[k],
                    l=np.array([dec(self.var("l", j, k)) for j in net.junction_ids]),
                    u=np.array([dec(self.var("u", m, k)) / g for m in net.pump_ids]),
                    v=np.array([dec(self.var("v", p, k)) / g for p in net.pipe_ids]),
                    s=np.clip(
                        [dec(self.var("s", m, k)) for m in net.pump_ids], 0.0, 1.0
                    ),
                )
            )
        z = np.ones((self.horizon, net.n_tanks))
        for k in range(1, self.horizon + 1):
            for t, tid in enumerate(net.tank_ids):
                if self.has_var("z", tid, k):
                    z[k - 1, t] = values[self.var("z", tid, k)]
        p = np.ones((self.horizon, net.n_pumps))
        for k in range(self.horizon):
            for j, mid in enumerate(net.pump_ids):
                if self.has_var("p", mid, k):
                    p[k, j] = values[self.var("p", mid, k)]
        return WindowSolution(states=states, x_traj=x_traj, z_hat=z, p_hat=p)


@dataclass
class WindowSolution:
    states: list[HydraulicState]
    x_traj: np.ndarray
    z_hat: np.ndarray
    p_hat: np.ndarray


def build_window(
    net: Network,
    mats: DAEMatrices,
    x0: np.ndarray,
    demands: np.ndarray,
    coeffs: CoefficientSet,
    Hp: int,
    cfg: WindowConfig | None = None,
    u_prev: np.ndarray | None = None,
    elastic: bool = False,
) -> WindowProblem:
    """Assemble the window GP for initial tank heads ``x0`` and the demand
    forecast ``demands`` (Hp, n_junctions), all in internal units.

    Every physical relation lands as a monomial equality and every bound as
    a monomial inequality, so the log-space image is affine apart from the
    log-sum-exp objective.  With ``elastic`` a shared slack multiplies every
    box row and is heavily penalized; the relaxation is used to step across
    transiently infeasible linearizations, never for a final answer.
    """
    cfg = cfg or WindowConfig()
    b = cfg.base
    gamma = cfg.flow_scale
    if coeffs.base != b:
        raise ValueError("coefficient set was built for a different base")
    if coeffs.flow_scale != gamma:
        raise ValueError("coefficient set was built for a different flow scale")
    x0 = np.asarray(x0, dtype=float)
    demands = np.atleast_2d(np.asarray(demands, dtype=float))
    if demands.shape != (Hp, net.n_junctions):
        raise ValueError(
            f"demand forecast has shape {demands.shape}, "
            f"expected ({Hp}, {net.n_junctions})"
        )
    if coeffs.horizon != Hp:
        raise ValueError("coefficient set does not cover the horizon")
    active = (
        coeffs.safety_active
        if coeffs.safety_active is not None
        else np.zeros((Hp, net.n_tanks), dtype=bool)
    )
    du_frozen = (
        coeffs.du_frozen
        if coeffs.du_frozen is not None
        else np.zeros((Hp, net.n_pumps))
    )
    if u_prev is None:
        u_prev = np.zeros(net.n_pumps)

    names: dict[tuple[str, str, int], str] = {}
    order: list[str] = []

    def new_var(kind: str, element: str, k: int) -> str:
        name = f"{kind}[{element}][{k}]"
        names[(kind, element, k)] = name
        order.append(name)
        return name

    slack_name = new_var("sigma", "", -1) if elastic else None

    for k in range(Hp):
        for j in net.junction_ids:
            new_var("l", j, k)
        for r in net.reservoir_ids:
            new_var("h", r, k)
        for m in net.pump_ids:
            new_var("u", m, k)
        for p in net.pipe_ids:
            new_var("v", p, k)
        for m in net.pump_ids:
            new_var("s", m, k)
        for m in net.pump_ids:
            new_var("p", m, k)
        if (
            cfg.smoothness_weight > 0
            and cfg.safety_form == "epigraph"
            and net.n_pumps
            and np.any(du_frozen[k] != 0.0)
        ):
            new_var("g", "", k)
    for k in range(1, Hp + 1):
        for t in net.tank_ids:
            new_var("x", t, k)
            if cfg.safety_weight > 0 and (
                cfg.safety_form == "epigraph"
                or active[k - 1][net.tank_ids.index(t)]
            ):
                new_var("z", t, k)

    eqs: list[Monomial] = []
    ineqs: list[Posynomial] = []
    obj_terms: list[Monomial] = []

    def head_ref(node_id: str, k: int, exponents: dict, sign: float, logc: list):
        """Attach head of node at step k: variable exponent or constant fold."""
        node = net.nodes[node_id]
        if node.kind == "junction":
            name = names[("l", node_id, k)]
            exponents[name] = exponents.get(name, 0.0) + sign
        elif node.kind == "reservoir":
            name = names[("h", node_id, k)]
            exponents[name] = exponents.get(name, 0.0) + sign
        else:
            t = net.tank_ids.index(node_id)
            if k == 0:
                logc[0] += sign * x0[t]
            else:
                name = names[("x", node_id, k)]
                exponents[name] = exponents.get(name, 0.0) + sign

    def add_box(name: str, lo: float, hi: float):
        if lo > hi:
            raise InfeasibleBoxBoundsError(
                f"{name}: bounds [{lo}, {hi}] are reversed"
            )
        _check_exponent(lo, b)
        _check_exponent(hi, b)
        extra = {slack_name: -1.0} if slack_name else {}
        if np.isfinite(lo):
            ineqs.append(Posynomial((Monomial(b**lo, {name: -1.0, **extra}),)))
        if np.isfinite(hi):
            ineqs.append(Posynomial((Monomial(b**-hi, {name: 1.0, **extra}),)))

    pipes = [net.links[p] for p in net.pipe_ids]
    pumps = [net.links[m] for m in net.pump_ids]

    for k in range(Hp):
        # junction mass balances: inflow product / outflow product = b^d
        for i, jid in enumerate(net.junction_ids):
            exponents: dict[str, float] = {}
            for col, mid in enumerate(net.pump_ids):
                coeff = mats.E_u[i, col]
                if coeff:
                    exponents[names[("u", mid, k)]] = float(coeff)
            for col, pid in enumerate(net.pipe_ids):
                coeff = mats.E_v[i, col]
                if coeff:
                    exponents[names[("v", pid, k)]] = float(coeff)
            # E_d = -I row applied to the known demand, in scaled flow units
            logc = -gamma * demands[k, i]
            eqs.append(Monomial(b ** _check_exponent(logc, b), exponents))

        # tank head updates
        for t, tid in enumerate(net.tank_ids):
            exponents = {names[("x", tid, k + 1)]: -1.0}
            logc = [0.0]
            if k == 0:
                logc[0] += x0[t]
            else:
                exponents[names[("x", tid, k)]] = 1.0
            for col, mid in enumerate(net.pump_ids):
                coeff = mats.B_u[t, col]
                if coeff:
                    exponents[names[("u", mid, k)]] = float(coeff) / gamma
            for col, pid in enumerate(net.pipe_ids):
                coeff = mats.B_v[t, col]
                if coeff:
                    exponents[names[("v", pid, k)]] = float(coeff) / gamma
            eqs.append(Monomial(b ** _check_exponent(logc[0], b), exponents))

        # reservoir head pins
        for rid in net.reservoir_ids:
            head = net.nodes[rid].fixed_head
            eqs.append(
                Monomial(
                    b ** _check_exponent(head, b), {names[("h", rid, k)]: -1.0}
                )
            )

        # pipe energy rows: head(from)/head(to) = C^P * q_hat
        for i, pipe in enumerate(pipes):
            exponents = {}
            logc = [0.0]
            head_ref(pipe.from_node, k, exponents, +1.0, logc)
            head_ref(pipe.to_node, k, exponents, -1.0, logc)
            name = names[("v", pipe.id, k)]
            exponents[name] = exponents.get(name, 0.0) - 1.0
            coeff = b ** _check_exponent(logc[0], b) / coeffs.F_v[k, i]
            eqs.append(Monomial(coeff, exponents))

        # pump energy rows: head(from)/head(to) = s_hat^C1 u_hat^C2
        for j, pump in enumerate(pumps):
            exponents = {}
            logc = [0.0]
            head_ref(pump.from_node, k, exponents, +1.0, logc)
            head_ref(pump.to_node, k, exponents, -1.0, logc)
            sname = names[("s", pump.id, k)]
            uname = names[("u", pump.id, k)]
            exponents[sname] = exponents.get(sname, 0.0) - _check_exponent(
                coeffs.F_s[k, j], b
            )
            exponents[uname] = exponents.get(uname, 0.0) - _check_exponent(
                coeffs.F_u[k, j], b
            )
            eqs.append(Monomial(b ** _check_exponent(logc[0], b), exponents))

        # control-change links: p_hat = u_hat(k) / u_hat(k-1)
        for j, mid in enumerate(net.pump_ids):
            exponents = {
                names[("p", mid, k)]: -1.0,
                names[("u", mid, k)]: 1.0,
            }
            logc = 0.0
            if k == 0:
                logc = -gamma * u_prev[j]
            else:
                prev = names[("u", mid, k - 1)]
                exponents[prev] = exponents.get(prev, 0.0) - 1.0
            eqs.append(Monomial(b ** _check_exponent(logc, b), exponents))

        # boxes
        for i, jid in enumerate(net.junction_ids):
            add_box(
                names[("l", jid, k)],
                net.nodes[jid].elevation,
                cfg.junction_head_max,
            )
        for j, pump in enumerate(pumps):
            add_box(
                names[("u", pump.id, k)],
                gamma * pump.flow_min,
                gamma * pump.flow_max,
            )
            pin = cfg.pinned_speeds.get(pump.id)
            sname = names[("s", pump.id, k)]
            if pin is not None:
                eqs.append(Monomial(b ** _check_exponent(-pin, b), {sname: 1.0}))
            else:
                add_box(sname, cfg.speed_floor, 1.0)
        for i, pipe in enumerate(pipes):
            add_box(
                names[("v", pipe.id, k)],
                gamma * pipe.flow_min,
                gamma * pipe.flow_max,
            )

        # smoothness term for this step; the 1/flow_scale on the frozen
        # exponent keeps the decoded objective equal to the squared control
        # change in cfs.  The epigraph form bounds an auxiliary from below
        # by both 1 and the change monomial (hinge: reversing the frozen
        # change direction earns no reward); the activation form emits the
        # literal lower-bound row on the monomial itself.
        if cfg.smoothness_weight > 0:
            p_vars = [names[("p", m, k)] for m in net.pump_ids]
            du = du_frozen[k] / gamma
            gamma2 = smoothness_objective(p_vars, du, 1.0)
            term = gamma2.terms[0]
            if term.exponents and cfg.safety_form == "epigraph":
                gname = names[("g", "", k)]
                obj_terms.append(
                    Monomial(1.0, {gname: cfg.smoothness_weight})
                )
                ineqs.append(Posynomial((Monomial(1.0, {gname: -1.0}),)))
                ineqs.append(
                    Posynomial(
                        (
                            Monomial(
                                1.0,
                                {**term.exponents, gname: -1.0},
                            ),
                        )
                    )
                )
            elif term.exponents:
                weighted = {
                    v: cfg.smoothness_weight * e for v, e in term.exponents.items()
                }
                obj_terms.append(Monomial(1.0, weighted))
                # lower bound on the change monomial, inverted into <= form;
                # skipped once the frozen changes are numerically zero, where
                # the row degenerates into the constant 1 <= 1 with no
                # attainable interior
                if float(np.max(np.abs(du_frozen[k]))) >= 1e-3:
                    ineqs.append(
                        Posynomial(
                            (Monomial(1.0, {v: -e for v, e in weighted.items()}),)
                        )
                    )

    # safety variables on the decided tank heads x(1..Hp).  The epigraph
    # form bounds the deficit variable from below by both 1 and the hinge
    # monomial, so its log equals max(0, safety_head - x) at the optimum.
    # The activation form reproduces the conditional-equality construction
    # instead: the deficit is pinned to the head gap exactly for tanks the
    # previous iterate put below the safety level.
    for k in range(1, Hp + 1):
        z_vars = []
        for t, tid in enumerate(net.tank_ids):
            tank = net.tank(tid)
            add_box(names[("x", tid, k)], tank.head_min, tank.head_max)
            if cfg.safety_weight <= 0:
                continue
            zkey = ("z", tid, k)
            if cfg.safety_form == "epigraph":
                zname = names[zkey]
                z_vars.append(zname)
                ineqs.append(Posynomial((Monomial(1.0, {zname: -1.0}),)))
                ineqs.append(
                    Posynomial(
                        (
                            Monomial(
                                b ** _check_exponent(tank.safety_head, b),
                                {zname: -1.0, names[("x", tid, k)]: -1.0},
                            ),
                        )
                    )
                )
            elif active[k - 1, t]:
                zname = names[zkey]
                z_vars.append(zname)
                eqs.append(
                    Monomial(
                        b ** _check_exponent(-tank.safety_head, b),
                        {zname: 1.0, names[("x", tid, k)]: 1.0},
                    )
                )
                ineqs.append(Posynomial((Monomial(1.0, {zname: -1.0}),)))
        if z_vars:
            obj_terms.append(safety_objective(z_vars, cfg.safety_weight).terms[0])

    if slack_name:
        ineqs.append(Posynomial((Monomial(1.0, {slack_name: -1.0}),)))
        obj_terms.append(Monomial(1.0, {slack_name: 100.0}))

    if not obj_terms:
        obj_terms.append(Monomial(1.0, {}))

    problem = GPProblem(
        objective=Posynomial(tuple(obj_terms)),
        eq_constraints=tuple(eqs),
        ineq_constraints=tuple(ineqs),
        variables=tuple(order),
        base=b,
    )
    return WindowProblem(
        problem=problem,
        net=net,
        base=b,
        flow_scale=gamma,
        horizon=Hp,
        x0=x0,
        safety_active=np.asarray(active, dtype=bool),
        du_frozen=np.asarray(du_frozen, dtype=float),
        var_names=names,
        n_equalities=len(eqs),
        n_inequalities=len(ineqs),
        cfg=cfg,
    )


def _interior(value: float, lo: float, hi: float) -> float:
    """Pull a value well inside [lo, hi]; bounds may be infinite.

    The margin is a percent of the box width: warm points closer to a
    bound than that carry barrier gradients on the order of the inverse
    squared slack and stall the first Newton steps.
    """
    if np.isfinite(lo) and np.isfinite(hi):
        margin = 0.01 * (hi - lo)
        return min(max(value, lo + margin), hi - margin)
    if np.isfinite(lo):
        return max(value, lo + 1e-3)
    if np.isfinite(hi):
        return min(value, hi - 1e-3)
    return value


def encode_states(wp: WindowProblem, iterate: WindowSolution) -> dict[str, float]:
    """Hat-space warm-start values for a window iterate.

    Values are pulled strictly inside their boxes: the barrier needs an
    interior point, and natural iterates (full speed, idle pump) sit
    exactly on bounds.
    """
    b, g = wp.base, wp.flow_scale
    net = wp.net
    cfg = wp.cfg
    vals: dict[str, float] = {}
    for k, st in enumerate(iterate.states):
        for i, jid in enumerate(net.junction_ids):
            head = _interior(st.l[i], net.nodes[jid].elevation, cfg.junction_head_max)
            vals[wp.var("l", jid, k)] = b ** head
        for rid in net.reservoir_ids:
            vals[wp.var("h", rid, k)] = b ** net.nodes[rid].fixed_head
        for j, mid in enumerate(net.pump_ids):
            pump = net.links[mid]
            if mid in cfg.pinned_speeds:
                speed = cfg.pinned_speeds[mid]
            else:
                speed = _interior(st.s[j], cfg.speed_floor, 1.0)
            vals[wp.var("u", mid, k)] = b ** (
                g * _interior(st.u[j], pump.flow_min, pump.flow_max)
            )
            vals[wp.var("s", mid, k)] = b ** speed
        for i, pid in enumerate(net.pipe_ids):
            pipe = net.links[pid]
            vals[wp.var("v", pid, k)] = b ** (
                g * _interior(st.v[i], pipe.flow_min, pipe.flow_max)
            )
    for k in range(1, wp.horizon + 1):
        for t, tid in enumerate(net.tank_ids):
            tank = net.tank(tid)
            head = _interior(iterate.x_traj[k, t], tank.head_min, tank.head_max)
            vals[wp.var("x", tid, k)] = b ** head
            if wp.has_var("z", tid, k):
                deficit = max(tank.safety_head - head, 0.0)
                vals[wp.var("z", tid, k)] = b ** (deficit + 1e-6)
    for k in range(wp.horizon):
        for j, mid in enumerate(net.pump_ids):
            if wp.has_var("p", mid, k):
                vals[wp.var("p", mid, k)] = 1.0
        if wp.has_var("g", "", k):
            vals[wp.var("g", "", k)] = b ** 1e-6
    if wp.has_var("sigma", "", -1):
        vals[wp.var("sigma", "", -1)] = b ** 2.0
    return vals
