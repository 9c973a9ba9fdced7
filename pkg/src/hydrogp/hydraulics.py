"""Nonlinear hydraulics: head-loss laws, residuals, and a damped
Newton-Raphson water-flow solver used as the validation oracle.

All functions are pure; flows in cfs, heads in ft, time in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegeneratePumpStateError,
    DimensionMismatchError,
    NonConvergenceError,
    SingularJacobianError,
)
from .network import (
    CHEZY_MANNING,
    DARCY_WEISBACH,
    HAZEN_WILLIAMS,
    DAEMatrices,
    Network,
    Pipe,
    Pump,
)

S_MIN = 1e-3  # pump speed floor; below this the curve linearization degenerates
_EPS_Q = 1e-6  # flow regularization used only inside Jacobian assembly


@dataclass
class HydraulicState:
    """One time step's heads, flows and speeds.

    x: tank heads (ft), l: junction heads (ft), u: pump flows (cfs),
    v: pipe flows (cfs), s: pump relative speeds in [0, 1].
    """

    x: np.ndarray
    l: np.ndarray
    u: np.ndarray
    v: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        for name in ("x", "l", "u", "v", "s"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(~np.isfinite(self.x)) or np.any(~np.isfinite(self.l)):
            raise ValueError("non-finite head")
        if np.any((self.s < 0) | (self.s > 1)):
            raise ValueError("pump speed outside [0, 1]")


@dataclass(frozen=True)
class ResistanceSpec:
    """Pipe geometry plus the roughness parameter of the chosen formula."""

    formula: str
    length: float
    diameter: float
    roughness: float
    friction_factor: float | None = None

    @classmethod
    def from_pipe(cls, pipe: Pipe) -> "ResistanceSpec":
        return cls(
            formula=pipe.headloss_formula,
            length=pipe.length,
            diameter=pipe.diameter,
            roughness=pipe.roughness,
            friction_factor=pipe.friction_factor,
        )


def resistance_coefficient(spec: ResistanceSpec) -> tuple[float, float]:
    """Resistance R and flow exponent mu for ft/cfs units."""
    L, D = spec.length, spec.diameter
    if L <= 0 or D <= 0:
        raise ValueError("pipe geometry must be positive")
    if spec.formula == HAZEN_WILLIAMS:
        return 4.727 * L * spec.roughness**-1.852 * D**-4.871, 1.852
    if spec.formula == DARCY_WEISBACH:
        # friction factor taken as a per-pipe constant (no Re dependence)
        return 0.0252 * L * spec.friction_factor * D**-5, 2.0
    if spec.formula == CHEZY_MANNING:
        return 4.66 * L * spec.roughness**2 * D**-5.33, 2.0
    raise ValueError(f"unknown head-loss formula {spec.formula!r}")


def pipe_headloss(q: float, R: float, mu: float) -> float:
    """Head drop h_from - h_to across a pipe; odd in q."""
    return R * q * abs(q) ** (mu - 1.0)


def pipe_headloss_dq(q: float, R: float, mu: float, regularized: bool = True) -> float:
    """Derivative of :func:`pipe_headloss`; regularized near q = 0 so the
    Newton Jacobian stays bounded for mu < 2."""
    if regularized:
        return R * mu * (q * q + _EPS_Q * _EPS_Q) ** ((mu - 1.0) / 2.0)
    return R * mu * abs(q) ** (mu - 1.0)


def pump_headgain(q: float, s: float, h0: float, r: float, nu: float) -> float:
    """Head difference h_from - h_to across a pump (negative of the gain).

    The delivered gain h_to - h_from equals s^2 (h0 - r (q/s)^nu).
    """
    if s < S_MIN:
        raise DegeneratePumpStateError(s, S_MIN)
    if q < 0:
        raise ValueError("pump flow must be nonnegative")
    return -(s * s) * (h0 - r * (q / s) ** nu)


def pump_headgain_dq(q: float, s: float, h0: float, r: float, nu: float) -> float:
    """d/dq of h_from - h_to for a pump."""
    if s < S_MIN:
        raise DegeneratePumpStateError(s, S_MIN)
    q = max(q, 0.0)
    return r * nu * q ** (nu - 1.0) * s ** (2.0 - nu)


def tank_step(
    h: float, inflows, outflows, dt: float, area: float
) -> float:
    """Advance a tank head one sampling interval by volume balance."""
    if area <= 0:
        raise ValueError("tank area must be positive")
    net = float(np.sum(inflows)) - float(np.sum(outflows))
    return h + dt / area * net


def _link_params(net: Network):
    """Cache (R, mu) per pipe and curve parameters per pump, in link order."""
    pipes = [net.links[p] for p in net.pipe_ids]
    pumps = [net.links[m] for m in net.pump_ids]
    R_mu = [resistance_coefficient(ResistanceSpec.from_pipe(p)) for p in pipes]
    curves = [(m.shutoff_head, m.curve_coefficient, m.curve_exponent) for m in pumps]
    return R_mu, curves


def energy_nonlinearity(net: Network, u: np.ndarray, v: np.ndarray, s: np.ndarray) -> np.ndarray:
    """The stacked nonlinear part of the energy balance, pipes then pumps."""
    R_mu, curves = _link_params(net)
    phi = np.empty(net.n_pipes + net.n_pumps)
    for i, (R, mu) in enumerate(R_mu):
        phi[i] = -pipe_headloss(v[i], R, mu)
    for j, (h0, r, nu) in enumerate(curves):
        phi[net.n_pipes + j] = -pump_headgain(u[j], s[j], h0, r, nu)
    return phi


def dae_residual(
    net: Network,
    mats: DAEMatrices,
    state_k: HydraulicState,
    x_next: np.ndarray,
    d_k: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residuals of the tank update, mass balance and energy balance.

    Returns (r_tank [ft], r_mass [cfs], r_energy [ft]); all zero at a
    physically consistent state transition.
    """
    x_next = np.asarray(x_next, dtype=float)
    d_k = np.asarray(d_k, dtype=float)
    if x_next.shape != (net.n_tanks,):
        raise DimensionMismatchError(
            f"x_next has shape {x_next.shape}, expected ({net.n_tanks},)"
        )
    if d_k.shape != (net.n_junctions,):
        raise DimensionMismatchError(
            f"d_k has shape {d_k.shape}, expected ({net.n_junctions},)"
        )
    st = state_k
    r_tank = x_next - mats.A @ st.x - mats.B_u @ st.u - mats.B_v @ st.v
    r_mass = mats.E_u @ st.u + mats.E_v @ st.v + mats.E_d @ d_k
    head_part = mats.E_x @ st.x + mats.E_l @ st.l + mats.E_r @ net.reservoir_heads()
    r_energy = head_part + energy_nonlinearity(net, st.u, st.v, st.s)
    return r_tank, r_mass, r_energy


def wfp_residual(
    net: Network, mats: DAEMatrices, y: np.ndarray, x: np.ndarray,
    s: np.ndarray, d: np.ndarray,
) -> np.ndarray:
    """Stacked mass+energy residual for the water-flow problem unknowns
    y = [junction heads | pump flows | pipe flows]."""
    n_j, n_m = net.n_junctions, net.n_pumps
    l = y[:n_j]
    u = y[n_j : n_j + n_m]
    v = y[n_j + n_m :]
    r_mass = mats.E_u @ u + mats.E_v @ v + mats.E_d @ d
    head_part = mats.E_x @ x + mats.E_l @ l + mats.E_r @ net.reservoir_heads()
    r_energy = head_part + energy_nonlinearity(net, u, np.asarray(v), s)
    return np.concatenate([r_mass, r_energy])


def wfp_jacobian(
    net: Network, mats: DAEMatrices, y: np.ndarray, s: np.ndarray
) -> np.ndarray:
    """Dense Jacobian of :func:`wfp_residual` w.r.t. y.

    Flow derivatives use the regularized form so the matrix stays
    invertible at flow reversals.
    """
    n_j, n_m, n_p = net.n_junctions, net.n_pumps, net.n_pipes
    u = y[n_j : n_j + n_m]
    v = y[n_j + n_m :]
    R_mu, curves = _link_params(net)

    J = np.zeros((n_j + n_p + n_m, n_j + n_m + n_p))
    J[:n_j, n_j : n_j + n_m] = mats.E_u.toarray()
    J[:n_j, n_j + n_m :] = mats.E_v.toarray()
    J[n_j:, :n_j] = mats.E_l.toarray()
    for i, (R, mu) in enumerate(R_mu):
        J[n_j + i, n_j + n_m + i] = -pipe_headloss_dq(v[i], R, mu)
    for j, (h0, r, nu) in enumerate(curves):
        J[n_j + n_p + j, n_j + j] = -pump_headgain_dq(u[j], s[j], h0, r, nu)
    return J


def solve_wfp_newton(
    net: Network,
    tank_heads: np.ndarray,
    speeds: np.ndarray,
    demands: np.ndarray,
    mats: DAEMatrices | None = None,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> HydraulicState:
    """Solve flows and heads given fixed tank/reservoir heads and speeds.

    Damped Newton-Raphson on the stacked mass+energy residual; the step is
    halved (up to 30 times) whenever the residual norm fails to decrease.
    Pump flows are projected onto q >= 0 after every update.
    """
    from .network import incidence_matrices

    if net.n_tanks + net.n_reservoirs == 0:
        raise ValueError("need at least one fixed-head node")
    x = np.asarray(tank_heads, dtype=float)
    s = np.asarray(speeds, dtype=float)
    d = np.asarray(demands, dtype=float)
    if x.shape != (net.n_tanks,):
        raise DimensionMismatchError("tank head vector has wrong length")
    if s.shape != (net.n_pumps,):
        raise DimensionMismatchError("speed vector has wrong length")
    if d.shape != (net.n_junctions,):
        raise DimensionMismatchError("demand vector has wrong length")
    for sj in s:
        if sj < S_MIN:
            raise DegeneratePumpStateError(float(sj), S_MIN)
    if mats is None:
        mats = incidence_matrices(net, dt=3600.0)

    n_j, n_m, n_p = net.n_junctions, net.n_pumps, net.n_pipes

    # start: junction heads at the mean fixed head, flows at a small
    # positive value so pump curves are differentiable along the path
    fixed = np.concatenate([x, net.reservoir_heads()])
    y = np.concatenate(
        [
            np.full(n_j, float(np.mean(fixed))),
            np.full(n_m, 0.1),
            np.zeros(n_p),
        ]
    )

    res = wfp_residual(net, mats, y, x, s, d)
    norm = float(np.linalg.norm(res, np.inf))
    for iteration in range(max_iter):
        if norm <= tol:
            return HydraulicState(
                x=x, l=y[:n_j], u=y[n_j : n_j + n_m], v=y[n_j + n_m :], s=s
            )
        J = wfp_jacobian(net, mats, y, s)
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(str(exc)) from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError("non-finite Newton step")

        alpha = 1.0
        for _ in range(30):
            y_try = y + alpha * step
            y_try[n_j : n_j + n_m] = np.maximum(y_try[n_j : n_j + n_m], 0.0)
            res_try = wfp_residual(net, mats, y_try, x, s, d)
            norm_try = float(np.linalg.norm(res_try, np.inf))
            if norm_try < norm:
                break
            alpha *= 0.5
        else:
            raise NonConvergenceError(iteration, norm)
        y, res, norm = y_try, res_try, norm_try

    if norm <= tol:
        return HydraulicState(
            x=x, l=y[:n_j], u=y[n_j : n_j + n_m], v=y[n_j + n_m :], s=s
        )
    raise NonConvergenceError(max_iter, norm)
