"""Monomial/posynomial algebra, element-wise exponential operators, the
log-space convex transform, and a self-contained barrier solver.

The solver works internally in natural-log space z = ln(x): monomial
equalities become affine rows, posynomial inequalities become
log-sum-exp(affine) <= 0, and the objective a log-sum-exp.  Affine
equalities are eliminated through an orthonormal nullspace basis, so
Newton runs on the true degrees of freedom; single-term inequalities
(the overwhelmingly common case here) are kept as one stacked affine
block for vectorized barrier evaluation.  An active-set polish after the
barrier converges removes its O(gap) bias, giving solutions accurate to
near machine precision.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from .errors import (
    DimensionMismatchError,
    NumericalFailureError,
)


@dataclass(frozen=True)
class Monomial:
    """c * prod(x_i ** a_i) with c > 0 over positive variables."""

    coefficient: float
    exponents: dict[str, float]

    def __post_init__(self):
        if not (self.coefficient > 0 and math.isfinite(self.coefficient)):
            raise ValueError(
                f"monomial coefficient must be positive and finite, "
                f"got {self.coefficient}"
            )

    def value(self, point: dict[str, float]) -> float:
        out = self.coefficient
        for var, exp in self.exponents.items():
            out *= point[var] ** exp
        return out


@dataclass(frozen=True)
class Posynomial:
    terms: tuple[Monomial, ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("posynomial needs at least one term")

    def value(self, point: dict[str, float]) -> float:
        return sum(t.value(point) for t in self.terms)


def posy(*terms: Monomial) -> Posynomial:
    return Posynomial(tuple(terms))


@dataclass(frozen=True)
class GPProblem:
    """minimize objective s.t. each eq-monomial == 1, each posynomial <= 1,
    all variables > 0."""

    objective: Posynomial
    eq_constraints: tuple[Monomial, ...]
    ineq_constraints: tuple[Posynomial, ...]
    variables: tuple[str, ...]
    base: float = math.e

    def __post_init__(self):
        if self.base <= 1:
            raise ValueError("base must exceed 1")
        declared = set(self.variables)
        for mono in self._all_monomials():
            undeclared = set(mono.exponents) - declared
            if undeclared:
                raise ValueError(f"undeclared variables {sorted(undeclared)}")

    def _all_monomials(self):
        yield from self.objective.terms
        yield from self.eq_constraints
        for p in self.ineq_constraints:
            yield from p.terms


@dataclass
class LogSpaceProgram:
    """Affine image of a GPProblem over y = log_b(x).

    Each monomial maps to (exponent row, log_b coefficient); a monomial
    equality is the affine row  logb_coeff + a . y = 0, a posynomial
    inequality is log-sum-exp of its rows <= 0, and the objective is the
    log-sum-exp of its rows.
    """

    variables: tuple[str, ...]
    base: float
    obj_exponents: np.ndarray
    obj_logb_coeffs: np.ndarray
    eq_exponents: np.ndarray
    eq_logb_coeffs: np.ndarray
    ineq_terms: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


@dataclass
class SolveResult:
    status: SolveStatus
    values: dict[str, float]
    objective: float
    iterations: int
    kkt_residual: float
    message: str = ""


def elementwise_exp(X: np.ndarray, b: float) -> np.ndarray:
    """b ** X, applied entry by entry."""
    if b <= 1:
        raise ValueError("base must exceed 1")
    return np.power(b, np.asarray(X, dtype=float))


def star_product(X_hat: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Element-wise exponential matrix product.

    For X_hat (m, p) positive and Y (n, m), returns C (n, p) with
    C[i, j] = prod_k X_hat[k, j] ** Y[i, k], evaluated as literal products
    of powers (not through logarithms).
    """
    X_hat = np.asarray(X_hat, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X_hat.ndim != 2 or Y.ndim != 2 or Y.shape[1] != X_hat.shape[0]:
        raise DimensionMismatchError(
            f"cannot star-multiply shapes {X_hat.shape} and {Y.shape}"
        )
    if np.any(X_hat <= 0):
        raise ValueError("star product requires a positive left factor")
    n, p = Y.shape[0], X_hat.shape[1]
    C = np.ones((n, p))
    for i in range(n):
        for j in range(p):
            C[i, j] = np.prod(X_hat[:, j] ** Y[i, :])
    return C


def verify_property1(X: np.ndarray, Y: np.ndarray, b: float) -> float:
    """Max relative discrepancy between b**(Y X) and b**X star Y.

    Both sides are computed along independent arithmetic paths; entries are
    compared relative to max(1, |lhs|).
    """
    lhs = elementwise_exp(np.asarray(Y, dtype=float) @ np.asarray(X, dtype=float), b)
    rhs = star_product(elementwise_exp(X, b), Y)
    scale = np.maximum(1.0, np.abs(lhs))
    return float(np.max(np.abs(lhs - rhs) / scale))


def log_transform(problem: GPProblem) -> LogSpaceProgram:
    """Canonicalize a GPProblem to its affine log-space image."""
    var_index = {v: i for i, v in enumerate(problem.variables)}
    n = len(problem.variables)
    log_b = math.log(problem.base)

    def rows(monomials) -> tuple[np.ndarray, np.ndarray]:
        A = np.zeros((len(monomials), n))
        c = np.zeros(len(monomials))
        for r, mono in enumerate(monomials):
            for var, exp in mono.exponents.items():
                A[r, var_index[var]] += exp
            c[r] = math.log(mono.coefficient) / log_b
        return A, c

    obj_A, obj_c = rows(problem.objective.terms)
    eq_A, eq_c = rows(problem.eq_constraints)
    ineqs = [rows(p.terms) for p in problem.ineq_constraints]
    return LogSpaceProgram(
        variables=problem.variables,
        base=problem.base,
        obj_exponents=obj_A,
        obj_logb_coeffs=obj_c,
        eq_exponents=eq_A,
        eq_logb_coeffs=eq_c,
        ineq_terms=ineqs,
    )


# ---------------------------------------------------------------------------
# solver internals (natural-log space, equality-eliminated)

_Z_LIMIT = 600.0  # |ln x| beyond this means divergence / unboundedness


def _sym_solve(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            sol = scipy.linalg.solve(K, rhs, assume_a="sym")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailureError(f"linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise NumericalFailureError("non-finite Newton step")
    return sol


class _LSE:
    """f(y) = ln sum_t exp(A y + c)."""

    __slots__ = ("A", "c")

    def __init__(self, A: np.ndarray, c: np.ndarray):
        self.A = np.ascontiguousarray(A, dtype=float)
        self.c = np.ascontiguousarray(c, dtype=float)

    def shifted(self, basis: np.ndarray, origin: np.ndarray) -> "_LSE":
        return _LSE(self.A @ basis, self.c + self.A @ origin)

    def value(self, y: np.ndarray) -> float:
        e = self.A @ y + self.c
        m = float(np.max(e))
        return m + math.log(float(np.sum(np.exp(e - m))))

    def value_grad_hess(self, y: np.ndarray):
        e = self.A @ y + self.c
        m = float(np.max(e))
        w = np.exp(e - m)
        total = float(np.sum(w))
        w /= total
        grad = self.A.T @ w
        hess = (self.A * w[:, None]).T @ self.A - np.outer(grad, grad)
        return m + math.log(total), grad, hess


class _Reduced:
    """Barrier problem over the equality nullspace coordinates y.

    Single-term inequalities are one affine block (rows must stay < 0);
    genuine multi-term posynomial constraints keep their own log-sum-exp.
    """

    def __init__(self, f0: _LSE, A_lin: np.ndarray, c_lin: np.ndarray,
                 lses: list[_LSE], dof: int):
        self.f0 = f0
        self.A_lin = A_lin
        self.c_lin = c_lin
        self.lses = lses
        self.dof = dof
        self.m = len(c_lin) + len(lses)

    def ineq_values(self, y: np.ndarray) -> np.ndarray:
        parts = []
        if len(self.c_lin):
            parts.append(self.A_lin @ y + self.c_lin)
        if self.lses:
            parts.append(np.array([f.value(y) for f in self.lses]))
        return np.concatenate(parts) if parts else np.zeros(0)

    def feasible(self, y: np.ndarray, margin: float = 0.0) -> bool:
        vals = self.ineq_values(y)
        return bool(vals.size == 0 or np.max(vals) < -margin)

    def psi(self, y: np.ndarray, tau: float) -> float:
        val = tau * self.f0.value(y)
        if len(self.c_lin):
            slack = -(self.A_lin @ y + self.c_lin)
            if np.any(slack <= 0):
                return float("inf")
            val -= float(np.sum(np.log(slack)))
        for f in self.lses:
            fv = f.value(y)
            if fv >= 0:
                return float("inf")
            val -= math.log(-fv)
        return val

    def grad_hess(self, y: np.ndarray, tau: float):
        _, g0, H0 = self.f0.value_grad_hess(y)
        g = tau * g0
        H = tau * H0
        if len(self.c_lin):
            slack = -(self.A_lin @ y + self.c_lin)
            if np.any(slack <= 0):
                raise NumericalFailureError("barrier left its domain")
            inv = 1.0 / slack
            g = g + self.A_lin.T @ inv
            H = H + (self.A_lin * (inv * inv)[:, None]).T @ self.A_lin
        for f in self.lses:
            fv, fg, fh = f.value_grad_hess(y)
            if fv >= 0:
                raise NumericalFailureError("barrier left its domain")
            inv = 1.0 / (-fv)
            g = g + inv * fg
            H = H + inv * fh + inv * inv * np.outer(fg, fg)
        return g, H


def _newton(reduced: _Reduced, y: np.ndarray, tau: float, tol: float,
            max_iter: int = 80) -> tuple[np.ndarray, float, int, bool]:
    """Feasible-start damped Newton on psi(., tau).

    Returns (y, gradient norm, iterations, clean) where clean=False means
    the iterates ran away (unbounded direction) or the line search stalled.
    """
    iterations = 0
    for _ in range(max_iter):
        if float(np.max(np.abs(y), initial=0.0)) > 1e5:
            return y, float("inf"), iterations, False
        g, H = reduced.grad_hess(y, tau)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol * (1.0 + tau):
            return y, gnorm, iterations, True
        reg = 1e-12 * (1.0 + float(np.trace(H)) / max(reduced.dof, 1))
        dy = _sym_solve(H + reg * np.eye(reduced.dof), -g)
        decrement = -float(g @ dy)
        if decrement <= 2.0 * tol * (1.0 + tau) * min(1.0, gnorm):
            return y, gnorm, iterations, True
        base_val = reduced.psi(y, tau)
        step = 1.0
        for _ls in range(60):
            y_try = y + step * dy
            val = reduced.psi(y_try, tau)
            if val <= base_val - 0.25 * step * decrement:
                y = y_try
                break
            step *= 0.5
        else:
            return y, gnorm, iterations, False
        iterations += 1
    g, _ = reduced.grad_hess(y, tau)
    return y, float(np.linalg.norm(g)), iterations, True


def _phase1(reduced: _Reduced, y0: np.ndarray) -> tuple[np.ndarray, float]:
    """Elastic-slack feasibility search: min t s.t. f_i(y) <= t.

    The slack is floored at -1 and the coordinates boxed, so the auxiliary
    barrier problem is bounded.  Returns a strictly feasible y, or the
    certificate slack if none exists.
    """
    dof, m1 = reduced.dof, len(reduced.c_lin)
    box = 1e4
    y0 = np.clip(y0, -box + 1, box - 1)

    rows = [np.zeros((1, dof + 1))]
    offs = [np.array([-1.0])]
    rows[0][0, -1] = -1.0  # slack floor t >= -1
    eye = np.eye(dof)
    box_A = np.concatenate([np.vstack([eye, -eye]), np.zeros((2 * dof, 1))], axis=1)
    rows.append(box_A)
    offs.append(np.full(2 * dof, -box))
    if m1:
        rows.append(
            np.concatenate([reduced.A_lin, -np.ones((m1, 1))], axis=1)
        )
        offs.append(reduced.c_lin)
    A_lin = np.vstack(rows)
    c_lin = np.concatenate(offs)
    lses = [
        _LSE(np.concatenate([f.A, -np.ones((f.A.shape[0], 1))], axis=1), f.c)
        for f in reduced.lses
    ]
    obj_A = np.zeros((1, dof + 1))
    obj_A[0, -1] = 1.0
    aux = _Reduced(_LSE(obj_A, np.zeros(1)), A_lin, c_lin, lses, dof + 1)

    t0 = max(float(np.max(reduced.ineq_values(y0), initial=0.0)) + 1.0, 0.0)
    yt = np.concatenate([y0, [t0]])
    tau = 1.0
    for _ in range(40):
        yt, _, _, _ = _newton(aux, yt, tau, tol=1e-9)
        y_cand = yt[:dof]
        if reduced.feasible(y_cand, margin=1e-9):
            return y_cand, float(yt[-1])
        if aux.m / tau < 1e-9:
            break
        tau *= 10.0
    y_cand = yt[:dof]
    worst = float(np.max(reduced.ineq_values(y_cand), initial=0.0))
    if worst < 0:
        return y_cand, float(yt[-1])
    return y_cand, worst


def _polish(reduced: _Reduced, y: np.ndarray, gap: float):
    """Active-set refinement: pin near-active inequalities and run Newton
    on the exact stationarity conditions.  Returns None when the guess is
    wrong (negative multiplier or a new violation) so the caller keeps the
    plain barrier point."""
    fvals = reduced.ineq_values(y)
    act_tol = max(1e-7, 10.0 * gap)
    active = np.where(fvals > -act_tol)[0] if fvals.size else np.array([], int)
    a, dof, m1 = len(active), reduced.dof, len(reduced.c_lin)
    lam = gap / np.maximum(-fvals[active], 1e-300) if a else np.zeros(0)

    def row_grad(idx: int, y_p: np.ndarray):
        if idx < m1:
            return (
                float(reduced.A_lin[idx] @ y_p + reduced.c_lin[idx]),
                reduced.A_lin[idx],
                np.zeros((dof, dof)),
            )
        return reduced.lses[idx - m1].value_grad_hess(y_p)

    y_p, lam_p = y.copy(), lam.copy()
    ok = False
    for _ in range(30):
        _, g0, H0 = reduced.f0.value_grad_hess(y_p)
        rd = g0.copy()
        H = H0.copy()
        grads = np.zeros((a, dof))
        ra = np.zeros(a)
        for i, idx in enumerate(active):
            fv, fg, fh = row_grad(int(idx), y_p)
            rd += lam_p[i] * fg
            H += lam_p[i] * fh
            grads[i] = fg
            ra[i] = fv
        rnorm = float(np.linalg.norm(np.concatenate([rd, ra])))
        if rnorm <= 1e-12 * (1.0 + float(np.linalg.norm(g0))):
            ok = True
            break
        K = np.zeros((dof + a, dof + a))
        K[:dof, :dof] = H + 1e-14 * np.eye(dof)
        K[:dof, dof:] = grads.T
        K[dof:, :dof] = grads
        K[dof:, dof:] = -1e-14 * np.eye(a)
        try:
            sol = _sym_solve(K, -np.concatenate([rd, ra]))
        except NumericalFailureError:
            return None
        y_p = y_p + sol[:dof]
        lam_p = lam_p + sol[dof:]
    if not ok or np.any(lam_p < -1e-9):
        return None
    fv_all = reduced.ineq_values(y_p)
    inactive = np.setdiff1d(np.arange(reduced.m), active)
    if inactive.size and float(np.max(fv_all[inactive])) > 1e-10:
        return None
    if a and float(np.max(np.abs(fv_all[active]))) > 1e-9:
        return None
    return y_p


def _split_constant_rows(lsp: LogSpaceProgram):
    """Validate/drop constraints without variables; returns an error string
    for constants that can never hold."""
    ln_b = math.log(lsp.base)
    G = np.asarray(lsp.eq_exponents, dtype=float).reshape(-1, len(lsp.variables))
    h = -np.asarray(lsp.eq_logb_coeffs, dtype=float) * ln_b
    keep = np.any(G != 0.0, axis=1)
    if np.any(~keep & (np.abs(h) > 1e-9)):
        return None, None, None, None, "constant monomial equality != 1"
    G, h = G[keep], h[keep]

    A_rows, c_rows, lses = [], [], []
    for A, c in lsp.ineq_terms:
        A = np.asarray(A, dtype=float)
        c_nat = np.asarray(c, dtype=float) * ln_b
        if A.size == 0 or not np.any(A):
            val = float(scipy.special.logsumexp(c_nat)) if len(c_nat) else 0.0
            if val > 1e-12:
                return None, None, None, None, (
                    "constant posynomial constraint exceeds 1"
                )
            continue
        if A.shape[0] == 1:
            A_rows.append(A[0])
            c_rows.append(c_nat[0])
        else:
            lses.append(_LSE(A, c_nat))
    A_lin = np.array(A_rows) if A_rows else np.zeros((0, len(lsp.variables)))
    c_lin = np.array(c_rows) if c_rows else np.zeros(0)
    return (G, h), (A_lin, c_lin), lses, ln_b, None


def solve(
    problem: GPProblem,
    warm_start: dict[str, float] | None = None,
    tol: float = 1e-8,
) -> SolveResult:
    """Solve a geometric program.

    ``warm_start`` maps variable ids to positive values; it seeds the
    barrier when it lies strictly inside the inequality region.  Status is
    OPTIMAL when the barrier converged with duality gap below ``tol``
    (then polished onto the active set), INFEASIBLE with a certificate in
    ``kkt_residual`` when no feasible point exists, and MAX_ITER otherwise
    (including detectably unbounded objectives).
    """
    lsp = log_transform(problem)
    n = len(lsp.variables)
    eq, lin, lses, ln_b, fatal = _split_constant_rows(lsp)
    if fatal:
        return SolveResult(
            status=SolveStatus.INFEASIBLE,
            values={v: 1.0 for v in lsp.variables},
            objective=float("nan"),
            iterations=0,
            kkt_residual=float("inf"),
            message=fatal,
        )
    G, h = eq
    A_lin, c_lin = lin
    f0_full = _LSE(lsp.obj_exponents, lsp.obj_logb_coeffs * ln_b)

    def package(z, status, iters, kkt, message=""):
        z = np.clip(z, -_Z_LIMIT, _Z_LIMIT)
        x = np.exp(z)
        values = {v: float(x[i]) for i, v in enumerate(lsp.variables)}
        obj_log = f0_full.value(z)
        return SolveResult(
            status=status,
            values=values,
            objective=math.exp(obj_log) if obj_log < 700.0 else float("inf"),
            iterations=iters,
            kkt_residual=kkt,
            message=message,
        )

    # equality structure
    if G.shape[0]:
        z_p, *_ = np.linalg.lstsq(G, h, rcond=None)
        eq_res = float(np.max(np.abs(G @ z_p - h)))
        if eq_res > 1e-7 * (1.0 + float(np.max(np.abs(h), initial=0.0))):
            return package(
                z_p, SolveStatus.INFEASIBLE, 0, eq_res,
                "inconsistent monomial equalities",
            )
        Q, R = np.linalg.qr(G.T, mode="complete")
        diag = np.abs(np.diag(R[: min(G.shape), : min(G.shape)]))
        rank = int(np.sum(diag > 1e-10 * max(1.0, float(diag.max(initial=0.0)))))
        N = Q[:, rank:]
    else:
        z_p = np.zeros(n)
        N = np.eye(n)
    dof = N.shape[1]

    if dof == 0:
        worst = float("-inf")
        if len(c_lin):
            worst = float(np.max(A_lin @ z_p + c_lin))
        for f in lses:
            worst = max(worst, f.value(z_p))
        if worst > 1e-7:
            return package(
                z_p, SolveStatus.INFEASIBLE, 1, worst,
                "equality-determined point violates an inequality",
            )
        return package(z_p, SolveStatus.OPTIMAL, 1, 0.0)

    reduced = _Reduced(
        f0=f0_full.shifted(N, z_p),
        A_lin=A_lin @ N if len(c_lin) else A_lin.reshape(0, dof),
        c_lin=c_lin + (A_lin @ z_p if len(c_lin) else 0.0),
        lses=[f.shifted(N, z_p) for f in lses],
        dof=dof,
    )

    total_iters = 0
    y = None
    if warm_start is not None:
        z_w = np.array(
            [math.log(max(warm_start.get(v, 1.0), 1e-300)) for v in lsp.variables]
        )
        y_w = N.T @ (z_w - z_p)
        if reduced.feasible(y_w, margin=1e-12):
            y = y_w
    if y is None:
        y0 = np.zeros(dof)
        if reduced.feasible(y0, margin=1e-9):
            y = y0
        else:
            y, certificate = _phase1(reduced, y0)
            if not reduced.feasible(y):
                return package(
                    z_p + N @ y, SolveStatus.INFEASIBLE, total_iters,
                    certificate, "phase-I could not clear the constraints",
                )

    tau = 1.0
    kkt = float("inf")
    for _outer in range(60):
        y, gnorm, inner, clean = _newton(reduced, y, tau, tol=min(tol, 1e-9))
        total_iters += inner
        kkt = gnorm / (1.0 + tau)
        z = z_p + N @ y
        if not clean:
            return package(
                z, SolveStatus.MAX_ITER, total_iters, kkt,
                "iterates diverged or stalled; objective may be unbounded below",
            )
        if reduced.m == 0:
            status = (
                SolveStatus.OPTIMAL if kkt <= tol else SolveStatus.MAX_ITER
            )
            msg = "" if status is SolveStatus.OPTIMAL else (
                "Newton stalled; single-term objectives without binding "
                "constraints are unbounded below"
            )
            return package(z, status, total_iters, kkt, msg)
        gap = reduced.m / tau
        if gap < tol:
            polished = _polish(reduced, y, gap)
            if polished is not None:
                y = polished
                kkt = 0.0
            return package(z_p + N @ y, SolveStatus.OPTIMAL, total_iters, kkt)
        tau *= 10.0
    return package(
        z_p + N @ y, SolveStatus.MAX_ITER, total_iters, kkt,
        "barrier iteration limit",
    )
