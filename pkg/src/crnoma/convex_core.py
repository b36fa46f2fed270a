"""Shared solver engines: a linear feasibility oracle and a small dense convex solver.

Both are deterministic: fixed pivoting rules in the simplex, a fixed barrier
schedule and step rules in the interior-point solver.  They target desk-scale
problems (hundreds of rows/variables) with dense numpy arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

LP_TOL = 1e-9          # scaled feasibility tolerance of the LP oracle
KKT_TOL = 1e-7
FEAS_TOL = 1e-8
MAX_NEWTON_PER_STAGE = 200

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITER = "max_iterations"


class LpError(RuntimeError):
    """The simplex reached a numerically degenerate or stalled state."""


@dataclass
class LinearFeasibilityProblem:
    """Find x >= 0 with A x <= b, to a row-scaled tolerance."""

    a: np.ndarray
    b: np.ndarray
    tol: float = LP_TOL

    def __post_init__(self) -> None:
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.a.shape[0] != self.b.size:
            raise ValueError("row count mismatch between A and b")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ValueError("LP data must be finite")


def _simplex(tableau: np.ndarray, basis: np.ndarray, max_pivots: int) -> None:
    """Minimize the tableau's objective row in place, Bland's rule throughout."""
    m = tableau.shape[0] - 1
    for _ in range(max_pivots):
        red = tableau[-1, :-1]
        enter_candidates = np.nonzero(red < -1e-11)[0]
        if enter_candidates.size == 0:
            return
        col = int(enter_candidates[0])          # Bland: lowest index enters
        column = tableau[:m, col]
        rhs = tableau[:m, -1]
        pos = column > 1e-11
        if not np.any(pos):
            raise LpError("unbounded pivot column in phase objective")
        ratios = np.full(m, np.inf)
        ratios[pos] = rhs[pos] / column[pos]
        best = ratios.min()
        tie_rows = np.nonzero(ratios <= best + 1e-12)[0]
        row = int(tie_rows[np.argmin(basis[tie_rows])])   # Bland: lowest basis leaves
        piv = tableau[row, col]
        if abs(piv) < 1e-12:
            raise LpError("numerically singular pivot")
        tableau[row] /= piv
        factors = tableau[:, col].copy()
        factors[row] = 0.0
        tableau -= np.outer(factors, tableau[row])
        basis[row] = col
    raise LpError("pivot limit exceeded (cycling or stall)")


def _phase1(a: np.ndarray, b: np.ndarray, max_pivots: int):
    """Phase-1 tableau for {x >= 0, a x <= b}; returns (tableau, basis, n, m)."""
    m, n = a.shape
    neg = b < 0
    n_art = int(neg.sum())
    # Rows with negative rhs are negated so every rhs is nonnegative; those
    # rows get artificial variables, the rest start basic in their slack.
    rows = np.where(neg[:, None], -a, a)
    rhs = np.where(neg, -b, b)
    slack = np.where(neg[:, None], -np.eye(m), np.eye(m))
    art = np.zeros((m, n_art))
    art[np.nonzero(neg)[0], np.arange(n_art)] = 1.0
    tab = np.zeros((m + 1, n + m + n_art + 1))
    tab[:m, :n] = rows
    tab[:m, n:n + m] = slack
    tab[:m, n + m:-1] = art
    tab[:m, -1] = rhs
    tab[-1, n + m:-1] = 1.0
    basis = np.where(neg, n + m + np.cumsum(neg) - 1, n + np.arange(m))
    # Reduce the objective row against the starting basis.
    for r in np.nonzero(neg)[0]:
        tab[-1] -= tab[r]
    _simplex(tab, basis, max_pivots)
    return tab, basis, n, m


def lp_feasible(problem: LinearFeasibilityProblem):
    """Feasibility of {x >= 0 : A x <= b} within the row-scaled tolerance.

    Returns (True, witness) or (False, None).  Raises LpError instead of
    returning a silently wrong answer when the simplex stalls.
    """
    scale = np.maximum(np.abs(problem.a).max(axis=1, initial=0.0), 1.0)
    a = problem.a / scale[:, None]
    b = problem.b / scale
    max_pivots = 2000 + 60 * (a.shape[0] + a.shape[1])
    tab, basis, n, m = _phase1(a, b, max_pivots)
    # The reduced objective row carries -z in its right-hand corner.
    if -tab[-1, -1] > problem.tol:
        return False, None
    x = np.zeros(n + m + (tab.shape[1] - 1 - n - m))
    x[basis] = tab[:m, -1]
    return True, np.maximum(x[:n], 0.0)


def lp_minimize(c: np.ndarray, problem: LinearFeasibilityProblem):
    """Minimize c.x over {x >= 0 : A x <= b}; returns (x, objective).

    Raises LpError when infeasible or unbounded.
    """
    scale = np.maximum(np.abs(problem.a).max(axis=1, initial=0.0), 1.0)
    a = problem.a / scale[:, None]
    b = problem.b / scale
    max_pivots = 2000 + 60 * (a.shape[0] + a.shape[1])
    tab, basis, n, m = _phase1(a, b, max_pivots)
    if -tab[-1, -1] > problem.tol:
        raise LpError("phase-2 requested on an infeasible system")
    n_cols = n + m
    # Drop artificial columns; pivot any still basic onto a real column.
    for r in range(m):
        if basis[r] >= n_cols:
            options = np.nonzero(np.abs(tab[r, :n_cols]) > 1e-9)[0]
            if options.size == 0:
                tab[r, :] = 0.0  # redundant row
                basis[r] = n_cols  # sentinel, never pivoted again
                continue
            col = int(options[0])
            piv = tab[r, col]
            tab[r] /= piv
            factors = tab[:, col].copy()
            factors[r] = 0.0
            tab -= np.outer(factors, tab[r])
            basis[r] = col
    tab2 = np.zeros((m + 1, n_cols + 1))
    tab2[:m, :n_cols] = tab[:m, :n_cols]
    tab2[:m, -1] = tab[:m, -1]
    tab2[-1, :n] = np.asarray(c, dtype=float)
    for r in range(m):
        if basis[r] < n_cols and abs(tab2[-1, basis[r]]) > 0:
            tab2[-1] -= tab2[-1, basis[r]] * tab2[r]
    _simplex(tab2, basis, max_pivots)
    x = np.zeros(n_cols + 1)
    ok = basis < n_cols
    x[basis[ok]] = tab2[:m, -1][ok]
    witness = np.maximum(x[:n], 0.0)
    return witness, float(np.dot(c, witness))


# ---------------------------------------------------------------------------
# Small dense convex programs of the log-dominated form
#
#     minimize    c.x + sum_t w_t * (-ln(L_t.x + e_t))
#     subject to  A x <= b
#                 C_r.x + d_r - sum_t B_rt * ln(L_t.x + e_t) <= 0
#                 lo <= x <= hi
#
# with w >= 0 and B >= 0, solved by a logarithmic-barrier interior-point
# method with analytic gradients and Hessians.


@dataclass
class SmoothConvexProgram:
    n: int
    c: np.ndarray
    log_l: np.ndarray        # (T, n) coefficient rows of the log arguments
    log_e: np.ndarray        # (T,)   offsets of the log arguments
    obj_w: np.ndarray        # (T,)   objective weights on -ln terms (>= 0)
    a_ub: np.ndarray         # (M, n)
    b_ub: np.ndarray         # (M,)
    row_c: np.ndarray        # (R, n) affine parts of the log constraints
    row_d: np.ndarray        # (R,)
    row_b: np.ndarray        # (R, T) weights on ln terms, >= 0
    lo: np.ndarray
    hi: np.ndarray

    @staticmethod
    def empty(n: int) -> "SmoothConvexProgram":
        return SmoothConvexProgram(
            n=n, c=np.zeros(n),
            log_l=np.zeros((0, n)), log_e=np.zeros(0), obj_w=np.zeros(0),
            a_ub=np.zeros((0, n)), b_ub=np.zeros(0),
            row_c=np.zeros((0, n)), row_d=np.zeros(0), row_b=np.zeros((0, 0)),
            lo=np.full(n, -np.inf), hi=np.full(n, np.inf),
        )


@dataclass
class NlpSolution:
    x: np.ndarray
    objective: float
    kkt_residual: float
    status: str
    newton_steps: int = 0
    barrier_t: float = 1.0
    extras: dict = field(default_factory=dict)


class _Barrier:
    """Value/gradient/Hessian assembly for the barrier subproblems."""

    def __init__(self, prog: SmoothConvexProgram):
        self.p = prog
        self.has_logs = prog.log_l.shape[0] > 0
        self.has_rows = prog.row_c.shape[0] > 0
        self.has_aff = prog.a_ub.shape[0] > 0
        self.fin_lo = np.isfinite(prog.lo)
        self.fin_hi = np.isfinite(prog.hi)
        self.n_ineq = (prog.a_ub.shape[0] + prog.row_c.shape[0]
                       + int(self.fin_lo.sum()) + int(self.fin_hi.sum()))

    def pieces(self, x: np.ndarray):
        p = self.p
        args = p.log_l @ x + p.log_e if self.has_logs else np.zeros(0)
        if self.has_logs and np.any(args <= 0):
            return None
        ln_args = np.log(args) if self.has_logs else args
        g_rows = (p.row_c @ x + p.row_d - p.row_b @ ln_args
                  if self.has_rows else np.zeros(0))
        aff = p.b_ub - p.a_ub @ x if self.has_aff else np.zeros(0)
        lo_s = x[self.fin_lo] - p.lo[self.fin_lo]
        hi_s = p.hi[self.fin_hi] - x[self.fin_hi]
        return args, ln_args, g_rows, aff, lo_s, hi_s

    def f0(self, x: np.ndarray, pieces=None) -> float:
        pieces = pieces if pieces is not None else self.pieces(x)
        if pieces is None:
            return np.inf
        args, ln_args = pieces[0], pieces[1]
        val = float(self.p.c @ x)
        if self.has_logs:
            val -= float(self.p.obj_w @ ln_args)
        return val

    def max_violation(self, x: np.ndarray) -> float:
        pieces = self.pieces(x)
        if pieces is None:
            return np.inf
        _, _, g_rows, aff, lo_s, hi_s = pieces
        worst = 0.0
        for v in (g_rows.max(initial=-np.inf), (-aff).max(initial=-np.inf),
                  (-lo_s).max(initial=-np.inf), (-hi_s).max(initial=-np.inf)):
            worst = max(worst, v)
        return worst

    def barrier_value(self, x: np.ndarray, t: float):
        """f0 + phi/t; working at objective scale keeps line searches
        well-conditioned when t grows large."""
        pieces = self.pieces(x)
        if pieces is None:
            return np.inf
        _, _, g_rows, aff, lo_s, hi_s = pieces
        slacks = np.concatenate([-g_rows, aff, lo_s, hi_s])
        if np.any(slacks <= 0):
            return np.inf
        return self.f0(x, pieces) - float(np.sum(np.log(slacks))) / t

    def grad_hess(self, x: np.ndarray, t: float):
        """Gradient and Hessian of f0 + phi/t."""
        p = self.p
        pieces = self.pieces(x)
        args, ln_args, g_rows, aff, lo_s, hi_s = pieces
        n = p.n
        inv_t = 1.0 / t
        grad = p.c.copy()
        hess_diag_terms = np.zeros(args.shape[0]) if self.has_logs else None
        hess = np.zeros((n, n))

        if self.has_logs:
            # objective log terms
            w_over = p.obj_w / args
            grad -= p.log_l.T @ w_over
            hess_diag_terms = p.obj_w / args**2

        if self.has_rows:
            z = -g_rows                      # slack of each log constraint, > 0
            inv_args = 1.0 / args
            jac = p.row_c - (p.row_b * inv_args[None, :]) @ p.log_l
            grad += inv_t * (jac.T @ (1.0 / z))
            jz = jac / z[:, None]
            hess += inv_t * (jz.T @ jz)
            # curvature of each row's own log terms, weighted by 1/(t z)
            term_w = inv_t * (p.row_b.T @ (1.0 / z)) / args**2
            hess_diag_terms = (hess_diag_terms + term_w
                               if hess_diag_terms is not None else term_w)

        if hess_diag_terms is not None:
            hess += (p.log_l * hess_diag_terms[:, None]).T @ p.log_l

        if self.has_aff:
            inv = 1.0 / aff
            grad += inv_t * (p.a_ub.T @ inv)
            hess += inv_t * ((p.a_ub * (inv**2)[:, None]).T @ p.a_ub)

        g_box = np.zeros(n)
        g_box[self.fin_lo] -= 1.0 / lo_s
        g_box[self.fin_hi] += 1.0 / hi_s
        diag = np.zeros(n)
        diag[self.fin_lo] += 1.0 / lo_s**2
        diag[self.fin_hi] += 1.0 / hi_s**2
        grad += inv_t * g_box
        hess[np.diag_indices(n)] += inv_t * diag
        return grad, hess


def _newton_stage(bar: _Barrier, x: np.ndarray, t: float, tol: float,
                  max_steps: int):
    """Minimize the stage-t barrier function from x; returns (x, steps, converged).

    ``tol`` bounds the Newton decrement relative to the objective scale.
    """
    f_cur = bar.barrier_value(x, t)
    for step in range(max_steps):
        grad, hess = bar.grad_hess(x, t)
        try:
            chol = scipy.linalg.cho_factor(hess, check_finite=False)
            direction = -scipy.linalg.cho_solve(chol, grad, check_finite=False)
        except scipy.linalg.LinAlgError:
            jitter = 1e-12 * (1.0 + float(np.median(np.abs(np.diag(hess)))))
            hess[np.diag_indices_from(hess)] += jitter
            direction = -np.linalg.solve(hess, grad)
        lam2 = float(-grad @ direction)
        scale = max(1.0, abs(f_cur))
        if lam2 / 2.0 <= tol * scale:
            return x, step, True
        # backtracking line search on the barrier value
        alpha = 1.0
        slope = 0.01 * float(grad @ direction)
        for _ in range(50):
            x_new = x + alpha * direction
            f_new = bar.barrier_value(x_new, t)
            if np.isfinite(f_new) and f_new <= f_cur + alpha * slope:
                break
            alpha *= 0.5
        else:
            return x, step, False  # stalled at machine precision
        x = x_new
        f_cur = f_new
    return x, max_steps, False


def _strictly_feasible_start(bar: _Barrier, prog: SmoothConvexProgram,
                             start: np.ndarray | None):
    """Phase 1: a point with strictly negative constraint slacks, or None."""
    lo = np.where(np.isfinite(prog.lo), prog.lo, -1.0)
    hi = np.where(np.isfinite(prog.hi), prog.hi, lo + 2.0)
    x = 0.5 * (lo + hi)
    if start is not None:
        if bar.pieces(start) is not None and bar.max_violation(start) < -1e-10:
            return start.copy()
        margin = 1e-4 * (hi - lo + 1.0)
        cand = np.clip(start, lo + margin, hi - margin)
        if bar.pieces(cand) is not None:
            x = cand
    viol = bar.max_violation(x)
    if viol < -1e-9:
        return x
    # Extend with a uniform slack variable s and minimize it.
    ext = SmoothConvexProgram(
        n=prog.n + 1,
        c=np.concatenate([np.zeros(prog.n), [1.0]]),
        log_l=np.hstack([prog.log_l, np.zeros((prog.log_l.shape[0], 1))]),
        log_e=prog.log_e,
        obj_w=np.zeros_like(prog.obj_w),
        a_ub=np.hstack([prog.a_ub, -np.ones((prog.a_ub.shape[0], 1))]),
        b_ub=prog.b_ub,
        row_c=np.hstack([prog.row_c, -np.ones((prog.row_c.shape[0], 1))]),
        row_d=prog.row_d,
        row_b=prog.row_b,
        lo=np.concatenate([prog.lo, [-np.inf]]),
        hi=np.concatenate([prog.hi, [np.inf]]),
    )
    bar_ext = _Barrier(ext)
    s0 = viol + 1.0
    xs = np.concatenate([x, [s0]])
    t = 1.0
    for _ in range(40):
        xs, _, _ = _newton_stage(bar_ext, xs, t, tol=1e-8, max_steps=60)
        if xs[-1] < -max(10.0 * FEAS_TOL, 1e-9):
            return xs[:-1]
        if bar_ext.n_ineq / t <= 0.1 * FEAS_TOL:
            break
        t *= 5.0
    return None


def solve_convex(prog: SmoothConvexProgram, start: np.ndarray | None = None,
                 tau_kkt: float = KKT_TOL, tau_feas: float = FEAS_TOL,
                 max_iter: int = MAX_NEWTON_PER_STAGE,
                 t0: float = 1.0, mu: float = 20.0) -> NlpSolution:
    """Barrier interior-point solve of a SmoothConvexProgram.

    The barrier stage parameter grows geometrically by ``mu`` until the
    duality measure (inequality count / t) drops below ``tau_kkt``;
    intermediate stages are centered coarsely, the final stage tightly.
    ``t0`` sets the initial stage; pass the previous solve's final stage
    (divided by ~mu^2) to warm-start a sequence of similar problems.
    """
    bar = _Barrier(prog)
    if bar.n_ineq == 0:
        raise ValueError("program must have at least one inequality or bound")
    x = _strictly_feasible_start(bar, prog, start)
    if x is None:
        return NlpSolution(x=np.zeros(prog.n), objective=np.inf,
                           kkt_residual=np.inf, status=STATUS_INFEASIBLE)
    t = max(t0, 1e-6)
    total_steps = 0
    while bar.n_ineq / t > tau_kkt:
        x, steps, _ = _newton_stage(bar, x, t, tol=1e-7, max_steps=max_iter)
        total_steps += steps
        t *= mu
    x, steps, converged = _newton_stage(bar, x, t, tol=1e-9, max_steps=max_iter)
    total_steps += steps
    grad, _ = bar.grad_hess(x, t)
    kkt = float(np.linalg.norm(grad)) / max(1.0, t)
    status = STATUS_OPTIMAL if converged else STATUS_MAX_ITER
    if bar.max_violation(x) > tau_feas:
        status = STATUS_MAX_ITER
    return NlpSolution(x=x, objective=bar.f0(x), kkt_residual=kkt,
                       status=status, newton_steps=total_steps, barrier_t=t)
