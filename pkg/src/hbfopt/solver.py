"""Numerical kernels shared by all six algorithms.

Two problem shapes cover every subproblem in the paper-style alternating
loops:

* :func:`solve_budgeted_quadmin` - independent convex quadratic blocks
  ``min sum_k v_k^H C_k v_k - 2 Re{b_k v_k}`` under a shared power ball
  ``sum_k v_k^H M v_k <= budget``.  The solution is the closed form
  ``v_k(lam) = (C_k + lam M)^{-1} b_k^H`` with ``lam`` found by bisection
  (lam = 0 when the unconstrained solution already fits).
* :func:`solve_maxmin_qp` - maximize ``min_k q_k(v)`` over the same ball for
  concave quadratics ``q_k``, via a log-barrier interior-point method on the
  epigraph (maximize t s.t. q_k(v) >= t).

Both accept either dense matrices or a factored representation
``quad = ridge*I + rows^H rows`` with an optional diagonal ball; the factored
path solves through low-rank Woodbury updates, which is what keeps the
scalable algorithms linear in the antenna count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .bounds import MINORANT, SurrogateQuadratic

_RIDGE_SCALE = 1e-12   # relative diagonal loading for near-singular blocks
_PSD_CHECK_MAX_DIM = 256


@dataclass
class BudgetedQuadMin:
    """Per-block regularized quadratic minimization under a shared power ball.

    Dense form: ``quad_blocks`` (k, d, d).  Factored form: ``quad_rows`` is a
    list of (m_k, d) row stacks with ``C_k = ridge*I + rows_k^H rows_k`` (rows
    carry their sqrt-weights).  The ball matrix is dense ``ball_matrix``,
    diagonal ``ball_diag``, or the identity when both are None.  ``budget``
    may be ``np.inf``.
    """

    linear_blocks: np.ndarray
    quad_blocks: np.ndarray | None = None
    quad_rows: list | None = None
    ridge: float = 0.0
    ball_matrix: np.ndarray | None = None
    ball_diag: np.ndarray | None = None
    budget: float = np.inf


@dataclass
class BudgetedQuadMinResult:
    blocks: np.ndarray        # (k, d) solutions
    lam: float
    power: float
    evaluations: int


@dataclass
class FactoredQuad:
    """Concave quadratic q(v) = constant + 2Re{linear.v} - ridge||v||^2 - ||rows v||^2."""

    constant: float
    linear: np.ndarray
    ridge: float
    rows: np.ndarray

    def value(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=complex)
        return float(self.constant + 2.0 * np.real(self.linear @ v)
                     - self.ridge * np.vdot(v, v).real
                     - np.sum(np.abs(self.rows @ v) ** 2))


@dataclass
class MaxMinQP:
    """Maximize min_k q_k(v) subject to v^H M v <= budget.

    ``quads`` are concave pieces, either dense :class:`SurrogateQuadratic`
    minorants over the stacked decision vector or :class:`FactoredQuad`.  The
    ball is dense (``ball_matrix``), diagonal (``ball_diag``) or absent
    (both None with ``budget=inf``).
    """

    quads: list
    ball_matrix: np.ndarray | None = None
    ball_diag: np.ndarray | None = None
    budget: float = np.inf


@dataclass
class MaxMinResult:
    x: np.ndarray
    value: float
    kkt_residual: float
    converged: bool
    newton_steps: int


def _check_hermitian_psd(mat: np.ndarray, what: str) -> None:
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{what} must be square, got {mat.shape}")
    if not np.allclose(mat, mat.conj().T, atol=1e-10 * (1.0 + np.abs(mat).max())):
        raise ValueError(f"{what} is not Hermitian")
    n = mat.shape[0]
    if n <= _PSD_CHECK_MAX_DIM:
        scale = max(np.abs(np.diag(mat)).max(), 1.0)
        try:
            np.linalg.cholesky(mat + (1e-10 * scale) * np.eye(n))
        except np.linalg.LinAlgError:
            raise ValueError(f"{what} is not positive semidefinite") from None


# ---------------------------------------------------------------------------
# budgeted quadratic minimization (closed forms + lambda bisection)
# ---------------------------------------------------------------------------

def _dense_block_solver(problem: BudgetedQuadMin):
    quads = np.asarray(problem.quad_blocks, dtype=complex)
    rhs = np.asarray(problem.linear_blocks, dtype=complex).conj()
    n_blocks, dim = rhs.shape
    loaded = quads.copy()
    for k in range(n_blocks):
        loaded[k] += (_RIDGE_SCALE * max(np.trace(quads[k]).real, 0.0) / dim) * np.eye(dim)
    m = problem.ball_matrix
    if m is None and problem.ball_diag is not None:
        m = np.diag(np.asarray(problem.ball_diag, dtype=float)).astype(complex)

    def solve_at(lam: float):
        out = np.empty((n_blocks, dim), dtype=complex)
        for k in range(n_blocks):
            sys = loaded[k] if lam == 0.0 else (loaded[k] + lam * (m if m is not None else np.eye(dim)))
            out[k] = cho_solve(cho_factor(sys, check_finite=False), rhs[k], check_finite=False)
        if m is None:
            power = float(np.sum(np.abs(out) ** 2))
        else:
            power = float(np.real(np.einsum("kd,de,ke->", out.conj(), m, out)))
        return out, power

    return solve_at


def _factored_block_solver(problem: BudgetedQuadMin):
    rhs_all = np.atleast_2d(np.asarray(problem.linear_blocks, dtype=complex)).conj()
    n_blocks, dim = rhs_all.shape
    rows_list = [np.asarray(r, dtype=complex).reshape(-1, dim) for r in problem.quad_rows]
    ridge = float(problem.ridge)
    if ridge <= 0:
        raise ValueError("factored blocks need a positive ridge")
    diag = problem.ball_diag
    if diag is None:
        values = np.array([1.0])
        group_of = np.zeros(dim, dtype=int)
    else:
        diag = np.asarray(diag, dtype=float)
        values, group_of = np.unique(diag, return_inverse=True)
    n_groups = len(values)
    group_slices = [np.flatnonzero(group_of == g) for g in range(n_groups)]
    # Per-group Grams and partial products are lambda-independent.
    grams = []
    partials = []
    for rows, rhs in zip(rows_list, rhs_all):
        grams.append([rows[:, idx] @ rows[:, idx].conj().T for idx in group_slices])
        partials.append([rows[:, idx] @ rhs[idx] for idx in group_slices])

    def solve_at(lam: float):
        dvals = ridge + lam * values          # per-group diagonal of ridge*I + lam*ball
        out = np.empty((n_blocks, dim), dtype=complex)
        for k, (rows, rhs) in enumerate(zip(rows_list, rhs_all)):
            m_rows = rows.shape[0]
            if m_rows == 0:
                sol = rhs.copy()
                for g, idx in enumerate(group_slices):
                    sol[idx] /= dvals[g]
                out[k] = sol
                continue
            cap = np.eye(m_rows, dtype=complex)
            urhs = np.zeros(m_rows, dtype=complex)
            for g in range(n_groups):
                cap += grams[k][g] / dvals[g]
                urhs += partials[k][g] / dvals[g]
            y = cho_solve(cho_factor(cap, check_finite=False), urhs, check_finite=False)
            sol = rhs - rows.conj().T @ y
            for g, idx in enumerate(group_slices):
                sol[idx] /= dvals[g]
            out[k] = sol
        if problem.ball_diag is None:
            power = float(np.sum(np.abs(out) ** 2))
        else:
            power = float(np.sum(np.asarray(problem.ball_diag) * np.abs(out.T) ** 2))
        return out, power

    return solve_at


def solve_budgeted_quadmin(problem: BudgetedQuadMin, bisect_tol: float = 1e-9) -> BudgetedQuadMinResult:
    """Closed-form block solves with the power level set by lambda-bisection.

    Returns lam = 0 when the unconstrained stationary points already satisfy
    the budget, otherwise brackets lam (doubling from 1) and bisects until the
    used power matches the budget to ``bisect_tol`` relative.  The recorded
    (lam, power) pairs are checked for the monotone-nonincreasing certificate.
    """
    solve_at = _dense_block_solver(problem) if problem.quad_blocks is not None \
        else _factored_block_solver(problem)
    history: list[tuple[float, float]] = []

    def evaluate(lam: float):
        out, power = solve_at(lam)
        history.append((lam, power))
        return out, power

    out, power = evaluate(0.0)
    budget = problem.budget
    if not np.isfinite(budget) or power <= budget * (1.0 + bisect_tol):
        return BudgetedQuadMinResult(blocks=out, lam=0.0, power=power, evaluations=len(history))

    lo = 0.0
    hi = 1.0
    out, power = evaluate(hi)
    doublings = 0
    while power > budget:
        lo = hi
        hi *= 2.0
        out, power = evaluate(hi)
        doublings += 1
        if doublings > 200:
            raise RuntimeError("lambda bracket did not close; budget may be unattainable")

    best = (out, power, hi)
    for _ in range(300):
        if abs(best[1] - budget) <= bisect_tol * budget:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        out, power = evaluate(mid)
        if power > budget:
            lo = mid
        else:
            hi = mid
        if abs(power - budget) < abs(best[1] - budget):
            best = (out, power, mid)

    # Bisection certificate: used power is nonincreasing along lambda.
    ordered = sorted(history)
    for (l0, p0), (l1, p1) in zip(ordered, ordered[1:]):
        if p1 > p0 * (1.0 + 1e-9) + 1e-15:
            raise RuntimeError(f"power not monotone in lambda: p({l0})={p0} < p({l1})={p1}")
    return BudgetedQuadMinResult(blocks=best[0], lam=best[2], power=best[1],
                                 evaluations=len(history))


def ridge_lowrank_solve(ridge: float, rows: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve (ridge*I + rows^H rows) x = rhs through the small Gram system."""
    if ridge <= 0:
        raise ValueError("ridge must be positive")
    rows = np.asarray(rows, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    if rows.size == 0:
        return rhs / ridge
    cap = ridge * np.eye(rows.shape[0], dtype=complex) + rows @ rows.conj().T
    y = cho_solve(cho_factor(cap, check_finite=False), rows @ rhs, check_finite=False)
    return (rhs - rows.conj().T @ y) / ridge


# ---------------------------------------------------------------------------
# max-min concave QP over a power ball (log-barrier interior point)
# ---------------------------------------------------------------------------

def _split(vec: np.ndarray) -> np.ndarray:
    """Complex n-vector to stacked real 2n-vector [Re; Im]."""
    return np.concatenate([vec.real, vec.imag])


class _DenseMaxMinOracle:
    """Dense backend: explicit Hermitian quadratics, Newton by real Cholesky."""

    def __init__(self, problem: MaxMinQP, validate: bool = True):
        self.consts = np.array([q.constant for q in problem.quads])
        self.linears = np.array([q.linear for q in problem.quads])
        self.quads = np.array([q.quad for q in problem.quads])
        if validate:
            for i, q in enumerate(problem.quads):
                if q.sense != MINORANT:
                    raise ValueError("max-min pieces must be concave minorants")
                _check_hermitian_psd(q.quad, f"quadratic {i}")
        self.n = self.linears.shape[1]
        m = problem.ball_matrix
        if m is None and problem.ball_diag is not None:
            m = np.diag(np.asarray(problem.ball_diag, dtype=float)).astype(complex)
        if m is not None and validate:
            _check_hermitian_psd(m, "ball matrix")
        self.ball = m
        self.budget = problem.budget
        self.has_ball = m is not None and np.isfinite(problem.budget)

    def values(self, x: np.ndarray) -> np.ndarray:
        qx = self.quads @ x
        return (self.consts + 2.0 * np.real(self.linears @ x)
                - np.real(np.einsum("i,ki->k", x.conj(), qx)))

    def power(self, x: np.ndarray) -> float:
        return float(np.real(np.vdot(x, self.ball @ x))) if self.has_ball else 0.0

    def grad_vectors(self, x: np.ndarray) -> np.ndarray:
        """Complexified real gradients of the q_k, shape (k, n)."""
        return 2.0 * (self.linears.conj() - self.quads @ x)

    def ball_grad(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (self.ball @ x)

    def newton_direction(self, x, t, mu, slacks, ball_slack):
        n2 = 2 * self.n
        grads = self.grad_vectors(x)
        qw = np.einsum("k,kij->ij", 2.0 * mu / slacks, self.quads)
        if self.has_ball:
            qw = qw + (2.0 * mu / ball_slack) * self.ball
        h = np.zeros((n2 + 1, n2 + 1))
        h[:self.n, :self.n] = qw.real
        h[:self.n, self.n:n2] = -qw.imag
        h[self.n:n2, :self.n] = qw.imag
        h[self.n:n2, self.n:n2] = qw.real
        cols = np.zeros((n2 + 1, len(slacks) + (1 if self.has_ball else 0)))
        for k, g in enumerate(grads):
            cols[:n2, k] = _split(g)
            cols[n2, k] = -1.0
        coeffs = list(mu / slacks ** 2)
        if self.has_ball:
            cols[:n2, -1] = _split(self.ball_grad(x))
            coeffs.append(mu / ball_slack ** 2)
        h += (cols * np.asarray(coeffs)) @ cols.T

        grad = np.zeros(n2 + 1)
        gx = -(grads / slacks[:, None]).sum(axis=0) * mu
        if self.has_ball:
            gx += (mu / ball_slack) * self.ball_grad(x)
        grad[:n2] = _split(gx)
        grad[n2] = -1.0 + mu * np.sum(1.0 / slacks)

        jitter = 1e-12 * (1.0 + np.abs(np.diag(h)).max())
        h[np.diag_indices_from(h)] += jitter
        try:
            step = cho_solve(cho_factor(h, check_finite=False), -grad, check_finite=False)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, -grad, rcond=None)[0]
        dx = step[:self.n] + 1j * step[self.n:n2]
        return dx, float(step[n2]), float(-grad @ step)


class _FactoredMaxMinOracle:
    """Factored backend: quads = ridge*I + rows^H rows, diagonal (or no) ball.

    Newton systems are diagonal plus low-rank, solved by Woodbury; the rank is
    2x(total quad rows) + one barrier rank-one per constraint.
    """

    def __init__(self, problem: MaxMinQP):
        self.quads: list[FactoredQuad] = list(problem.quads)
        self.n = self.quads[0].linear.shape[0]
        if min(q.ridge for q in self.quads) <= 0:
            raise ValueError("factored max-min pieces need positive ridges")
        self.ball_diag = None if problem.ball_diag is None else np.asarray(problem.ball_diag, float)
        if problem.ball_matrix is not None:
            raise ValueError("factored path takes a diagonal ball only")
        self.budget = problem.budget
        self.has_ball = self.ball_diag is not None and np.isfinite(problem.budget)
        n2 = 2 * self.n
        cols = []
        self.row_owner = []
        for k, q in enumerate(self.quads):
            for r in np.atleast_2d(q.rows):
                cols.append(np.concatenate([r.real, -r.imag, [0.0]]))
                cols.append(np.concatenate([r.imag, r.real, [0.0]]))
                self.row_owner.extend([k, k])
        self.fixed_cols = np.array(cols).T if cols else np.zeros((n2 + 1, 0))
        self.row_owner = np.asarray(self.row_owner, dtype=int)

    def values(self, x: np.ndarray) -> np.ndarray:
        xx = np.vdot(x, x).real
        return np.array([q.constant + 2.0 * np.real(q.linear @ x) - q.ridge * xx
                         - float(np.sum(np.abs(q.rows @ x) ** 2)) for q in self.quads])

    def power(self, x: np.ndarray) -> float:
        return float(np.sum(self.ball_diag * np.abs(x) ** 2)) if self.has_ball else 0.0

    def grad_vectors(self, x: np.ndarray) -> np.ndarray:
        return np.array([2.0 * (q.linear.conj() - q.ridge * x - q.rows.conj().T @ (q.rows @ x))
                         for q in self.quads])

    def ball_grad(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * self.ball_diag * x

    def newton_direction(self, x, t, mu, slacks, ball_slack):
        n, n2 = self.n, 2 * self.n
        w = 2.0 * mu / slacks
        diag_x = np.full(n, sum(w[k] * q.ridge for k, q in enumerate(self.quads)))
        if self.has_ball:
            diag_x = diag_x + (2.0 * mu / ball_slack) * self.ball_diag
        tau = mu * np.sum(1.0 / slacks ** 2)
        d0 = np.concatenate([diag_x, diag_x, [tau]])

        grads = self.grad_vectors(x)
        bar_cols = np.empty((n2 + 1, len(slacks) + (1 if self.has_ball else 0)))
        for k, g in enumerate(grads):
            bar_cols[:n2, k] = _split(g)
            bar_cols[n2, k] = -1.0
        coeffs = list(mu / slacks ** 2)
        if self.has_ball:
            bar_cols[:n2, -1] = _split(self.ball_grad(x))
            bar_cols[n2, -1] = 0.0
            coeffs.append(mu / ball_slack ** 2)
        # t-t curvature lives entirely in the barrier rank-ones; it is already
        # counted in d0, so subtract it back out through a negative column.
        t_col = np.zeros(n2 + 1)
        t_col[n2] = 1.0
        cols = np.concatenate([self.fixed_cols, bar_cols, t_col[:, None]], axis=1)
        coeffs = np.concatenate([w[self.row_owner], coeffs, [-tau]])

        grad = np.zeros(n2 + 1)
        gx = -(grads / slacks[:, None]).sum(axis=0) * mu
        if self.has_ball:
            gx += (mu / ball_slack) * self.ball_grad(x)
        grad[:n2] = _split(gx)
        grad[n2] = -1.0 + mu * np.sum(1.0 / slacks)

        d0i_cols = cols / d0[:, None]
        cap = np.diag(1.0 / coeffs) + cols.T @ d0i_cols
        rhs = -grad
        d0i_rhs = rhs / d0
        try:
            y = np.linalg.solve(cap, cols.T @ d0i_rhs)
        except np.linalg.LinAlgError:
            y = np.linalg.lstsq(cap, cols.T @ d0i_rhs, rcond=None)[0]
        step = d0i_rhs - d0i_cols @ y
        dx = step[:n] + 1j * step[n:n2]
        return dx, float(step[n2]), float(-grad @ step)


def _strict_interior(oracle, x0: np.ndarray) -> np.ndarray:
    if not oracle.has_ball:
        return x0
    p = oracle.power(x0)
    if p >= oracle.budget * (1.0 - 1e-12):
        return x0 * math.sqrt(max(oracle.budget * (1.0 - 1e-9), 0.0) / max(p, 1e-300))
    return x0


def solve_maxmin_qp(problem: MaxMinQP, start: np.ndarray, tol: float = 1e-7,
                    max_newton: int = 600, mu0: float | None = None) -> MaxMinResult:
    """Log-barrier interior-point solve of max_v min_k q_k(v) over the ball.

    Never returns a point with min_k q_k below its value at ``start`` (the
    warm start itself is the fallback), so alternating loops keep their
    monotone-improvement guarantee even on early termination.
    """
    dense = isinstance(problem.quads[0], SurrogateQuadratic)
    oracle = _DenseMaxMinOracle(problem) if dense else _FactoredMaxMinOracle(problem)
    x_start = np.asarray(start, dtype=complex).ravel(order="F").copy()
    start_value = float(oracle.values(x_start).min())
    if oracle.has_ball and oracle.power(x_start) > oracle.budget * (1.0 + 1e-8):
        raise ValueError("warm start violates the power ball")

    x = _strict_interior(oracle, x_start)
    vals = oracle.values(x)
    fbest = float(vals.min())
    xbest = x.copy()
    scale = 1.0 + abs(fbest)
    t = fbest - 0.05 * scale
    n_cons = len(problem.quads) + (1 if oracle.has_ball else 0)
    mu = mu0 if mu0 is not None else 0.05 * scale

    def barrier_value(xc, tc):
        v = oracle.values(xc)
        s = v - tc
        if np.any(s <= 0):
            return np.inf, v
        total = -tc - mu * np.sum(np.log(s))
        if oracle.has_ball:
            sb = oracle.budget - oracle.power(xc)
            if sb <= 0:
                return np.inf, v
            total -= mu * math.log(sb)
        return total, v

    newton_used = 0
    converged = False
    while True:
        for _ in range(60):
            vals = oracle.values(x)
            slacks = vals - t
            ball_slack = (oracle.budget - oracle.power(x)) if oracle.has_ball else 1.0
            dx, dt, lam2 = oracle.newton_direction(x, t, mu, slacks, ball_slack)
            newton_used += 1
            if lam2 / 2.0 < max(0.05 * mu, 1e-13 * scale):
                break
            f0, _ = barrier_value(x, t)
            alpha = 1.0
            while alpha > 1e-13:
                f1, v1 = barrier_value(x + alpha * dx, t + alpha * dt)
                if f1 <= f0 - 0.25 * alpha * lam2:
                    break
                alpha *= 0.5
            if alpha <= 1e-13:
                break
            x = x + alpha * dx
            t = t + alpha * dt
            fx = float(v1.min())
            if fx > fbest:
                fbest, xbest = fx, x.copy()
            if newton_used >= max_newton:
                break
        if n_cons * mu < tol * (1.0 + abs(t)):
            converged = True
            break
        if newton_used >= max_newton:
            break
        mu = mu / 10.0

    vals = oracle.values(x)
    fx = float(vals.min())
    if fx > fbest:
        fbest, xbest = fx, x.copy()
    # KKT residual of the epigraph problem at the final barrier point.
    slacks = np.maximum(vals - t, 1e-300)
    w = mu / slacks
    r_x = (oracle.grad_vectors(x) * w[:, None]).sum(axis=0)
    if oracle.has_ball:
        ball_slack = max(oracle.budget - oracle.power(x), 1e-300)
        r_x = r_x - (mu / ball_slack) * oracle.ball_grad(x)
    kkt = (np.linalg.norm(r_x) + abs(1.0 - w.sum()) + n_cons * mu) / (1.0 + abs(t))

    if fbest < start_value:
        fbest, xbest = start_value, x_start
    return MaxMinResult(x=xbest, value=fbest, kkt_residual=float(kkt),
                        converged=converged, newton_steps=newton_used)
