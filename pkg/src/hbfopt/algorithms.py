"""Penalized alternating-optimization drivers for all six designs.

One iteration of every algorithm is the same three-step cycle on the triple
(theta, phi, v_b): a baseband step, an analog-relaxation (phi) step, and the
closed-form phase quantization step, followed by the penalty-weight policy.
The objective selects how the first two steps are solved:

* ``maxmin`` - minorant max-min subproblems through the interior-point kernel;
* ``sumrate`` - summed minorants, closed forms through lambda-bisection;
* ``softmaxmin`` - ln pi_c majorants, closed forms through lambda-bisection
  (this is the scalable family, descent instead of ascent).

The FC analog subproblems are solved in the eigenbasis of conj(V V^H), where
the power ball becomes diagonal and the quadratics become ridge + low rank;
that transform is what keeps FC steps tractable and the AOSA scalable steps
linear in the antenna count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import bounds, system
from .channel import Channel
from .solver import (BudgetedQuadMin, FactoredQuad, MaxMinQP,
                     solve_budgeted_quadmin, solve_maxmin_qp)
from .system import AOSA, FC, SystemConfig

MAXMIN = "maxmin"
SUMRATE = "sumrate"
SOFTMAXMIN = "softmaxmin"
OBJECTIVES = (MAXMIN, SUMRATE, SOFTMAXMIN)


@dataclass
class TraceRow:
    iteration: int
    gamma: float
    objective_start: float
    objective_end: float
    penalty: float
    t_baseband: float
    t_phi: float
    t_theta: float


@dataclass
class BeamformerState:
    theta: np.ndarray
    phi: np.ndarray
    v_b: np.ndarray
    gamma: float
    iteration: int = 0
    objective_trace: list = field(default_factory=list)
    penalty_trace: list = field(default_factory=list)
    trace: list = field(default_factory=list)


@dataclass
class RunResult:
    """Final design and bookkeeping of one run; rates come from the quantized
    theta and final v_b, never from phi."""

    theta: np.ndarray
    v_b: np.ndarray
    rates: np.ndarray
    converged: bool
    iterations: int
    trace: list
    wall_time_s: float
    cfg: SystemConfig
    objective: str
    final_penalty: float
    final_gamma: float
    transmit_power_mw: float


def _channel_rows(channel) -> np.ndarray:
    return channel.rows if isinstance(channel, Channel) else np.asarray(channel, dtype=complex)


def penalty_value(state: BeamformerState) -> float:
    return system.penalty_term(state.phi, state.theta)


def raw_objective(h, phi, v_b, objective: str, cfg: SystemConfig) -> float:
    """Objective of the relaxed problem at (phi, v_b): min-rate, sum-rate or ln pi_c."""
    if objective == SOFTMAXMIN:
        return bounds.log_pi_c(h, phi, v_b, cfg.soft_c, cfg)
    rates = system.user_rates(h, phi, v_b, cfg)
    return float(rates.min() if objective == MAXMIN else rates.sum())


def penalized_objective(h, state: BeamformerState, objective: str, cfg: SystemConfig) -> float:
    """Penalized objective: ascent form for maxmin/sumrate, descent for softmaxmin."""
    pen = penalty_value(state)
    raw = raw_objective(h, state.phi, state.v_b, objective, cfg)
    return raw + state.gamma * pen if objective == SOFTMAXMIN else raw - state.gamma * pen


def init_state(cfg: SystemConfig, channel, rng: np.random.Generator,
               objective: str = MAXMIN) -> BeamformerState:
    """Feasible starting triple: |phi| < 1 entrywise, theta its quantization,
    v_b scaled so the transmit power meets the budget with equality, and gamma
    matching the objective magnitude to the penalty."""
    h = _channel_rows(channel)
    shape = (cfg.n,) if cfg.structure == AOSA else (cfg.n, cfg.n_rf)
    phi = rng.uniform(0.0, 1.0, size=shape) * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=shape))
    theta = system.quantize_phases(phi, cfg.bits)
    v_b = (rng.standard_normal((cfg.n_rf, cfg.k))
           + 1j * rng.standard_normal((cfg.n_rf, cfg.k))) / np.sqrt(2.0)
    if cfg.structure == AOSA:
        power = cfg.subarray_size * float(np.sum(np.abs(v_b) ** 2))
    else:
        power = float(np.sum(np.abs(phi @ v_b) ** 2))
    v_b *= np.sqrt(cfg.p_mw / power)
    state = BeamformerState(theta=theta, phi=phi, v_b=v_b, gamma=1.0)
    pen = penalty_value(state)
    if cfg.gamma_init is not None:
        state.gamma = cfg.gamma_init
    else:
        raw = raw_objective(h, phi, v_b, objective, cfg)
        gamma = abs(raw) / pen if pen > 0 else 0.0
        state.gamma = gamma if np.isfinite(gamma) and gamma > 0 else 1.0
    return state


def gamma_policy(gamma: float, penalty_prev: float, penalty_new: float, cfg: SystemConfig) -> float:
    """Grow gamma by the configured factor when the penalty failed its decrease test."""
    if penalty_new > cfg.gamma_trigger * penalty_prev:
        return gamma * cfg.gamma_growth
    return gamma


# ---------------------------------------------------------------------------
# per-step subproblem assembly
# ---------------------------------------------------------------------------

def _vb_ball(state, cfg) -> np.ndarray:
    """Dense ball matrix over stacked vec(V) for the baseband step."""
    block, _ = system.baseband_power_ball(state.phi if cfg.structure == FC else state.theta, cfg)
    return np.kron(np.eye(cfg.k), block)


def update_baseband(h, state: BeamformerState, objective: str, cfg: SystemConfig) -> np.ndarray:
    """One baseband step; never worsens the current surrogate objective."""
    if objective == MAXMIN:
        quads = [bounds.rate_minorant_vb(h, state.phi, state.v_b, cfg, k) for k in range(cfg.k)]
        problem = MaxMinQP(quads=quads, ball_matrix=_vb_ball(state, cfg), budget=cfg.p_mw)
        res = solve_maxmin_qp(problem, start=state.v_b, tol=cfg.solver_tol)
        return res.x.reshape(cfg.n_rf, cfg.k, order="F")

    m_block, budget = system.baseband_power_ball(
        state.phi if cfg.structure == FC else state.theta, cfg)
    if objective == SUMRATE:
        _, a, beta, heff = bounds.vb_minorant_coefficients(h, state.phi, state.v_b, cfg)
        xi = np.einsum("k,ki,kj->ij", beta, heff.conj(), heff)
        quad_blocks = np.broadcast_to(xi, (cfg.k, cfg.n_rf, cfg.n_rf)).copy()
        linear = a
    else:
        coeffs = bounds.soft_majorant_vb(h, state.phi, state.v_b, cfg.soft_c, cfg)
        quad_blocks = coeffs.quad
        linear = coeffs.linear
    problem = BudgetedQuadMin(linear_blocks=linear, quad_blocks=quad_blocks,
                              ball_matrix=m_block, budget=budget)
    res = solve_budgeted_quadmin(problem, bisect_tol=cfg.bisection_tol)
    return res.blocks.T.copy()


def _fc_transform(v_b: np.ndarray):
    """Eigenbasis of conj(V V^H): the FC power ball is diagonal there."""
    c_m = np.conj(v_b @ v_b.conj().T)
    lam, u = np.linalg.eigh(c_m)
    lam = np.maximum(lam, 0.0)
    return lam, u


def _to_fc_basis(mat: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Point change of basis phi' = (U^H kron I) phi, i.e. Phi' = Phi conj(U)."""
    return mat @ np.conj(u)


def _from_fc_basis(mat: np.ndarray, u: np.ndarray) -> np.ndarray:
    return mat @ u.T


def _row_to_fc_basis(row: np.ndarray, u: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Linear functionals on phi transform with (U kron I): row' = row (U kron I)."""
    return (row.reshape(cfg.n, cfg.n_rf, order="F") @ u).ravel(order="F")


def update_phi(h, state: BeamformerState, v_new: np.ndarray, objective: str,
               cfg: SystemConfig) -> np.ndarray:
    """One analog-relaxation step at fixed v_new, penalty anchored at theta."""
    gamma = state.gamma
    target = np.exp(1j * np.asarray(state.theta))
    if cfg.structure == AOSA:
        t_vec = target
        if objective == MAXMIN:
            quads = []
            for k in range(cfg.k):
                q = bounds.rate_minorant_phi(h, v_new, state.phi, cfg, k)
                q.quad = q.quad + gamma * np.eye(cfg.n)
                q.linear = q.linear + gamma * t_vec.conj()
                q.constant -= gamma * cfg.n
                quads.append(q)
            res = solve_maxmin_qp(MaxMinQP(quads=quads), start=state.phi, tol=cfg.solver_tol)
            return res.x
        if objective == SUMRATE:
            _, a, beta, rows = bounds.phi_minorant_coefficients(h, v_new, state.phi, cfg)
            scaled = (np.sqrt(beta)[:, None, None] * rows).reshape(-1, cfg.n)
            rhs_row = a.sum(axis=0) + gamma * t_vec.conj()
        else:
            _, b, _, _, rows, weights = bounds.soft_majorant_phi_pieces(
                h, v_new, state.phi, cfg.soft_c, cfg)
            scaled = (np.sqrt(weights)[:, :, None] * rows).reshape(-1, cfg.n)
            rhs_row = b + gamma * t_vec.conj()
        problem = BudgetedQuadMin(linear_blocks=rhs_row[None, :], quad_rows=[scaled],
                                  ridge=gamma, budget=np.inf)
        res = solve_budgeted_quadmin(problem, bisect_tol=cfg.bisection_tol)
        return res.blocks[0]

    # FC: work in the conj(VV^H) eigenbasis where the power ball is diagonal.
    lam, u = _fc_transform(v_new)
    ball_diag = np.repeat(lam, cfg.n)
    t_mat = _to_fc_basis(target, u)
    t_vec = t_mat.ravel(order="F")
    phi_start = _to_fc_basis(state.phi, u).ravel(order="F")
    dim = cfg.n * cfg.n_rf

    if objective == MAXMIN:
        alpha, a, beta, _ = bounds.phi_minorant_coefficients(h, v_new, state.phi, cfg)
        quads = []
        for k in range(cfg.k):
            # sum_l [tilde_row_{k,l}]^H[...] turns into Lambda kron h_k^H h_k here.
            rows_k = np.zeros((cfg.n_rf, dim), dtype=complex)
            for i in range(cfg.n_rf):
                rows_k[i, i * cfg.n:(i + 1) * cfg.n] = np.sqrt(beta[k] * lam[i]) * h[k]
            lin = _row_to_fc_basis(a[k], u, cfg)
            quads.append(FactoredQuad(constant=float(alpha[k]) - gamma * dim,
                                      linear=lin + gamma * t_vec.conj(),
                                      ridge=gamma, rows=rows_k))
        problem = MaxMinQP(quads=quads, ball_diag=ball_diag, budget=cfg.p_mw)
        res = solve_maxmin_qp(problem, start=phi_start, tol=cfg.solver_tol)
        sol = res.x
    else:
        # Transformed tilde rows are tilde_rows against U^T V directly.
        rows_t = system.tilde_rows(h, u.T @ v_new, cfg)
        if objective == SUMRATE:
            _, a, beta, _ = bounds.phi_minorant_coefficients(h, v_new, state.phi, cfg)
            weights = np.broadcast_to(beta[:, None], (cfg.k, cfg.k))
            lin = a.sum(axis=0)
        else:
            _, b, _, _, _, weights = bounds.soft_majorant_phi_pieces(
                h, v_new, state.phi, cfg.soft_c, cfg)
            lin = b
        scaled = (np.sqrt(weights)[:, :, None] * rows_t).reshape(-1, dim)
        rhs_row = _row_to_fc_basis(lin, u, cfg) + gamma * t_vec.conj()
        problem = BudgetedQuadMin(linear_blocks=rhs_row[None, :], quad_rows=[scaled],
                                  ridge=gamma, ball_diag=ball_diag, budget=cfg.p_mw)
        res = solve_budgeted_quadmin(problem, bisect_tol=cfg.bisection_tol)
        sol = res.blocks[0]
    return _from_fc_basis(sol.reshape(cfg.n, cfg.n_rf, order="F"), u)


def update_theta(state: BeamformerState, cfg: SystemConfig) -> np.ndarray:
    """Closed-form quantization step; can only shrink the penalty."""
    return system.quantize_phases(state.phi, cfg.bits)


def run(cfg: SystemConfig, channel, objective: str, seed=0,
        keep_trace: bool = True) -> RunResult:
    """One full alternating-optimization run.

    Deterministic given (cfg, channel, objective, seed) up to wall times.
    Terminates when the penalty drops below ``cfg.penalty_stop`` and the
    penalized objective has stalled over ``cfg.stall_window`` iterations, or
    at ``cfg.max_iterations`` (reported as converged=False).
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    h = _channel_rows(channel)
    if h.shape != (cfg.k, cfg.n):
        raise ValueError(f"channel must be ({cfg.k}, {cfg.n}), got {h.shape}")
    rng = np.random.default_rng(seed)
    wall0 = time.perf_counter()
    state = init_state(cfg, h, rng, objective)
    converged = False
    for it in range(cfg.max_iterations):
        pen_before = penalty_value(state)
        f_start = penalized_objective(h, state, objective, cfg)
        t0 = time.perf_counter()
        state.v_b = update_baseband(h, state, objective, cfg)
        t1 = time.perf_counter()
        state.phi = update_phi(h, state, state.v_b, objective, cfg)
        t2 = time.perf_counter()
        state.theta = update_theta(state, cfg)
        t3 = time.perf_counter()
        pen_after = penalty_value(state)
        f_end = penalized_objective(h, state, objective, cfg)
        state.iteration = it + 1
        state.objective_trace.append(f_end)
        state.penalty_trace.append(pen_after)
        if keep_trace:
            state.trace.append(TraceRow(iteration=it, gamma=state.gamma,
                                        objective_start=f_start, objective_end=f_end,
                                        penalty=pen_after, t_baseband=t1 - t0,
                                        t_phi=t2 - t1, t_theta=t3 - t2))
        state.gamma = gamma_policy(state.gamma, pen_before, pen_after, cfg)
        if pen_after < cfg.penalty_stop and _stalled(state.objective_trace, cfg):
            converged = True
            break
    rates = system.user_rates(h, state.theta, state.v_b, cfg)
    return RunResult(theta=state.theta, v_b=state.v_b, rates=rates, converged=converged,
                     iterations=state.iteration, trace=state.trace,
                     wall_time_s=time.perf_counter() - wall0, cfg=cfg, objective=objective,
                     final_penalty=penalty_value(state), final_gamma=state.gamma,
                     transmit_power_mw=system.transmit_power(state.theta, state.v_b, cfg))


def _stalled(objective_trace: list, cfg: SystemConfig) -> bool:
    w = cfg.stall_window
    if len(objective_trace) < w + 1:
        return False
    recent = objective_trace[-(w + 1):]
    scale = 1.0 + abs(recent[-1])
    return max(abs(recent[i + 1] - recent[i]) for i in range(w)) < cfg.objective_stop * scale


def save_trace(path, trace: list) -> None:
    """Columnar per-iteration trace: objective, penalty, gamma and step times."""
    with open(path, "w") as fh:
        fh.write("# hbfopt-trace schema=1\n")
        fh.write("iteration,objective,penalty,gamma,t_baseband,t_phi,t_theta\n")
        for row in trace:
            fh.write(f"{row.iteration},{row.objective_end:.12g},{row.penalty:.12g},"
                     f"{row.gamma:.12g},{row.t_baseband:.6g},{row.t_phi:.6g},{row.t_theta:.6g}\n")
