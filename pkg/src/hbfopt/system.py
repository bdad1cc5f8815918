"""Signal model for hybrid analog/baseband downlink beamforming.

Array layouts used throughout the package:

* AOSA (array of subarrays): each of the ``n_rf`` RF chains drives a disjoint
  block of ``L = n / n_rf`` antennas.  A phase configuration ``theta`` is a real
  vector of length ``n`` holding the blocks back to back
  (``theta[j*L:(j+1)*L]`` belongs to RF chain ``j``); the relaxed analog
  variable ``phi`` is a complex vector with the same layout.
* FC (fully connected): every RF chain reaches all antennas.  ``theta`` is a
  real ``(n, n_rf)`` matrix, ``phi`` a complex ``(n, n_rf)`` matrix.  Whenever a
  matrix has to be vectorized (FC phi subproblems) column-major (``order='F'``)
  stacking is used, so ``h_k Phi v = (v^T kron h_k) vec(Phi)``.

Baseband beamformers are complex ``(n_rf, k)`` matrices, column ``k`` serving
user ``k``.  Powers are milliwatts and rates are nats everywhere inside the
package; dBm and bps/Hz appear only at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

AOSA = "aosa"
FC = "fc"

RF_CHAIN_POWER_MW = 118.0
PHASE_SHIFTER_POWER_MW = 20.0


class InfeasibleBudgetError(ValueError):
    """Raised when a power budget cannot cover the circuit consumption."""


@dataclass(frozen=True)
class SystemConfig:
    """Static description of one beamforming problem instance.

    ``bits=None`` means infinite phase-shifter resolution.  ``sigma_mw`` is the
    receiver noise power; ``p_mw`` the transmit power budget P.
    """

    n: int
    n_rf: int
    k: int
    p_mw: float
    sigma_mw: float
    structure: str = AOSA
    bits: int | None = None
    soft_c: float = 0.1
    gamma_init: float | None = None
    gamma_growth: float = 1.2
    gamma_trigger: float = 0.9
    penalty_stop: float = 1e-2
    objective_stop: float = 1e-4
    stall_window: int = 5
    bisection_tol: float = 1e-9
    solver_tol: float = 1e-7
    max_iterations: int = 500

    def __post_init__(self):
        if self.structure not in (AOSA, FC):
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.structure == AOSA and self.n % self.n_rf != 0:
            raise ValueError(f"AOSA needs n_rf | n, got n={self.n}, n_rf={self.n_rf}")
        if self.k < 1:
            raise ValueError("need at least one user")
        if self.p_mw <= 0 or self.sigma_mw <= 0 or self.soft_c <= 0:
            raise ValueError("p_mw, sigma_mw and soft_c must be positive")
        if self.bits is not None and self.bits < 1:
            raise ValueError("bits must be a positive integer or None (infinite)")

    @property
    def subarray_size(self) -> int:
        """Antennas per RF chain (L).  Only meaningful for AOSA."""
        return self.n // self.n_rf

    @property
    def phase_dim(self) -> int:
        """Number of phase-shifter entries (n for AOSA, n*n_rf for FC)."""
        return self.n if self.structure == AOSA else self.n * self.n_rf


def _as_analog_coeffs(x: np.ndarray) -> np.ndarray:
    """Unit-modulus coefficients from phases, or pass complex entries through."""
    x = np.asarray(x)
    if np.isrealobj(x):
        return np.exp(1j * x)
    return x


def analog_matrix(theta: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Dense analog beamforming matrix V_RF, shape (n, n_rf).

    AOSA input is a length-n vector (phases, or complex relaxed entries) and
    yields a block-diagonal matrix whose off-block entries are exactly zero;
    FC input is an (n, n_rf) matrix mapped entrywise.
    """
    coeff = _as_analog_coeffs(theta)
    if cfg.structure == AOSA:
        if coeff.shape != (cfg.n,):
            raise ValueError(f"AOSA analog config must have shape ({cfg.n},), got {coeff.shape}")
        ell = cfg.subarray_size
        v = np.zeros((cfg.n, cfg.n_rf), dtype=complex)
        for j in range(cfg.n_rf):
            v[j * ell:(j + 1) * ell, j] = coeff[j * ell:(j + 1) * ell]
        return v
    if coeff.shape != (cfg.n, cfg.n_rf):
        raise ValueError(f"FC analog config must have shape ({cfg.n}, {cfg.n_rf}), got {coeff.shape}")
    return coeff.astype(complex)


def effective_channel(h: np.ndarray, x: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Per-RF-chain effective channel h_k V_RF, shape (..., n_rf).

    ``h`` is one channel row (n,) or a stack (k, n).  ``x`` is a phase
    configuration (real) or the relaxed analog variable (complex); for AOSA the
    product only touches chain j's own antenna block.
    """
    h = np.asarray(h, dtype=complex)
    if h.shape[-1] != cfg.n:
        raise ValueError(f"channel rows must have length {cfg.n}, got {h.shape}")
    coeff = _as_analog_coeffs(x)
    if cfg.structure == AOSA:
        if coeff.shape != (cfg.n,):
            raise ValueError(f"AOSA analog config must have shape ({cfg.n},), got {coeff.shape}")
        ell = cfg.subarray_size
        hb = h.reshape(h.shape[:-1] + (cfg.n_rf, ell))
        return np.einsum("...jl,jl->...j", hb, coeff.reshape(cfg.n_rf, ell))
    if coeff.shape != (cfg.n, cfg.n_rf):
        raise ValueError(f"FC analog config must have shape ({cfg.n}, {cfg.n_rf}), got {coeff.shape}")
    return h @ coeff


def tilde_channel(h_k: np.ndarray, v_l: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Row t with t . phi == effective_channel(h_k, phi) . v_l for every phi.

    AOSA: length n, block j equals v_l[j] * h_k[block j].  FC: length n*n_rf,
    the Kronecker row v_l^T kron h_k acting on vec(Phi) (column-major).
    """
    h_k = np.asarray(h_k, dtype=complex).reshape(cfg.n)
    v_l = np.asarray(v_l, dtype=complex).reshape(cfg.n_rf)
    if cfg.structure == AOSA:
        return (h_k.reshape(cfg.n_rf, cfg.subarray_size) * v_l[:, None]).reshape(cfg.n)
    return np.kron(v_l, h_k)


def tilde_rows(h: np.ndarray, v: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """All rows tilde_channel(h[k], v[:, l]) stacked as (k_users, k_cols, dim)."""
    h = np.asarray(h, dtype=complex)
    v = np.asarray(v, dtype=complex)
    k_users = h.shape[0]
    k_cols = v.shape[1]
    if cfg.structure == AOSA:
        hb = h.reshape(k_users, cfg.n_rf, cfg.subarray_size)
        rows = hb[:, None, :, :] * v.T[None, :, :, None]
        return rows.reshape(k_users, k_cols, cfg.n)
    rows = v.T[None, :, :, None] * h[:, None, None, :]
    return rows.reshape(k_users, k_cols, cfg.n * cfg.n_rf)


def user_rates(h: np.ndarray, x: np.ndarray, v_b: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Achievable rates ln(1 + SINR_k) in nats for all users, shape (k,)."""
    heff = effective_channel(h, x, cfg)            # (k, n_rf)
    gains = np.abs(heff @ v_b) ** 2                # (k, k): gains[k, l] = |heff_k v_l|^2
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal + cfg.sigma_mw
    return np.log1p(signal / interference)


def user_rate(h_k: np.ndarray, x: np.ndarray, v_b: np.ndarray, cfg: SystemConfig, k: int) -> float:
    """Rate of user ``k`` (channel row ``h_k``, own column ``v_b[:, k]``)."""
    heff = effective_channel(np.asarray(h_k).reshape(cfg.n), x, cfg)
    gains = np.abs(heff @ v_b) ** 2
    psi = gains.sum() - gains[k] + cfg.sigma_mw
    return float(np.log1p(gains[k] / psi))


def interference_power(h_k: np.ndarray, x: np.ndarray, v_b: np.ndarray, cfg: SystemConfig, k: int) -> float:
    """psi_k: interference-plus-noise power seen by user k."""
    heff = effective_channel(np.asarray(h_k).reshape(cfg.n), x, cfg)
    gains = np.abs(heff @ v_b) ** 2
    return float(gains.sum() - gains[k] + cfg.sigma_mw)


def transmit_power(x: np.ndarray, v_b: np.ndarray, cfg: SystemConfig) -> float:
    """Transmit power sum_k ||V_RF v_k||^2 in mW.

    For AOSA with a phase vector this is exactly L * ||v_b||_F^2 (independent
    of theta); a complex relaxed AOSA input is evaluated through the actual
    block-diagonal product.  FC inputs always go through the dense product.
    """
    v_b = np.asarray(v_b, dtype=complex)
    if cfg.structure == AOSA and np.isrealobj(np.asarray(x)):
        return float(cfg.subarray_size * np.sum(np.abs(v_b) ** 2))
    v_rf = analog_matrix(x, cfg)
    return float(np.sum(np.abs(v_rf @ v_b) ** 2))


def baseband_power_ball(x, cfg: SystemConfig) -> tuple[np.ndarray, float]:
    """Constraint pair (M, budget) so the power limit reads sum_k v_k^H M v_k <= budget.

    AOSA: M = L*I (theta-independent).  FC: M = Phi^H Phi for the current
    analog iterate.
    """
    if cfg.structure == AOSA:
        return cfg.subarray_size * np.eye(cfg.n_rf, dtype=complex), cfg.p_mw
    phi = np.asarray(x, dtype=complex)
    return phi.conj().T @ phi, cfg.p_mw


def quantize_phases(phi: np.ndarray, bits: int | None) -> np.ndarray:
    """Nearest b-bit phase grid point of each entry's argument.

    Angles are taken in [0, 2*pi); the grid is {nu * 2pi / 2^b}.  The upper
    rounding candidate 2^b wraps to 0 and exact midpoints keep the lower
    level.  ``bits=None`` returns the raw angles.  Zero entries get angle 0.
    """
    phi = np.asarray(phi)
    ang = np.angle(phi) if np.iscomplexobj(phi) else np.asarray(phi, dtype=float)
    ang = np.mod(ang, 2.0 * np.pi)
    if bits is None:
        return ang
    step = 2.0 * np.pi / (1 << bits)
    nu = np.floor(ang / step)
    take_upper = ((nu + 1.0) * step - ang) < (ang - nu * step)
    nu = np.where(take_upper, nu + 1.0, nu)
    nu = np.mod(nu, 1 << bits)
    return nu * step


def penalty_term(phi: np.ndarray, theta: np.ndarray) -> float:
    """Squared distance ||phi - e^{j theta}||^2 between relaxed and quantized analog parts."""
    return float(np.sum(np.abs(np.asarray(phi) - np.exp(1j * np.asarray(theta))) ** 2))


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(mw)


def circuit_power_mw(n_rf: int, n: int, structure: str = AOSA) -> float:
    """Circuit consumption: n_rf RF chains plus one phase shifter per analog entry."""
    shifters = n if structure == AOSA else n * n_rf
    return n_rf * RF_CHAIN_POWER_MW + shifters * PHASE_SHIFTER_POWER_MW


def power_budget(p_ref_dbm: float, n_rf: int, n: int, mode: str) -> float:
    """Convert between total (transmit + circuit) budgets and transmit powers, in mW.

    mode='aosa_from_ref':  transmit P = P_ref - n_rf*118 - n*20.
    mode='fc_ref':         total P_ref = P + n_rf*118 + n*n_rf*20 given transmit P (dBm in).
    mode='fc_from_ref':    transmit P = P_ref - n_rf*118 - n*n_rf*20.
    """
    ref_mw = dbm_to_mw(p_ref_dbm)
    if mode == "aosa_from_ref":
        p = ref_mw - circuit_power_mw(n_rf, n, AOSA)
        if p <= 0:
            raise InfeasibleBudgetError(
                f"budget {p_ref_dbm} dBm does not cover AOSA circuit power "
                f"{circuit_power_mw(n_rf, n, AOSA)} mW")
        return p
    if mode == "fc_ref":
        return ref_mw + circuit_power_mw(n_rf, n, FC)
    if mode == "fc_from_ref":
        p = ref_mw - circuit_power_mw(n_rf, n, FC)
        if p <= 0:
            raise InfeasibleBudgetError(
                f"budget {p_ref_dbm} dBm does not cover FC circuit power "
                f"{circuit_power_mw(n_rf, n, FC)} mW")
        return p
    raise ValueError(f"unknown mode {mode!r}")


def save_design(path, theta: np.ndarray, v_b: np.ndarray, cfg: SystemConfig) -> None:
    """Write a (theta, v_b) design as columnar text with a structure/bits header."""
    theta = np.asarray(theta, dtype=float)
    v_b = np.asarray(v_b, dtype=complex)
    with open(path, "w") as fh:
        fh.write("# hbfopt-design schema=1\n")
        fh.write(f"# structure={cfg.structure} n={cfg.n} n_rf={cfg.n_rf} k={cfg.k} "
                 f"bits={'inf' if cfg.bits is None else cfg.bits}\n")
        fh.write("# section=theta rows: index, phase_rad\n")
        for i, val in enumerate(theta.ravel(order="F")):
            fh.write(f"theta,{i},{val:.12g}\n")
        fh.write("# section=vb rows: rf_chain, user, re, im\n")
        for j in range(v_b.shape[0]):
            for kk in range(v_b.shape[1]):
                fh.write(f"vb,{j},{kk},{v_b[j, kk].real:.12g},{v_b[j, kk].imag:.12g}\n")


def load_design(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read a design written by :func:`save_design`; returns (theta, v_b, header)."""
    header: dict = {}
    theta_entries: list[tuple[int, float]] = []
    vb_entries: list[tuple[int, int, complex]] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        header[key] = val
                continue
            parts = line.split(",")
            if parts[0] == "theta":
                theta_entries.append((int(parts[1]), float(parts[2])))
            elif parts[0] == "vb":
                vb_entries.append((int(parts[1]), int(parts[2]), float(parts[3]) + 1j * float(parts[4])))
    n = int(header["n"])
    n_rf = int(header["n_rf"])
    k = int(header["k"])
    flat = np.zeros(len(theta_entries))
    for idx, val in theta_entries:
        flat[idx] = val
    theta = flat if header["structure"] == AOSA else flat.reshape(n, n_rf, order="F")
    v_b = np.zeros((n_rf, k), dtype=complex)
    for j, kk, val in vb_entries:
        v_b[j, kk] = val
    return theta, v_b, header
