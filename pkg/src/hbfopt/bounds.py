"""Tight quadratic surrogates for the rate and soft-fairness objectives.

Two inequality families drive every algorithm step:

* a concave quadratic minorant of ``ln(1 + ||x||^2 / y)`` around an expansion
  point (:func:`lograte_minorant`), instantiated per user in the baseband and
  analog variables;
* a convex quadratic majorant of ``ln pi_c(x, y)`` with
  ``pi_c = sum_k (1 - ||x_k||^2 / (||x_k||^2 + c y_k))``
  (:func:`lnpi_majorant`), the smooth stand-in for the max-min objective.

Both are tight at the expansion point and global on their domains, so
maximizing/minimizing them cannot worsen the true objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import AOSA, SystemConfig, effective_channel, tilde_rows

MINORANT = "minorant"
MAJORANT = "majorant"


@dataclass
class LograteMinorant:
    """Coefficients of the rate minorant: value = alpha + 2Re{linear.x} - weight*(||x||^2 + y)."""

    alpha: float
    linear: np.ndarray
    weight: float

    def value(self, x, y: float) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=complex))
        return float(self.alpha + 2.0 * np.real(self.linear @ x)
                     - self.weight * (np.vdot(x, x).real + y))


def lograte_minorant(x_bar, y_bar: float) -> LograteMinorant:
    """Global concave minorant of ln(1 + ||x||^2/y) tight at (x_bar, y_bar); y_bar > 0."""
    if y_bar <= 0:
        raise ValueError("expansion denominator y_bar must be positive")
    x_bar = np.atleast_1d(np.asarray(x_bar, dtype=complex))
    p = float(np.vdot(x_bar, x_bar).real)
    alpha = float(np.log1p(p / y_bar) - p / y_bar)
    linear = x_bar.conj() / y_bar
    weight = p / (y_bar * (p + y_bar))
    return LograteMinorant(alpha=alpha, linear=linear, weight=weight)


@dataclass
class LnPiMajorant:
    """Coefficients of the ln pi_c majorant.

    value(x, y) = constant + sum_k [-2 d_k Re{x_bar_k^H x_k} + c_k (c y_k + ||x_k||^2)],
    with equality at (x_bar, y_bar).
    """

    constant: float
    d_weights: np.ndarray
    c_weights: np.ndarray
    x_bar: np.ndarray       # (k, dim)
    c: float

    def value(self, x, y) -> float:
        x = np.asarray(x, dtype=complex).reshape(self.x_bar.shape)
        y = np.asarray(y, dtype=float)
        cross = np.real(np.sum(self.x_bar.conj() * x, axis=1))
        norms = np.sum(np.abs(x) ** 2, axis=1)
        return float(self.constant + np.sum(-2.0 * self.d_weights * cross
                                            + self.c_weights * (self.c * y + norms)))


def pi_c_value(signal_powers: np.ndarray, y: np.ndarray, c: float) -> float:
    """pi_c = sum_k c*y_k / (||x_k||^2 + c*y_k), a value in (0, K]."""
    signal_powers = np.asarray(signal_powers, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.sum(c * y / (signal_powers + c * y)))


def lnpi_majorant(x_bars, y_bars, c: float) -> LnPiMajorant:
    """Global convex majorant of ln pi_c(x, y) tight at (x_bars, y_bars)."""
    x_bars = np.atleast_2d(np.asarray(x_bars, dtype=complex))
    y_bars = np.asarray(y_bars, dtype=float)
    if np.any(y_bars <= 0):
        raise ValueError("all y_bar must be positive")
    p = np.sum(np.abs(x_bars) ** 2, axis=1)
    pi = pi_c_value(p, y_bars, c)
    if pi <= 0:
        raise ValueError("pi_c must be positive at the expansion point")
    denom = c * y_bars + p
    d = (1.0 / denom) / pi
    cw = d * p / denom
    constant = float(np.log(pi) + np.sum(d * p))
    return LnPiMajorant(constant=constant, d_weights=d, c_weights=cw,
                        x_bar=x_bars.copy(), c=c)


def log_pi_c(h: np.ndarray, x, v_b: np.ndarray, c: float, cfg: SystemConfig) -> float:
    """ln pi_c of a design, evaluated through the analog variable ``x`` (theta, phi or Phi)."""
    heff = effective_channel(h, x, cfg)
    gains = np.abs(heff @ v_b) ** 2
    signal = np.diag(gains).copy()
    psi = gains.sum(axis=1) - signal + cfg.sigma_mw
    return float(np.log(pi_c_value(signal, psi, c)))


@dataclass
class SurrogateQuadratic:
    """One quadratic surrogate over a stacked complex decision vector z.

    value(z) = constant + 2Re{linear.z} - z^H quad z   (minorant)
    value(z) = constant + 2Re{linear.z} + z^H quad z   (majorant)

    ``quad`` is Hermitian PSD either way, so minorants are concave and
    majorants convex.  ``expansion_point`` is the iterate the surrogate is
    tight at.
    """

    constant: float
    linear: np.ndarray
    quad: np.ndarray
    sense: str
    expansion_point: np.ndarray

    def value(self, z) -> float:
        z = np.asarray(z, dtype=complex).reshape(self.linear.shape)
        q = float(np.real(np.vdot(z, self.quad @ z)))
        s = -q if self.sense == MINORANT else q
        return float(self.constant + 2.0 * np.real(self.linear @ z) + s)


def _vb_expansion(h, x, v_b, cfg):
    """Per-user pieces of the rate at (x, v_b): heff, own gains, interference."""
    heff = effective_channel(h, x, cfg)
    gains = np.abs(heff @ v_b) ** 2
    signal = np.diag(gains).copy()
    psi = gains.sum(axis=1) - signal + cfg.sigma_mw
    return heff, signal, psi


def vb_minorant_coefficients(h, x, v_b, cfg):
    """Rate-minorant pieces in the baseband variable, for all users at once.

    Returns (alpha, a, beta, heff): constants (k,), linear rows a_k (k, n_rf)
    acting on the own column v_k, curvature weights beta_k (k,), and the
    effective channels the quadratic [heff_k^H]^2 is built from.
    """
    heff, signal, psi = _vb_expansion(h, x, v_b, cfg)
    xbar = np.einsum("kj,jk->k", heff, v_b)
    beta = 1.0 / psi - 1.0 / (psi + signal)
    alpha = np.log1p(signal / psi) - signal / psi - cfg.sigma_mw * beta
    a = (xbar.conj() / psi)[:, None] * heff
    return alpha, a, beta, heff


def phi_minorant_coefficients(h, v_b_new, phi_exp, cfg):
    """Rate-minorant pieces in the analog variable phi (or vec Phi).

    Returns (alpha, a, beta, rows) with rows[k, l] = tilde_channel(h_k, v_l)
    so that each user's quadratic is beta_k * sum_l rows[k,l]^H rows[k,l].
    """
    rows = tilde_rows(h, v_b_new, cfg)
    z = np.asarray(phi_exp, dtype=complex).ravel(order="F")
    proj = rows @ z                              # (k, l): tilde_{k,l} phi
    gains = np.abs(proj) ** 2
    signal = np.diag(gains).copy()
    psi = gains.sum(axis=1) - signal + cfg.sigma_mw
    xbar = np.diag(proj)
    beta = 1.0 / psi - 1.0 / (psi + signal)
    alpha = np.log1p(signal / psi) - signal / psi - cfg.sigma_mw * beta
    a = (xbar.conj() / psi)[:, None] * rows[np.arange(rows.shape[0]), np.arange(rows.shape[0])]
    return alpha, a, beta, rows


def rate_minorant_vb(h, x, v_b, cfg, k: int) -> SurrogateQuadratic:
    """Concave minorant of user k's rate as a function of the stacked baseband vec(V)."""
    alpha, a, beta, heff = vb_minorant_coefficients(h, x, v_b, cfg)
    n_rf, n_users = v_b.shape
    gram = beta[k] * np.outer(heff[k].conj(), heff[k])
    quad = np.kron(np.eye(n_users), gram)
    linear = np.zeros(n_rf * n_users, dtype=complex)
    linear[k * n_rf:(k + 1) * n_rf] = a[k]
    return SurrogateQuadratic(constant=float(alpha[k]), linear=linear, quad=quad,
                              sense=MINORANT,
                              expansion_point=np.asarray(v_b).ravel(order="F").copy())


def rate_minorant_phi(h, v_b_new, phi_exp, cfg, k: int) -> SurrogateQuadratic:
    """Concave minorant of user k's rate as a function of phi (or vec Phi)."""
    alpha, a, beta, rows = phi_minorant_coefficients(h, v_b_new, phi_exp, cfg)
    quad = beta[k] * (rows[k].conj().T @ rows[k])
    return SurrogateQuadratic(constant=float(alpha[k]), linear=a[k], quad=quad,
                              sense=MINORANT,
                              expansion_point=np.asarray(phi_exp, dtype=complex).ravel(order="F").copy())


@dataclass
class SoftMajorantCoeffs:
    """Convex majorant of ln pi_c in one decision block family.

    Per-user form (baseband step): value(V) = constant
    - 2 sum_k Re{linear[k] v_k} + sum_k v_k^H quad[k] v_k.

    Aggregated form (analog step): value(phi) = constant - 2Re{linear.phi}
    + phi^H C phi where C = quad_rows^H quad_rows (the rows carry the
    sqrt-weights, so C never needs materializing at scale).
    """

    constant: float
    linear: np.ndarray                 # (k, d) per-user b_k, or (d,) aggregated b
    d_weights: np.ndarray
    c_weights: np.ndarray
    aggregated: bool
    quad: np.ndarray | None = None         # (k, d, d) per-user C_k
    quad_rows: np.ndarray | None = None    # (m, d), aggregated C = rows^H rows

    def quad_dense(self) -> np.ndarray:
        if self.quad is not None:
            return self.quad
        return self.quad_rows.conj().T @ self.quad_rows

    def value(self, z) -> float:
        if self.aggregated:
            z = np.asarray(z, dtype=complex).ravel(order="F")
            q = float(np.sum(np.abs(self.quad_rows @ z) ** 2)) if self.quad_rows is not None \
                else float(np.real(np.vdot(z, self.quad @ z)))
            return float(self.constant - 2.0 * np.real(self.linear @ z) + q)
        v = np.asarray(z, dtype=complex).reshape(self.linear.shape[1], self.linear.shape[0], order="F") \
            if np.asarray(z).ndim == 1 else np.asarray(z, dtype=complex)
        lin = np.real(np.einsum("kd,dk->k", self.linear, v)).sum()
        q = np.real(np.einsum("dk,kde,ek->", v.conj(), self.quad, v))
        return float(self.constant - 2.0 * lin + q)


def soft_majorant_vb(h, x, v_b, c: float, cfg) -> SoftMajorantCoeffs:
    """Majorant of ln pi_c(x, .) in the baseband matrix, tight at v_b."""
    heff, signal, psi = _vb_expansion(h, x, v_b, cfg)
    xbar = np.einsum("kj,jk->k", heff, v_b)
    pi = pi_c_value(signal, psi, c)
    denom = c * psi + signal
    d = (1.0 / denom) / pi
    cw = d * signal / denom
    constant = float(np.log(pi) + np.sum(d * signal) + c * cfg.sigma_mw * np.sum(cw))
    b = (d * xbar.conj())[:, None] * heff
    grams = np.einsum("ki,kj->kij", heff.conj(), heff)
    total = np.einsum("k,kij->ij", cw, grams)
    # quad for block k: own gram at weight cw_k, every other user's at c*cw_l.
    quad = c * (total[None, :, :] - grams * cw[:, None, None]) + grams * cw[:, None, None]
    return SoftMajorantCoeffs(constant=constant, linear=b, d_weights=d, c_weights=cw,
                              aggregated=False, quad=quad)


def soft_majorant_phi_pieces(h, v_b_new, phi_exp, c: float, cfg):
    """Aggregated soft-majorant pieces in phi: (constant, b, d, cw, rows, row_weights).

    The quadratic is sum_{k,l} w_{k,l} rows[k,l]^H rows[k,l] with
    w_{k,l} = c*cw_k for l != k and cw_k for l = k.
    """
    rows = tilde_rows(h, v_b_new, cfg)
    z = np.asarray(phi_exp, dtype=complex).ravel(order="F")
    proj = rows @ z
    gains = np.abs(proj) ** 2
    signal = np.diag(gains).copy()
    psi = gains.sum(axis=1) - signal + cfg.sigma_mw
    xbar = np.diag(proj)
    pi = pi_c_value(signal, psi, c)
    denom = c * psi + signal
    d = (1.0 / denom) / pi
    cw = d * signal / denom
    constant = float(np.log(pi) + np.sum(d * signal) + c * cfg.sigma_mw * np.sum(cw))
    k_users = rows.shape[0]
    b = np.einsum("k,kd->d", d * xbar.conj(), rows[np.arange(k_users), np.arange(k_users)])
    weights = np.repeat(cw[:, None], k_users, axis=1) * c
    weights[np.arange(k_users), np.arange(k_users)] = cw
    return constant, b, d, cw, rows, weights


def soft_majorant_phi(h, v_b_new, phi_exp, c: float, cfg) -> SoftMajorantCoeffs:
    """Majorant of ln pi_c(., v_b_new) in phi (or vec Phi), tight at phi_exp."""
    constant, b, d, cw, rows, weights = soft_majorant_phi_pieces(h, v_b_new, phi_exp, c, cfg)
    dim = rows.shape[-1]
    scaled = np.sqrt(weights)[:, :, None] * rows
    return SoftMajorantCoeffs(constant=constant, linear=b, d_weights=d, c_weights=cw,
                              aggregated=True, quad_rows=scaled.reshape(-1, dim))
