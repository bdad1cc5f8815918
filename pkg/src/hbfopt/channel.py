"""Clustered mmWave downlink channels over a uniform planar array.

Each user's row is a sum of N_c clusters times N_sc rays,
``h_k = F * sqrt(g_k) * sum_{c,l} alpha_{c,l} a(az_{c,l}, el_{c,l})`` with
``F = sqrt(N / (N_c N_sc))``, CN(0,1) ray gains and Laplacian angle offsets
around uniformly drawn cluster means.  ``g_k`` is the linear gain left after
path loss minus the array gain.

Randomness: :func:`generate_channel` derives one independent
``np.random.Generator`` per user by spawning ``numpy.random.SeedSequence``
children in user order.  Inside a user stream the draw order is fixed:
distance, cluster mean azimuths, cluster mean elevations, ray azimuth offsets,
ray elevation offsets, ray gains.  Identical (params, k, seed) therefore give
bit-identical channels, and per-user streams can be regenerated independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

MIN_USER_DISTANCE_M = 10.0


@dataclass(frozen=True)
class ChannelParams:
    """Propagation and geometry constants of the simulated cell."""

    carrier_freq_hz: float = 28e9
    cell_radius_m: float = 200.0
    num_clusters: int = 5
    num_scatterers: int = 10
    angle_spread_deg: float = 10.0
    panel_dims: tuple[int, int] = (12, 6)
    noise_density_dbm_hz: float = -174.0
    bandwidth_hz: float = 10e6
    antenna_gain_db: float = 16.5

    def __post_init__(self):
        n1, n2 = self.panel_dims
        if n1 < 1 or n2 < 1:
            raise ValueError("panel dims must be positive")
        if self.num_clusters < 1 or self.num_scatterers < 1:
            raise ValueError("need at least one cluster and one scatterer")
        if self.angle_spread_deg <= 0:
            raise ValueError("angle spread must be positive")

    @property
    def n_antennas(self) -> int:
        return self.panel_dims[0] * self.panel_dims[1]


@dataclass
class Channel:
    """K channel rows (amplitude gain) plus the geometry that produced them."""

    rows: np.ndarray          # (k, n) complex
    distances_m: np.ndarray   # (k,)
    seed: int

    @property
    def k(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]


def array_response(azimuth: float, elevation: float, panel_dims: tuple[int, int]) -> np.ndarray:
    """Normalized UPA response, phase pi*(x sin(az) sin(el) + y cos(el)).

    Entries are enumerated x-major (flat index = x * N2 + y for horizontal x,
    vertical y), so the (0, 0) element comes first and equals 1/sqrt(N).
    """
    n1, n2 = panel_dims
    x = np.arange(n1) * (math.sin(azimuth) * math.sin(elevation))
    y = np.arange(n2) * math.cos(elevation)
    phase = np.pi * np.add.outer(x, y)
    return np.exp(1j * phase).ravel() / math.sqrt(n1 * n2)


def path_loss_db(d: float) -> float:
    """Distance-based loss 36.72 + 35.3*log10(d) in dB; d in meters."""
    if d <= 0:
        raise ValueError("distance must be positive")
    return 36.72 + 35.3 * math.log10(d)


def noise_power_mw(noise_density_dbm_hz: float, bandwidth_hz: float) -> float:
    """Thermal noise power over the band, in mW."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return 10.0 ** ((noise_density_dbm_hz + 10.0 * math.log10(bandwidth_hz)) / 10.0)


def ray_angle_offsets(params: ChannelParams, rng: np.random.Generator, size) -> np.ndarray:
    """Per-ray angle offsets around a cluster mean, in radians.

    Laplacian with scale spread/sqrt(2), so the offset standard deviation
    equals the configured angle spread.
    """
    scale = math.radians(params.angle_spread_deg) / math.sqrt(2.0)
    return rng.laplace(0.0, scale, size=size)


def _user_row(params: ChannelParams, rng: np.random.Generator,
              unit_gains: bool) -> tuple[np.ndarray, float]:
    """One user's channel row and distance, consuming draws in documented order."""
    n = params.n_antennas
    n_c, n_sc = params.num_clusters, params.num_scatterers
    d = rng.uniform(MIN_USER_DISTANCE_M, params.cell_radius_m)
    mean_az = rng.uniform(0.0, 2.0 * np.pi, size=n_c)
    mean_el = rng.uniform(0.0, np.pi, size=n_c)
    off_az = ray_angle_offsets(params, rng, (n_c, n_sc))
    off_el = ray_angle_offsets(params, rng, (n_c, n_sc))
    if unit_gains:
        alpha = np.ones((n_c, n_sc), dtype=complex)
    else:
        alpha = (rng.standard_normal((n_c, n_sc)) + 1j * rng.standard_normal((n_c, n_sc))) / math.sqrt(2.0)

    loss_db = path_loss_db(d) - params.antenna_gain_db
    amp = math.sqrt(10.0 ** (-loss_db / 10.0))
    factor = math.sqrt(n / (n_c * n_sc))
    row = np.zeros(n, dtype=complex)
    for c in range(n_c):
        for s in range(n_sc):
            row += alpha[c, s] * array_response(mean_az[c] + off_az[c, s],
                                                mean_el[c] + off_el[c, s],
                                                params.panel_dims)
    return factor * amp * row, d


def generate_channel(params: ChannelParams, k: int, seed,
                     unit_gains: bool = False) -> Channel:
    """Draw K user channels; pure function of (params, k, seed).

    ``unit_gains=True`` pins every ray gain alpha to 1 (diagnostic hook for the
    single-path collapse identity); all other draws are unchanged.
    """
    if k < 1:
        raise ValueError("need at least one user")
    seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rows = np.zeros((k, params.n_antennas), dtype=complex)
    dists = np.zeros(k)
    for u, child in enumerate(seed_seq.spawn(k)):
        rows[u], dists[u] = _user_row(params, np.random.default_rng(child), unit_gains)
    entropy = seed_seq.entropy
    return Channel(rows=rows, distances_m=dists, seed=int(entropy) if np.isscalar(entropy) else -1)


def save_channel(path, channel: Channel, params: ChannelParams) -> None:
    """Write rows as long-format CSV (user, antenna, re, im) with a params header."""
    with open(path, "w") as fh:
        fh.write("# hbfopt-channel schema=1\n")
        fh.write(f"# seed={channel.seed} k={channel.k} n={channel.n}\n")
        for key, val in asdict(params).items():
            fh.write(f"# param {key}={val}\n")
        fh.write("# distances_m=" + ",".join(f"{d:.12g}" for d in channel.distances_m) + "\n")
        fh.write("user,antenna,re,im\n")
        for u in range(channel.k):
            for a in range(channel.n):
                fh.write(f"{u},{a},{channel.rows[u, a].real:.17g},{channel.rows[u, a].imag:.17g}\n")


def load_channel(path) -> tuple[Channel, dict]:
    """Read a file produced by :func:`save_channel`; returns (channel, header dict)."""
    header: dict = {}
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line == "user,antenna,re,im":
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("param "):
                    key, val = body[len("param "):].split("=", 1)
                    header[key] = val
                else:
                    for tok in body.split():
                        if "=" in tok:
                            key, val = tok.split("=", 1)
                            header[key] = val
                continue
            u, a, re, im = line.split(",")
            entries.append((int(u), int(a), float(re) + 1j * float(im)))
    k = int(header["k"])
    n = int(header["n"])
    rows = np.zeros((k, n), dtype=complex)
    for u, a, val in entries:
        rows[u, a] = val
    dists = np.array([float(tok) for tok in header["distances_m"].split(",")])
    return Channel(rows=rows, distances_m=dists, seed=int(header["seed"])), header
