import math

import numpy as np
import pytest

from hbfopt import channel
from hbfopt.channel import ChannelParams, array_response, generate_channel


class TestArrayResponse:
    def test_zero_phase_case(self):
        a = array_response(0.0, np.pi / 2, (4, 3))
        assert np.allclose(a, np.full(12, 1 / math.sqrt(12)), atol=1e-12)

    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = array_response(rng.uniform(0, 2 * np.pi), rng.uniform(0, np.pi), (6, 4))
            assert abs(np.linalg.norm(a) - 1.0) < 1e-12

    def test_two_element_line(self):
        a = array_response(np.pi / 2, np.pi / 2, (2, 1))
        expected = np.array([1.0, np.exp(1j * np.pi)]) / math.sqrt(2)
        assert np.allclose(a, expected, atol=1e-12)

    def test_first_entry_is_uniform(self):
        a = array_response(1.1, 0.7, (5, 3))
        assert np.isclose(a[0], 1 / math.sqrt(15))


class TestScalars:
    def test_path_loss_values(self):
        assert np.isclose(channel.path_loss_db(1.0), 36.72)
        assert abs(channel.path_loss_db(200.0) - 117.95) < 0.01
        assert abs(channel.path_loss_db(10.0) - 72.02) < 0.01

    def test_path_loss_domain(self):
        with pytest.raises(ValueError):
            channel.path_loss_db(0.0)

    def test_noise_power(self):
        assert np.isclose(channel.noise_power_mw(-174.0, 1.0), 10 ** -17.4)
        assert np.isclose(channel.noise_power_mw(-174.0, 10e6), 10 ** -10.4)
        assert np.isclose(channel.noise_power_mw(0.0, 1.0), 1.0)
        with pytest.raises(ValueError):
            channel.noise_power_mw(-174.0, 0.0)


class TestGenerateChannel:
    def test_deterministic(self):
        params = ChannelParams(panel_dims=(4, 2))
        a = generate_channel(params, 3, seed=123)
        b = generate_channel(params, 3, seed=123)
        assert np.array_equal(a.rows, b.rows)
        assert np.array_equal(a.distances_m, b.distances_m)
        c = generate_channel(params, 3, seed=124)
        assert not np.array_equal(a.rows, c.rows)

    def test_single_path_collapse(self):
        params = ChannelParams(panel_dims=(4, 2), num_clusters=1, num_scatterers=1)
        ch = generate_channel(params, 2, seed=7, unit_gains=True)
        for k in range(2):
            loss = channel.path_loss_db(ch.distances_m[k]) - params.antenna_gain_db
            expected = math.sqrt(8) * 10 ** (-loss / 20)
            assert np.isclose(np.linalg.norm(ch.rows[k]), expected, rtol=1e-10)

    def test_mean_energy_oracle(self):
        # Pin the distance by shrinking the cell to the minimum radius, then
        # compare the Monte Carlo mean of ||h||^2 with N * 10^(-rho_eff/10).
        params = ChannelParams(panel_dims=(4, 2), num_clusters=2, num_scatterers=3,
                               cell_radius_m=channel.MIN_USER_DISTANCE_M + 1e-6)
        draws = 10_000
        ch = generate_channel(params, draws, seed=99)
        loss = channel.path_loss_db(channel.MIN_USER_DISTANCE_M) - params.antenna_gain_db
        expected = 8 * 10 ** (-loss / 10)
        mean = np.mean(np.sum(np.abs(ch.rows) ** 2, axis=1))
        assert abs(mean - expected) < 0.05 * expected

    def test_laplacian_spread(self):
        params = ChannelParams()
        rng = np.random.default_rng(5)
        offs = channel.ray_angle_offsets(params, rng, 100_000)
        std_deg = math.degrees(offs.std())
        assert abs(std_deg - 10.0) < 0.5

    def test_shapes_and_finite(self):
        params = ChannelParams(panel_dims=(4, 2))
        ch = generate_channel(params, 5, seed=1)
        assert ch.rows.shape == (5, 8)
        assert np.all(np.isfinite(ch.rows.view(float)))
        assert np.all(ch.distances_m >= channel.MIN_USER_DISTANCE_M)
        assert np.all(ch.distances_m <= params.cell_radius_m)


class TestChannelIO:
    def test_roundtrip(self, tmp_path):
        params = ChannelParams(panel_dims=(4, 2))
        ch = generate_channel(params, 3, seed=42)
        path = tmp_path / "channel.csv"
        channel.save_channel(path, ch, params)
        loaded, header = channel.load_channel(path)
        assert np.allclose(loaded.rows, ch.rows, rtol=1e-15)
        assert np.allclose(loaded.distances_m, ch.distances_m)
        assert loaded.seed == 42
        assert header["num_clusters"] == "5"
