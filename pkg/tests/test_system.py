import numpy as np
import pytest

from hbfopt import system
from hbfopt.system import AOSA, FC, InfeasibleBudgetError, SystemConfig


def make_cfg(n=8, n_rf=2, k=2, structure=AOSA, bits=None, p=4.0, sigma=0.5, **kw):
    return SystemConfig(n=n, n_rf=n_rf, k=k, p_mw=p, sigma_mw=sigma,
                        structure=structure, bits=bits, **kw)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


class TestAnalogMatrix:
    def test_zero_phase_block_diagonal(self):
        cfg = make_cfg(n=4, n_rf=2)
        v = system.analog_matrix(np.zeros(4), cfg)
        expected = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=complex)
        assert np.array_equal(v, expected)

    def test_aosa_column_structure(self):
        cfg = make_cfg(n=12, n_rf=3)
        rng = np.random.default_rng(0)
        v = system.analog_matrix(rng.uniform(0, 2 * np.pi, 12), cfg)
        for j in range(3):
            col = v[:, j]
            nz = np.flatnonzero(col)
            assert len(nz) == cfg.subarray_size
            assert np.all((nz >= j * 4) & (nz < (j + 1) * 4))
            assert np.allclose(np.abs(col[nz]), 1.0)
        # off-block entries are exactly zero, not merely small
        mask = v != 0
        assert mask.sum() == cfg.n

    def test_fc_pi_gives_minus_ones(self):
        cfg = make_cfg(n=4, n_rf=2, structure=FC)
        v = system.analog_matrix(np.full((4, 2), np.pi), cfg)
        assert np.allclose(v, -np.ones((4, 2)))

    def test_layout_mismatch_raises(self):
        cfg = make_cfg(n=4, n_rf=2)
        with pytest.raises(ValueError):
            system.analog_matrix(np.zeros((4, 2)), cfg)


class TestEffectiveChannel:
    def test_phi_equals_theta_substitution(self):
        cfg = make_cfg(n=8, n_rf=2)
        rng = np.random.default_rng(1)
        theta = rng.uniform(0, 2 * np.pi, 8)
        h = crandn(rng, 8)
        a = system.effective_channel(h, theta, cfg)
        b = system.effective_channel(h, np.exp(1j * theta), cfg)
        assert np.array_equal(a, b)

    def test_aosa_block_inner_product(self):
        cfg = make_cfg(n=6, n_rf=3)
        rng = np.random.default_rng(2)
        h = crandn(rng, 6)
        phi = crandn(rng, 6)
        eff = system.effective_channel(h, phi, cfg)
        for j in range(3):
            assert np.isclose(eff[j], h[2 * j:2 * j + 2] @ phi[2 * j:2 * j + 2])

    @pytest.mark.parametrize("structure", [AOSA, FC])
    def test_dense_product_oracle(self, structure):
        cfg = make_cfg(n=8, n_rf=2, structure=structure)
        rng = np.random.default_rng(3)
        for _ in range(20):
            h = crandn(rng, 3, 8)
            shape = (8,) if structure == AOSA else (8, 2)
            theta = rng.uniform(0, 2 * np.pi, shape)
            dense = h @ system.analog_matrix(theta, cfg)
            assert np.allclose(system.effective_channel(h, theta, cfg), dense, atol=1e-12)


class TestTildeChannel:
    @pytest.mark.parametrize("structure", [AOSA, FC])
    def test_defining_identity(self, structure):
        cfg = make_cfg(n=6, n_rf=3, structure=structure) if structure == AOSA \
            else make_cfg(n=6, n_rf=2, structure=FC)
        rng = np.random.default_rng(4)
        for _ in range(100):
            h = crandn(rng, 6)
            v = crandn(rng, cfg.n_rf)
            phi = crandn(rng, *((6,) if structure == AOSA else (6, cfg.n_rf)))
            row = system.tilde_channel(h, v, cfg)
            lhs = row @ phi.ravel(order="F")
            rhs = system.effective_channel(h, phi, cfg) @ v
            assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(rhs))

    def test_unit_vector_selects_block(self):
        cfg = make_cfg(n=6, n_rf=3)
        rng = np.random.default_rng(5)
        h = crandn(rng, 6)
        row = system.tilde_channel(h, np.array([1.0, 0, 0]), cfg)
        assert np.allclose(row[:2], h[:2])
        assert np.all(row[2:] == 0)

    def test_fc_scalar_kron(self):
        cfg = make_cfg(n=2, n_rf=1, structure=FC, k=1)
        rng = np.random.default_rng(6)
        h = crandn(rng, 2)
        c = 1.3 - 0.4j
        assert np.allclose(system.tilde_channel(h, np.array([c]), cfg), c * h)

    def test_tilde_rows_matches_loop(self):
        for structure in (AOSA, FC):
            cfg = make_cfg(n=6, n_rf=3, k=2, structure=structure) if structure == AOSA \
                else make_cfg(n=6, n_rf=2, k=2, structure=FC)
            rng = np.random.default_rng(7)
            h = crandn(rng, 2, 6)
            v = crandn(rng, cfg.n_rf, 2)
            rows = system.tilde_rows(h, v, cfg)
            for k in range(2):
                for l in range(2):
                    assert np.allclose(rows[k, l], system.tilde_channel(h[k], v[:, l], cfg))


class TestRates:
    def test_zero_beamformer_zero_rate(self):
        cfg = make_cfg()
        rng = np.random.default_rng(8)
        h = crandn(rng, 2, 8)
        v = crandn(rng, 2, 2)
        v[:, 0] = 0
        theta = rng.uniform(0, 2 * np.pi, 8)
        assert system.user_rates(h, theta, v, cfg)[0] == 0.0

    def test_unit_snr_gives_ln2(self):
        cfg = make_cfg(n=2, n_rf=1, k=1, sigma=0.37)
        rng = np.random.default_rng(9)
        h = crandn(rng, 1, 2)
        theta = rng.uniform(0, 2 * np.pi, 2)
        heff = system.effective_channel(h[0], theta, cfg)
        v = (np.sqrt(cfg.sigma_mw) * heff.conj() / np.abs(heff) ** 2).reshape(1, 1)
        assert np.isclose(system.user_rates(h, theta, v, cfg)[0], np.log(2.0), atol=1e-12)

    def test_dense_formula_oracle(self):
        cfg = make_cfg(n=8, n_rf=2, k=3, structure=FC)
        rng = np.random.default_rng(10)
        h = crandn(rng, 3, 8)
        theta = rng.uniform(0, 2 * np.pi, (8, 2))
        v = crandn(rng, 2, 3)
        heff = h @ system.analog_matrix(theta, cfg)
        for k in range(3):
            own = abs(heff[k] @ v[:, k]) ** 2
            inter = sum(abs(heff[k] @ v[:, l]) ** 2 for l in range(3) if l != k) + cfg.sigma_mw
            expected = np.log(1 + own / inter)
            assert np.isclose(system.user_rates(h, theta, v, cfg)[k], expected, atol=1e-12)
            assert np.isclose(system.user_rate(h[k], theta, v, cfg, k), expected, atol=1e-12)

    def test_common_phase_rotation_invariance(self):
        cfg = make_cfg(n=8, n_rf=2, k=3)
        rng = np.random.default_rng(11)
        h = crandn(rng, 3, 8)
        theta = rng.uniform(0, 2 * np.pi, 8)
        v = crandn(rng, 2, 3)
        r0 = system.user_rates(h, theta, v, cfg)
        r1 = system.user_rates(h, theta, np.exp(0.7j) * v, cfg)
        assert np.allclose(r0, r1, atol=1e-12)


class TestTransmitPower:
    def test_aosa_budget_identity(self):
        cfg = make_cfg(n=8, n_rf=2, k=2, p=3.7)
        rng = np.random.default_rng(12)
        v = crandn(rng, 2, 2)
        v *= np.sqrt(cfg.p_mw / cfg.subarray_size / np.sum(np.abs(v) ** 2))
        theta = rng.uniform(0, 2 * np.pi, 8)
        assert np.isclose(system.transmit_power(theta, v, cfg), cfg.p_mw, rtol=1e-12)

    def test_theta_independence(self):
        cfg = make_cfg(n=8, n_rf=2, k=2)
        rng = np.random.default_rng(13)
        v = crandn(rng, 2, 2)
        p = [system.transmit_power(rng.uniform(0, 2 * np.pi, 8), v, cfg) for _ in range(5)]
        assert np.allclose(p, p[0], rtol=1e-12)

    def test_fc_dense_oracle(self):
        cfg = make_cfg(n=8, n_rf=2, k=3, structure=FC)
        rng = np.random.default_rng(14)
        phi = crandn(rng, 8, 2)
        v = crandn(rng, 2, 3)
        expected = sum(np.linalg.norm(phi @ v[:, k]) ** 2 for k in range(3))
        assert np.isclose(system.transmit_power(phi, v, cfg), expected, rtol=1e-12)


class TestQuantizePhases:
    def test_rounding_example(self):
        assert np.isclose(system.quantize_phases(np.exp(0.8j), 2), np.pi / 2)

    def test_wrap_example(self):
        assert system.quantize_phases(np.exp(1.9j * np.pi), 2) == 0.0

    @pytest.mark.parametrize("bits", [1, 2, 3])
    def test_exhaustive_grid_oracle(self, bits):
        rng = np.random.default_rng(15)
        phi = np.exp(1j * rng.uniform(-np.pi, 3 * np.pi, 500)) * rng.uniform(0.1, 2.0, 500)
        theta = system.quantize_phases(phi, bits)
        grid = np.arange(1 << bits) * 2 * np.pi / (1 << bits)
        dist = np.abs(np.exp(1j * grid)[None, :] - (phi / np.abs(phi))[:, None])
        best = grid[np.argmin(dist, axis=1)]
        assert np.allclose(theta, best)

    def test_infinite_resolution_returns_angles(self):
        rng = np.random.default_rng(16)
        phi = (rng.standard_normal(50) + 1j * rng.standard_normal(50))
        theta = system.quantize_phases(phi, None)
        assert np.allclose(np.exp(1j * theta), phi / np.abs(phi), atol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(17)
        theta = system.quantize_phases(np.exp(1j * rng.uniform(0, 2 * np.pi, 100)), 3)
        again = system.quantize_phases(np.exp(1j * theta), 3)
        assert np.allclose(theta, again)

    def test_zero_entry_gets_zero_angle(self):
        assert system.quantize_phases(np.array([0.0 + 0.0j]), 3)[0] == 0.0


class TestPowerBudget:
    def test_fc_reference_values(self):
        # 100 mW transmit, 4 chains, 72 antennas -> 38.02 dBm total.
        p_ref = system.power_budget(20.0, 4, 72, "fc_ref")
        assert abs(system.mw_to_dbm(p_ref) - 38.02) < 0.01
        p_ref = system.power_budget(15.0, 8, 72, "fc_ref")
        assert abs(system.mw_to_dbm(p_ref) - 40.97) < 0.01

    def test_aosa_reference_values(self):
        total = system.dbm_to_mw(15.0) + 8 * 118 + 72 * 20
        assert abs(system.mw_to_dbm(total) - 33.83) < 0.01
        p = system.power_budget(33.83, 8, 72, "aosa_from_ref")
        assert abs(system.mw_to_dbm(p) - 15.0) < 0.01

    def test_infeasible_budget(self):
        with pytest.raises(InfeasibleBudgetError):
            system.power_budget(10.0, 8, 72, "aosa_from_ref")

    def test_roundtrip_fc(self):
        p_ref_dbm = system.mw_to_dbm(system.power_budget(17.0, 4, 72, "fc_ref"))
        back = system.power_budget(p_ref_dbm, 4, 72, "fc_from_ref")
        assert np.isclose(back, system.dbm_to_mw(17.0), rtol=1e-9)


class TestDesignIO:
    @pytest.mark.parametrize("structure", [AOSA, FC])
    def test_roundtrip(self, tmp_path, structure):
        cfg = make_cfg(n=8, n_rf=2, k=3, structure=structure, bits=3)
        rng = np.random.default_rng(18)
        shape = (8,) if structure == AOSA else (8, 2)
        theta = system.quantize_phases(np.exp(1j * rng.uniform(0, 2 * np.pi, shape)), 3)
        v = crandn(rng, 2, 3)
        path = tmp_path / "design.csv"
        system.save_design(path, theta, v, cfg)
        theta2, v2, header = system.load_design(path)
        assert np.allclose(theta, theta2, atol=1e-10)
        assert np.allclose(v, v2, atol=1e-10)
        assert header["structure"] == structure
