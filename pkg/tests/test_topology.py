import numpy as np
import pytest

from cellfree.rng import TOPOLOGY, stream
from cellfree.topology import (
    generate_topology,
    hermitian_sqrt,
    large_scale_coefficient,
    sample_channels,
    spatial_correlation_matrix,
    wraparound_distance,
)

from conftest import make_cfg


class TestWraparound:
    def test_coincident_points_leave_only_height(self):
        assert wraparound_distance((0.3, 0.4), (0.3, 0.4), 2.0, height_m=10.0) == pytest.approx(0.010)

    def test_wrap_is_shorter_across_the_edge(self):
        d = wraparound_distance((0.1, 0.1), (1.9, 1.9), 2.0)
        assert d == pytest.approx(np.sqrt(0.2**2 + 0.2**2), abs=1e-12)

    def test_mid_span_does_not_wrap(self):
        assert wraparound_distance((0.0, 0.0), (1.0, 0.0), 2.0) == pytest.approx(1.0)

    def test_torus_metric_properties(self, rng):
        side = 1.7
        pts = rng.uniform(0, side, size=(30, 3, 2))
        for a, b, c in pts:
            dab = wraparound_distance(a, b, side)
            dba = wraparound_distance(b, a, side)
            assert dab == pytest.approx(dba, rel=1e-12)
            assert dab <= wraparound_distance(a, c, side) + wraparound_distance(c, b, side) + 1e-12


class TestPathloss:
    def test_hand_evaluated_reference_point(self):
        # 10 m, no shadowing: 10^((-30.5 - 36.7*log10(10)) / 10) = 10^-6.72
        cfg = make_cfg()
        assert large_scale_coefficient(0.01, 0.0, cfg) == pytest.approx(1.9054607179632464e-07, rel=1e-12)

    def test_shadowing_is_exact_db(self):
        cfg = make_cfg()
        assert large_scale_coefficient(0.05, 10.0, cfg) == pytest.approx(
            10.0 * large_scale_coefficient(0.05, 0.0, cfg), rel=1e-12
        )

    def test_doubling_distance_factor(self):
        cfg = make_cfg()
        ratio = large_scale_coefficient(0.02, 0.0, cfg) / large_scale_coefficient(0.04, 0.0, cfg)
        assert ratio == pytest.approx(10 ** (36.7 * np.log10(2) / 10), rel=1e-12)
        assert ratio == pytest.approx(12.73, abs=5e-3)

    def test_zero_distance_rejected(self):
        with pytest.raises(ValueError):
            large_scale_coefficient(0.0, 0.0, make_cfg())


class TestCorrelation:
    def test_single_antenna_is_beta(self):
        R = spatial_correlation_matrix(np.array(0.37), np.array(0.5), 0.1, 1)
        assert R.shape == (1, 1)
        assert R[0, 0] == pytest.approx(0.37)

    def test_huge_spread_kills_offdiagonals(self):
        R = spatial_correlation_matrix(np.array(1.0), np.array(0.3), 1e3, 4)
        off = R - np.diag(np.diag(R))
        assert np.max(np.abs(off)) < 1e-12
        assert np.allclose(np.diag(R), 1.0)

    def test_psd_via_eigensolver_oracle(self):
        beta = 0.8
        R = spatial_correlation_matrix(np.array(beta), np.array(0.0), np.deg2rad(15.0), 4)
        assert np.allclose(R, R.conj().T)
        assert np.linalg.eigvalsh(R).min() >= -1e-12 * beta

    def test_trace_equals_n_beta(self, rng):
        beta = rng.uniform(0.1, 2.0, size=(5, 4))
        phi = rng.uniform(-np.pi, np.pi, size=(5, 4))
        R = spatial_correlation_matrix(beta, phi, np.deg2rad(20.0), 3)
        traces = np.real(np.trace(R, axis1=-2, axis2=-1))
        assert np.allclose(traces, 3 * beta, rtol=1e-12)


class TestPlacement:
    def test_positions_inside_square(self):
        cfg = make_cfg(area_side_km=2.0, num_aps=40, num_ues=25)
        topo = generate_topology(cfg, stream(7, 0, TOPOLOGY))
        for pos in (topo.ap_pos, topo.ue_pos):
            assert np.all(pos >= 0) and np.all(pos < 2.0)

    def test_different_seeds_move_everyone(self):
        cfg = make_cfg()
        a = generate_topology(cfg, stream(1, 0, TOPOLOGY))
        b = generate_topology(cfg, stream(2, 0, TOPOLOGY))
        assert not np.allclose(a.ap_pos, b.ap_pos)
        assert not np.allclose(a.ue_pos, b.ue_pos)

    def test_no_ues_is_a_valid_skeleton(self):
        # degenerate input for the placement op (a campaign config needs K >= 1)
        import dataclasses

        cfg = dataclasses.replace(make_cfg(), num_ues=0)
        topo = generate_topology(cfg, stream(1, 0, TOPOLOGY))
        assert topo.ue_pos.shape == (0, 2)
        assert topo.beta.shape == (0, cfg.num_aps)

    def test_beta_matches_trace_invariant(self):
        cfg = make_cfg(num_aps=6, num_ues=4, antennas_per_ap=3)
        topo = generate_topology(cfg, stream(3, 0, TOPOLOGY))
        traces = np.real(np.trace(topo.R, axis1=-2, axis2=-1))
        assert np.allclose(traces / cfg.antennas_per_ap, topo.beta, rtol=1e-9)


class TestSampling:
    def test_zero_covariance_gives_zero_channel(self):
        cfg = make_cfg(num_aps=2, num_ues=2)
        topo = generate_topology(cfg, stream(5, 0, TOPOLOGY))
        topo.R = np.zeros_like(topo.R)
        topo._R_sqrt = None
        h = sample_channels(topo, stream(5, 0, 1), batch=4)
        assert np.all(h == 0)

    def test_sample_covariance_oracle(self):
        cfg = make_cfg(num_aps=2, num_ues=2, antennas_per_ap=2)
        topo = generate_topology(cfg, stream(11, 0, TOPOLOGY))
        n = 100_000
        h = sample_channels(topo, stream(11, 0, 1), batch=n)
        k, l = 1, 0
        samples = h[:, k, l, :]
        emp = np.einsum("bm,bn->mn", samples, np.conj(samples)) / n
        R = topo.R[k, l]
        tol = 5.0 * np.sqrt(np.outer(np.diag(R).real, np.diag(R).real) / n)
        assert np.all(np.abs(emp - R) <= tol)

    def test_cross_ap_independence(self):
        cfg = make_cfg(num_aps=2, num_ues=1, antennas_per_ap=2)
        topo = generate_topology(cfg, stream(13, 0, TOPOLOGY))
        n = 100_000
        h = sample_channels(topo, stream(13, 0, 1), batch=n)
        cross = np.einsum("bm,bn->mn", h[:, 0, 0, :], np.conj(h[:, 0, 1, :])) / n
        tol = 5.0 * np.sqrt(
            np.outer(np.diag(topo.R[0, 0]).real, np.diag(topo.R[0, 1]).real) / n
        )
        assert np.all(np.abs(cross) <= tol)

    def test_whitened_samples_have_identity_covariance(self):
        cfg = make_cfg(num_aps=1, num_ues=1, antennas_per_ap=3, angular_spread_deg=40.0)
        topo = generate_topology(cfg, stream(17, 0, TOPOLOGY))
        n = 100_000
        h = sample_channels(topo, stream(17, 0, 1), batch=n)[:, 0, 0, :]
        R = topo.R[0, 0]
        vals, vecs = np.linalg.eigh(R)
        white = (vecs * (1.0 / np.sqrt(vals))) @ vecs.conj().T
        z = h @ white.T
        emp = z.T @ np.conj(z) / n
        assert np.all(np.abs(emp - np.eye(3)) <= 5.0 / np.sqrt(n))

    def test_non_psd_input_raises(self):
        R = np.array([[[[1.0 + 0j, 0], [0, -0.5]]]])
        with pytest.raises(np.linalg.LinAlgError):
            hermitian_sqrt(R)
