"""
Tests for the delay-based baselines: SLG, Corr-SLG and MLP-Geo.
"""

import numpy as np
import pytest

from app.baselines.mlp_geo import encode_inputs, mlp_geo_predict, mlp_geo_train, tune_mlp_geo
from app.baselines.paths import PathIndex, closest_common_router, relative_delay
from app.baselines.slg import (
    CA_GRID, CB_GRID, CorrGroups, corr_slg_geolocate, slg_geolocate, tune_corr_slg,
)
from app.config import BaselineConfig, SynthConfig
from app.evaluation.metrics import error_stats
from app.graph.builder import build_graph
from app.graph.paths import complete_paths, extract_paths
from app.measurement.synth import synth_network
from app.utils.exceptions import InsufficientDataError, UnknownNodeError

from tests.conftest import L1, L2, L3, PROBE_IP, R1, R2, R3, T1


@pytest.fixture
def tiny_index(tiny_graph):
    return PathIndex.from_graph(tiny_graph)


@pytest.fixture
def synth_index(synth_graph):
    return PathIndex.from_graph(synth_graph)


@pytest.mark.unit
class TestPathIndex:
    """Test routing-path lookups and relative delay."""

    def test_paths_and_routers(self, tiny_index):
        assert tiny_index.path_of(T1) == (R1, R2)
        assert tiny_index.path_of(L1) == (R1,)
        assert tiny_index.path_of(PROBE_IP) == ()
        assert tiny_index.routers == (R1, R2, R3)
        assert tiny_index.destinations_via(R2) == [L2, T1]

    def test_unknown_ip(self, tiny_index):
        with pytest.raises(UnknownNodeError):
            tiny_index.path_of("10.9.9.9")

    def test_closest_common_router(self, tiny_index):
        """Test that the shared hop with the largest delay wins."""
        assert closest_common_router(T1, L2, tiny_index) == (R2, 2.0)
        assert closest_common_router(T1, L1, tiny_index) == (R1, 1.0)

    def test_probe_fallback(self, tiny_index):
        assert closest_common_router(T1, PROBE_IP, tiny_index) == (PROBE_IP, 0.0)

    def test_relative_delay(self, tiny_index):
        assert relative_delay(T1, L2, tiny_index) == pytest.approx(1.5)
        assert relative_delay(T1, L1, tiny_index) == pytest.approx(2.0)
        assert relative_delay(T1, L3, tiny_index) == pytest.approx(5.0)
        assert relative_delay(L2, L2, tiny_index) == 0.0


@pytest.mark.unit
class TestSlg:
    """Test shortest-relative-delay geolocation."""

    def test_nearest_landmark(self, tiny_index, tiny_landmarks):
        assert slg_geolocate(T1, tiny_landmarks, tiny_index) == (22.40, 114.20)

    def test_target_is_never_its_own_reference(self, tiny_index, tiny_landmarks):
        """Test that a landmark queried as target maps to another landmark."""
        assert slg_geolocate(L1, tiny_landmarks, tiny_index) == (22.40, 114.20)

    def test_matches_brute_force_argmin(self):
        """Test SLG against an exhaustive relative-delay search on random synthetic instances."""
        for seed in range(200):
            cfg = SynthConfig(n_landmarks=8, n_routers=4, repetitions=1, anonymity_prob=0.1, seed=seed)
            records, landmarks, _ = synth_network(cfg)
            graph = build_graph(complete_paths(extract_paths(records)), landmarks, set(), records, cfg.probe_ip)
            index = PathIndex.from_graph(graph)

            for target in landmarks:
                def brute(lm):
                    shared = set(index.hops[target.ip]) & set(index.hops[lm.ip])
                    d_pr = max((index.delays[ip] for ip in shared), default=0.0)
                    return (index.delays[target.ip] - d_pr) + (index.delays[lm.ip] - d_pr), lm.ip

                expected = min((lm for lm in landmarks if lm.ip != target.ip), key=brute).coord
                assert slg_geolocate(target.ip, landmarks, index) == expected, (seed, target.ip)

    def test_needs_landmarks(self, tiny_index):
        with pytest.raises(InsufficientDataError):
            slg_geolocate(T1, [], tiny_index)


@pytest.mark.unit
class TestCorrSlg:
    """Test correlation-grouped SLG."""

    def test_correlations(self, tiny_index, tiny_landmarks):
        """Test that delay and distance rise together for every tiny landmark."""
        groups = CorrGroups.compute(tiny_landmarks, tiny_index)

        for lm in tiny_landmarks:
            assert groups.correlations[lm.ip] == pytest.approx(1.0)
        assert [lm.ip for lm in groups.assign(0.5, -0.5)["A"]] == [L1, L2, L3]

    def test_group_a_uses_slg(self, tiny_index, tiny_landmarks):
        groups = CorrGroups(tiny_landmarks, {L1: 0.9, L2: 0.9, L3: 0.9})
        result = corr_slg_geolocate([T1], tiny_landmarks, tiny_index, 0.5, -0.5, groups)
        assert result[T1] == (22.40, 114.20)

    def test_group_b_uses_farthest(self, tiny_index, tiny_landmarks):
        groups = CorrGroups(tiny_landmarks, {L1: -0.9, L2: -0.9, L3: -0.9})
        result = corr_slg_geolocate([T1], tiny_landmarks, tiny_index, 0.5, -0.5, groups)
        assert result[T1] == (22.25, 113.95)

    def test_group_c_uses_centroid(self, tiny_index, tiny_landmarks):
        groups = CorrGroups(tiny_landmarks, {L1: 0.0, L2: 0.0, L3: 0.0})
        lat, lon = corr_slg_geolocate([T1], tiny_landmarks, tiny_index, 0.5, -0.5, groups)[T1]

        assert lat == pytest.approx((22.30 + 22.40 + 22.25) / 3)
        assert lon == pytest.approx((114.10 + 114.20 + 113.95) / 3)

    def test_tuning(self, synth_index, synth_data):
        """Test that tuning returns a grid point no worse than the first one."""
        _, landmarks, _ = synth_data
        train, val = landmarks[:16], landmarks[16:20]

        ca, cb, error = tune_corr_slg(train, val, synth_index)

        assert ca in CA_GRID and cb in CB_GRID
        first = corr_slg_geolocate([lm.ip for lm in val], train, synth_index, CA_GRID[0], CB_GRID[0])
        baseline = error_stats([first[lm.ip] for lm in val], [lm.coord for lm in val]).average_km
        assert error <= baseline + 1e-9

    def test_tuning_needs_validation(self, synth_index, synth_data):
        with pytest.raises(InsufficientDataError):
            tune_corr_slg(synth_data[1][:10], [], synth_index)


@pytest.mark.unit
class TestMlpGeo:
    """Test the MLP baseline."""

    def test_inputs(self, tiny_index):
        """Test the delay column followed by beta in every on-path router slot."""
        x = encode_inputs([T1, L3], tiny_index, beta=30.0)

        assert x.tolist() == [[2.5, 30.0, 30.0, 0.0], [4.5, 30.0, 0.0, 30.0]]

    def test_train_and_predict(self, synth_index, synth_data):
        _, landmarks, _ = synth_data
        labels = {lm.ip: lm.coord for lm in landmarks[:16]}
        val = {lm.ip: lm.coord for lm in landmarks[16:20]}
        config = BaselineConfig(method="mlp-geo", mlp_hidden=8, mlp_lr=0.01, mlp_epochs=20, seed=1)

        model = mlp_geo_train(synth_index, labels, config, val)
        targets = [lm.ip for lm in landmarks[20:]]
        predicted = mlp_geo_predict(model, targets, synth_index)

        assert 1 <= model.best_epoch <= 20
        assert len(model.history) == 20
        assert list(predicted) == targets
        assert all(np.isfinite(c).all() for c in predicted.values())

    def test_seeded(self, synth_index, synth_data):
        _, landmarks, _ = synth_data
        labels = {lm.ip: lm.coord for lm in landmarks[:16]}
        config = BaselineConfig(mlp_hidden=8, mlp_epochs=5, seed=1)

        a = mlp_geo_train(synth_index, labels, config)
        b = mlp_geo_train(synth_index, labels, config)

        assert all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)

    def test_needs_labels(self, synth_index):
        with pytest.raises(InsufficientDataError):
            mlp_geo_train(synth_index, {}, BaselineConfig())

    @pytest.mark.slow
    def test_tuning(self, synth_index, synth_data):
        _, landmarks, _ = synth_data
        labels = {lm.ip: lm.coord for lm in landmarks[:16]}
        val = {lm.ip: lm.coord for lm in landmarks[16:20]}

        model = tune_mlp_geo(synth_index, labels, val, BaselineConfig(mlp_epochs=5))

        assert model.best_val_error_km is not None
        assert model.hidden in (32, 64, 128, 256)
