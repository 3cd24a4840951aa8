"""
Pytest configuration and shared fixtures for the geolocation pipeline tests.

Provides a hand-written measurement set small enough to reason about, a seeded
synthetic network, and the graphs and configs built from them.
"""

import pytest

from app.config import ModelConfig, Settings, SynthConfig, TrainConfig
from app.graph.builder import build_graph
from app.graph.paths import complete_paths, extract_paths
from app.measurement.io import serialize_landmarks, serialize_traceroutes, serialize_truth
from app.measurement.models import Hop, LandmarkRecord, TracerouteRecord
from app.measurement.synth import synth_network

PROBE_IP = "10.0.0.1"
R1, R2, R3 = "10.1.0.1", "10.1.0.2", "10.1.0.3"
L1, L2, L3 = "10.128.0.1", "10.128.0.2", "10.128.0.3"
T1 = "10.200.0.1"


def hops(*entries):
    """Build hops from ``(ip, rtt)`` pairs; ``None`` marks an anonymous hop."""
    return tuple(
        Hop(ttl=i) if entry is None else Hop(ttl=i, ip=entry[0], rtt_ms=entry[1])
        for i, entry in enumerate(entries, start=1)
    )


@pytest.fixture
def tiny_records():
    """
    Probe -> R1 -> {L1, R2 -> {L2, T1}}, plus R1 -> R3 -> L3.

    The second L2 record hides R2 behind an anonymous hop.
    """
    return [
        TracerouteRecord(L1, 0, hops((R1, 1.0), (L1, 1.6))),
        TracerouteRecord(L1, 1, hops((R1, 1.2), (L1, 1.5))),
        TracerouteRecord(L2, 0, hops((R1, 1.1), (R2, 2.0), (L2, 3.0))),
        TracerouteRecord(L2, 1, hops((R1, 1.3), None, (L2, 3.2))),
        TracerouteRecord(T1, 0, hops((R1, 1.0), (R2, 2.2), (T1, 2.5))),
        TracerouteRecord(L3, 0, hops((R1, 1.1), (R3, 4.0), (L3, 4.5))),
    ]


@pytest.fixture
def tiny_landmarks():
    return [
        LandmarkRecord(L1, 22.30, 114.10),
        LandmarkRecord(L2, 22.40, 114.20),
        LandmarkRecord(L3, 22.25, 113.95),
    ]


@pytest.fixture
def tiny_graph(tiny_records, tiny_landmarks):
    """Attributed graph of the hand-written measurement set."""
    completed = complete_paths(extract_paths(tiny_records))
    return build_graph(completed, tiny_landmarks, {T1}, tiny_records, PROBE_IP,
                       probe_location=(22.37, 114.09))


@pytest.fixture
def tiny_model_config():
    return ModelConfig(G=4, K=2, L=1, decoder="vanilla", seed=3)


@pytest.fixture
def synth_config():
    """Small synthetic network: 24 landmarks behind 6 routers, no anonymous hops."""
    return SynthConfig(n_landmarks=24, n_routers=6, repetitions=3, anonymity_prob=0.0, seed=11)


@pytest.fixture
def synth_data(synth_config):
    """(records, landmarks, truth) from the small synthetic network."""
    return synth_network(synth_config)


@pytest.fixture
def synth_graph(synth_data, synth_config):
    records, landmarks, truth = synth_data
    completed = complete_paths(extract_paths(records))
    return build_graph(completed, landmarks, set(), records, synth_config.probe_ip,
                       probe_location=truth[synth_config.probe_ip])


@pytest.fixture
def fast_train_config():
    """Short training schedule for a tiny model."""
    return TrainConfig(
        lr=0.01, weight_decay=0.0001, max_epochs=40, patience=40, seed=5,
        model=ModelConfig(G=4, K=2, L=1, decoder="bn_sigmoid", seed=5),
    )


@pytest.fixture
def synth_files(tmp_path, synth_data, synth_config):
    """Synthetic measurement set written to disk the way the synth command does."""
    records, landmarks, truth = synth_data
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    (data_dir / "traceroutes.jsonl").write_bytes(serialize_traceroutes(records))
    (data_dir / "landmarks.csv").write_bytes(serialize_landmarks(landmarks))
    (data_dir / "truth.csv").write_bytes(serialize_truth(truth))
    probe_lat, probe_lon = truth[synth_config.probe_ip]
    (data_dir / "probe.csv").write_bytes(
        f"ip,lat,lon\n{synth_config.probe_ip},{probe_lat!r},{probe_lon!r}\n".encode("utf-8")
    )
    return data_dir


@pytest.fixture
def test_settings():
    """Settings with defaults only."""
    return Settings()
