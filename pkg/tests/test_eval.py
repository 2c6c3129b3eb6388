"""Evaluation: stability metric, reference-table aggregation arithmetic,
report emission, ablation runner."""

import json

import numpy as np
import pytest

from lepus.evaluation import (EvalReport, RoundStats, ablation_run, aggregate,
                              emit_report, load_report, report_rows, run_rounds,
                              stability)
from lepus.sim import SimParams


# ---------------------------------------------------------------------------
# stability metric


def test_stability_reference_fixtures():
    assert stability(2036.56, 195.00) == pytest.approx(10.39, abs=0.01)
    assert stability(1813.42, 1.00) == pytest.approx(906.71, abs=0.01)


def test_stability_edge_cases():
    assert stability(100.0, 0.0) == 100.0
    assert stability(0.0, 5.0) == 0.0
    for bad in ((-1.0, 0.0), (1.0, -0.5)):
        with pytest.raises(ValueError):
            stability(*bad)


# ---------------------------------------------------------------------------
# reference-table aggregation (permanent numeric fixtures)


def _rounds_from_totals(distances, collisions, R):
    """R identical rounds whose per-agent totals hit the given numbers."""
    d = np.asarray(distances) / R
    c = np.asarray(collisions) // R
    assert np.all(c * R == np.asarray(collisions))
    return [RoundStats(d.copy(), c.copy(), "timeout", 100) for _ in range(R)]


def test_three_agent_table_aggregation():
    stats = _rounds_from_totals([41151.20, 41151.20, 39891.00],
                                [1480, 860, 1560], R=20)
    rep = aggregate(stats, n_agents=3)
    assert rep.avg_distance == pytest.approx(2036.56, abs=0.01)
    assert rep.avg_collisions == pytest.approx(195.00, abs=0.01)
    assert rep.stability == pytest.approx(10.39, abs=0.01)
    assert rep.agent_distances == pytest.approx([41151.20, 41151.20, 39891.00])
    assert rep.agent_collisions.tolist() == [1480, 860, 1560]


def test_four_agent_table_aggregation():
    stats = _rounds_from_totals([41151.20, 38716.80, 34600.00, 30605.60],
                                [20, 0, 0, 0], R=20)
    rep = aggregate(stats, n_agents=4)
    assert rep.avg_distance == pytest.approx(1813.42, abs=0.01)
    assert rep.avg_collisions == pytest.approx(1.00, abs=0.01)
    assert rep.stability == pytest.approx(906.71, abs=0.01)


def test_aggregate_max_distance_and_identity():
    stats = [RoundStats(np.array([10.0, 30.0]), np.array([1, 0]), "slow", 5),
             RoundStats(np.array([20.0, 10.0]), np.array([0, 1]), "slow", 5)]
    rep = aggregate(stats, n_agents=2)
    assert rep.avg_max_distance == pytest.approx(25.0)   # mean of per-round maxima
    assert rep.avg_distance == pytest.approx(70.0 / 4)
    assert rep.avg_collisions == pytest.approx(1.0)
    # metric identity holds in every emitted report
    assert rep.stability == pytest.approx(rep.avg_distance / (1 + rep.avg_collisions))


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate([], n_agents=2)


# ---------------------------------------------------------------------------
# evaluation rounds


def test_run_rounds_collision_counts_both_agents(track):
    # drive all agents straight at full throttle from equal spacing: no
    # contact; collisions stay zero and stats have the right shapes
    def policy(obs):
        return np.tile([0.0, 1.0, 0.0], (3, 1)) + np.array(
            [[-o[2] / 10 + o[1], 0.0, 0.0] for o in obs])

    stats = run_rounds(policy, track, 3, n_rounds=2, seed=4,
                       sim_params=SimParams(t_max=50, grace=100))
    assert len(stats) == 2
    for s in stats:
        assert s.distances.shape == (3,) and s.collisions.shape == (3,)
        assert np.all(s.distances >= 0)
        assert s.termination in ("timeout", "lap_complete", "off_track",
                                 "reverse", "slow")


def test_run_rounds_deterministic(track):
    policy = lambda obs: np.tile([0.0, 0.3, 0.0], (3, 1))
    p = SimParams(t_max=40, grace=100)
    a = run_rounds(policy, track, 3, 2, seed=9, sim_params=p)
    b = run_rounds(policy, track, 3, 2, seed=9, sim_params=p)
    for x, y in zip(a, b):
        assert np.array_equal(x.distances, y.distances)
        assert np.array_equal(x.collisions, y.collisions)


def test_run_rounds_validates_count(track):
    with pytest.raises(ValueError):
        run_rounds(lambda o: np.zeros((3, 3)), track, 3, 0, seed=0)


# ---------------------------------------------------------------------------
# report emission


def sample_report():
    return EvalReport(n_agents=2, n_rounds=3,
                      agent_distances=np.array([100.0, 200.0]),
                      agent_collisions=np.array([2, 4]),
                      avg_distance=50.0, avg_max_distance=70.0,
                      avg_collisions=2.0, stability=50.0 / 3.0,
                      extra={"note": "x"})


def test_report_round_trip_bitwise(tmp_path):
    rep = sample_report()
    emit_report(rep, tmp_path / "r")
    first_json = (tmp_path / "r.json").read_bytes()
    first_csv = (tmp_path / "r.csv").read_bytes()
    emit_report(rep, tmp_path / "r")
    assert (tmp_path / "r.json").read_bytes() == first_json
    assert (tmp_path / "r.csv").read_bytes() == first_csv
    loaded = load_report(tmp_path / "r.json")
    assert loaded.stability == rep.stability
    assert np.array_equal(loaded.agent_distances, rep.agent_distances)
    assert loaded.extra == rep.extra


def test_report_csv_row_count(tmp_path):
    rep = sample_report()
    emit_report(rep, tmp_path / "r")
    lines = [l for l in (tmp_path / "r.csv").read_text().splitlines() if l]
    assert len(lines) == rep.n_agents * 2 + 4
    rows = report_rows(rep)
    assert rows[-1] == ("Stability", rep.stability)
    assert rows[0][0] == "Agent-1 Distance"


# ---------------------------------------------------------------------------
# ablation runner


def test_ablation_run_reports_and_deltas(tmp_path):
    def train_and_eval(name, variant, seed):
        rep = sample_report()
        rep.stability = float(variant["s"] + seed * 0.0)
        return rep

    index = ablation_run({"a": {"s": 5.0}, "b": {"s": 2.0}}, [1, 2],
                         tmp_path / "abl", train_and_eval)
    assert set(index["variants"]) == {"a", "b"}
    assert index["variants"]["a"]["mean_stability"] == 5.0
    assert index["stability_deltas"]["a - b"] == pytest.approx(3.0)
    on_disk = json.loads((tmp_path / "abl" / "index.json").read_text())
    assert on_disk == index
    for name in ("a", "b"):
        for seed in (1, 2):
            assert (tmp_path / "abl" / f"{name}_seed{seed}.json").exists()


def test_ablation_requires_two_variants(tmp_path):
    with pytest.raises(ValueError):
        ablation_run({"only": {}}, [0], tmp_path, lambda *a: sample_report())
