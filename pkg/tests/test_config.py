"""Run configuration, seeding derivation, artifact container, scaling helpers."""

import numpy as np
import pytest

from lepus.artifact_io import (ArtifactError, arrays_digest, digest_of,
                               file_digest, load_artifact, save_artifact)
from lepus.config import RunConfig, component_seed, preset
from lepus.policy import obs_scale, squash, squash_grad


# ---------------------------------------------------------------------------
# config


def test_default_hyperparameters():
    cfg = RunConfig()
    assert cfg.rnd.iters == 200
    assert cfg.rnd.minibatch == 256
    assert cfg.rnd.lr == 1e-3
    assert cfg.rnd.v == 250000.0
    assert cfg.pretrain.dis_lr == 1e-4
    assert cfg.trainer.policy_lr == 1e-4
    assert cfg.trainer.q_lr == 1e-3
    assert cfg.trainer.batch == 32
    assert cfg.trainer.gamma == 0.99
    assert cfg.trainer.ell == 1e-3
    assert cfg.eval.rounds == 20


def test_presets():
    assert preset("desk3").scenario.n_agents == 3
    assert preset("desk4").scenario.n_agents == 4
    p3, p4 = preset("paper3"), preset("paper4")
    assert p3.pretrain.dis_iter == 20000
    assert p4.pretrain.dis_iter == 30000
    assert p3.scenario.lap_length == pytest.approx(2057.56)
    assert p3.expert.n_rounds == 1000
    assert p3.expert.max_steps_keep == 750
    with pytest.raises(ValueError):
        preset("nope")


def test_validate_catches_inconsistencies():
    cfg = RunConfig()
    cfg.validate()
    for mutate in (
        lambda c: setattr(c.scenario, "n_agents", 0),
        lambda c: setattr(c.scenario, "obs_dim", 5),
        lambda c: setattr(c.scenario, "spacing", 1000.0),
        lambda c: setattr(c.pretrain, "discriminator", "C"),
        lambda c: setattr(c.pretrain, "expert_fraction", 1.5),
        lambda c: setattr(c.trainer, "ell", 0.0),
    ):
        c = RunConfig()
        mutate(c)
        with pytest.raises(ValueError):
            c.validate()


def test_config_json_round_trip_preserves_digest(tmp_path):
    cfg = preset("desk4")
    cfg.expert.gains.angle_kp = 3.0
    p = tmp_path / "cfg.json"
    cfg.save_json(p)
    loaded = RunConfig.load_json(p)
    assert loaded.digest() == cfg.digest()
    assert loaded.expert.gains.angle_kp == 3.0


def test_digest_sensitive_to_any_field():
    a, b = RunConfig(), RunConfig()
    b.trainer.gamma = 0.98
    assert a.digest() != b.digest()


def test_component_seed_stable_and_distinct():
    s1 = component_seed(42, "rnd")
    s2 = component_seed(42, "rnd")
    s3 = component_seed(42, "expert")
    s4 = component_seed(43, "rnd")
    r = lambda s: np.random.default_rng(s).integers(0, 2**63)
    assert r(s1) == r(s2)
    assert r(s1) != r(s3)
    assert r(s1) != r(s4)


# ---------------------------------------------------------------------------
# artifact container


def test_artifact_round_trip_and_byte_identity(tmp_path):
    arrays = {"a": np.arange(12, dtype=np.float64).reshape(3, 4),
              "b": np.array([1, 2, 3], dtype=np.int64)}
    p1, p2 = tmp_path / "x1.lep", tmp_path / "x2.lep"
    save_artifact(p1, "test", arrays, {"k": 1})
    save_artifact(p2, "test", arrays, {"k": 1})
    assert file_digest(p1) == file_digest(p2)
    loaded, meta = load_artifact(p1, expect_kind="test")
    assert np.array_equal(loaded["a"], arrays["a"])
    assert loaded["b"].dtype == np.int64
    assert meta == {"k": 1}


def test_artifact_kind_and_magic_checks(tmp_path):
    p = tmp_path / "x.lep"
    save_artifact(p, "alpha", {"a": np.zeros(2)})
    with pytest.raises(ArtifactError):
        load_artifact(p, expect_kind="beta")
    p.write_bytes(b"NOTMAGIC" + p.read_bytes()[8:])
    with pytest.raises(ArtifactError):
        load_artifact(p)


def test_artifact_corruption_detected(tmp_path):
    p = tmp_path / "x.lep"
    save_artifact(p, "alpha", {"a": np.arange(100, dtype=np.float64)})
    raw = bytearray(p.read_bytes())
    raw[-4] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(ArtifactError, match="digest mismatch"):
        load_artifact(p)


def test_artifact_missing_file(tmp_path):
    with pytest.raises(ArtifactError):
        load_artifact(tmp_path / "absent.lep")


def test_digest_of_is_order_insensitive():
    assert digest_of({"a": 1, "b": 2}) == digest_of({"b": 2, "a": 1})
    assert digest_of({"a": 1}) != digest_of({"a": 2})


def test_arrays_digest_shape_sensitive():
    a = np.arange(6, dtype=np.float64)
    assert arrays_digest({"x": a}) != arrays_digest({"x": a.reshape(2, 3)})


# ---------------------------------------------------------------------------
# scaling and squashing helpers


def test_obs_scale_layout():
    s = obs_scale(65, 3)
    assert s[0] == 50.0
    assert np.all(s[1:3] == 1.0)
    assert np.all(s[3:22] == 100.0)
    assert np.all(s[22:24] == 200.0)
    assert np.all(s[24:] == 1.0)


def test_squash_ranges_and_grad():
    raw = np.random.default_rng(0).normal(size=(10, 3)) * 3
    a = squash(raw)
    assert np.all(np.abs(a[:, 0]) < 1)
    assert np.all((a[:, 1:] > 0) & (a[:, 1:] < 1))
    # finite-difference check of the elementwise derivative
    h = 1e-6
    fd = (squash(raw + h) - squash(raw - h)) / (2 * h)
    assert squash_grad(raw) == pytest.approx(fd, rel=1e-6, abs=1e-9)
