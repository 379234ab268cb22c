"""Checkpoint dump format: round trips, determinism, corruption handling."""

import numpy as np
import pytest

from aadg.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from aadg.controller import Controller
from aadg.nets import DomainClassifier, SegModel


def test_round_trip(tmp_path):
    arrays = {
        "a": np.arange(12, dtype=np.float64).reshape(3, 4),
        "b": np.array([1.5, -2.5]),
    }
    path = tmp_path / "dump.ckpt"
    save_checkpoint(path, arrays, "test", {"note": 7})
    loaded, kind, meta = load_checkpoint(path)
    assert kind == "test" and meta == {"note": 7}
    for k in arrays:
        assert np.array_equal(loaded[k], arrays[k])
        assert loaded[k].dtype == arrays[k].dtype


def test_byte_deterministic(tmp_path):
    arrays = {"w": np.random.default_rng(0).random((5, 5))}
    p1, p2 = tmp_path / "one.ckpt", tmp_path / "two.ckpt"
    save_checkpoint(p1, arrays, "test", {"x": 1})
    save_checkpoint(p2, arrays, "test", {"x": 1})
    assert p1.read_bytes() == p2.read_bytes()


def test_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_model_round_trips(tmp_path):
    rng = np.random.default_rng(1)
    x = rng.random((1, 3, 16, 16))

    model = SegModel(seed=5)
    model.save(tmp_path / "seg.ckpt")
    again = SegModel.load(tmp_path / "seg.ckpt")
    assert np.array_equal(model.predict_proba(x), again.predict_proba(x))

    clf = DomainClassifier(3, embedding_dim=16, seed=5)
    clf.save(tmp_path / "clf.ckpt")
    clf2 = DomainClassifier.load(tmp_path / "clf.ckpt")
    feats = rng.random((2, 32, 2, 2))
    _, logits, _ = clf.forward(feats)
    _, logits2, _ = clf2.forward(feats)
    assert np.array_equal(logits, logits2)

    ctrl = Controller(R=6, S=2, L=1, seed=5)
    ctrl.save(tmp_path / "ctrl.ckpt")
    ctrl2 = Controller.load(tmp_path / "ctrl.ckpt")
    p1, _ = ctrl.sample_policies(3, np.random.default_rng(9))
    p2, _ = ctrl2.sample_policies(3, np.random.default_rng(9))
    assert p1 == p2

    with pytest.raises(CheckpointError, match="expected"):
        SegModel.load(tmp_path / "ctrl.ckpt")
