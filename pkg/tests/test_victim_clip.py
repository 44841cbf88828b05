"""CLIP adapter: construction errors offline, full behavior when cached.

The behavioral tests need the checkpoint in the local HF cache; without it
they skip rather than fail, and the error-path tests pin the offline
behavior.
"""

import numpy as np
import pytest

pytest.importorskip("torch")
pytest.importorskip("transformers")

from advsplat.errors import BackendUnavailableError
from advsplat.victim import ClassVocabulary
from advsplat.victim.clip_adapter import ClipVictim


@pytest.fixture
def vocab():
    return ClassVocabulary(labels=("apple", "hydrant", "mouse"))


def test_unfetchable_checkpoint_raises_backend_error(vocab, monkeypatch):
    monkeypatch.setenv("HF_HUB_OFFLINE", "1")
    monkeypatch.setenv("TRANSFORMERS_OFFLINE", "1")
    with pytest.raises(BackendUnavailableError, match="could not load"):
        ClipVictim(vocab, model_name="advsplat-test/does-not-exist")


def _cached_victim(vocab):
    try:
        return ClipVictim(vocab, device="cpu", verify_gradients=False)
    except BackendUnavailableError:
        pytest.skip("CLIP checkpoint not present in the local cache")


def test_predict_contract_when_cached(vocab, rng):
    victim = _cached_victim(vocab)
    image = rng.integers(0, 256, (victim.input_side, victim.input_side, 3))
    probs = victim.predict(image.astype(np.uint8))
    assert probs.shape == (3,)
    assert abs(probs.sum() - 1.0) <= 1e-5
    again = victim.predict(image.astype(np.uint8))
    assert np.array_equal(probs, again)


def test_gradient_contract_when_cached(vocab, rng):
    victim = _cached_victim(vocab)
    image = rng.integers(0, 256, (victim.input_side, victim.input_side, 3))
    loss, grad = victim.loss_and_gradient(image.astype(np.uint8), 1)
    assert np.isfinite(loss)
    assert grad.shape == image.shape
    assert np.any(grad)

    # spot finite-difference agreement on a few coordinates
    h = 0.5
    checked = agree = 0
    base = image.astype(np.float64)
    for _ in range(8):
        i, j, c = rng.integers(0, victim.input_side), \
            rng.integers(0, victim.input_side), rng.integers(0, 3)
        up = base.copy()
        up[i, j, c] += h
        down = base.copy()
        down[i, j, c] -= h
        fd = (victim.loss_and_gradient(up, 1)[0]
              - victim.loss_and_gradient(down, 1)[0]) / (2 * h)
        denom = max(abs(grad[i, j, c]), abs(fd), 1e-9)
        agree += abs(grad[i, j, c] - fd) / denom <= 5e-2  # float32 backbone
        checked += 1
    assert agree >= checked - 1
