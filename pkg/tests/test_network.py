import numpy as np
import pytest

from freqblend.dct import dct2
from freqblend.network import (
    ParserModel,
    backward,
    forward,
    forward_call_count,
    init_model,
    normalize_input,
    reset_forward_call_count,
)


def _zero_model(c=2):
    model = init_model(c, seed=0)
    for t in model.named_tensors().values():
        t[...] = 0.0
    return model


def test_init_deterministic_and_seed_sensitive():
    a = init_model(4, seed=1)
    b = init_model(4, seed=1)
    c = init_model(4, seed=2)
    for k, v in a.named_tensors().items():
        assert np.array_equal(v, b.named_tensors()[k])
    assert any(
        not np.array_equal(v, c.named_tensors()[k]) for k, v in a.named_tensors().items()
    )


def test_init_shapes():
    model = init_model(8, seed=0)
    nt = model.named_tensors()
    assert nt["enc0.w"].shape == (8, 3, 3, 3)
    assert nt["enc3.w"].shape == (64, 32, 3, 3)
    assert nt["sem0.w"].shape == (128, 64, 3, 3)
    assert nt["sem3.w"].shape == (4, 8, 3, 3)
    assert len(nt) == 32  # 16 conv layers, weights + bias each
    assert all(np.all(nt[k] == 0.0) for k in nt if k.endswith(".b"))


def test_normalize_input_values():
    v = np.array([[[0.0], [9.0]], [[-9.0], [99.0]]])
    out = normalize_input(v)
    assert out[0, 0, 0] == 0.0
    assert out[0, 1, 0] == pytest.approx(1.0)
    assert out[1, 0, 0] == pytest.approx(-1.0)
    assert out[1, 1, 0] == pytest.approx(2.0)


def test_forward_shapes_and_range():
    model = init_model(8, seed=0)
    x = np.random.default_rng(0).uniform(0, 255, (64, 64, 3))
    triple, cache = forward(model, dct2(x), record=True)
    assert cache.enc_pre[-1].shape == (64, 4, 4)
    for m in triple.maps().values():
        assert m.shape == (64, 64)
        assert np.all(m > 0.0) and np.all(m < 1.0)


def test_forward_zero_model_gives_half():
    model = _zero_model()
    freq = dct2(np.zeros((32, 32, 3)) + 0.0)
    triple, _ = forward(model, freq)
    for m in triple.maps().values():
        assert np.allclose(m, 0.5)


def test_forward_is_pure():
    model = init_model(2, seed=3)
    freq = dct2(np.random.default_rng(1).uniform(0, 255, (32, 32, 3)))
    t1, _ = forward(model, freq)
    t2, _ = forward(model, freq)
    for a, b in zip(t1.maps().values(), t2.maps().values()):
        assert np.array_equal(a, b)


def test_forward_rejects_bad_dims():
    model = init_model(2, seed=0)
    with pytest.raises(ValueError, match="divisible by 16"):
        forward(model, np.zeros((24, 32, 3)))
    with pytest.raises(ValueError):
        forward(model, np.zeros((32, 32, 2)))
    with pytest.raises(ValueError):
        forward(model, np.full((32, 32, 3), np.nan))


def test_forward_call_counter():
    model = init_model(2, seed=0)
    freq = dct2(np.zeros((16, 16, 3)))
    reset_forward_call_count()
    assert forward_call_count() == 0
    forward(model, freq)
    forward(model, freq)
    assert forward_call_count() == 2
    reset_forward_call_count()


def test_backward_zero_upstream_gives_zero_grads():
    model = init_model(2, seed=0)
    freq = dct2(np.random.default_rng(2).uniform(0, 255, (16, 16, 3)))
    _, cache = forward(model, freq, record=True)
    z = np.zeros((16, 16))
    grads = backward(model, cache, {"sem": z, "str": z, "noi": z})
    assert all(np.all(g == 0.0) for g in grads.values())


def test_backward_decoder_independence():
    model = init_model(2, seed=0)
    freq = dct2(np.random.default_rng(2).uniform(0, 255, (16, 16, 3)))
    _, cache = forward(model, freq, record=True)
    grads = backward(model, cache, {"sem": np.ones((16, 16))})
    assert all(np.all(grads[k] == 0.0) for k in grads if k.startswith(("str", "noi")))
    assert any(np.any(grads[k] != 0.0) for k in grads if k.startswith("sem"))
    assert any(np.any(grads[k] != 0.0) for k in grads if k.startswith("enc"))


def test_backward_requires_matching_cache():
    model = init_model(2, seed=0)
    other = init_model(2, seed=0)
    freq = dct2(np.zeros((16, 16, 3)))
    _, cache = forward(model, freq, record=True)
    with pytest.raises(ValueError):
        backward(other, cache, {})
    with pytest.raises(ValueError):
        backward(model, None, {})


def test_backward_matches_finite_differences_toy():
    # scalar loss: weighted sum of p_sem on a 16x16 toy, c=2
    model = init_model(2, seed=5)
    x = np.random.default_rng(6).uniform(0, 255, (16, 16, 3))
    freq = dct2(x)
    weight = np.random.default_rng(7).normal(size=(16, 16))

    def loss():
        t, _ = forward(model, freq)
        return float((t.p_sem * weight).sum())

    _, cache = forward(model, freq, record=True)
    grads = backward(model, cache, {"sem": weight})

    rng = np.random.default_rng(8)
    step = 1e-5
    for name, tensor in model.named_tensors().items():
        flat = tensor.reshape(-1)
        for idx in rng.choice(flat.size, size=min(6, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + step
            up = loss()
            flat[idx] = orig - step
            down = loss()
            flat[idx] = orig
            fd = (up - down) / (2 * step)
            a = grads[name].reshape(-1)[idx]
            assert abs(a - fd) / max(abs(a) + abs(fd), 1e-6) < 1e-5, name
