"""Dense and GRU forward/backward, Adam, and the tensor checkpoint format."""

import numpy as np
import pytest

from ampsizer.nn import (
    CHECKPOINT_MAGIC,
    GRU_KEYS,
    AdamState,
    adam_step,
    dense_backward,
    dense_forward,
    gru_step,
    gru_step_backward,
    gru_view,
    init_dense,
    init_gru,
    init_uniform,
    load_tensors,
    save_tensors,
)


def _fd(f, arr, h=1e-6):
    """Central finite differences of scalar f with respect to arr, in place."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        fp = f()
        arr[idx] = old - h
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


# -- dense layers ---------------------------------------------------------------


def test_dense_identity_hand_case():
    W = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([0.5, -0.5])
    y, cache = dense_forward(W, b, np.array([1.0, 1.0]), "identity")
    assert np.allclose(y, [3.5, 6.5], rtol=0, atol=0)
    dW, db, dx = dense_backward(cache, np.array([1.0, 2.0]))
    assert np.array_equal(db, [1.0, 2.0])
    assert np.array_equal(dW, [[1.0, 1.0], [2.0, 2.0]])
    assert np.array_equal(dx, [1.0 * 1 + 2.0 * 3, 1.0 * 2 + 2.0 * 4])


def test_dense_activations():
    W = np.array([[1.0, 0.0], [0.0, -1.0]])
    b = np.zeros(2)
    x = np.array([2.0, 3.0])
    relu, _ = dense_forward(W, b, x, "relu")
    assert np.array_equal(relu, [2.0, 0.0])
    tanh, _ = dense_forward(W, b, x, "tanh")
    assert np.allclose(tanh, np.tanh([2.0, -3.0]), rtol=1e-15)
    zero, _ = dense_forward(W, b, np.zeros(2), "tanh")
    assert np.array_equal(zero, [0.0, 0.0])
    with pytest.raises(ValueError, match="unknown activation"):
        dense_forward(W, b, x, "gelu")
    with pytest.raises(ValueError, match="input dim"):
        dense_forward(W, b, np.zeros(3), "tanh")


def test_dense_batch_matches_single():
    rng = np.random.default_rng(3)
    W = rng.normal(size=(4, 3))
    b = rng.normal(size=4)
    X = rng.normal(size=(5, 3))
    batch, cache = dense_forward(W, b, X, "tanh")
    for i in range(5):
        single, _ = dense_forward(W, b, X[i], "tanh")
        assert np.allclose(batch[i], single, rtol=1e-12, atol=1e-15)
    dY = rng.normal(size=(5, 4))
    dW, db, dX = dense_backward(cache, dY)
    assert dX.shape == X.shape
    total_dW = np.zeros_like(W)
    for i in range(5):
        _, c = dense_forward(W, b, X[i], "tanh")
        dWi, dbi, dxi = dense_backward(c, dY[i])
        total_dW += dWi
        assert np.allclose(dxi, dX[i], rtol=1e-12, atol=1e-15)
    assert np.allclose(dW, total_dW, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("activation", ["identity", "relu", "tanh"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_dense_backward_matches_finite_differences(activation, seed):
    rng = np.random.default_rng(seed)
    n_in, n_out = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    W = rng.normal(size=(n_out, n_in))
    b = rng.normal(size=n_out)
    x = rng.normal(size=n_in)
    t = rng.normal(size=n_out)

    def loss():
        y, _ = dense_forward(W, b, x, activation)
        return float(np.sum(y * t))

    y, cache = dense_forward(W, b, x, activation)
    dW, db, dx = dense_backward(cache, t)
    np.testing.assert_allclose(dW, _fd(loss, W), rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(db, _fd(loss, b), rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(dx, _fd(loss, x), rtol=1e-4, atol=1e-6)


# -- GRU -----------------------------------------------------------------------


def _zero_gru(hidden, n_in):
    shapes = {"W": (hidden, n_in), "U": (hidden, hidden), "b": (hidden,)}
    return {
        f"{kind}{gate}": np.zeros(shapes[kind])
        for gate in ("z", "r", "h")
        for kind in ("W", "U", "b")
    }


def test_gru_zero_weights_halve_state():
    weights = _zero_gru(3, 2)
    h = np.array([0.4, -0.8, 1.0])
    h_next, _ = gru_step(weights, h, np.array([5.0, -5.0]))
    assert np.allclose(h_next, 0.5 * h, rtol=0, atol=1e-15)


def test_gru_state_stays_in_hull():
    rng = np.random.default_rng(17)
    weights = {k: rng.normal(size=v.shape) for k, v in _zero_gru(4, 3).items()}
    h = rng.uniform(-1.0, 1.0, 4)
    for _ in range(50):
        h, _ = gru_step(weights, h, rng.normal(size=3))
        assert np.all(np.abs(h) <= 1.0 + 1e-12)


def test_gru_batch_matches_single():
    rng = np.random.default_rng(23)
    weights = {k: rng.normal(size=v.shape) for k, v in _zero_gru(4, 3).items()}
    H = rng.uniform(-1, 1, size=(5, 4))
    X = rng.normal(size=(5, 3))
    batch, _ = gru_step(weights, H, X)
    for i in range(5):
        single, _ = gru_step(weights, H[i], X[i])
        assert np.allclose(batch[i], single, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gru_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    hidden, n_in = int(rng.integers(2, 5)), int(rng.integers(2, 5))
    weights = {
        k: rng.normal(size=v.shape, scale=0.7)
        for k, v in _zero_gru(hidden, n_in).items()
    }
    h = rng.uniform(-0.9, 0.9, hidden)
    x = rng.normal(size=n_in)
    t = rng.normal(size=hidden)

    def loss():
        h_next, _ = gru_step(weights, h, x)
        return float(np.sum(h_next * t))

    _, cache = gru_step(weights, h, x)
    grads, dh_prev, dx = gru_step_backward(cache, t)
    assert set(grads) == set(GRU_KEYS)
    for key in GRU_KEYS:
        np.testing.assert_allclose(
            grads[key], _fd(loss, weights[key]), rtol=1e-4, atol=1e-6, err_msg=key
        )
    np.testing.assert_allclose(dh_prev, _fd(loss, h), rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(dx, _fd(loss, x), rtol=1e-4, atol=1e-6)


# -- Adam ---------------------------------------------------------------------


def test_adam_first_step_is_signed_learning_rate():
    state = AdamState(lr=1e-3)
    w = {"w": np.array([1.0, -2.0, 3.0])}
    g = {"w": np.array([0.5, -4.0, 1e-3])}
    before = w["w"].copy()
    adam_step(state, w, g)
    delta = w["w"] - before
    assert state.t == 1
    # first step: m-hat = g, v-hat = g^2, so the move is lr * sign(g)
    np.testing.assert_allclose(np.abs(delta), 1e-3, rtol=1e-5)
    assert np.all(np.sign(delta) == -np.sign(g["w"]))


def test_adam_zero_gradient_is_identity():
    state = AdamState()
    w = {"w": np.array([1.0, 2.0])}
    adam_step(state, w, {"w": np.zeros(2)})
    assert np.array_equal(w["w"], [1.0, 2.0])


def test_adam_updates_only_given_keys():
    state = AdamState(lr=0.1)
    w = {"a": np.array([1.0]), "b": np.array([1.0])}
    adam_step(state, w, {"a": np.array([1.0])})
    assert w["a"][0] != 1.0
    assert w["b"][0] == 1.0
    assert "b" not in state.m


def test_adam_shape_mismatch():
    state = AdamState()
    with pytest.raises(ValueError, match="shape"):
        adam_step(state, {"w": np.zeros(2)}, {"w": np.zeros(3)})


def test_adam_state_round_trips_through_tensors(tmp_path):
    state = AdamState(lr=1e-2)
    w = {"w": np.ones(3), "b": np.zeros(2)}
    rng = np.random.default_rng(9)
    for _ in range(5):
        adam_step(state, w, {"w": rng.normal(size=3), "b": rng.normal(size=2)})
    path = tmp_path / "adam.bin"
    save_tensors(path, state.tensors(prefix="opt."))
    loaded = AdamState(lr=1e-2)
    loaded.load_tensors(load_tensors(path), prefix="opt.")
    assert loaded.t == state.t == 5
    for key in state.m:
        assert np.array_equal(loaded.m[key], state.m[key])
        assert np.array_equal(loaded.v[key], state.v[key])
    w2 = {k: v.copy() for k, v in w.items()}
    g = {"w": rng.normal(size=3), "b": rng.normal(size=2)}
    adam_step(state, w, g)
    adam_step(loaded, w2, g)
    assert np.array_equal(w["w"], w2["w"])
    assert np.array_equal(w["b"], w2["b"])


# -- initializers -----------------------------------------------------------------


def test_init_uniform_bounds_and_determinism():
    a = init_uniform(np.random.default_rng(42), (100, 16), 16)
    b = init_uniform(np.random.default_rng(42), (100, 16), 16)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) <= 1.0 / 4.0)
    assert np.std(a) > 0.05


def test_init_dense_and_gru_keys():
    rng = np.random.default_rng(0)
    dense = init_dense(rng, 4, 8, "layer0")
    assert set(dense) == {"layer0.W", "layer0.b"}
    assert dense["layer0.W"].shape == (4, 8)
    assert dense["layer0.b"].shape == (4,)
    gru = init_gru(rng, 16, 8, "enc")
    assert set(gru) == {f"enc.{k}" for k in GRU_KEYS}
    assert gru["enc.Uz"].shape == (16, 16)
    view = gru_view(gru, "enc")
    assert set(view) == set(GRU_KEYS)
    assert view["Wh"] is gru["enc.Wh"]


# -- checkpoint format ----------------------------------------------------------------


def test_tensor_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    tensors = {
        "actor.enc.Wz": rng.normal(size=(8, 3)),
        "b": rng.normal(size=5),
        "scalar": np.array([3.25]),
        "empty": np.zeros((0, 4)),
    }
    path = tmp_path / "weights.bin"
    save_tensors(path, tensors)
    with open(path, "rb") as fh:
        assert fh.read(len(CHECKPOINT_MAGIC)) == CHECKPOINT_MAGIC
    loaded = load_tensors(path)
    assert set(loaded) == set(tensors)
    for key, val in tensors.items():
        assert loaded[key].shape == np.asarray(val).shape
        assert np.array_equal(loaded[key], val)
        assert loaded[key].dtype == np.float64


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"PNG\x00\x01\x02\x03\x04 not a checkpoint")
    with pytest.raises(ValueError, match="not a weight checkpoint"):
        load_tensors(path)


def test_checkpoint_bytes_are_deterministic(tmp_path):
    tensors = {"w": np.linspace(0, 1, 7), "u": np.eye(3)}
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_tensors(p1, tensors)
    save_tensors(p2, dict(tensors))
    assert p1.read_bytes() == p2.read_bytes()
