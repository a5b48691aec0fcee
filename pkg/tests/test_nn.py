import math

import numpy as np
import pytest

from vmsr.nn import (GruSpec, GumbelSample, MlpSpec, ParamStore, adam_step,
                     check_gradients, cross_entropy, glorot, gru_init,
                     gru_step, gru_step_backward, gumbel_softmax,
                     gumbel_softmax_backward, linear_backward, linear_forward,
                     linear_init, load_checkpoint, mlp_backward, mlp_forward,
                     mlp_init, one_hot, sample_gumbel, save_checkpoint,
                     softmax)


def f64_store():
    return ParamStore(dtype=np.float64)


# --------------------------------------------------------------------- MLP

def test_zero_weight_linear_gives_zero():
    store = ParamStore()
    spec = MlpSpec((5, 3))
    rng = np.random.default_rng(0)
    mlp_init(spec, store, "m", rng)
    store.params["m.l0.w"][...] = 0.0
    y, _ = mlp_forward(spec, store, "m", np.ones((2, 5), dtype=np.float32))
    assert np.allclose(y, 0.0)


def test_identity_linear_layer():
    store = ParamStore()
    spec = MlpSpec((4, 4))
    mlp_init(spec, store, "m", np.random.default_rng(0))
    store.params["m.l0.w"][...] = np.eye(4, dtype=np.float32)
    x = np.random.default_rng(1).normal(size=(3, 4)).astype(np.float32)
    y, _ = mlp_forward(spec, store, "m", x)
    assert np.allclose(y, x)


def test_mlp_shape_mismatch():
    store = ParamStore()
    spec = MlpSpec((4, 2))
    mlp_init(spec, store, "m", np.random.default_rng(0))
    with pytest.raises(ValueError):
        mlp_forward(spec, store, "m", np.zeros((1, 5)))


@pytest.mark.parametrize("seed", range(5))
def test_mlp_gradcheck(seed):
    rng = np.random.default_rng(seed)
    widths = (3, int(rng.integers(2, 6)), int(rng.integers(2, 6)), 2)
    spec = MlpSpec(widths)
    store = f64_store()
    mlp_init(spec, store, "m", rng, zero_output=False)
    x = rng.normal(size=(4, widths[0]))
    targets = rng.integers(widths[-1], size=4)

    def loss_fn():
        store.zero_grads()
        y, cache = mlp_forward(spec, store, "m", x)
        losses, dlogits = cross_entropy(y, targets)
        mlp_backward(spec, store, "m", cache, dlogits / len(x))
        return float(losses.mean())

    assert check_gradients(loss_fn, store) < 1e-4


# --------------------------------------------------------------------- GRU

def test_gru_zero_params_zero_hidden():
    spec = GruSpec(3, 4)
    store = ParamStore()
    gru_init(spec, store, "g", np.random.default_rng(0))
    for name in store.params:
        store.params[name][...] = 0.0
    h, _ = gru_step(spec, store, "g", np.ones((2, 3), dtype=np.float32),
                    np.zeros((2, 4), dtype=np.float32))
    assert np.allclose(h, 0.0)


def test_gru_hidden_bounded():
    spec = GruSpec(5, 8)
    store = ParamStore()
    rng = np.random.default_rng(1)
    gru_init(spec, store, "g", rng)
    h = np.zeros((4, 8), dtype=np.float32)
    for _ in range(50):
        x = rng.normal(scale=3.0, size=(4, 5)).astype(np.float32)
        h, _ = gru_step(spec, store, "g", x, h)
        assert (np.abs(h) < 1.0).all()


@pytest.mark.parametrize("seed", range(4))
def test_gru_gradcheck_through_unrolled_steps(seed):
    rng = np.random.default_rng(100 + seed)
    spec = GruSpec(3, 4)
    store = f64_store()
    gru_init(spec, store, "g", rng)
    linear_init(store, "head", 4, 2, rng)
    xs = rng.normal(size=(5, 2, 3))
    targets = rng.integers(2, size=2)

    def loss_fn():
        store.zero_grads()
        h = np.zeros((2, 4))
        caches = []
        for t in range(5):
            h, c = gru_step(spec, store, "g", xs[t], h)
            caches.append(c)
        y, lin_cache = linear_forward(store, "head", h)
        losses, dlogits = cross_entropy(y, targets)
        dh = linear_backward(store, "head", lin_cache, dlogits / 2.0)
        for c in reversed(caches):
            _, dh = gru_step_backward(spec, store, "g", c, dh)
        return float(losses.mean())

    assert check_gradients(loss_fn, store) < 1e-4


# ----------------------------------------------------------- cross entropy

def test_uniform_logits_loss_is_ln4():
    losses, _ = cross_entropy(np.zeros((1, 4)), np.array([2]))
    assert losses[0] == pytest.approx(math.log(4.0), abs=1e-6)


def test_confident_logits_loss_near_zero():
    logits = np.array([[30.0, 0.0, 0.0, 0.0]])
    losses, _ = cross_entropy(logits, np.array([0]))
    assert losses[0] < 1e-8


def test_cross_entropy_gradient_formula():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(6, 4))
    targets = rng.integers(4, size=6)
    _, dlogits = cross_entropy(logits, targets)
    expected = softmax(logits) - one_hot(targets, 4, dtype=np.float64)
    assert np.allclose(dlogits, expected, atol=1e-12)


def test_softmax_simplex():
    rng = np.random.default_rng(5)
    p = softmax(rng.normal(scale=10, size=(100, 7)))
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert (p > 0).all()


# ---------------------------------------------------------- Gumbel-Softmax

def test_gumbel_dominant_logit_wins():
    rng = np.random.default_rng(0)
    logits = np.array([10.0, -10.0, -10.0, -10.0])
    wins = 0
    for _ in range(2000):
        s = gumbel_softmax(logits, 1.0, rng)
        wins += int(s.hard.argmax() == 0)
    # Gumbel-max: P(argmax=0) = softmax(logits)[0] = 1 / (1 + 3 e^-20)
    assert wins == 2000


def test_gumbel_equal_logits_uniform():
    rng = np.random.default_rng(1)
    counts = np.zeros(4)
    n = 10000
    for _ in range(n):
        s = gumbel_softmax(np.zeros(4), 1.0, rng)
        counts[s.hard.argmax()] += 1
    sigma = math.sqrt(n * 0.25 * 0.75)
    assert (np.abs(counts - n * 0.25) < 3 * sigma).all()


def test_gumbel_low_temperature_spikes():
    rng = np.random.default_rng(2)
    s = gumbel_softmax(np.array([0.5, 0.1, -0.3, 0.0]), 0.01, rng)
    assert s.soft.max() > 0.99


def test_gumbel_hard_is_one_hot_and_grad_matches_soft():
    rng = np.random.default_rng(3)
    s = gumbel_softmax(np.array([[0.3, 0.8, -0.2]]), 0.7, rng)
    assert set(np.unique(s.hard)) <= {0.0, 1.0}
    assert s.hard.sum() == 1.0
    dout = np.array([[0.2, -0.4, 1.0]])
    # straight-through: the gradient is the soft sample's gradient regardless
    # of whether the consumer saw hard or soft
    g = gumbel_softmax_backward(s, dout)
    soft = s.soft
    expected = soft * (dout - (dout * soft).sum(axis=-1, keepdims=True)) / 0.7
    assert np.allclose(g, expected)


def test_gumbel_rejects_bad_inputs():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        gumbel_softmax(np.array([np.nan, 0.0]), 1.0, rng)
    with pytest.raises(ValueError):
        gumbel_softmax(np.zeros(3), 0.0, rng)


def test_gumbel_st_path_gradcheck():
    # check d(loss)/d(logits) through the relaxed sample with frozen noise
    rng = np.random.default_rng(7)
    logits0 = rng.normal(size=(2, 4))
    noise = sample_gumbel(rng, logits0.shape)
    w = rng.normal(size=(4, 3))
    targets = np.array([0, 2])
    store = f64_store()
    store.add("logits", logits0)

    def loss_fn():
        store.zero_grads()
        s = gumbel_softmax(store.params["logits"], 0.8, rng, noise=noise)
        y = s.soft @ w
        losses, dlogits = cross_entropy(y, targets)
        dsample = (dlogits / 2.0) @ w.T
        store.grads["logits"] += gumbel_softmax_backward(s, dsample)
        return float(losses.mean())

    assert check_gradients(loss_fn, store) < 1e-3


# ------------------------------------------------------------------- Adam

def test_adam_zero_gradient_no_change():
    store = ParamStore()
    store.add("p", np.array([1.0, -2.0], dtype=np.float32))
    before = store.params["p"].copy()
    adam_step(store, lr=0.1)
    assert np.array_equal(store.params["p"], before)


def test_adam_constant_gradient_step_magnitude_approaches_lr():
    store = ParamStore(dtype=np.float64)
    store.add("p", np.array([0.0]))
    lr = 0.001
    for _ in range(200):
        prev = store.params["p"].copy()
        store.grads["p"][...] = 3.7
        adam_step(store, lr=lr)
    delta = abs(float(store.params["p"][0] - prev[0]))
    assert delta == pytest.approx(lr, rel=1e-3)


def test_adam_default_lr_signature():
    import inspect
    sig = inspect.signature(adam_step)
    assert sig.parameters["lr"].default == 0.001
    assert sig.parameters["beta1"].default == 0.9
    assert sig.parameters["beta2"].default == 0.999
    assert sig.parameters["eps"].default == 1e-8


# ------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    params = {
        "policy.gru.wx": rng.normal(size=(36, 192)).astype(np.float32),
        "encoder.head.b": rng.normal(size=(4,)).astype(np.float32),
        "scalarish": rng.normal(size=(1,)).astype(np.float32),
    }
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert set(loaded) == set(params)
    for k in params:
        assert loaded[k].dtype == np.float32
        assert np.array_equal(loaded[k], params[k])
    # saving the loaded dict again produces identical bytes
    path2 = tmp_path / "model2.ckpt"
    save_checkpoint(path2, loaded)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_magic_enforced(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(p)


def test_store_load_values_shape_check():
    store = ParamStore()
    store.add("a", np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(ValueError):
        store.load_values({"a": np.zeros((3, 2))})
    with pytest.raises(KeyError):
        store.load_values({"b": np.zeros((2, 2))})
