import numpy as np
import pytest
from oracles import central_diff

from boundaryloss import CacheError, FormatError, NonFiniteGradient, ShapeError
from boundaryloss.levelset import signed_distance
from boundaryloss.losses import (
    boundary_distance,
    boundary_loss,
    combined,
    focal,
    gdl,
    hausdorff_loss,
    region_distance,
    weighted_ce,
)
from boundaryloss.model import (
    AdamState,
    PlateauHalver,
    TinySegNet,
    adam_step,
    backward,
    forward,
    load_checkpoint,
    lr_on_plateau,
    save_checkpoint,
)


def test_zero_weights_give_half():
    net = TinySegNet(1, zero=True)
    s, _ = net.forward(np.random.default_rng(0).random((2, 8, 8)))
    assert np.all(s == 0.5)


def test_prior_bias():
    net = TinySegNet(1, seed=0, prior=0.01)
    assert net.params["conv5.b"][1] == pytest.approx(np.log(0.01 / 0.99))
    with pytest.raises(ValueError):
        TinySegNet(1, prior=1.0)


def test_determinism_and_channel_sums():
    x = np.random.default_rng(1).random((3, 8, 10, 2))
    a = TinySegNet(2, seed=7).predict_channels(x)
    b = TinySegNet(2, seed=7).predict_channels(x)
    assert a.tobytes() == b.tobytes()
    assert a.shape == (3, 8, 10, 2)
    np.testing.assert_allclose(a.sum(-1), 1.0, atol=1e-6)
    assert np.all((a >= 0) & (a <= 1))


@pytest.mark.parametrize("shape", [(2, 7, 8, 1), (2, 8, 8, 3), (8, 8)])
def test_input_errors(shape):
    with pytest.raises(ShapeError):
        TinySegNet(1).forward(np.zeros(shape))


def test_stale_cache():
    net = TinySegNet(1)
    s, cache = net.forward(np.zeros((1, 4, 4)))
    net.mark_updated()
    with pytest.raises(CacheError):
        net.backward(cache, np.ones_like(s))
    with pytest.raises(CacheError):
        net.backward(None, np.ones_like(s))


def test_zero_upstream_and_linearity():
    rng = np.random.default_rng(2)
    net = TinySegNet(1, seed=3)
    x = rng.random((2, 8, 8))
    s, cache = forward(net, x)
    zero = backward(net, cache, np.zeros_like(s))
    assert all(not v.any() for v in zero.values())
    g1, g2 = rng.standard_normal(s.shape), rng.standard_normal(s.shape)
    a, b, ab = (backward(net, cache, g) for g in (g1, g2, g1 + g2))
    for k in ab:
        np.testing.assert_allclose(ab[k], a[k] + b[k], rtol=1e-12, atol=1e-14)


def _end_to_end(loss_fn, seed=0, sample=None):
    """Max per-tensor relative error of parameter gradients of loss(forward(x))."""
    rng = np.random.default_rng(seed)
    net = TinySegNet(1, seed=seed, dtype=np.float64)
    x = rng.random((2, 8, 8, 1))
    g = np.zeros((2, 8, 8))
    for i in range(2):
        while not g[i].any():
            g[i] = (rng.random((8, 8)) > 0.7).astype(float)

    def total(s):
        return sum(loss_fn(s[i], g[i], i) for i in range(2))

    s, cache = net.forward(x)
    grad_s = np.stack([loss_fn(s[i], g[i], i, grad=True) for i in range(2)])
    analytic = net.backward(cache, grad_s)
    worst = 0.0
    for k, p in net.params.items():
        idx = np.arange(p.size) if sample is None else rng.choice(p.size, min(sample, p.size), replace=False)
        num = np.empty(len(idx))
        for j, i in enumerate(idx):
            old = p.flat[i]
            p.flat[i] = old + 1e-6
            fp = total(net.forward(x, keep_cache=False)[0])
            p.flat[i] = old - 1e-6
            fm = total(net.forward(x, keep_cache=False)[0])
            p.flat[i] = old
            num[j] = (fp - fm) / 2e-6
        a = analytic[k].ravel()[idx]
        err = np.abs(a - num).max() / max(np.abs(a).max(), np.abs(num).max(), 1e-12)
        worst = max(worst, err)
    return worst


def _wrap(fn):
    def loss(s, g, i, grad=False):
        r = fn(s, g, i)
        return r.grad if grad else r.value
    return loss


def end_to_end_losses(seed=0):
    """Loss callables for the end-to-end check.

    The Hausdorff prediction map is computed once from the unperturbed
    output and then held fixed, matching how the loss treats it.
    """
    rng = np.random.default_rng(seed)
    net = TinySegNet(1, seed=seed, dtype=np.float64)
    s0, _ = net.forward(rng.random((2, 8, 8, 1)))
    ds = [region_distance(s0[i] >= 0.5) for i in range(2)]
    return {
        "boundary": _wrap(lambda s, g, i: boundary_loss(s, signed_distance(g))),
        "gdl": _wrap(lambda s, g, i: gdl(s, g)),
        "weighted_ce": _wrap(lambda s, g, i: weighted_ce(s, g, boundary_distance(g))),
        "focal": _wrap(lambda s, g, i: focal(s, g, 2.0)),
        "hausdorff": _wrap(lambda s, g, i: hausdorff_loss(s, g, 2.0, dist_s=ds[i])),
        "combined": _wrap(lambda s, g, i: combined(s, g, signed_distance(g), "gdl", (0.99, 0.01))),
    }


def test_end_to_end_every_parameter_boundary():
    assert _end_to_end(end_to_end_losses()["boundary"]) <= 1e-5


@pytest.mark.parametrize("name", ["gdl", "weighted_ce", "focal", "hausdorff", "combined"])
def test_end_to_end_sampled(name):
    assert _end_to_end(end_to_end_losses()[name], sample=40) <= 1e-5


def test_adam_first_step():
    params = {"w": np.array([0.5])}
    state = AdamState()
    adam_step(state, params, {"w": np.array([1.0])})
    # bias corrections cancel: update = -lr * 1 / (1 + eps)
    assert params["w"][0] == pytest.approx(0.5 - 1e-3 / (1 + 1e-8), abs=1e-15)
    adam_step(state, params, {"w": np.array([1.0])})
    assert params["w"][0] == pytest.approx(0.5 - 2e-3 / (1 + 1e-8), abs=1e-12)


def test_adam_zero_gradient_and_errors():
    params = {"w": np.array([0.3, -0.2])}
    adam_step(AdamState(), params, {"w": np.zeros(2)})
    np.testing.assert_array_equal(params["w"], [0.3, -0.2])
    with pytest.raises(NonFiniteGradient):
        adam_step(AdamState(), params, {"w": np.array([np.nan, 0.0])})
    with pytest.raises(ShapeError):
        adam_step(AdamState(), params, {"w": np.zeros(3)})


def _train(seed, steps=3):
    rng = np.random.default_rng(0)
    x = rng.random((2, 8, 8))
    net = TinySegNet(1, seed=seed)
    state = AdamState()
    traj = []
    for _ in range(steps):
        s, cache = net.forward(x)
        adam_step(state, net.params, net.backward(cache, s - 0.2))
        net.mark_updated()
        traj.append(np.concatenate([p.ravel() for p in net.params.values()]))
    return traj


def test_adam_trajectories_reproducible():
    a, b = _train(4), _train(4)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))


def test_plateau_examples():
    assert lr_on_plateau(list(np.linspace(0, 1, 40)), 1e-3) == 1e-3
    assert lr_on_plateau([0.5] * 21, 1e-3) == 5e-4
    assert lr_on_plateau([0.5] * 20, 1e-3) == 1e-3
    hist = [0.5] * 19 + [0.6] + [0.6] * 2  # improvement inside the window
    assert lr_on_plateau(hist, 1e-3) == 1e-3
    assert lr_on_plateau([0.5] * 41, 1e-3) == 2.5e-4
    with pytest.raises(ValueError):
        lr_on_plateau([], 1e-3)


def test_plateau_halver_resets():
    h = PlateauHalver(patience=2)
    lrs = [h.step(m, 1.0) for m in [0.1, 0.1, 0.1, 0.2, 0.2]]
    assert lrs == [1.0, 1.0, 0.5, 1.0, 1.0]


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_checkpoint_roundtrip(tmp_path, dtype):
    net = TinySegNet(2, seed=5, dtype=dtype)
    state = AdamState(lr=2.5e-4)
    x = np.random.default_rng(0).random((1, 8, 8, 2)).astype(dtype)
    s, cache = net.forward(x)
    adam_step(state, net.params, net.backward(cache, s))
    path = tmp_path / "ck.tsnet"
    save_checkpoint(path, net, state)
    assert path.read_bytes().startswith(b"TSNET v1 ")
    net2, state2 = load_checkpoint(path)
    assert net2.dtype == net.dtype and net2.in_channels == 2
    for k in net.params:
        assert net2.params[k].tobytes() == net.params[k].tobytes()
        assert state2.m[k].tobytes() == state.m[k].tobytes()
        assert state2.v[k].tobytes() == state.v[k].tobytes()
    assert (state2.step, state2.lr) == (1, 2.5e-4)


def test_checkpoint_errors(tmp_path):
    path = tmp_path / "ck.tsnet"
    save_checkpoint(path, TinySegNet(1))
    data = path.read_bytes()
    for bad in [data[:-8], b"XXNET" + data[5:], data.replace(b" f64 ", b" f16 ", 1), b"no header"]:
        path.write_bytes(bad)
        with pytest.raises(FormatError):
            load_checkpoint(path)
