import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uwbsel.errors import CheckpointError, ValidationError
from uwbsel.nn import checkpoint, kernels
from uwbsel.nn.network import (
    LayerSpec,
    NetworkParams,
    backward,
    conv_output_extent,
    default_architecture,
    forward,
    gradient_check,
    init_network,
    layer_shapes,
    loss_and_gradient,
    mac_count,
    min_preactivation,
    sgd_step,
)


# A central difference with step h moves pre-activations by about h times
# their sensitivity, so units closer than this to zero can straddle the ReLU
# kink and make the numeric estimate one-sided.
FD_STEP = 1e-4
KINK_MARGIN = 100 * FD_STEP


def random_instance(rng, filters=8):
    """Random reduced-width architecture, input and target; resampled away from ReLU kinks."""
    while True:
        n_u = int(rng.choice([4, 6]))
        length = 4 + n_u
        n_a = n_u * (n_u - 1) // 2
        specs = []
        extent = length
        for _ in range(int(rng.integers(1, 3))):
            k = int(rng.integers(1, 4))
            specs.append(LayerSpec("conv1d", filters, k, 1, int(rng.integers(0, 2)), "relu"))
            extent = conv_output_extent(extent, k, 1, specs[-1].padding)
        for _ in range(int(rng.integers(0, 3))):
            specs.append(LayerSpec("dense", int(rng.integers(4, 17)), activation="relu"))
        specs.append(LayerSpec("dense", n_a, activation="linear"))
        params = init_network(specs, length, seed=int(rng.integers(2**31)))
        for b in params.biases:
            b[:] = rng.normal(0, 0.1, b.shape)
        x = rng.normal(0, 1, length)
        if min_preactivation(params, x) >= KINK_MARGIN:
            return params, x, int(rng.integers(n_a)), float(rng.normal(0, 5))


def test_gradient_check_many_instances():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        params, x, a, target = random_instance(rng)
        worst = max(worst, gradient_check(params, x, a, target, step=FD_STEP).max_rel_discrepancy)
    assert worst < 1e-4


@pytest.mark.parametrize("args,want", [((10, 3, 1, 0), 8), ((10, 1, 1, 0), 10), ((3, 3, 1, 1), 3), ((9, 3, 2, 0), 4)])
def test_conv_output_extent(args, want):
    assert conv_output_extent(*args) == want


@pytest.mark.parametrize("args", [(10, 3, 2, 0), (2, 3, 1, 0)])
def test_conv_output_extent_rejects(args):
    with pytest.raises(ValidationError):
        conv_output_extent(*args)


def test_mac_count():
    one = [LayerSpec("conv1d", 2, 3), LayerSpec("dense", 4)]
    assert mac_count(one, 10) == 48
    assert mac_count([], 10) == 0
    assert mac_count([LayerSpec("conv1d", 4, 3)], 10) == 96
    full = default_architecture(6)
    assert mac_count(full, 8) == 1 * 3 * 128 * 6 + 128 * 3 * 128 * 4


def test_shapes_match_forward():
    specs = default_architecture(15, filters=8)
    params = init_network(specs, 10, seed=0)
    x = np.ascontiguousarray(np.random.default_rng(0).normal(size=(3, 1, 10)))
    shapes = layer_shapes(specs, 10)
    from uwbsel.nn.network import _forward_cached
    _, cache = _forward_cached(params, x.reshape(3, 10))
    assert [z.shape[1:] for _, z in cache] == [tuple(s) for s in shapes]
    assert forward(params, x.reshape(3, 10)).shape == (3, 15)


def test_forward_zero_and_identity():
    specs = default_architecture(6, filters=4, dense=(8,))
    params = init_network(specs, 8, seed=1)
    zero = params.with_arrays([np.zeros_like(a) for a in params.arrays()])
    assert np.array_equal(forward(zero, np.ones(8)), np.zeros(6))
    ident = NetworkParams((LayerSpec("dense", 5, activation="linear"),), 5, [np.eye(5)], [np.zeros(5)])
    x = np.array([1.0, -2.0, 3.5, 0.0, 7.0])
    assert np.array_equal(forward(ident, x), x)


def test_forward_deterministic():
    specs = default_architecture(6, filters=8)
    a = init_network(specs, 8, seed=42)
    b = init_network(specs, 8, seed=42)
    x = np.linspace(-1, 1, 8)
    assert np.array_equal(forward(a, x), forward(b, x))
    assert np.array_equal(forward(a, x), forward(a, x))


def test_forward_shape_mismatch():
    params = init_network(default_architecture(6, filters=4), 8)
    with pytest.raises(ValidationError):
        forward(params, np.ones(9))


def test_backward_properties():
    params = init_network(default_architecture(6, filters=8), 8, seed=3)
    x = np.random.default_rng(3).normal(size=8)
    q = forward(params, x)
    for g in backward(params, x, 2, q[2]):
        assert not g.any()
    g1 = backward(params, x, 2, q[2] + 1.0)
    g2 = backward(params, x, 2, q[2] + 2.0)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(b, 2 * a, rtol=1e-12, atol=1e-15)
    # heads other than the taken one get no gradient in the last layer
    w_last = g1[-2]
    assert not np.delete(w_last, 2, axis=0).any()


def test_softmax_head_gradients():
    specs = default_architecture(6, filters=4, dense=(8,), output_activation="softmax")
    params = init_network(specs, 8, seed=5)
    x = np.random.default_rng(5).normal(size=8)
    assert forward(params, x).sum() == pytest.approx(1.0)
    assert gradient_check(params, x, 1, 0.7).max_rel_discrepancy < 1e-4


def test_sgd_step_rules():
    params = init_network(default_architecture(6, filters=4), 8, seed=0)
    arrays = params.arrays()
    same = sgd_step(params, [np.zeros_like(a) for a in arrays], 0.1)
    assert all(np.array_equal(a, b) for a, b in zip(same.arrays(), arrays))
    zero = sgd_step(params, arrays, 1.0)
    assert all(not a.any() for a in zero.arrays())
    rng = np.random.default_rng(0)
    g1 = [rng.normal(size=a.shape) for a in arrays]
    g2 = [rng.normal(size=a.shape) for a in arrays]
    two = sgd_step(sgd_step(params, g1, 0.01), g2, 0.01)
    one = sgd_step(params, [a + b for a, b in zip(g1, g2)], 0.01)
    for a, b in zip(two.arrays(), one.arrays()):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    bad = [g.copy() for g in g1]
    bad[0].flat[0] = np.nan
    with pytest.raises(ValidationError):
        sgd_step(params, bad, 0.01)
    with pytest.raises(ValidationError):
        sgd_step(params, g1, 0.0)


def test_loss_descent_on_fixed_batch():
    rng = np.random.default_rng(11)
    params = init_network(default_architecture(6, filters=8), 8, seed=11)
    X = rng.normal(size=(32, 8))
    acts = rng.integers(0, 6, 32)
    targets = rng.normal(0, 5, 32)
    losses = []
    for _ in range(101):
        loss, grads = loss_and_gradient(params, X, acts, targets)
        losses.append(loss)
        params = sgd_step(params, grads, 1e-3)
    assert sum(b < a for a, b in zip(losses, losses[1:])) >= 95


@pytest.mark.skipif(kernels.compiled_backend is None, reason="compiled kernels not built")
@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(3, 12), st.integers(1, 6), st.integers(1, 3),
       st.integers(1, 3), st.integers(0, 2), st.integers(0, 2**31))
def test_backends_agree(n, c, length, f, k, stride, pad, seed):
    span = length - k + 2 * pad
    if span < 0 or span % stride:
        return
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, c, length))
    w = rng.normal(size=(f, c, k))
    b = rng.normal(size=f)
    py, cc = kernels.python_backend, kernels.compiled_backend
    y = py.conv1d_forward(x, w, b, stride, pad)
    np.testing.assert_allclose(cc.conv1d_forward(x, w, b, stride, pad), y, rtol=1e-12, atol=1e-12)
    dy = rng.normal(size=y.shape)
    for a, bb in zip(py.conv1d_backward(x, w, dy, stride, pad), cc.conv1d_backward(x, w, dy, stride, pad)):
        np.testing.assert_allclose(bb, a, rtol=1e-12, atol=1e-12)


def test_backend_switch_round_trip():
    before = kernels.BACKEND
    kernels.use("python")
    assert kernels.BACKEND == "python"
    params = init_network(default_architecture(6, filters=4), 8, seed=0)
    q_py = forward(params, np.ones(8))
    if kernels.compiled_backend is not None:
        kernels.use("compiled")
        np.testing.assert_allclose(forward(params, np.ones(8)), q_py, rtol=1e-12)
    kernels.use(before)
    with pytest.raises(ValueError):
        kernels.use("gpu")


def test_checkpoint_round_trip(tmp_path):
    params = init_network(default_architecture(6, filters=8), 8, seed=9)
    path = tmp_path / "ck.json"
    checkpoint.save(path, params, extra={"policy": "dqlel"})
    back = checkpoint.load(path)
    assert back.specs == params.specs and back.seed == 9
    assert all(np.array_equal(a, b) for a, b in zip(back.arrays(), params.arrays()))
    assert checkpoint.load_extra(path) == {"policy": "dqlel"}
    checkpoint.check_compatible(back, 8, 6)
    with pytest.raises(CheckpointError):
        checkpoint.check_compatible(back, 10, 15)


def test_checkpoint_rejects_bad_files(tmp_path):
    params = init_network(default_architecture(6, filters=4), 8, seed=0)
    d = checkpoint.to_dict(params)
    for mutate in (
        lambda d: d.update(format="other"),
        lambda d: d.update(version=99),
        lambda d: d["params"][0].update(shape=[1, 2, 3]),
        lambda d: d["params"].pop(),
        lambda d: d["params"][1]["data"].append(0.0),
    ):
        bad = json.loads(json.dumps(d))
        mutate(bad)
        with pytest.raises(CheckpointError):
            checkpoint.from_dict(bad)
    (tmp_path / "junk.json").write_text("{not json")
    with pytest.raises(CheckpointError):
        checkpoint.load(tmp_path / "junk.json")
