import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netaccel.dns import (
    Adam, SGDMomentum, SuperNet, SupernetSpec, LayerSpec, SyntheticTask, WidthMismatchError,
    alpha_gradient, derive_network, forward_mixed, loss_and_grads, one_hot, relaxed_weights,
    sample_networks, train_fixed, train_step_weights, update_alpha,
)
from netaccel.workload import BlockChoice

K3 = BlockChoice(3, 1)
K5E2 = BlockChoice(5, 2)
SKIP = BlockChoice.skip()


def spec_of(n_layers=2, candidates=(K3, K5E2, SKIP), width=8, **kw):
    return SupernetSpec(layers=(LayerSpec(8, 8, 4),) * n_layers, candidates=candidates,
                        width=width, **kw)


def batch(spec, n=16, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, spec.input_dim)), rng.integers(0, spec.num_classes, size=n)


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def test_task_is_deterministic_and_disjoint():
    a, b = SyntheticTask().generate(), SyntheticTask().generate()
    assert np.array_equal(a["train"][0], b["train"][0])
    tr = {tuple(r) for r in a["train"][0]}
    assert not tr & {tuple(r) for r in a["val"][0]}
    assert len(a["train"][0]) == len(a["val"][0])


def test_one_hot_row_selects_operator():
    spec = spec_of()
    net = SuperNet.create(spec, 0)
    x = np.random.default_rng(1).normal(size=(5, spec.width))
    outs = [forward_mixed(net, 0, x, np.eye(3)[k]) for k in range(3)]
    assert np.allclose(outs[2], x)  # skip is the identity
    mixed = forward_mixed(net, 0, x, np.array([0.5, 0.5, 0.0]))
    assert np.allclose(mixed, 0.5 * (outs[0] + outs[1]))


def test_identical_candidates_any_alpha():
    spec = spec_of(candidates=(K3, K3))
    net = SuperNet.create(spec, 3)
    x = np.random.default_rng(2).normal(size=(4, spec.width))
    ref = forward_mixed(net, 1, x, np.array([1.0, 0.0]))
    for w in ([0.3, 0.7], [0.9, 0.1]):
        assert np.allclose(forward_mixed(net, 1, x, np.array(w)), ref)


def test_width_mismatch():
    spec = spec_of()
    with pytest.raises(WidthMismatchError):
        forward_mixed(SuperNet.create(spec), 0, np.zeros((2, spec.width + 1)), np.eye(3)[0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.1, 5.0), st.floats(-50, 50))
def test_relaxed_weights_properties(seed, temp, shift):
    spec = spec_of(n_layers=3)
    rng = np.random.default_rng(seed)
    alpha, noise = rng.normal(size=spec.shape), rng.gumbel(size=spec.shape)
    mask = spec.mask()
    w = relaxed_weights(alpha, temp, noise, mask)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12, rtol=0)
    shifted = alpha.copy()
    shifted[1] += shift
    assert np.allclose(relaxed_weights(shifted, temp, noise, mask), w)


def test_zero_learning_rate_keeps_weights():
    spec = spec_of()
    net = SuperNet.create(spec, 0)
    before = {k: v.copy() for k, v in net.weights.items()}
    train_step_weights(net, batch(spec), SGDMomentum(lr=0.0), np.full(spec.shape, 1 / 3))
    assert all(np.array_equal(before[k], net.weights[k]) for k in before)


def _weight_fd(spec, wts, seed, h=1e-4):
    net = SuperNet.create(spec, seed)
    x, y = batch(spec, 8, seed)
    _, grads, _, _ = loss_and_grads(net, x, y, wts)
    worst = 0.0
    for key, w in net.weights.items():
        if key not in grads:
            continue
        fd = np.zeros_like(w)
        for i in np.ndindex(w.shape):
            old = w[i]
            w[i] = old + h
            up = loss_and_grads(net, x, y, wts, need_weight_grads=False)[0]
            w[i] = old - h
            down = loss_and_grads(net, x, y, wts, need_weight_grads=False)[0]
            w[i] = old
            fd[i] = (up - down) / (2 * h)
        if np.any(fd) or np.any(grads[key]):
            worst = max(worst, rel_err(grads[key], fd))
    return worst


def test_weight_gradient_matches_fd():
    spec = spec_of(n_layers=2, width=6)
    wts = relaxed_weights(np.zeros(spec.shape), 1.0, np.random.default_rng(0).gumbel(size=spec.shape),
                          spec.mask())
    assert _weight_fd(spec, wts, 0) < 1e-5


def _alpha_fd(spec, seed, lam=0.7, temp=1.5, h=1e-4):
    rng = np.random.default_rng(seed)
    net = SuperNet.create(spec, seed)
    alpha = rng.normal(size=spec.shape)
    noise = rng.gumbel(size=spec.shape)
    table = rng.uniform(0, 2, size=spec.shape)
    b = batch(spec, 8, seed)
    _, _, g = alpha_gradient(net, alpha, b, table, lam, temp, noise)
    fd = np.zeros_like(alpha)
    for i in np.ndindex(alpha.shape):
        vals = []
        for sgn in (1, -1):
            a = alpha.copy()
            a[i] += sgn * h
            val, hw, _ = alpha_gradient(net, a, b, table, lam, temp, noise)
            vals.append(val + lam * hw)
        fd[i] = (vals[0] - vals[1]) / (2 * h)
    return rel_err(g, fd)


def test_alpha_gradient_matches_fd():
    assert max(_alpha_fd(spec_of(n_layers=3, width=8), s) for s in range(3)) < 1e-5


def test_lambda_zero_is_pure_validation_step():
    spec = spec_of()
    net = SuperNet.create(spec, 0)
    noise = np.random.default_rng(0).gumbel(size=spec.shape)
    b = batch(spec)
    alpha = np.zeros(spec.shape)
    _, _, g0 = alpha_gradient(net, alpha, b, np.zeros(spec.shape), 0.0, 1.0, noise)
    _, _, g1 = alpha_gradient(net, alpha, b, np.full(spec.shape, 5.0), 0.0, 1.0, noise)
    assert np.array_equal(g0, g1)


def test_huge_lambda_moves_to_cheapest():
    spec = spec_of(n_layers=1, candidates=(K3, K3))
    net = SuperNet.create(spec, 0)
    table = np.array([[2.0, 1.0]])
    alpha = np.zeros(spec.shape)
    opt = Adam(lr=0.05)
    rng = np.random.default_rng(0)
    for _ in range(100):
        alpha, _, _ = update_alpha(net, alpha, batch(spec), table, 1e3, opt, 1.0,
                                   rng.gumbel(size=spec.shape))
    assert derive_network(alpha, spec)[0] == [1]


def test_update_alpha_rejects_bad_table():
    spec = spec_of()
    net = SuperNet.create(spec)
    with pytest.raises(ValueError):
        update_alpha(net, np.zeros(spec.shape), batch(spec), np.full(spec.shape, -1.0), 1.0,
                     Adam(), 1.0)


def test_derive_network():
    spec = spec_of(n_layers=3)
    assert derive_network(np.zeros(spec.shape), spec)[0] == [0, 0, 0]
    diag = np.eye(3) * 4
    idx, blocks, _ = derive_network(diag, spec)
    assert idx == [0, 1, 2] and blocks[2].is_skip
    rng = np.random.default_rng(0)
    a = rng.normal(size=spec.shape)
    assert derive_network(a, spec)[0] == derive_network(3.5 * a + 2.0, spec)[0]


def test_skip_masked_when_shapes_change():
    spec = SupernetSpec(layers=(LayerSpec(4, 8, 4),), candidates=(K3, SKIP))
    assert derive_network(np.array([[0.0, 9.0]]), spec)[0] == [0]


def test_sample_networks():
    spec = spec_of(n_layers=2)
    alpha = np.full(spec.shape, -50.0)
    alpha[:, 1] = 50.0
    (idx, net), = sample_networks(alpha, spec, 1, np.random.default_rng(0))
    assert idx == [1, 1] and net == derive_network(alpha, spec)[2]
    one = SupernetSpec(layers=(LayerSpec(8, 8, 4),), candidates=(K3, K5E2))
    picks = [i[0] for i, _ in sample_networks(np.zeros(one.shape), one, 10000,
                                              np.random.default_rng(1))]
    assert abs(sum(picks) - 5000) < 3 * np.sqrt(2500)


def test_separable_task_trains():
    task = SyntheticTask(input_dim=2, num_classes=2, clusters_per_class=1, cluster_std=0.1, seed=3)
    spec = SupernetSpec(layers=(LayerSpec(8, 8, 4),), candidates=(K3,), width=8, input_dim=2,
                        num_classes=2)
    data = task.generate()
    assert train_fixed(spec, [0], {"train": data["train"], "val": data["train"]}, steps=200) > 0.95


def test_lambda_zero_prefers_useful_operator():
    # a lone skip leaves the model linear; the nonlinear candidate is strictly better
    spec = SupernetSpec(layers=(LayerSpec(8, 8, 4),), candidates=(SKIP, BlockChoice(3, 3)))
    data = SyntheticTask().generate()
    wins = 0
    for seed in range(20):
        net = SuperNet.create(spec, seed)
        rng = np.random.default_rng(seed)
        alpha = np.zeros(spec.shape)
        w_opt, a_opt = SGDMomentum(lr=0.05), Adam(lr=0.05)
        (xt, yt), (xv, yv) = data["train"], data["val"]
        for _ in range(150):
            w = relaxed_weights(alpha, 1.0, rng.gumbel(size=spec.shape), spec.mask())
            i = rng.integers(0, len(xt), 64)
            train_step_weights(net, (xt[i], yt[i]), w_opt, w)
            i = rng.integers(0, len(xv), 64)
            alpha, _, _ = update_alpha(net, alpha, (xv[i], yv[i]), np.zeros(spec.shape), 0.0,
                                       a_opt, 1.0, rng.gumbel(size=spec.shape))
        wins += derive_network(alpha, spec)[0] == [1]
    assert wins > 10


def test_identical_proxies_train_identically():
    spec = SupernetSpec(layers=(LayerSpec(8, 8, 8),) * 2,
                        candidates=(BlockChoice(3, 6, 2), BlockChoice(1, 6, 1)))
    assert spec.op_macs(0, 0) == spec.op_macs(0, 1)
    data = SyntheticTask().generate()
    assert train_fixed(spec, [0, 0], data, steps=50) == train_fixed(spec, [1, 1], data, steps=50)


def test_one_hot():
    spec = spec_of()
    assert np.array_equal(one_hot(spec, [2, 0]), np.array([[0, 0, 1], [1, 0, 0]], float))
