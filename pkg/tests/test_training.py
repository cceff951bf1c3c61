import math

import numpy as np
import pytest

from _oracles import central_diff
from corrnet.dataio import PairedDataset, SyntheticSpec, generate_synthetic
from corrnet.dataio.records import ClipRecord, StreamScoreSet
from corrnet.errors import ConfigError, DataError, DimensionError
from corrnet.model import PARAM_FIELDS, CorrnetGradients, CorrnetParams, backward, forward, init_params
from corrnet.training import (
    OptimizerState,
    TrainConfig,
    batch_loss,
    corrnet_loss,
    sample_training_pair,
    sgd_momentum_step,
    train,
)


@pytest.fixture(scope="module")
def separable():
    return generate_synthetic(SyntheticSpec(class_count=10, clips_per_class=20, seed=0))


def test_softmax_loss_closed_forms():
    loss, d = corrnet_loss(np.array([0.0, 40.0, 0.0]), 1)
    assert loss < 1e-15 and np.abs(d).max() < 1e-15
    loss, d = corrnet_loss(np.zeros(5), 2)
    assert loss == pytest.approx(math.log(5), abs=1e-12)
    np.testing.assert_allclose(d, np.full(5, 0.2) - np.eye(5)[2], atol=1e-15)


@pytest.mark.parametrize("mode,target", [("softmax_ce", 3), ("sigmoid_bce", np.array([1, 0, 1, 0, 0]))])
def test_loss_gradient_matches_finite_differences(mode, target):
    z = np.random.default_rng(0).normal(size=5) * 2
    _, d = corrnet_loss(z, target, mode)
    num = central_diff(lambda t: corrnet_loss(t, target, mode)[0], z)
    np.testing.assert_allclose(d, num, rtol=1e-4, atol=1e-7)


def test_sigmoid_bce_closed_form():
    z = np.array([0.3, -1.2, 2.0])
    y = np.array([1, 0, 1])
    expected = np.mean(-(y * np.log(1 / (1 + np.exp(-z))) + (1 - y) * np.log(1 - 1 / (1 + np.exp(-z)))))
    assert corrnet_loss(z, y, "sigmoid_bce")[0] == pytest.approx(expected, abs=1e-12)


def test_loss_is_non_negative():
    rng = np.random.default_rng(1)
    for _ in range(100):
        z = rng.normal(size=6) * 10
        assert corrnet_loss(z, int(rng.integers(6)))[0] >= 0
        assert corrnet_loss(z, rng.integers(0, 2, size=6), "sigmoid_bce")[0] >= 0


def test_invalid_targets():
    with pytest.raises(ConfigError):
        corrnet_loss(np.zeros(3), 3)
    with pytest.raises(ConfigError):
        corrnet_loss(np.zeros(3), np.array([1, 0, 1]), "softmax_ce")
    with pytest.raises(ConfigError):
        corrnet_loss(np.zeros(3), np.array([1, 0, 2]), "sigmoid_bce")


def test_batch_loss_is_mean_of_singles():
    Z = np.random.default_rng(2).normal(size=(4, 3))
    loss, dZ = batch_loss(Z, [0, 2, 1, 1])
    singles = [corrnet_loss(Z[i], y) for i, y in enumerate([0, 2, 1, 1])]
    assert loss == pytest.approx(np.mean([s[0] for s in singles]), abs=1e-14)
    np.testing.assert_allclose(dZ, np.array([s[1] for s in singles]) / 4, atol=1e-15)


def test_end_to_end_gradient_through_correlation_input():
    p = init_params(4, 4, 8, 4, seed=3)
    rng = np.random.default_rng(5)
    u, v = rng.normal(size=4), rng.normal(size=4)

    def loss_u(t):
        return corrnet_loss(forward(p, t, v, 0.01)[0], 2)[0]

    z, cache = forward(p, u, v, 0.01)
    g = backward(p, cache, corrnet_loss(z, 2)[1])
    np.testing.assert_allclose(g.du, central_diff(loss_u, u), rtol=1e-4, atol=1e-7)


def _clip(frames, cid="a"):
    return ClipRecord(cid, 0, np.asarray(frames, dtype=float))


def test_single_frame_clip_always_same_pair():
    s, t = _clip([[1.0, 2.0]]), _clip([[3.0, 4.0]])
    rng = np.random.default_rng(0)
    for _ in range(10):
        u, v = sample_training_pair((s, t), rng)
        assert np.array_equal(u, [1, 2]) and np.array_equal(v, [3, 4])


def test_sampling_reproducible():
    frames = np.arange(24 * 2, dtype=float).reshape(24, 2)
    pair = (_clip(frames), _clip(frames + 100))
    r1, r2 = np.random.default_rng(4), np.random.default_rng(4)
    for _ in range(20):
        x, y = sample_training_pair(pair, r1), sample_training_pair(pair, r2)
        assert np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1])


def test_frame_frequencies_are_uniform():
    # frame index i is encoded as the score value, separately per modality
    frames = np.arange(24, dtype=float)[:, None]
    pair = (_clip(frames), _clip(frames))
    rng = np.random.default_rng(123)
    draws = np.array([sample_training_pair(pair, rng) for _ in range(10000)])[:, :, 0].astype(int)
    n, p = 10000, 1 / 24
    sigma = math.sqrt(n * p * (1 - p))
    for modality in range(2):
        counts = np.bincount(draws[:, modality], minlength=24)
        assert np.all(np.abs(counts - n * p) < 5 * sigma)
    # spatial and temporal indices are drawn independently
    assert np.mean(draws[:, 0] == draws[:, 1]) < 0.1


def test_segment_sampling_averages_one_frame_per_segment():
    frames = np.arange(24, dtype=float)[:, None]
    pair = (_clip(frames), _clip(frames))
    u, v = sample_training_pair(pair, np.random.default_rng(0), sampling="segment", K=3)
    # the mean of one index from each of [0,8), [8,16), [16,24)
    assert 8.0 <= u[0] <= 15.0 and 8.0 <= v[0] <= 15.0


def test_empty_modality():
    with pytest.raises(DataError):
        sample_training_pair((_clip(np.zeros((0, 2))), _clip([[1.0, 2.0]])), np.random.default_rng(0))


def _scalar_params(w):
    return CorrnetParams(n=1, m=1, hidden=1, B=1, W1=[[w]], b1=[0.0], W2=[[0.0]], b2=[0.0],
                         W3=[[0.0]], b3=[0.0])


def _grads_like(params, w1_grad):
    g = {k: np.zeros_like(getattr(params, k)) for k in PARAM_FIELDS}
    g["W1"] = np.array([[w1_grad]])
    return CorrnetGradients(du=np.zeros(1), dv=np.zeros(1), **g)


def test_two_momentum_steps_on_scalar():
    # grad = w at each step: v1 = -0.1, w1 = 0.9; v2 = 0.9 * -0.1 - 0.1 * 0.9 = -0.18, w2 = 0.72
    p = _scalar_params(1.0)
    state = OptimizerState.zeros_like(p)
    for _ in range(2):
        p, state = sgd_momentum_step(p, _grads_like(p, p.W1[0, 0]), state, lr=0.1, momentum=0.9)
    assert p.W1[0, 0] == pytest.approx(0.72, abs=1e-15)
    assert state.velocity["W1"][0, 0] == pytest.approx(-0.18, abs=1e-15)


def test_momentum_zero_is_plain_sgd_and_zero_grads_do_nothing():
    p = init_params(2, 2, 3, 2, seed=1)
    g = backward(p, forward(p, [1.0, 2.0], [0.5, -1.0])[1], np.array([0.3, -0.7]))
    q, _ = sgd_momentum_step(p, g, OptimizerState.zeros_like(p), lr=0.05, momentum=0.0)
    for k in PARAM_FIELDS:
        np.testing.assert_array_equal(getattr(q, k), getattr(p, k) - 0.05 * getattr(g, k))
    zero = CorrnetGradients(du=g.du, dv=g.dv, **{k: np.zeros_like(getattr(p, k)) for k in PARAM_FIELDS})
    r, _ = sgd_momentum_step(p, zero, OptimizerState.zeros_like(p), lr=0.05, momentum=0.9)
    assert r.equals(p)


def test_step_shape_mismatch():
    p = init_params(2, 2, 3, 2, seed=1)
    q = init_params(2, 2, 4, 2, seed=1)
    g = backward(q, forward(q, [1.0, 2.0], [0.5, -1.0])[1], np.ones(2))
    with pytest.raises(DimensionError):
        sgd_momentum_step(p, g, OptimizerState.zeros_like(p), 0.1, 0.9)


@pytest.mark.parametrize("kw", [dict(batch_size=0), dict(momentum=1.0), dict(momentum=-0.1),
                                dict(learning_rate=-1e-3), dict(K=0), dict(loss_mode="hinge"),
                                dict(sampling="all"), dict(eps=-1.0)])
def test_config_invariants(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_config_defaults_and_round_trip(tmp_path):
    cfg = TrainConfig()
    assert (cfg.batch_size, cfg.epochs, cfg.learning_rate, cfg.momentum, cfg.K) == (8, 200, 0.001, 0.9, 3)
    cfg = TrainConfig(batch_size=4, epochs=7, learning_rate=0.01, seed=3, loss_mode="sigmoid_bce")
    cfg.save(tmp_path / "t.cfg")
    assert TrainConfig.load(tmp_path / "t.cfg") == cfg


def test_zero_learning_rate_freezes_head():
    ds = generate_synthetic(SyntheticSpec(class_count=4, clips_per_class=5, noise_scale=0.0, seed=2))
    p0 = init_params(4, 4, 8, 4, seed=0)
    p, report = train(ds, p0, TrainConfig(epochs=4, learning_rate=0.0))
    assert p.equals(p0)
    assert len(set(report.losses)) == 1


def test_training_is_deterministic(separable):
    p0 = init_params(10, 10, 16, 10, seed=1)
    cfg = TrainConfig(epochs=3, seed=5)
    a, ra = train(separable, p0, cfg)
    b, rb = train(separable, p0, cfg)
    assert a.equals(b) and ra.losses == rb.losses
    c, _ = train(separable, p0, TrainConfig(epochs=3, seed=6))
    assert not c.equals(a)


def test_separable_set_is_learned(separable):
    p, report = train(separable, init_params(10, 10, 64, 10, seed=0), TrainConfig(epochs=50))
    assert len(report.losses) == len(report.accuracies) == len(report.seconds) == 50
    assert max(report.accuracies) >= 0.95
    smoothed = np.convolve(report.losses, np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(smoothed) <= 0)


def test_train_rejects_mismatched_params(separable):
    with pytest.raises(ConfigError):
        train(separable, init_params(10, 10, 8, 9, seed=0), TrainConfig(epochs=1))
    with pytest.raises(ConfigError):
        train(separable, init_params(9, 10, 8, 10, seed=0), TrainConfig(epochs=1))


def test_report_csv(tmp_path, separable):
    _, report = train(separable, init_params(10, 10, 8, 10, seed=0), TrainConfig(epochs=2))
    report.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,accuracy,seconds"
    assert len(lines) == 3 and lines[1].startswith("1,")


def test_multilabel_training_with_sigmoid():
    rng = np.random.default_rng(0)
    labels = [np.array([1, 0, 1], dtype=np.int8), np.array([0, 1, 0], dtype=np.int8)] * 4
    s = [ClipRecord(f"m{i}", y, rng.normal(size=(3, 3)) + 2 * y) for i, y in enumerate(labels)]
    t = [ClipRecord(f"m{i}", y, rng.normal(size=(2, 3)) + 2 * y) for i, y in enumerate(labels)]
    ds = PairedDataset(StreamScoreSet("spatial", 3, s), StreamScoreSet("temporal", 3, t))
    p0 = init_params(3, 3, 8, 3, seed=0)
    with pytest.raises(ConfigError):
        train(ds, p0, TrainConfig(epochs=1))
    _, report = train(ds, p0, TrainConfig(epochs=30, learning_rate=0.05, loss_mode="sigmoid_bce"))
    assert report.losses[-1] < report.losses[0]
