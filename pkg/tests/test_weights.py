"""Laws of the per-batch weight formula and the two weighted losses."""

import numpy as np
import pytest

from dfnet.autodiff import Tensor, backward, log_softmax_channels, mul, scale, sum_all
from dfnet.errors import ConfigError, DataError, UsageError
from dfnet.weights import (
    ClassHistogram,
    WeightConfig,
    WeightVector,
    dynamic_weights,
    histogram,
    one_hot,
    uniform_weights,
    weighted_ce_from_probs,
    weighted_ce_loss,
    weighted_sq_loss,
)

CFG = WeightConfig(beta=0.1, alpha=5.0)


def hist(counts):
    counts = np.asarray(counts)
    return ClassHistogram(counts, int(counts.sum()), len(counts))


# ---------------------------------------------------------------------------
# histogram


def test_histogram_hand_case():
    h = histogram(np.array([[[0, 0], [0, 1]]]), 2)
    np.testing.assert_array_equal(h.counts, [3, 1])
    assert h.total == 4
    assert h.class_count == 2


def test_histogram_uniform_raster():
    h = histogram(np.zeros((2, 4, 4), dtype=np.int64), 3)
    np.testing.assert_array_equal(h.counts, [32, 0, 0])


def test_histogram_empty_batch_rejected():
    with pytest.raises(DataError):
        histogram(np.zeros((0, 4, 4), dtype=np.int64), 3)


def test_histogram_out_of_range_label_names_position():
    labels = np.zeros((1, 2, 2), dtype=np.int64)
    labels[0, 1, 0] = 7
    with pytest.raises(DataError) as e:
        histogram(labels, 6)
    assert "7" in str(e.value)
    assert "(0, 1, 0)" in str(e.value)


def test_class_histogram_validates_total():
    with pytest.raises(DataError):
        ClassHistogram(np.array([1, 2]), 4, 2)


# ---------------------------------------------------------------------------
# dynamic weights


def test_average_count_gives_exactly_half():
    for c, per in ((4, 25), (6, 16), (3, 7)):
        w = dynamic_weights(hist([per] * c), CFG)
        assert all(v == 0.5 for v in w.values)


def test_absent_class_gets_exactly_one():
    w = dynamic_weights(hist([10, 0, 10, 0]), CFG)
    assert w.values[1] == 1.0
    assert w.values[3] == 1.0


def test_absent_class_rule_beats_clamp():
    # With alpha below 1, an absent class still gets weight 1.
    w = dynamic_weights(hist([5, 0]), WeightConfig(beta=0.1, alpha=0.8))
    assert w.values[1] == 1.0
    assert w.values[0] <= 0.8


def test_hand_case_mild_imbalance():
    w = dynamic_weights(hist([70, 10, 10, 10]), CFG)
    np.testing.assert_allclose(w.values, [100 / 560, 1.25, 1.25, 1.25], rtol=0, atol=1e-15)


def test_hand_case_heavy_imbalance_clamps():
    w = dynamic_weights(hist([997, 1, 1, 1]), CFG)
    np.testing.assert_allclose(w.values[0], 1000 / (8 * 997))
    np.testing.assert_array_equal(w.values[1:], [5.0, 5.0, 5.0])


def test_bounds_hold_for_random_histograms():
    rng = np.random.default_rng(0)
    for _ in range(200):
        c = int(rng.integers(2, 9))
        counts = rng.integers(0, 50, size=c)
        if counts.sum() == 0:
            counts[0] = 1
        w = dynamic_weights(hist(counts), CFG)
        present = counts > 0
        assert np.all(w.values[present] >= CFG.beta)
        assert np.all(w.values[present] <= CFG.alpha)
        assert np.all(w.values[~present] == 1.0)


def test_permutation_equivariance():
    rng = np.random.default_rng(1)
    counts = rng.integers(0, 40, size=6)
    counts[2] = 0
    perm = rng.permutation(6)
    w = dynamic_weights(hist(counts), CFG)
    wp = dynamic_weights(hist(counts[perm]), CFG)
    np.testing.assert_array_equal(w.values[perm], wp.values)


def test_duplication_homogeneity_is_bit_exact():
    rng = np.random.default_rng(2)
    for _ in range(50):
        counts = rng.integers(0, 30, size=5)
        if counts.sum() == 0:
            counts[3] = 2
        w1 = dynamic_weights(hist(counts), CFG)
        w2 = dynamic_weights(hist(counts * 7), CFG)
        assert np.array_equal(w1.values, w2.values)


def test_monotone_in_count_within_band():
    # Fewer pixels -> larger weight, while no clamp applies.
    w = dynamic_weights(hist([40, 30, 20, 10]), WeightConfig(beta=1e-6, alpha=1e6))
    assert w.values[0] < w.values[1] < w.values[2] < w.values[3]


def test_weight_config_validation():
    with pytest.raises(ConfigError):
        WeightConfig(beta=0.0, alpha=5.0)
    with pytest.raises(ConfigError):
        WeightConfig(beta=2.0, alpha=1.0)


def test_uniform_weights_are_ones():
    w = uniform_weights(6)
    np.testing.assert_array_equal(w.values, np.ones(6))


def test_weight_vector_csv_row():
    row = WeightVector(np.array([0.5, 1.25])).csv_row(17)
    assert row == "17,0.5,1.25"


# ---------------------------------------------------------------------------
# weighted squared loss


def test_sq_loss_zero_when_equal():
    labels = np.array([[[0, 1], [2, 0]]])
    target = one_hot(labels, 3)
    loss = weighted_sq_loss(Tensor(target.data.copy()), target, uniform_weights(3))
    assert loss.item() == 0.0


def test_sq_loss_single_pixel_hand_value():
    # pred [1, 0] vs one-hot [0, 1]: (1-0)^2 + (0-1)^2 = 2, mean over one pixel.
    pred = Tensor(np.array([1.0, 0.0]).reshape(1, 2, 1, 1))
    labels = np.array([[[1]]])
    loss = weighted_sq_loss(pred, one_hot(labels, 2), uniform_weights(2))
    assert loss.item() == 2.0


def test_sq_loss_linear_in_weights():
    rng = np.random.default_rng(3)
    pred = Tensor(rng.uniform(0, 1, size=(2, 4, 3, 3)))
    labels = rng.integers(0, 4, size=(2, 3, 3))
    target = one_hot(labels, 4)
    base = np.ones(4)
    bumped = base.copy()
    bumped[2] = 2.0
    l_base = weighted_sq_loss(pred, target, WeightVector(base)).item()
    l_bump = weighted_sq_loss(pred, target, WeightVector(bumped)).item()
    only_2 = np.zeros(4)
    only_2[2] = 1.0
    l_chan = weighted_sq_loss(pred, target, WeightVector(only_2)).item()
    np.testing.assert_allclose(l_bump - l_base, l_chan, rtol=1e-12)


def test_sq_loss_shape_mismatch_rejected():
    pred = Tensor(np.zeros((1, 3, 2, 2)))
    target = one_hot(np.zeros((1, 2, 3), dtype=np.int64), 3)
    with pytest.raises(UsageError):
        weighted_sq_loss(pred, target, uniform_weights(3))


# ---------------------------------------------------------------------------
# weighted cross-entropy


def test_ce_saturated_correct_prediction():
    logits = np.zeros((1, 3, 2, 2))
    logits[:, 0] = 30.0
    loss = weighted_ce_loss(Tensor(logits), np.zeros((1, 2, 2), dtype=np.int64), uniform_weights(3))
    assert loss.item() < 1e-10


def test_ce_uniform_logits_is_log_c():
    for c in (2, 4, 6):
        logits = Tensor(np.zeros((2, c, 3, 3)))
        labels = np.random.default_rng(c).integers(0, c, size=(2, 3, 3))
        loss = weighted_ce_loss(logits, labels, uniform_weights(c))
        np.testing.assert_allclose(loss.item(), np.log(c), rtol=1e-12)


def test_ce_single_pixel_weighted_hand_value():
    logits = Tensor(np.zeros((1, 2, 1, 1)))
    labels = np.zeros((1, 1, 1), dtype=np.int64)
    loss = weighted_ce_loss(logits, labels, WeightVector(np.array([2.0, 1.0])))
    np.testing.assert_allclose(loss.item(), 2.0 * np.log(2.0), rtol=1e-14)


def test_ce_unit_weights_match_unweighted():
    rng = np.random.default_rng(4)
    logits = Tensor(rng.normal(size=(2, 5, 4, 4)))
    labels = rng.integers(0, 5, size=(2, 4, 4))
    weighted = weighted_ce_loss(logits, labels, uniform_weights(5)).item()
    lsm = log_softmax_channels(logits)
    picked = scale(sum_all(mul(one_hot(labels, 5), lsm)), -1.0 / (2 * 4 * 4))
    np.testing.assert_allclose(weighted, picked.item(), atol=1e-12)


def test_ce_from_probs_tracks_logit_form():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(1, 4, 3, 3))
    labels = rng.integers(0, 4, size=(1, 3, 3))
    w = dynamic_weights(histogram(labels, 4), CFG)
    from dfnet.autodiff import softmax_channels

    probs = softmax_channels(Tensor(logits))
    a = weighted_ce_from_probs(probs, labels, w).item()
    b = weighted_ce_loss(Tensor(logits), labels, w).item()
    np.testing.assert_allclose(a, b, atol=1e-9)


# ---------------------------------------------------------------------------
# loss gradients vs finite differences


def _fd(build, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = build().item()
        x[i] = orig - h
        fm = build().item()
        x[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(10))
def test_sq_loss_gradient(seed):
    rng = np.random.default_rng(seed)
    pred = Tensor(rng.uniform(0.05, 0.95, size=(2, 3, 3, 3)), requires_grad=True)
    labels = rng.integers(0, 3, size=(2, 3, 3))
    w = WeightVector(rng.uniform(0.2, 3.0, size=3))
    target = one_hot(labels, 3)
    build = lambda: weighted_sq_loss(pred, target, w)
    backward(build())
    fd = _fd(build, pred.data)
    assert np.abs(pred.grad - fd).max() / max(np.abs(fd).max(), 1.0) < 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_ce_loss_gradient(seed):
    rng = np.random.default_rng(seed)
    logits = Tensor(rng.normal(size=(2, 3, 3, 3)), requires_grad=True)
    labels = rng.integers(0, 3, size=(2, 3, 3))
    w = WeightVector(rng.uniform(0.2, 3.0, size=3))
    build = lambda: weighted_ce_loss(logits, labels, w)
    backward(build())
    fd = _fd(build, logits.data)
    assert np.abs(logits.grad - fd).max() / max(np.abs(fd).max(), 1.0) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_ce_from_probs_gradient(seed):
    rng = np.random.default_rng(seed)
    probs_raw = rng.uniform(0.1, 1.0, size=(1, 3, 3, 3))
    probs_raw /= probs_raw.sum(axis=1, keepdims=True)
    probs = Tensor(probs_raw, requires_grad=True)
    labels = rng.integers(0, 3, size=(1, 3, 3))
    w = WeightVector(rng.uniform(0.2, 3.0, size=3))
    build = lambda: weighted_ce_from_probs(probs, labels, w)
    backward(build())
    fd = _fd(build, probs.data)
    assert np.abs(probs.grad - fd).max() / max(np.abs(fd).max(), 1.0) < 1e-4


def test_one_hot_layout():
    oh = one_hot(np.array([[[0, 2]]]), 3)
    assert oh.shape == (1, 3, 1, 2)
    np.testing.assert_array_equal(oh.data[0, :, 0, 0], [1, 0, 0])
    np.testing.assert_array_equal(oh.data[0, :, 0, 1], [0, 0, 1])
