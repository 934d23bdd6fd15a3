"""Finite-difference checks for every differentiable op, plus tape semantics."""

import numpy as np
import pytest

from dfnet import autodiff as ad
from dfnet.autodiff import ConvSpec, Tape, Tensor, backward
from dfnet.errors import ConfigError, UsageError

SEEDS = range(10)
H = 1e-5
TOL = 1e-4


def rng_tensor(rng, shape, low=-1.0, high=1.0, grad=True):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=grad)


def fd_gradient(f, x, h=H):
    """Central differences of scalar-valued f w.r.t. the array x, in place."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = f()
        x[i] = orig - h
        fm = f()
        x[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return g


def check_grads(build, tensors, tol=TOL):
    """build() -> scalar Tensor from `tensors`; compares backward to FD."""
    for t in tensors:
        t.zero_grad()
    loss = build()
    backward(loss)
    for t in tensors:
        assert t.grad is not None, "no gradient reached an input"
        fd = fd_gradient(lambda: build().item(), t.data)
        scale = max(np.abs(fd).max(), 1.0)
        err = np.abs(t.grad - fd).max() / scale
        assert err < tol, f"gradient mismatch: rel err {err:.3e}"


def project(y, seed):
    """Random linear functional of y, so every output entry matters."""
    r = Tensor(np.random.default_rng(seed).uniform(0.5, 1.5, size=y.shape))
    return ad.sum_all(ad.mul(y, r))


# ---------------------------------------------------------------------------
# tensor and tape basics


def test_tensor_rejects_non_rank4():
    with pytest.raises(UsageError):
        Tensor(np.zeros((3, 3)))


def test_scalar_helper_shape():
    s = ad.scalar(2.5)
    assert s.shape == (1, 1, 1, 1)
    assert s.item() == 2.5


def test_backward_needs_scalar():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    with pytest.raises(UsageError):
        backward(ad.relu(x))


def test_tape_topological_order():
    x = Tensor(np.ones((1, 1, 1, 1)), requires_grad=True)
    y = ad.mul(x, x)
    z = ad.add(y, x)
    tape = Tape(z)
    order = {id(n): i for i, n in enumerate(tape.nodes)}
    assert order[id(x)] < order[id(y)] < order[id(z)]


def test_diamond_reuse_accumulates():
    # z = x*x + x -> dz/dx = 2x + 1
    x = Tensor(np.full((1, 1, 1, 1), 3.0), requires_grad=True)
    backward(ad.sum_all(ad.add(ad.mul(x, x), x)))
    np.testing.assert_allclose(x.grad, 7.0)


def test_repeated_backward_accumulates():
    x = Tensor(np.full((1, 1, 1, 1), 2.0), requires_grad=True)
    loss = ad.sum_all(ad.mul(x, x))
    backward(loss)
    first = x.grad.copy()
    backward(loss)
    np.testing.assert_allclose(x.grad, 2 * first)
    x.zero_grad()
    assert x.grad is None


def test_no_grad_tracking_when_not_required():
    x = Tensor(np.ones((1, 1, 2, 2)))
    y = ad.relu(x)
    assert not y.requires_grad
    assert Tape(y).operations() == []


# ---------------------------------------------------------------------------
# convolution and pooling gradients


@pytest.mark.parametrize("seed", SEEDS)
def test_conv2d_gradients(seed):
    rng = np.random.default_rng(seed)
    spec = ConvSpec(3, 4, 3, dilation=1, padding=1, stride=1)
    x = rng_tensor(rng, (2, 3, 6, 5))
    w = rng_tensor(rng, (4, 3, 3, 3))
    b = rng_tensor(rng, (1, 4, 1, 1))
    check_grads(lambda: project(ad.conv2d(x, w, b, spec), seed), [x, w, b])


def test_conv2d_dilated_strided_gradients():
    rng = np.random.default_rng(7)
    for spec in (ConvSpec(2, 3, 3, dilation=2, padding=2), ConvSpec(2, 3, 2, stride=2)):
        x = rng_tensor(rng, (1, 2, 7, 7))
        w = rng_tensor(rng, (3, 2, spec.kernel_size, spec.kernel_size))
        b = rng_tensor(rng, (1, 3, 1, 1))
        check_grads(lambda: project(ad.conv2d(x, w, b, spec), 0), [x, w, b])


def test_conv2d_is_linear_in_input():
    rng = np.random.default_rng(0)
    spec = ConvSpec(3, 2, 3, padding=1)
    w = rng_tensor(rng, (2, 3, 3, 3), grad=False)
    zero_b = Tensor(np.zeros((1, 2, 1, 1)))
    x = rng_tensor(rng, (1, 3, 8, 8), grad=False)
    y = rng_tensor(rng, (1, 3, 8, 8), grad=False)
    a, b = 1.7, -0.3
    mixed = ad.conv2d(Tensor(a * x.data + b * y.data), w, zero_b, spec)
    parts = a * ad.conv2d(x, w, zero_b, spec).data + b * ad.conv2d(y, w, zero_b, spec).data
    np.testing.assert_allclose(mixed.data, parts, atol=1e-10)


def test_conv2d_identity_kernel_is_identity():
    x = rng_tensor(np.random.default_rng(1), (2, 3, 5, 5), grad=False)
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    y = ad.conv2d(x, Tensor(w), Tensor(np.zeros((1, 3, 1, 1))), ConvSpec(3, 3, 3, padding=1))
    np.testing.assert_allclose(y.data, x.data, atol=1e-14)


def test_convspec_validation():
    with pytest.raises(ConfigError):
        ConvSpec(0, 1, 3)
    with pytest.raises(ConfigError):
        ConvSpec(1, 1, 3, padding=-1)
    with pytest.raises(ConfigError):
        ConvSpec(1, 1, 9).out_size(4, 4)


@pytest.mark.parametrize("seed", SEEDS)
def test_avg_pool_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng_tensor(rng, (2, 3, 6, 6))
    check_grads(lambda: project(ad.avg_pool2d(x, 3, padding=1, stride=1), seed), [x])
    x2 = rng_tensor(rng, (2, 3, 6, 6))
    check_grads(lambda: project(ad.avg_pool2d(x2, 2, padding=0, stride=2), seed), [x2])


@pytest.mark.parametrize("seed", SEEDS)
def test_adaptive_avg_pool_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng_tensor(rng, (2, 2, 7, 5))
    check_grads(lambda: project(ad.adaptive_avg_pool(x, (3, 2)), seed), [x])


def test_adaptive_avg_pool_hand_case():
    # Length 5 into 2 bins: edges floor/ceil make [0:3] and [2:5]; both share cell 2.
    x = Tensor(np.arange(5.0).reshape(1, 1, 1, 5))
    y = ad.adaptive_avg_pool(x, (1, 2))
    np.testing.assert_allclose(y.data.reshape(-1), [1.0, 3.0])


def test_adaptive_avg_pool_global_mean():
    x = rng_tensor(np.random.default_rng(2), (2, 3, 6, 6), grad=False)
    y = ad.adaptive_avg_pool(x, (1, 1))
    np.testing.assert_allclose(y.data.reshape(2, 3), x.data.mean(axis=(2, 3)))


@pytest.mark.parametrize("seed", SEEDS)
def test_bilinear_upsample_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng_tensor(rng, (1, 3, 4, 5))
    check_grads(lambda: project(ad.bilinear_upsample(x, (9, 7)), seed), [x])


def test_bilinear_rejects_downsampling():
    x = Tensor(np.zeros((1, 1, 4, 4)))
    with pytest.raises(ConfigError):
        ad.bilinear_upsample(x, (3, 4))


# ---------------------------------------------------------------------------
# elementwise ops


@pytest.mark.parametrize("seed", SEEDS)
def test_arithmetic_gradients(seed):
    rng = np.random.default_rng(seed)
    a = rng_tensor(rng, (2, 2, 3, 3))
    b = rng_tensor(rng, (2, 2, 3, 3))
    check_grads(lambda: project(ad.add(a, b), seed), [a, b])
    check_grads(lambda: project(ad.sub(a, b), seed), [a, b])
    check_grads(lambda: project(ad.mul(a, b), seed), [a, b])
    check_grads(lambda: project(ad.scale(a, -2.5), seed), [a])
    check_grads(lambda: ad.sum_all(ad.mul(a, a)), [a])


@pytest.mark.parametrize("mode", ["average", "multiply"])
@pytest.mark.parametrize("seed", SEEDS)
def test_fuse_gradients(mode, seed):
    rng = np.random.default_rng(seed)
    a = rng_tensor(rng, (1, 3, 4, 4), 0.1, 0.9)
    b = rng_tensor(rng, (1, 3, 4, 4), 0.1, 0.9)
    check_grads(lambda: project(ad.fuse(a, b, mode), seed), [a, b])


@pytest.mark.parametrize("mode", ["average", "multiply"])
def test_fuse_commutative_and_closed(mode):
    rng = np.random.default_rng(3)
    a = rng_tensor(rng, (2, 3, 5, 5), 0.0, 1.0, grad=False)
    b = rng_tensor(rng, (2, 3, 5, 5), 0.0, 1.0, grad=False)
    ab = ad.fuse(a, b, mode).data
    ba = ad.fuse(b, a, mode).data
    np.testing.assert_allclose(ab, ba, atol=1e-15)
    assert ab.min() >= 0.0 and ab.max() <= 1.0


def test_fuse_rejects_unknown_mode():
    a = Tensor(np.zeros((1, 1, 1, 1)))
    with pytest.raises(ConfigError):
        ad.fuse(a, a, "sum")


@pytest.mark.parametrize("seed", SEEDS)
def test_concat_channels_gradients(seed):
    rng = np.random.default_rng(seed)
    parts = [rng_tensor(rng, (2, c, 3, 3)) for c in (1, 2, 3)]
    check_grads(lambda: project(ad.concat_channels(parts), seed), parts)


@pytest.mark.parametrize("seed", SEEDS)
def test_relu_gradients_off_kink(seed):
    rng = np.random.default_rng(seed)
    data = rng.uniform(0.1, 1.0, size=(2, 2, 4, 4))
    data[rng.uniform(size=data.shape) < 0.5] *= -1.0  # keep |x| >= 0.1
    x = Tensor(data, requires_grad=True)
    check_grads(lambda: project(ad.relu(x), seed), [x])


@pytest.mark.parametrize("seed", SEEDS)
def test_clamp01_gradients_off_edges(seed):
    rng = np.random.default_rng(seed)
    data = rng.uniform(0.1, 0.9, size=(2, 2, 4, 4))
    data[0, 0, 0, 0] = 1.5   # saturated: zero gradient region
    data[0, 0, 0, 1] = -0.5
    x = Tensor(data, requires_grad=True)
    check_grads(lambda: project(ad.clamp01(x), seed), [x])


def test_clamp01_saturated_grad_is_zero():
    x = Tensor(np.array([[[[2.0, -1.0, 0.5, 0.5]]]]), requires_grad=True)
    backward(ad.sum_all(ad.clamp01(x)))
    np.testing.assert_allclose(x.grad.reshape(-1), [0.0, 0.0, 1.0, 1.0])


@pytest.mark.parametrize("seed", SEEDS)
def test_sigmoid_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng_tensor(rng, (2, 2, 4, 4), -3.0, 3.0)
    check_grads(lambda: project(ad.sigmoid(x), seed), [x])


def test_sigmoid_extreme_inputs_stay_finite():
    x = Tensor(np.array([[[[-800.0, 800.0, 0.0, 1.0]]]]))
    y = ad.sigmoid(x).data.reshape(-1)
    assert np.all(np.isfinite(y))
    np.testing.assert_allclose(y[:3], [0.0, 1.0, 0.5], atol=1e-300)


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng_tensor(rng, (2, 4, 3, 3), -2.0, 2.0)
    check_grads(lambda: project(ad.softmax_channels(x), seed), [x])


@pytest.mark.parametrize("seed", SEEDS)
def test_log_softmax_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng_tensor(rng, (2, 4, 3, 3), -2.0, 2.0)
    check_grads(lambda: project(ad.log_softmax_channels(x), seed), [x])


def test_softmax_sums_to_one_and_shift_invariant():
    rng = np.random.default_rng(5)
    x = rng_tensor(rng, (3, 6, 8, 8), -5.0, 5.0, grad=False)
    y = ad.softmax_channels(x).data
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)
    shifted = ad.softmax_channels(Tensor(x.data + rng.uniform(-3, 3, size=(3, 1, 8, 8)))).data
    np.testing.assert_allclose(y, shifted, atol=1e-10)


def test_log_softmax_matches_log_of_softmax():
    x = rng_tensor(np.random.default_rng(6), (2, 5, 4, 4), -4.0, 4.0, grad=False)
    np.testing.assert_allclose(
        ad.log_softmax_channels(x).data,
        np.log(ad.softmax_channels(x).data),
        atol=1e-12,
    )


@pytest.mark.parametrize("seed", SEEDS)
def test_safe_log_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng_tensor(rng, (2, 2, 3, 3), 0.1, 1.0)
    check_grads(lambda: project(ad.safe_log(x), seed), [x])


def test_safe_log_at_zero_is_finite():
    x = Tensor(np.zeros((1, 1, 1, 1)))
    assert np.isfinite(ad.safe_log(x).item())


@pytest.mark.parametrize("seed", SEEDS)
def test_scale_channels_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng_tensor(rng, (2, 3, 4, 4))
    weights = rng.uniform(0.5, 2.0, size=3)
    check_grads(lambda: project(ad.scale_channels(x, weights), seed), [x])


def test_scale_channels_values():
    x = Tensor(np.ones((1, 3, 2, 2)))
    y = ad.scale_channels(x, np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(y.data[0, :, 0, 0], [1.0, 2.0, 3.0])


@pytest.mark.parametrize("seed", SEEDS)
def test_renorm_channels_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng_tensor(rng, (2, 3, 4, 4), 0.1, 1.0)
    check_grads(lambda: project(ad.renorm_channels(x), seed), [x])


def test_renorm_channels_produces_simplex():
    x = rng_tensor(np.random.default_rng(8), (2, 4, 5, 5), 0.0, 1.0, grad=False)
    y = ad.renorm_channels(x).data
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-10)
    assert y.min() >= 0.0
