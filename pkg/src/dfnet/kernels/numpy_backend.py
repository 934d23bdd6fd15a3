"""Pure-numpy implementations of the hot array kernels.

Layout convention: (batch, channels, height, width), float64, C-contiguous.
Convolutions use zero padding; average pooling divides by the full window
area so padded zeros count toward the mean.
"""

import numpy as np

NAME = "numpy"


def conv_out_size(size, kernel, dilation, padding, stride):
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _pad(x, padding):
    if padding == 0:
        return x
    p = ((0, 0), (0, 0), (padding, padding), (padding, padding))
    return np.pad(x, p)


def _patches(xp, kernel, dilation, stride, out_h, out_w):
    # One strided copy per kernel tap: (B, C, k, k, out_h, out_w).
    b, ch = xp.shape[:2]
    cols = np.empty((b, ch, kernel, kernel, out_h, out_w), dtype=xp.dtype)
    for i in range(kernel):
        for j in range(kernel):
            ii = i * dilation
            jj = j * dilation
            cols[:, :, i, j] = xp[
                :, :,
                ii:ii + (out_h - 1) * stride + 1:stride,
                jj:jj + (out_w - 1) * stride + 1:stride,
            ]
    return cols


def conv2d_forward(x, w, b, dilation, padding, stride):
    cout, _, k, _ = w.shape
    oh = conv_out_size(x.shape[2], k, dilation, padding, stride)
    ow = conv_out_size(x.shape[3], k, dilation, padding, stride)
    cols = _patches(_pad(x, padding), k, dilation, stride, oh, ow)
    y = np.tensordot(cols, w, axes=([1, 2, 3], [1, 2, 3]))
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    y += b.reshape(1, cout, 1, 1)
    return y


def conv2d_grad_input(w, gy, in_h, in_w, dilation, padding, stride):
    k = w.shape[2]
    bsz = gy.shape[0]
    cin = w.shape[1]
    oh, ow = gy.shape[2], gy.shape[3]
    gxp = np.zeros((bsz, cin, in_h + 2 * padding, in_w + 2 * padding))
    for i in range(k):
        for j in range(k):
            ii = i * dilation
            jj = j * dilation
            # (B, out_h, out_w, Cin) contribution of tap (i, j)
            contrib = np.tensordot(gy, w[:, :, i, j], axes=([1], [0]))
            gxp[
                :, :,
                ii:ii + (oh - 1) * stride + 1:stride,
                jj:jj + (ow - 1) * stride + 1:stride,
            ] += contrib.transpose(0, 3, 1, 2)
    if padding == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, :, padding:padding + in_h, padding:padding + in_w])


def conv2d_grad_weights(x, gy, kernel, dilation, padding, stride):
    oh, ow = gy.shape[2], gy.shape[3]
    cols = _patches(_pad(x, padding), kernel, dilation, stride, oh, ow)
    # gy (B, Cout, oh, ow) x cols (B, Cin, k, k, oh, ow) -> (Cout, Cin, k, k)
    return np.tensordot(gy, cols, axes=([0, 2, 3], [0, 4, 5]))


def avg_pool_forward(x, k, padding, stride):
    oh = conv_out_size(x.shape[2], k, 1, padding, stride)
    ow = conv_out_size(x.shape[3], k, 1, padding, stride)
    cols = _patches(_pad(x, padding), k, 1, stride, oh, ow)
    return cols.sum(axis=(2, 3)) / float(k * k)


def avg_pool_grad_input(gy, in_h, in_w, k, padding, stride):
    bsz, ch, oh, ow = gy.shape
    share = gy / float(k * k)
    gxp = np.zeros((bsz, ch, in_h + 2 * padding, in_w + 2 * padding))
    for i in range(k):
        for j in range(k):
            gxp[
                :, :,
                i:i + (oh - 1) * stride + 1:stride,
                j:j + (ow - 1) * stride + 1:stride,
            ] += share
    if padding == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, :, padding:padding + in_h, padding:padding + in_w])


def _interp_matrix(in_size, out_size):
    # Row o holds the align-corners-true interpolation weights for output o.
    mat = np.zeros((out_size, in_size))
    if out_size == 1:
        src = np.zeros(1)
    else:
        src = np.arange(out_size) * ((in_size - 1) / (out_size - 1))
    i0 = np.minimum(np.floor(src).astype(np.int64), in_size - 1)
    i1 = np.minimum(i0 + 1, in_size - 1)
    t = src - i0
    np.add.at(mat, (np.arange(out_size), i0), 1.0 - t)
    np.add.at(mat, (np.arange(out_size), i1), t)
    return mat


def bilinear_forward(x, out_h, out_w):
    ah = _interp_matrix(x.shape[2], out_h)
    aw = _interp_matrix(x.shape[3], out_w)
    y = np.tensordot(x, ah, axes=([2], [1]))        # (B, C, W, out_h)
    y = np.tensordot(y, aw, axes=([2], [1]))        # (B, C, out_h, out_w)
    return np.ascontiguousarray(y)


def bilinear_grad_input(gy, in_h, in_w):
    ah = _interp_matrix(in_h, gy.shape[2]).T        # (in_h, out_h)
    aw = _interp_matrix(in_w, gy.shape[3]).T
    gx = np.tensordot(gy, ah, axes=([2], [1]))
    gx = np.tensordot(gx, aw, axes=([2], [1]))
    return np.ascontiguousarray(gx)
