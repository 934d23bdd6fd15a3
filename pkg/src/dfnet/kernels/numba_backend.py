"""Numba-compiled twins of the numpy kernels.

Same signatures and conventions as ``numpy_backend``; loop bodies skip
out-of-range taps instead of materializing a padded array. Serial loops
only, so results are run-to-run deterministic.
"""

import numpy as np
from numba import njit

NAME = "numba"


def conv_out_size(size, kernel, dilation, padding, stride):
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


@njit(cache=True)
def conv2d_forward(x, w, b, dilation, padding, stride):
    bsz, cin, h, wd = x.shape
    cout = w.shape[0]
    k = w.shape[2]
    oh = (h + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    ow = (wd + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    y = np.empty((bsz, cout, oh, ow))
    for n in range(bsz):
        for co in range(cout):
            for oy in range(oh):
                for ox in range(ow):
                    acc = b[co]
                    for ci in range(cin):
                        for i in range(k):
                            iy = oy * stride - padding + i * dilation
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(k):
                                ix = ox * stride - padding + j * dilation
                                if ix < 0 or ix >= wd:
                                    continue
                                acc += x[n, ci, iy, ix] * w[co, ci, i, j]
                    y[n, co, oy, ox] = acc
    return y


@njit(cache=True)
def conv2d_grad_input(w, gy, in_h, in_w, dilation, padding, stride):
    bsz, cout, oh, ow = gy.shape
    cin = w.shape[1]
    k = w.shape[2]
    gx = np.zeros((bsz, cin, in_h, in_w))
    for n in range(bsz):
        for co in range(cout):
            for oy in range(oh):
                for ox in range(ow):
                    g = gy[n, co, oy, ox]
                    for ci in range(cin):
                        for i in range(k):
                            iy = oy * stride - padding + i * dilation
                            if iy < 0 or iy >= in_h:
                                continue
                            for j in range(k):
                                ix = ox * stride - padding + j * dilation
                                if ix < 0 or ix >= in_w:
                                    continue
                                gx[n, ci, iy, ix] += g * w[co, ci, i, j]
    return gx


@njit(cache=True)
def conv2d_grad_weights(x, gy, kernel, dilation, padding, stride):
    bsz, cin, h, wd = x.shape
    cout = gy.shape[1]
    oh, ow = gy.shape[2], gy.shape[3]
    gw = np.zeros((cout, cin, kernel, kernel))
    for n in range(bsz):
        for co in range(cout):
            for oy in range(oh):
                for ox in range(ow):
                    g = gy[n, co, oy, ox]
                    for ci in range(cin):
                        for i in range(kernel):
                            iy = oy * stride - padding + i * dilation
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kernel):
                                ix = ox * stride - padding + j * dilation
                                if ix < 0 or ix >= wd:
                                    continue
                                gw[co, ci, i, j] += g * x[n, ci, iy, ix]
    return gw


@njit(cache=True)
def avg_pool_forward(x, k, padding, stride):
    bsz, ch, h, wd = x.shape
    oh = (h + 2 * padding - k) // stride + 1
    ow = (wd + 2 * padding - k) // stride + 1
    inv = 1.0 / (k * k)
    y = np.empty((bsz, ch, oh, ow))
    for n in range(bsz):
        for c in range(ch):
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0
                    for i in range(k):
                        iy = oy * stride - padding + i
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(k):
                            ix = ox * stride - padding + j
                            if ix < 0 or ix >= wd:
                                continue
                            acc += x[n, c, iy, ix]
                    y[n, c, oy, ox] = acc * inv
    return y


@njit(cache=True)
def avg_pool_grad_input(gy, in_h, in_w, k, padding, stride):
    bsz, ch, oh, ow = gy.shape
    inv = 1.0 / (k * k)
    gx = np.zeros((bsz, ch, in_h, in_w))
    for n in range(bsz):
        for c in range(ch):
            for oy in range(oh):
                for ox in range(ow):
                    g = gy[n, c, oy, ox] * inv
                    for i in range(k):
                        iy = oy * stride - padding + i
                        if iy < 0 or iy >= in_h:
                            continue
                        for j in range(k):
                            ix = ox * stride - padding + j
                            if ix < 0 or ix >= in_w:
                                continue
                            gx[n, c, iy, ix] += g
    return gx


@njit(cache=True)
def _axis_coords(in_size, out_size):
    lo = np.empty(out_size, dtype=np.int64)
    hi = np.empty(out_size, dtype=np.int64)
    frac = np.empty(out_size)
    scale = (in_size - 1) / (out_size - 1) if out_size > 1 else 0.0
    for o in range(out_size):
        src = o * scale
        i0 = int(np.floor(src))
        if i0 > in_size - 1:
            i0 = in_size - 1
        i1 = i0 + 1 if i0 + 1 < in_size else in_size - 1
        lo[o] = i0
        hi[o] = i1
        frac[o] = src - i0
    return lo, hi, frac


@njit(cache=True)
def bilinear_forward(x, out_h, out_w):
    bsz, ch = x.shape[0], x.shape[1]
    y0, y1, ty = _axis_coords(x.shape[2], out_h)
    x0, x1, tx = _axis_coords(x.shape[3], out_w)
    y = np.empty((bsz, ch, out_h, out_w))
    for n in range(bsz):
        for c in range(ch):
            for oy in range(out_h):
                for ox in range(out_w):
                    a = x[n, c, y0[oy], x0[ox]]
                    b = x[n, c, y0[oy], x1[ox]]
                    d = x[n, c, y1[oy], x0[ox]]
                    e = x[n, c, y1[oy], x1[ox]]
                    top = a + (b - a) * tx[ox]
                    bot = d + (e - d) * tx[ox]
                    y[n, c, oy, ox] = top + (bot - top) * ty[oy]
    return y


@njit(cache=True)
def bilinear_grad_input(gy, in_h, in_w):
    bsz, ch, oh, ow = gy.shape
    y0, y1, ty = _axis_coords(in_h, oh)
    x0, x1, tx = _axis_coords(in_w, ow)
    gx = np.zeros((bsz, ch, in_h, in_w))
    for n in range(bsz):
        for c in range(ch):
            for oy in range(oh):
                wy = ty[oy]
                for ox in range(ow):
                    wx = tx[ox]
                    g = gy[n, c, oy, ox]
                    gx[n, c, y0[oy], x0[ox]] += g * (1.0 - wy) * (1.0 - wx)
                    gx[n, c, y0[oy], x1[ox]] += g * (1.0 - wy) * wx
                    gx[n, c, y1[oy], x0[ox]] += g * wy * (1.0 - wx)
                    gx[n, c, y1[oy], x1[ox]] += g * wy * wx
    return gx
