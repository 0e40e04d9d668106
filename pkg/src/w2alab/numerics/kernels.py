"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import from the environment variable
``W2A_KERNELS``: ``numba`` (require numba for everything), ``numpy`` (force
the fallback), or ``auto`` (default: per-kernel winners, numba where its
fused loops beat numpy and numpy where SIMD ufuncs win). Both implementations
of every kernel are kept in registries so tests and the benchmark can compare
them.

All kernels operate on float64 C-contiguous arrays. GELU uses the tanh
approximation throughout the artifact; the constants here are the single
source of truth for it.
"""

from __future__ import annotations

import math
import os

import numpy as np

GELU_C0 = math.sqrt(2.0 / math.pi)
GELU_C1 = 0.044715


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _gelu_fwd_numpy(x):
    inner = GELU_C0 * (x + GELU_C1 * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(inner))


def _gelu_bwd_numpy(x, gy):
    inner = GELU_C0 * (x + GELU_C1 * x * x * x)
    t = np.tanh(inner)
    dinner = GELU_C0 * (1.0 + 3.0 * GELU_C1 * x * x)
    return gy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)


def _rownorm_fwd_numpy(x, eps):
    mu = x.mean(axis=1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mu) * rstd
    return y, rstd[:, 0]


def _rownorm_bwd_numpy(y, rstd, gy):
    gmean = gy.mean(axis=1, keepdims=True)
    proj = np.mean(gy * y, axis=1, keepdims=True)
    return rstd[:, None] * (gy - gmean - y * proj)


def _conv2d_fwd_numpy(x, w, b, stride, pad):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ih = (np.arange(ho) * stride)[:, None] + np.arange(kh)[None, :]
    iw = (np.arange(wo) * stride)[:, None] + np.arange(kw)[None, :]
    patches = xp[:, :, ih[:, None, :, None], iw[None, :, None, :]]
    # [n, cin, ho, wo, kh, kw] -> [n*ho*wo, cin*kh*kw]
    cols = patches.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
    y = cols @ w.reshape(cout, -1).T + b
    return np.ascontiguousarray(y.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))


def _conv2d_bwd_numpy(x, w, gy, stride, pad):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    _, _, ho, wo = gy.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ih = (np.arange(ho) * stride)[:, None] + np.arange(kh)[None, :]
    iw = (np.arange(wo) * stride)[:, None] + np.arange(kw)[None, :]
    patches = xp[:, :, ih[:, None, :, None], iw[None, :, None, :]]
    cols = patches.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
    gym = gy.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
    gb = gym.sum(axis=0)
    gw = (gym.T @ cols).reshape(cout, cin, kh, kw)
    gcols = (gym @ w.reshape(cout, -1)).reshape(n, ho, wo, cin, kh, kw)
    g6 = gcols.transpose(0, 3, 1, 2, 4, 5)  # [n, cin, ho, wo, kh, kw]
    gxp = np.zeros_like(xp)
    for dh in range(kh):
        for dw in range(kw):
            gxp[:, :, dh:dh + stride * ho:stride, dw:dw + stride * wo:stride] += g6[:, :, :, :, dh, dw]
    gx = gxp[:, :, pad:pad + h, pad:pad + wd]
    return np.ascontiguousarray(gx), gw, gb


def _adam_update_numpy(p, g, m, v, lr, b1, b2, eps, t):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    mhat = m / (1.0 - b1 ** t)
    vhat = v / (1.0 - b2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


_NUMPY_IMPLS = {
    "gelu_fwd": _gelu_fwd_numpy,
    "gelu_bwd": _gelu_bwd_numpy,
    "rownorm_fwd": _rownorm_fwd_numpy,
    "rownorm_bwd": _rownorm_bwd_numpy,
    "conv2d_fwd": _conv2d_fwd_numpy,
    "conv2d_bwd": _conv2d_bwd_numpy,
    "adam_update": _adam_update_numpy,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _build_numba_impls():
    from numba import njit

    @njit(cache=True)
    def gelu_fwd(x):
        out = np.empty_like(x)
        flat_x = x.ravel()
        flat_o = out.ravel()
        for i in range(flat_x.size):
            xi = flat_x[i]
            inner = GELU_C0 * (xi + GELU_C1 * xi * xi * xi)
            flat_o[i] = 0.5 * xi * (1.0 + math.tanh(inner))
        return out

    @njit(cache=True)
    def gelu_bwd(x, gy):
        out = np.empty_like(x)
        flat_x = x.ravel()
        flat_g = gy.ravel()
        flat_o = out.ravel()
        for i in range(flat_x.size):
            xi = flat_x[i]
            inner = GELU_C0 * (xi + GELU_C1 * xi * xi * xi)
            t = math.tanh(inner)
            dinner = GELU_C0 * (1.0 + 3.0 * GELU_C1 * xi * xi)
            flat_o[i] = flat_g[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * dinner)
        return out

    @njit(cache=True)
    def rownorm_fwd(x, eps):
        rows, cols = x.shape
        y = np.empty_like(x)
        rstd = np.empty(rows, dtype=np.float64)
        for r in range(rows):
            mu = 0.0
            for c in range(cols):
                mu += x[r, c]
            mu /= cols
            var = 0.0
            for c in range(cols):
                d = x[r, c] - mu
                var += d * d
            var /= cols
            rs = 1.0 / math.sqrt(var + eps)
            rstd[r] = rs
            for c in range(cols):
                y[r, c] = (x[r, c] - mu) * rs
        return y, rstd

    @njit(cache=True)
    def rownorm_bwd(y, rstd, gy):
        rows, cols = y.shape
        gx = np.empty_like(y)
        for r in range(rows):
            gmean = 0.0
            proj = 0.0
            for c in range(cols):
                gmean += gy[r, c]
                proj += gy[r, c] * y[r, c]
            gmean /= cols
            proj /= cols
            for c in range(cols):
                gx[r, c] = rstd[r] * (gy[r, c] - gmean - y[r, c] * proj)
        return gx

    @njit(cache=True)
    def _im2col(x, kh, kw, ho, wo, stride, pad):
        n, cin, h, wd = x.shape
        cols = np.zeros((n * ho * wo, cin * kh * kw), dtype=np.float64)
        for ni in range(n):
            for oh in range(ho):
                for ow in range(wo):
                    row = (ni * ho + oh) * wo + ow
                    col = 0
                    for ci in range(cin):
                        for dh in range(kh):
                            hi = oh * stride + dh - pad
                            for dw in range(kw):
                                wi = ow * stride + dw - pad
                                if 0 <= hi < h and 0 <= wi < wd:
                                    cols[row, col] = x[ni, ci, hi, wi]
                                col += 1
        return cols

    @njit(cache=True)
    def conv2d_fwd(x, w, b, stride, pad):
        n, cin, h, wd = x.shape
        cout, _, kh, kw = w.shape
        ho = (h + 2 * pad - kh) // stride + 1
        wo = (wd + 2 * pad - kw) // stride + 1
        k = cin * kh * kw
        cols = _im2col(x, kh, kw, ho, wo, stride, pad)
        wflat = w.reshape(cout, k)
        wt = np.empty((k, cout), dtype=np.float64)
        for co in range(cout):
            for c in range(k):
                wt[c, co] = wflat[co, c]
        y2 = np.dot(cols, wt)
        y = np.empty((n, cout, ho, wo), dtype=np.float64)
        for ni in range(n):
            for oh in range(ho):
                for ow in range(wo):
                    row = (ni * ho + oh) * wo + ow
                    for co in range(cout):
                        y[ni, co, oh, ow] = y2[row, co] + b[co]
        return y

    @njit(cache=True)
    def conv2d_bwd(x, w, gy, stride, pad):
        n, cin, h, wd = x.shape
        cout, _, kh, kw = w.shape
        _, _, ho, wo = gy.shape
        k = cin * kh * kw
        rows = n * ho * wo
        cols = _im2col(x, kh, kw, ho, wo, stride, pad)
        gyt = np.empty((cout, rows), dtype=np.float64)
        gym = np.empty((rows, cout), dtype=np.float64)
        gb = np.zeros(cout, dtype=np.float64)
        for ni in range(n):
            for oh in range(ho):
                for ow in range(wo):
                    row = (ni * ho + oh) * wo + ow
                    for co in range(cout):
                        g = gy[ni, co, oh, ow]
                        gyt[co, row] = g
                        gym[row, co] = g
                        gb[co] += g
        gw = np.dot(gyt, cols).reshape(cout, cin, kh, kw)
        wflat = np.ascontiguousarray(w.reshape(cout, k))
        gcols = np.dot(gym, wflat)
        gx = np.zeros_like(x)
        for ni in range(n):
            for oh in range(ho):
                for ow in range(wo):
                    row = (ni * ho + oh) * wo + ow
                    col = 0
                    for ci in range(cin):
                        for dh in range(kh):
                            hi = oh * stride + dh - pad
                            for dw in range(kw):
                                wi = ow * stride + dw - pad
                                if 0 <= hi < h and 0 <= wi < wd:
                                    gx[ni, ci, hi, wi] += gcols[row, col]
                                col += 1
        return gx, gw, gb

    @njit(cache=True)
    def adam_update(p, g, m, v, lr, b1, b2, eps, t):
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for i in range(p.size):
            m[i] = b1 * m[i] + (1.0 - b1) * g[i]
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
            p[i] -= lr * (m[i] / c1) / (math.sqrt(v[i] / c2) + eps)

    return {
        "gelu_fwd": gelu_fwd,
        "gelu_bwd": gelu_bwd,
        "rownorm_fwd": rownorm_fwd,
        "rownorm_bwd": rownorm_bwd,
        "conv2d_fwd": conv2d_fwd,
        "conv2d_bwd": conv2d_bwd,
        "adam_update": adam_update,
    }


# under "auto", each kernel gets the implementation that wins its benchmark
# (see benchmarks/bench_kernels.py): loop-heavy pack/scatter/fused kernels go
# to numba, wide SIMD ufunc work stays on numpy
_AUTO_NUMBA = ("conv2d_fwd", "conv2d_bwd", "rownorm_fwd", "rownorm_bwd",
               "adam_update")


def _select_backend():
    flag = os.environ.get("W2A_KERNELS", "auto").lower()
    if flag not in ("auto", "numba", "numpy"):
        raise ValueError(f"W2A_KERNELS must be auto|numba|numpy, got {flag!r}")
    if flag == "numpy":
        return "numpy", None, dict(_NUMPY_IMPLS)
    try:
        numba_impls = _build_numba_impls()
    except ImportError:
        if flag == "numba":
            raise
        return "numpy", None, dict(_NUMPY_IMPLS)
    if flag == "numba":
        return "numba", numba_impls, dict(numba_impls)
    active = {name: (numba_impls[name] if name in _AUTO_NUMBA else fn)
              for name, fn in _NUMPY_IMPLS.items()}
    return "auto", numba_impls, active


_BACKEND, _NUMBA_IMPLS, _ACTIVE = _select_backend()


def backend() -> str:
    """Resolved kernel backend: 'numpy', 'numba', or 'auto' (per-kernel mix)."""
    return _BACKEND


def active_backends() -> dict[str, str]:
    """Which implementation each kernel name resolved to."""
    out = {}
    for name, fn in _ACTIVE.items():
        is_numba = _NUMBA_IMPLS is not None and fn is _NUMBA_IMPLS[name]
        out[name] = "numba" if is_numba else "numpy"
    return out


def implementations(name: str):
    """Both backends' implementations of a kernel, for tests and benchmarks."""
    out = {"numpy": _NUMPY_IMPLS[name]}
    if _NUMBA_IMPLS is not None:
        out["numba"] = _NUMBA_IMPLS[name]
    return out


gelu_fwd = _ACTIVE["gelu_fwd"]
gelu_bwd = _ACTIVE["gelu_bwd"]
rownorm_fwd = _ACTIVE["rownorm_fwd"]
rownorm_bwd = _ACTIVE["rownorm_bwd"]
conv2d_fwd = _ACTIVE["conv2d_fwd"]
conv2d_bwd = _ACTIVE["conv2d_bwd"]
adam_update = _ACTIVE["adam_update"]

# the adam kernel takes flat views; exposed here so callers share one entry
KERNEL_NAMES = tuple(sorted(_NUMPY_IMPLS))
