"""Hot inner loops: 4-tap resampling and separable valid-window filtering.

Both kernels exist twice, as numba ``@njit`` loops and as pure numpy.
The numba path is used when numba imports and ``ULTRATONGUE_NUMBA`` is not
set to ``0``; ``benchmarks/bench_kernels.py`` times the two against each other.
"""

import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

_DISABLED = os.environ.get("ULTRATONGUE_NUMBA", "1").strip().lower() in ("0", "false", "no", "off")
HAVE_NUMBA = njit is not None


# ---------------------------------------------------------------------------
# pure numpy
# ---------------------------------------------------------------------------

def taps_apply_numpy(img, idx, wts):
    """out[n, r, j] = sum_k wts[j, k] * img[n, r, idx[j, k]]."""
    gathered = img[:, :, idx]  # (N, R, J, T)
    return np.einsum("nrjt,jt->nrj", gathered, wts)


def valid_filter2d_numpy(img, k_rows, k_cols):
    """Separable correlation over a stack of images, valid positions only."""
    kr, kc = k_rows.shape[0], k_cols.shape[0]
    win = np.lib.stride_tricks.sliding_window_view(img, kc, axis=2)
    tmp = win @ k_cols  # (N, R, C-kc+1)
    win = np.lib.stride_tricks.sliding_window_view(tmp, kr, axis=1)
    return win @ k_rows  # (N, R-kr+1, C-kc+1)


# ---------------------------------------------------------------------------
# numba
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def taps_apply_numba(img, idx, wts):
        n, r, _ = img.shape
        j, t = idx.shape
        out = np.empty((n, r, j))
        for a in range(n):
            for b in range(r):
                for c in range(j):
                    acc = 0.0
                    for k in range(t):
                        acc += wts[c, k] * img[a, b, idx[c, k]]
                    out[a, b, c] = acc
        return out

    @njit(cache=True)
    def valid_filter2d_numba(img, k_rows, k_cols):
        n, r, c = img.shape
        kr = k_rows.shape[0]
        kc = k_cols.shape[0]
        oc = c - kc + 1
        orr = r - kr + 1
        tmp = np.empty((r, oc))
        out = np.zeros((n, orr, oc))
        for a in range(n):
            # tap loops outside, contiguous column loop innermost
            tmp[:, :] = 0.0
            for i in range(r):
                for k in range(kc):
                    w = k_cols[k]
                    for j in range(oc):
                        tmp[i, j] += img[a, i, j + k] * w
            for i in range(orr):
                for k in range(kr):
                    w = k_rows[k]
                    for j in range(oc):
                        out[a, i, j] += tmp[i + k, j] * w
        return out

else:  # pragma: no cover
    taps_apply_numba = None
    valid_filter2d_numba = None


USE_NUMBA = HAVE_NUMBA and not _DISABLED


def backend():
    return "numba" if USE_NUMBA else "numpy"


def taps_apply(img, idx, wts):
    img = np.ascontiguousarray(img, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    wts = np.ascontiguousarray(wts, dtype=np.float64)
    if USE_NUMBA:
        return taps_apply_numba(img, idx, wts)
    return taps_apply_numpy(img, idx, wts)


def valid_filter2d(img, k_rows, k_cols=None):
    """Filter an (N, R, C) real stack; complex input is split into parts."""
    if k_cols is None:
        k_cols = k_rows
    k_rows = np.ascontiguousarray(k_rows, dtype=np.float64)
    k_cols = np.ascontiguousarray(k_cols, dtype=np.float64)
    if np.iscomplexobj(img):
        return valid_filter2d(img.real, k_rows, k_cols) + 1j * valid_filter2d(img.imag, k_rows, k_cols)
    img = np.ascontiguousarray(img, dtype=np.float64)
    if USE_NUMBA:
        return valid_filter2d_numba(img, k_rows, k_cols)
    return valid_filter2d_numpy(img, k_rows, k_cols)
