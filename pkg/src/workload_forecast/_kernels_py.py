"""Pure-Python (numpy) twins of the compiled kernels in ``_kernels.pyx``."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def average_ranks(x):
    a = np.ascontiguousarray(x, dtype=np.float64)
    n = len(a)
    order = np.argsort(a, kind="mergesort")
    sorted_a = a[order]
    # tie groups are runs of equal values in sorted order
    starts = np.flatnonzero(np.r_[True, sorted_a[1:] != sorted_a[:-1]])
    ends = np.r_[starts[1:], n] - 1
    group_rank = 0.5 * (starts + ends) + 1.0
    out = np.empty(n, dtype=np.float64)
    out[order] = np.repeat(group_rank, ends - starts + 1)
    return out


def signed_rank_counts(doubled_ranks):
    r = np.asarray(doubled_ranks, dtype=np.int64)
    counts = np.zeros(int(r.sum()) + 1, dtype=np.int64)
    counts[0] = 1
    for ri in r:
        shifted = counts[: len(counts) - ri].copy()
        counts[ri:] += shifted
    return counts


def adam_update(p, g, m, v, lr, b1, b2, eps, bc1, bc2):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def gather_windows(series, target, lag, pred):
    x = np.ascontiguousarray(series, dtype=np.float64)
    y = np.ascontiguousarray(target, dtype=np.float64)
    n_ch, n = x.shape
    count = n - lag - pred + 1
    if count < 1:
        return np.empty((0, n_ch * lag)), np.empty(0)
    # (n_ch, count, lag) -> (count, n_ch * lag), channel-major
    view = sliding_window_view(x, lag, axis=1)[:, :count, :]
    feats = np.ascontiguousarray(view.transpose(1, 0, 2).reshape(count, n_ch * lag))
    targs = y[lag - 1 + pred: lag - 1 + pred + count].copy()
    return feats, targs
