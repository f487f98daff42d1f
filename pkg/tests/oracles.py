"""Independent reference computations used only by the tests.

Nothing here calls into the vectorised code paths under test: convolutions
are scalar loops, integer inference runs on unbounded Python integers.
"""

from __future__ import annotations

import numpy as np

F32 = np.float32


def naive_weights(kernel_index: int) -> list:
    # enumerate 3-of-9 tap triples in lexicographic order by hand
    triples = [(a, b, c) for a in range(9) for b in range(a + 1, 9) for c in range(b + 1, 9)]
    taps = triples[kernel_index]
    return [2 if i in taps else -1 for i in range(9)]


def naive_conv(window, weights, dilation: int, channels, padding: bool) -> list:
    """Position-by-position float32 correlation, channel-major then tap-major."""
    x = np.asarray(window, dtype=F32)
    length = x.shape[-1]
    half = 4 * dilation
    positions = range(length) if padding else range(half, length - half)
    out = []
    for p in positions:
        acc = F32(0.0)
        for c in sorted(channels):
            for tap in range(9):
                idx = p + tap * dilation - half
                if 0 <= idx < length:
                    acc = F32(acc + F32(F32(weights[tap]) * x[c, idx]))
        out.append(acc)
    return out


def naive_counts(window, ks) -> list:
    counts = []
    for f in range(ks.num_features):
        pair = int(ks.feature_pair[f])
        conv = naive_conv(window, naive_weights(int(ks.pair_kernel[pair])), int(ks.pair_dilation[pair]),
                          list(np.flatnonzero(ks.pair_channels[pair])), bool(ks.pair_padding[pair]))
        counts.append(sum(1 for v in conv if v > ks.biases[f]))
    return counts


def naive_ppv(window, ks) -> list:
    return [F32(F32(c) / F32(ks.comparison_counts[f])) for f, c in enumerate(naive_counts(window, ks))]


def naive_scores(t, weights, biases) -> list:
    w = np.asarray(weights, dtype=F32)
    out = []
    for k in range(w.shape[1]):
        acc = F32(biases[k])
        for j in range(w.shape[0]):
            acc = F32(acc + F32(F32(t[j]) * w[j, k]))
        out.append(acc)
    return out


def bigint_s1(bits: int, clamp: int, footprint: int) -> int:
    """Floor division on exact integers, for the case where I_m * N_m dominates."""
    return (2 ** (bits - 1) - 1) // (clamp * footprint)


def bigint_s2(bits: int, f_num: int, f_den: int = 1) -> int:
    """Largest s with s^2 * f <= 2^(b-1) - 1, by bisection on integers."""
    limit = 2 ** (bits - 1) - 1
    lo, hi = 0, 2 ** 64
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if mid * mid * f_num <= limit * f_den:
            lo = mid
        else:
            hi = mid - 1
    return lo


class WidenedResult:
    def __init__(self, counts, tq, scores, kstar, peak):
        self.counts, self.tq, self.scores, self.kstar, self.peak = counts, tq, scores, kstar, peak


def widened_inference(scaled, qmodel) -> WidenedResult:
    """Integer inference with no wrap-around, tracking the largest |intermediate|.

    ``scaled`` is the already clamped and scaled input ``[n, C, L]``.  The
    classifier stage runs on object-dtype Python ints; the convolution stage
    uses int64 only when its worst case provably fits, else Python ints too.
    """
    ks = qmodel.kernels
    raw = np.asarray(scaled)
    n, _, length = raw.shape
    peak = int(np.abs(raw.astype(object)).max()) if raw.size else 0
    # Convolution sums are bounded by peak * 2 * 9 * channels.  While that stays
    # far below 2^63, int64 is as exact as unbounded integers and much faster.
    wide_enough = peak * 18 * ks.n_channels < 2 ** 62
    x = raw.astype(np.int64) if wide_enough else raw.astype(object)
    counts = np.zeros((n, ks.num_features), dtype=object)
    for f in range(ks.num_features):
        pair = int(ks.feature_pair[f])
        d = int(ks.pair_dilation[pair])
        pad = bool(ks.pair_padding[pair])
        w = naive_weights(int(ks.pair_kernel[pair]))
        half = 4 * d
        lo_p, hi_p = (0, length) if pad else (half, length - half)
        acc = np.zeros((n, hi_p - lo_p), dtype=x.dtype)
        for c in np.flatnonzero(ks.pair_channels[pair]):
            for tap in range(9):
                src = np.arange(lo_p, hi_p) + tap * d - half
                ok = (src >= 0) & (src < length)
                term = np.zeros((n, hi_p - lo_p), dtype=x.dtype)
                term[:, ok] = x[:, c, src[ok]] * w[tap]
                peak = max(peak, int(np.abs(term).max()))
                acc = acc + term
                peak = max(peak, int(np.abs(acc).max()))
        bias = int(qmodel.biases_q[f])
        peak = max(peak, abs(bias))
        counts[:, f] = (acc > bias).sum(axis=1)
    s2 = qmodel.calibration.s2
    c_k = [int(v) for v in ks.comparison_counts]
    tq = np.zeros_like(counts)
    for f in range(ks.num_features):
        num = counts[:, f] * s2 + c_k[f] // 2
        peak = max(peak, int(max(num)) if n else 0)
        tq[:, f] = num // c_k[f]
    k = qmodel.weights_q.shape[1]
    scores = np.zeros((n, k), dtype=object)
    for kk in range(k):
        acc = np.full(n, int(qmodel.class_biases_q[kk]), dtype=object)
        peak = max(peak, abs(int(qmodel.class_biases_q[kk])))
        for f in range(ks.num_features):
            prod = tq[:, f] * int(qmodel.weights_q[f, kk])
            peak = max(peak, int(np.abs(prod).max()) if n else 0)
            acc = acc + prod
            peak = max(peak, int(np.abs(acc).max()) if n else 0)
        scores[:, kk] = acc
    kstar = np.array([max(range(k), key=lambda i: (row[i], -i)) for row in scores], dtype=np.int64)
    return WidenedResult(counts.astype(np.int64), tq.astype(np.int64), scores, kstar, peak)
