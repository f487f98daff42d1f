"""MiniRocket kernel structure and the floating-point PPV transform.

The 84 kernels are all 9-tap patterns with three taps weighted +2 and six
taps weighted -1.  Each kernel is paired with one or more dilations; every
kernel-dilation pair carries a padding flag, a channel subset and one or more
biases, and each bias yields one PPV feature.

All convolution arithmetic is float32 with a fixed accumulation order
(ascending channel, then ascending tap) so results are reproducible bit for
bit by a naive scalar loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

KERNEL_LENGTH = 9
NUM_KERNELS = 84
POSITIVE_WEIGHT = 2
NEGATIVE_WEIGHT = -1

_GOLDEN = (np.sqrt(5.0) + 1.0) / 2.0


def build_kernels() -> np.ndarray:
    """Return the (84, 9) int8 weight matrix, one row per kernel.

    Rows follow the lexicographic order of the positive tap triples, so row
    0 has taps 0, 1 and 2 set to +2.
    """
    weights = np.full((NUM_KERNELS, KERNEL_LENGTH), NEGATIVE_WEIGHT, dtype=np.int8)
    for row, taps in enumerate(combinations(range(KERNEL_LENGTH), 3)):
        weights[row, list(taps)] = POSITIVE_WEIGHT
    return weights


def kernel_taps() -> np.ndarray:
    """(84, 3) positive tap indices of every kernel."""
    return np.array(list(combinations(range(KERNEL_LENGTH), 3)), dtype=np.int8)


def max_dilation(window_length: int) -> int:
    return max(1, (window_length - 1) // (KERNEL_LENGTH - 1))


def plan_dilations(window_length: int, feature_count: int = NUM_KERNELS,
                   max_dilations_per_kernel: int = 32):
    """Exponential dilation schedule.

    Returns ``(dilations, features_per_dilation)`` where the second array
    counts features *per kernel* at each dilation, so the total number of
    features is ``84 * features_per_dilation.sum()``.
    """
    if window_length < KERNEL_LENGTH:
        raise ValueError("window too short")
    if feature_count < NUM_KERNELS or feature_count % NUM_KERNELS:
        raise ValueError("feature count must be multiple of kernel count")

    per_kernel = feature_count // NUM_KERNELS
    n_dilations = min(per_kernel, max_dilations_per_kernel)
    multiplier = per_kernel / n_dilations
    max_exponent = np.log2((window_length - 1) / (KERNEL_LENGTH - 1))
    raw = np.floor(2.0 ** np.linspace(0.0, max_exponent, n_dilations)).astype(np.int64)
    dilations, counts = np.unique(raw, return_counts=True)
    counts = np.floor(counts * multiplier).astype(np.int64)
    remainder = per_kernel - int(counts.sum())
    i = 0
    while remainder > 0:
        counts[i] += 1
        remainder -= 1
        i = (i + 1) % len(counts)
    return dilations, counts


def quantile_levels(n: int) -> np.ndarray:
    """Low-discrepancy quantile levels in (0, 1)."""
    return (np.arange(1, n + 1) * _GOLDEN) % 1.0


@dataclass(frozen=True, eq=False)
class KernelSet:
    """A fitted transform model.

    Pair arrays (length P = 84 * number of dilations) are ordered
    dilation-major, kernel-minor.  Feature arrays have length T.
    """

    window_length: int
    n_channels: int
    dilations: np.ndarray
    features_per_dilation: np.ndarray
    pair_dilation: np.ndarray
    pair_kernel: np.ndarray
    pair_padding: np.ndarray
    pair_channels: np.ndarray  # (P, n_channels) bool mask
    feature_pair: np.ndarray
    biases: np.ndarray  # float32
    comparison_counts: np.ndarray
    seed: int

    @property
    def num_features(self) -> int:
        return len(self.biases)

    @property
    def num_pairs(self) -> int:
        return len(self.pair_dilation)

    @property
    def weights(self) -> np.ndarray:
        return build_kernels()

    def channels_of(self, pair: int) -> np.ndarray:
        return np.flatnonzero(self.pair_channels[pair])

    def pair_features(self, pair: int) -> np.ndarray:
        return np.flatnonzero(self.feature_pair == pair)

    def __eq__(self, other):
        if not isinstance(other, KernelSet):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in self.__dataclass_fields__
        )


def _as_batch(windows) -> np.ndarray:
    x = np.asarray(windows, dtype=np.float32)
    if x.ndim == 1:
        x = x[None, None, :]
    elif x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError("windows must be [length], [channels, length] or [n, channels, length]")
    return x


def output_length(window_length: int, dilation: int, padding: bool) -> int:
    return window_length if padding else window_length - (KERNEL_LENGTH - 1) * dilation


def convolve(windows, pattern, dilation: int, channels, padding: bool) -> np.ndarray:
    """Dilated 9-tap correlation summed over ``channels``.

    ``pattern`` is either a row of 9 weights or a kernel index.  With padding
    the kernel is centred on every input position and out-of-range samples
    contribute nothing; without padding only fully overlapping positions are
    produced.  Accepts a single window or a batch and returns float32 with
    the matching leading shape.
    """
    channels = np.atleast_1d(np.asarray(channels, dtype=np.int64))
    if channels.size == 0:
        raise ValueError("no channels assigned")
    single = np.ndim(windows) < 3
    x = _as_batch(windows)
    weights = np.asarray(pattern)
    if weights.ndim == 0:
        weights = build_kernels()[int(weights)]
    weights = weights.astype(np.float32)

    n, _, length = x.shape
    out_len = output_length(length, dilation, padding)
    if out_len <= 0:
        raise ValueError("window too short for dilation")
    acc = np.zeros((n, out_len), dtype=np.float32)
    half = (KERNEL_LENGTH // 2) * dilation
    for c in np.sort(channels):
        xc = x[:, c, :]
        for tap in range(KERNEL_LENGTH):
            w = weights[tap]
            if padding:
                shift = tap * dilation - half
                lo = max(0, -shift)
                hi = min(length, length - shift)
                if hi > lo:
                    acc[:, lo:hi] += w * xc[:, lo + shift:hi + shift]
            else:
                start = tap * dilation
                acc += w * xc[:, start:start + out_len]
    return acc[0] if single else acc


def _assign_padding(n_dilations: int) -> np.ndarray:
    pad = np.empty((n_dilations, NUM_KERNELS), dtype=bool)
    for di in range(n_dilations):
        pad[di] = (np.arange(NUM_KERNELS) + di) % 2 == 1
    return pad.ravel()


def _assign_channels(n_pairs: int, n_channels: int, rng: np.random.Generator) -> np.ndarray:
    mask = np.zeros((n_pairs, n_channels), dtype=bool)
    if n_channels == 1:
        mask[:, 0] = True
        return mask
    upper = np.log2(min(n_channels, KERNEL_LENGTH) + 1)
    sizes = np.floor(2.0 ** rng.uniform(0.0, upper, n_pairs)).astype(np.int64)
    sizes = np.clip(sizes, 1, n_channels)
    for p, size in enumerate(sizes):
        mask[p, rng.choice(n_channels, size, replace=False)] = True
    return mask


def fit_biases(windows, kernels: KernelSet, seed: int | None = None,
               quantiles: np.ndarray | None = None) -> np.ndarray:
    """Biases from quantiles of one randomly chosen window per pair.

    Each kernel-dilation pair draws one training window and takes the
    requested quantiles of its own convolution output (padded or not,
    matching how the feature is later counted).
    """
    x = _as_batch(windows)
    if x.shape[0] == 0:
        raise ValueError("cannot calibrate biases")
    rng = np.random.default_rng(kernels.seed if seed is None else seed)
    if quantiles is None:
        quantiles = quantile_levels(kernels.num_features)
    biases = np.empty(kernels.num_features, dtype=np.float32)
    for pair in range(kernels.num_pairs):
        feats = kernels.pair_features(pair)
        example = int(rng.integers(x.shape[0]))
        conv = convolve(x[example], int(kernels.pair_kernel[pair]),
                        int(kernels.pair_dilation[pair]), kernels.channels_of(pair),
                        bool(kernels.pair_padding[pair]))
        biases[feats] = np.quantile(conv.astype(np.float64), quantiles[feats]).astype(np.float32)
    return biases


def fit(windows, feature_count: int = NUM_KERNELS, seed: int = 0) -> KernelSet:
    """Build and fit a KernelSet on training windows ``[n, channels, length]``."""
    x = _as_batch(windows)
    if x.shape[0] == 0:
        raise ValueError("cannot calibrate biases")
    n_channels, length = x.shape[1], x.shape[2]
    dilations, per_dilation = plan_dilations(length, feature_count)
    rng = np.random.default_rng(seed)

    pair_dilation = np.repeat(dilations, NUM_KERNELS)
    pair_kernel = np.tile(np.arange(NUM_KERNELS), len(dilations))
    pair_padding = _assign_padding(len(dilations))
    pair_channels = _assign_channels(len(pair_dilation), n_channels, rng)
    feature_pair = np.concatenate([
        np.repeat(np.arange(di * NUM_KERNELS, (di + 1) * NUM_KERNELS), count)
        for di, count in enumerate(per_dilation)
    ])
    counts = np.array([
        output_length(length, int(pair_dilation[p]), bool(pair_padding[p])) for p in feature_pair
    ], dtype=np.int64)

    skeleton = KernelSet(
        window_length=length, n_channels=n_channels, dilations=dilations,
        features_per_dilation=per_dilation, pair_dilation=pair_dilation,
        pair_kernel=pair_kernel, pair_padding=pair_padding, pair_channels=pair_channels,
        feature_pair=feature_pair, biases=np.zeros(len(feature_pair), dtype=np.float32),
        comparison_counts=counts, seed=seed,
    )
    biases = fit_biases(x, skeleton, seed=int(rng.integers(2**63 - 1)))
    return KernelSet(**{**skeleton.__dict__, "biases": biases})


def transform_counts(windows, kernels: KernelSet) -> np.ndarray:
    """Integer count of positions whose convolution exceeds each bias."""
    x = _as_batch(windows)
    if x.shape[1] != kernels.n_channels:
        raise ValueError("channel count mismatch")
    counts = np.zeros((x.shape[0], kernels.num_features), dtype=np.int64)
    for pair in range(kernels.num_pairs):
        feats = kernels.pair_features(pair)
        if feats.size == 0:
            continue
        conv = convolve(x, int(kernels.pair_kernel[pair]), int(kernels.pair_dilation[pair]),
                        kernels.channels_of(pair), bool(kernels.pair_padding[pair]))
        for f in feats:
            counts[:, f] = np.count_nonzero(conv > kernels.biases[f], axis=1)
    return counts


def transform(windows, kernels: KernelSet) -> np.ndarray:
    """PPV features, float32 in [0, 1]; shape (n, T) or (T,) for one window."""
    single = np.ndim(windows) < 3
    counts = transform_counts(windows, kernels)
    ppv = counts.astype(np.float32) / kernels.comparison_counts.astype(np.float32)
    return ppv[0] if single else ppv
