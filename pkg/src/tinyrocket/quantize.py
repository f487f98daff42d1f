"""Integer-quantized MiniRocket inference with overflow-free scale factors.

Two integer scale factors size the arithmetic to the available bit width:

* ``s1`` scales clamped inputs and the transform biases so that no
  convolution sum can leave the signed ``bits`` range;
* ``s2`` scales the PPV features, classifier weights (once) and classifier
  biases (twice) so that no partial score can leave it either.

The integer path is emulated with int64 arrays wrapped to ``bits`` after
every operation, so an overflow would show up as a wrong answer rather than
being silently absorbed by the wider host type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .kernels import KernelSet, NUM_KERNELS, _as_batch, build_kernels, KERNEL_LENGTH, transform
from .ridge import LinearClassifier, predict_float

DEFAULT_BITS = 32
DEFAULT_INPUT_CLAMP = 16000  # milli-G

KERNEL_ABS_SUM = int(np.abs(build_kernels()[0]).sum())  # 12 for every kernel


def int_max(bits: int) -> int:
    return 2 ** (bits - 1) - 1


def round_half_away(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def _check_bits(bits: int) -> None:
    if not 8 <= bits <= 64:
        raise ValueError("bit width must be in [8, 64]")


def scale_factor_s1(bits: int, input_clamp, max_footprint: int, max_abs_bias) -> int:
    """floor((2^(b-1) - 1) / max(I_m * N_m, B_m)), evaluated exactly."""
    _check_bits(bits)
    bound = max(Fraction(input_clamp) * max_footprint, Fraction(max_abs_bias))
    if bound <= 0:
        raise ValueError("input clamp must be positive")
    s1 = math.floor(Fraction(int_max(bits)) / bound)
    if s1 < 1:
        raise ValueError("bit width insufficient for input range")
    return s1


def max_footprint(kernels: KernelSet) -> int:
    """Largest weighted footprint of any comparison: 12 * channels summed."""
    return KERNEL_ABS_SUM * int(kernels.pair_channels.sum(axis=1).max())


def calibrate_s1(kernels: KernelSet, input_clamp=DEFAULT_INPUT_CLAMP, bits: int = DEFAULT_BITS) -> int:
    if input_clamp <= 0:
        raise ValueError("input clamp must be positive")
    b_max = float(np.max(np.abs(kernels.biases.astype(np.float64)))) if kernels.num_features else 0.0
    return scale_factor_s1(bits, input_clamp, max_footprint(kernels), b_max)


def class_extents(weights, biases) -> np.ndarray:
    """f(k) = max(w+_k + |b_k|, -w-_k + |b_k|) per class, as exact Fractions."""
    weights = np.asarray(weights, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    out = []
    for k in range(weights.shape[1]):
        col = [Fraction(float(v)) for v in weights[:, k]]
        pos = sum((v for v in col if v > 0), Fraction(0))
        neg = sum((v for v in col if v < 0), Fraction(0))
        bk = abs(Fraction(float(biases[k])))
        out.append(max(pos + bk, -neg + bk))
    return out


def scale_factor_s2(bits: int, extents) -> int:
    """floor(sqrt((2^(b-1) - 1) / max f(k))), evaluated exactly."""
    _check_bits(bits)
    f_max = max(extents)
    if f_max <= 0:
        raise ValueError("degenerate classifier: cannot calibrate")
    # floor(sqrt(x)) == isqrt(floor(x)) for x >= 0
    s2 = math.isqrt(math.floor(Fraction(int_max(bits)) / Fraction(f_max)))
    if s2 < 1:
        raise ValueError("bit width insufficient for classifier range")
    return s2


def calibrate_s2(classifier: LinearClassifier, bits: int = DEFAULT_BITS) -> int:
    if not (np.all(np.isfinite(classifier.weights)) and np.all(np.isfinite(classifier.biases))):
        raise ValueError("classifier weights must be finite")
    return scale_factor_s2(bits, class_extents(classifier.weights, classifier.biases))


@dataclass(frozen=True)
class Calibration:
    bits: int
    input_clamp: int
    max_footprint: int
    max_abs_bias: float
    s1: int
    s2: int
    s2_formula: int = 0  # value before the post-rounding guard, 0 if unchanged

    @property
    def int_max(self) -> int:
        return int_max(self.bits)


@dataclass(frozen=True, eq=False)
class QuantizedModel:
    kernels: KernelSet
    biases_q: np.ndarray  # (T,)
    weights_q: np.ndarray  # (T, K)
    class_biases_q: np.ndarray  # (K,)
    calibration: Calibration
    class_labels: tuple = ()

    @property
    def comparison_counts(self) -> np.ndarray:
        return self.kernels.comparison_counts

    @property
    def num_classes(self) -> int:
        return self.weights_q.shape[1]

    def __eq__(self, other):
        if not isinstance(other, QuantizedModel):
            return NotImplemented
        return (self.kernels == other.kernels and self.calibration == other.calibration
                and np.array_equal(self.biases_q, other.biases_q)
                and np.array_equal(self.weights_q, other.weights_q)
                and np.array_equal(self.class_biases_q, other.class_biases_q)
                and tuple(self.class_labels) == tuple(other.class_labels))


def _predict_worst_case(weights_q, class_biases_q, s2: int, c_max: int) -> int:
    """Largest magnitude any predict intermediate can reach, exactly."""
    worst = s2 * c_max + c_max // 2
    for k in range(weights_q.shape[1]):
        col = [int(v) for v in weights_q[:, k]]
        pos = sum(v for v in col if v > 0)
        neg = -sum(v for v in col if v < 0)
        bq = abs(int(class_biases_q[k]))
        worst = max(worst, s2 * pos + bq, s2 * neg + bq)
    return worst


def calibrate(kernels: KernelSet, classifier: LinearClassifier,
              input_clamp=DEFAULT_INPUT_CLAMP, bits: int = DEFAULT_BITS) -> Calibration:
    """Both scale factors for a fitted transform and classifier.

    ``s2`` starts at the closed-form value and is lowered only if rounding
    the weights pushes the worst-case partial score past the bit range.
    """
    s1 = calibrate_s1(kernels, input_clamp, bits)
    s2 = calibrate_s2(classifier, bits)
    formula = s2
    c_max = int(kernels.comparison_counts.max())
    limit = int_max(bits)
    while s2 >= 1:
        wq = round_half_away(s2 * classifier.weights)
        bq = round_half_away(float(s2) * s2 * classifier.biases)
        if _predict_worst_case(wq, bq, s2, c_max) <= limit:
            break
        s2 -= 1
    if s2 < 1:
        raise ValueError("bit width insufficient for classifier range")
    b_max = float(np.max(np.abs(kernels.biases.astype(np.float64))))
    return Calibration(bits=bits, input_clamp=int(input_clamp), max_footprint=max_footprint(kernels),
                       max_abs_bias=b_max, s1=s1, s2=s2, s2_formula=0 if s2 == formula else formula)


def quantize_model(kernels: KernelSet, classifier: LinearClassifier,
                   calibration: Calibration | None = None) -> QuantizedModel:
    """Round biases with s1, weights with s2 and classifier biases with s2^2."""
    if calibration is None:
        calibration = calibrate(kernels, classifier)
    if classifier.num_features != kernels.num_features:
        raise ValueError("feature dimension mismatch")
    s1, s2 = calibration.s1, calibration.s2
    biases_q = round_half_away(s1 * kernels.biases.astype(np.float64))
    weights_q = round_half_away(s2 * classifier.weights)
    class_biases_q = round_half_away(float(s2) * s2 * classifier.biases)
    limit = calibration.int_max
    for arr in (biases_q, weights_q, class_biases_q):
        if arr.size and np.abs(arr).max() > limit:
            raise ValueError("quantization overflow (calibration bug)")
    if np.any(kernels.comparison_counts <= 0):
        raise ValueError("comparison counts must be positive")
    return QuantizedModel(kernels=kernels, biases_q=biases_q, weights_q=weights_q,
                          class_biases_q=class_biases_q, calibration=calibration,
                          class_labels=tuple(classifier.class_labels))


def wrap(values, bits: int) -> np.ndarray:
    """Reduce int64 values to signed ``bits``-wide two's complement."""
    values = np.asarray(values, dtype=np.int64)
    if bits >= 64:
        return values
    span = np.int64(1) << np.int64(bits)
    half = np.int64(1) << np.int64(bits - 1)
    return ((values + half) & (span - 1)) - half


def scale_input(windows, calibration: Calibration) -> np.ndarray:
    """Clamp to +-I_m, multiply by s1 and round; int64 holding b-bit values."""
    x = _as_batch(windows).astype(np.float64)
    clamp = float(calibration.input_clamp)
    return round_half_away(np.clip(x, -clamp, clamp) * calibration.s1)


def transform_q_scaled(scaled, qmodel: QuantizedModel) -> np.ndarray:
    """Integer feature counts from already scaled inputs ``[n, C, L]``."""
    ks = qmodel.kernels
    bits = qmodel.calibration.bits
    x = np.asarray(scaled, dtype=np.int64)
    if x.shape[1] != ks.n_channels:
        raise ValueError("channel count mismatch")
    n, _, length = x.shape
    weights = build_kernels().astype(np.int64)
    counts = np.zeros((n, ks.num_features), dtype=np.int64)
    for pair in range(ks.num_pairs):
        feats = ks.pair_features(pair)
        if feats.size == 0:
            continue
        d = int(ks.pair_dilation[pair])
        pad = bool(ks.pair_padding[pair])
        w = weights[int(ks.pair_kernel[pair])]
        out_len = length if pad else length - (KERNEL_LENGTH - 1) * d
        acc = np.zeros((n, out_len), dtype=np.int64)
        half = (KERNEL_LENGTH // 2) * d
        for c in ks.channels_of(pair):
            xc = x[:, c, :]
            for tap in range(KERNEL_LENGTH):
                if pad:
                    shift = tap * d - half
                    lo, hi = max(0, -shift), min(length, length - shift)
                    if hi > lo:
                        acc[:, lo:hi] = wrap(acc[:, lo:hi] + wrap(w[tap] * xc[:, lo + shift:hi + shift], bits), bits)
                else:
                    start = tap * d
                    acc = wrap(acc + wrap(w[tap] * xc[:, start:start + out_len], bits), bits)
        for f in feats:
            counts[:, f] = np.count_nonzero(acc > qmodel.biases_q[f], axis=1)
    return counts


def transform_q(windows, qmodel: QuantizedModel) -> np.ndarray:
    """Integer feature counts in ``[0, C_k]`` for raw milli-G windows."""
    single = np.ndim(windows) < 3
    counts = transform_q_scaled(scale_input(windows, qmodel.calibration), qmodel)
    return counts[0] if single else counts


def quantized_features(counts, qmodel: QuantizedModel) -> np.ndarray:
    """t^q_k = (s2 * count_k + C_k div 2) div C_k."""
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    bits = qmodel.calibration.bits
    c = qmodel.comparison_counts.astype(np.int64)
    assert np.all(counts >= 0) and np.all(c > 0)
    num = wrap(wrap(qmodel.calibration.s2 * counts, bits) + c // 2, bits)
    return num // c


def predict_q(counts, qmodel: QuantizedModel):
    """Return ``(class_index, integer scores)`` from integer feature counts."""
    single = np.ndim(counts) == 1
    tq = quantized_features(counts, qmodel)
    if tq.shape[1] != qmodel.weights_q.shape[0]:
        raise ValueError("feature dimension mismatch")
    bits = qmodel.calibration.bits
    scores = np.broadcast_to(qmodel.class_biases_q, (tq.shape[0], qmodel.num_classes)).astype(np.int64)
    for j in range(tq.shape[1]):
        scores = wrap(scores + wrap(tq[:, j, None] * qmodel.weights_q[j], bits), bits)
    cls = np.argmax(scores, axis=-1)
    return (cls[0], scores[0]) if single else (cls, scores)


def score_slack(classifier: LinearClassifier, calibration: Calibration) -> float:
    """Bound on |quantized score / s2^2 - float score| for identical counts.

    Covers rounding of t^q, W^q and b^q plus float32 accumulation error; a
    top-2 float margin above twice this value guarantees identical argmax.
    """
    s2 = float(calibration.s2)
    t = classifier.num_features
    w_abs = np.abs(classifier.weights).sum(axis=0)
    rounding = (0.5 * t + 0.5 * w_abs) / s2 + (0.25 * t + 0.5) / s2 ** 2
    float_err = (t + 1) * 2.0 ** -23 * (w_abs + np.abs(classifier.biases))
    return float(np.max(rounding + float_err))


def transform_slack(kernels: KernelSet, calibration: Calibration, windows) -> np.ndarray:
    """Per-window bound on |s1 * (conv - bias) - (conv_q - bias_q)| in scaled units."""
    x = _as_batch(windows)
    ch = int(kernels.pair_channels.sum(axis=1).max())
    terms = KERNEL_LENGTH * ch
    peak = np.abs(x).reshape(len(x), -1).max(axis=1).astype(np.float64)
    float_err = terms * 2.0 ** -23 * KERNEL_ABS_SUM * ch * peak + 2.0 ** -23 * calibration.max_abs_bias
    return 0.5 * KERNEL_ABS_SUM * ch + 0.5 + calibration.s1 * float_err


@dataclass
class AgreementReport:
    n_windows: int
    agreement: float
    accuracy_float: float
    accuracy_quant: float
    f1_float: float
    f1_quant: float
    slack: float
    disagreements: list = field(default_factory=list)  # (index, float margin, quant margin)

    @property
    def accuracy_gap(self) -> float:
        return abs(self.accuracy_float - self.accuracy_quant)


def _margin(scores: np.ndarray) -> np.ndarray:
    top2 = np.sort(scores, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def f1_binary(labels, predicted, positive: int = 1) -> float:
    from sklearn.metrics import f1_score

    return float(f1_score(labels, predicted, pos_label=positive, average="binary", zero_division=0))


def validate_pair(kernels: KernelSet, classifier: LinearClassifier, qmodel: QuantizedModel,
                  windows, labels=None, positive: int = 1) -> AgreementReport:
    """Compare float and integer inference on the same windows."""
    x = _as_batch(windows)
    if x.shape[0] == 0:
        raise ValueError("nothing to validate")
    pred_f, scores_f = predict_float(transform(x, kernels), classifier)
    pred_q, scores_q = predict_q(transform_q(x, qmodel), qmodel)
    if labels is None:
        labels = pred_f
    labels = np.asarray(labels)
    mismatch = np.flatnonzero(pred_f != pred_q)
    mf, mq = _margin(scores_f), _margin(scores_q.astype(np.float64))
    return AgreementReport(
        n_windows=len(x),
        agreement=1.0 - len(mismatch) / len(x),
        accuracy_float=float(np.mean(pred_f == labels)),
        accuracy_quant=float(np.mean(pred_q == labels)),
        f1_float=f1_binary(labels, pred_f, positive),
        f1_quant=f1_binary(labels, pred_q, positive),
        slack=2.0 * score_slack(classifier, qmodel.calibration),
        disagreements=[(int(i), float(mf[i]), float(mq[i])) for i in mismatch],
    )


__all__ = [
    "AgreementReport", "Calibration", "QuantizedModel", "DEFAULT_BITS", "DEFAULT_INPUT_CLAMP",
    "NUM_KERNELS", "calibrate", "calibrate_s1", "calibrate_s2", "class_extents", "int_max",
    "predict_q", "quantize_model", "quantized_features", "round_half_away", "scale_factor_s1",
    "scale_factor_s2", "scale_input", "score_slack", "transform_q", "transform_q_scaled",
    "transform_slack", "validate_pair", "wrap",
]
