"""Accelerometer preprocessing: resampling, L1 fusion, windowing and splits."""

from __future__ import annotations

import csv
import json
import struct
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal

TRANSPORTATION = 0
USAGE = 1
CLASS_NAMES = ("Transportation", "Usage")

DEFAULT_TAPS = 101
CUTOFF_FRACTION = 0.45
# Filter length per decimation ratio so tones above the new Nyquist land in the stop band.
TAPS_PER_RATIO = 40


@dataclass
class Recording:
    samples: np.ndarray  # (channels, N) milli-G
    rate: float
    labels: np.ndarray  # (N,)
    brand: str = ""
    family: str = ""
    activity: str = ""
    rec_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape[0] != self.samples.shape[1]:
            raise ValueError("label array length must match sample count")
        if self.rate <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.rate


def design_fir_lowpass(target_rate: float, source_rate: float, taps: int = DEFAULT_TAPS) -> np.ndarray:
    """Hamming windowed-sinc low-pass with cutoff at 0.45 * target_rate, unit DC gain."""
    if target_rate >= source_rate:
        raise ValueError("upsampling not supported")
    if taps < 11 or taps % 2 == 0:
        raise ValueError("taps must be odd and >= 11")
    h = signal.firwin(taps, CUTOFF_FRACTION * target_rate, window="hamming", fs=source_rate)
    return h / h.sum()


def rate_ratio(source_rate: float, target_rate: float, max_denominator: int = 4096) -> Fraction:
    ratio = Fraction(target_rate) / Fraction(source_rate)
    if ratio.denominator > max_denominator or ratio.numerator > max_denominator:
        raise ValueError("unsupported rate pair")
    return ratio


def resample_taps(up: int, down: int) -> int:
    # the filter runs at up * source, which is ``down`` times the target rate
    taps = max(DEFAULT_TAPS, TAPS_PER_RATIO * down)
    return taps + 1 - taps % 2


def resample(recording: Recording, target_rate: float, taps: int | None = None) -> Recording:
    """Anti-aliased polyphase resampling; labels follow the nearest source sample."""
    if target_rate <= 0:
        raise ValueError("sample rate must be positive")
    if target_rate == recording.rate:
        return replace(recording, samples=recording.samples.copy(), labels=recording.labels.copy())
    if target_rate > recording.rate:
        raise ValueError("upsampling not supported")
    ratio = rate_ratio(recording.rate, target_rate)
    up, down = ratio.numerator, ratio.denominator
    if taps is None:
        taps = resample_taps(up, down)
    h = design_fir_lowpass(target_rate, recording.rate * up, taps)
    out = signal.resample_poly(recording.samples.astype(np.float64), up, down, axis=1,
                               window=h, padtype="line")
    n_out = out.shape[1]
    src_idx = np.rint(np.arange(n_out) * (recording.rate / target_rate)).astype(np.int64)
    labels = recording.labels[np.clip(src_idx, 0, recording.n_samples - 1)]
    return replace(recording, samples=out, rate=float(target_rate), labels=labels)


def l1_norm(recording: Recording) -> Recording:
    if recording.samples.shape[0] != 3:
        raise ValueError("expected tri-axial input")
    fused = np.abs(recording.samples).sum(axis=0, keepdims=True)
    return replace(recording, samples=fused, labels=recording.labels.copy())


def uniform_grid(timestamps, samples, labels, rate: float):
    """Linear interpolation of jittered samples onto an exact rate grid."""
    t = np.asarray(timestamps, dtype=np.float64)
    grid = t[0] + np.arange(int(np.floor((t[-1] - t[0]) * rate)) + 1) / rate
    values = np.vstack([np.interp(grid, t, row) for row in np.atleast_2d(samples)])
    nearest = np.clip(np.searchsorted(t, grid), 0, len(t) - 1)
    prev = np.clip(nearest - 1, 0, len(t) - 1)
    pick = np.where(np.abs(t[prev] - grid) <= np.abs(t[nearest] - grid), prev, nearest)
    return values, np.asarray(labels)[pick]


def load_recording_csv(path, rate: float | None = None) -> Recording:
    """Read ``t_s,ax_mg,ay_mg,az_mg,label`` plus a JSON sidecar of metadata."""
    path = Path(path)
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text(encoding="utf-8")) if sidecar.exists() else {}
    rate = float(rate or meta.get("source_rate_hz", 0))
    if rate <= 0:
        raise ValueError("source rate unknown: add source_rate_hz to the sidecar")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, encoding="utf-8")
    samples, labels = uniform_grid(data[:, 0], data[:, 1:4].T, data[:, 4].astype(np.int64), rate)
    return Recording(samples=samples, rate=rate, labels=labels, brand=meta.get("brand", ""),
                     family=meta.get("family", ""), activity=meta.get("activity", ""),
                     rec_id=meta.get("rec_id", path.stem), meta=meta)


def save_recording_csv(recording: Recording, path) -> None:
    path = Path(path)
    t = np.arange(recording.n_samples) / recording.rate
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "ax_mg", "ay_mg", "az_mg", "label"])
        for i in range(recording.n_samples):
            ax, ay, az = recording.samples[:, i]
            writer.writerow([f"{t[i]:.9f}", f"{ax:.3f}", f"{ay:.3f}", f"{az:.3f}", int(recording.labels[i])])
    meta = {"brand": recording.brand, "family": recording.family, "activity": recording.activity,
            "source_rate_hz": recording.rate, "rec_id": recording.rec_id}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2), encoding="utf-8")


@dataclass
class WindowSet:
    windows: np.ndarray  # (n, channels, length) float32
    labels: np.ndarray
    rec_ids: np.ndarray  # recording identity of each window
    starts: np.ndarray

    def __len__(self):
        return len(self.labels)

    @classmethod
    def empty(cls, channels: int, length: int) -> "WindowSet":
        return cls(np.zeros((0, channels, length), np.float32), np.zeros(0, np.int64),
                   np.zeros(0, dtype=object), np.zeros(0, np.int64))


@dataclass
class DatasetSplit:
    train: WindowSet
    val: WindowSet
    test: WindowSet
    policy: dict = field(default_factory=dict)


def pure_windows(recordings, window_len: int):
    """All non-overlapping windows whose samples share one label."""
    if window_len < 9:
        raise ValueError("window_len must be >= 9")
    refs = []
    for r_index, rec in enumerate(recordings):
        n = rec.n_samples // window_len
        if n == 0:
            continue
        lab = rec.labels[: n * window_len].reshape(n, window_len)
        pure = np.all(lab == lab[:, :1], axis=1)
        for w in np.flatnonzero(pure):
            refs.append((r_index, int(w) * window_len, int(lab[w, 0])))
    return refs


def _gather(recordings, refs, window_len: int) -> WindowSet:
    if not refs:
        ch = recordings[0].samples.shape[0] if recordings else 1
        return WindowSet.empty(ch, window_len)
    windows = np.stack([recordings[r].samples[:, s:s + window_len] for r, s, _ in refs]).astype(np.float32)
    return WindowSet(windows=windows, labels=np.array([lab for _, _, lab in refs], dtype=np.int64),
                     rec_ids=np.array([recordings[r].rec_id for r, _, _ in refs], dtype=object),
                     starts=np.array([s for _, s, _ in refs], dtype=np.int64))


def window_dataset(recordings, window_len: int, train_count: int, val_count: int, seed: int,
                   n_classes: int = 2):
    """Balanced seeded sample of pure-label windows into (train, val).

    Every class contributes exactly ``count / n_classes`` windows to each set.
    """
    if isinstance(recordings, Recording):
        recordings = [recordings]
    if train_count % n_classes or val_count % n_classes:
        raise ValueError("counts must split evenly across classes")
    refs = pure_windows(recordings, window_len)
    rng = np.random.default_rng(seed)
    per_train, per_val = train_count // n_classes, val_count // n_classes
    train_refs, val_refs = [], []
    for cls in range(n_classes):
        pool = [ref for ref in refs if ref[2] == cls]
        if len(pool) < per_train + per_val:
            raise ValueError(f"cannot balance: class {cls} exhausted ({len(pool)} pure windows)")
        pick = rng.choice(len(pool), per_train + per_val, replace=False)
        train_refs += [pool[i] for i in np.sort(pick[:per_train])]
        val_refs += [pool[i] for i in np.sort(pick[per_train:])]
    return _gather(recordings, train_refs, window_len), _gather(recordings, val_refs, window_len)


def split_by_brand(recordings, train_brand: str, window_len: int, train_count: int,
                   val_count: int, seed: int, test_count: int | None = None) -> DatasetSplit:
    """Train/val from one brand only, test from every other brand."""
    recordings = list(recordings)
    if train_brand not in {r.brand for r in recordings}:
        raise ValueError(f"brand not found: {train_brand}")
    own = [r for r in recordings if r.brand == train_brand]
    rest = [r for r in recordings if r.brand != train_brand]
    train, val = window_dataset(own, window_len, train_count, val_count, seed)
    if not rest:
        warnings.warn("single-brand corpus: test set is empty", stacklevel=2)
        test = WindowSet.empty(own[0].samples.shape[0], window_len)
    else:
        refs = pure_windows(rest, window_len)
        if test_count is not None and test_count < len(refs):
            pick = np.random.default_rng(seed + 1).choice(len(refs), test_count, replace=False)
            refs = [refs[i] for i in np.sort(pick)]
        test = _gather(rest, refs, window_len)
    policy = {"policy": "brand-held-out", "train_brand": train_brand,
              "test_brands": sorted({r.brand for r in rest})}
    return DatasetSplit(train=train, val=val, test=test, policy=policy)


def prepare(recordings, target_rate: float):
    """Resample then fuse the three axes, recording by recording."""
    for rec in recordings:
        yield l1_norm(resample(rec, target_rate))


_WIN_MAGIC = b"RKLW"
_WIN_VERSION = 1


def save_windows(windows: WindowSet, path) -> None:
    x = np.asarray(windows.windows, dtype="<f4")
    n, ch, length = x.shape
    with open(path, "wb") as fh:
        fh.write(_WIN_MAGIC + struct.pack("<4I", _WIN_VERSION, length, ch, n))
        fh.write(x.tobytes())
        fh.write(np.asarray(windows.labels, dtype="<u2").tobytes())


def load_windows(path) -> WindowSet:
    data = Path(path).read_bytes()
    if data[:4] != _WIN_MAGIC or len(data) < 20:
        raise ValueError("not a window archive")
    version, length, ch, n = struct.unpack_from("<4I", data, 4)
    if version != _WIN_VERSION:
        raise ValueError(f"unsupported window archive version {version}")
    body = 20 + 4 * n * ch * length
    if len(data) != body + 2 * n:
        raise ValueError("window archive truncated")
    x = np.frombuffer(data, dtype="<f4", count=n * ch * length, offset=20).reshape(n, ch, length)
    labels = np.frombuffer(data, dtype="<u2", count=n, offset=body).astype(np.int64)
    return WindowSet(windows=x.astype(np.float32), labels=labels,
                     rec_ids=np.zeros(n, dtype=object), starts=np.zeros(n, np.int64))
