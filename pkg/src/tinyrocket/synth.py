"""Seeded synthetic power-tool accelerometer corpus.

Usage segments are harmonic tool vibration (fundamental 40-120 Hz, set by
tool family and shifted per brand) with impact transients; Transportation
segments are slow (< 5 Hz) body motion.  Both ride on a slowly drifting
1 g gravity vector plus sensor noise.  All values are milli-G.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .pipeline import TRANSPORTATION, USAGE, Recording

BRANDS = ("A", "B", "C", "D", "E", "F")
# family -> (fundamental Hz, impact rate Hz or 0 for sporadic impacts)
FAMILIES = {
    "jigsaw": (45.0, 0.0),
    "circular_saw": (95.0, 0.0),
    "gas_saw": (110.0, 0.0),
    "combi_hammer": (60.0, 22.0),
    "diamond_coring": (75.0, 0.0),
    "breaker": (40.0, 18.0),
}
USAGE_ACTIVITIES = ("wood_sawing", "metal_cutting", "concrete_cutting", "drilling",
                    "chiselling", "core_drilling", "demolition")
TRANSPORT_ACTIVITIES = ("car_driving", "walking", "carrying", "forklift", "cart_pushing")
IDLE_ACTIVITIES = ("idle", "none", "rest")

GRAVITY_MG = 1000.0
SENSOR_NOISE_MG = 4.0


@dataclass
class SynthConfig:
    brands: tuple = BRANDS
    families: tuple = tuple(FAMILIES)
    recordings_per_brand: int | dict = 2
    recording_seconds: float = 120.0
    segment_seconds: tuple = (20.0, 40.0)
    source_rate: float = 3200.0
    usage_fraction: float = 0.5
    extra: dict = field(default_factory=dict)

    def count_for(self, brand: str) -> int:
        if isinstance(self.recordings_per_brand, dict):
            return int(self.recordings_per_brand.get(brand, 0))
        return int(self.recordings_per_brand)


@dataclass(frozen=True)
class BrandProfile:
    freq_scale: float
    amp_scale: float
    harmonic_tilt: float
    impact_scale: float
    resonance_hz: float


def brand_profile(seed: int, brand_index: int) -> BrandProfile:
    rng = np.random.default_rng([seed, 104729, brand_index])
    return BrandProfile(freq_scale=float(rng.uniform(0.85, 1.15)), amp_scale=float(rng.uniform(0.6, 1.5)),
                        harmonic_tilt=float(rng.uniform(0.3, 0.8)), impact_scale=float(rng.uniform(0.5, 1.5)),
                        resonance_hz=float(rng.uniform(25.0, 55.0)))


def _lowpass_noise(rng, n: int, rate: float, cutoff: float, scale: float) -> np.ndarray:
    sos = signal.butter(2, cutoff, fs=rate, output="sos")
    x = signal.sosfilt(sos, rng.standard_normal((3, n)), axis=1)
    std = x.std(axis=1, keepdims=True)
    return scale * x / np.where(std > 0, std, 1.0)


def _usage(rng, n: int, rate: float, f0: float, impact_rate: float, brand: BrandProfile) -> np.ndarray:
    t = np.arange(n) / rate
    drift = 1.0 + 0.03 * _lowpass_noise(rng, n, rate, 0.5, 1.0)[0]
    phase = 2 * np.pi * np.cumsum(f0 * drift) / rate
    amp = brand.amp_scale * rng.uniform(300.0, 900.0)
    axis_gain = rng.uniform(0.4, 1.0, size=(3, 1))
    env = np.clip(0.7 + 0.25 * _lowpass_noise(rng, n, rate, 1.0, 1.0)[0], 0.3, 1.0)
    x = np.zeros((3, n))
    # shaft-rate imbalance at half the fundamental, then the harmonic series
    for h, weight in ((0.5, 0.6), (1, 1.0), (2, brand.harmonic_tilt), (3, brand.harmonic_tilt ** 2)):
        offset = rng.uniform(0, 2 * np.pi, size=(3, 1))
        x += weight * np.sin(h * phase + offset)
    x *= amp * axis_gain * env

    # impact transients ringing at a low structural resonance
    if impact_rate > 0:
        times = np.arange(rng.uniform(0, 1 / impact_rate), t[-1] if n else 0, 1 / impact_rate)
        times = times + rng.normal(0, 0.002, times.shape)
    else:
        times = np.sort(rng.uniform(0, t[-1] if n else 0, rng.poisson(8.0 * n / rate)))
    ring_len = int(0.1 * rate)
    tau = rng.uniform(0.015, 0.035)
    ring_t = np.arange(ring_len) / rate
    resonance = np.clip(brand.resonance_hz * rng.uniform(0.9, 1.1), 20.0, 60.0)
    ring = np.exp(-ring_t / tau) * np.sin(2 * np.pi * resonance * ring_t)
    impulses = np.zeros((3, n))
    idx = np.clip((times * rate).astype(np.int64), 0, max(n - 1, 0))
    impulses[:, idx] = rng.normal(0, 1, (3, len(idx))) * brand.impact_scale * rng.uniform(200, 700)
    x += signal.fftconvolve(impulses, ring[None, :], axes=1)[:, :n]
    # operator handling
    x += _lowpass_noise(rng, n, rate, rng.uniform(0.8, 3.0), rng.uniform(50.0, 150.0))
    return x


def _transport(rng, n: int, rate: float, mode: str) -> np.ndarray:
    x = _lowpass_noise(rng, n, rate, rng.uniform(0.8, 3.0), rng.uniform(120.0, 350.0))
    t = np.arange(n) / rate
    if mode == "walking" or mode == "carrying":
        gait = rng.uniform(1.5, 2.2)
        x += rng.uniform(100, 250) * np.sin(2 * np.pi * gait * t + rng.uniform(0, 2 * np.pi, (3, 1)))
    if mode in ("car_driving", "forklift", "cart_pushing"):
        sos = signal.butter(2, (10.0, 40.0), btype="bandpass", fs=rate, output="sos")
        x += signal.sosfilt(sos, rng.normal(0, rng.uniform(5.0, 20.0), (3, n)), axis=1)
    x += rng.normal(0, rng.uniform(3.0, 10.0), (3, n))
    return x


def _gravity(rng, n: int, rate: float) -> np.ndarray:
    angles = np.cumsum(rng.normal(0, 0.02, (2, n)), axis=1) / np.sqrt(rate) + rng.uniform(0, np.pi, (2, 1))
    theta, phi = angles
    return GRAVITY_MG * np.vstack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def render(segments, rate: float, rng, f0: float, impact_rate: float, brand: BrandProfile,
           transport_mode: str = "walking"):
    """Render ``[(kind, seconds)]`` into (samples, labels); kind in usage/transport/idle."""
    lengths = [int(round(sec * rate)) for _, sec in segments]
    total = sum(lengths)
    samples = np.zeros((3, total))
    labels = np.zeros(total, dtype=np.int64)
    pos = 0
    for (kind, _), n in zip(segments, lengths):
        if n == 0:
            continue
        if kind == "usage":
            samples[:, pos:pos + n] = _usage(rng, n, rate, f0, impact_rate, brand)
            labels[pos:pos + n] = USAGE
        elif kind == "transport":
            samples[:, pos:pos + n] = _transport(rng, n, rate, transport_mode)
            labels[pos:pos + n] = TRANSPORTATION
        else:
            labels[pos:pos + n] = TRANSPORTATION
        pos += n
    if total:
        samples += _gravity(rng, total, rate) + rng.normal(0, SENSOR_NOISE_MG, (3, total))
    return samples, labels


def _segments(rng, seconds: float, bounds, usage_fraction: float):
    segs, elapsed = [], 0.0
    kind = "usage" if rng.random() < usage_fraction else "transport"
    while elapsed < seconds - 1e-9:
        dur = min(rng.uniform(*bounds), seconds - elapsed)
        segs.append((kind, dur))
        elapsed += dur
        kind = "transport" if kind == "usage" else "usage"
    return segs


def iter_recordings(config: SynthConfig, seed: int = 0):
    """Yield recordings one at a time (3.2 kHz corpora are large)."""
    for b_index, brand in enumerate(config.brands):
        profile = brand_profile(seed, b_index)
        for r in range(config.count_for(brand)):
            if config.recording_seconds <= 0:
                continue
            rng = np.random.default_rng([seed, b_index, r])
            family = config.families[(r + b_index) % len(config.families)]
            base_f0, impact_rate = FAMILIES[family]
            f0 = float(np.clip(base_f0 * profile.freq_scale * rng.uniform(0.97, 1.03), 40.0, 120.0))
            usage_act = USAGE_ACTIVITIES[int(rng.integers(len(USAGE_ACTIVITIES)))]
            mode = TRANSPORT_ACTIVITIES[int(rng.integers(len(TRANSPORT_ACTIVITIES)))]
            segs = _segments(rng, config.recording_seconds, config.segment_seconds, config.usage_fraction)
            samples, labels = render(segs, config.source_rate, rng, f0, impact_rate, profile, mode)
            yield Recording(samples=samples, rate=config.source_rate, labels=labels, brand=brand,
                            family=family, activity=f"{usage_act}+{mode}", rec_id=f"{brand}-{r:04d}",
                            meta={"fundamental_hz": f0, "usage_activity": usage_act,
                                  "transport_mode": mode, "segments": segs})


def synth_generate(config: SynthConfig, seed: int = 0) -> list:
    return list(iter_recordings(config, seed))


def activity_kind(activity: str) -> str:
    if activity in USAGE_ACTIVITIES or activity == "usage":
        return "usage"
    if activity in TRANSPORT_ACTIVITIES or activity == "transport":
        return "transport"
    if activity in IDLE_ACTIVITIES:
        return "idle"
    raise ValueError(f"unknown activity: {activity}")


def scenario_recording(intervals, duration: float, seed: int = 0, brand_index: int = 0,
                       family: str = "jigsaw", rate: float = 3200.0) -> Recording:
    """Render a ``[(t_start, t_end, activity)]`` scenario; gaps are idle."""
    rng = np.random.default_rng([seed, 31337])
    profile = brand_profile(seed, brand_index)
    segs, t = [], 0.0
    for start, end, activity in sorted(intervals):
        if start > t:
            segs.append(("idle", start - t))
        segs.append((activity_kind(activity), end - max(start, t)))
        t = max(t, end)
    if duration > t:
        segs.append(("idle", duration - t))
    base_f0, impact_rate = FAMILIES[family]
    samples, labels = render(segs, rate, rng, base_f0 * profile.freq_scale, impact_rate, profile)
    return Recording(samples=samples, rate=rate, labels=labels, brand=BRANDS[brand_index],
                     family=family, activity="scenario", rec_id="scenario")
