"""Duty-cycled tag simulation and energy/battery arithmetic.

The node sleeps, wakes on accelerometer motion, acquires one 80-sample
window at 200 Hz, classifies it and piggybacks the result on the next
periodic advertisement.  Energies are in microjoules, powers in microwatts.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pipeline import USAGE, Recording, l1_norm, resample

SECONDS_PER_YEAR = 365.25 * 24 * 3600  # 3.15576e7
GATE_RATE_HZ = 12.5  # accelerometer motion-detection mode
DEFAULT_THRESHOLD_MG = 64.0


@dataclass(frozen=True)
class EnergyProfile:
    idle_power_uw: float = 4.7
    sample_event_uj: float = 630.0
    inference_event_uj: float = 72.0
    advertisement_event_uj: float = 67.0
    advertisement_period_s: float = 7.0
    battery_efficiency: float = 0.8
    battery_voltage: float = 3.0
    window_samples: int = 80
    sample_rate_hz: float = 200.0

    def __post_init__(self):
        values = (self.idle_power_uw, self.sample_event_uj, self.inference_event_uj,
                  self.advertisement_event_uj, self.advertisement_period_s, self.battery_voltage)
        if min(values) <= 0:
            raise ValueError("energy profile values must be positive")
        if not 0 < self.battery_efficiency <= 1:
            raise ValueError("battery efficiency must be in (0, 1]")

    @property
    def window_seconds(self) -> float:
        return self.window_samples / self.sample_rate_hz

    @property
    def baseline_power_uw(self) -> float:
        """Sleep power plus periodic advertising, no motion."""
        return self.idle_power_uw + self.advertisement_event_uj / self.advertisement_period_s


@dataclass
class Event:
    t: float
    kind: str  # wake, sample, infer, advertise, drop
    energy_uj: float
    cum_uj: float = 0.0
    result: int | None = None


@dataclass
class SimTrace:
    duration: float
    profile: EnergyProfile
    events: list = field(default_factory=list)
    runtime_s: float = 0.0  # estimated tool usage, whole advertisement periods only

    @property
    def event_energy_uj(self) -> float:
        return math.fsum(e.energy_uj for e in self.events)

    @property
    def idle_energy_uj(self) -> float:
        return self.profile.idle_power_uw * self.duration

    @property
    def total_energy_uj(self) -> float:
        return self.idle_energy_uj + self.event_energy_uj

    @property
    def average_power_uw(self) -> float:
        return self.total_energy_uj / self.duration

    def count(self, kind: str) -> int:
        return sum(1 for e in self.events if e.kind == kind)

    def times(self, kind: str) -> np.ndarray:
        return np.array([e.t for e in self.events if e.kind == kind])

    def results(self) -> list:
        return [(e.t, e.result) for e in self.events if e.kind == "infer"]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_s", "event", "energy_uJ", "cum_uJ", "result"])
            for e in self.events:
                writer.writerow([f"{e.t:.4f}", e.kind, f"{e.energy_uj:.3f}", f"{e.cum_uj:.3f}",
                                 "" if e.result is None else e.result])


def motion_gate(samples, threshold_mg: float = DEFAULT_THRESHOLD_MG, rate: float = GATE_RATE_HZ,
                hysteresis_s: float = 7.0) -> np.ndarray:
    """Wake times (s) where any axis jumps by more than ``threshold_mg``.

    ``samples`` is (channels, N) at ``rate``; after a wake further triggers
    are ignored for ``hysteresis_s``.
    """
    if threshold_mg <= 0:
        raise ValueError("threshold must be positive")
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if x.shape[1] < 2:
        return np.zeros(0)
    trig = np.flatnonzero(np.any(np.abs(np.diff(x, axis=1)) > threshold_mg, axis=0)) + 1
    wakes, ready = [], -np.inf
    for i in trig:
        t = i / rate
        if t >= ready:
            wakes.append(t)
            ready = t + hysteresis_s
    return np.array(wakes)


def gate_signal(recording: Recording, gate_rate: float = GATE_RATE_HZ) -> np.ndarray:
    """Point-sample a recording at the low-power detection rate (no anti-aliasing)."""
    idx = np.arange(0, recording.n_samples, recording.rate / gate_rate).astype(np.int64)
    return recording.samples[:, idx]


def wake_coverage(wakes, labels, rate: float, period: float = 7.0, positive: int = USAGE) -> float:
    """Fraction of labelled ``positive`` seconds inside some [wake, wake + period)."""
    labels = np.asarray(labels)
    t = np.arange(len(labels)) / rate
    covered = np.zeros(len(labels), dtype=bool)
    for w in wakes:
        covered[(t >= w) & (t < w + period)] = True
    mask = labels == positive
    return float(covered[mask].mean()) if mask.any() else 1.0


@dataclass
class Scenario:
    """Motion description: activity intervals and/or a labelled 3-axis signal."""

    intervals: list = field(default_factory=list)  # (t_start, t_end, activity)
    signal: Recording | None = None

    @classmethod
    def from_json(cls, path) -> "Scenario":
        items = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(intervals=[(float(i["t_start_s"]), float(i["t_end_s"]), str(i["activity"])) for i in items])

    def to_json(self, path) -> None:
        items = [{"t_start_s": a, "t_end_s": b, "activity": c} for a, b, c in self.intervals]
        Path(path).write_text(json.dumps(items, indent=2), encoding="utf-8")


def _interval_wakes(intervals, hysteresis: float, duration: float) -> list:
    from .synth import activity_kind

    moving = sorted((a, min(b, duration)) for a, b, act in intervals
                    if activity_kind(act) != "idle" and a < duration)
    wakes, ready = [], -np.inf
    for start, end in moving:
        t = max(start, ready)
        while t < end:
            wakes.append(t)
            ready = t + hysteresis
            t = ready
    return wakes


def _motion_end(intervals, t: float) -> float:
    from .synth import activity_kind

    ends = [b for a, b, act in intervals if activity_kind(act) != "idle" and a <= t < b]
    return max(ends) if ends else t


def simulate(scenario: Scenario, bundle=None, profile: EnergyProfile | None = None,
             duration: float | None = None, threshold_mg: float = DEFAULT_THRESHOLD_MG,
             use_quantized: bool = True) -> SimTrace:
    """Run the sleep/wake/sample/infer/advertise state machine.

    Wakes come from the motion gate on ``scenario.signal`` when present,
    otherwise from the activity intervals.  With a bundle and a signal each
    acquired window is classified; the result rides on the next
    advertisement and every Usage advertisement adds one period of runtime.
    """
    profile = profile or EnergyProfile()
    sig = scenario.signal
    if duration is None:
        duration = sig.duration if sig is not None else max((b for _, b, _ in scenario.intervals), default=0.0)
    if duration <= 0:
        raise ValueError("duration must be positive")
    period = profile.advertisement_period_s
    win_s = profile.window_seconds

    fused = None
    if sig is not None:
        wakes = [t for t in motion_gate(gate_signal(sig), threshold_mg, GATE_RATE_HZ, period) if t < duration]
        if bundle is not None:
            fused = l1_norm(resample(sig, profile.sample_rate_hz)).samples[0]
        available_until = sig.duration
    else:
        wakes = _interval_wakes(scenario.intervals, period, duration)

    events: list[Event] = []
    pending = None
    last_period = -1
    for t in wakes:
        events.append(Event(t, "wake", 0.0))
        p = int(t // period)
        if p == last_period:
            continue
        end = available_until if sig is not None else _motion_end(scenario.intervals, t)
        if min(end, duration) - t < win_s - 1e-9:
            warnings.warn(f"motion at t={t:.2f}s shorter than one window; event dropped", stacklevel=2)
            events.append(Event(t, "drop", 0.0))
            continue
        last_period = p
        events.append(Event(t, "sample", profile.sample_event_uj))
        result = None
        if fused is not None:
            start = int(round(t * profile.sample_rate_hz))
            window = fused[start:start + profile.window_samples].astype(np.float32)
            result = classify_window(window, bundle, use_quantized)
        events.append(Event(t + win_s, "infer", profile.inference_event_uj, result=result))

    ads = [k * period for k in range(1, int(math.floor(duration / period + 1e-9)) + 1)]
    events += [Event(t, "advertise", profile.advertisement_event_uj) for t in ads]
    order = {"wake": 0, "sample": 1, "drop": 1, "infer": 2, "advertise": 3}
    events.sort(key=lambda e: (e.t, order[e.kind]))

    trace = SimTrace(duration=duration, profile=profile)
    cum_events = 0.0
    runtime = 0.0
    for e in events:
        cum_events += e.energy_uj
        e.cum_uj = profile.idle_power_uw * e.t + cum_events
        if e.kind == "infer":
            pending = e.result
        elif e.kind == "advertise":
            e.result = pending
            if pending == USAGE:
                runtime += period
            pending = None
    trace.events = events
    trace.runtime_s = runtime
    return trace


def classify_window(window, bundle, use_quantized: bool = True) -> int:
    from .kernels import transform
    from .quantize import predict_q, transform_q
    from .ridge import predict_float

    x = np.asarray(window, dtype=np.float32).reshape(1, 1, -1)
    if use_quantized and bundle.quantized is not None:
        cls, _ = predict_q(transform_q(x, bundle.quantized), bundle.quantized)
    else:
        cls, _ = predict_float(transform(x, bundle.kernels), bundle.classifier)
    return int(cls[0])


@dataclass
class BatteryEstimate:
    years: float
    capacity_mah: float
    usage_hours_per_year: float
    budget_j: float
    annual_j: dict

    @property
    def annual_total_j(self) -> float:
        return sum(self.annual_j.values())


def annual_energy_j(profile: EnergyProfile, usage_hours_per_year: float) -> dict:
    per_usage_second = (profile.sample_event_uj + profile.inference_event_uj) / profile.advertisement_period_s
    return {
        "idle": profile.idle_power_uw * SECONDS_PER_YEAR * 1e-6,
        "advertising": profile.advertisement_event_uj / profile.advertisement_period_s * SECONDS_PER_YEAR * 1e-6,
        "sampling_inference": per_usage_second * usage_hours_per_year * 3600 * 1e-6,
    }


def battery_budget_j(profile: EnergyProfile, capacity_mah: float) -> float:
    return capacity_mah * 1e-3 * profile.battery_voltage * 3600 * profile.battery_efficiency


def battery_life(profile: EnergyProfile, capacity_mah: float, usage_hours_per_year: float = 0.0) -> BatteryEstimate:
    """Years until the usable charge is spent at a steady yearly usage."""
    if capacity_mah <= 0:
        raise ValueError("capacity must be positive")
    if usage_hours_per_year < 0:
        raise ValueError("usage hours must be non-negative")
    budget = battery_budget_j(profile, capacity_mah)
    annual = annual_energy_j(profile, usage_hours_per_year)
    return BatteryEstimate(years=budget / sum(annual.values()), capacity_mah=capacity_mah,
                           usage_hours_per_year=usage_hours_per_year, budget_j=budget, annual_j=annual)


def battery_life_for_runtime(profile: EnergyProfile, capacity_mah: float, total_runtime_hours: float) -> float:
    """Years of standby left after also covering ``total_runtime_hours`` of tool use in total."""
    if capacity_mah <= 0 or total_runtime_hours < 0:
        raise ValueError("capacity must be positive and runtime non-negative")
    budget = battery_budget_j(profile, capacity_mah)
    base = annual_energy_j(profile, 0.0)
    usage = annual_energy_j(profile, total_runtime_hours)["sampling_inference"]
    if usage >= budget:
        return 0.0
    return (budget - usage) / (base["idle"] + base["advertising"])
