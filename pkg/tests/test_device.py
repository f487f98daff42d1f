import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tinyrocket import device as dev
from tinyrocket import kernels, quantize, ridge
from tinyrocket.bundle import ModelBundle
from tinyrocket.device import EnergyProfile, Scenario, simulate
from tinyrocket.pipeline import USAGE, split_by_brand
from tinyrocket.synth import scenario_recording

P = EnergyProfile()


@pytest.fixture(scope="module")
def small_bundle(small_prepared):
    split = split_by_brand(small_prepared, "A", 80, 400, 40, seed=0)
    ks = kernels.fit(split.train.windows, 84, seed=0)
    clf = ridge.train_ridge(kernels.transform(split.train.windows, ks), split.train.labels)
    return ModelBundle(kernels=ks, classifier=clf, quantized=quantize.quantize_model(ks, clf))


def test_profile_defaults():
    assert P.baseline_power_uw == pytest.approx(4.7 + 67 / 7)
    assert P.window_seconds == pytest.approx(0.4)
    with pytest.raises(ValueError):
        EnergyProfile(battery_efficiency=1.5)


def test_no_motion_hour():
    trace = simulate(Scenario(), duration=3600.0)
    assert trace.count("advertise") == 514
    assert trace.count("sample") == 0
    expected = 3600 * 4.7 + (3600 / 7) * 67
    assert trace.total_energy_uj == pytest.approx(expected, rel=1e-3)
    assert trace.average_power_uw == pytest.approx(14.27, abs=0.01)
    assert trace.average_power_uw < 15


def test_continuous_motion_inference_cap():
    trace = simulate(Scenario([(0.0, 3600.0, "wood_sawing")]), duration=3600.0)
    t = trace.times("infer")
    assert len(t) == 3600 // 7 + 1
    # at most one inference in any window of one advertisement period
    assert np.all(np.diff(t) >= 7.0 - 1e-9)
    for start in np.arange(0, 3600, 0.5):
        assert np.count_nonzero((t >= start) & (t < start + 7.0)) <= 1


def test_single_burst_adds_one_window():
    quiet = simulate(Scenario(), duration=60.0)
    burst = simulate(Scenario([(10.0, 10.4, "drilling")]), duration=60.0)
    assert burst.count("sample") == 1 and burst.count("infer") == 1
    assert burst.total_energy_uj - quiet.total_energy_uj == pytest.approx(630 + 72)


def test_short_motion_dropped_with_warning():
    with pytest.warns(UserWarning, match="shorter than one window"):
        trace = simulate(Scenario([(10.0, 10.2, "drilling")]), duration=60.0)
    assert trace.count("drop") == 1 and trace.count("sample") == 0


def test_ledger_additivity_and_monotone():
    trace = simulate(Scenario([(5.0, 30.0, "drilling"), (50.0, 90.0, "walking")]), duration=120.0)
    events = math.fsum(e.energy_uj for e in trace.events)
    assert trace.total_energy_uj == pytest.approx(P.idle_power_uw * 120.0 + events, rel=1e-12)
    cum = [e.cum_uj for e in trace.events]
    assert all(b >= a for a, b in zip(cum, cum[1:]))
    assert cum[-1] <= trace.total_energy_uj + 1e-9


def test_motion_gate_examples():
    assert len(dev.motion_gate(np.zeros((3, 500)))) == 0
    step = np.zeros((3, 500))
    step[1, 100:] = 2 * dev.DEFAULT_THRESHOLD_MG
    wakes = dev.motion_gate(step)
    assert len(wakes) == 1 and wakes[0] == pytest.approx(100 / dev.GATE_RATE_HZ)
    with pytest.raises(ValueError):
        dev.motion_gate(step, threshold_mg=0)


def test_motion_gate_hysteresis():
    x = np.zeros((1, 1000))
    x[0, ::2] = 500  # toggles on every sample
    wakes = dev.motion_gate(x, rate=10.0, hysteresis_s=7.0)
    assert np.allclose(np.diff(wakes), 7.0)


def test_usage_wake_coverage():
    intervals = [(10.0, 40.0, "wood_sawing"), (60.0, 75.0, "walking"), (90.0, 150.0, "drilling")]
    rec = scenario_recording(intervals, 180.0, seed=2)
    gated = dev.gate_signal(rec)
    wakes = dev.motion_gate(gated)
    assert dev.wake_coverage(wakes, rec.labels, rec.rate) >= 0.95
    # idle stretches do not wake the node
    assert not np.any((wakes > 1.0) & (wakes < 9.0))


def test_signal_scenario_runtime_granularity(small_bundle):
    intervals = [(5.0, 60.0, "concrete_cutting"), (70.0, 100.0, "car_driving")]
    rec = scenario_recording(intervals, 120.0, seed=1, rate=3200.0)
    trace = simulate(Scenario(intervals, signal=rec), bundle=small_bundle)
    assert trace.count("infer") >= 5
    assert trace.runtime_s % P.advertisement_period_s == 0
    results = [r for _, r in trace.results()]
    assert USAGE in results
    usage_ads = sum(1 for e in trace.events if e.kind == "advertise" and e.result == USAGE)
    assert trace.runtime_s == usage_ads * 7.0


def test_battery_examples():
    zero = dev.battery_life(P, 225, 0)
    assert zero.budget_j == pytest.approx(1944.0)
    assert zero.annual_total_j == pytest.approx(14.271428 * 31.5576, rel=1e-5)
    assert zero.years == pytest.approx(4.32, abs=0.01)
    big = dev.battery_life(P, 500, 100)
    assert 8 <= big.years <= 10
    assert dev.battery_life(P, 500, 0).years == pytest.approx(9.6, abs=0.05)


def test_battery_lifetime_runtime_reading():
    # 1500 h of tool use spread over the whole battery life
    assert dev.battery_life_for_runtime(P, 225, 1500) >= 3.0
    assert dev.battery_life_for_runtime(P, 225, 1e9) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 5000), st.floats(1, 5000), st.floats(50, 1000))
def test_battery_monotone(hours, extra, capacity):
    a = dev.battery_life(P, capacity, hours).years
    assert dev.battery_life(P, capacity, hours + extra).years < a
    assert dev.battery_life(P, capacity + 10, hours).years > a


def test_scenario_json_and_trace_csv(tmp_path):
    sc = Scenario([(1.0, 20.0, "drilling"), (30.0, 35.0, "walking")])
    sc.to_json(tmp_path / "s.json")
    back = Scenario.from_json(tmp_path / "s.json")
    assert back.intervals == sc.intervals
    trace = simulate(back, duration=60.0)
    trace.write_csv(tmp_path / "t.csv")
    with open(tmp_path / "t.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["t_s", "event", "energy_uJ", "cum_uJ", "result"]
    assert len(rows) == len(trace.events)
