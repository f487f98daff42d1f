"""Run configuration shared by the command-line tools.

Config files are TOML key/value pairs using the field names below, e.g.::

    sampling_rate = 200
    window_len = 80
    feature_count = 84
    seed = 7
    lambdas = [0.01, 0.1, 1.0, 10.0]
    train_brand = "A"
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .quantize import DEFAULT_BITS, DEFAULT_INPUT_CLAMP
from .ridge import DEFAULT_LAMBDAS


@dataclass
class RunConfig:
    sampling_rate: float = 200.0
    window_len: int = 80
    feature_count: int = 84
    seed: int = 0
    lambdas: list = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    input_clamp: int = DEFAULT_INPUT_CLAMP
    bits: int = DEFAULT_BITS
    train_brand: str = "A"
    train_count: int = 2000
    val_count: int = 200
    test_count: int | None = None
    data_dir: str | None = None  # CSV recordings; synthetic corpus when unset
    corpus_seed: int = 0
    source_rate: float = 3200.0
    recording_seconds: float = 120.0
    train_brand_recordings: int | None = None  # auto-sized from the counts when unset
    other_brand_recordings: int = 2

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 10 <= self.sampling_rate <= 3200:
            raise ValueError("sampling_rate must be in [10, 3200] Hz")
        if not 5 <= self.window_len <= 200:
            raise ValueError("window_len must be in [5, 200] samples")
        if self.window_len < 9:
            raise ValueError("window_len must be >= 9 for 9-tap kernels")
        if self.feature_count % 84 or not 84 <= self.feature_count <= 336:
            raise ValueError("feature_count must be a multiple of 84 in [84, 336]")
        if not 8 <= self.bits <= 64:
            raise ValueError("bits must be in [8, 64]")
        if self.input_clamp <= 0:
            raise ValueError("input_clamp must be positive")
        if self.train_count <= 0 or self.val_count < 0:
            raise ValueError("window counts must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides) -> "RunConfig":
        with open(path, "rb") as fh:
            values = tomllib.load(fh)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(values)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def auto_train_recordings(self, usage_fraction: float = 0.5) -> int:
        """Recordings of the training brand needed to supply the balanced counts."""
        if self.train_brand_recordings is not None:
            return self.train_brand_recordings
        per_class_s = (self.train_count + self.val_count) / 2 * self.window_len / self.sampling_rate
        usable = self.recording_seconds * min(usage_fraction, 1 - usage_fraction) * 0.8
        return max(2, math.ceil(1.15 * per_class_s / usable))
