"""End-to-end training, evaluation and hyperparameter scanning."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import kernels as kern
from .bundle import ModelBundle, footprint
from .config import RunConfig
from .pipeline import CLASS_NAMES, DatasetSplit, load_recording_csv, prepare, split_by_brand
from .quantize import calibrate, f1_binary, quantize_model, validate_pair
from .ridge import predict_float, train_ridge
from .synth import BRANDS, SynthConfig, iter_recordings


def synth_config(config: RunConfig) -> SynthConfig:
    counts = {b: config.other_brand_recordings for b in BRANDS}
    counts[config.train_brand] = config.auto_train_recordings()
    return SynthConfig(recordings_per_brand=counts, recording_seconds=config.recording_seconds,
                       source_rate=config.source_rate)


def raw_recordings(config: RunConfig):
    """Source-rate recordings: CSV files under ``data_dir`` or the synthetic corpus."""
    if config.data_dir:
        paths = sorted(Path(config.data_dir).glob("*.csv"))
        if not paths:
            raise ValueError(f"no CSV recordings in {config.data_dir}")
        return (load_recording_csv(p) for p in paths)
    return iter_recordings(synth_config(config), config.corpus_seed)


def prepared_recordings(config: RunConfig) -> list:
    return list(prepare(raw_recordings(config), config.sampling_rate))


def build_split(config: RunConfig, prepared=None) -> DatasetSplit:
    if prepared is None:
        prepared = prepared_recordings(config)
    return split_by_brand(prepared, config.train_brand, config.window_len, config.train_count,
                          config.val_count, config.seed, config.test_count)


def fit_bundle(config: RunConfig, split: DatasetSplit) -> ModelBundle:
    ks = kern.fit(split.train.windows, config.feature_count, seed=config.seed)
    clf = train_ridge(kern.transform(split.train.windows, ks), split.train.labels,
                      lambdas=config.lambdas, n_classes=len(CLASS_NAMES), class_labels=CLASS_NAMES)
    return ModelBundle(kernels=ks, classifier=clf, config=config.to_dict())


def quantize_bundle(bundle: ModelBundle, config: RunConfig | None = None) -> ModelBundle:
    config = config or RunConfig.from_dict(bundle.config)
    cal = calibrate(bundle.kernels, bundle.classifier, config.input_clamp, config.bits)
    q = quantize_model(bundle.kernels, bundle.classifier, cal)
    return ModelBundle(kernels=bundle.kernels, classifier=bundle.classifier, quantized=q,
                       config=bundle.config, version=bundle.version)


def float_metrics(bundle: ModelBundle, windows, labels) -> dict:
    pred, _ = predict_float(kern.transform(windows, bundle.kernels), bundle.classifier)
    return {"n": int(len(labels)), "accuracy": float(np.mean(pred == labels)),
            "f1": f1_binary(labels, pred)}


def evaluate(bundle: ModelBundle, split: DatasetSplit) -> dict:
    out = {"val": float_metrics(bundle, split.val.windows, split.val.labels)}
    if len(split.test):
        out["test"] = float_metrics(bundle, split.test.windows, split.test.labels)
        if bundle.quantized is not None:
            rep = validate_pair(bundle.kernels, bundle.classifier, bundle.quantized,
                                split.test.windows, split.test.labels)
            out["agreement"] = {
                "agreement": rep.agreement, "accuracy_float": rep.accuracy_float,
                "accuracy_quant": rep.accuracy_quant, "f1_float": rep.f1_float, "f1_quant": rep.f1_quant,
                "disagreements": len(rep.disagreements), "score_slack": rep.slack,
            }
    return out


def operation_count(ks: kern.KernelSet, n_classes: int) -> int:
    """Multiply-accumulate and compare operations for one inference."""
    ops = 0
    for pair in range(ks.num_pairs):
        out_len = kern.output_length(ks.window_length, int(ks.pair_dilation[pair]), bool(ks.pair_padding[pair]))
        ops += int(ks.pair_channels[pair].sum()) * kern.KERNEL_LENGTH * out_len
        ops += out_len * len(ks.pair_features(pair))
    return ops + ks.num_features * n_classes


def hyperscan(base: RunConfig, rates, window_lens, feature_counts, repeats: int = 1, raw=None) -> list:
    """Brand-held-out F1 and model size over a grid; one row per grid point."""
    rates, window_lens, feature_counts = list(rates), list(window_lens), list(feature_counts)
    if not (rates and window_lens and feature_counts):
        raise ValueError("empty hyperparameter grid")
    if raw is None:
        # size the corpus for the longest window in seconds
        sized = base.replace(window_len=max(window_lens), sampling_rate=min(rates))
        raw = list(raw_recordings(sized))
    rows = []
    for rate in rates:
        prepared = list(prepare(raw, rate))
        for wl in window_lens:
            for fc in feature_counts:
                cfg = base.replace(sampling_rate=rate, window_len=wl, feature_count=fc)
                f1s, bundle = [], None
                for r in range(repeats):
                    split = build_split(cfg.replace(seed=base.seed + r), prepared)
                    bundle = quantize_bundle(fit_bundle(cfg.replace(seed=base.seed + r), split), cfg)
                    f1s.append(float_metrics(bundle, split.test.windows, split.test.labels)["f1"])
                fp = footprint(bundle.quantized)
                rows.append({
                    "sampling_rate": rate, "window_len": wl, "feature_count": fc,
                    "f1": float(np.mean(f1s)), "f1_std": float(np.std(f1s)),
                    "parameter_bytes": fp["parameter_bytes"], "buffer_bytes": fp["buffer_bytes"],
                    "classifier_weight_bytes": fp["parameters"]["rkl_weights_q"],
                    "ops_per_inference": operation_count(bundle.kernels, bundle.quantized.num_classes),
                })
    return rows
