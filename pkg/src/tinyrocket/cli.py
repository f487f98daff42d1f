"""Command-line front end: ``tinyrocket <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import workflow
from .bundle import emit_golden_vectors, export_static_arrays, footprint, load_bundle, save_bundle
from .config import RunConfig
from .device import EnergyProfile, Scenario, simulate
from .pipeline import save_recording_csv, save_windows

log = logging.getLogger("tinyrocket")


def _config(args) -> RunConfig:
    overrides = {"seed": args.seed}
    if args.config:
        return RunConfig.load(args.config, **overrides)
    return RunConfig(**{k: v for k, v in overrides.items() if v is not None})


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True) if args.json else text)


def cmd_gendata(args) -> int:
    cfg = _config(args)
    out = Path(args.out or "data")
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        n = 0
        for rec in workflow.raw_recordings(cfg):
            save_recording_csv(rec, out / f"{rec.rec_id}.csv")
            n += 1
        _emit(args, {"recordings": n, "out": str(out)}, f"wrote {n} recordings to {out}")
    else:
        split = workflow.build_split(cfg)
        sizes = {}
        for name in ("train", "val", "test"):
            part = getattr(split, name)
            save_windows(part, out / f"{name}.rklw")
            sizes[name] = len(part)
        _emit(args, {"windows": sizes, "out": str(out)},
              "wrote " + ", ".join(f"{k}={v}" for k, v in sizes.items()) + f" windows to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    split = workflow.build_split(cfg)
    bundle = workflow.fit_bundle(cfg, split)
    out = args.out or "model.rklm"
    save_bundle(bundle, out)
    metrics = workflow.evaluate(bundle, split)
    payload = {"bundle": out, "lambda": bundle.classifier.lam, **metrics}
    _emit(args, payload, f"saved {out}\nvalidation F1 {metrics['val']['f1']:.4f} "
                         f"(accuracy {metrics['val']['accuracy']:.4f}, lambda {bundle.classifier.lam:g})")
    return 0


def cmd_quantize(args) -> int:
    bundle = load_bundle(args.bundle)
    cfg = RunConfig.from_dict(bundle.config)
    if args.config:
        cfg = RunConfig.load(args.config)
    q = workflow.quantize_bundle(bundle, cfg)
    out = args.out or args.bundle
    save_bundle(q, out)
    cal = q.quantized.calibration
    _emit(args, {"bundle": out, "s1": cal.s1, "s2": cal.s2, "bits": cal.bits, "input_clamp": cal.input_clamp},
          f"saved {out}\nS1={cal.s1} S2={cal.s2} bits={cal.bits} I_m={cal.input_clamp}")
    return 0


def cmd_eval(args) -> int:
    bundle = load_bundle(args.bundle)
    cfg = RunConfig.from_dict(bundle.config)
    split = workflow.build_split(cfg)
    metrics = workflow.evaluate(bundle, split)
    lines = [f"val   accuracy {metrics['val']['accuracy']:.4f}  F1 {metrics['val']['f1']:.4f}"]
    if "test" in metrics:
        lines.append(f"test  accuracy {metrics['test']['accuracy']:.4f}  F1 {metrics['test']['f1']:.4f}"
                     f"  (n={metrics['test']['n']})")
    if "agreement" in metrics:
        a = metrics["agreement"]
        lines.append(f"float/quantized agreement {a['agreement']:.4f}  "
                     f"accuracy {a['accuracy_float']:.4f} vs {a['accuracy_quant']:.4f}")
    _emit(args, metrics, "\n".join(lines))
    return 0


def cmd_export(args) -> int:
    bundle = load_bundle(args.bundle)
    text = export_static_arrays(bundle)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.vectors:
        cfg = RunConfig.from_dict(bundle.config)
        split = workflow.build_split(cfg)
        n = emit_golden_vectors(bundle, split.test.windows[: args.n_vectors], args.vectors)
        log.info("wrote %d golden vectors to %s", n, args.vectors)
    if args.out:
        fp = footprint(bundle.quantized)
        _emit(args, {"header": args.out, "parameter_bytes": fp["parameter_bytes"],
                     "buffer_bytes": fp["buffer_bytes"]},
              f"wrote {args.out}: parameters {fp['parameter_bytes']} B, buffers {fp['buffer_bytes']} B")
    return 0


def cmd_simulate(args) -> int:
    bundle = load_bundle(args.bundle) if args.bundle else None
    if args.scenario:
        scenario = Scenario.from_json(args.scenario)
    else:
        scenario = Scenario()
    duration = args.hours * 3600 if args.hours else None
    if duration is None and not scenario.intervals:
        raise ValueError("give --scenario or --hours")
    if bundle is not None and scenario.intervals:
        from .synth import scenario_recording

        end = duration or max(b for _, b, _ in scenario.intervals)
        scenario.signal = scenario_recording(scenario.intervals, end, seed=args.seed or 0)
    trace = simulate(scenario, bundle, EnergyProfile(), duration)
    if args.out:
        trace.write_csv(args.out)
    payload = {"duration_s": trace.duration, "average_power_uw": trace.average_power_uw,
               "total_energy_uj": trace.total_energy_uj, "inferences": trace.count("infer"),
               "advertisements": trace.count("advertise"), "runtime_s": trace.runtime_s}
    _emit(args, payload, f"average power {trace.average_power_uw:.3f} uW over {trace.duration:.0f} s\n"
                         f"inferences {payload['inferences']}, advertisements {payload['advertisements']}, "
                         f"estimated runtime {trace.runtime_s:.0f} s")
    return 0


def _int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_hyperscan(args) -> int:
    cfg = _config(args)
    rows = workflow.hyperscan(cfg, _int_list(args.rates), _int_list(args.windows),
                              _int_list(args.features), repeats=args.repeats)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    text = "\n".join(f"{r['sampling_rate']:>6} Hz  {r['window_len']:>4} samp  {r['feature_count']:>4} feat  "
                     f"F1 {r['f1']:.4f}  params {r['parameter_bytes']} B" for r in rows)
    _emit(args, {"rows": rows}, text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--out", help="output path")

    parser = argparse.ArgumentParser(prog="tinyrocket", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="write the synthetic corpus")
    p.add_argument("--format", choices=("csv", "windows"), default="csv")
    p.set_defaults(func=cmd_gendata)

    p = sub.add_parser("train", parents=[common], help="fit transform and ridge head")
    p.set_defaults(func=cmd_train)

    for name, func, text in (("quantize", cmd_quantize, "add the integer model to a bundle"),
                             ("eval", cmd_eval, "accuracy, F1 and float/quantized agreement")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("bundle")
        p.set_defaults(func=func)

    p = sub.add_parser("export", parents=[common], help="static C arrays and golden vectors")
    p.add_argument("bundle")
    p.add_argument("--vectors", help="also write golden vectors here")
    p.add_argument("--n-vectors", type=int, default=100)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("simulate", parents=[common], help="duty-cycle energy simulation")
    p.add_argument("--scenario", help="JSON list of {t_start_s, t_end_s, activity}")
    p.add_argument("--bundle", help="classify acquired windows with this model")
    p.add_argument("--hours", type=float, help="simulated duration")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("hyperscan", parents=[common], help="grid over rate, window and features")
    p.add_argument("--rates", default="200")
    p.add_argument("--windows", default="80")
    p.add_argument("--features", default="84")
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=cmd_hyperscan)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
