"""Model bundles, static C array export and golden test vectors.

Bundle layout (little-endian)::

    "RKLM" | u32 version | u32 n_sections
    n_sections x (4-byte name | u64 offset | u64 length)
    section payloads
    u64 CRC-64/XZ of every preceding byte

Each section payload is ``u32 header_len | JSON header | raw arrays``; the
header lists scalars and ``(name, dtype, shape)`` for the arrays that follow.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import KERNEL_LENGTH, NUM_KERNELS, KernelSet, kernel_taps
from .quantize import (Calibration, QuantizedModel, predict_q, quantized_features, scale_input,
                       transform_q_scaled)
from .ridge import LinearClassifier

MAGIC = b"RKLM"
FORMAT_VERSION = 1
VECTOR_MAGIC = b"RKLV"
VECTOR_VERSION = 1


class BundleError(ValueError):
    pass


def _crc64_table():
    poly = 0xC96C5795D7870F42
    table = []
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC_TABLE = _crc64_table()


def crc64(data: bytes) -> int:
    """CRC-64/XZ (ECMA-182 polynomial, reflected)."""
    crc = 0xFFFFFFFFFFFFFFFF
    table = _CRC_TABLE
    for byte in data:
        crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


@dataclass(eq=False)
class ModelBundle:
    kernels: KernelSet
    classifier: LinearClassifier
    quantized: QuantizedModel | None = None
    config: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def config_digest(self) -> str:
        return hashlib.sha256(json.dumps(self.config, sort_keys=True).encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return (self.kernels == other.kernels and self.classifier == other.classifier
                and self.quantized == other.quantized and self.config == other.config
                and self.version == other.version)


def _le(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    return arr.astype(arr.dtype.newbyteorder("<")) if arr.dtype.byteorder == ">" else arr


def _pack_section(scalars: dict, arrays: dict) -> bytes:
    body, spec = [], []
    for name, arr in arrays.items():
        arr = _le(np.asarray(arr))
        spec.append([name, arr.dtype.newbyteorder("<").str if arr.dtype.itemsize > 1 else arr.dtype.str,
                     list(arr.shape)])
        body.append(arr.tobytes())
    header = json.dumps({"scalars": scalars, "arrays": spec}, sort_keys=True).encode()
    return struct.pack("<I", len(header)) + header + b"".join(body)


def _unpack_section(payload: bytes):
    (hlen,) = struct.unpack_from("<I", payload, 0)
    header = json.loads(payload[4:4 + hlen].decode())
    pos = 4 + hlen
    arrays = {}
    for name, dtype, shape in header["arrays"]:
        dt = np.dtype(dtype)
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dt.itemsize
        if pos + nbytes > len(payload):
            raise BundleError("bundle corrupt")
        arrays[name] = np.frombuffer(payload, dtype=dt, count=count, offset=pos).reshape(shape).copy()
        pos += nbytes
    if pos != len(payload):
        raise BundleError("bundle corrupt")
    return header["scalars"], arrays


_KERNEL_ARRAYS = ("dilations", "features_per_dilation", "pair_dilation", "pair_kernel", "pair_padding",
                  "pair_channels", "feature_pair", "biases", "comparison_counts")


def _sections(bundle: ModelBundle) -> dict:
    ks, clf = bundle.kernels, bundle.classifier
    out = {
        b"META": _pack_section({"config": bundle.config, "config_digest": bundle.config_digest}, {}),
        b"KERN": _pack_section({"window_length": ks.window_length, "n_channels": ks.n_channels,
                                "seed": ks.seed}, {n: getattr(ks, n) for n in _KERNEL_ARRAYS}),
        b"LINR": _pack_section({"class_labels": list(clf.class_labels), "lam": clf.lam},
                               {"weights": clf.weights, "biases": clf.biases}),
    }
    if bundle.quantized is not None:
        q = bundle.quantized
        out[b"QNTZ"] = _pack_section(
            {"calibration": q.calibration.__dict__, "class_labels": list(q.class_labels)},
            {"biases_q": q.biases_q, "weights_q": q.weights_q, "class_biases_q": q.class_biases_q})
    return out


def dump_bundle(bundle: ModelBundle) -> bytes:
    sections = _sections(bundle)
    table_len = 12 + 20 * len(sections)
    offset, table, payloads = table_len, [], []
    for name, payload in sections.items():
        table.append(struct.pack("<4sQQ", name, offset, len(payload)))
        payloads.append(payload)
        offset += len(payload)
    data = MAGIC + struct.pack("<II", bundle.version, len(sections)) + b"".join(table) + b"".join(payloads)
    return data + struct.pack("<Q", crc64(data))


def parse_bundle(data: bytes) -> ModelBundle:
    if len(data) < 20 or data[:4] != MAGIC:
        raise BundleError("bundle corrupt")
    (stored,) = struct.unpack_from("<Q", data, len(data) - 8)
    if crc64(data[:-8]) != stored:
        raise BundleError("bundle corrupt")
    version, n_sections = struct.unpack_from("<II", data, 4)
    if version > FORMAT_VERSION or version < 1:
        raise BundleError(f"bundle version {version} unsupported")
    try:
        sections = {}
        for i in range(n_sections):
            name, off, length = struct.unpack_from("<4sQQ", data, 12 + 20 * i)
            if off + length > len(data) - 8:
                raise BundleError("bundle corrupt")
            sections[name] = _unpack_section(data[off:off + length])
        meta, _ = sections[b"META"]
        kscal, karr = sections[b"KERN"]
        kernels = KernelSet(window_length=kscal["window_length"], n_channels=kscal["n_channels"],
                            seed=kscal["seed"], **karr)
        lscal, larr = sections[b"LINR"]
        clf = LinearClassifier(weights=larr["weights"], biases=larr["biases"],
                               class_labels=tuple(lscal["class_labels"]), lam=lscal["lam"])
        quantized = None
        if b"QNTZ" in sections:
            qscal, qarr = sections[b"QNTZ"]
            quantized = QuantizedModel(kernels=kernels, calibration=Calibration(**qscal["calibration"]),
                                       class_labels=tuple(qscal["class_labels"]), **qarr)
    except BundleError:
        raise
    except (KeyError, TypeError, ValueError, struct.error, UnicodeDecodeError) as exc:
        raise BundleError("bundle corrupt") from exc
    bundle = ModelBundle(kernels=kernels, classifier=clf, quantized=quantized,
                         config=meta["config"], version=version)
    if bundle.config_digest != meta["config_digest"]:
        raise BundleError("bundle corrupt")
    return bundle


def save_bundle(bundle: ModelBundle, path) -> None:
    Path(path).write_bytes(dump_bundle(bundle))


def load_bundle(path) -> ModelBundle:
    return parse_bundle(Path(path).read_bytes())


# --- static C arrays -------------------------------------------------------

def _int_type(bits: int) -> str:
    return "int32_t" if bits <= 32 else "int64_t"


def c_arrays(qmodel: QuantizedModel):
    """``(ctype, name, values)`` for every array the firmware needs, in export order."""
    ks = qmodel.kernels
    itype = _int_type(qmodel.calibration.bits)
    channel_mask = (ks.pair_channels.astype(np.int64) << np.arange(ks.n_channels)).sum(axis=1)
    return [
        ("uint8_t", "rkl_kernel_taps", kernel_taps().astype(np.int64)),
        ("uint16_t", "rkl_dilations", ks.dilations.astype(np.int64)),
        ("uint16_t", "rkl_pair_dilation", ks.pair_dilation.astype(np.int64)),
        ("uint8_t", "rkl_pair_kernel", ks.pair_kernel.astype(np.int64)),
        ("uint8_t", "rkl_pair_padding", ks.pair_padding.astype(np.int64)),
        ("uint16_t", "rkl_pair_channels", channel_mask),
        ("uint16_t", "rkl_feature_pair", ks.feature_pair.astype(np.int64)),
        ("uint16_t", "rkl_comparison_counts", ks.comparison_counts.astype(np.int64)),
        (itype, "rkl_biases_q", qmodel.biases_q),
        (itype, "rkl_weights_q", qmodel.weights_q),
        (itype, "rkl_class_biases_q", qmodel.class_biases_q),
    ]


_CTYPE_BYTES = {"uint8_t": 1, "uint16_t": 2, "int32_t": 4, "int64_t": 8}


def _format_values(values: np.ndarray, per_line: int = 12) -> str:
    flat = [str(int(v)) for v in values.ravel()]
    lines = [", ".join(flat[i:i + per_line]) for i in range(0, len(flat), per_line)]
    return "    " + ",\n    ".join(lines)


def export_static_arrays(bundle) -> str:
    """C header text with the quantized model as constant arrays."""
    qmodel = bundle.quantized if isinstance(bundle, ModelBundle) else bundle
    if qmodel is None:
        raise BundleError("quantize before export")
    ks, cal = qmodel.kernels, qmodel.calibration
    if ks.num_features == 0:
        raise BundleError("model has no features")
    defines = [
        ("RKL_WINDOW_LENGTH", ks.window_length), ("RKL_NUM_CHANNELS", ks.n_channels),
        ("RKL_NUM_KERNELS", NUM_KERNELS), ("RKL_KERNEL_LENGTH", KERNEL_LENGTH),
        ("RKL_NUM_DILATIONS", len(ks.dilations)), ("RKL_NUM_PAIRS", ks.num_pairs),
        ("RKL_NUM_FEATURES", ks.num_features), ("RKL_NUM_CLASSES", qmodel.num_classes),
        ("RKL_BITS", cal.bits), ("RKL_S1", cal.s1), ("RKL_S2", cal.s2),
        ("RKL_INPUT_CLAMP", cal.input_clamp),
    ]
    out = ["/* MiniRocket integer model. Generated file, do not edit. */",
           "#ifndef RKL_MODEL_H", "#define RKL_MODEL_H", "", "#include <stdint.h>", ""]
    out += [f"#define {name} {int(value)}" for name, value in defines]
    out.append("")
    for ctype, name, values in c_arrays(qmodel):
        dims = "".join(f"[{d}]" for d in values.shape)
        out.append(f"static const {ctype} {name}{dims} = {{")
        out.append(_format_values(values))
        out.append("};")
        out.append("")
    out.append("#endif /* RKL_MODEL_H */")
    return "\n".join(out) + "\n"


_ARRAY_RE = re.compile(r"static const (\w+) (\w+)((?:\[\d+\])+) = \{(.*?)\};", re.S)
_DEFINE_RE = re.compile(r"#define (RKL_\w+) (-?\d+)")


def parse_static_arrays(text: str):
    """Read back ``(defines, arrays)`` from exported C text."""
    defines = {m.group(1): int(m.group(2)) for m in _DEFINE_RE.finditer(text)}
    arrays = {}
    for ctype, name, dims, body in _ARRAY_RE.findall(text):
        shape = tuple(int(d) for d in re.findall(r"\d+", dims))
        values = np.array([int(v) for v in re.findall(r"-?\d+", body)], dtype=np.int64)
        arrays[name] = values.reshape(shape)
    return defines, arrays


def footprint(qmodel: QuantizedModel) -> dict:
    """Analytic byte counts for the exported parameters and inference buffers."""
    ks = qmodel.kernels
    ibytes = _CTYPE_BYTES[_int_type(qmodel.calibration.bits)]
    params = {name: values.size * _CTYPE_BYTES[ctype] for ctype, name, values in c_arrays(qmodel)}
    params["scalars"] = 3 * ibytes  # S1, S2, I_m
    length, ch = ks.window_length, ks.n_channels
    buffers = {
        "raw_xyz_int16": 3 * length * 2,
        "scaled_input": ch * length * ibytes,
        "conv_row": length * ibytes,
        "feature_counts": ks.num_features * ibytes,
        "scores": qmodel.num_classes * ibytes,
    }
    return {"parameters": params, "parameter_bytes": sum(params.values()),
            "buffers": buffers, "buffer_bytes": sum(buffers.values())}


# --- golden vectors --------------------------------------------------------

@dataclass
class GoldenCase:
    raw: np.ndarray  # (C, L) float32
    scaled: np.ndarray  # (C, L) int64
    counts: np.ndarray  # (T,)
    tq: np.ndarray  # (T,)
    scores: np.ndarray  # (K,)
    kstar: int


def golden_cases(qmodel: QuantizedModel, windows) -> list:
    x = np.asarray(windows, dtype=np.float32)
    if x.ndim == 2:
        x = x[None]
    scaled = scale_input(x, qmodel.calibration)
    counts = transform_q_scaled(scaled, qmodel)
    tq = quantized_features(counts, qmodel)
    kstar, scores = predict_q(counts, qmodel)
    return [GoldenCase(x[i], scaled[i], counts[i], tq[i], scores[i], int(kstar[i])) for i in range(len(x))]


def emit_golden_vectors(bundle, windows, path) -> int:
    """Write input/output vectors for every window; returns the case count.

    File: "RKLV" | u32 version | u32 count | u32 channels | u32 length |
    u32 T | u32 K, then per case ``u32 nbytes`` followed by f32 raw, i64
    scaled, i64 counts, i64 t^q, i64 scores, u32 k*.
    """
    qmodel = bundle.quantized if isinstance(bundle, ModelBundle) else bundle
    if qmodel is None:
        raise BundleError("quantize before export")
    cases = golden_cases(qmodel, windows)
    ks = qmodel.kernels
    head = VECTOR_MAGIC + struct.pack("<6I", VECTOR_VERSION, len(cases), ks.n_channels, ks.window_length,
                                      ks.num_features, qmodel.num_classes)
    records = []
    for c in cases:
        body = (c.raw.astype("<f4").tobytes() + c.scaled.astype("<i8").tobytes()
                + c.counts.astype("<i8").tobytes() + c.tq.astype("<i8").tobytes()
                + c.scores.astype("<i8").tobytes() + struct.pack("<I", c.kstar))
        records.append(struct.pack("<I", len(body)) + body)
    Path(path).write_bytes(head + b"".join(records))
    return len(cases)


def read_golden_vectors(path) -> list:
    data = Path(path).read_bytes()
    if data[:4] != VECTOR_MAGIC:
        raise BundleError("not a vector file")
    version, count, ch, length, t, k = struct.unpack_from("<6I", data, 4)
    if version != VECTOR_VERSION:
        raise BundleError(f"vector file version {version} unsupported")
    pos, cases = 28, []
    n = ch * length
    for _ in range(count):
        (nbytes,) = struct.unpack_from("<I", data, pos)
        pos += 4
        rec = data[pos:pos + nbytes]
        if len(rec) != nbytes or nbytes != 4 * n + 8 * (n + 2 * t + k) + 4:
            raise BundleError("vector file corrupt")
        o = 0
        raw = np.frombuffer(rec, "<f4", n, o).reshape(ch, length); o += 4 * n
        scaled = np.frombuffer(rec, "<i8", n, o).reshape(ch, length); o += 8 * n
        counts = np.frombuffer(rec, "<i8", t, o); o += 8 * t
        tq = np.frombuffer(rec, "<i8", t, o); o += 8 * t
        scores = np.frombuffer(rec, "<i8", k, o); o += 8 * k
        (kstar,) = struct.unpack_from("<I", rec, o)
        cases.append(GoldenCase(raw.astype(np.float32), scaled.astype(np.int64), counts.astype(np.int64),
                                tq.astype(np.int64), scores.astype(np.int64), int(kstar)))
        pos += nbytes
    return cases


def replay_golden_vectors(path, bundle) -> list:
    """Re-run every stored case; returns indices whose outputs differ."""
    qmodel = bundle.quantized if isinstance(bundle, ModelBundle) else bundle
    stored = read_golden_vectors(path)
    if not stored:
        return []
    fresh = golden_cases(qmodel, np.stack([c.raw for c in stored]))
    bad = []
    for i, (a, b) in enumerate(zip(stored, fresh)):
        same = (np.array_equal(a.scaled, b.scaled) and np.array_equal(a.counts, b.counts)
                and np.array_equal(a.tq, b.tq) and np.array_equal(a.scores, b.scores)
                and a.kstar == b.kstar)
        if not same:
            bad.append(i)
    return bad
