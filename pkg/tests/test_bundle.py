import struct

import numpy as np
import pytest

from tinyrocket import bundle as bio
from tinyrocket.bundle import BundleError, ModelBundle
from tinyrocket.quantize import predict_q, scale_input, transform_q

from conftest import random_windows
from oracles import widened_inference


@pytest.fixture(scope="module")
def qbundle(toy_model):
    ks, clf, qm, _, _ = toy_model
    return ModelBundle(kernels=ks, classifier=clf, quantized=qm, config={"seed": 3, "window_len": 80})


def test_crc64_check_value():
    assert bio.crc64(b"123456789") == 0x995DC9BBDF1939FA
    assert bio.crc64(b"") == 0


def test_roundtrip(tmp_path, qbundle, toy_model):
    path = tmp_path / "m.rklm"
    bio.save_bundle(qbundle, path)
    back = bio.load_bundle(path)
    assert back == qbundle
    assert back.kernels.biases.dtype == qbundle.kernels.biases.dtype
    assert back.config_digest == qbundle.config_digest
    x = toy_model[3]
    assert np.array_equal(transform_q(x, back.quantized), transform_q(x, qbundle.quantized))
    assert bio.dump_bundle(back) == bio.dump_bundle(qbundle)


def test_roundtrip_unquantized(toy_model):
    b = ModelBundle(kernels=toy_model[0], classifier=toy_model[1])
    back = bio.parse_bundle(bio.dump_bundle(b))
    assert back == b and back.quantized is None


def test_truncated(qbundle):
    data = bio.dump_bundle(qbundle)
    for cut in (0, 3, 19, len(data) // 2, len(data) - 1):
        with pytest.raises(BundleError, match="bundle corrupt"):
            bio.parse_bundle(data[:cut])


def test_one_byte_mutations_detected(qbundle):
    data = bytearray(bio.dump_bundle(qbundle))
    rng = np.random.default_rng(0)
    positions = np.concatenate([np.arange(0, 40), rng.choice(len(data), 300, replace=False)])
    for pos in positions:
        mutated = bytearray(data)
        mutated[pos] ^= int(rng.integers(1, 256))
        with pytest.raises(BundleError, match="bundle corrupt|unsupported"):
            bio.parse_bundle(bytes(mutated))


def test_future_version_rejected(qbundle):
    data = bytearray(bio.dump_bundle(qbundle)[:-8])
    struct.pack_into("<I", data, 4, 99)
    data += struct.pack("<Q", bio.crc64(bytes(data)))
    with pytest.raises(BundleError, match="bundle version 99 unsupported"):
        bio.parse_bundle(bytes(data))


def test_export_parse_back(qbundle):
    text = bio.export_static_arrays(qbundle)
    assert text == bio.export_static_arrays(qbundle)
    defines, arrays = bio.parse_static_arrays(text)
    qm = qbundle.quantized
    assert defines["RKL_S1"] == qm.calibration.s1 and defines["RKL_S2"] == qm.calibration.s2
    assert defines["RKL_INPUT_CLAMP"] == 16000 and defines["RKL_NUM_FEATURES"] == 84
    assert arrays["rkl_biases_q"].shape == (84,)
    for _, name, values in bio.c_arrays(qm):
        assert np.array_equal(arrays[name], values), name
    assert np.array_equal(arrays["rkl_weights_q"], qm.weights_q)
    assert np.array_equal(arrays["rkl_comparison_counts"], qm.kernels.comparison_counts)


def test_export_requires_quantized(toy_model):
    with pytest.raises(BundleError, match="quantize before export"):
        bio.export_static_arrays(ModelBundle(kernels=toy_model[0], classifier=toy_model[1]))


def test_footprint_within_device_limits(qbundle):
    fp = bio.footprint(qbundle.quantized)
    assert fp["parameter_bytes"] <= 7 * 1024
    assert fp["buffer_bytes"] <= 3 * 1024
    assert fp["parameters"]["rkl_weights_q"] == 84 * 2 * 4


def test_golden_vectors_replay(tmp_path, qbundle):
    rng = np.random.default_rng(1)
    x = np.concatenate([np.zeros((1, 1, 80), np.float32), random_windows(rng, 99)])
    path = tmp_path / "v.rklv"
    assert bio.emit_golden_vectors(qbundle, x, path) == 100
    assert path.read_bytes()[:4] == b"RKLV"
    assert bio.replay_golden_vectors(path, qbundle) == []
    cases = bio.read_golden_vectors(path)
    assert len(cases) == 100 and np.array_equal(cases[5].raw, x[5])


def test_golden_vectors_detect_tampering(tmp_path, qbundle):
    x = random_windows(np.random.default_rng(2), 3)
    path = tmp_path / "v.rklv"
    bio.emit_golden_vectors(qbundle, x, path)
    data = bytearray(path.read_bytes())
    data[-1] ^= 1  # k* of the last case
    path.write_bytes(bytes(data))
    assert bio.replay_golden_vectors(path, qbundle) == [2]


def test_golden_vectors_cross_check_widened_oracle(tmp_path, qbundle):
    qm = qbundle.quantized
    x = random_windows(np.random.default_rng(3), 40)
    path = tmp_path / "v.rklv"
    bio.emit_golden_vectors(qbundle, x, path)
    cases = bio.read_golden_vectors(path)
    ref = widened_inference(scale_input(x, qm.calibration), qm)
    assert [c.kstar for c in cases] == ref.kstar.tolist()
    assert np.array_equal(np.stack([c.counts for c in cases]), ref.counts)
    cls, _ = predict_q(transform_q(x, qm), qm)
    assert np.array_equal(cls, ref.kstar)
