import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from centraprune.errors import (
    DimensionMismatch,
    IoFailure,
    MalformedHeader,
    MissingFile,
    ShapeMismatch,
    UnsupportedDtype,
)
from centraprune.tensor_io import (
    LayerBundle,
    TensorFile,
    decode_tensor,
    encode_tensor,
    read_dataset,
    read_layer,
    read_tensor,
    write_dataset,
    write_layer,
    write_tensor,
    Dataset,
)


def test_layout_is_bit_exact():
    raw = encode_tensor(TensorFile(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], dtype=np.float32)))
    assert raw[:6] == b"\x93CPRUN"
    assert raw[6] == 1
    (hlen,) = struct.unpack("<H", raw[7:9])
    header = raw[9 : 9 + hlen].decode("ascii")
    assert header.rstrip(" ") == "dtype=f32;shape=2,3;"
    assert (9 + hlen) % 16 == 0
    assert raw[9 + hlen :] == struct.pack("<6f", 1, 2, 3, 4, 5, 6)


def test_read_2x3_float32(tmp_path):
    data = np.arange(6, dtype=np.float32).reshape(2, 3)
    write_tensor(tmp_path / "t", data)
    t = read_tensor(tmp_path / "t")
    assert t.shape == [2, 3]
    assert t.dtype == "f32"
    assert t.data.dtype == np.float32
    assert t.data.size == 6


def test_single_zero_roundtrip(tmp_path):
    t = TensorFile(np.array([0.0]))
    write_tensor(tmp_path / "z", t)
    assert read_tensor(tmp_path / "z") == t


def test_shape_3x2_roundtrip(tmp_path):
    write_tensor(tmp_path / "m", np.ones((3, 2)))
    assert read_tensor(tmp_path / "m").shape == [3, 2]


def test_negative_zero_and_nan_payload_preserved(tmp_path):
    t = TensorFile(np.array([-0.0, np.nan, np.inf, 5e-324]))
    write_tensor(tmp_path / "odd", t)
    assert read_tensor(tmp_path / "odd") == t


@settings(max_examples=60, deadline=None)
@given(
    arrays(
        dtype=st.sampled_from([np.float32, np.float64]),
        shape=st.lists(st.integers(0, 5), min_size=0, max_size=3).map(tuple),
        elements=st.floats(allow_nan=True, allow_infinity=True, width=32),
    )
)
def test_roundtrip_is_bitwise(arr):
    t = TensorFile(arr)
    back = decode_tensor(encode_tensor(t))
    assert back == t


def test_truncated_payload(tmp_path):
    raw = encode_tensor(TensorFile(np.ones((4, 4))))
    (tmp_path / "t").write_bytes(raw[:-3])
    with pytest.raises(ShapeMismatch):
        read_tensor(tmp_path / "t")


def test_extra_payload_rejected():
    raw = encode_tensor(TensorFile(np.ones(2)))
    with pytest.raises(ShapeMismatch):
        decode_tensor(raw + b"\x00" * 8)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda raw: b"\x93CPRUX" + raw[6:],
        lambda raw: raw[:6] + b"\x02" + raw[7:],
        lambda raw: raw[:4],
    ],
    ids=["magic", "version", "stub"],
)
def test_malformed_header(mutate):
    raw = encode_tensor(TensorFile(np.ones(3)))
    with pytest.raises(MalformedHeader):
        decode_tensor(mutate(raw))


def test_unsupported_dtype_on_read():
    raw = encode_tensor(TensorFile(np.ones(2, dtype=np.float32)))
    raw = raw.replace(b"dtype=f32", b"dtype=i32")
    with pytest.raises(UnsupportedDtype):
        decode_tensor(raw)


def test_unsupported_dtype_on_write():
    with pytest.raises(UnsupportedDtype):
        TensorFile(np.ones(2, dtype=np.int32))


def test_unwritable_path(tmp_path):
    with pytest.raises(IoFailure):
        write_tensor(tmp_path / "no" / "such" / "dir" / "t", np.ones(2))


def test_no_temp_files_left(tmp_path):
    write_tensor(tmp_path / "t", np.ones(2))
    write_tensor(tmp_path / "t", np.zeros(2))
    assert sorted(p.name for p in tmp_path.iterdir()) == ["t"]


def _layer_dir(tmp_path, w, b):
    write_tensor(tmp_path / "weights", w)
    write_tensor(tmp_path / "bias", b)
    (tmp_path / "meta").write_text(
        json.dumps({"name": "fc", "activation": "relu", "d": w.shape[0], "n": w.shape[1]})
    )
    return tmp_path


class TestLayerDirectory:
    def test_read_4x8(self, tmp_path):
        layer = read_layer(_layer_dir(tmp_path, np.ones((4, 8)), np.zeros(8)))
        assert (layer.d, layer.n) == (4, 8)
        assert layer.activation == "relu"

    def test_bias_length_mismatch(self, tmp_path):
        with pytest.raises(DimensionMismatch):
            read_layer(_layer_dir(tmp_path, np.ones((4, 8)), np.zeros(7)))

    def test_empty_dir(self, tmp_path):
        with pytest.raises(MissingFile):
            read_layer(tmp_path)

    def test_float32_widened(self, tmp_path):
        w = np.random.default_rng(0).standard_normal((3, 5)).astype(np.float32)
        layer = read_layer(_layer_dir(tmp_path, w, np.zeros(5, dtype=np.float32)))
        assert layer.weights.dtype == np.float64
        np.testing.assert_array_equal(layer.weights, w.astype(np.float64))

    def test_write_read_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        layer = LayerBundle(rng.standard_normal((6, 3)), rng.standard_normal(3), "hidden", "relu")
        write_layer(tmp_path / "l", layer)
        back = read_layer(tmp_path / "l")
        assert back.weights.tobytes() == layer.weights.tobytes()
        assert back.bias.tobytes() == layer.bias.tobytes()
        assert back.meta() == layer.meta()
        assert json.loads((tmp_path / "l" / "meta").read_text()) == {
            "name": "hidden",
            "activation": "relu",
            "d": 6,
            "n": 3,
        }


def test_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    data = Dataset(rng.standard_normal((10, 3)), rng.integers(0, 4, 10), 4, "toy")
    write_dataset(tmp_path / "d", data)
    back = read_dataset(tmp_path / "d")
    np.testing.assert_array_equal(back.x, data.x)
    np.testing.assert_array_equal(back.y, data.y)
    assert back.num_classes == 4
