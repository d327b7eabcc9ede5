from __future__ import annotations

import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from modelbridge import (
    DType,
    FeatureBundle,
    Malformed,
    TensorSpec,
    TensorValue,
    TypeMismatch,
    deserialize,
    payload_size,
    serialize,
)
from modelbridge.serdes import ERROR_KEY, SerDesKind, validate_expected

from bridgeutil import random_bundle

J, B, T = SerDesKind.JSON, SerDesKind.BITSTREAM, SerDesKind.TAGGED


def bundle_of(*values):
    return FeatureBundle.of(*values)


# --- frozen byte layouts, built with struct/json rather than the library ---


def test_bitstream_bytes_against_struct_oracle():
    bundle = bundle_of(TensorValue.of("x", DType.F32, [1.0, 2.0]))
    header = b'{"features":[{"key":"x","dtype":"f32","shape":[2]}]}'
    expected = header + b"\n" + struct.pack("<2f", 1.0, 2.0)
    assert serialize(B, bundle) == expected
    assert deserialize(B, expected) == bundle


def test_tagged_bytes_against_struct_oracle():
    bundle = bundle_of(TensorValue.of("x", DType.F32, [1.0, 2.0]))
    expected = (
        struct.pack("<BH", 2, 1)  # f32 tag, key length
        + b"x"
        + struct.pack("<B", 1)  # rank
        + struct.pack("<I", 2)  # dim
        + struct.pack("<2f", 1.0, 2.0)
    )
    assert serialize(T, bundle) == expected
    assert deserialize(T, expected) == bundle


def test_tagged_tag_values():
    cases = {
        DType.I64: (1, struct.pack("<q", -5), -5),
        DType.F32: (2, struct.pack("<f", 1.5), 1.5),
        DType.F64: (3, struct.pack("<d", 1.5), 1.5),
        DType.BOOL: (4, b"\x01", True),
    }
    for dtype, (tag, raw, value) in cases.items():
        data = serialize(T, bundle_of(TensorValue.of("v", dtype, value)))
        assert data[0] == tag
        assert data == struct.pack("<BH", tag, 1) + b"v" + b"\x00" + raw
    data = serialize(T, bundle_of(TensorValue.of("v", DType.STR, "hi")))
    assert data == struct.pack("<BH", 5, 1) + b"v" + b"\x00" + struct.pack("<I", 2) + b"hi"


def test_tagged_multibyte_dims_and_key():
    bundle = bundle_of(TensorValue.of("键k", DType.I64, [[1, 2, 3], [4, 5, 6]]))
    key_bytes = "键k".encode("utf-8")
    expected = (
        struct.pack("<BH", 1, len(key_bytes))
        + key_bytes
        + struct.pack("<B", 2)
        + struct.pack("<II", 2, 3)
        + struct.pack("<6q", 1, 2, 3, 4, 5, 6)
    )
    assert serialize(T, bundle) == expected


def test_json_layouts():
    cases = [
        (TensorValue.of("x", DType.F32, [1.0, 2.0]), b'{"x":[1.0,2.0]}'),
        (TensorValue.of("n", DType.I64, 7), b'{"n":7}'),
        (TensorValue.of("b", DType.BOOL, [True, False]), b'{"b":[true,false]}'),
        (TensorValue.of("s", DType.STR, "hi"), b'{"s":"hi"}'),
        (TensorValue.of("m", DType.I64, [[1, 2], [3, 4]]), b'{"m":[[1,2],[3,4]]}'),
        (TensorValue.of("e", DType.F64, [], shape=(0,)), b'{"e":[]}'),
    ]
    for value, expected in cases:
        assert serialize(J, bundle_of(value)) == expected


def test_json_float_formatting_matches_python_repr():
    f32_tenth = struct.unpack("<f", struct.pack("<f", 0.1))[0]
    cases = [
        (DType.F64, 0.1, b"0.1"),
        (DType.F32, 0.1, repr(f32_tenth).encode()),  # 0.10000000149011612
        (DType.F64, -0.0, b"-0.0"),
        (DType.F64, 3.0, b"3.0"),
        (DType.F64, 1e300, b"1e+300"),
        (DType.F64, 5e-324, b"5e-324"),
        (DType.F64, float("nan"), b"NaN"),
        (DType.F64, float("inf"), b"Infinity"),
        (DType.F64, float("-inf"), b"-Infinity"),
    ]
    for dtype, value, text in cases:
        data = serialize(J, bundle_of(TensorValue.of("v", dtype, value)))
        assert data == b'{"v":' + text + b"}", (value, data)


def test_json_string_escapes():
    cases = [
        ('say "hi"', b'"say \\"hi\\""'),
        ("a\\b", b'"a\\\\b"'),
        ("line\nbreak", b'"line\\nbreak"'),
        ("tab\there", b'"tab\\there"'),
        ("\x07", b'"\\u0007"'),
        ("héllo", "\"héllo\"".encode("utf-8")),
        ("🂡", "\"🂡\"".encode("utf-8")),
    ]
    for text, expected in cases:
        data = serialize(J, bundle_of(TensorValue.of("s", DType.STR, text)))
        assert data == b'{"s":' + expected + b"}"


def test_empty_bundle_encodings():
    empty = FeatureBundle()
    assert serialize(J, empty) == b"{}"
    assert serialize(B, empty) == b'{"features":[]}\n'
    assert serialize(T, empty) == b""
    for kind in (J, B, T):
        assert deserialize(kind, serialize(kind, empty)) == empty


def test_scalar_and_vector_differ_in_json():
    scalar = serialize(J, bundle_of(TensorValue.of("x", DType.I64, 3)))
    vector = serialize(J, bundle_of(TensorValue.of("x", DType.I64, [3])))
    assert scalar == b'{"x":3}'
    assert vector == b'{"x":[3]}'
    spec_scalar = [TensorSpec("x", DType.I64, ())]
    spec_vector = [TensorSpec("x", DType.I64, (1,))]
    assert deserialize(J, scalar, spec_scalar).get("x").spec.shape == ()
    assert deserialize(J, vector, spec_vector).get("x").spec.shape == (1,)
    with pytest.raises(Malformed):
        deserialize(J, scalar, spec_vector)
    with pytest.raises(Malformed):
        deserialize(J, vector, spec_scalar)


def test_i64_extremes_round_trip_everywhere():
    bundle = bundle_of(TensorValue.of("n", DType.I64, [-(2**63), 2**63 - 1]))
    for kind, expected in ((J, None), (B, None), (T, None)):
        data = serialize(kind, bundle)
        out = deserialize(kind, data, bundle.specs())
        assert out == bundle
    assert serialize(J, bundle) == b'{"n":[-9223372036854775808,9223372036854775807]}'


def test_binary_formats_preserve_nan_payload_bits():
    pattern32 = struct.unpack("<f", bytes.fromhex("0100c07f"))[0]  # nan with payload
    value = TensorValue.of("v", DType.F32, pattern32)
    for kind in (B, T):
        data = serialize(kind, bundle_of(value))
        assert bytes.fromhex("0100c07f") in data
        out = deserialize(kind, data)
        assert out.get("v").raw_bytes() == bytes.fromhex("0100c07f")


def test_json_nan_canonicalizes():
    bundle = bundle_of(TensorValue.of("v", DType.F64, [float("nan"), float("inf")]))
    out = deserialize(J, serialize(J, bundle), bundle.specs())
    assert out == bundle  # canonical nan in, canonical nan out


# --- malformed inputs ------------------------------------------------------


def test_json_rejects_bad_payloads():
    spec = [TensorSpec("x", DType.I64, ())]
    bad = [
        b"[1,2]",  # top level must be an object
        b'{"x":1',  # unterminated
        b'{"x":null}',
        b'{"x":{"y":1}}',  # nested objects are not tensors
        b'{"x":[1,[2]]}',  # ragged
        b'{"x":[1,"a"]}',  # mixed types
        b'{"x":1,"x":2}',  # duplicate key
        b"\xff\xfe",  # not utf-8
    ]
    for data in bad:
        with pytest.raises(Malformed):
            deserialize(J, data, spec)
        with pytest.raises(Malformed):
            deserialize(J, data)


def test_json_expected_mismatches():
    data = b'{"x":[1.5,2.5]}'
    with pytest.raises(TypeMismatch) as err:
        deserialize(J, data, [TensorSpec("x", DType.I64, (2,))])
    assert err.value.found == "f64"
    with pytest.raises(TypeMismatch):
        deserialize(J, b'{"x":true}', [TensorSpec("x", DType.I64, ())])
    with pytest.raises(TypeMismatch):
        deserialize(J, b'{"x":1}', [TensorSpec("x", DType.STR, ())])
    with pytest.raises(TypeMismatch):
        deserialize(J, b'{"x":"a"}', [TensorSpec("x", DType.F32, ())])
    with pytest.raises(Malformed):  # missing key
        deserialize(J, b"{}", [TensorSpec("x", DType.I64, ())])
    with pytest.raises(Malformed):  # extra key
        deserialize(J, b'{"x":1,"y":2}', [TensorSpec("x", DType.I64, ())])
    with pytest.raises(Malformed):  # shape mismatch
        deserialize(J, b'{"x":[1,2,3]}', [TensorSpec("x", DType.I64, (2,))])


def test_json_int_literals_fill_float_specs():
    out = deserialize(J, b'{"x":[1,2]}', [TensorSpec("x", DType.F32, (2,))])
    assert out.get("x").data.tolist() == [1.0, 2.0]
    out = deserialize(J, b'{"x":[1,2.5]}', [TensorSpec("x", DType.F64, (2,))])
    assert out.get("x").data.tolist() == [1.0, 2.5]


def test_json_inference_without_expected():
    out = deserialize(J, b'{"i":[1,2],"f":[1.5],"b":true,"s":"x"}')
    assert out.get("i").spec.dtype is DType.I64
    assert out.get("f").spec.dtype is DType.F64
    assert out.get("b").spec.dtype is DType.BOOL
    assert out.get("s").spec.dtype is DType.STR
    assert out.keys() == ["i", "f", "b", "s"]


def test_json_zero_count_shapes_accept_declared_shape():
    out = deserialize(J, b'{"x":[]}', [TensorSpec("x", DType.F32, (0, 3))])
    assert out.get("x").spec.shape == (0, 3)
    out = deserialize(J, b'{"x":[[],[]]}', [TensorSpec("x", DType.F32, (2, 0))])
    assert out.get("x").spec.shape == (2, 0)


def test_bitstream_rejects_bad_headers():
    bad = [
        b"no newline at all",
        b"[]\n",
        b'{"features":{}}\n',
        b'{"features":[{"key":"x","dtype":"f32"}]}\n',  # missing shape
        b'{"features":[{"key":"x","dtype":"f99","shape":[]}]}\n',
        b'{"features":[{"key":"x","dtype":"f32","shape":[true]}]}\n',
        b'{"features":[{"key":"x","dtype":"f32","shape":[-1]}]}\n',
        b'{"features":[],"extra":1}\n',
        b'{"features":[{"key":"","dtype":"f32","shape":[]}]}\n',
    ]
    for data in bad:
        with pytest.raises(Malformed):
            deserialize(B, data)


def test_bitstream_duplicate_keys_rejected():
    data = b'{"features":[{"key":"x","dtype":"bool","shape":[]},{"key":"x","dtype":"bool","shape":[]}]}\n\x00\x00'
    with pytest.raises(Malformed):
        deserialize(B, data)


def test_bitstream_truncated_and_trailing():
    bundle = bundle_of(TensorValue.of("x", DType.F32, np.arange(500, dtype="<f4")))
    data = serialize(B, bundle)
    with pytest.raises(Malformed) as err:
        deserialize(B, data[:-4])  # short by exactly one element
    assert "truncated" in str(err.value)
    with pytest.raises(Malformed) as err:
        deserialize(B, data + b"\x00")
    assert "trailing" in str(err.value)


def test_bitstream_str_truncations():
    bundle = bundle_of(TensorValue.of("s", DType.STR, ["hello"]))
    data = serialize(B, bundle)
    with pytest.raises(Malformed):
        deserialize(B, data[:-1])  # short utf-8 body
    header_end = data.find(b"\n") + 1
    with pytest.raises(Malformed):
        deserialize(B, data[: header_end + 2])  # short length prefix


def test_bool_bytes_must_be_binary():
    bundle = bundle_of(TensorValue.of("b", DType.BOOL, [True]))
    for kind in (B, T):
        data = bytearray(serialize(kind, bundle))
        data[-1] = 2
        with pytest.raises(Malformed):
            deserialize(kind, bytes(data))


def test_invalid_utf8_in_str_rejected():
    bundle = bundle_of(TensorValue.of("s", DType.STR, ["ab"]))
    for kind in (B, T):
        data = bytearray(serialize(kind, bundle))
        data[-1] = 0xFF
        with pytest.raises(Malformed):
            deserialize(kind, bytes(data))


def test_tagged_unknown_tags_rejected():
    base = serialize(T, bundle_of(TensorValue.of("a", DType.I64, 5)))
    assert base[0] == 1
    for tag in range(256):
        if tag in (1, 2, 3, 4, 5):
            continue
        with pytest.raises(Malformed) as err:
            deserialize(T, bytes([tag]) + base[1:])
        assert "tag" in str(err.value)


def test_tagged_truncations_at_each_boundary():
    data = serialize(T, bundle_of(TensorValue.of("xy", DType.I64, [1, 2])))
    # cut inside header, key, rank, dims and elements
    for cut in (1, 2, 4, 5, 8, len(data) - 1):
        with pytest.raises(Malformed):
            deserialize(T, data[:cut])


def test_tagged_duplicate_keys_rejected():
    one = serialize(T, bundle_of(TensorValue.of("a", DType.I64, 5)))
    with pytest.raises(Malformed):
        deserialize(T, one + one)


def test_error_bundle_bypasses_expected_validation():
    err_bundle = bundle_of(TensorValue.of(ERROR_KEY, DType.STR, "boom"))
    specs = [TensorSpec("out", DType.F32, ())]
    for kind in (J, B, T):
        out = deserialize(kind, serialize(kind, err_bundle), specs)
        assert out.get(ERROR_KEY).data == ("boom",)


def test_validate_expected_reorders():
    bundle = bundle_of(
        TensorValue.of("b", DType.I64, 2), TensorValue.of("a", DType.I64, 1)
    )
    specs = [TensorSpec("a", DType.I64, ()), TensorSpec("b", DType.I64, ())]
    out = validate_expected(bundle, specs)
    assert out.keys() == ["a", "b"]


def test_payload_size_matches_serialized_length():
    rng = np.random.default_rng(7)
    for _ in range(20):
        bundle = random_bundle(rng)
        for kind in (J, B, T):
            assert payload_size(kind, bundle) == len(serialize(kind, bundle))


# --- randomized round trips -----------------------------------------------


def test_random_round_trips_all_kinds():
    rng = np.random.default_rng(1234)
    for _ in range(200):
        bundle = random_bundle(rng)
        for kind in (B, T):
            assert deserialize(kind, serialize(kind, bundle)) == bundle
        assert deserialize(J, serialize(J, bundle), bundle.specs()) == bundle


_KEYS = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=8
).filter(lambda k: k != ERROR_KEY)


@st.composite
def _values(draw, key):
    dtype = draw(st.sampled_from(list(DType)))
    shape = tuple(draw(st.lists(st.integers(0, 3), max_size=3)))
    count = math.prod(shape)
    if dtype is DType.I64:
        els = st.integers(-(2**63), 2**63 - 1)
    elif dtype is DType.F32:
        els = st.floats(width=32, allow_nan=False)
    elif dtype is DType.F64:
        els = st.floats(allow_nan=False)
    elif dtype is DType.BOOL:
        els = st.booleans()
    else:
        els = st.text(max_size=6)
    data = draw(st.lists(els, min_size=count, max_size=count))
    return TensorValue(TensorSpec(key, dtype, shape), data)


@st.composite
def _bundles(draw):
    keys = draw(st.lists(_KEYS, max_size=4, unique=True))
    bundle = FeatureBundle()
    for key in keys:
        bundle.put(key, draw(_values(key)))
    return bundle


@given(_bundles())
def test_property_binary_round_trips(bundle):
    for kind in (B, T):
        assert deserialize(kind, serialize(kind, bundle)) == bundle


@given(_bundles())
def test_property_json_round_trip_with_specs(bundle):
    assert deserialize(J, serialize(J, bundle), bundle.specs()) == bundle
