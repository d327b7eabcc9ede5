"""Three interchangeable wire formats for FeatureBundles.

All multi-byte integers and floats are little-endian.  Tensors of rank >= 2
are laid out row-major.  The formats are pinned byte-for-byte so independent
implementations can interoperate:

Json
    One JSON object, keys in bundle order, compact separators, UTF-8.
    Scalars encode bare, higher ranks as nested arrays.  Floats use the
    shortest decimal that round-trips (f32 is converted exactly to f64
    first).  NaN and +/-Infinity use the conventional non-standard tokens.

Bitstream
    A single-line JSON header {"features":[{"key":...,"dtype":...,
    "shape":[...]}, ...]} terminated by one LF (0x0A), then each feature's
    raw element bytes concatenated with no padding.  A str element is a
    4-byte little-endian length followed by its UTF-8 bytes.

TaggedBinary
    For each feature in order: one type-tag byte (1=i64, 2=f32, 3=f64,
    4=bool, 5=str), a 2-byte little-endian key length, the key's UTF-8
    bytes, a 1-byte rank, rank 4-byte little-endian dimensions, then the
    element bytes exactly as in Bitstream.  An empty bundle is zero bytes.

deserialize() accepts an optional list of expected TensorSpecs.  When
given, the decoded features are checked against it (TypeMismatch on a
dtype difference, Malformed on missing/extra keys or a shape difference)
and the result is returned in expected order.  Json requires the expected
specs to disambiguate numeric types; without them it falls back to
inference (ints become i64, floats f64).

A payload holding exactly one feature named "__error" with str content is
an error report from the peer's handler; it bypasses expected-spec
validation so the caller can surface it as a ModelError.
"""

from __future__ import annotations

import enum
import json
import struct
from typing import Sequence

import numpy as np

from .errors import Malformed, TypeMismatch
from .tensors import DType, FeatureBundle, TensorSpec, TensorValue

__all__ = [
    "SerDesKind",
    "ERROR_KEY",
    "serialize",
    "deserialize",
    "payload_size",
    "validate_expected",
]

ERROR_KEY = "__error"

_TAGS = {DType.I64: 1, DType.F32: 2, DType.F64: 3, DType.BOOL: 4, DType.STR: 5}
_TAG_TO_DTYPE = {v: k for k, v in _TAGS.items()}


class SerDesKind(enum.Enum):
    JSON = "json"
    BITSTREAM = "bitstream"
    TAGGED = "tagged"

    @classmethod
    def from_token(cls, token: str) -> "SerDesKind":
        for member in cls:
            if member.value == token:
                return member
        raise Malformed(f"unknown serdes {token!r}")

    @property
    def self_describing(self) -> bool:
        return self is not SerDesKind.JSON


def serialize(kind: SerDesKind, bundle: FeatureBundle) -> bytes:
    if kind is SerDesKind.JSON:
        return _json_encode(bundle)
    if kind is SerDesKind.BITSTREAM:
        return _bitstream_encode(bundle)
    return _tagged_encode(bundle)


def deserialize(
    kind: SerDesKind,
    data: bytes,
    expected: Sequence[TensorSpec] | None = None,
) -> FeatureBundle:
    if kind is SerDesKind.JSON:
        return _json_decode(data, expected)
    bundle = _bitstream_decode(data) if kind is SerDesKind.BITSTREAM else _tagged_decode(data)
    if expected is None or _is_error_bundle(bundle):
        return bundle
    return validate_expected(bundle, expected)


def payload_size(kind: SerDesKind, bundle: FeatureBundle) -> int:
    """Encoded size in bytes of the bundle under the given format."""
    return len(serialize(kind, bundle))


def _is_error_bundle(bundle: FeatureBundle) -> bool:
    return (
        len(bundle) == 1
        and ERROR_KEY in bundle
        and bundle.get(ERROR_KEY).spec.dtype is DType.STR
    )


def validate_expected(bundle: FeatureBundle, expected: Sequence[TensorSpec]) -> FeatureBundle:
    """Check a decoded bundle against declared specs and reorder to match.

    The key sets must be equal; each feature's dtype and shape must equal
    the declaration.  Returns a new bundle in declaration order.
    """
    got = set(bundle.keys())
    want = [spec.key for spec in expected]
    for key in want:
        if key not in got:
            raise Malformed(f"feature {key!r} is absent")
    for key in bundle.keys():
        if key not in want:
            raise Malformed(f"unexpected feature {key!r}")
    out = FeatureBundle()
    for spec in expected:
        value = bundle.get(spec.key)
        if value.spec.dtype is not spec.dtype:
            raise TypeMismatch(spec.key, spec.dtype.token, value.spec.dtype.token)
        if value.spec.shape != spec.shape:
            raise Malformed(
                f"feature {spec.key!r}: shape {list(value.spec.shape)} does not match "
                f"declared {list(spec.shape)}"
            )
        out.put(spec.key, value)
    return out


# --- Json ---------------------------------------------------------------


def _json_encode(bundle: FeatureBundle) -> bytes:
    obj = {}
    for value in bundle:
        obj[value.spec.key] = value.tolist()
    try:
        text = json.dumps(obj, ensure_ascii=False, separators=(",", ":"))
    except ValueError as exc:
        raise Malformed(f"json encoding failed: {exc}") from None
    try:
        return text.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise Malformed(f"invalid utf-8 in payload: {exc}") from None


def _reject_duplicates(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise Malformed(f"duplicate key {key!r} in json object")
        seen[key] = value
    return seen


def _json_decode(data: bytes, expected: Sequence[TensorSpec] | None) -> FeatureBundle:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise Malformed(f"payload is not utf-8: {exc}") from None
    try:
        obj = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise Malformed(f"invalid json: {exc}") from None
    if not isinstance(obj, dict):
        raise Malformed("json payload must be an object")
    for key in obj:
        if not isinstance(key, str):
            raise Malformed("json keys must be strings")

    if list(obj.keys()) == [ERROR_KEY] and isinstance(obj[ERROR_KEY], str):
        return FeatureBundle.of(TensorValue.of(ERROR_KEY, DType.STR, obj[ERROR_KEY]))

    if expected is None:
        out = FeatureBundle()
        for key, raw in obj.items():
            out.put(key, _json_infer_value(key, raw))
        return out

    want = [spec.key for spec in expected]
    for key in want:
        if key not in obj:
            raise Malformed(f"feature {key!r} is absent")
    for key in obj:
        if key not in want:
            raise Malformed(f"unexpected feature {key!r}")
    out = FeatureBundle()
    for spec in expected:
        out.put(spec.key, _json_typed_value(spec, obj[spec.key]))
    return out


def _json_shape_and_flat(key: str, raw) -> tuple[tuple[int, ...], list]:
    """Derive the rectangular shape of a nested JSON value and flatten it."""
    if not isinstance(raw, list):
        return (), [raw]
    if not raw:
        return (0,), []
    child_shapes = []
    flat: list = []
    for item in raw:
        shape, part = _json_shape_and_flat(key, item)
        child_shapes.append(shape)
        flat.extend(part)
    first = child_shapes[0]
    if any(shape != first for shape in child_shapes):
        raise Malformed(f"feature {key!r}: ragged nested array")
    return (len(raw),) + first, flat


def _json_kind(key: str, flat: list) -> str:
    kinds = set()
    for item in flat:
        if isinstance(item, bool):
            kinds.add("bool")
        elif isinstance(item, int):
            kinds.add("int")
        elif isinstance(item, float):
            kinds.add("float")
        elif isinstance(item, str):
            kinds.add("str")
        else:
            raise Malformed(f"feature {key!r}: unsupported json element {type(item).__name__}")
    if not kinds:
        return "empty"
    if kinds <= {"int", "float"}:
        return "float" if "float" in kinds else "int"
    if len(kinds) == 1:
        return kinds.pop()
    raise Malformed(f"feature {key!r}: mixed element types {sorted(kinds)}")


def _json_infer_value(key: str, raw) -> TensorValue:
    shape, flat = _json_shape_and_flat(key, raw)
    kind = _json_kind(key, flat)
    dtype = {
        "int": DType.I64,
        "float": DType.F64,
        "bool": DType.BOOL,
        "str": DType.STR,
        "empty": DType.F64,
    }[kind]
    return TensorValue(TensorSpec(key, dtype, shape), flat)


def _json_typed_value(spec: TensorSpec, raw) -> TensorValue:
    shape, flat = _json_shape_and_flat(spec.key, raw)
    if shape != spec.shape:
        # Zero-element tensors lose their exact shape in json ([[],[]] aside);
        # accept any declared shape with the same (zero) element count.
        if not (len(flat) == 0 and spec.element_count == 0):
            raise Malformed(
                f"feature {spec.key!r}: shape {list(shape)} does not match "
                f"declared {list(spec.shape)}"
            )
    kind = _json_kind(spec.key, flat)
    dtype = spec.dtype
    if dtype in (DType.F32, DType.F64):
        if kind not in ("int", "float", "empty"):
            raise TypeMismatch(spec.key, dtype.token, _KIND_TOKEN[kind])
        return TensorValue(spec, [float(x) for x in flat])
    if dtype is DType.I64:
        if kind not in ("int", "empty"):
            raise TypeMismatch(spec.key, dtype.token, _KIND_TOKEN[kind])
        return TensorValue(spec, flat)
    if dtype is DType.BOOL:
        if kind not in ("bool", "empty"):
            raise TypeMismatch(spec.key, dtype.token, _KIND_TOKEN[kind])
        return TensorValue(spec, flat)
    if kind not in ("str", "empty"):
        raise TypeMismatch(spec.key, dtype.token, _KIND_TOKEN[kind])
    return TensorValue(spec, flat)


_KIND_TOKEN = {"int": "i64", "float": "f64", "bool": "bool", "str": "str", "empty": "empty"}


# --- shared element coding for the binary formats ------------------------


def _element_bytes(value: TensorValue) -> bytes:
    dtype = value.spec.dtype
    if dtype is DType.STR:
        parts = []
        for s in value.data:
            try:
                enc = s.encode("utf-8")
            except UnicodeEncodeError as exc:
                raise Malformed(f"feature {value.spec.key!r}: invalid utf-8: {exc}") from None
            parts.append(struct.pack("<I", len(enc)) + enc)
        return b"".join(parts)
    return value.data.tobytes()


def _read_elements(key: str, dtype: DType, count: int, data: bytes, offset: int):
    """Decode count elements at offset; returns (payload, new_offset)."""
    if dtype is DType.STR:
        items = []
        for _ in range(count):
            if offset + 4 > len(data):
                raise Malformed(f"feature {key!r}: truncated str length")
            (length,) = struct.unpack_from("<I", data, offset)
            offset += 4
            if offset + length > len(data):
                raise Malformed(f"feature {key!r}: truncated str element")
            try:
                items.append(data[offset : offset + length].decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise Malformed(f"feature {key!r}: invalid utf-8: {exc}") from None
            offset += length
        return tuple(items), offset
    width = dtype.element_bytes
    nbytes = count * width
    if offset + nbytes > len(data):
        raise Malformed(f"feature {key!r}: truncated element bytes")
    chunk = data[offset : offset + nbytes]
    if dtype is DType.BOOL:
        raw = np.frombuffer(chunk, dtype="|u1")
        if raw.size and not np.all(raw <= 1):
            raise Malformed(f"feature {key!r}: bool byte must be 0 or 1")
        return raw.astype("|b1"), offset + nbytes
    return np.frombuffer(chunk, dtype=dtype.np_dtype).copy(), offset + nbytes


# --- Bitstream ------------------------------------------------------------


def _bitstream_encode(bundle: FeatureBundle) -> bytes:
    header = {
        "features": [
            {"key": v.spec.key, "dtype": v.spec.dtype.token, "shape": list(v.spec.shape)}
            for v in bundle
        ]
    }
    head = json.dumps(header, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    body = b"".join(_element_bytes(v) for v in bundle)
    return head + b"\n" + body


def _bitstream_decode(data: bytes) -> FeatureBundle:
    nl = data.find(b"\n")
    if nl < 0:
        raise Malformed("bitstream header is not terminated")
    try:
        header = json.loads(data[:nl].decode("utf-8"), object_pairs_hook=_reject_duplicates)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise Malformed(f"invalid bitstream header: {exc}") from None
    if not isinstance(header, dict) or set(header) != {"features"}:
        raise Malformed("bitstream header must be an object with a 'features' list")
    entries = header["features"]
    if not isinstance(entries, list):
        raise Malformed("bitstream header must be an object with a 'features' list")

    specs = []
    for entry in entries:
        if not isinstance(entry, dict) or set(entry) != {"key", "dtype", "shape"}:
            raise Malformed("bitstream feature entry must have key, dtype and shape")
        key, token, shape = entry["key"], entry["dtype"], entry["shape"]
        if not isinstance(key, str) or not isinstance(token, str):
            raise Malformed("bitstream feature key and dtype must be strings")
        if not isinstance(shape, list) or any(
            isinstance(d, bool) or not isinstance(d, int) for d in shape
        ):
            raise Malformed(f"feature {key!r}: shape must be a list of integers")
        specs.append(TensorSpec(key, DType.from_token(token), tuple(shape)))

    seen = set()
    for spec in specs:
        if spec.key in seen:
            raise Malformed(f"duplicate feature {spec.key!r}")
        seen.add(spec.key)

    bundle = FeatureBundle()
    offset = nl + 1
    for spec in specs:
        payload, offset = _read_elements(spec.key, spec.dtype, spec.element_count, data, offset)
        bundle.put(spec.key, TensorValue(spec, payload))
    if offset != len(data):
        raise Malformed(f"{len(data) - offset} trailing bytes after last feature")
    return bundle


# --- TaggedBinary ---------------------------------------------------------


def _tagged_encode(bundle: FeatureBundle) -> bytes:
    parts = []
    for value in bundle:
        spec = value.spec
        key_bytes = spec.key.encode("utf-8")
        if len(key_bytes) > 0xFFFF:
            raise Malformed(f"feature {spec.key[:32]!r}...: key longer than 65535 bytes")
        if spec.rank > 0xFF:
            raise Malformed(f"feature {spec.key!r}: rank {spec.rank} exceeds 255")
        for dim in spec.shape:
            if dim > 0xFFFFFFFF:
                raise Malformed(f"feature {spec.key!r}: dimension {dim} exceeds 32 bits")
        parts.append(struct.pack("<BH", _TAGS[spec.dtype], len(key_bytes)))
        parts.append(key_bytes)
        parts.append(struct.pack("<B", spec.rank))
        parts.append(struct.pack(f"<{spec.rank}I", *spec.shape))
        parts.append(_element_bytes(value))
    return b"".join(parts)


def _tagged_decode(data: bytes) -> FeatureBundle:
    bundle = FeatureBundle()
    offset = 0
    while offset < len(data):
        if offset + 3 > len(data):
            raise Malformed("truncated feature header")
        tag, key_len = struct.unpack_from("<BH", data, offset)
        offset += 3
        if tag not in _TAG_TO_DTYPE:
            raise Malformed(f"unknown type tag {tag}")
        if offset + key_len > len(data):
            raise Malformed("truncated feature key")
        try:
            key = data[offset : offset + key_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise Malformed(f"invalid utf-8 in feature key: {exc}") from None
        offset += key_len
        if offset + 1 > len(data):
            raise Malformed(f"feature {key!r}: truncated rank")
        rank = data[offset]
        offset += 1
        if offset + 4 * rank > len(data):
            raise Malformed(f"feature {key!r}: truncated dimensions")
        shape = struct.unpack_from(f"<{rank}I", data, offset)
        offset += 4 * rank
        spec = TensorSpec(key, _TAG_TO_DTYPE[tag], tuple(shape))
        if key in bundle:
            raise Malformed(f"duplicate feature {key!r}")
        payload, offset = _read_elements(key, spec.dtype, spec.element_count, data, offset)
        bundle.put(key, TensorValue(spec, payload))
    return bundle
