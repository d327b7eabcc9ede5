"""Typed, ordered feature containers exchanged between host and model.

A FeatureBundle is an insertion-ordered mapping from string keys to
tensors.  Order is part of the value: serializers walk the bundle in
insertion order and equality compares order as well as content.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import Malformed, TypeMismatch

__all__ = ["DType", "TensorSpec", "TensorValue", "FeatureBundle"]


class DType(enum.Enum):
    """Element types that can cross the wire."""

    I64 = "i64"
    F32 = "f32"
    F64 = "f64"
    BOOL = "bool"
    STR = "str"

    @property
    def token(self) -> str:
        return self.value

    @classmethod
    def from_token(cls, token: str) -> "DType":
        for member in cls:
            if member.value == token:
                return member
        raise Malformed(f"unknown dtype token {token!r}")

    @property
    def np_dtype(self) -> np.dtype | None:
        """Little-endian numpy dtype backing this element type (None for STR)."""
        return _NP_DTYPES[self]

    @property
    def element_bytes(self) -> int | None:
        """Fixed encoded width in bytes; None for STR (length-prefixed)."""
        return _WIDTHS[self]


_NP_DTYPES = {
    DType.I64: np.dtype("<i8"),
    DType.F32: np.dtype("<f4"),
    DType.F64: np.dtype("<f8"),
    DType.BOOL: np.dtype("|b1"),
    DType.STR: None,
}

_WIDTHS = {
    DType.I64: 8,
    DType.F32: 4,
    DType.F64: 8,
    DType.BOOL: 1,
    DType.STR: None,
}


def _check_key(key: str) -> str:
    if not isinstance(key, str) or not key:
        raise Malformed("feature key must be a non-empty string")
    for ch in key:
        code = ord(ch)
        # C0 controls, DEL and C1 controls are forbidden in keys.
        if code < 0x20 or 0x7F <= code <= 0x9F:
            raise Malformed(f"feature key {key!r} contains a control character")
    return key


def _check_shape(shape: Iterable[int]) -> tuple[int, ...]:
    out = []
    for dim in shape:
        d = int(dim)
        if d < 0:
            raise Malformed(f"negative dimension {d} in shape")
        out.append(d)
    return tuple(out)


@dataclass(frozen=True)
class TensorSpec:
    """Key, element type and shape of one feature.

    shape () is a scalar; rank >= 2 data is stored and encoded row-major.
    """

    key: str
    dtype: DType
    shape: tuple[int, ...] = ()

    def __post_init__(self):
        _check_key(self.key)
        object.__setattr__(self, "shape", _check_shape(self.shape))

    @property
    def element_count(self) -> int:
        return math.prod(self.shape)

    @property
    def rank(self) -> int:
        return len(self.shape)


class TensorValue:
    """One tensor: a TensorSpec plus its elements in row-major order.

    Numeric and bool data is held as a flat little-endian numpy array;
    string data as a tuple of str.  Equality is bitwise for floats, so
    two NaNs with different payloads compare unequal.
    """

    __slots__ = ("spec", "data")

    def __init__(self, spec: TensorSpec, data):
        self.spec = spec
        if spec.dtype is DType.STR:
            items = tuple(data)
            for item in items:
                if not isinstance(item, str):
                    raise Malformed(f"feature {spec.key!r}: str tensor holds {type(item).__name__}")
            self.data = items
        else:
            try:
                arr = np.asarray(data, dtype=spec.dtype.np_dtype).reshape(-1)
            except (ValueError, TypeError, OverflowError) as exc:
                raise Malformed(f"feature {spec.key!r}: {exc}") from None
            self.data = arr
        if len(self.data) != spec.element_count:
            raise Malformed(
                f"feature {spec.key!r}: {len(self.data)} elements for shape {spec.shape}"
            )

    @classmethod
    def of(cls, key: str, dtype: DType, data, shape: Sequence[int] | None = None) -> "TensorValue":
        """Build a value, deriving the shape from the data when not given.

        A bare scalar (including a single str) becomes shape (); nested
        sequences take their natural rectangular shape.
        """
        if dtype is DType.STR:
            if isinstance(data, str):
                return cls(TensorSpec(key, dtype, () if shape is None else tuple(shape)), (data,))
            try:
                arr = np.asarray(data, dtype=object)
            except ValueError as exc:
                raise Malformed(f"feature {key!r}: {exc}") from None
            flat = tuple(arr.reshape(-1).tolist())
            return cls(TensorSpec(key, dtype, arr.shape if shape is None else tuple(shape)), flat)
        try:
            arr = np.asarray(data, dtype=dtype.np_dtype)
        except (ValueError, TypeError, OverflowError) as exc:
            raise Malformed(f"feature {key!r}: {exc}") from None
        spec = TensorSpec(key, dtype, arr.shape if shape is None else tuple(shape))
        return cls(spec, arr.reshape(-1))

    def raw_bytes(self) -> bytes:
        """Element bytes as encoded on every binary wire (no lengths for STR)."""
        if self.spec.dtype is DType.STR:
            raise Malformed("str tensors have no fixed raw byte form")
        return self.data.tobytes()

    def tolist(self):
        """Elements as native Python values nested per the shape."""
        flat = list(self.data) if self.spec.dtype is DType.STR else self.data.tolist()
        return _nest(flat, self.spec.shape)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorValue):
            return NotImplemented
        if self.spec != other.spec:
            return False
        if self.spec.dtype is DType.STR:
            return self.data == other.data
        return self.data.tobytes() == other.data.tobytes()

    def __repr__(self) -> str:
        return f"TensorValue({self.spec.key!r}, {self.spec.dtype.token}, shape={self.spec.shape})"


def _nest(flat: list, shape: tuple[int, ...]):
    if not shape:
        return flat[0]
    if len(shape) == 1:
        return list(flat)
    inner = math.prod(shape[1:])
    return [_nest(flat[i * inner : (i + 1) * inner], shape[1:]) for i in range(shape[0])]


class FeatureBundle:
    """Insertion-ordered collection of TensorValues keyed by string.

    put() on an existing key replaces the value but keeps its position.
    """

    __slots__ = ("_entries",)

    def __init__(self):
        self._entries: dict[str, TensorValue] = {}

    @classmethod
    def of(cls, *values: TensorValue) -> "FeatureBundle":
        bundle = cls()
        for value in values:
            bundle.put(value.spec.key, value)
        return bundle

    def put(self, key: str, value: TensorValue) -> None:
        _check_key(key)
        if value.spec.key != key:
            raise Malformed(f"key {key!r} does not match value key {value.spec.key!r}")
        self._entries[key] = value

    def get(self, key: str, expected: DType | None = None) -> TensorValue:
        if key not in self._entries:
            raise Malformed(f"feature {key!r} is absent")
        value = self._entries[key]
        if expected is not None and value.spec.dtype is not expected:
            raise TypeMismatch(key, expected.token, value.spec.dtype.token)
        return value

    def clear(self) -> None:
        self._entries.clear()

    def keys(self) -> list[str]:
        return list(self._entries)

    def specs(self) -> list[TensorSpec]:
        return [v.spec for v in self._entries.values()]

    def values(self) -> list[TensorValue]:
        return list(self._entries.values())

    def copy(self) -> "FeatureBundle":
        out = FeatureBundle()
        for key, value in self._entries.items():
            out.put(key, value)
        return out

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[TensorValue]:
        return iter(self._entries.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureBundle):
            return NotImplemented
        if self.keys() != other.keys():
            return False
        return all(self._entries[k] == other._entries[k] for k in self._entries)

    def __repr__(self) -> str:
        inner = ", ".join(f"{v.spec.key}:{v.spec.dtype.token}{list(v.spec.shape)}" for v in self)
        return f"FeatureBundle({inner})"
