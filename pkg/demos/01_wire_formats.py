"""Tour of the three wire formats.

Builds one feature bundle and shows what each serializer puts on the wire:
json text, the bitstream header + raw little-endian bytes, and the tagged
binary layout. Ends with the reserved "__error" bundle that carries handler
failures back to the caller.
"""

import numpy as np

from modelbridge import (
    DType,
    FeatureBundle,
    ModelError,
    TensorValue,
    deserialize,
    payload_size,
    serialize,
)
from modelbridge.serdes import ERROR_KEY, SerDesKind


def preview(blob: bytes, limit: int = 96) -> str:
    head = blob[:limit]
    text = head.decode("utf-8", errors="replace")
    return text + ("..." if len(blob) > limit else "")


def main():
    bundle = FeatureBundle.of(
        TensorValue.of("step", DType.I64, 7),
        TensorValue.of("obs", DType.F32, np.array([0.1, -2.5, 3.0], dtype="<f4")),
        TensorValue.of("mask", DType.BOOL, [True, False, True]),
        TensorValue.of("note", DType.STR, "hello"),
    )
    print("bundle:", list(bundle.keys()))

    for kind in SerDesKind:
        blob = serialize(kind, bundle)
        print(f"\n{kind.value}: {payload_size(kind, bundle)} bytes")
        if kind is SerDesKind.JSON:
            print(" ", preview(blob, 200))
        elif kind is SerDesKind.BITSTREAM:
            header, raw = blob.split(b"\n", 1)
            print("  header:", preview(header, 200))
            print(f"  raw section: {len(raw)} bytes:", raw[:24].hex(" "))
        else:
            print("  first 32 bytes:", blob[:32].hex(" "))
        back = deserialize(kind, blob, bundle.specs())
        assert back == bundle
    print("\nall three formats round-trip bit-exact")

    # f32 values survive json because they are widened to the exact f64
    # before formatting; the price is long decimal strings.
    f = np.float32(0.1)
    one = FeatureBundle.of(TensorValue.of("x", DType.F32, f))
    print("\njson text for f32 0.1:", serialize(SerDesKind.JSON, one).decode())

    failure = FeatureBundle.of(TensorValue.of(ERROR_KEY, DType.STR, "model exploded"))
    blob = serialize(SerDesKind.TAGGED, failure)
    decoded = deserialize(SerDesKind.TAGGED, blob, bundle.specs())
    print("\nerror bundles skip spec validation:", decoded.get(ERROR_KEY).tolist())
    print("runners raise them as", ModelError.__name__)


if __name__ == "__main__":
    main()
