"""Prints this side's encodings of the shared fixture bundles.

One line per bundle and format: "<name> <kind> <hex>"; "-" for an empty
payload. The node test compares these against its own encoder output.
"""

import json
import struct
import sys

import numpy as np

from modelbridge import DType, FeatureBundle, TensorValue, serialize
from modelbridge.serdes import SerDesKind


def value_from_recipe(feat):
    key = feat["key"]
    dtype = DType.from_token(feat["dtype"])
    shape = tuple(feat["shape"])
    if dtype is DType.STR:
        flat = feat["strs"]
    elif dtype is DType.I64:
        flat = np.array([int(v) for v in feat["ints"]], dtype="<i8")
    elif dtype is DType.BOOL:
        flat = np.array(feat["bools"], dtype="|b1")
    elif dtype is DType.F32:
        raw = b"".join(struct.pack("<I", int(h, 16)) for h in feat["bits32"])
        flat = np.frombuffer(raw, dtype="<f4").copy()
    else:
        raw = b"".join(struct.pack("<Q", int(h, 16)) for h in feat["bits64"])
        flat = np.frombuffer(raw, dtype="<f8").copy()
    return TensorValue.of(key, dtype, flat, shape=shape)


def main():
    with open(sys.argv[1], encoding="utf-8") as fh:
        recipes = json.load(fh)
    for recipe in recipes:
        bundle = FeatureBundle.of(*(value_from_recipe(f) for f in recipe["features"]))
        for kind in SerDesKind:
            blob = serialize(kind, bundle)
            print(recipe["name"], kind.value, blob.hex() or "-")


if __name__ == "__main__":
    main()
