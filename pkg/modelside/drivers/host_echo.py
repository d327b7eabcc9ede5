"""Drive an inference-mode host runner against an external echo server.

Sends `count` seeded random bundles through the requested transport and
format, asks for each bundle back under its own specs, and checks the
reply is identical.  Prints OK on success; any mismatch or transport
error exits nonzero.
"""

import argparse
import random
import sys

import numpy as np

from modelbridge import (
    SerDesKind,
    DType,
    FeatureBundle,
    PipeEndpoints,
    RpcEndpoint,
    RunnerMode,
    TensorValue,
    pipe_runner_open,
    rpc_runner_open,
)

CHARS = (
    "abcdefghijklmnopqrstuvwxyz0123456789 _-"
    + chr(0x22)
    + chr(0x5C)
    + chr(0x09)
    + chr(0x0A)
    + chr(0x3C0)
    + chr(0x444)
    + chr(0x1F0A1)
)


def random_string(rng: random.Random) -> str:
    n = rng.randrange(0, 12)
    return "".join(rng.choice(CHARS) for _ in range(n))


def random_value(rng: random.Random, key: str) -> TensorValue:
    dtype = rng.choice([DType.I64, DType.F32, DType.F64, DType.BOOL, DType.STR])
    rank = rng.randrange(0, 4)
    shape = tuple(rng.randrange(0, 4) for _ in range(rank))
    count = 1
    for dim in shape:
        count *= dim
    if dtype is DType.I64:
        data = [rng.randrange(-(2**40), 2**40) for _ in range(count)]
    elif dtype in (DType.F32, DType.F64):
        data = []
        for _ in range(count):
            roll = rng.random()
            if roll < 0.05:
                data.append(float("inf") if rng.random() < 0.5 else float("-inf"))
            elif roll < 0.10:
                data.append(float(rng.randrange(-1000, 1000)))
            else:
                data.append(rng.uniform(-1e6, 1e6))
        if dtype is DType.F32:
            data = np.asarray(data, dtype=np.float32)
    elif dtype is DType.BOOL:
        data = [rng.random() < 0.5 for _ in range(count)]
    else:
        data = [random_string(rng) for _ in range(count)]
    return TensorValue.of(key, dtype, data, shape)


def random_bundle(rng: random.Random) -> FeatureBundle:
    bundle = FeatureBundle()
    names = rng.sample(
        ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"],
        rng.randrange(1, 5),
    )
    for key in names:
        bundle.put(key, random_value(rng, key))
    return bundle


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--transport", choices=["pipe", "rpc"], required=True)
    parser.add_argument("--serdes", choices=["json", "bitstream", "tagged"], required=True)
    parser.add_argument("--count", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--read-path")
    parser.add_argument("--write-path")
    parser.add_argument("--address", default="127.0.0.1")
    parser.add_argument("--port", type=int)
    args = parser.parse_args()

    if args.transport == "pipe":
        endpoints = PipeEndpoints(args.read_path, args.write_path)
        runner = pipe_runner_open(endpoints, SerDesKind.from_token(args.serdes), RunnerMode.INFERENCE)
    else:
        endpoint = RpcEndpoint(args.address, args.port)
        runner = rpc_runner_open(endpoint, SerDesKind.from_token(args.serdes), RunnerMode.INFERENCE)

    rng = random.Random(args.seed)
    try:
        for i in range(args.count):
            bundle = random_bundle(rng)
            reply = runner.evaluate(bundle, bundle.specs())
            if reply != bundle:
                print(f"MISMATCH at exchange {i}", file=sys.stderr)
                return 1
    finally:
        runner.close()
    print(f"OK {args.count}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
