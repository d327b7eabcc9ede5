"""Serve a training-mode host runner whose handler doubles numeric features.

Integer and floating features come back multiplied by two in their own
dtype; bool and str features are returned unchanged.  With the rpc
transport the script binds a free port itself and announces it on stdout
as "PORT <n>" before serving.  Exits 0 after answering --count requests.
"""

import argparse
import socket
import sys

from modelbridge import (
    DType,
    FeatureBundle,
    PipeEndpoints,
    RpcEndpoint,
    RunnerMode,
    SerDesKind,
    TensorSpec,
    TensorValue,
    pipe_runner_open,
    rpc_runner_open,
    serve_training,
)

NUMERIC = (DType.I64, DType.F32, DType.F64)


def double_bundle(bundle: FeatureBundle) -> FeatureBundle:
    out = FeatureBundle()
    for key in bundle.keys():
        value = bundle.get(key)
        if value.spec.dtype in NUMERIC:
            out.put(key, TensorValue(value.spec, value.data * 2))
        else:
            out.put(key, value)
    return out


def parse_specs(text: str | None) -> list[TensorSpec] | None:
    """Decode key:dtype:dim,dim entries separated by semicolons."""
    if not text:
        return None
    specs = []
    for entry in text.split(";"):
        key, dtype, dims = entry.split(":")
        shape = tuple(int(d) for d in dims.split(",")) if dims else ()
        specs.append(TensorSpec(key, DType.from_token(dtype), shape))
    return specs


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--transport", choices=["pipe", "rpc"], required=True)
    parser.add_argument("--serdes", choices=["json", "bitstream", "tagged"], required=True)
    parser.add_argument("--count", type=int, default=100)
    parser.add_argument("--read-path")
    parser.add_argument("--write-path")
    parser.add_argument("--address", default="127.0.0.1")
    parser.add_argument("--input-specs", help="key:dtype:dims;... typing for json requests")
    parser.add_argument("--timeout-ms", type=float, default=30000.0)
    args = parser.parse_args()

    kind = SerDesKind.from_token(args.serdes)
    if args.transport == "pipe":
        endpoints = PipeEndpoints(args.read_path, args.write_path)
        runner = pipe_runner_open(endpoints, kind, RunnerMode.TRAINING)
    else:
        probe = socket.socket()
        probe.bind((args.address, 0))
        port = probe.getsockname()[1]
        probe.close()
        runner = rpc_runner_open(RpcEndpoint(args.address, port), kind, RunnerMode.TRAINING)
        print(f"PORT {port}", flush=True)

    served = serve_training(
        runner,
        double_bundle,
        input_specs=parse_specs(args.input_specs),
        timeout_ms=args.timeout_ms,
        max_requests=args.count,
    )
    runner.close()
    if served != args.count:
        print(f"SHORT {served}", file=sys.stderr)
        return 1
    print(f"OK {served}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
