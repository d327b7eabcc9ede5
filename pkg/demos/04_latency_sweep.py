"""Round-trip latency across runners and formats.

Runs a short sweep (vector lengths 500..2000) over the in-process runner,
pipes with both binary and json encodings, and the socket protocol, then
prints the per-length medians as CSV plus a cumulative total per lane.
The full-size study is available as `modelbridge bench --full`.
"""

import tempfile
from pathlib import Path

from modelbridge import (
    PipeEndpoints,
    RpcEndpoint,
    RunnerMode,
    free_port,
    pipe_runner_open,
    rpc_runner_open,
    rtt_sweep,
    spawned_peer,
)
from modelbridge.bench import CSV_HEADER, SweepConfig, cumulative_rtt_micros
from modelbridge.serdes import SerDesKind


def show(records):
    for r in records:
        print(" ", r.csv_row())
    total = cumulative_rtt_micros(records)
    print(f"  cumulative: {total} us")
    return total


def main():
    print(CSV_HEADER)
    config = SweepConfig(runner="inproc", max_len=2000)
    show(rtt_sweep(config))

    with tempfile.TemporaryDirectory() as tmp:
        for kind in (SerDesKind.BITSTREAM, SerDesKind.JSON):
            host_read = str(Path(tmp) / f"{kind.value}_m2h.pipe")
            host_write = str(Path(tmp) / f"{kind.value}_h2m.pipe")
            peer = spawned_peer([
                "--runner", "pipe", "--serdes", kind.value, "--mode", "mlp",
                "--read-pipe", host_write, "--write-pipe", host_read,
            ])
            with peer:
                runner = pipe_runner_open(
                    PipeEndpoints(host_read, host_write), kind, RunnerMode.INFERENCE
                )
                try:
                    show(rtt_sweep(SweepConfig(runner="pipe", serdes=kind,
                                               max_len=2000), runner))
                finally:
                    runner.close()

        port = free_port()
        peer = spawned_peer([
            "--runner", "rpc", "--serdes", "tagged", "--mode", "mlp",
            "--address", "127.0.0.1", "--port", str(port),
        ])
        with peer:
            runner = rpc_runner_open(
                RpcEndpoint("127.0.0.1", port), SerDesKind.TAGGED, RunnerMode.INFERENCE
            )
            try:
                show(rtt_sweep(SweepConfig(runner="rpc", serdes=SerDesKind.TAGGED,
                                           max_len=2000), runner))
            finally:
                runner.close()

    print("\ntext encoding dominates: the json lane pays for parsing float")
    print("reprs while the binary lanes just copy buffers")


if __name__ == "__main__":
    main()
