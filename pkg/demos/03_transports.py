"""Talking to a model that lives in another process.

Spawns serving peers with the bundled CLI and drives them through the two
inter-process runners: named pipes (any serdes) and the socket protocol
(tagged binary only). Shows the retry schedule against a dead endpoint and
four isolated channels running side by side.
"""

import tempfile
import time
from pathlib import Path

import numpy as np

from modelbridge import (
    DType,
    FeatureBundle,
    PipeEndpoints,
    RetriesExhausted,
    RetryPolicy,
    RpcEndpoint,
    RunnerMode,
    TensorValue,
    free_port,
    open_multi_worker,
    pipe_runner_open,
    rpc_runner_open,
    spawned_peer,
)
from modelbridge.serdes import SerDesKind


def pipe_session(tmp: str, kind: SerDesKind):
    host_read = str(Path(tmp) / f"{kind.value}_m2h.pipe")
    host_write = str(Path(tmp) / f"{kind.value}_h2m.pipe")
    peer = spawned_peer([
        "--runner", "pipe", "--serdes", kind.value, "--mode", "echo",
        "--read-pipe", host_write, "--write-pipe", host_read,
    ])
    bundle = FeatureBundle.of(
        TensorValue.of("x", DType.F32, np.array([1.5, -2.25], dtype="<f4")),
        TensorValue.of("tag", DType.STR, kind.value),
    )
    with peer:
        runner = pipe_runner_open(
            PipeEndpoints(host_read, host_write), kind, RunnerMode.INFERENCE
        )
        try:
            reply = runner.evaluate(bundle, bundle.specs())
            assert reply == bundle
            print(f"pipe + {kind.value}: echo round trip ok")
        finally:
            runner.close()


def main():
    with tempfile.TemporaryDirectory() as tmp:
        for kind in SerDesKind:
            pipe_session(tmp, kind)

        port = free_port()
        peer = spawned_peer([
            "--runner", "rpc", "--serdes", "tagged", "--mode", "echo",
            "--address", "127.0.0.1", "--port", str(port),
        ])
        with peer:
            runner = rpc_runner_open(
                RpcEndpoint("127.0.0.1", port), SerDesKind.TAGGED, RunnerMode.INFERENCE
            )
            bundle = FeatureBundle.of(TensorValue.of("n", DType.I64, [4, 5, 6]))
            try:
                assert runner.evaluate(bundle, bundle.specs()) == bundle
                print("rpc + tagged: echo round trip ok")
            finally:
                runner.close()

        # Nobody listens on this port; watch the schedule back off.
        policy = RetryPolicy(initial_delay_ms=40, multiplier=2.0, max_retries=2,
                             per_call_timeout_ms=500)
        runner = rpc_runner_open(
            RpcEndpoint("127.0.0.1", free_port()), SerDesKind.TAGGED,
            RunnerMode.INFERENCE, policy,
        )
        t0 = time.perf_counter()
        try:
            runner.evaluate(bundle, bundle.specs())
        except RetriesExhausted as exc:
            offs = ", ".join(f"{o:.0f}" for o in exc.attempt_offsets_ms)
            print(f"dead endpoint: {exc.attempts} attempts at [{offs}]ms, "
                  f"gave up after {(time.perf_counter() - t0) * 1e3:.0f}ms")
        finally:
            runner.close()

        # Four channels, four peers, no shared state.
        endpoints = [
            PipeEndpoints(str(Path(tmp) / f"w{i}_m2h.pipe"),
                          str(Path(tmp) / f"w{i}_h2m.pipe"))
            for i in range(4)
        ]
        peers = [
            spawned_peer([
                "--runner", "pipe", "--serdes", "tagged", "--mode", "echo",
                "--read-pipe", ep.write_path, "--write-pipe", ep.read_path,
            ])
            for ep in endpoints
        ]
        for p in peers:
            p.__enter__()
        workers = open_multi_worker(endpoints, SerDesKind.TAGGED, RunnerMode.INFERENCE)
        try:
            for w, worker in enumerate(workers):
                tagged = FeatureBundle.of(TensorValue.of("worker", DType.I64, w))
                assert worker.evaluate(tagged, tagged.specs()) == tagged
            print(f"{len(workers)} workers answered on their own channels")
        finally:
            for worker in workers:
                worker.close()
            for p in peers:
                p.__exit__(None, None, None)


if __name__ == "__main__":
    main()
