"""Command line: rtt benchmarks, episode demos, loopback peers, model files.

Exit codes: 0 on success, 1 on a runtime failure (diagnostic on stderr),
2 on usage errors (argparse).
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from . import bench as bench_mod
from .errors import RunnerError
from .inproc import (
    Activation,
    agent_act,
    inproc_runner,
    load_model,
    mlp_forward,
    random_model,
    save_model,
)
from .serdes import SerDesKind
from .tensors import DType, FeatureBundle, TensorSpec, TensorValue
from .transport import (
    PipeEndpoints,
    RetryPolicy,
    RpcEndpoint,
    RunnerMode,
    pipe_runner_open,
    rpc_runner_open,
    serve_training,
)

OUT_SPECS = (TensorSpec("out", DType.F32, ()),)
ACTION_SPECS = (TensorSpec("action", DType.I64, ()),)


def _serdes_default(runner: str) -> str:
    return {"pipe": "bitstream", "rpc": "tagged", "inproc": "tagged"}[runner]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modelbridge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="measure evaluate() round trips over a length sweep")
    p.add_argument("--runner", choices=bench_mod.RUNNER_NAMES, default="inproc")
    p.add_argument("--serdes", choices=[k.value for k in SerDesKind], default=None)
    p.add_argument("--min", type=int, default=500, dest="min_len")
    p.add_argument("--max", type=int, default=5000, dest="max_len")
    p.add_argument("--step", type=int, default=500)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--full", action="store_true", help="sweep 500..50000 instead of the defaults")
    p.add_argument("--out", default="-", help="CSV destination, - for stdout")
    p.add_argument("--pipe-dir", default=None, help="directory for the fifo pair (pipe runner)")
    p.add_argument("--address", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0, help="rpc peer port; 0 picks a free one")
    p.add_argument("--no-peer", action="store_true", help="talk to an already-running peer")

    p = sub.add_parser("demo", help="run one scripted episode and print its trace")
    p.add_argument("--runner", choices=("inproc", "pipe", "rpc"), default="inproc")
    p.add_argument("--serdes", choices=[k.value for k in SerDesKind], default=None)
    p.add_argument("--actions", type=int, default=15)
    p.add_argument("--threshold", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=100)
    p.add_argument("--pipe-dir", default=None)
    p.add_argument("--address", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)

    p = sub.add_parser("serve", help="answer queries as the loopback peer")
    p.add_argument("--runner", choices=("pipe", "rpc"), required=True)
    p.add_argument("--serdes", choices=[k.value for k in SerDesKind], default=None)
    p.add_argument("--mode", choices=("echo", "mlp", "agent"), default="echo")
    p.add_argument("--model", default=None, help="model file for mlp/agent modes (mlp sums without one)")
    p.add_argument("--read-pipe", default=None)
    p.add_argument("--write-pipe", default=None)
    p.add_argument("--address", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--timeout-ms", type=float, default=60000.0)
    p.add_argument("--max-requests", type=int, default=None)

    p = sub.add_parser("gen-model", help="write a model file")
    p.add_argument("--input-dim", type=int, required=True)
    p.add_argument("--output-dim", type=int, default=1)
    p.add_argument("--hidden", type=int, action="append", default=[])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--activation", choices=("relu", "identity"), default="relu")
    p.add_argument("--sum", action="store_true", help="ones/zero summing layer instead of random")
    p.add_argument("--out", required=True)

    return parser


def _obs_as_f32(bundle: FeatureBundle) -> np.ndarray:
    value = bundle.get("obs")
    if value.spec.dtype is DType.STR:
        raise RunnerError("obs must be numeric")
    return np.asarray(value.data, dtype="<f4")


def _make_handler(mode: str, model_path: str | None):
    model = None
    if model_path is not None:
        with open(model_path, "rb") as fh:
            model = load_model(fh.read())

    if mode == "echo":
        return lambda bundle: bundle

    if mode == "mlp":

        def handle_mlp(bundle: FeatureBundle) -> FeatureBundle:
            x = _obs_as_f32(bundle)
            m = model if model is not None else bench_mod.sum_model(x.shape[0])
            y = mlp_forward(m, x)
            out = y[0] if y.shape[0] == 1 else y
            return FeatureBundle.of(TensorValue.of("out", DType.F32, out))

        return handle_mlp

    if model is None:
        raise RunnerError("agent mode needs --model")

    def handle_agent(bundle: FeatureBundle) -> FeatureBundle:
        action = agent_act(model, _obs_as_f32(bundle))
        return FeatureBundle.of(TensorValue.of("action", DType.I64, action))

    return handle_agent


def cmd_serve(args) -> int:
    serdes = SerDesKind.from_token(args.serdes or _serdes_default(args.runner))
    handler = _make_handler(args.mode, args.model)
    if args.runner == "pipe":
        if not args.read_pipe or not args.write_pipe:
            raise RunnerError("pipe serving needs --read-pipe and --write-pipe")
        runner = pipe_runner_open(
            PipeEndpoints(args.read_pipe, args.write_pipe), serdes, RunnerMode.TRAINING
        )
    else:
        if not args.port:
            raise RunnerError("rpc serving needs --port")
        runner = rpc_runner_open(
            RpcEndpoint(args.address, args.port), serdes, RunnerMode.TRAINING
        )
    try:
        served = serve_training(
            runner, handler, timeout_ms=args.timeout_ms, max_requests=args.max_requests
        )
    finally:
        runner.close()
    print(f"# served={served}", file=sys.stderr)
    return 0


def _bench_write(records, out_path: str, config) -> int:
    stream = sys.stdout if out_path == "-" else open(out_path, "w", encoding="utf-8")
    try:
        stream.write(bench_mod.CSV_HEADER + "\n")
        stream.flush()
        collected = []
        for record in records:
            stream.write(record.csv_row() + "\n")
            stream.flush()
            collected.append(record)
        total = bench_mod.cumulative_rtt_micros(collected)
        print(
            f"# cumulative_rtt_micros={total} runner={config.runner} serdes={config.serdes_label}",
            file=sys.stderr,
        )
        return 0
    finally:
        if stream is not sys.stdout:
            stream.close()


def cmd_bench(args) -> int:
    serdes = SerDesKind.from_token(args.serdes or _serdes_default(args.runner))
    min_len, max_len, step = args.min_len, args.max_len, args.step
    if args.full:
        min_len, max_len, step = 500, 50000, 500
    config = bench_mod.SweepConfig(
        runner=args.runner,
        serdes=serdes,
        min_len=min_len,
        max_len=max_len,
        step=step,
        repeats=args.repeats,
        seed=args.seed,
    )

    if config.runner == "inproc":
        return _bench_write(bench_mod.iter_rtt_sweep(config), args.out, config)

    if config.runner == "pipe":
        pipe_dir = args.pipe_dir or tempfile.mkdtemp(prefix="modelbridge_bench_")
        host_read = os.path.join(pipe_dir, "peer_to_host.pipe")
        host_write = os.path.join(pipe_dir, "host_to_peer.pipe")
        peer_args = [
            "--runner", "pipe",
            "--serdes", serdes.value,
            "--mode", "mlp",
            "--read-pipe", host_write,
            "--write-pipe", host_read,
        ]
        runner = pipe_runner_open(
            PipeEndpoints(host_read, host_write), serdes, RunnerMode.INFERENCE
        )
        try:
            if args.no_peer:
                return _bench_write(bench_mod.iter_rtt_sweep(config, runner), args.out, config)
            with bench_mod.spawned_peer(peer_args):
                return _bench_write(bench_mod.iter_rtt_sweep(config, runner), args.out, config)
        finally:
            runner.close()

    port = args.port or bench_mod.free_port(args.address)
    peer_args = [
        "--runner", "rpc",
        "--serdes", serdes.value,
        "--mode", "mlp",
        "--address", args.address,
        "--port", str(port),
    ]
    runner = rpc_runner_open(RpcEndpoint(args.address, port), serdes, RunnerMode.INFERENCE)
    try:
        if args.no_peer:
            return _bench_write(bench_mod.iter_rtt_sweep(config, runner), args.out, config)
        with bench_mod.spawned_peer(peer_args):
            return _bench_write(bench_mod.iter_rtt_sweep(config, runner), args.out, config)
    finally:
        runner.close()


def _print_step(index: int, label: str, obs_len: int, action: int) -> None:
    print(f"step {index}: agent={label} obs_len={obs_len} action={action}")


def cmd_demo(args) -> int:
    env = bench_mod.mock_phase_env(args.actions, args.threshold, args.seed)
    model = random_model(env.OBS_DIM, args.actions, seed=args.seed)

    if args.runner == "inproc":
        runner = inproc_runner({"policy": model}, env=env, max_steps=args.max_steps)
        runner.evaluate(FeatureBundle(), ACTION_SPECS)
        trace = runner.last_trace
        for i, step in enumerate(trace.steps):
            _print_step(i, step.agent_label, step.observation_len, step.action)
        print(f"# terminal={str(trace.terminal).lower()} steps={len(trace)}", file=sys.stderr)
        return 0

    serdes = SerDesKind.from_token(args.serdes or _serdes_default(args.runner))
    with tempfile.TemporaryDirectory(prefix="modelbridge_demo_") as tmp:
        model_path = os.path.join(tmp, "policy.model")
        with open(model_path, "wb") as fh:
            fh.write(save_model(model))
        if args.runner == "pipe":
            pipe_dir = args.pipe_dir or tmp
            host_read = os.path.join(pipe_dir, "peer_to_host.pipe")
            host_write = os.path.join(pipe_dir, "host_to_peer.pipe")
            peer_args = [
                "--runner", "pipe", "--serdes", serdes.value, "--mode", "agent",
                "--model", model_path,
                "--read-pipe", host_write, "--write-pipe", host_read,
            ]
            runner = pipe_runner_open(
                PipeEndpoints(host_read, host_write), serdes, RunnerMode.INFERENCE
            )
        else:
            port = args.port or bench_mod.free_port(args.address)
            peer_args = [
                "--runner", "rpc", "--serdes", serdes.value, "--mode", "agent",
                "--model", model_path,
                "--address", args.address, "--port", str(port),
            ]
            runner = rpc_runner_open(
                RpcEndpoint(args.address, port), serdes, RunnerMode.INFERENCE
            )
        with bench_mod.spawned_peer(peer_args):
            try:
                observation = env.reset()
                index = 0
                while not env.done and index < args.max_steps:
                    bundle = FeatureBundle.of(TensorValue.of("obs", DType.F32, observation))
                    reply = runner.evaluate(bundle, ACTION_SPECS)
                    action = int(reply.get("action", DType.I64).data[0])
                    _print_step(index, env.next_agent, len(observation), action)
                    observation = env.step(action)
                    index += 1
                print(f"# terminal={str(env.done).lower()} steps={index}", file=sys.stderr)
            finally:
                runner.close()
    return 0


def cmd_gen_model(args) -> int:
    if args.sum:
        if args.output_dim != 1 or args.hidden:
            raise RunnerError("--sum implies a single 1-row layer")
        model = bench_mod.sum_model(args.input_dim)
    else:
        activation = Activation.RELU if args.activation == "relu" else Activation.IDENTITY
        model = random_model(
            args.input_dim, args.output_dim, tuple(args.hidden), args.seed, activation
        )
    with open(args.out, "wb") as fh:
        fh.write(save_model(model))
    print(f"# wrote {args.out}", file=sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    commands = {
        "bench": cmd_bench,
        "demo": cmd_demo,
        "serve": cmd_serve,
        "gen-model": cmd_gen_model,
    }
    try:
        return commands[args.command](args)
    except RunnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        # stdout consumer hung up (bench | head); suppress the teardown noise
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 1


if __name__ == "__main__":
    sys.exit(main())
