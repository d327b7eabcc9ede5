"""Round-trip benchmarking across runners and formats.

The sweep sends seeded float32 vectors of growing length through a
runner against a one-layer L->1 summing model and records the median
round trip per length.  CSV schema, one row per length:

    vector_len,rtt_micros,runner,serdes

The loopback peers are separate processes started from this package's
own command line (`serve` subcommand), so pipe and rpc numbers include
real process-to-process hops.
"""

from __future__ import annotations

import socket
import statistics
import subprocess
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import Malformed
from .inproc import Environment, MlpLayer, MlpModel, inproc_runner
from .runner import ModelRunner
from .serdes import SerDesKind
from .tensors import DType, FeatureBundle, TensorSpec, TensorValue

__all__ = [
    "SweepConfig",
    "RttRecord",
    "CSV_HEADER",
    "sum_model",
    "input_vector",
    "iter_rtt_sweep",
    "rtt_sweep",
    "cumulative_rtt_micros",
    "MockPhaseEnv",
    "mock_phase_env",
    "free_port",
    "spawned_peer",
]

CSV_HEADER = "vector_len,rtt_micros,runner,serdes"

RUNNER_NAMES = ("inproc", "pipe", "rpc")


@dataclass(frozen=True)
class SweepConfig:
    """Lengths, repeats and labelling for one rtt sweep."""

    runner: str = "inproc"
    serdes: SerDesKind = SerDesKind.TAGGED
    min_len: int = 500
    max_len: int = 5000
    step: int = 500
    repeats: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.runner not in RUNNER_NAMES:
            raise Malformed(f"unknown runner {self.runner!r}")
        if self.min_len < 1 or self.max_len < self.min_len or self.step < 1:
            raise Malformed("lengths must satisfy 1 <= min <= max with step >= 1")
        if self.repeats < 1 or self.repeats % 2 == 0:
            raise Malformed("repeats must be odd so the median is one sample")

    def lengths(self) -> range:
        return range(self.min_len, self.max_len + 1, self.step)

    @property
    def serdes_label(self) -> str:
        return "none" if self.runner == "inproc" else self.serdes.value


@dataclass(frozen=True)
class RttRecord:
    vector_len: int
    rtt_micros: int
    runner: str
    serdes: str

    def csv_row(self) -> str:
        return f"{self.vector_len},{self.rtt_micros},{self.runner},{self.serdes}"


def sum_model(length: int) -> MlpModel:
    """One layer of ones mapping R^length to its element sum."""
    return MlpModel(length, [MlpLayer(np.ones((1, length), dtype="<f4"), np.zeros(1, dtype="<f4"))])


def input_vector(seed: int, length: int) -> np.ndarray:
    """Deterministic f32 vector in [0, 1); both ends of a pair can rebuild it."""
    return np.random.default_rng((seed, length)).random(length, dtype=np.float32)


def _time_call_micros(fn: Callable[[], object]) -> int:
    t0 = time.perf_counter_ns()
    fn()
    return max(1, (time.perf_counter_ns() - t0) // 1000)


def iter_rtt_sweep(config: SweepConfig, runner: ModelRunner | None = None) -> Iterator[RttRecord]:
    """Yield one record per length, measuring as it goes.

    For pipe and rpc sweeps pass a long-lived inference runner whose peer
    answers {"obs": f32[L]} with {"out": f32 scalar} for any L (the serve
    subcommand's mlp mode does); the runner is left open for the caller
    to close.  Without a runner the sweep is in-process against the
    summing model.  Each length gets one untimed warm-up exchange, then
    `repeats` timed ones.
    """
    if runner is None and config.runner != "inproc":
        raise Malformed(f"runner {config.runner!r} needs a live transport runner")
    out_specs = (TensorSpec("out", DType.F32, ()),)
    for length in config.lengths():
        point_runner = runner
        if point_runner is None:
            point_runner = inproc_runner({"sum": sum_model(length)}, plain_forward=True)
        try:
            bundle = FeatureBundle.of(
                TensorValue.of("obs", DType.F32, input_vector(config.seed, length))
            )
            point_runner.evaluate(bundle, out_specs)
            samples = [
                _time_call_micros(lambda: point_runner.evaluate(bundle, out_specs))
                for _ in range(config.repeats)
            ]
        finally:
            if runner is None:
                point_runner.close()
        yield RttRecord(
            vector_len=length,
            rtt_micros=int(statistics.median(samples)),
            runner=config.runner,
            serdes=config.serdes_label,
        )


def rtt_sweep(config: SweepConfig, runner: ModelRunner | None = None) -> list[RttRecord]:
    return list(iter_rtt_sweep(config, runner))


def cumulative_rtt_micros(records: Sequence[RttRecord]) -> int:
    return sum(r.rtt_micros for r in records)


class MockPhaseEnv(Environment):
    """Deterministic stand-in for a pass-ordering environment.

    Observations are seeded 300-dimensional float32 embeddings; each
    step mixes in a perturbation derived from (seed, step, action) and
    the episode ends once `threshold` actions have been applied.
    """

    OBS_DIM = 300

    def __init__(self, num_actions: int = 15, threshold: int = 5, seed: int = 0):
        super().__init__()
        if num_actions < 1:
            raise Malformed("num_actions must be >= 1")
        if threshold < 1:
            raise Malformed("threshold must be >= 1")
        self.num_actions = num_actions
        self.threshold = threshold
        self.seed = seed
        self.next_agent = "policy"
        self._count = 0
        self._obs = np.zeros(self.OBS_DIM, dtype="<f4")

    def reset(self) -> np.ndarray:
        self._done = False
        self._count = 0
        rng = np.random.default_rng((self.seed, 0))
        self._obs = rng.standard_normal(self.OBS_DIM).astype("<f4")
        return self._obs

    def step(self, action: int) -> np.ndarray:
        if not 0 <= action < self.num_actions:
            raise Malformed(f"action {action} outside 0..{self.num_actions - 1}")
        self._count += 1
        rng = np.random.default_rng((self.seed, self._count, action))
        mix = rng.standard_normal(self.OBS_DIM).astype("<f4")
        self._obs = (0.9 * self._obs + 0.1 * mix).astype("<f4")
        if self._count >= self.threshold:
            self.set_done()
        return self._obs


def mock_phase_env(num_actions: int = 15, threshold: int = 5, seed: int = 0) -> MockPhaseEnv:
    return MockPhaseEnv(num_actions, threshold, seed)


def free_port(address: str = "127.0.0.1") -> int:
    """A currently unused TCP port on the given address."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind((address, 0))
        return s.getsockname()[1]


@contextmanager
def spawned_peer(args: Sequence[str]):
    """Run `<this interpreter> -m modelbridge serve <args>` for the block."""
    proc = subprocess.Popen(
        [sys.executable, "-m", "modelbridge", "serve", *args],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        yield proc
    finally:
        if proc.poll() is None:
            proc.terminate()
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
