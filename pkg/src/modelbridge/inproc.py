"""In-process model evaluation: MLP forward passes and episode loops.

Weights are stored as float32; the forward pass accumulates in float64
and rounds back to float32 at the end, which keeps results independent
of blocking or summation order at float32 resolution.

The model file is a single-line JSON manifest
    {"input_dim": N, "layers": [{"rows": R, "cols": C, "activation": A}, ...]}
terminated by LF, followed by each layer's float32 little-endian bytes:
weights row-major, then bias.  Byte counts are exact; a short or long
payload is Malformed.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import Malformed, ModelError
from .runner import ModelRunner
from .serdes import SerDesKind
from .tensors import DType, FeatureBundle, TensorValue

__all__ = [
    "Activation",
    "MlpLayer",
    "MlpModel",
    "save_model",
    "load_model",
    "mlp_forward",
    "agent_act",
    "random_model",
    "Environment",
    "EpisodeStep",
    "EpisodeTrace",
    "run_episode",
    "InprocRunner",
    "inproc_runner",
]


class Activation(enum.Enum):
    IDENTITY = "identity"
    RELU = "relu"

    @classmethod
    def from_token(cls, token: str) -> "Activation":
        for member in cls:
            if member.value == token:
                return member
        raise Malformed(f"unknown activation {token!r}")


@dataclass(frozen=True)
class MlpLayer:
    """One dense layer: y = act(W @ x + b), W is rows x cols float32."""

    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        w = np.asarray(self.weights, dtype="<f4")
        b = np.asarray(self.bias, dtype="<f4")
        if w.ndim != 2:
            raise Malformed(f"weights must be rank 2, got rank {w.ndim}")
        if b.shape != (w.shape[0],):
            raise Malformed(f"bias shape {b.shape} does not match {w.shape[0]} rows")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]


class MlpModel:
    """A chain of dense layers with a fixed input dimension."""

    def __init__(self, input_dim: int, layers: list[MlpLayer]):
        if input_dim < 1:
            raise Malformed("input_dim must be >= 1")
        if not layers:
            raise Malformed("model needs at least one layer")
        expect = input_dim
        for i, layer in enumerate(layers):
            if layer.cols != expect:
                raise Malformed(
                    f"layer {i} expects {layer.cols} inputs but receives {expect}"
                )
            expect = layer.rows
        for i, layer in enumerate(layers):
            if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.bias))):
                raise ModelError(f"layer {i} holds non-finite parameters")
        self.input_dim = input_dim
        self.layers = list(layers)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].rows


def save_model(model: MlpModel) -> bytes:
    manifest = {
        "input_dim": model.input_dim,
        "layers": [
            {"rows": l.rows, "cols": l.cols, "activation": l.activation.value}
            for l in model.layers
        ],
    }
    head = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
    body = b"".join(l.weights.tobytes() + l.bias.tobytes() for l in model.layers)
    return head + b"\n" + body


def load_model(data: bytes) -> MlpModel:
    nl = data.find(b"\n")
    if nl < 0:
        raise Malformed("model manifest is not terminated")
    try:
        manifest = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise Malformed(f"invalid model manifest: {exc}") from None
    if not isinstance(manifest, dict) or set(manifest) != {"input_dim", "layers"}:
        raise Malformed("model manifest must hold input_dim and layers")
    input_dim = manifest["input_dim"]
    entries = manifest["layers"]
    if isinstance(input_dim, bool) or not isinstance(input_dim, int):
        raise Malformed("input_dim must be an integer")
    if not isinstance(entries, list) or not entries:
        raise Malformed("layers must be a non-empty list")

    offset = nl + 1
    layers = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or set(entry) != {"rows", "cols", "activation"}:
            raise Malformed(f"layer {i} entry must hold rows, cols and activation")
        rows, cols = entry["rows"], entry["cols"]
        for name, dim in (("rows", rows), ("cols", cols)):
            if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
                raise Malformed(f"layer {i}: {name} must be a positive integer")
        activation = Activation.from_token(entry["activation"])
        wn, bn = rows * cols * 4, rows * 4
        if offset + wn + bn > len(data):
            raise Malformed(f"layer {i}: truncated parameter bytes")
        weights = np.frombuffer(data[offset : offset + wn], dtype="<f4").reshape(rows, cols)
        offset += wn
        bias = np.frombuffer(data[offset : offset + bn], dtype="<f4")
        offset += bn
        layers.append(MlpLayer(weights.copy(), bias.copy(), activation))
    if offset != len(data):
        raise Malformed(f"{len(data) - offset} trailing bytes after last layer")
    return MlpModel(input_dim, layers)


def mlp_forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Forward pass of one float32 vector; float64 accumulation inside."""
    v = np.asarray(x, dtype="<f4")
    if v.ndim != 1 or v.shape[0] != model.input_dim:
        raise Malformed(f"input of shape {v.shape} does not match input_dim {model.input_dim}")
    y = v.astype("<f8")
    for layer in model.layers:
        y = layer.weights.astype("<f8") @ y + layer.bias.astype("<f8")
        if layer.activation is Activation.RELU:
            y = np.maximum(y, 0.0)
    return y.astype("<f4")


def agent_act(model: MlpModel, observation: np.ndarray) -> int:
    """Index of the strongest output; ties go to the lowest index."""
    return int(np.argmax(mlp_forward(model, observation)))


def random_model(
    input_dim: int,
    output_dim: int,
    hidden: tuple[int, ...] = (),
    seed: int = 0,
    activation: Activation = Activation.RELU,
) -> MlpModel:
    """Gaussian-initialized MLP, scaled by 1/sqrt(fan_in) per layer."""
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, output_dim]
    layers = []
    for i in range(len(dims) - 1):
        cols, rows = dims[i], dims[i + 1]
        w = (rng.standard_normal((rows, cols)) / np.sqrt(cols)).astype("<f4")
        b = (rng.standard_normal(rows) * 0.01).astype("<f4")
        act = activation if i < len(dims) - 2 else Activation.IDENTITY
        layers.append(MlpLayer(w, b, act))
    return MlpModel(input_dim, layers)


class Environment:
    """Episode state machine; subclasses override reset() and step().

    reset() returns the first observation and must clear the done flag
    (call super().reset() or set_done-free state); step(action) returns
    the next observation and may call set_done().  next_agent names which
    agent acts on the current observation and may change per step.
    """

    def __init__(self):
        self._done = False
        self.next_agent = "agent"

    @property
    def done(self) -> bool:
        return self._done

    def set_done(self) -> None:
        self._done = True

    def reset(self) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class EpisodeStep:
    agent_label: str
    observation_len: int
    action: int


@dataclass(frozen=True)
class EpisodeTrace:
    steps: tuple[EpisodeStep, ...]
    terminal: bool

    def __len__(self) -> int:
        return len(self.steps)


def run_episode(
    env: Environment,
    agents: Mapping[str, MlpModel],
    max_steps: int = 1000,
) -> EpisodeTrace:
    """Drive one episode: observe, pick the labelled agent, act, repeat.

    Ends when the environment flags done (terminal=True) or after
    max_steps (terminal=False).  An env that is done straight after
    reset() yields an empty terminal trace.
    """
    if not agents:
        raise Malformed("agents must be non-empty")
    if max_steps < 1:
        raise Malformed("max_steps must be >= 1")
    observation = env.reset()
    steps: list[EpisodeStep] = []
    while not env.done:
        if len(steps) >= max_steps:
            return EpisodeTrace(tuple(steps), terminal=False)
        label = env.next_agent
        if label not in agents:
            raise Malformed(f"environment asked for unknown agent {label!r}")
        obs = np.asarray(observation, dtype="<f4")
        action = agent_act(agents[label], obs)
        steps.append(EpisodeStep(label, int(obs.shape[0]), action))
        observation = env.step(action)
    return EpisodeTrace(tuple(steps), terminal=True)


class InprocRunner(ModelRunner):
    """Runner that evaluates models in the calling process.

    Without an environment it is single-shot: the input bundle carries
    "obs" (f32 vector) and the reply carries "action" (i64 scalar) from
    the sole agent, or "out" (f32) when built with plain_forward=True.
    With an environment each evaluate() drives a whole episode and the
    reply carries the final action; the full trace is kept on last_trace.
    """

    def __init__(
        self,
        agents: Mapping[str, MlpModel],
        env: Environment | None = None,
        max_steps: int = 1000,
        plain_forward: bool = False,
    ):
        super().__init__(SerDesKind.TAGGED)  # nominal; nothing is encoded
        if not agents:
            raise Malformed("agents must be non-empty")
        self.agents = dict(agents)
        self.env = env
        self.max_steps = max_steps
        self.plain_forward = plain_forward
        self.last_trace: EpisodeTrace | None = None

    def _sole_agent(self) -> MlpModel:
        if len(self.agents) != 1:
            raise Malformed("single-shot evaluation requires exactly one agent")
        return next(iter(self.agents.values()))

    def _evaluate_raw(self, src: FeatureBundle, output_specs) -> FeatureBundle:
        if self.env is not None:
            trace = run_episode(self.env, self.agents, self.max_steps)
            self.last_trace = trace
            if not trace.steps:
                raise ModelError("episode ended before any action")
            return FeatureBundle.of(
                TensorValue.of("action", DType.I64, trace.steps[-1].action)
            )
        model = self._sole_agent()
        obs = src.get("obs", DType.F32)
        if self.plain_forward:
            y = mlp_forward(model, obs.data)
            if y.shape[0] == 1:
                return FeatureBundle.of(TensorValue.of("out", DType.F32, y[0]))
            return FeatureBundle.of(TensorValue.of("out", DType.F32, y))
        action = agent_act(model, obs.data)
        return FeatureBundle.of(TensorValue.of("action", DType.I64, action))


def inproc_runner(
    agents: Mapping[str, MlpModel],
    env: Environment | None = None,
    max_steps: int = 1000,
    plain_forward: bool = False,
) -> InprocRunner:
    return InprocRunner(agents, env, max_steps, plain_forward)
