"""Named-pipe and socket transports plus the serving loop.

Two modes fix who asks and who answers:

Training    the host answers queries; the model side connects and asks.
            The host binds/listens (sockets) and calls serve_training().
Inference   the host asks; the model side serves.  The host connects as
            a client and calls evaluate().

Pipe transport uses a pair of named FIFOs, one per direction, created
with user-only permissions.  Socket transport (rpc) frames requests over
one TCP stream and is restricted to the TaggedBinary format; connection
attempts back off exponentially per the RetryPolicy.

OS resources are acquired lazily on first use, never in the constructor,
so opening many workers reports failures per endpoint instead of aborting
the whole group.
"""

from __future__ import annotations

import enum
import errno
import os
import select
import socket
import stat
import time
from dataclasses import dataclass
from typing import Sequence

from .errors import Malformed, PeerClosed, RetriesExhausted, RunnerError, Timeout
from .framing import MAX_FRAME_BYTES, ByteChannel, frame_read, frame_write
from .runner import Handler, ModelRunner
from .serdes import ERROR_KEY, SerDesKind, deserialize, serialize
from .tensors import DType, FeatureBundle, TensorSpec, TensorValue

__all__ = [
    "RunnerMode",
    "RetryPolicy",
    "PipeEndpoints",
    "RpcEndpoint",
    "PipeRunner",
    "RpcRunner",
    "pipe_runner_open",
    "rpc_runner_open",
    "open_multi_worker",
    "serve_training",
]


def _now_ms() -> float:
    return time.monotonic() * 1000.0


class RunnerMode(enum.Enum):
    TRAINING = "training"
    INFERENCE = "inference"


@dataclass(frozen=True)
class RetryPolicy:
    """Backoff schedule for connecting plus the per-call deadline.

    The delay before retry k (1-based) is initial_delay_ms * multiplier**(k-1);
    a total of max_retries + 1 attempts are made.
    """

    initial_delay_ms: float = 50.0
    multiplier: float = 2.0
    max_retries: int = 5
    per_call_timeout_ms: float = 5000.0

    def __post_init__(self):
        if self.initial_delay_ms < 0:
            raise Malformed("initial_delay_ms must be >= 0")
        if self.multiplier < 1.0:
            raise Malformed("multiplier must be >= 1.0")
        if self.max_retries < 0:
            raise Malformed("max_retries must be >= 0")
        if self.per_call_timeout_ms <= 0:
            raise Malformed("per_call_timeout_ms must be > 0")

    def delay_before_retry_ms(self, retry: int) -> float:
        if retry < 1:
            raise Malformed("retry index is 1-based")
        return self.initial_delay_ms * self.multiplier ** (retry - 1)


@dataclass(frozen=True)
class PipeEndpoints:
    """FIFO paths from the caller's point of view; the peer swaps them."""

    read_path: str
    write_path: str

    def __post_init__(self):
        if not self.read_path or not self.write_path:
            raise Malformed("pipe paths must be non-empty")
        if self.read_path == self.write_path:
            raise Malformed("read and write pipes must differ")

    def swapped(self) -> "PipeEndpoints":
        return PipeEndpoints(self.write_path, self.read_path)


@dataclass(frozen=True)
class RpcEndpoint:
    address: str
    port: int

    def __post_init__(self):
        if not self.address:
            raise Malformed("address must be non-empty")
        if not 1 <= self.port <= 65535:
            raise Malformed(f"port {self.port} outside 1..65535")


def _ensure_fifo(path: str) -> None:
    try:
        os.mkfifo(path, 0o600)
        os.chmod(path, 0o600)
    except FileExistsError:
        if not stat.S_ISFIFO(os.stat(path).st_mode):
            raise Malformed(f"{path} exists and is not a fifo") from None
    except OSError as exc:
        raise Malformed(f"cannot create fifo {path}: {exc}") from None


class PipeRunner(ModelRunner):
    """Runner over a pair of named FIFOs; supports all three formats."""

    def __init__(
        self,
        endpoints: PipeEndpoints,
        serdes_kind: SerDesKind,
        mode: RunnerMode,
        policy: RetryPolicy | None = None,
        max_frame_bytes: int = MAX_FRAME_BYTES,
    ):
        super().__init__(serdes_kind)
        self.endpoints = endpoints
        self.mode = mode
        self.policy = policy or RetryPolicy()
        self.max_frame_bytes = max_frame_bytes
        self._read_ch: ByteChannel | None = None
        self._write_ch: ByteChannel | None = None
        self._closed = False

    def _ensure_channels(self, deadline: float | None) -> None:
        if self._read_ch is not None:
            return
        if self._closed:
            raise Malformed("runner is closed")
        started = _now_ms()
        _ensure_fifo(self.endpoints.read_path)
        _ensure_fifo(self.endpoints.write_path)
        # Read end first: opening it non-blocking always succeeds, which
        # unblocks the peer's symmetric attempt to open its write end.
        try:
            rfd = os.open(self.endpoints.read_path, os.O_RDONLY | os.O_NONBLOCK)
        except OSError as exc:
            raise Malformed(f"cannot open {self.endpoints.read_path}: {exc}") from None
        wfd = None
        while wfd is None:
            try:
                wfd = os.open(self.endpoints.write_path, os.O_WRONLY | os.O_NONBLOCK)
            except OSError as exc:
                if exc.errno != errno.ENXIO:  # no reader on the far end yet
                    os.close(rfd)
                    raise Malformed(f"cannot open {self.endpoints.write_path}: {exc}") from None
                if deadline is not None and _now_ms() >= deadline:
                    os.close(rfd)
                    raise Timeout(_now_ms() - started, "waiting for pipe peer")
                time.sleep(0.002)
        self._read_ch = ByteChannel(rfd, fifo_handshake=True)
        self._write_ch = ByteChannel(wfd)

    def _evaluate_raw(self, src: FeatureBundle, output_specs) -> FeatureBundle:
        if self.mode is not RunnerMode.INFERENCE:
            raise Malformed("evaluate() requires an inference-mode runner")
        payload = serialize(self.serdes_kind, src)
        if len(payload) > self.max_frame_bytes:
            raise Malformed(f"frame of {len(payload)} bytes exceeds limit {self.max_frame_bytes}")
        deadline = _now_ms() + self.policy.per_call_timeout_ms
        self._ensure_channels(deadline)
        frame_write(self._write_ch, payload, deadline, self.max_frame_bytes)
        reply = frame_read(self._read_ch, self.policy.per_call_timeout_ms, self.max_frame_bytes)
        if reply == b"":
            raise PeerClosed("peer said goodbye mid-session")
        return deserialize(self.serdes_kind, reply, output_specs)

    def _close_channels(self) -> None:
        for ch in (self._read_ch, self._write_ch):
            if ch is not None:
                ch.close()
        self._read_ch = None
        self._write_ch = None

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self._write_ch is not None:
            try:
                frame_write(self._write_ch, b"", _now_ms() + 100.0)
            except RunnerError:
                pass
        self._close_channels()
        for path in (self.endpoints.read_path, self.endpoints.write_path):
            try:
                os.unlink(path)
            except OSError:
                pass


class RpcRunner(ModelRunner):
    """Runner over one framed TCP stream; TaggedBinary only."""

    def __init__(
        self,
        endpoint: RpcEndpoint,
        serdes_kind: SerDesKind,
        mode: RunnerMode,
        policy: RetryPolicy | None = None,
        max_frame_bytes: int = MAX_FRAME_BYTES,
    ):
        if serdes_kind is not SerDesKind.TAGGED:
            raise Malformed(f"unsupported serdes {serdes_kind.value!r}: rpc requires tagged")
        super().__init__(serdes_kind)
        self.endpoint = endpoint
        self.mode = mode
        self.policy = policy or RetryPolicy()
        self.max_frame_bytes = max_frame_bytes
        self._listener: socket.socket | None = None
        self._channel: ByteChannel | None = None
        self._closed = False

    def _connect(self) -> None:
        """Dial the peer, backing off per the policy between attempts."""
        attempts = self.policy.max_retries + 1
        offsets: list[float] = []
        t0 = _now_ms()
        last = "unknown"
        for attempt in range(attempts):
            offsets.append(_now_ms() - t0)
            try:
                sock = socket.create_connection(
                    (self.endpoint.address, self.endpoint.port),
                    timeout=self.policy.per_call_timeout_ms / 1000.0,
                )
            except OSError as exc:
                last = str(exc)
            else:
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._channel = ByteChannel(sock.fileno(), keep_alive=sock)
                return
            if attempt < attempts - 1:
                time.sleep(self.policy.delay_before_retry_ms(attempt + 1) / 1000.0)
        raise RetriesExhausted(attempts, offsets, cause=last)

    def _ensure_listener(self) -> None:
        if self._listener is not None:
            return
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            listener.bind((self.endpoint.address, self.endpoint.port))
        except OSError as exc:
            listener.close()
            raise Malformed(f"cannot bind {self.endpoint.address}:{self.endpoint.port}: {exc}") from None
        listener.listen(1)
        listener.setblocking(False)
        self._listener = listener

    def _accept(self, deadline: float | None) -> None:
        self._ensure_listener()
        started = _now_ms()
        while True:
            rem = None
            if deadline is not None:
                rem = (deadline - _now_ms()) / 1000.0
                if rem <= 0:
                    raise Timeout(_now_ms() - started, "waiting for rpc peer")
            ready, _, _ = select.select([self._listener], [], [], rem)
            if ready:
                conn, _ = self._listener.accept()
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._channel = ByteChannel(conn.fileno(), keep_alive=conn)
                return

    def _ensure_channels(self, deadline: float | None) -> None:
        if self._channel is not None:
            return
        if self._closed:
            raise Malformed("runner is closed")
        if self.mode is RunnerMode.INFERENCE:
            self._connect()
        else:
            self._accept(deadline)

    def _evaluate_raw(self, src: FeatureBundle, output_specs) -> FeatureBundle:
        if self.mode is not RunnerMode.INFERENCE:
            raise Malformed("evaluate() requires an inference-mode runner")
        payload = serialize(self.serdes_kind, src)
        if len(payload) > self.max_frame_bytes:
            raise Malformed(f"frame of {len(payload)} bytes exceeds limit {self.max_frame_bytes}")
        self._ensure_channels(None)
        deadline = _now_ms() + self.policy.per_call_timeout_ms
        frame_write(self._channel, payload, deadline, self.max_frame_bytes)
        reply = frame_read(self._channel, self.policy.per_call_timeout_ms, self.max_frame_bytes)
        if reply == b"":
            raise PeerClosed("peer said goodbye mid-session")
        return deserialize(self.serdes_kind, reply, output_specs)

    def _close_channels(self) -> None:
        if self._channel is not None:
            self._channel.close()
            self._channel = None

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self._channel is not None:
            try:
                frame_write(self._channel, b"", _now_ms() + 100.0)
            except RunnerError:
                pass
        self._close_channels()
        if self._listener is not None:
            self._listener.close()
            self._listener = None


def pipe_runner_open(
    endpoints: PipeEndpoints,
    serdes_kind: SerDesKind,
    mode: RunnerMode,
    policy: RetryPolicy | None = None,
) -> PipeRunner:
    return PipeRunner(endpoints, serdes_kind, mode, policy)


def rpc_runner_open(
    endpoint: RpcEndpoint,
    serdes_kind: SerDesKind,
    mode: RunnerMode,
    policy: RetryPolicy | None = None,
) -> RpcRunner:
    return RpcRunner(endpoint, serdes_kind, mode, policy)


def open_multi_worker(
    endpoints: Sequence[PipeEndpoints | RpcEndpoint],
    serdes_kind: SerDesKind,
    mode: RunnerMode,
    policy: RetryPolicy | None = None,
) -> list[ModelRunner]:
    """One independent runner per endpoint; endpoints must not collide.

    Runners touch the OS lazily, so a bad endpoint surfaces when that
    worker is first used and never takes its siblings down.
    """
    if not endpoints:
        raise Malformed("endpoints must be non-empty")
    paths: set[str] = set()
    addrs: set[tuple[str, int]] = set()
    for ep in endpoints:
        if isinstance(ep, PipeEndpoints):
            for path in (ep.read_path, ep.write_path):
                if path in paths:
                    raise Malformed(f"pipe path {path!r} used by more than one worker")
                paths.add(path)
        elif isinstance(ep, RpcEndpoint):
            pair = (ep.address, ep.port)
            if pair in addrs:
                raise Malformed(f"endpoint {ep.address}:{ep.port} used by more than one worker")
            addrs.add(pair)
        else:
            raise Malformed(f"unsupported endpoint type {type(ep).__name__}")
    out: list[ModelRunner] = []
    for ep in endpoints:
        if isinstance(ep, PipeEndpoints):
            out.append(PipeRunner(ep, serdes_kind, mode, policy))
        else:
            out.append(RpcRunner(ep, serdes_kind, mode, policy))
    return out


def _error_reply(kind: SerDesKind, message: str) -> bytes:
    bundle = FeatureBundle.of(TensorValue.of(ERROR_KEY, DType.STR, message))
    return serialize(kind, bundle)


def _serve_frames(
    read_ch: ByteChannel,
    write_ch: ByteChannel,
    kind: SerDesKind,
    handler: Handler,
    input_specs: Sequence[TensorSpec] | None,
    max_requests: int | None,
    idle_timeout_ms: float | None,
    max_frame_bytes: int,
) -> int:
    """Answer frames until goodbye, EOF or max_requests; returns count served.

    A request that fails to decode or a handler that raises gets an
    "__error" reply and the loop continues; only channel-level trouble
    (EOF, idle timeout) ends the session.
    """
    served = 0
    while max_requests is None or served < max_requests:
        try:
            request = frame_read(read_ch, idle_timeout_ms, max_frame_bytes)
        except PeerClosed:
            break
        if request == b"":
            break
        try:
            bundle = deserialize(kind, request, input_specs)
            reply_bundle = handler(bundle)
            reply = serialize(kind, reply_bundle)
            if not reply:
                # an empty payload would collide with the goodbye sentinel
                raise Malformed("handler returned an empty bundle")
        except Exception as exc:  # noqa: BLE001 - handler bugs become __error replies
            reply = _error_reply(kind, f"{type(exc).__name__}: {exc}")
        frame_write(write_ch, reply, None, max_frame_bytes)
        served += 1
    return served


def serve_training(
    runner: ModelRunner,
    handler: Handler,
    *,
    input_specs: Sequence[TensorSpec] | None = None,
    timeout_ms: float | None = None,
    max_requests: int | None = None,
) -> int:
    """Serve queries on a training-mode transport runner until goodbye.

    The handler maps a request bundle to a reply bundle.  input_specs,
    when given, validates and types each request before the handler runs
    (required to fix numeric dtypes with the Json format).  timeout_ms
    bounds the wait for the peer to appear and each idle gap; None waits
    forever.  Returns the number of requests answered.
    """
    if not isinstance(runner, (PipeRunner, RpcRunner)):
        raise Malformed("serve_training() requires a pipe or rpc runner")
    if runner.mode is not RunnerMode.TRAINING:
        raise Malformed("serve_training() requires a training-mode runner")
    deadline = None if timeout_ms is None else _now_ms() + timeout_ms
    runner._ensure_channels(deadline)
    if isinstance(runner, PipeRunner):
        read_ch, write_ch = runner._read_ch, runner._write_ch
    else:
        read_ch = write_ch = runner._channel
    try:
        return _serve_frames(
            read_ch,
            write_ch,
            runner.serdes_kind,
            handler,
            input_specs,
            max_requests,
            timeout_ms,
            runner.max_frame_bytes,
        )
    finally:
        runner._close_channels()
