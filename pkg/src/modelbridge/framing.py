"""Length-prefixed frames over byte-stream file descriptors.

A frame is a 4-byte little-endian unsigned payload length followed by the
payload.  A zero-length frame is the orderly-shutdown sentinel: frame_read
returns it as an empty payload and serving loops treat it as goodbye.

ByteChannel wraps a non-blocking fd (pipe or socket) and implements
deadline-based reads and writes with select().  On a freshly opened named
pipe a read can hit end-of-file before the peer has opened the write end;
channels created with fifo_handshake=True treat EOF before the first
received byte as "peer not there yet" and keep polling until the deadline.
"""

from __future__ import annotations

import os
import select
import struct
import time

from .errors import Malformed, PeerClosed, Timeout

__all__ = ["MAX_FRAME_BYTES", "ByteChannel", "frame_read", "frame_write"]

MAX_FRAME_BYTES = 64 * 1024 * 1024

_POLL_S = 0.002


def _now_ms() -> float:
    return time.monotonic() * 1000.0


class ByteChannel:
    """Owns one read or read/write fd and moves raw bytes with deadlines.

    deadline arguments are absolute time.monotonic()*1000 values; None
    blocks indefinitely.  Not safe for concurrent use.
    """

    def __init__(self, fd: int, *, keep_alive=None, fifo_handshake: bool = False):
        self.fd = fd
        self._keep_alive = keep_alive  # e.g. the socket object owning the fd
        self._fifo_handshake = fifo_handshake
        self._got_bytes = False
        self._closed = False
        os.set_blocking(fd, False)

    def _remaining_s(self, deadline: float | None, started: float) -> float | None:
        if deadline is None:
            return None
        rem = (deadline - _now_ms()) / 1000.0
        if rem <= 0:
            raise Timeout(_now_ms() - started)
        return rem

    def read_exact(self, n: int, deadline: float | None) -> bytes:
        started = _now_ms()
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = os.read(self.fd, n - got)
            except BlockingIOError:
                rem = self._remaining_s(deadline, started)
                ready, _, _ = select.select([self.fd], [], [], rem)
                if not ready and rem is not None:
                    raise Timeout(_now_ms() - started)
                continue
            except OSError as exc:
                raise PeerClosed(f"read failed: {exc}") from None
            if chunk:
                self._got_bytes = True
                chunks.append(chunk)
                got += len(chunk)
                continue
            # EOF before any byte on a named pipe usually means the writer
            # has not opened its end yet; give it time up to the deadline.
            if self._fifo_handshake and not self._got_bytes:
                self._remaining_s(deadline, started)
                time.sleep(_POLL_S)
                continue
            raise PeerClosed()
        return b"".join(chunks)

    def read_available(self, deadline: float | None) -> bytes:
        """One nonempty chunk, or b"" on orderly EOF (for peek-style use)."""
        started = _now_ms()
        while True:
            try:
                chunk = os.read(self.fd, 65536)
            except BlockingIOError:
                rem = self._remaining_s(deadline, started)
                ready, _, _ = select.select([self.fd], [], [], rem)
                if not ready and rem is not None:
                    raise Timeout(_now_ms() - started)
                continue
            except OSError as exc:
                raise PeerClosed(f"read failed: {exc}") from None
            if chunk:
                self._got_bytes = True
            return chunk

    def write_all(self, data: bytes, deadline: float | None) -> None:
        started = _now_ms()
        view = memoryview(data)
        while view:
            try:
                sent = os.write(self.fd, view)
            except BlockingIOError:
                rem = self._remaining_s(deadline, started)
                _, ready, _ = select.select([], [self.fd], [], rem)
                if not ready and rem is not None:
                    raise Timeout(_now_ms() - started)
                continue
            except (BrokenPipeError, ConnectionResetError):
                raise PeerClosed("peer closed while writing") from None
            except OSError as exc:
                raise PeerClosed(f"write failed: {exc}") from None
            view = view[sent:]

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self._keep_alive is not None and hasattr(self._keep_alive, "close"):
            self._keep_alive.close()
        else:
            try:
                os.close(self.fd)
            except OSError:
                pass


def frame_write(
    channel: ByteChannel,
    payload: bytes,
    deadline: float | None = None,
    max_frame_bytes: int = MAX_FRAME_BYTES,
) -> None:
    """Write one frame.  Header and payload go out in a single write call."""
    if len(payload) > max_frame_bytes:
        raise Malformed(f"frame of {len(payload)} bytes exceeds limit {max_frame_bytes}")
    channel.write_all(struct.pack("<I", len(payload)) + payload, deadline)


def frame_read(
    channel: ByteChannel,
    timeout_ms: float | None = None,
    max_frame_bytes: int = MAX_FRAME_BYTES,
) -> bytes:
    """Read one frame; empty result is the shutdown sentinel.

    Raises Timeout when the frame does not complete within timeout_ms,
    PeerClosed on EOF (including EOF in the middle of a frame) and
    Malformed when the announced length exceeds max_frame_bytes.
    """
    deadline = None if timeout_ms is None else _now_ms() + timeout_ms
    header = channel.read_exact(4, deadline)
    (length,) = struct.unpack("<I", header)
    if length > max_frame_bytes:
        raise Malformed(f"frame of {length} bytes exceeds limit {max_frame_bytes}")
    if length == 0:
        return b""
    return channel.read_exact(length, deadline)
