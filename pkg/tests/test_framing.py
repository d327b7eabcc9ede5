from __future__ import annotations

import os
import struct
import time

import numpy as np
import pytest

from modelbridge import (
    MAX_FRAME_BYTES,
    ByteChannel,
    Malformed,
    PeerClosed,
    Timeout,
    frame_read,
    frame_write,
)


@pytest.fixture
def pipe_pair():
    rfd, wfd = os.pipe()
    read_ch = ByteChannel(rfd)
    write_ch = ByteChannel(wfd)
    yield read_ch, write_ch
    read_ch.close()
    write_ch.close()


def test_single_frame_round_trip(pipe_pair):
    read_ch, write_ch = pipe_pair
    frame_write(write_ch, b"hello frame")
    assert frame_read(read_ch, 1000) == b"hello frame"


def test_frame_layout_is_le_length_prefix(pipe_pair):
    read_ch, write_ch = pipe_pair
    frame_write(write_ch, b"abc")
    raw = os.read(read_ch.fd, 100)
    assert raw == struct.pack("<I", 3) + b"abc"


def test_empty_frame_is_sentinel(pipe_pair):
    read_ch, write_ch = pipe_pair
    frame_write(write_ch, b"")
    assert frame_read(read_ch, 1000) == b""


def test_many_frames_concatenated_losslessly(pipe_pair):
    read_ch, write_ch = pipe_pair
    rng = np.random.default_rng(42)
    payloads = [rng.bytes(int(rng.integers(0, 400)) + 1) for _ in range(100)]
    for p in payloads:
        frame_write(write_ch, p)
    for p in payloads:
        assert frame_read(read_ch, 1000) == p


def test_truncated_final_frame_raises_peer_closed(pipe_pair):
    read_ch, write_ch = pipe_pair
    frame_write(write_ch, b"complete")
    # A header announcing 100 bytes with only 10 present, then EOF.
    write_ch.write_all(struct.pack("<I", 100) + b"0123456789", None)
    write_ch.close()
    assert frame_read(read_ch, 1000) == b"complete"
    with pytest.raises(PeerClosed):
        frame_read(read_ch, 1000)


def test_eof_at_frame_boundary_raises_peer_closed(pipe_pair):
    read_ch, write_ch = pipe_pair
    frame_write(write_ch, b"only")
    write_ch.close()
    assert frame_read(read_ch, 1000) == b"only"
    with pytest.raises(PeerClosed):
        frame_read(read_ch, 1000)


def test_oversized_writes_and_reads_rejected(pipe_pair):
    read_ch, write_ch = pipe_pair
    with pytest.raises(Malformed):
        frame_write(write_ch, b"x" * 64, max_frame_bytes=63)
    # A header that announces more than the limit is refused before reading it.
    write_ch.write_all(struct.pack("<I", MAX_FRAME_BYTES + 1), None)
    with pytest.raises(Malformed):
        frame_read(read_ch, 1000)


def test_read_timeout_measures_elapsed(pipe_pair):
    read_ch, _ = pipe_pair
    t0 = time.monotonic()
    with pytest.raises(Timeout) as err:
        frame_read(read_ch, 120)
    elapsed = (time.monotonic() - t0) * 1000
    assert 100 <= elapsed <= 1000
    assert err.value.elapsed_ms >= 100


def test_large_frame_round_trip():
    # Bigger than the 64 KiB pipe buffer, so writer and reader must overlap.
    import threading

    rfd, wfd = os.pipe()
    read_ch, write_ch = ByteChannel(rfd), ByteChannel(wfd)
    payload = np.random.default_rng(0).bytes(1_000_000)
    writer = threading.Thread(target=frame_write, args=(write_ch, payload))
    writer.start()
    got = frame_read(read_ch, 10_000)
    writer.join()
    assert got == payload
    read_ch.close()
    write_ch.close()


def test_fifo_handshake_retries_instead_of_eof(tmp_path):
    path = str(tmp_path / "lonely.fifo")
    os.mkfifo(path)
    fd = os.open(path, os.O_RDONLY | os.O_NONBLOCK)
    ch = ByteChannel(fd, fifo_handshake=True)
    # No writer ever appears: the spurious EOF must surface as Timeout,
    # not PeerClosed.
    with pytest.raises(Timeout):
        frame_read(ch, 100)
    ch.close()


def test_fifo_handshake_sees_late_writer(tmp_path):
    import threading

    path = str(tmp_path / "late.fifo")
    os.mkfifo(path)
    fd = os.open(path, os.O_RDONLY | os.O_NONBLOCK)
    ch = ByteChannel(fd, fifo_handshake=True)

    def write_later():
        time.sleep(0.05)
        wfd = os.open(path, os.O_WRONLY)
        wch = ByteChannel(wfd)
        frame_write(wch, b"took a while")
        wch.close()

    t = threading.Thread(target=write_later)
    t.start()
    assert frame_read(ch, 2000) == b"took a while"
    t.join()
    ch.close()
