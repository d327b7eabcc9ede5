import * as fs from "node:fs";
import * as net from "node:net";
import { setTimeout as sleep } from "node:timers/promises";
import { Malformed, PeerClosed, Timeout } from "./errors.js";

export const MAX_FRAME_BYTES = 64 * 1024 * 1024;

const POLL_MS = 2;

export interface Conn {
  read(n: number, deadline: number | null): Promise<Uint8Array>;
  write(data: Uint8Array): Promise<void>;
  close(): Promise<void>;
}

function checkDeadline(deadline: number | null, context: string): void {
  if (deadline !== null && Date.now() > deadline) {
    throw new Timeout(Date.now() - deadline, context);
  }
}

/* Named pipe endpoint. Both ends are opened read-write so the open never
   blocks and an empty pipe reads as EAGAIN instead of EOF; session end is
   signalled by the zero-length sentinel frame, not by hangup. */
export class FifoConn implements Conn {
  private constructor(private readonly fd: number) {}

  static async open(path: string, waitMs: number): Promise<FifoConn> {
    const deadline = Date.now() + waitMs;
    while (!fs.existsSync(path)) {
      if (Date.now() > deadline) {
        throw new Timeout(waitMs, `waiting for pipe ${path}`);
      }
      await sleep(POLL_MS);
    }
    const fd = fs.openSync(path, fs.constants.O_RDWR | fs.constants.O_NONBLOCK);
    const st = fs.fstatSync(fd);
    if (!st.isFIFO()) {
      fs.closeSync(fd);
      throw new Malformed(`${path} exists but is not a pipe`);
    }
    return new FifoConn(fd);
  }

  private readOnce(buf: Buffer, off: number, len: number): Promise<number> {
    return new Promise((resolve, reject) => {
      fs.read(this.fd, buf, off, len, null, (err, bytesRead) => {
        if (err) {
          if ((err as NodeJS.ErrnoException).code === "EAGAIN") resolve(0);
          else reject(err);
        } else resolve(bytesRead);
      });
    });
  }

  async read(n: number, deadline: number | null): Promise<Uint8Array> {
    const buf = Buffer.alloc(n);
    let got = 0;
    while (got < n) {
      const r = await this.readOnce(buf, got, n - got);
      if (r === 0) {
        checkDeadline(deadline, "waiting for pipe data");
        await sleep(POLL_MS);
        continue;
      }
      got += r;
    }
    return new Uint8Array(buf);
  }

  private writeOnce(buf: Buffer, off: number): Promise<number> {
    return new Promise((resolve, reject) => {
      fs.write(this.fd, buf, off, buf.length - off, null, (err, written) => {
        if (err) {
          const code = (err as NodeJS.ErrnoException).code;
          if (code === "EAGAIN") resolve(0);
          else if (code === "EPIPE") reject(new PeerClosed("pipe reader went away"));
          else reject(err);
        } else resolve(written);
      });
    });
  }

  async write(data: Uint8Array): Promise<void> {
    const buf = Buffer.from(data.buffer, data.byteOffset, data.length);
    let at = 0;
    while (at < buf.length) {
      const w = await this.writeOnce(buf, at);
      if (w === 0) {
        await sleep(POLL_MS);
        continue;
      }
      at += w;
    }
  }

  async close(): Promise<void> {
    fs.closeSync(this.fd);
  }
}

/* Stream socket endpoint with an inbox of received chunks. */
export class SocketConn implements Conn {
  private chunks: Buffer[] = [];
  private buffered = 0;
  private eof = false;
  private wake: (() => void) | null = null;

  constructor(private readonly socket: net.Socket) {
    socket.setNoDelay(true);
    socket.on("data", (chunk: Buffer) => {
      this.chunks.push(chunk);
      this.buffered += chunk.length;
      this.wake?.();
    });
    const markEof = () => {
      this.eof = true;
      this.wake?.();
    };
    socket.on("end", markEof);
    socket.on("close", markEof);
    socket.on("error", markEof);
  }

  async read(n: number, deadline: number | null): Promise<Uint8Array> {
    while (this.buffered < n) {
      if (this.eof) throw new PeerClosed("socket closed mid-message");
      checkDeadline(deadline, "waiting for socket data");
      await new Promise<void>((resolve) => {
        this.wake = resolve;
        setTimeout(resolve, POLL_MS * 5);
      });
      this.wake = null;
    }
    const out = Buffer.alloc(n);
    let at = 0;
    while (at < n) {
      const head = this.chunks[0]!;
      const take = Math.min(head.length, n - at);
      head.copy(out, at, 0, take);
      at += take;
      this.buffered -= take;
      if (take === head.length) this.chunks.shift();
      else this.chunks[0] = head.subarray(take);
    }
    return new Uint8Array(out);
  }

  write(data: Uint8Array): Promise<void> {
    return new Promise((resolve, reject) => {
      if (this.socket.destroyed) {
        reject(new PeerClosed("socket already closed"));
        return;
      }
      this.socket.write(Buffer.from(data.buffer, data.byteOffset, data.length), (err) =>
        err ? reject(new PeerClosed(`socket write failed: ${err.message}`)) : resolve(),
      );
    });
  }

  async close(): Promise<void> {
    await new Promise<void>((resolve) => this.socket.end(resolve));
    this.socket.destroy();
  }
}

/* One frame: 4-byte little-endian length, then the payload, written in a
   single call. A zero length is the goodbye sentinel. */
export async function frameWrite(
  conn: Conn,
  payload: Uint8Array,
  maxFrameBytes: number = MAX_FRAME_BYTES,
): Promise<void> {
  if (payload.length > maxFrameBytes) {
    throw new Malformed(`frame of ${payload.length} bytes exceeds limit ${maxFrameBytes}`);
  }
  const out = new Uint8Array(4 + payload.length);
  new DataView(out.buffer).setUint32(0, payload.length, true);
  out.set(payload, 4);
  await conn.write(out);
}

/* Returns null for the goodbye sentinel. */
export async function frameRead(
  conn: Conn,
  timeoutMs: number | null,
  maxFrameBytes: number = MAX_FRAME_BYTES,
): Promise<Uint8Array | null> {
  const deadline = timeoutMs === null ? null : Date.now() + timeoutMs;
  const header = await conn.read(4, deadline);
  const length = new DataView(header.buffer, header.byteOffset, 4).getUint32(0, true);
  if (length === 0) return null;
  if (length > maxFrameBytes) {
    throw new Malformed(`announced frame of ${length} bytes exceeds limit ${maxFrameBytes}`);
  }
  return conn.read(length, deadline);
}
