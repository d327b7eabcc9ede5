import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { execFileSync } from "node:child_process";
import { afterAll, describe, expect, it } from "vitest";
import { Malformed, PeerClosed, Timeout } from "../src/errors.js";
import { Conn, FifoConn, frameRead, frameWrite } from "../src/framing.js";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "framing-"));

afterAll(() => {
  fs.rmSync(tmp, { recursive: true, force: true });
});

function fifoPair(name: string): string {
  const p = path.join(tmp, name);
  execFileSync("mkfifo", [p]);
  return p;
}

describe("fifo frames", () => {
  it("frames written to a pipe read back in order", async () => {
    const p = fifoPair("loop.pipe");
    const a = await FifoConn.open(p, 1000);
    const b = await FifoConn.open(p, 1000);
    const payloads = [1, 100, 4096, 70000].map((n) => {
      const buf = new Uint8Array(n);
      for (let i = 0; i < n; i++) buf[i] = (i * 7 + n) & 0xff;
      return buf;
    });
    const writer = (async () => {
      for (const payload of payloads) await frameWrite(a, payload);
      await frameWrite(a, new Uint8Array(0));
    })();
    for (const payload of payloads) {
      const got = await frameRead(b, 5000);
      expect(got).not.toBeNull();
      expect(Buffer.from(got!).equals(Buffer.from(payload))).toBe(true);
    }
    expect(await frameRead(b, 5000)).toBeNull();
    await writer;
    await a.close();
    await b.close();
  });

  it("a silent pipe times out instead of hanging", async () => {
    const p = fifoPair("silent.pipe");
    const conn = await FifoConn.open(p, 1000);
    const t0 = Date.now();
    await expect(frameRead(conn, 120)).rejects.toThrow(Timeout);
    expect(Date.now() - t0).toBeGreaterThanOrEqual(100);
    await conn.close();
  });

  it("an oversized announcement is rejected before reading the body", async () => {
    const p = fifoPair("huge.pipe");
    const a = await FifoConn.open(p, 1000);
    const b = await FifoConn.open(p, 1000);
    const header = new Uint8Array(4);
    new DataView(header.buffer).setUint32(0, 0xffffffff, true);
    await a.write(header);
    await expect(frameRead(b, 1000)).rejects.toThrow(Malformed);
    await a.close();
    await b.close();
  });

  it("a frame larger than the limit is refused on write", async () => {
    const p = fifoPair("limit.pipe");
    const a = await FifoConn.open(p, 1000);
    await expect(frameWrite(a, new Uint8Array(64), 16)).rejects.toThrow(Malformed);
    await a.close();
  });

  it("a missing pipe path times out on open", async () => {
    await expect(FifoConn.open(path.join(tmp, "nope.pipe"), 80)).rejects.toThrow(Timeout);
  });

  it("a regular file is not accepted as a pipe", async () => {
    const p = path.join(tmp, "plain.txt");
    fs.writeFileSync(p, "hi");
    await expect(FifoConn.open(p, 100)).rejects.toThrow(Malformed);
  });
});

describe("in-memory conn", () => {
  function memPair(): [Conn, Conn] {
    const queues: [Uint8Array[], Uint8Array[]] = [[], []];
    const closed = [false, false];
    const make = (rx: number): Conn => ({
      async read(n, deadline) {
        const inbox = queues[rx]!;
        let have = inbox.reduce((a, c) => a + c.length, 0);
        while (have < n) {
          if (closed[1 - rx]) throw new PeerClosed("writer closed");
          if (deadline !== null && Date.now() > deadline) throw new Timeout(0, "mem");
          await new Promise((r) => setTimeout(r, 1));
          have = inbox.reduce((a, c) => a + c.length, 0);
        }
        const out = new Uint8Array(n);
        let at = 0;
        while (at < n) {
          const head = inbox[0]!;
          const take = Math.min(head.length, n - at);
          out.set(head.subarray(0, take), at);
          at += take;
          if (take === head.length) inbox.shift();
          else inbox[0] = head.subarray(take);
        }
        return out;
      },
      async write(data) {
        queues[1 - rx]!.push(data.slice());
      },
      async close() {
        closed[rx] = true;
      },
    });
    return [make(0), make(1)];
  }

  it("truncated final frame surfaces as PeerClosed", async () => {
    const [a, b] = memPair();
    await frameWrite(a, new Uint8Array([1, 2, 3]));
    const header = new Uint8Array(4);
    new DataView(header.buffer).setUint32(0, 512, true);
    await a.write(header);
    await a.write(new Uint8Array(100));
    await a.close();
    const first = await frameRead(b, 1000);
    expect([...first!]).toEqual([1, 2, 3]);
    await expect(frameRead(b, 1000)).rejects.toThrow(PeerClosed);
  });
});
