import * as net from "node:net";
import { setTimeout as sleep } from "node:timers/promises";
import {
  Malformed,
  ModelError,
  PeerClosed,
  RetriesExhausted,
  RunnerError,
} from "./errors.js";
import {
  Conn,
  FifoConn,
  MAX_FRAME_BYTES,
  SocketConn,
  frameRead,
  frameWrite,
} from "./framing.js";
import { ERROR_KEY, SerDesKind, deserialize, errorBundle, serialize } from "./serdes.js";
import { FeatureBundle, TensorSpec } from "./tensors.js";

export interface RetryPolicy {
  initialDelayMs: number;
  multiplier: number;
  maxRetries: number;
  perCallTimeoutMs: number;
}

export const DEFAULT_POLICY: RetryPolicy = {
  initialDelayMs: 50,
  multiplier: 2.0,
  maxRetries: 5,
  perCallTimeoutMs: 5000,
};

export type Transport =
  | { kind: "pipe"; readPath: string; writePath: string }
  | { kind: "rpc"; address: string; port: number };

export type SideRole = "serve" | "query";

export interface SideConfig {
  transport: Transport;
  serdes: SerDesKind;
  role: SideRole;
  policy?: Partial<RetryPolicy>;
}

export type ModelHandler = (
  bundle: FeatureBundle,
) => FeatureBundle | Promise<FeatureBundle>;

function policyOf(config: SideConfig): RetryPolicy {
  return { ...DEFAULT_POLICY, ...config.policy };
}

function checkConfig(config: SideConfig, role: SideRole): void {
  if (config.role !== role) {
    throw new Malformed(`config role is "${config.role}", operation needs "${role}"`);
  }
  if (config.transport.kind === "rpc" && config.serdes !== "tagged") {
    throw new Malformed(`unsupported serdes "${config.serdes}" for the rpc transport`);
  }
}

async function openPipeConn(
  transport: Extract<Transport, { kind: "pipe" }>,
  waitMs: number,
): Promise<Conn> {
  // single fifo pair, one conn reading one way and writing the other;
  // both paths must come up before traffic flows
  const read = await FifoConn.open(transport.readPath, waitMs);
  try {
    const write = await FifoConn.open(transport.writePath, waitMs);
    return {
      read: (n, deadline) => read.read(n, deadline),
      write: (data) => write.write(data),
      close: async () => {
        await read.close();
        await write.close();
      },
    };
  } catch (err) {
    await read.close();
    throw err;
  }
}

async function connectWithBackoff(
  transport: Extract<Transport, { kind: "rpc" }>,
  policy: RetryPolicy,
): Promise<Conn> {
  const attempts = policy.maxRetries + 1;
  const offsets: number[] = [];
  const start = Date.now();
  let lastError = "";
  for (let attempt = 0; attempt < attempts; attempt++) {
    offsets.push(Date.now() - start);
    try {
      const socket = await new Promise<net.Socket>((resolve, reject) => {
        const s = net.createConnection({
          host: transport.address,
          port: transport.port,
          timeout: policy.perCallTimeoutMs,
        });
        s.once("connect", () => {
          s.setTimeout(0);
          resolve(s);
        });
        s.once("timeout", () => {
          s.destroy();
          reject(new Error("connect timed out"));
        });
        s.once("error", (err) => reject(err));
      });
      return new SocketConn(socket);
    } catch (err) {
      lastError = err instanceof Error ? err.message : String(err);
    }
    if (attempt < attempts - 1) {
      await sleep(policy.initialDelayMs * policy.multiplier ** attempt);
    }
  }
  throw new RetriesExhausted(attempts, offsets, lastError);
}

function listenOnce(
  transport: Extract<Transport, { kind: "rpc" }>,
  waitMs: number,
): Promise<{ conn: SocketConn; server: net.Server }> {
  return new Promise((resolve, reject) => {
    const server = net.createServer();
    const timer = setTimeout(() => {
      server.close();
      reject(new PeerClosed("nobody connected"));
    }, waitMs);
    server.once("error", (err) => {
      clearTimeout(timer);
      reject(err);
    });
    server.once("connection", (socket) => {
      clearTimeout(timer);
      resolve({ conn: new SocketConn(socket), server });
    });
    server.listen(transport.port, transport.address);
  });
}

export interface ServeOptions {
  inputSpecs?: TensorSpec[];
  maxRequests?: number;
  idleTimeoutMs?: number;
  acceptTimeoutMs?: number;
}

/* Serves framed requests until the goodbye sentinel, hangup or
   maxRequests; returns the number of requests answered. Handler failures
   are reported to the peer as "__error" bundles and the loop continues. */
export async function sideServe(
  config: SideConfig,
  handler: ModelHandler,
  options: ServeOptions = {},
): Promise<number> {
  checkConfig(config, "serve");
  const policy = policyOf(config);
  const idleMs = options.idleTimeoutMs ?? 60000;
  const acceptMs = options.acceptTimeoutMs ?? 60000;
  let conn: Conn;
  let server: net.Server | null = null;
  if (config.transport.kind === "pipe") {
    conn = await openPipeConn(config.transport, acceptMs);
  } else {
    const got = await listenOnce(config.transport, acceptMs);
    conn = got.conn;
    server = got.server;
  }
  let served = 0;
  try {
    while (options.maxRequests === undefined || served < options.maxRequests) {
      let request: Uint8Array | null;
      try {
        request = await frameRead(conn, idleMs);
      } catch (err) {
        if (err instanceof PeerClosed) break;
        throw err;
      }
      if (request === null) break;
      let reply: Uint8Array;
      try {
        const bundle = deserialize(config.serdes, request, options.inputSpecs ?? null);
        const out = await handler(bundle);
        reply = serialize(config.serdes, out);
        if (reply.length === 0) {
          throw new Malformed("handler returned an empty bundle");
        }
      } catch (err) {
        const msg = err instanceof Error ? `${err.name}: ${err.message}` : String(err);
        reply = serialize(config.serdes, errorBundle(msg));
      }
      await frameWrite(conn, reply);
      served += 1;
    }
  } finally {
    await conn.close();
    server?.close();
  }
  return served;
}

/* Client role: one session against a serving host, many queries. */
export class SideSession {
  private constructor(
    private readonly conn: Conn,
    private readonly serdes: SerDesKind,
    private readonly policy: RetryPolicy,
  ) {}

  static async open(config: SideConfig): Promise<SideSession> {
    checkConfig(config, "query");
    const policy = policyOf(config);
    const conn =
      config.transport.kind === "pipe"
        ? await openPipeConn(config.transport, policy.perCallTimeoutMs)
        : await connectWithBackoff(config.transport, policy);
    return new SideSession(conn, config.serdes, policy);
  }

  async query(request: FeatureBundle, outputSpecs: TensorSpec[]): Promise<FeatureBundle> {
    if (outputSpecs.length === 0) throw new Malformed("outputSpecs must be non-empty");
    const payload = serialize(this.serdes, request);
    if (payload.length > MAX_FRAME_BYTES) {
      throw new Malformed(`request of ${payload.length} bytes exceeds the frame limit`);
    }
    await frameWrite(this.conn, payload);
    const reply = await frameRead(this.conn, this.policy.perCallTimeoutMs);
    if (reply === null) throw new PeerClosed("server said goodbye");
    const bundle = deserialize(this.serdes, reply, outputSpecs);
    if (bundle.size === 1 && bundle.has(ERROR_KEY)) {
      throw new ModelError(bundle.get(ERROR_KEY).strs[0]!);
    }
    return bundle;
  }

  /* Sends the goodbye sentinel, then closes. */
  async close(): Promise<void> {
    try {
      await frameWrite(this.conn, new Uint8Array(0));
    } catch (err) {
      if (!(err instanceof RunnerError)) throw err;
    }
    await this.conn.close();
  }
}

/* One-shot convenience: open, exchange once, say goodbye. */
export async function sideQuery(
  config: SideConfig,
  request: FeatureBundle,
  outputSpecs: TensorSpec[],
): Promise<FeatureBundle> {
  const session = await SideSession.open(config);
  try {
    return await session.query(request, outputSpecs);
  } finally {
    await session.close();
  }
}
