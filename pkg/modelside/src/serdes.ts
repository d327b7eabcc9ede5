import { Malformed, TypeMismatch } from "./errors.js";
import {
  DType,
  ELEMENT_BYTES,
  FeatureBundle,
  TensorSpec,
  TensorValue,
  checkKey,
  elementCount,
  sameShape,
  validateExpected,
} from "./tensors.js";
import * as jt from "./jsontext.js";

export type SerDesKind = "json" | "bitstream" | "tagged";

export const ERROR_KEY = "__error";

const TAGS: Record<DType, number> = { i64: 1, f32: 2, f64: 3, bool: 4, str: 5 };
const TAG_TO_DTYPE: Record<number, DType> = { 1: "i64", 2: "f32", 3: "f64", 4: "bool", 5: "str" };

const utf8 = new TextEncoder();
const utf8dec = new TextDecoder("utf-8", { fatal: true });

function isErrorBundle(bundle: FeatureBundle): boolean {
  return (
    bundle.size === 1 && bundle.has(ERROR_KEY) && bundle.get(ERROR_KEY).spec.dtype === "str"
  );
}

export function errorBundle(message: string): FeatureBundle {
  return FeatureBundle.of(TensorValue.fromStrings(ERROR_KEY, [], [message]));
}

/* ---------------- json ---------------- */

function jsonScalar(value: TensorValue, i: number): jt.JsonValue {
  const d = value.spec.dtype;
  if (d === "i64") return { kind: "int", value: value.bigints()[i]! };
  if (d === "bool") return { kind: "bool", value: value.numbers()[i] === 1 };
  if (d === "str") return { kind: "str", value: value.strs[i]! };
  return { kind: "float", value: value.numbers()[i]! };
}

function jsonNest(value: TensorValue, shape: number[], base: number, stride: number): jt.JsonValue {
  if (shape.length === 0) return jsonScalar(value, base);
  const [head, ...rest] = shape;
  const inner = stride / head!;
  const items: jt.JsonValue[] = [];
  for (let i = 0; i < head!; i++) {
    items.push(jsonNest(value, rest, base + i * inner, inner));
  }
  return { kind: "array", value: items };
}

function jsonEncode(bundle: FeatureBundle): Uint8Array {
  const map = new Map<string, jt.JsonValue>();
  for (const v of bundle.values()) {
    map.set(v.spec.key, jsonNest(v, v.spec.shape, 0, v.count));
  }
  return utf8.encode(jt.emit({ kind: "object", value: map }));
}

type Flat = { shape: number[]; scalars: jt.JsonValue[] };

function jsonFlatten(v: jt.JsonValue): Flat {
  if (v.kind !== "array") return { shape: [], scalars: [v] };
  const subs = v.value.map(jsonFlatten);
  if (subs.length === 0) return { shape: [0], scalars: [] };
  const first = subs[0]!.shape;
  for (const s of subs) {
    if (!sameShape(s.shape, first)) throw new Malformed("ragged json array");
  }
  return {
    shape: [subs.length, ...first],
    scalars: subs.flatMap((s) => s.scalars),
  };
}

function scalarKind(scalars: jt.JsonValue[], key: string): "int" | "float" | "bool" | "str" {
  let sawInt = false;
  let sawFloat = false;
  let kind: "bool" | "str" | null = null;
  for (const s of scalars) {
    if (s.kind === "int") sawInt = true;
    else if (s.kind === "float") sawFloat = true;
    else if (s.kind === "bool" || s.kind === "str") {
      if (kind !== null && kind !== s.kind) throw new Malformed(`mixed types in "${key}"`);
      kind = s.kind;
    } else throw new Malformed(`nested value where scalar expected in "${key}"`);
  }
  if (kind !== null) {
    if (sawInt || sawFloat) throw new Malformed(`mixed types in "${key}"`);
    return kind;
  }
  return sawFloat ? "float" : "int";
}

function asFloat(s: jt.JsonValue): number {
  if (s.kind === "float") return s.value;
  if (s.kind === "int") return Number(s.value);
  throw new Malformed("expected a number");
}

function jsonTyped(key: string, flat: Flat, spec: TensorSpec): TensorValue {
  const { scalars } = flat;
  const want = elementCount(spec.shape);
  // a zero-element value cannot carry its own rank in json text
  const shapeOk = sameShape(flat.shape, spec.shape) || (want === 0 && scalars.length === 0);
  if (!shapeOk) {
    throw new Malformed(`shape mismatch for "${key}": expected [${spec.shape}], found [${flat.shape}]`);
  }
  const kind = scalars.length ? scalarKind(scalars, key) : null;
  switch (spec.dtype) {
    case "i64": {
      if (kind !== null && kind !== "int") throw new TypeMismatch(key, "i64", kind);
      return TensorValue.fromBigInts(key, spec.shape, scalars.map((s) => {
        if (s.kind !== "int") throw new TypeMismatch(key, "i64", s.kind);
        return s.value;
      }));
    }
    case "f32":
    case "f64": {
      if (kind === "bool" || kind === "str") throw new TypeMismatch(key, spec.dtype, kind);
      return TensorValue.fromNumbers(key, spec.dtype, spec.shape, scalars.map(asFloat));
    }
    case "bool": {
      if (kind !== null && kind !== "bool") throw new TypeMismatch(key, "bool", kind);
      return TensorValue.fromNumbers(key, "bool", spec.shape, scalars.map((s) =>
        s.kind === "bool" && s.value ? 1 : 0,
      ));
    }
    case "str": {
      if (kind !== null && kind !== "str") throw new TypeMismatch(key, "str", kind);
      return TensorValue.fromStrings(key, spec.shape, scalars.map((s) => {
        if (s.kind !== "str") throw new TypeMismatch(key, "str", s.kind);
        return s.value;
      }));
    }
  }
}

function jsonInferred(key: string, flat: Flat): TensorValue {
  const { scalars, shape } = flat;
  if (scalars.length === 0) {
    return TensorValue.fromNumbers(key, "f64", shape, []);
  }
  const kind = scalarKind(scalars, key);
  if (kind === "int") {
    return TensorValue.fromBigInts(key, shape, scalars.map((s) => (s as { value: bigint }).value));
  }
  if (kind === "float") {
    return TensorValue.fromNumbers(key, "f64", shape, scalars.map(asFloat));
  }
  if (kind === "bool") {
    return TensorValue.fromNumbers(key, "bool", shape, scalars.map((s) =>
      (s as { value: boolean }).value ? 1 : 0,
    ));
  }
  return TensorValue.fromStrings(key, shape, scalars.map((s) => (s as { value: string }).value));
}

function jsonDecode(data: Uint8Array, expected: TensorSpec[] | null): FeatureBundle {
  let root: jt.JsonValue;
  try {
    root = jt.parse(utf8dec.decode(data));
  } catch (err) {
    if (err instanceof Malformed) throw err;
    throw new Malformed(`bad json payload: ${err}`);
  }
  if (root.kind !== "object") throw new Malformed("json payload is not an object");
  const bundle = new FeatureBundle();
  if (root.value.size === 1 && root.value.has(ERROR_KEY)) {
    const v = root.value.get(ERROR_KEY)!;
    if (v.kind === "str") {
      bundle.put(TensorValue.fromStrings(ERROR_KEY, [], [v.value]));
      return bundle;
    }
  }
  if (expected === null) {
    for (const [key, v] of root.value) {
      checkKey(key);
      bundle.put(jsonInferred(key, jsonFlatten(v)));
    }
    return bundle;
  }
  for (const [key, v] of root.value) {
    checkKey(key);
    const spec = expected.find((s) => s.key === key);
    if (spec === undefined) throw new Malformed(`unexpected feature "${key}"`);
    bundle.put(jsonTyped(key, jsonFlatten(v), spec));
  }
  return validateExpected(bundle, expected);
}

/* ---------------- shared binary helpers ---------------- */

class ByteWriter {
  private chunks: Uint8Array[] = [];

  push(chunk: Uint8Array): void {
    this.chunks.push(chunk);
  }

  u8(v: number): void {
    this.push(new Uint8Array([v]));
  }

  u16le(v: number): void {
    const b = new Uint8Array(2);
    new DataView(b.buffer).setUint16(0, v, true);
    this.push(b);
  }

  u32le(v: number): void {
    const b = new Uint8Array(4);
    new DataView(b.buffer).setUint32(0, v, true);
    this.push(b);
  }

  done(): Uint8Array {
    const total = this.chunks.reduce((a, c) => a + c.length, 0);
    const out = new Uint8Array(total);
    let at = 0;
    for (const c of this.chunks) {
      out.set(c, at);
      at += c.length;
    }
    return out;
  }
}

class ByteReader {
  private pos = 0;

  constructor(private readonly data: Uint8Array) {}

  take(n: number): Uint8Array {
    if (this.pos + n > this.data.length) throw new Malformed("truncated payload");
    const out = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  u8(): number {
    return this.take(1)[0]!;
  }

  u16le(): number {
    const b = this.take(2);
    return new DataView(b.buffer, b.byteOffset, 2).getUint16(0, true);
  }

  u32le(): number {
    const b = this.take(4);
    return new DataView(b.buffer, b.byteOffset, 4).getUint32(0, true);
  }

  get exhausted(): boolean {
    return this.pos === this.data.length;
  }
}

function elementsToBytes(value: TensorValue): Uint8Array {
  if (value.spec.dtype !== "str") return value.bytes;
  const w = new ByteWriter();
  for (const s of value.strs) {
    const enc = utf8.encode(s);
    w.u32le(enc.length);
    w.push(enc);
  }
  return w.done();
}

function elementsFromBytes(r: ByteReader, spec: TensorSpec): TensorValue {
  const n = elementCount(spec.shape);
  if (spec.dtype === "str") {
    const strs: string[] = [];
    for (let i = 0; i < n; i++) {
      const len = r.u32le();
      strs.push(utf8dec.decode(r.take(len)));
    }
    return TensorValue.fromStrings(spec.key, spec.shape, strs);
  }
  const raw = r.take(n * ELEMENT_BYTES[spec.dtype]);
  return TensorValue.fromBytes(spec, raw.slice());
}

/* ---------------- bitstream ---------------- */

function bitstreamEncode(bundle: FeatureBundle): Uint8Array {
  const feats: jt.JsonValue[] = bundle.specs().map((s) => ({
    kind: "object",
    value: new Map<string, jt.JsonValue>([
      ["key", { kind: "str", value: s.key }],
      ["dtype", { kind: "str", value: s.dtype }],
      ["shape", { kind: "array", value: s.shape.map((d) => ({ kind: "int", value: BigInt(d) }) as jt.JsonValue) }],
    ]),
  }));
  const header: jt.JsonValue = {
    kind: "object",
    value: new Map([["features", { kind: "array", value: feats } as jt.JsonValue]]),
  };
  const w = new ByteWriter();
  w.push(utf8.encode(jt.emit(header)));
  w.push(new Uint8Array([0x0a]));
  for (const v of bundle.values()) w.push(elementsToBytes(v));
  return w.done();
}

function headerSpec(v: jt.JsonValue): TensorSpec {
  if (v.kind !== "object") throw new Malformed("bitstream feature entry is not an object");
  const keys = [...v.value.keys()];
  if (keys.length !== 3 || keys[0] !== "key" || keys[1] !== "dtype" || keys[2] !== "shape") {
    throw new Malformed("bitstream feature entry must have key, dtype, shape");
  }
  const key = v.value.get("key")!;
  const dtype = v.value.get("dtype")!;
  const shape = v.value.get("shape")!;
  if (key.kind !== "str" || dtype.kind !== "str" || shape.kind !== "array") {
    throw new Malformed("bitstream feature entry field types");
  }
  if (!(dtype.value in TAGS)) throw new Malformed(`unknown dtype "${dtype.value}"`);
  const dims = shape.value.map((d) => {
    if (d.kind !== "int" || d.value < 0n || d.value > 0xffffffffn) {
      throw new Malformed("bad bitstream shape entry");
    }
    return Number(d.value);
  });
  checkKey(key.value);
  return { key: key.value, dtype: dtype.value as DType, shape: dims };
}

function bitstreamDecode(data: Uint8Array, expected: TensorSpec[] | null): FeatureBundle {
  const nl = data.indexOf(0x0a);
  if (nl < 0) throw new Malformed("bitstream header is not terminated");
  let root: jt.JsonValue;
  try {
    root = jt.parse(utf8dec.decode(data.subarray(0, nl)));
  } catch (err) {
    if (err instanceof Malformed) throw err;
    throw new Malformed(`bad bitstream header: ${err}`);
  }
  if (root.kind !== "object" || root.value.size !== 1 || !root.value.has("features")) {
    throw new Malformed("bitstream header must be {features: [...]}");
  }
  const feats = root.value.get("features")!;
  if (feats.kind !== "array") throw new Malformed("bitstream features must be an array");
  const specs = feats.value.map(headerSpec);
  const seen = new Set<string>();
  for (const s of specs) {
    if (seen.has(s.key)) throw new Malformed(`duplicate key "${s.key}"`);
    seen.add(s.key);
  }
  const r = new ByteReader(data.subarray(nl + 1));
  const bundle = new FeatureBundle();
  for (const spec of specs) bundle.put(elementsFromBytes(r, spec));
  if (!r.exhausted) throw new Malformed("trailing bytes after bitstream payload");
  if (isErrorBundle(bundle) || expected === null) return bundle;
  return validateExpected(bundle, expected);
}

/* ---------------- tagged binary ---------------- */

function taggedEncode(bundle: FeatureBundle): Uint8Array {
  const w = new ByteWriter();
  for (const v of bundle.values()) {
    const { key, dtype, shape } = v.spec;
    const keyBytes = utf8.encode(key);
    if (keyBytes.length > 0xffff) throw new Malformed(`key too long: "${key.slice(0, 32)}"`);
    if (shape.length > 0xff) throw new Malformed(`rank ${shape.length} too large`);
    w.u8(TAGS[dtype]);
    w.u16le(keyBytes.length);
    w.push(keyBytes);
    w.u8(shape.length);
    for (const d of shape) {
      if (d > 0xffffffff) throw new Malformed(`dimension ${d} too large`);
      w.u32le(d);
    }
    w.push(elementsToBytes(v));
  }
  return w.done();
}

function taggedDecode(data: Uint8Array, expected: TensorSpec[] | null): FeatureBundle {
  const r = new ByteReader(data);
  const bundle = new FeatureBundle();
  while (!r.exhausted) {
    const tag = r.u8();
    const dtype = TAG_TO_DTYPE[tag];
    if (dtype === undefined) throw new Malformed(`unknown tag byte ${tag}`);
    const keyLen = r.u16le();
    const key = utf8dec.decode(r.take(keyLen));
    checkKey(key);
    if (bundle.has(key)) throw new Malformed(`duplicate key "${key}"`);
    const rank = r.u8();
    const shape: number[] = [];
    for (let i = 0; i < rank; i++) shape.push(r.u32le());
    bundle.put(elementsFromBytes(r, { key, dtype, shape }));
  }
  if (isErrorBundle(bundle) || expected === null) return bundle;
  return validateExpected(bundle, expected);
}

/* ---------------- dispatch ---------------- */

export function serialize(kind: SerDesKind, bundle: FeatureBundle): Uint8Array {
  if (kind === "json") return jsonEncode(bundle);
  if (kind === "bitstream") return bitstreamEncode(bundle);
  return taggedEncode(bundle);
}

export function deserialize(
  kind: SerDesKind,
  data: Uint8Array,
  expected: TensorSpec[] | null = null,
): FeatureBundle {
  if (kind === "json") return jsonDecode(data, expected);
  if (kind === "bitstream") return bitstreamDecode(data, expected);
  return taggedDecode(data, expected);
}

export function payloadSize(kind: SerDesKind, bundle: FeatureBundle): number {
  return serialize(kind, bundle).length;
}
