import { Malformed, TypeMismatch } from "./errors.js";

export type DType = "i64" | "f32" | "f64" | "bool" | "str";

export const ELEMENT_BYTES: Record<Exclude<DType, "str">, number> = {
  i64: 8,
  f32: 4,
  f64: 8,
  bool: 1,
};

export interface TensorSpec {
  key: string;
  dtype: DType;
  shape: number[];
}

export function elementCount(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function sameShape(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((d, i) => d === b[i]);
}

export function checkKey(key: string): void {
  if (key.length === 0) throw new Malformed("empty feature key");
  for (const ch of key) {
    const c = ch.codePointAt(0)!;
    // reject C0, DEL and C1 control ranges
    if (c < 0x20 || (c >= 0x7f && c < 0xa0)) {
      throw new Malformed(`control character in feature key ${JSON.stringify(key)}`);
    }
  }
}

/* Numeric payloads are kept as raw little-endian bytes so that NaN bit
   patterns survive echo paths untouched; strings stay as an array. */
export class TensorValue {
  readonly spec: TensorSpec;
  readonly bytes: Uint8Array;
  readonly strs: string[];

  private constructor(spec: TensorSpec, bytes: Uint8Array, strs: string[]) {
    this.spec = spec;
    this.bytes = bytes;
    this.strs = strs;
  }

  static fromBytes(spec: TensorSpec, raw: Uint8Array): TensorValue {
    checkKey(spec.key);
    if (spec.dtype === "str") throw new Malformed("str tensors are not byte-backed");
    const want = elementCount(spec.shape) * ELEMENT_BYTES[spec.dtype];
    if (raw.length !== want) {
      throw new Malformed(`${spec.key}: expected ${want} raw bytes, got ${raw.length}`);
    }
    if (spec.dtype === "bool") {
      for (const b of raw) if (b > 1) throw new Malformed(`${spec.key}: bool byte ${b}`);
    }
    return new TensorValue(spec, raw, []);
  }

  static fromStrings(key: string, shape: number[], values: string[]): TensorValue {
    checkKey(key);
    if (values.length !== elementCount(shape)) {
      throw new Malformed(`${key}: ${values.length} strings for shape [${shape}]`);
    }
    return new TensorValue({ key, dtype: "str", shape }, new Uint8Array(0), values);
  }

  static fromNumbers(key: string, dtype: DType, shape: number[], values: number[]): TensorValue {
    const n = values.length;
    const out = new Uint8Array(n * ELEMENT_BYTES[dtype as Exclude<DType, "str">]);
    const view = new DataView(out.buffer);
    values.forEach((v, i) => {
      if (dtype === "f32") view.setFloat32(i * 4, Math.fround(v), true);
      else if (dtype === "f64") view.setFloat64(i * 8, v, true);
      else if (dtype === "bool") out[i] = v ? 1 : 0;
      else throw new Malformed(`${key}: fromNumbers cannot build ${dtype}`);
    });
    return TensorValue.fromBytes({ key, dtype, shape }, out);
  }

  static fromBigInts(key: string, shape: number[], values: bigint[]): TensorValue {
    const out = new Uint8Array(values.length * 8);
    const view = new DataView(out.buffer);
    values.forEach((v, i) => {
      if (v < -(2n ** 63n) || v >= 2n ** 63n) {
        throw new Malformed(`${key}: ${v} does not fit in i64`);
      }
      view.setBigInt64(i * 8, v, true);
    });
    return TensorValue.fromBytes({ key, dtype: "i64", shape }, out);
  }

  get count(): number {
    return elementCount(this.spec.shape);
  }

  /* f32 elements come back exactly widened to f64. */
  numbers(): number[] {
    const { dtype } = this.spec;
    const view = new DataView(this.bytes.buffer, this.bytes.byteOffset, this.bytes.length);
    const out: number[] = [];
    for (let i = 0; i < this.count; i++) {
      if (dtype === "f32") out.push(view.getFloat32(i * 4, true));
      else if (dtype === "f64") out.push(view.getFloat64(i * 8, true));
      else if (dtype === "bool") out.push(this.bytes[i]!);
      else throw new Malformed(`${this.spec.key}: numbers() on ${dtype}`);
    }
    return out;
  }

  bigints(): bigint[] {
    if (this.spec.dtype !== "i64") throw new Malformed(`${this.spec.key}: not i64`);
    const view = new DataView(this.bytes.buffer, this.bytes.byteOffset, this.bytes.length);
    const out: bigint[] = [];
    for (let i = 0; i < this.count; i++) out.push(view.getBigInt64(i * 8, true));
    return out;
  }

  equals(other: TensorValue): boolean {
    if (
      this.spec.key !== other.spec.key ||
      this.spec.dtype !== other.spec.dtype ||
      !sameShape(this.spec.shape, other.spec.shape)
    ) {
      return false;
    }
    if (this.spec.dtype === "str") {
      return this.strs.length === other.strs.length &&
        this.strs.every((s, i) => s === other.strs[i]);
    }
    return this.bytes.length === other.bytes.length &&
      this.bytes.every((b, i) => b === other.bytes[i]);
  }
}

export class FeatureBundle {
  private readonly entries = new Map<string, TensorValue>();

  static of(...values: TensorValue[]): FeatureBundle {
    const bundle = new FeatureBundle();
    for (const v of values) bundle.put(v);
    return bundle;
  }

  put(value: TensorValue): void {
    this.entries.set(value.spec.key, value);
  }

  get(key: string): TensorValue {
    const v = this.entries.get(key);
    if (v === undefined) throw new Malformed(`missing feature "${key}"`);
    return v;
  }

  has(key: string): boolean {
    return this.entries.has(key);
  }

  get size(): number {
    return this.entries.size;
  }

  keys(): string[] {
    return [...this.entries.keys()];
  }

  values(): TensorValue[] {
    return [...this.entries.values()];
  }

  specs(): TensorSpec[] {
    return this.values().map((v) => v.spec);
  }

  equals(other: FeatureBundle): boolean {
    const a = this.values();
    const b = other.values();
    return a.length === b.length && a.every((v, i) => v.equals(b[i]!));
  }
}

/* Reorders to spec order; any mismatch in keys, dtypes or shapes throws. */
export function validateExpected(bundle: FeatureBundle, specs: TensorSpec[]): FeatureBundle {
  const seen = new Set(bundle.keys());
  const wanted = new Set(specs.map((s) => s.key));
  for (const key of seen) {
    if (!wanted.has(key)) throw new Malformed(`unexpected feature "${key}"`);
  }
  const out = new FeatureBundle();
  for (const spec of specs) {
    if (!bundle.has(spec.key)) throw new Malformed(`missing feature "${spec.key}"`);
    const v = bundle.get(spec.key);
    if (v.spec.dtype !== spec.dtype) {
      throw new TypeMismatch(spec.key, spec.dtype, v.spec.dtype);
    }
    if (!sameShape(v.spec.shape, spec.shape)) {
      throw new Malformed(
        `shape mismatch for "${spec.key}": expected [${spec.shape}], found [${v.spec.shape}]`,
      );
    }
    out.put(v);
  }
  return out;
}
