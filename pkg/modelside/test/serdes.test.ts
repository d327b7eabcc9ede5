import { describe, expect, it } from "vitest";
import { Malformed, ModelError, TypeMismatch } from "../src/errors.js";
import {
  ERROR_KEY,
  SerDesKind,
  deserialize,
  errorBundle,
  payloadSize,
  serialize,
} from "../src/serdes.js";
import { FeatureBundle, TensorSpec, TensorValue } from "../src/tensors.js";

const KINDS: SerDesKind[] = ["json", "bitstream", "tagged"];

function f32Bits(...bits: number[]): Uint8Array {
  const out = new Uint8Array(bits.length * 4);
  const view = new DataView(out.buffer);
  bits.forEach((b, i) => view.setUint32(i * 4, b, true));
  return out;
}

function referenceBundle(): FeatureBundle {
  return FeatureBundle.of(
    TensorValue.fromBigInts("step", [], [7n]),
    TensorValue.fromBytes({ key: "obs", dtype: "f32", shape: [3] },
      f32Bits(0x3dcccccd, 0xc0200000, 0x40400000)),
    TensorValue.fromNumbers("grid", "f64", [2, 2], [0.5, 1 / 3, -0, 1e16]),
    TensorValue.fromNumbers("mask", "bool", [2], [1, 0]),
    TensorValue.fromStrings("note", [], ['h\t"i"\n\x01π\u{1F0A1}']),
  );
}

// encodings of referenceBundle() as produced by the peer implementation
const GOLDEN: Record<SerDesKind, string> = {
  json:
    "7b2273746570223a372c226f6273223a5b302e31303030303030303134393031313631322c" +
    "2d322e352c332e305d2c2267726964223a5b5b302e352c302e33333333333333333333333333" +
    "3333335d2c5b2d302e302c31652b31365d5d2c226d61736b223a5b747275652c66616c73655d" +
    "2c226e6f7465223a22685c745c22695c225c6e5c7530303031cf80f09f82a1227d",
  bitstream:
    "7b226665617475726573223a5b7b226b6579223a2273746570222c226474797065223a2269" +
    "3634222c227368617065223a5b5d7d2c7b226b6579223a226f6273222c226474797065223a22" +
    "663332222c227368617065223a5b335d7d2c7b226b6579223a2267726964222c226474797065" +
    "223a22663634222c227368617065223a5b322c325d7d2c7b226b6579223a226d61736b222c22" +
    "6474797065223a22626f6f6c222c227368617065223a5b325d7d2c7b226b6579223a226e6f74" +
    "65222c226474797065223a22737472222c227368617065223a5b5d7d5d7d0a07000000000000" +
    "00cdcccc3d000020c000004040000000000000e03f555555555555d53f000000000000008000" +
    "80e03779c3414301000d00000068092269220a01cf80f09f82a1",
  tagged:
    "010400737465700007000000000000000203006f62730103000000cdcccc3d000020c00000" +
    "404003040067726964020200000002000000000000000000e03f555555555555d53f00000000" +
    "000000800080e03779c341430404006d61736b010200000001000504006e6f7465000d000000" +
    "68092269220a01cf80f09f82a1",
};

function hex(data: Uint8Array): string {
  return Buffer.from(data).toString("hex");
}

describe("golden encodings", () => {
  for (const kind of KINDS) {
    it(`${kind} bytes match the peer encoder`, () => {
      expect(hex(serialize(kind, referenceBundle()))).toBe(GOLDEN[kind]);
    });

    it(`${kind} golden bytes decode back to the bundle`, () => {
      const bundle = referenceBundle();
      const back = deserialize(kind, Buffer.from(GOLDEN[kind], "hex"), bundle.specs());
      expect(back.equals(bundle)).toBe(true);
    });
  }

  it("i64 extremes stay exact in json", () => {
    const b = FeatureBundle.of(
      TensorValue.fromBigInts("n", [3], [2n ** 63n - 1n, -(2n ** 63n), 0n]),
    );
    const text = Buffer.from(serialize("json", b)).toString();
    expect(text).toBe('{"n":[9223372036854775807,-9223372036854775808,0]}');
    const back = deserialize("json", serialize("json", b), b.specs());
    expect(back.get("n").bigints()).toEqual([2n ** 63n - 1n, -(2n ** 63n), 0n]);
  });

  it("non-finite f64 values use the bare tokens", () => {
    const b = FeatureBundle.of(
      TensorValue.fromNumbers("v", "f64", [3], [NaN, Infinity, -Infinity]),
    );
    expect(Buffer.from(serialize("json", b)).toString()).toBe(
      '{"v":[NaN,Infinity,-Infinity]}',
    );
    const back = deserialize("json", serialize("json", b), b.specs());
    const vals = back.get("v").numbers();
    expect(vals[0]).toBeNaN();
    expect(vals[1]).toBe(Infinity);
    expect(vals[2]).toBe(-Infinity);
  });

  it("tagged encoding of an empty bundle is empty", () => {
    expect(serialize("tagged", new FeatureBundle()).length).toBe(0);
  });
});

describe("round trips", () => {
  function randomish(): FeatureBundle {
    return FeatureBundle.of(
      TensorValue.fromBigInts("counts", [2, 2], [1n, -2n, 3n, -4n]),
      TensorValue.fromNumbers("x", "f32", [5], [0.1, -2.5, 3e-9, 65504, 1]),
      TensorValue.fromNumbers("y", "f64", [], [1 / 3]),
      TensorValue.fromNumbers("flags", "bool", [3], [1, 1, 0]),
      TensorValue.fromStrings("words", [2], ["", "два \\ слова"]),
      TensorValue.fromNumbers("hole", "f64", [2, 0], []),
    );
  }

  for (const kind of KINDS) {
    it(`${kind} deserialize(serialize(b)) == b`, () => {
      const b = randomish();
      expect(deserialize(kind, serialize(kind, b), b.specs()).equals(b)).toBe(true);
    });
  }

  it("self-describing formats need no specs", () => {
    const b = randomish();
    for (const kind of ["bitstream", "tagged"] as SerDesKind[]) {
      expect(deserialize(kind, serialize(kind, b)).equals(b)).toBe(true);
    }
  });

  it("json re-encode is byte-stable without specs", () => {
    // inference types f32 as f64 but the text is identical either way
    const b = randomish();
    const wire = serialize("json", b);
    const inferred = deserialize("json", wire);
    expect(hex(serialize("json", inferred))).toBe(hex(wire));
  });
});

describe("expected-spec validation", () => {
  const spec = (key: string, dtype: "i64" | "f32" | "f64" | "bool" | "str", shape: number[]): TensorSpec =>
    ({ key, dtype, shape });

  it("float token for an i64 spec is a type mismatch", () => {
    const wire = Buffer.from('{"n":1.5}');
    expect(() => deserialize("json", wire, [spec("n", "i64", [])])).toThrow(TypeMismatch);
  });

  it("int literals fill float specs", () => {
    const wire = Buffer.from('{"x":[1,2]}');
    const b = deserialize("json", wire, [spec("x", "f32", [2])]);
    expect(b.get("x").numbers()).toEqual([1, 2]);
  });

  it("missing and extra keys are malformed", () => {
    const b = FeatureBundle.of(TensorValue.fromBigInts("a", [], [1n]));
    const wire = serialize("tagged", b);
    expect(() => deserialize("tagged", wire, [spec("b", "i64", [])])).toThrow(Malformed);
    expect(() =>
      deserialize("tagged", wire, [spec("a", "i64", []), spec("b", "i64", [])]),
    ).toThrow(Malformed);
  });

  it("out-of-order features are reordered to spec order", () => {
    const b = FeatureBundle.of(
      TensorValue.fromBigInts("a", [], [1n]),
      TensorValue.fromBigInts("b", [], [2n]),
    );
    const wire = serialize("tagged", b);
    const back = deserialize("tagged", wire, [spec("b", "i64", []), spec("a", "i64", [])]);
    expect(back.keys()).toEqual(["b", "a"]);
  });

  it("duplicate keys are rejected", () => {
    expect(() => deserialize("json", Buffer.from('{"a":1,"a":2}'))).toThrow(Malformed);
  });

  it("error bundles bypass spec validation", () => {
    for (const kind of KINDS) {
      const wire = serialize(kind, errorBundle("it broke"));
      const back = deserialize(kind, wire, [spec("x", "f32", [2])]);
      expect(back.size).toBe(1);
      expect(back.get(ERROR_KEY).strs[0]).toBe("it broke");
    }
    expect(ModelError.name).toBe("ModelError");
  });

  it("truncated tagged payloads are malformed", () => {
    const wire = serialize("tagged", referenceBundle());
    for (const cut of [1, 5, wire.length - 3]) {
      expect(() => deserialize("tagged", wire.subarray(0, cut))).toThrow(Malformed);
    }
  });

  it("trailing bytes after the bitstream raw section are malformed", () => {
    const wire = serialize("bitstream", referenceBundle());
    const padded = new Uint8Array(wire.length + 1);
    padded.set(wire);
    expect(() => deserialize("bitstream", padded)).toThrow(Malformed);
  });

  it("payload sizes agree with serialize", () => {
    const b = referenceBundle();
    for (const kind of KINDS) {
      expect(payloadSize(kind, b)).toBe(serialize(kind, b).length);
    }
  });
});
