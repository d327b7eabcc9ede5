import { describe, expect, it } from "vitest";
import { pyFloatRepr } from "../src/pyfloat.js";
import { emitFloat } from "../src/jsontext.js";

function f64FromHex(hex: string): number {
  const b = Buffer.from(hex, "hex");
  return b.readDoubleBE(0);
}

function f32FromHex(hex: string): number {
  const b = Buffer.from(hex, "hex");
  return b.readFloatBE(0);
}

// frozen expected strings, produced by the peer's formatter
const F64_GOLDEN: Array<[string, string]> = [
  ["0000000000000000", "0.0"],
  ["8000000000000000", "-0.0"],
  ["3ff0000000000000", "1.0"],
  ["bff0000000000000", "-1.0"],
  ["3fe0000000000000", "0.5"],
  ["3fb999999999999a", "0.1"],
  ["3fe5555555555555", "0.6666666666666666"],
  ["3fd5555555555555", "0.3333333333333333"],
  ["40091eb851eb851f", "3.14"],
  ["4059000000000000", "100.0"],
  ["430c6bf526340000", "1000000000000000.0"],
  ["4341c37937e08000", "1e+16"],
  ["c341c37937e08000", "-1e+16"],
  ["434aa535d3d0c000", "1.5e+16"],
  ["42dc12218377de66", "123456789012345.6"],
  ["3f1a36e2eb1c432d", "0.0001"],
  ["3ee4f8b588e368f1", "1e-05"],
  ["bee9e3abe16fc70d", "-1.2345e-05"],
  ["3de49da7e361ce4c", "1.5e-10"],
  ["0000000000000001", "5e-324"],
  ["7fefffffffffffff", "1.7976931348623157e+308"],
  ["0010000000000000", "2.2250738585072014e-308"],
  ["3fd3333333333334", "0.30000000000000004"],
  ["4340000000000000", "9007199254740992.0"],
  ["4340000000000001", "9007199254740994.0"],
  ["444b1ae4d6e2ef50", "1e+21"],
  ["44852d02c7e14af6", "1.25e+22"],
  ["3e72ca5d05ea7ab3", "7e-08"],
];

// f32 bit patterns widened exactly to f64 before formatting
const F32_GOLDEN: Array<[string, string]> = [
  ["3dcccccd", "0.10000000149011612"],
  ["3eaaaaab", "0.3333333432674408"],
  ["7f7fffff", "3.4028234663852886e+38"],
  ["00800000", "1.1754943508222875e-38"],
  ["00000001", "1.401298464324817e-45"],
  ["477fe000", "65504.0"],
  ["3f800001", "1.0000001192092896"],
  ["ff7fffff", "-3.4028234663852886e+38"],
  ["4b800000", "16777216.0"],
  ["00000000", "0.0"],
  ["80000000", "-0.0"],
];

describe("pyFloatRepr", () => {
  it("matches the frozen f64 table", () => {
    for (const [hex, want] of F64_GOLDEN) {
      expect(pyFloatRepr(f64FromHex(hex)), hex).toBe(want);
    }
  });

  it("matches the frozen f32 widening table", () => {
    for (const [hex, want] of F32_GOLDEN) {
      expect(pyFloatRepr(f32FromHex(hex)), hex).toBe(want);
    }
  });

});

describe("emitFloat", () => {
  it("uses bare tokens for the non-finite values", () => {
    expect(emitFloat(NaN)).toBe("NaN");
    expect(emitFloat(Infinity)).toBe("Infinity");
    expect(emitFloat(-Infinity)).toBe("-Infinity");
  });

  it("random doubles survive format then parse exactly", () => {
    let seed = 0x2545f491;
    const next = () => {
      // xorshift, plenty for coverage
      seed ^= seed << 13;
      seed ^= seed >>> 17;
      seed ^= seed << 5;
      return (seed >>> 0) / 0xffffffff;
    };
    for (let i = 0; i < 5000; i++) {
      const mag = 10 ** Math.floor(next() * 80 - 40);
      const v = (next() * 2 - 1) * mag;
      const s = pyFloatRepr(v);
      expect(Number(s), s).toBe(v);
    }
  });
});
