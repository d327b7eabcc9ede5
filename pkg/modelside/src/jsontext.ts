/* Minimal json text layer. The stock JSON object cannot hold i64 values
   losslessly, cannot emit NaN/Infinity tokens, and hides whether a number
   token was written as an integer or a float, so both directions are
   hand-rolled. Escaping matches the peer encoder: only quote, backslash
   and control characters below 0x20 are escaped; everything else is raw
   utf-8 on the wire. */

import { Malformed } from "./errors.js";
import { pyFloatRepr } from "./pyfloat.js";

export type JsonValue =
  | { kind: "int"; value: bigint }
  | { kind: "float"; value: number }
  | { kind: "bool"; value: boolean }
  | { kind: "str"; value: string }
  | { kind: "array"; value: JsonValue[] }
  | { kind: "object"; value: Map<string, JsonValue> };

const SHORT_ESCAPES: Record<number, string> = {
  0x08: "\\b",
  0x09: "\\t",
  0x0a: "\\n",
  0x0c: "\\f",
  0x0d: "\\r",
};

export function emitString(s: string): string {
  let out = '"';
  for (const ch of s) {
    const c = ch.codePointAt(0)!;
    if (ch === '"') out += '\\"';
    else if (ch === "\\") out += "\\\\";
    else if (c < 0x20) out += SHORT_ESCAPES[c] ?? `\\u${c.toString(16).padStart(4, "0")}`;
    else out += ch;
  }
  return out + '"';
}

export function emitFloat(v: number): string {
  if (Number.isNaN(v)) return "NaN";
  if (v === Infinity) return "Infinity";
  if (v === -Infinity) return "-Infinity";
  return pyFloatRepr(v);
}

export function emit(value: JsonValue): string {
  switch (value.kind) {
    case "int":
      return value.value.toString();
    case "float":
      return emitFloat(value.value);
    case "bool":
      return value.value ? "true" : "false";
    case "str":
      return emitString(value.value);
    case "array":
      return `[${value.value.map(emit).join(",")}]`;
    case "object": {
      const parts: string[] = [];
      for (const [k, v] of value.value) parts.push(`${emitString(k)}:${emit(v)}`);
      return `{${parts.join(",")}}`;
    }
  }
}

class Parser {
  private pos = 0;

  constructor(private readonly text: string) {}

  parse(): JsonValue {
    const v = this.value();
    this.ws();
    if (this.pos !== this.text.length) {
      throw new Malformed(`trailing json text at offset ${this.pos}`);
    }
    return v;
  }

  private ws(): void {
    while (this.pos < this.text.length && " \t\n\r".includes(this.text[this.pos]!)) this.pos++;
  }

  private peek(): string {
    const ch = this.text[this.pos];
    if (ch === undefined) throw new Malformed("unexpected end of json text");
    return ch;
  }

  private literal(word: string): void {
    if (this.text.startsWith(word, this.pos)) {
      this.pos += word.length;
      return;
    }
    throw new Malformed(`bad json token at offset ${this.pos}`);
  }

  private value(): JsonValue {
    this.ws();
    const ch = this.peek();
    if (ch === "{") return this.object();
    if (ch === "[") return this.array();
    if (ch === '"') return { kind: "str", value: this.string() };
    if (ch === "t") {
      this.literal("true");
      return { kind: "bool", value: true };
    }
    if (ch === "f") {
      this.literal("false");
      return { kind: "bool", value: false };
    }
    if (ch === "N") {
      this.literal("NaN");
      return { kind: "float", value: NaN };
    }
    if (ch === "I") {
      this.literal("Infinity");
      return { kind: "float", value: Infinity };
    }
    if (ch === "-" && this.text[this.pos + 1] === "I") {
      this.literal("-Infinity");
      return { kind: "float", value: -Infinity };
    }
    if (ch === "n") throw new Malformed("null is not a tensor value");
    return this.number();
  }

  private object(): JsonValue {
    this.pos++; // {
    const map = new Map<string, JsonValue>();
    this.ws();
    if (this.peek() === "}") {
      this.pos++;
      return { kind: "object", value: map };
    }
    for (;;) {
      this.ws();
      const key = this.string();
      if (map.has(key)) throw new Malformed(`duplicate key "${key}"`);
      this.ws();
      if (this.peek() !== ":") throw new Malformed(`expected ':' at offset ${this.pos}`);
      this.pos++;
      map.set(key, this.value());
      this.ws();
      const ch = this.peek();
      this.pos++;
      if (ch === "}") return { kind: "object", value: map };
      if (ch !== ",") throw new Malformed(`expected ',' at offset ${this.pos - 1}`);
    }
  }

  private array(): JsonValue {
    this.pos++; // [
    const items: JsonValue[] = [];
    this.ws();
    if (this.peek() === "]") {
      this.pos++;
      return { kind: "array", value: items };
    }
    for (;;) {
      items.push(this.value());
      this.ws();
      const ch = this.peek();
      this.pos++;
      if (ch === "]") return { kind: "array", value: items };
      if (ch !== ",") throw new Malformed(`expected ',' at offset ${this.pos - 1}`);
    }
  }

  private string(): string {
    if (this.peek() !== '"') throw new Malformed(`expected string at offset ${this.pos}`);
    this.pos++;
    let out = "";
    for (;;) {
      const ch = this.peek();
      this.pos++;
      if (ch === '"') return out;
      if (ch !== "\\") {
        if (ch.charCodeAt(0) < 0x20) {
          throw new Malformed(`raw control character at offset ${this.pos - 1}`);
        }
        out += ch;
        continue;
      }
      const esc = this.peek();
      this.pos++;
      if (esc === '"' || esc === "\\" || esc === "/") out += esc;
      else if (esc === "b") out += "\b";
      else if (esc === "f") out += "\f";
      else if (esc === "n") out += "\n";
      else if (esc === "r") out += "\r";
      else if (esc === "t") out += "\t";
      else if (esc === "u") {
        const hex = this.text.slice(this.pos, this.pos + 4);
        if (!/^[0-9a-fA-F]{4}$/.test(hex)) {
          throw new Malformed(`bad unicode escape at offset ${this.pos}`);
        }
        this.pos += 4;
        out += String.fromCharCode(parseInt(hex, 16));
      } else throw new Malformed(`bad escape \\${esc}`);
    }
  }

  private number(): JsonValue {
    const start = this.pos;
    const re = /-?(?:0|[1-9]\d*)(\.\d+)?([eE][+-]?\d+)?/y;
    re.lastIndex = start;
    const m = re.exec(this.text);
    if (m === null || m.index !== start || m[0].length === 0) {
      throw new Malformed(`bad number at offset ${start}`);
    }
    this.pos = start + m[0].length;
    const isFloat = m[1] !== undefined || m[2] !== undefined;
    if (isFloat) return { kind: "float", value: Number(m[0]) };
    return { kind: "int", value: BigInt(m[0]) };
  }
}

export function parse(text: string): JsonValue {
  return new Parser(text).parse();
}
