/* Formats an f64 the way the peer's json encoder does: shortest
   round-trip digits, fixed notation for exponents in [-4, 16), otherwise
   scientific with a signed two-digit-minimum exponent, and a trailing
   ".0" on integral fixed-notation values.

   Number.prototype.toString already yields the shortest round-trip digit
   string; only the presentation rules differ, so the digits are lifted
   out and re-dressed. */

export function pyFloatRepr(v: number): string {
  if (Number.isNaN(v)) return "nan";
  if (v === Infinity) return "inf";
  if (v === -Infinity) return "-inf";
  if (v === 0) return Object.is(v, -0) ? "-0.0" : "0.0";

  const neg = v < 0;
  const s = Math.abs(v).toString();

  let digits: string;
  let exp: number; // value == d.igits * 10^exp
  const e = s.indexOf("e");
  if (e >= 0) {
    const mant = s.slice(0, e);
    exp = parseInt(s.slice(e + 1), 10);
    digits = mant.replace(".", "");
  } else {
    const dot = s.indexOf(".");
    if (dot < 0) {
      digits = s;
      exp = s.length - 1;
    } else {
      const whole = s.slice(0, dot);
      const frac = s.slice(dot + 1);
      if (whole === "0") {
        let lead = 0;
        while (lead < frac.length && frac[lead] === "0") lead++;
        digits = frac.slice(lead);
        exp = -lead - 1;
      } else {
        digits = whole + frac;
        exp = whole.length - 1;
      }
    }
  }
  digits = digits.replace(/0+$/, "");
  if (digits === "") digits = "0";

  let body: string;
  if (exp >= 16 || exp < -4) {
    const head = digits[0]!;
    const tail = digits.slice(1);
    const mant = tail ? `${head}.${tail}` : head;
    const sign = exp < 0 ? "-" : "+";
    const mag = String(Math.abs(exp)).padStart(2, "0");
    body = `${mant}e${sign}${mag}`;
  } else if (exp >= digits.length - 1) {
    body = digits + "0".repeat(exp - digits.length + 1) + ".0";
  } else if (exp >= 0) {
    body = `${digits.slice(0, exp + 1)}.${digits.slice(exp + 1)}`;
  } else {
    body = `0.${"0".repeat(-exp - 1)}${digits}`;
  }
  return neg ? `-${body}` : body;
}
