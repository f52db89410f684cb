//! Canonical hexadecimal rendering of binary64 values for bit-exact,
//! byte-diffable output: lowercase, leading digit 1 (0 only for zero),
//! shortest exact fraction, explicit `p` exponent with sign. Subnormals
//! are renormalized to the leading-1 form.

const FRAC_MASK: u64 = (1u64 << 52) - 1;

pub fn format_hex(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & FRAC_MASK;
    if biased == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (mantissa, exp) = if biased == 0 {
        // Subnormal: shift the leading bit up to position 52.
        let msb = 63 - frac.leading_zeros() as i32;
        ((frac << (52 - msb)) & FRAC_MASK, msb - 1074)
    } else {
        (frac, biased - 1023)
    };
    let digits = format!("{mantissa:013x}");
    let trimmed = digits.trim_end_matches('0');
    if trimmed.is_empty() {
        format!("{sign}0x1p{exp:+}")
    } else {
        format!("{sign}0x1.{trimmed}p{exp:+}")
    }
}
