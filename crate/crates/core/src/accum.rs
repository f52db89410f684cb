//! The two accumulation substrates behind the reproducible reductions:
//! floating-point expansions with early exit (the lightweight path) and the
//! long fixed-point accumulator (the exact path), plus correctly-rounded
//! conversion back to binary64.

use crate::eft::{twoprod, twosum};

/// Payload bits per accumulator digit.
pub const SUPERACC_W: u32 = 52;
/// Carry-safe headroom bits per digit.
pub const SUPERACC_C: u32 = 12;
/// Digit count. 43 digits of 52 bits span bit positions -1126..1109,
/// covering every finite binary64 (positions -1074..1023) with one guard
/// digit at each end.
pub const SUPERACC_NDIGITS: usize = 43;
/// Digit `i` has weight `2^(52*i - SUPERACC_OFFSET)`.
pub const SUPERACC_OFFSET: i32 = 1126;

/// Accumulations tolerated between normalizations: `2^(C-1)`.
const NORMALIZE_EVERY: u32 = 1 << (SUPERACC_C - 1);

const DIGIT_MASK: i64 = (1i64 << SUPERACC_W) - 1;

/// Default expansion length, `8 * 52` bits of working precision.
pub const FPE_DEFAULT_LIMBS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AccumError {
    /// The expansion could not capture a contribution exactly; its rounded
    /// value would be untrustworthy. Callers fall back to the exact path.
    #[error("floating-point expansion overflowed; switch to the long-accumulator path")]
    FpeOverflow,
}

/// Fixed-length floating-point expansion: an unevaluated sum of `p`
/// binary64 limbs ordered by decreasing magnitude, maintained by twosum
/// cascades. While `overflowed` is false the exact accumulated value equals
/// the real-number sum of the limbs.
#[derive(Debug, Clone, PartialEq)]
pub struct Fpe {
    limbs: Vec<f64>,
    overflowed: bool,
}

impl Default for Fpe {
    fn default() -> Self {
        Self::new(FPE_DEFAULT_LIMBS)
    }
}

impl Fpe {
    pub fn new(p: usize) -> Self {
        assert!(p >= 1, "expansion needs at least one limb");
        Fpe { limbs: vec![0.0; p], overflowed: false }
    }

    pub fn limbs(&self) -> &[f64] {
        &self.limbs
    }

    pub fn overflowed(&self) -> bool {
        self.overflowed
    }

    /// Insert `x` by a twosum cascade down the limbs, early-exiting when
    /// the carried error reaches zero. A residue surviving past the last
    /// limb marks the expansion as overflowed.
    pub fn accumulate(&mut self, x: f64) {
        let residue = self.accumulate_residue(x);
        if residue != 0.0 {
            self.overflowed = true;
        }
    }

    /// Cascade variant that hands back the surviving residue instead of
    /// raising the overflow flag; the hybrid path flushes it to a
    /// [`SuperAcc`] so no information is lost.
    pub fn accumulate_residue(&mut self, x: f64) -> f64 {
        let mut carry = x;
        for limb in &mut self.limbs {
            if carry == 0.0 {
                return 0.0;
            }
            let p = twosum(*limb, carry);
            *limb = p.result;
            carry = p.error;
        }
        carry
    }

    /// Accumulate all limbs of `other` into `self`; overflow flags OR.
    /// Exactness makes the merge order immaterial whenever no overflow
    /// occurs anywhere in the reduction tree.
    pub fn merge(&mut self, other: &Fpe) {
        for &l in &other.limbs {
            self.accumulate(l);
        }
        self.overflowed |= other.overflowed;
    }

    /// Merge that routes residues to a long accumulator (hybrid path).
    pub fn merge_with_spill(&mut self, other: &Fpe, spill: &mut SuperAcc) {
        for &l in &other.limbs {
            let residue = self.accumulate_residue(l);
            if residue != 0.0 {
                spill.accumulate(residue);
            }
        }
    }

    /// Correctly-rounded (nearest-even) binary64 of the exact limb sum.
    ///
    /// Cascades the limbs from smallest to largest with round-to-odd
    /// additions so the sticky information survives into the final
    /// round-to-nearest step (the NearSum discrimination of the tie).
    pub fn round_nearsum(&self) -> Result<f64, AccumError> {
        if self.overflowed {
            return Err(AccumError::FpeOverflow);
        }
        let mut acc = 0.0f64;
        for &l in self.limbs.iter().skip(1).rev() {
            acc = add_round_odd(acc, l);
        }
        Ok(self.limbs[0] + acc)
    }

    /// Exact transfer of every limb into `target`.
    pub fn flush_to_superacc(&self, target: &mut SuperAcc) {
        for &l in &self.limbs {
            if l != 0.0 {
                target.accumulate(l);
            }
        }
    }
}

/// `x + y` rounded to odd: exact results pass through; inexact ones snap to
/// the neighbour with an odd last mantissa bit, in the direction of the
/// discarded error.
fn add_round_odd(x: f64, y: f64) -> f64 {
    let p = twosum(x, y);
    if p.error == 0.0 || p.result.to_bits() & 1 == 1 {
        p.result
    } else if p.error > 0.0 {
        p.result.next_up()
    } else {
        p.result.next_down()
    }
}

/// Long fixed-point accumulator: 43 signed 64-bit digits of 52 payload
/// bits each, spanning the full binary64 exponent range. Accumulation of
/// any finite binary64 is exact, so addition of accumulators is
/// associative and commutative, and rounding the final state is the
/// correctly-rounded exact sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperAcc {
    digits: [i64; SUPERACC_NDIGITS],
    /// Accumulations absorbed since the last normalization; bounds digit
    /// magnitude below the carry-safe limit.
    pending: u32,
}

impl Default for SuperAcc {
    fn default() -> Self {
        Self::new()
    }
}

impl SuperAcc {
    pub fn new() -> Self {
        SuperAcc { digits: [0; SUPERACC_NDIGITS], pending: 0 }
    }

    pub fn digits(&self) -> &[i64; SUPERACC_NDIGITS] {
        &self.digits
    }

    /// Split the significand of `x` across the digit windows and add the
    /// pieces as integers. Exact for every finite binary64.
    pub fn accumulate(&mut self, x: f64) {
        assert!(x.is_finite(), "only finite values can be accumulated");
        if x == 0.0 {
            return;
        }
        if self.pending >= NORMALIZE_EVERY - 1 {
            self.normalize();
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        // Bit position of the mantissa LSB, re-based to the window origin.
        let pos = exp + SUPERACC_OFFSET;
        let d0 = (pos / SUPERACC_W as i32) as usize;
        let shift = (pos % SUPERACC_W as i32) as u32;
        // mantissa < 2^53 and shift <= 51, so the shifted value fits 104 bits.
        let v = (mantissa as u128) << shift;
        let lo = (v as i64) & DIGIT_MASK;
        let hi = (v >> SUPERACC_W) as i64;
        if negative {
            self.digits[d0] -= lo;
            self.digits[d0 + 1] -= hi;
        } else {
            self.digits[d0] += lo;
            self.digits[d0 + 1] += hi;
        }
        self.pending += 1;
    }

    /// Digit-wise integer addition; exact. Normalizes first when the
    /// combined carry-safe headroom would be exhausted.
    pub fn add(&mut self, other: &SuperAcc) {
        let mut rhs_norm;
        let rhs = if self.pending + other.pending >= NORMALIZE_EVERY - 1 {
            self.normalize();
            rhs_norm = other.clone();
            rhs_norm.normalize();
            &rhs_norm
        } else {
            other
        };
        for (d, o) in self.digits.iter_mut().zip(rhs.digits.iter()) {
            *d += o;
        }
        self.pending += rhs.pending.max(1);
    }

    /// Carry-propagate into the canonical form: every digit below the top
    /// lies in `[0, 2^52)`, the top digit carries the sign. Two normalized
    /// accumulators are equal iff their digits are equal.
    pub fn normalize(&mut self) {
        let mut carry: i64 = 0;
        let last = SUPERACC_NDIGITS - 1;
        for d in &mut self.digits[..last] {
            let v = *d + carry;
            carry = v >> SUPERACC_W;
            *d = v - (carry << SUPERACC_W);
        }
        self.digits[last] += carry;
        self.pending = 1;
    }

    pub fn is_zero(&self) -> bool {
        let mut n = self.clone();
        n.normalize();
        n.digits.iter().all(|&d| d == 0)
    }

    /// Correctly-rounded nearest-even binary64 of the exact value. This is
    /// the exact oracle for every sum of binary64 values in the repo.
    /// Values beyond the binary64 range round to the signed infinity.
    pub fn round(&self) -> f64 {
        let mut n = self.clone();
        n.normalize();
        let negative = n.digits[SUPERACC_NDIGITS - 1] < 0;
        if negative {
            for d in &mut n.digits {
                *d = -*d;
            }
            n.normalize();
        }
        let sign = if negative { -1.0 } else { 1.0 };
        // Topmost nonzero digit.
        let Some(top) = n.digits.iter().rposition(|&d| d != 0) else {
            return 0.0;
        };
        // Gather enough high bits into a u128 window; anything below
        // contributes only to the sticky bit.
        let mut acc = n.digits[top] as u128;
        let mut base = top;
        while base > 0 && acc < 1u128 << 54 {
            base -= 1;
            acc = (acc << SUPERACC_W) | n.digits[base] as u128;
        }
        let sticky_digits = n.digits[..base].iter().any(|&d| d != 0);
        let low_pos = SUPERACC_W as i32 * base as i32 - SUPERACC_OFFSET;
        let msb = 127 - acc.leading_zeros() as i32;
        let top_pos = low_pos + msb;
        // Target LSB position of the rounded result (subnormals bottom out
        // at 2^-1074).
        let target_lsb = (top_pos - 52).max(-1074);
        let drop = target_lsb - low_pos;
        let (mut mantissa, mut exp) = if drop <= 0 {
            // All gathered bits fit the target window exactly.
            debug_assert!(!sticky_digits);
            (acc as u64, low_pos)
        } else {
            let kept = (acc >> drop) as u64;
            let rem = acc & ((1u128 << drop) - 1);
            let round_bit = rem >> (drop - 1) & 1 == 1;
            let sticky = (rem & ((1u128 << (drop - 1)) - 1)) != 0 || sticky_digits;
            let up = round_bit && (sticky || kept & 1 == 1);
            (kept + up as u64, target_lsb)
        };
        if mantissa >> 53 != 0 {
            mantissa >>= 1;
            exp += 1;
        }
        sign * compose(mantissa, exp)
    }

    /// Digits in hex, most significant first, for bit-exact comparison.
    pub fn dump_hex(&self) -> String {
        let mut s = String::new();
        for (i, d) in self.digits.iter().enumerate().rev() {
            if i != SUPERACC_NDIGITS - 1 {
                s.push(' ');
            }
            s.push_str(&format!("{d:014x}"));
        }
        s
    }
}

/// Exact `mag * 2^exp` as binary64, `mag < 2^53`. Overflows to infinity;
/// the caller guarantees no bits fall below 2^-1074.
fn compose(mag: u64, exp: i32) -> f64 {
    if mag == 0 {
        return 0.0;
    }
    let msb = 63 - mag.leading_zeros() as i32;
    let top = msb + exp;
    if top > 1023 {
        return f64::INFINITY;
    }
    let bits = if top >= -1022 {
        let frac = (mag << (52 - msb)) & ((1u64 << 52) - 1);
        (((top + 1023) as u64) << 52) | frac
    } else {
        debug_assert!(exp + 1074 >= 0);
        mag << (exp + 1074)
    };
    f64::from_bits(bits)
}

/// Accumulate the twoprod result and error of `a * b` into the paired
/// expansions (one for results, one for errors).
pub fn fpe_accumulate_product(acc_hi: &mut Fpe, acc_lo: &mut Fpe, a: f64, b: f64) {
    let p = twoprod(a, b);
    acc_hi.accumulate(p.result);
    acc_lo.accumulate(p.error);
}

/// Hybrid variant: residues that fall off either expansion spill exactly
/// into the long accumulator.
pub fn fpe_accumulate_product_spill(
    acc_hi: &mut Fpe,
    acc_lo: &mut Fpe,
    spill: &mut SuperAcc,
    a: f64,
    b: f64,
) {
    let p = twoprod(a, b);
    let r1 = acc_hi.accumulate_residue(p.result);
    if r1 != 0.0 {
        spill.accumulate(r1);
    }
    let r2 = acc_lo.accumulate_residue(p.error);
    if r2 != 0.0 {
        spill.accumulate(r2);
    }
}
