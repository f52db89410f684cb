//! Exact reference arithmetic for the tests, kept deliberately independent
//! of the library's own accumulators. Every finite binary64 is a dyadic
//! rational, so sums live exactly in Z * 2^-1074 and dot products in
//! Z * 2^-2148; both are evaluated as big integers and rounded once at the
//! end with ties-to-even.

#![allow(dead_code)]

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};

pub const SUM_SCALE: i64 = 1074;
pub const DOT_SCALE: i64 = 2148;

fn decompose(x: f64) -> (bool, u64, i64) {
    assert!(x.is_finite(), "oracle only handles finite inputs");
    let bits = x.to_bits();
    let neg = bits >> 63 == 1;
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if biased == 0 {
        (neg, frac, -1074)
    } else {
        (neg, frac | (1u64 << 52), biased - 1075)
    }
}

/// `x * 2^1074` as an exact integer.
pub fn scaled(x: f64) -> BigInt {
    let (neg, m, e) = decompose(x);
    if m == 0 {
        return BigInt::zero();
    }
    let mag = BigInt::from(m) << (e + SUM_SCALE) as u64;
    if neg {
        -mag
    } else {
        mag
    }
}

/// Exact sum of a multiset, scaled by `2^1074`.
pub fn exact_sum(values: &[f64]) -> BigInt {
    let mut s = BigInt::zero();
    for &v in values {
        s += scaled(v);
    }
    s
}

/// Exact dot product, scaled by `2^2148`.
pub fn exact_dot(x: &[f64], y: &[f64]) -> BigInt {
    assert_eq!(x.len(), y.len());
    let mut s = BigInt::zero();
    for (&a, &b) in x.iter().zip(y) {
        let (na, ma, ea) = decompose(a);
        let (nb, mb, eb) = decompose(b);
        if ma == 0 || mb == 0 {
            continue;
        }
        let p = BigInt::from(ma as u128 * mb as u128) << (ea + eb + DOT_SCALE) as u64;
        if na != nb {
            s -= p;
        } else {
            s += p;
        }
    }
    s
}

/// Round `s * 2^-scale` to the nearest binary64, ties to even, with
/// gradual underflow and overflow to infinity.
pub fn round_scaled(s: &BigInt, scale: i64) -> f64 {
    if s.is_zero() {
        return 0.0;
    }
    let neg = s.is_negative();
    let a: BigUint = s.magnitude().clone();
    let msb_exp = a.bits() as i64 - 1 - scale;
    let target_lsb = (msb_exp - 52).max(-1074);
    let shift = target_lsb + scale;
    let mut q: BigUint;
    if shift <= 0 {
        q = a << (-shift) as u64;
    } else {
        let sh = shift as u64;
        q = &a >> sh;
        let rem = a - (&q << sh);
        let half = BigUint::one() << (sh - 1);
        let up = match rem.cmp(&half) {
            Ordering::Greater => true,
            Ordering::Equal => &q & BigUint::one() == BigUint::one(),
            Ordering::Less => false,
        };
        if up {
            q += 1u32;
        }
    }
    let mut m = u64::try_from(&q).expect("rounded mantissa fits in 64 bits");
    let mut lsb = target_lsb;
    if m == 1u64 << 53 {
        m >>= 1;
        lsb += 1;
    }
    compose(neg, m, lsb)
}

/// Build the binary64 with value `m * 2^lsb` (0 < m < 2^53).
fn compose(neg: bool, m: u64, lsb: i64) -> f64 {
    debug_assert!(m > 0 && m < (1u64 << 53));
    let sign = if neg { 1u64 << 63 } else { 0 };
    let bits = if m >= (1u64 << 52) {
        let biased = lsb + 1075;
        if biased >= 0x7ff {
            return if neg { f64::NEG_INFINITY } else { f64::INFINITY };
        }
        sign | ((biased as u64) << 52) | (m & ((1u64 << 52) - 1))
    } else {
        debug_assert_eq!(lsb, -1074);
        sign | m
    };
    f64::from_bits(bits)
}

/// Correctly rounded sum.
pub fn sum_rounded(values: &[f64]) -> f64 {
    round_scaled(&exact_sum(values), SUM_SCALE)
}

/// Correctly rounded dot product.
pub fn dot_rounded(x: &[f64], y: &[f64]) -> f64 {
    round_scaled(&exact_dot(x, y), DOT_SCALE)
}

/// A random finite f64 with mantissa from `rng` and decimal magnitude
/// roughly in `10^-range ..= 10^range`.
pub fn random_value(rng: &mut impl rand::Rng, range: i32) -> f64 {
    let m: f64 = rng.gen_range(-1.0..1.0);
    let e: i32 = rng.gen_range(-range..=range);
    let v = m * 10f64.powi(e);
    if v.is_finite() {
        v
    } else {
        m
    }
}
