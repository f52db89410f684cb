//! Error-free transformations for addition and multiplication, plus the
//! explicit fused-multiply-add primitive.
//!
//! These three functions are the only arithmetic building blocks the
//! reproducible code paths are allowed to use for combining values. Every
//! higher-level accumulator and kernel is a fixed-order composition of them.

/// Result/error pair returned by the error-free transformations.
///
/// For inputs in range, `result + error` reconstructs the exact real sum
/// (or product) of the operands, and `result` is the correctly rounded
/// floating-point value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EftPair {
    pub result: f64,
    pub error: f64,
}

/// Knuth two-sum: `a + b = result + error` exactly, `result = fl(a + b)`.
///
/// The four-statement sequence must not be re-associated or contracted by
/// the compiler; [`self_test`] verifies at runtime that it was not.
#[inline]
pub fn twosum(a: f64, b: f64) -> EftPair {
    let r = a + b;
    let z = r - a;
    let s = (a - (r - z)) + (b - z);
    EftPair { result: r, error: s }
}

/// Two-product via fma: `a * b = result + error` exactly (barring
/// overflow, or underflow of the error term).
#[inline]
pub fn twoprod(a: f64, b: f64) -> EftPair {
    let r = a * b;
    let s = fma_op(a, b, -r);
    EftPair { result: r, error: s }
}

/// Correctly rounded `a * b + c` with a single rounding.
///
/// Every multiply-add on a primary code path goes through this function so
/// that the rounding pattern is pinned regardless of what the optimizer
/// would otherwise do with `a * b + c` written inline.
#[inline]
pub fn fma_op(a: f64, b: f64, c: f64) -> f64 {
    a.mul_add(b, c)
}

/// Runtime check that the EFT statement sequences survived compilation.
///
/// Fails if floating-point contraction merged the twosum statements, if
/// `mul_add` is not a correctly rounded fma, or if the rounding mode is not
/// round-to-nearest-even. Library entry points call this once at startup.
pub fn self_test() -> Result<(), &'static str> {
    // twosum(1.0, 2^-60): the small operand is entirely rounding error.
    let p = twosum(1.0, 2f64.powi(-60));
    if p.result != 1.0 || p.error != 2f64.powi(-60) {
        return Err("twosum statement sequence was re-associated or contracted");
    }
    // fma must perform a single rounding: (1+2^-52)^2 - (1+2^-51) = 2^-104.
    let x = 1.0 + 2f64.powi(-52);
    if fma_op(x, x, -(1.0 + 2f64.powi(-51))) != 2f64.powi(-104) {
        return Err("mul_add is not a correctly rounded fma");
    }
    // Round-to-nearest-even: 1 + 2^-53 must tie to 1.0.
    let one = 1.0f64;
    let tie = one + 2f64.powi(-53);
    if tie != 1.0 {
        return Err("rounding mode is not round-to-nearest-even");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twosum_absorbs_small_operand() {
        let p = twosum(1.0, 2f64.powi(-60));
        assert_eq!(p.result, 1.0);
        assert_eq!(p.error, 2f64.powi(-60));
    }

    #[test]
    fn twosum_zero_is_identity() {
        for &x in &[0.0, 1.0, -3.5, 1e300, f64::from_bits(1)] {
            let p = twosum(x, 0.0);
            assert_eq!(p.result, x);
            assert_eq!(p.error, 0.0);
        }
    }

    #[test]
    fn twosum_reconstructs_exact_sum() {
        // 1 + 2^-52 + 2^-53 is not representable; the pair must carry it exactly.
        let a = 1.0 + 2f64.powi(-52);
        let b = 2f64.powi(-53);
        let p = twosum(a, b);
        // r + s == a + b exactly: verify via integer scaling by 2^53.
        let scale = 2f64.powi(53);
        assert_eq!(
            p.result * scale + p.error * scale,
            a * scale + b * scale
        );
        // Tie case rounds to even: fl(1 + 2^-52 + 2^-53) = 1 + 2^-51.
        assert_eq!(p.result, 1.0 + 2f64.powi(-51));
        assert_eq!(p.error, -2f64.powi(-53));
    }

    #[test]
    fn twoprod_exact_square() {
        let x = 1.0 + 2f64.powi(-52);
        let p = twoprod(x, x);
        assert_eq!(p.result, 1.0 + 2f64.powi(-51));
        assert_eq!(p.error, 2f64.powi(-104));
    }

    #[test]
    fn twoprod_by_one_is_exact() {
        for &x in &[1.0, -2.75, 1e200, 3.0f64.recip()] {
            let p = twoprod(x, 1.0);
            assert_eq!(p.result, x);
            assert_eq!(p.error, 0.0);
        }
    }

    #[test]
    fn twoprod_one_third() {
        let t = 1.0f64 / 3.0;
        let p = twoprod(3.0, t);
        assert_eq!(p.result, 3.0 * t);
        // 3*t = 3*t_exact where t = (2^54+2)/3 / 2^54 ... check reconstruction
        // via the fma identity instead of re-deriving the remainder by hand.
        assert_eq!(p.error, fma_op(3.0, t, -p.result));
        // The error is the exact remainder 3*t - fl(3*t), nonzero here.
        assert_ne!(p.error, 0.0);
    }

    #[test]
    fn fma_single_rounding() {
        assert_eq!(fma_op(1.0, 1.0, 1.0), 2.0);
        // 2^-106 is below the rounding unit of 1.0; one rounding keeps 1.0.
        assert_eq!(fma_op(2f64.powi(-53), 2f64.powi(-53), 1.0), 1.0);
        let x = 1.0 + 2f64.powi(-52);
        assert_eq!(fma_op(x, x, -(1.0 + 2f64.powi(-51))), 2f64.powi(-104));
    }

    #[test]
    fn self_test_passes() {
        self_test().unwrap();
    }
}
