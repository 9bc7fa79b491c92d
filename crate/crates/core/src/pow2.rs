//! Exact power-of-two helpers on `f64`.

/// `2^e` as an `f64`, exact wherever the result is representable
/// (normal or subnormal); saturates to `0.0` / `inf` outside that range.
pub fn pow2(e: i32) -> f64 {
    if e > 1023 {
        f64::INFINITY
    } else if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else if e >= -1074 {
        f64::from_bits(1u64 << (e + 1074))
    } else {
        0.0
    }
}

/// `⌊log2 x⌋` for a positive finite `x`, computed from the bit pattern.
pub fn floor_log2(x: f64) -> i32 {
    debug_assert!(x > 0.0 && x.is_finite());
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        let mantissa = bits & ((1u64 << 52) - 1);
        63 - mantissa.leading_zeros() as i32 - 1074
    } else {
        biased - 1023
    }
}

/// `⌈log2 x⌉` for a positive finite `x`.
pub fn ceil_log2(x: f64) -> i32 {
    let fl = floor_log2(x);
    if pow2(fl) == x {
        fl
    } else {
        fl + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow2_matches_powi_in_normal_range() {
        for e in -1022..=1023 {
            assert_eq!(pow2(e), 2f64.powi(e), "e = {e}");
        }
    }

    #[test]
    fn pow2_subnormal_and_saturation() {
        assert_eq!(pow2(-1074), f64::from_bits(1));
        assert_eq!(pow2(-1075), 0.0);
        assert_eq!(pow2(1024), f64::INFINITY);
    }

    #[test]
    fn logs() {
        assert_eq!(floor_log2(1.0), 0);
        assert_eq!(floor_log2(0.3), -2);
        assert_eq!(floor_log2(6.0), 2);
        assert_eq!(floor_log2(f64::from_bits(1)), -1074);
        assert_eq!(floor_log2(f64::from_bits(3)), -1073);
        assert_eq!(ceil_log2(6.0), 3);
        assert_eq!(ceil_log2(1.0), 0);
        assert_eq!(ceil_log2(0.3), -1);
        assert_eq!(ceil_log2(8.0), 3);
        assert_eq!(ceil_log2(8.000001), 4);
    }
}
