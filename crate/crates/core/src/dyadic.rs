use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::pow2::pow2;

/// Exact dyadic rational `mantissa * 2^exp`, kept with an odd mantissa (or
/// zero with `exp = 0`) so equal values compare equal structurally.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mantissa: BigInt,
    exp: i64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Dyadic { mantissa: BigInt::zero(), exp: 0 }
    }

    pub fn pow2(e: i64) -> Self {
        Dyadic { mantissa: BigInt::from(1), exp: e }
    }

    pub fn new(mantissa: BigInt, exp: i64) -> Self {
        if mantissa.is_zero() {
            return Self::zero();
        }
        let tz = mantissa.trailing_zeros().unwrap_or(0);
        Dyadic { mantissa: mantissa >> tz, exp: exp + tz as i64 }
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exp(&self) -> i64 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa.is_negative()
    }

    pub fn abs(&self) -> Self {
        Dyadic { mantissa: self.mantissa.abs(), exp: self.exp }
    }

    /// Exponents of the set bits of `|self|`, ascending.
    pub fn bit_exponents(&self) -> Vec<i64> {
        let mag = self.mantissa.magnitude();
        (0..mag.bits()).filter(|&i| mag.bit(i)).map(|i| self.exp + i as i64).collect()
    }

    /// `⌊log2 |self|⌋`; `None` for zero.
    pub fn floor_log2(&self) -> Option<i64> {
        (!self.is_zero()).then(|| self.exp + self.mantissa.magnitude().bits() as i64 - 1)
    }

    /// Nearest `f64` (saturating outside the representable range).
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.mantissa.magnitude().bits() as i64;
        // keep 64 significant bits so the mantissa converts without overflow
        let drop = (bits - 64).max(0);
        let m = (&self.mantissa >> drop as usize).to_f64().unwrap_or(f64::NAN);
        let e = self.exp + drop;
        let e = e.clamp(i32::MIN as i64 / 2, i32::MAX as i64 / 2) as i32;
        // split the scaling so intermediates stay finite where the result is
        let half = e / 2;
        m * pow2(half) * pow2(e - half)
    }

    fn aligned(a: &Dyadic, b: &Dyadic) -> (BigInt, BigInt, i64) {
        let e = a.exp.min(b.exp);
        (&a.mantissa << (a.exp - e) as usize, &b.mantissa << (b.exp - e) as usize, e)
    }
}

impl From<f64> for Dyadic {
    /// Exact conversion of a finite `f64`.
    fn from(x: f64) -> Self {
        assert!(x.is_finite(), "non-finite value has no dyadic form");
        if x == 0.0 {
            return Dyadic::zero();
        }
        let bits = x.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if biased == 0 { (frac, -1074) } else { (frac | (1u64 << 52), biased - 1075) };
        let m = BigInt::from(m);
        Dyadic::new(if x < 0.0 { -m } else { m }, e)
    }
}

impl Add for &Dyadic {
    type Output = Dyadic;

    fn add(self, rhs: &Dyadic) -> Dyadic {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let (a, b, e) = Dyadic::aligned(self, rhs);
        Dyadic::new(a + b, e)
    }
}

impl Sub for &Dyadic {
    type Output = Dyadic;

    fn sub(self, rhs: &Dyadic) -> Dyadic {
        self + &(-rhs)
    }
}

impl Neg for &Dyadic {
    type Output = Dyadic;

    fn neg(self) -> Dyadic {
        Dyadic { mantissa: -&self.mantissa, exp: self.exp }
    }
}

impl Mul for &Dyadic {
    type Output = Dyadic;

    fn mul(self, rhs: &Dyadic) -> Dyadic {
        Dyadic::new(&self.mantissa * &rhs.mantissa, self.exp + rhs.exp)
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = Dyadic::aligned(self, other);
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for Dyadic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.exp >= 0 {
            write!(f, "{}", &self.mantissa << self.exp as usize)
        } else {
            write!(f, "{}/2^{}", self.mantissa, -self.exp)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_and_arithmetic() {
        let a = Dyadic::new(BigInt::from(12), 0);
        assert_eq!((a.mantissa().clone(), a.exp()), (BigInt::from(3), 2));
        let b = Dyadic::from(0.375);
        assert_eq!(b, Dyadic::new(BigInt::from(3), -3));
        assert_eq!((&a + &b).to_f64(), 12.375);
        assert_eq!((&b - &a).to_f64(), -11.625);
        assert_eq!((&a * &b).to_f64(), 4.5);
        assert!(Dyadic::from(-1.0) < Dyadic::from(0.5));
        assert_eq!((&a - &a), Dyadic::zero());
    }

    #[test]
    fn bits_and_logs() {
        let d = Dyadic::from(412.0);
        assert_eq!(d.bit_exponents(), vec![2, 3, 4, 7, 8]);
        assert_eq!(d.floor_log2(), Some(8));
        assert_eq!(Dyadic::from(0.3).floor_log2(), Some(-2));
        assert_eq!(Dyadic::zero().floor_log2(), None);
    }

    #[test]
    fn f64_roundtrip_extremes() {
        for x in [f64::MIN_POSITIVE, f64::from_bits(1), f64::MAX, -1e-300, 3.5e200, 0.1] {
            assert_eq!(Dyadic::from(x).to_f64(), x);
        }
        assert_eq!(Dyadic::pow2(-5000).to_f64(), 0.0);
        assert_eq!(Dyadic::pow2(5000).to_f64(), f64::INFINITY);
    }
}
