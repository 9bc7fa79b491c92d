//! Rounding of power-of-two polynomials and shift-add arithmetic.
//!
//! Products of two superposition codes are sums of power-of-two terms, so a
//! dot product can be accumulated exactly and then rounded once into the
//! output layout's term/gap budget, with no wide intermediate
//! re-quantization.
//!
//! The rounding pipeline, for a magnitude with canonical terms
//! `2^n < ... < 2^m`:
//!
//! 1. runs `2^n + ... + 2^m` of length `>= B_sub + 2` become `2^(m+1)`;
//! 2. duplicate terms merge (`2^n + 2^n = 2^(n+1)`);
//! 3. while there are too many terms and `m > n + B_sub`, drop `2^n`;
//! 4. otherwise pick the nearer of dropping `2^n` or merging the two
//!    smallest terms upward, ties rounding down.
//!
//! The result always lies in `[2^M, 2^(M+1)]` for inputs in
//! `[2^M, 2^(M+1))`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coding::{BitLayout, CodeWord, Sign};
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::pow2::ceil_log2;
use crate::quantizer::{quantize_value, reconstruct, Mode};

/// `sign * Σ 2^e` over a multiset of exponents (kept ascending).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PowerPoly {
    pub sign: Sign,
    exponents: Vec<i64>,
}

impl PowerPoly {
    pub fn new(sign: Sign, exponents: impl IntoIterator<Item = i64>) -> Self {
        let mut exponents: Vec<i64> = exponents.into_iter().collect();
        exponents.sort_unstable();
        let sign = if exponents.is_empty() { Sign::Pos } else { sign };
        PowerPoly { sign, exponents }
    }

    pub fn zero() -> Self {
        PowerPoly { sign: Sign::Pos, exponents: Vec::new() }
    }

    /// Canonical polynomial of an exact value (its binary expansion).
    pub fn from_dyadic(d: &Dyadic) -> Self {
        let sign = if d.is_negative() { Sign::Neg } else { Sign::Pos };
        PowerPoly::new(sign, d.bit_exponents())
    }

    /// Flat terms of a code word: a code with `t` active subdivision fields
    /// is `t + 1` distinct powers of two.
    pub fn from_code(code: &CodeWord, power_j: i32) -> Self {
        PowerPoly::new(code.sign, code.exponents(power_j).map(i64::from))
    }

    pub fn exponents(&self) -> &[i64] {
        &self.exponents
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn value(&self) -> Dyadic {
        let mag = self.exponents.iter().fold(Dyadic::zero(), |acc, &e| &acc + &Dyadic::pow2(e));
        match self.sign {
            Sign::Pos => mag,
            Sign::Neg => -&mag,
        }
    }

    pub fn magnitude(&self) -> PowerPoly {
        PowerPoly { sign: Sign::Pos, exponents: self.exponents.clone() }
    }

    pub fn is_canonical(&self) -> bool {
        self.exponents.windows(2).all(|w| w[0] < w[1])
    }

    pub fn top(&self) -> Option<i64> {
        self.exponents.last().copied()
    }

    fn with_exponents(&self, exponents: Vec<i64>) -> Self {
        PowerPoly::new(self.sign, exponents)
    }
}

impl std::fmt::Display for PowerPoly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.sign == Sign::Neg {
            write!(f, "-")?;
        }
        let terms: Vec<String> = self.exponents.iter().rev().map(|e| format!("2^{e}")).collect();
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

/// Term and gap limits of a target layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundingBudget {
    pub max_terms: usize,
    /// Widths `B_1..B_n`; the gap between term `i-1` and term `i` (counting
    /// from the top) must be at most `2^B_i - 1`.
    pub gap_bits: Vec<u32>,
    pub b_sub: u32,
}

impl RoundingBudget {
    pub fn new(gap_bits: Vec<u32>) -> Result<Self> {
        if gap_bits.iter().any(|&b| b == 0 || b > 15) {
            return Err(Error::FieldBounds(format!("gap widths must be in 1..=15, got {gap_bits:?}")));
        }
        Ok(RoundingBudget { max_terms: gap_bits.len() + 1, b_sub: gap_bits.iter().sum(), gap_bits })
    }

    pub fn from_layout(layout: &BitLayout) -> Self {
        Self::new(layout.tier_bits().to_vec()).expect("layout fields are valid")
    }

    /// `b_sub` one-bit subdivision tiers: at most `b_sub + 1` terms, each
    /// exactly one exponent below the previous.
    pub fn unit_tiers(b_sub: u32) -> Self {
        Self::new(vec![1; b_sub as usize]).expect("unit gaps are valid")
    }

    fn max_gap(&self, i: usize) -> i64 {
        (1i64 << self.gap_bits[i]) - 1
    }

    /// Whether a canonical polynomial fits the budget.
    pub fn admits(&self, poly: &PowerPoly) -> bool {
        if !poly.is_canonical() || poly.len() > self.max_terms {
            return false;
        }
        poly.exponents
            .iter()
            .rev()
            .collect::<Vec<_>>()
            .windows(2)
            .enumerate()
            .all(|(i, w)| w[0] - w[1] <= self.max_gap(i))
    }
}

/// Merges duplicate exponents until all are distinct. Value is preserved.
pub fn canonicalize(poly: &PowerPoly) -> PowerPoly {
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for &e in &poly.exponents {
        *counts.entry(e).or_default() += 1;
    }
    let mut out = Vec::with_capacity(counts.len());
    while let Some((e, c)) = counts.pop_first() {
        if c & 1 == 1 {
            out.push(e);
        }
        if c > 1 {
            *counts.entry(e + 1).or_default() += c >> 1;
        }
    }
    poly.with_exponents(out)
}

/// Replaces each maximal run of consecutive exponents `n..=m` of length
/// `>= b_sub + 2` by `2^(m+1)`, lowest run first, re-canonicalizing after each
/// merge. Each merge adds exactly `2^n`.
pub fn merge_run(poly: &PowerPoly, b_sub: u32) -> PowerPoly {
    let min_run = b_sub as usize + 2;
    let mut cur = canonicalize(poly);
    loop {
        let e = &cur.exponents;
        let mut start = 0;
        let mut found = None;
        for i in 1..=e.len() {
            if i == e.len() || e[i] != e[i - 1] + 1 {
                if i - start >= min_run {
                    found = Some((start, i));
                    break;
                }
                start = i;
            }
        }
        let Some((s, t)) = found else { return cur };
        let top = e[t - 1];
        let mut next: Vec<i64> = e[..s].iter().chain(&e[t..]).copied().collect();
        next.push(top + 1);
        cur = canonicalize(&cur.with_exponents(next));
    }
}

/// Rounds the magnitude of `poly` into `budget`; the sign is carried through.
pub fn compress(poly: &PowerPoly, budget: &RoundingBudget) -> PowerPoly {
    let canon = canonicalize(poly);
    if canon.is_empty() || budget.admits(&canon) {
        return canon;
    }
    let target = canon.magnitude().value();
    let m = canon.top().expect("nonempty");
    // a carry past the input's leading bit leaves 2^(m+1) as the nearest
    // value at or above the bracket
    let bracket = |p: PowerPoly| match p.top() {
        Some(t) if t > m => p.with_exponents(vec![m + 1]),
        _ => p,
    };
    let mut cur = bracket(merge_run(&canon, budget.b_sub));
    while !budget.admits(&cur) {
        let e = &cur.exponents;
        let (n, top) = (e[0], e[e.len() - 1]);
        let dropped = cur.with_exponents(e[1..].to_vec());
        if cur.len() > budget.max_terms && top > n + budget.b_sub as i64 {
            cur = dropped;
            continue;
        }
        // count and gap violations imply at least two terms
        let mut merged: Vec<i64> = e[2..].to_vec();
        merged.push(e[1] + 1);
        let mut shifted = e[1..].to_vec();
        shifted.push(n + 1);
        let dist = |p: &PowerPoly| {
            let d = &p.magnitude().value() - &target;
            d.abs()
        };
        cur = [shifted, merged]
            .into_iter()
            .map(|x| bracket(merge_run(&cur.with_exponents(x), budget.b_sub)))
            .fold(dropped, |best, c| if dist(&c) < dist(&best) { c } else { best });
    }
    cur
}

/// Cross product of two polynomials: `{e_a + e_b}` with the product sign.
/// The result is generally not canonical.
pub fn multiply(a: &PowerPoly, b: &PowerPoly) -> PowerPoly {
    let exps = a.exponents.iter().flat_map(|&x| b.exponents.iter().map(move |&y| x + y));
    PowerPoly::new(a.sign.product(b.sign), exps)
}

/// Encodes a budget-satisfying polynomial into a code word of `layout` at
/// scale exponent `power_j`.
pub fn encode_poly(poly: &PowerPoly, layout: &BitLayout, power_j: i32) -> Result<CodeWord> {
    let budget = RoundingBudget::from_layout(layout);
    if !budget.admits(poly) {
        return Err(Error::InvalidArgument(format!("{poly} does not fit {layout}")));
    }
    let mut code = CodeWord::zero(layout);
    let Some(top) = poly.top() else { return Ok(code) };
    let k0 = power_j as i64 - top;
    if k0 < 1 || k0 > layout.max_code(0) as i64 {
        return Err(Error::InvalidArgument(format!(
            "leading term 2^{top} outside the basic range at scale exponent {power_j}"
        )));
    }
    code.k[0] = k0 as u16;
    for (i, w) in poly.exponents.iter().rev().collect::<Vec<_>>().windows(2).enumerate() {
        code.k[i + 1] = (w[0] - w[1]) as u16;
    }
    code.sign = poly.sign;
    Ok(code)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Accumulation {
    Exact,
    Rounded,
}

impl std::str::FromStr for Accumulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Accumulation::Exact),
            "rounded" => Ok(Accumulation::Rounded),
            other => Err(Error::InvalidArgument(format!("unknown accumulation mode {other:?}"))),
        }
    }
}

/// A row of codes sharing one layout and scale exponent.
#[derive(Debug, Clone, Copy)]
pub struct CodeRow<'a> {
    pub codes: &'a [CodeWord],
    pub layout: &'a BitLayout,
    pub power_j: i32,
}

#[derive(Debug, Clone)]
pub struct DotConfig {
    pub out_layout: BitLayout,
    pub mode: Accumulation,
    /// Output scale exponent; derived from each result when `None`.
    pub out_power: Option<i32>,
    /// Flags results whose partial sums need more bits than this, counted
    /// in units of the smallest product term plus a sign bit.
    pub accumulator_bits: Option<u32>,
}

impl DotConfig {
    pub fn new(out_layout: BitLayout, mode: Accumulation) -> Self {
        DotConfig { out_layout, mode, out_power: None, accumulator_bits: None }
    }
}

#[derive(Debug, Clone)]
pub struct DotOutput {
    /// Exact accumulated sum.
    pub exact: Dyadic,
    /// Output code under the configured layout.
    pub code: CodeWord,
    pub power_j: i32,
    /// Value the output code stands for.
    pub value: f64,
    /// Compressed polynomial (rounded mode only).
    pub rounded: Option<PowerPoly>,
    pub accumulator_bits_required: u32,
    pub overflow: bool,
}

/// Shift-add dot product of two code rows.
pub fn dot_product(w: CodeRow<'_>, a: CodeRow<'_>, cfg: &DotConfig) -> Result<DotOutput> {
    if w.codes.len() != a.codes.len() {
        return Err(Error::LengthMismatch { left: w.codes.len(), right: a.codes.len() });
    }
    let products: Vec<PowerPoly> = w
        .codes
        .iter()
        .zip(a.codes)
        .map(|(cw, ca)| {
            cw.validate(w.layout)?;
            ca.validate(a.layout)?;
            Ok(multiply(&PowerPoly::from_code(cw, w.power_j), &PowerPoly::from_code(ca, a.power_j)))
        })
        .collect::<Result<_>>()?;

    let lsb = products.iter().flat_map(|p| p.exponents.first()).copied().min().unwrap_or(0);
    let mut exact = Dyadic::zero();
    let mut widest = 0u64;
    for p in &products {
        exact = &exact + &p.value();
        if let Some(top) = exact.floor_log2() {
            widest = widest.max((top - lsb + 1) as u64);
        }
    }
    let accumulator_bits_required = widest as u32 + 1;
    let overflow = cfg.accumulator_bits.is_some_and(|b| accumulator_bits_required > b);

    let (code, power_j, value, rounded) = match cfg.mode {
        Accumulation::Exact => {
            let x = exact.to_f64();
            let p = cfg.out_power.unwrap_or(if x == 0.0 { 0 } else { ceil_log2(x.abs()) });
            let code = quantize_value(x, &cfg.out_layout, p, Mode::Floor)?;
            let v = reconstruct(&code, &cfg.out_layout, p)?;
            (code, p, v, None)
        }
        Accumulation::Rounded => {
            let poly = compress(&PowerPoly::from_dyadic(&exact), &RoundingBudget::from_layout(&cfg.out_layout));
            let v = poly.value().to_f64();
            let p = cfg.out_power.unwrap_or_else(|| poly.top().map_or(0, |t| t as i32 + 1));
            let code = match encode_poly(&poly, &cfg.out_layout, p) {
                Ok(c) => c,
                // leading term out of the basic range: clip or flush
                Err(_) => quantize_value(v, &cfg.out_layout, p, Mode::Floor)?,
            };
            let v = reconstruct(&code, &cfg.out_layout, p)?;
            (code, p, v, Some(poly))
        }
    };
    Ok(DotOutput { exact, code, power_j, value, rounded, accumulator_bits_required, overflow })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poly(e: &[i64]) -> PowerPoly {
        PowerPoly::new(Sign::Pos, e.iter().copied())
    }

    fn int(p: &PowerPoly) -> i64 {
        p.value().to_f64() as i64
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize(&poly(&[6, 6])), poly(&[7]));
        let p = poly(&[2, 3, 4, 6, 6, 8]);
        assert_eq!(int(&p), 412);
        let c = canonicalize(&p);
        assert_eq!(c, poly(&[2, 3, 4, 7, 8]));
        assert_eq!(int(&c), 412);
        assert_eq!(canonicalize(&poly(&[1, 5, 9])), poly(&[1, 5, 9]));
        // 4 * 2^0 + 2^1 = 6
        assert_eq!(canonicalize(&poly(&[0, 0, 0, 0, 1])), poly(&[1, 2]));
    }

    #[test]
    fn merge_run_examples() {
        let r = merge_run(&poly(&[2, 3, 4]), 1);
        assert_eq!(r, poly(&[5]));
        assert_eq!(int(&r) - 28, 4);
        assert_eq!(merge_run(&poly(&[2, 4, 6]), 1), poly(&[2, 4, 6]));
        let r = merge_run(&poly(&[0, 1, 2, 3]), 1);
        assert_eq!(r, poly(&[4]));
        assert_eq!(int(&r) - 15, 1);
        // a run of 3 is short enough when b_sub = 2
        assert_eq!(merge_run(&poly(&[0, 1, 2]), 2), poly(&[0, 1, 2]));
        // merging can cascade into the next run
        assert_eq!(merge_run(&poly(&[0, 1, 2, 4, 5]), 1), poly(&[6]));
    }

    #[test]
    fn compress_examples() {
        let b1 = RoundingBudget::unit_tiers(1);
        let out = compress(&poly(&[2, 3, 4, 6, 6, 8]), &b1);
        assert_eq!(out, poly(&[7, 8]));
        assert_eq!(int(&out), 384);
        assert_eq!(compress(&PowerPoly::from_dyadic(&Dyadic::from(412.0)), &b1), poly(&[7, 8]));
        assert_eq!(compress(&poly(&[7, 8]), &b1), poly(&[7, 8]));
        assert_eq!(compress(&poly(&[0, 8]), &b1), poly(&[8]));
        assert_eq!(compress(&PowerPoly::zero(), &b1), PowerPoly::zero());
        let neg = PowerPoly::new(Sign::Neg, [2, 3, 4, 6, 6, 8]);
        assert_eq!(compress(&neg, &b1), PowerPoly::new(Sign::Neg, [7, 8]));
    }

    #[test]
    fn compress_with_wide_gaps() {
        // layout tiers [2]: two terms, gap up to 3
        let b = RoundingBudget::new(vec![2]).unwrap();
        assert_eq!(b.b_sub, 2);
        assert_eq!(compress(&poly(&[5, 8]), &b), poly(&[5, 8]));
        assert_eq!(compress(&poly(&[4, 8]), &b), poly(&[8]));
        // 452 = 2^8 + 2^7 + 2^6 + 2^2 -> drop 2^2 (8 > 2 + 2), then {6,7,8}
        // sits at the boundary: 512 is nearer to 452 than 384
        assert_eq!(compress(&poly(&[2, 6, 7, 8]), &b), poly(&[9]));
    }

    #[test]
    fn multiply_examples() {
        let three = poly(&[1, 0]);
        let six = poly(&[2, 1]);
        let p = multiply(&three, &six);
        assert_eq!(p, poly(&[3, 2, 2, 1]));
        assert_eq!(canonicalize(&p), poly(&[4, 1]));
        assert_eq!(int(&p), 18);
        assert!(multiply(&three, &PowerPoly::zero()).is_empty());
        assert_eq!(multiply(&poly(&[5]), &poly(&[-3])), poly(&[2]));
        let neg = multiply(&PowerPoly::new(Sign::Neg, [1]), &poly(&[1]));
        assert_eq!(neg.value().to_f64(), -4.0);
    }

    #[test]
    fn encode_poly_roundtrip() {
        let layout = BitLayout::new(6, 3, &[2]).unwrap();
        let c = encode_poly(&poly(&[0, 1]), &layout, 2).unwrap();
        assert_eq!(c, CodeWord::new(Sign::Pos, &[1, 1]));
        assert_eq!(reconstruct(&c, &layout, 2).unwrap(), 3.0);
        assert!(encode_poly(&poly(&[0, 5]), &layout, 6).is_err());
        assert!(encode_poly(&poly(&[4]), &layout, 3).is_err());
        assert!(encode_poly(&poly(&[0]), &layout, 8).is_err());
    }

    #[test]
    fn dot_product_examples() {
        let layout = BitLayout::new(6, 3, &[2]).unwrap();
        let w = [CodeWord::new(Sign::Pos, &[1, 1])]; // 3 at power 2
        let a = [CodeWord::new(Sign::Pos, &[1, 1])]; // 6 at power 3
        let wr = CodeRow { codes: &w, layout: &layout, power_j: 2 };
        let ar = CodeRow { codes: &a, layout: &layout, power_j: 3 };
        let out = dot_product(wr, ar, &DotConfig::new(layout.clone(), Accumulation::Exact)).unwrap();
        assert_eq!(out.exact.to_f64(), 18.0);
        assert_eq!(out.value, 18.0);
        let out = dot_product(wr, ar, &DotConfig::new(layout.clone(), Accumulation::Rounded)).unwrap();
        assert_eq!(out.rounded.unwrap(), poly(&[1, 4]));
        assert_eq!(out.value, 18.0);

        let zeros = vec![CodeWord::zero(&layout); 4];
        let ones = vec![CodeWord::new(Sign::Neg, &[2, 1]); 4];
        let out = dot_product(
            CodeRow { codes: &ones, layout: &layout, power_j: 0 },
            CodeRow { codes: &zeros, layout: &layout, power_j: 0 },
            &DotConfig::new(layout.clone(), Accumulation::Rounded),
        )
        .unwrap();
        assert!(out.exact.is_zero());
        assert!(out.code.is_zero());
        assert_eq!(out.value, 0.0);

        assert!(matches!(
            dot_product(
                CodeRow { codes: &ones, layout: &layout, power_j: 0 },
                CodeRow { codes: &w, layout: &layout, power_j: 0 },
                &DotConfig::new(layout.clone(), Accumulation::Exact),
            ),
            Err(Error::LengthMismatch { left: 4, right: 1 })
        ));
    }

    #[test]
    fn accumulator_overflow_flag() {
        let layout = BitLayout::new(6, 3, &[2]).unwrap();
        let w = vec![CodeWord::new(Sign::Pos, &[1, 0]); 16];
        let row = CodeRow { codes: &w, layout: &layout, power_j: 1 };
        let mut cfg = DotConfig::new(layout.clone(), Accumulation::Exact);
        cfg.accumulator_bits = Some(5);
        // 16 products of 1 * 1: sum 16 needs 5 magnitude bits + sign
        let out = dot_product(row, row, &cfg).unwrap();
        assert_eq!(out.accumulator_bits_required, 6);
        assert!(out.overflow);
        cfg.accumulator_bits = Some(6);
        assert!(!dot_product(row, row, &cfg).unwrap().overflow);
    }

    proptest! {
        #[test]
        fn canonicalize_preserves_value(e in proptest::collection::vec(-20i64..20, 0..30)) {
            let p = poly(&e);
            let c = canonicalize(&p);
            prop_assert!(c.is_canonical());
            prop_assert_eq!(c.value(), p.value());
        }

        #[test]
        fn multiply_preserves_value(
            a in proptest::collection::vec(-10i64..10, 0..5),
            b in proptest::collection::vec(-10i64..10, 0..5),
            neg in any::<bool>()
        ) {
            let pa = PowerPoly::new(if neg { Sign::Neg } else { Sign::Pos }, a);
            let pb = poly(&b);
            prop_assert_eq!(multiply(&pa, &pb).value(), &pa.value() * &pb.value());
        }

        #[test]
        fn compress_brackets_and_fits(x in 1u64..(1 << 40), tiers in proptest::collection::vec(1u32..4, 0..4)) {
            let budget = RoundingBudget::new(tiers).unwrap();
            let d = Dyadic::from(x as f64);
            let out = compress(&PowerPoly::from_dyadic(&d), &budget);
            prop_assert!(budget.admits(&out));
            let m = 63 - x.leading_zeros() as i64;
            let v = out.value();
            prop_assert!(v >= Dyadic::pow2(m) && v <= Dyadic::pow2(m + 1));
            prop_assert_eq!(compress(&out, &budget), out);
        }
    }
}
