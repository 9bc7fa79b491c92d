//! Bit layouts, power bases and the packed code-word bitstream.
//!
//! A code word is one sign bit followed by a *basic* field and zero or more
//! *subdivision* fields. Every field stores a power magnitude `k`; the value
//! it stands for is `2^-k` (shifted by the tensor scale exponent for the basic
//! field). Code `0` is reserved: in the basic field it is the exact value
//! zero, in a subdivision field it ends the superposition chain.
//!
//! Packed layout, per code: sign bit (1 = negative), then `k_0` MSB-first in
//! `b_basic` bits, then each `k_i` MSB-first. Codes are concatenated without
//! alignment and the stream is zero-padded to a byte boundary at the end.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::pow2::pow2;

pub const MAX_TOTAL_BITS: u32 = 16;
pub const DEFAULT_MAX_TIERS: usize = 3;

/// Partition of a code word into sign, basic and subdivision fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawLayout", into = "RawLayout")]
pub struct BitLayout {
    total_bits: u32,
    b_basic: u32,
    tier_bits: SmallVec<[u32; 4]>,
}

#[derive(Serialize, Deserialize)]
struct RawLayout {
    total_bits: u32,
    b_basic: u32,
    tier_bits: Vec<u32>,
}

impl TryFrom<RawLayout> for BitLayout {
    type Error = Error;

    fn try_from(raw: RawLayout) -> Result<Self> {
        let cap = raw.tier_bits.len();
        BitLayout::with_tier_cap(raw.total_bits, raw.b_basic, &raw.tier_bits, cap)
    }
}

impl From<BitLayout> for RawLayout {
    fn from(l: BitLayout) -> Self {
        RawLayout { total_bits: l.total_bits, b_basic: l.b_basic, tier_bits: l.tier_bits.to_vec() }
    }
}

impl BitLayout {
    /// Validated layout with at most [`DEFAULT_MAX_TIERS`] subdivision tiers.
    pub fn new(total_bits: u32, b_basic: u32, tier_bits: &[u32]) -> Result<Self> {
        Self::with_tier_cap(total_bits, b_basic, tier_bits, DEFAULT_MAX_TIERS)
    }

    pub fn with_tier_cap(total_bits: u32, b_basic: u32, tier_bits: &[u32], max_tiers: usize) -> Result<Self> {
        if b_basic < 1 {
            return Err(Error::FieldBounds("basic field needs at least 1 bit".into()));
        }
        if let Some(i) = tier_bits.iter().position(|&b| b < 1) {
            return Err(Error::FieldBounds(format!("subdivision tier {} has width 0", i + 1)));
        }
        if tier_bits.len() > max_tiers {
            return Err(Error::FieldBounds(format!(
                "{} subdivision tiers exceed the limit of {max_tiers}",
                tier_bits.len()
            )));
        }
        let tier_sum: u32 = tier_bits.iter().sum();
        if 1 + b_basic + tier_sum != total_bits {
            return Err(Error::WidthMismatch { total_bits, b_basic, tier_sum });
        }
        if total_bits > MAX_TOTAL_BITS {
            return Err(Error::FieldBounds(format!("{total_bits} bits exceed the {MAX_TOTAL_BITS}-bit limit")));
        }
        Ok(BitLayout { total_bits, b_basic, tier_bits: tier_bits.iter().copied().collect() })
    }

    /// Parse `"b:t1,t2"` (or `"b"` / `"b:"` for no tiers) against a total width.
    pub fn parse_spec(total_bits: u32, spec: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad layout spec {spec:?}, expected b:t1,t2"));
        let (basic, tiers) = match spec.split_once(':') {
            Some((b, t)) => (b, t),
            None => (spec, ""),
        };
        let b_basic = basic.trim().parse().map_err(|_| bad())?;
        let tier_bits = tiers
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        Self::with_tier_cap(total_bits, b_basic, &tier_bits, tier_bits.len())
    }

    /// Parse `"b:t1,t2"` inferring the total width.
    pub fn parse_spec_inferred(spec: &str) -> Result<Self> {
        let total = spec
            .split([':', ','])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u32>())
            .sum::<std::result::Result<u32, _>>()
            .map_err(|_| Error::InvalidArgument(format!("bad layout spec {spec:?}")))?;
        Self::parse_spec(total + 1, spec)
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn b_basic(&self) -> u32 {
        self.b_basic
    }

    pub fn tier_bits(&self) -> &[u32] {
        &self.tier_bits
    }

    /// Number of subdivision tiers `n`.
    pub fn tiers(&self) -> usize {
        self.tier_bits.len()
    }

    /// `B_sub`, the total subdivision width.
    pub fn b_sub(&self) -> u32 {
        self.tier_bits.iter().sum()
    }

    /// Width of field `tier` (0 = basic).
    pub fn field_bits(&self, tier: usize) -> Result<u32> {
        match tier {
            0 => Ok(self.b_basic),
            t if t <= self.tiers() => Ok(self.tier_bits[t - 1]),
            t => Err(Error::TierOutOfRange { tier: t, tiers: self.tiers() }),
        }
    }

    /// Largest code of field `tier`.
    pub fn max_code(&self, tier: usize) -> u16 {
        let bits = self.field_bits(tier).expect("tier in range");
        ((1u32 << bits) - 1) as u16
    }

    /// `"b:t1,t2"` form, inverse of [`BitLayout::parse_spec`].
    pub fn spec_string(&self) -> String {
        let tiers: Vec<String> = self.tier_bits.iter().map(u32::to_string).collect();
        format!("{}:{}", self.b_basic, tiers.join(","))
    }

    /// Number of bytes the packed form of `count` codes occupies.
    pub fn packed_len(&self, count: usize) -> usize {
        (count * self.total_bits as usize).div_ceil(8)
    }
}

impl std::fmt::Display for BitLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}b[{}]", self.total_bits, self.spec_string())
    }
}

/// Per-tier power basis: `values[0] = 0`, `values[k] = 2^(shift - k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerBasis {
    pub tier: usize,
    pub values: Vec<f64>,
    pub shift: i32,
}

impl PowerBasis {
    pub fn max(&self) -> f64 {
        self.values.get(1).copied().unwrap_or(0.0)
    }
}

/// Builds the basis of field `tier`. Only the basic field may be shifted.
pub fn basis(layout: &BitLayout, tier: usize, shift: i32) -> Result<PowerBasis> {
    let bits = layout.field_bits(tier)?;
    if tier > 0 && shift != 0 {
        return Err(Error::InvalidArgument(format!(
            "subdivision tier {tier} basis cannot be shifted (shift = {shift})"
        )));
    }
    let len = 1usize << bits;
    let values = std::iter::once(0.0).chain((1..len).map(|k| pow2(shift - k as i32))).collect();
    Ok(PowerBasis { tier, values, shift })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn of(x: f64) -> Self {
        if x.is_sign_negative() {
            Sign::Neg
        } else {
            Sign::Pos
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }

    pub fn product(self, other: Sign) -> Self {
        if self == other {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Sign::Pos => x,
            Sign::Neg => -x,
        }
    }
}

/// One quantized value: a sign and one power magnitude per field.
///
/// `k` always has one entry per field of the layout it belongs to; entries
/// past the end of the chain are zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CodeWord {
    pub sign: Sign,
    pub k: SmallVec<[u16; 4]>,
}

impl CodeWord {
    pub fn new(sign: Sign, k: &[u16]) -> Self {
        CodeWord { sign, k: k.iter().copied().collect() }
    }

    pub fn zero(layout: &BitLayout) -> Self {
        CodeWord { sign: Sign::Pos, k: SmallVec::from_elem(0, layout.tiers() + 1) }
    }

    pub fn is_zero(&self) -> bool {
        self.k.first().is_none_or(|&k| k == 0)
    }

    /// Number of active fields (0 for the zero code).
    pub fn chain_len(&self) -> usize {
        self.k.iter().take_while(|&&k| k != 0).count()
    }

    /// Exponents of the flat power-of-two terms this code sums to, largest
    /// first. The `i`-th exponent is `power_j - (k_0 + ... + k_i)`.
    pub fn exponents(&self, power_j: i32) -> impl Iterator<Item = i32> + '_ {
        self.k.iter().take_while(|&&k| k != 0).scan(power_j, |e, &k| {
            *e -= k as i32;
            Some(*e)
        })
    }

    pub fn validate(&self, layout: &BitLayout) -> Result<()> {
        if self.k.len() != layout.tiers() + 1 {
            return Err(Error::CodeMismatch(format!(
                "code has {} fields, layout {} has {}",
                self.k.len(),
                layout,
                layout.tiers() + 1
            )));
        }
        for (tier, &k) in self.k.iter().enumerate() {
            if k > layout.max_code(tier) {
                return Err(Error::CodeMismatch(format!(
                    "k_{tier} = {k} does not fit {} bits",
                    layout.field_bits(tier)?
                )));
            }
        }
        let chain = self.chain_len();
        if self.k[chain.min(self.k.len())..].iter().any(|&k| k != 0) {
            return Err(Error::InvalidCode(format!("nonzero field after chain terminator in {:?}", self.k)));
        }
        if chain == 0 && self.sign == Sign::Neg {
            return Err(Error::InvalidCode("negative zero".into()));
        }
        Ok(())
    }
}

/// MSB-first bit sink.
struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    fn with_capacity(bytes: usize) -> Self {
        BitWriter { bytes: Vec::with_capacity(bytes), used: 8 }
    }

    fn put(&mut self, value: u32, bits: u32) {
        for i in (0..bits).rev() {
            if self.used == 8 {
                self.bytes.push(0);
                self.used = 0;
            }
            let bit = ((value >> i) & 1) as u8;
            *self.bytes.last_mut().unwrap() |= bit << (7 - self.used);
            self.used += 1;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn take(&mut self, bits: u32) -> u32 {
        let mut v = 0u32;
        for _ in 0..bits {
            let byte = self.bytes[self.pos / 8];
            v = (v << 1) | ((byte >> (7 - self.pos % 8)) & 1) as u32;
            self.pos += 1;
        }
        v
    }
}

pub fn pack(codes: &[CodeWord], layout: &BitLayout) -> Result<Vec<u8>> {
    let mut w = BitWriter::with_capacity(layout.packed_len(codes.len()));
    for code in codes {
        code.validate(layout)?;
        w.put((code.sign == Sign::Neg) as u32, 1);
        w.put(code.k[0] as u32, layout.b_basic);
        for (&k, &bits) in code.k[1..].iter().zip(layout.tier_bits.iter()) {
            w.put(k as u32, bits);
        }
    }
    Ok(w.bytes)
}

pub fn unpack(bytes: &[u8], count: usize, layout: &BitLayout) -> Result<Vec<CodeWord>> {
    let needed = layout.packed_len(count);
    if bytes.len() < needed {
        return Err(Error::Truncated { needed, got: bytes.len() });
    }
    let mut r = BitReader { bytes, pos: 0 };
    (0..count)
        .map(|_| {
            let sign = if r.take(1) == 1 { Sign::Neg } else { Sign::Pos };
            let mut k = SmallVec::with_capacity(layout.tiers() + 1);
            k.push(r.take(layout.b_basic) as u16);
            for &bits in layout.tier_bits.iter() {
                k.push(r.take(bits) as u16);
            }
            let code = CodeWord { sign, k };
            code.validate(layout)?;
            Ok(code)
        })
        .collect()
}
