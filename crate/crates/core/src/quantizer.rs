//! Per-tensor scale exponent, basis pre-conversion and greedy superposition
//! quantization.
//!
//! A magnitude `|w|` is approximated as `v_0 (1 + v_1 (1 + v_2 (1 + ...)))`
//! where every `v_i` is a power of two drawn from its field's basis. The
//! greedy selection picks, tier by tier, the largest basis value not above
//! the running remainder; with power-of-two bases this yields the largest
//! representable magnitude `<= |w|`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{BitLayout, CodeWord, PowerBasis, Sign};
use crate::error::{Error, Result};
use crate::pow2::{ceil_log2, floor_log2, pow2};
use crate::tensor::{check_finite, max_abs, OriginStats, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Floor,
    Nearest,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "floor" => Ok(Mode::Floor),
            "nearest" => Ok(Mode::Nearest),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

/// `⌈log2 max|w|⌉`.
pub fn scale_exponent(values: &[f64]) -> Result<i32> {
    if values.is_empty() {
        return Err(Error::EmptyTensor);
    }
    check_finite(values)?;
    let m = max_abs(values);
    if m == 0.0 {
        return Err(Error::DegenerateTensor);
    }
    Ok(ceil_log2(m))
}

/// Shifts an unshifted basic-field basis by `power_j`.
pub fn preconvert(basis: &PowerBasis, power_j: i32) -> Result<PowerBasis> {
    if basis.tier != 0 || basis.shift != 0 {
        return Err(Error::InvalidArgument("preconvert expects an unshifted basic-field basis".into()));
    }
    let values = basis.values.iter().enumerate().map(|(k, &v)| if k == 0 { 0.0 } else { v * pow2(power_j) }).collect();
    Ok(PowerBasis { tier: 0, values, shift: power_j })
}

/// `max(Pow_pre) <= max|W| <= 2 max(Pow_pre)`.
pub fn range_matches(max_abs: f64, power_j: i32) -> bool {
    let top = pow2(power_j - 1);
    top <= max_abs && max_abs <= 2.0 * top
}

/// Largest code `k >= 1` with `2^-k <= x`, or `None` when even `2^-max_k`
/// exceeds `x`. Values `>= 1/2` select code 1.
fn floor_code(x: f64, max_k: u16) -> Option<u16> {
    if x <= 0.0 {
        return None;
    }
    if x >= 0.5 {
        return Some(1);
    }
    let k = -floor_log2(x);
    (k <= max_k as i32).then_some(k as u16)
}

fn floor_magnitude(mag: f64, layout: &BitLayout, power_j: i32) -> CodeWord {
    let mut code = CodeWord::zero(layout);
    if mag == 0.0 {
        return code;
    }
    // basic field: 2^(power_j - k) <= mag  <=>  2^-k <= mag * 2^-power_j
    let max0 = layout.max_code(0) as i32;
    let k0 = if mag.is_infinite() {
        1
    } else {
        let k = (power_j - floor_log2(mag)).max(1);
        if k > max0 {
            return code;
        }
        k
    };
    code.k[0] = k0 as u16;
    let mut rem = mag / pow2(power_j - k0) - 1.0;
    for tier in 1..=layout.tiers() {
        match floor_code(rem, layout.max_code(tier)) {
            Some(k) => {
                code.k[tier] = k;
                // rem / 2^-k lies in [1, 2) below the clip range, so the
                // subtraction is exact
                rem = rem / pow2(-(k as i32)) - 1.0;
            }
            None => break,
        }
    }
    code
}

/// The next larger representable magnitude, if any. Sign is kept.
pub fn successor(code: &CodeWord, layout: &BitLayout) -> Option<CodeWord> {
    fn bump(k: &mut [u16], tier: usize, layout: &BitLayout) -> bool {
        if tier > layout.tiers() {
            return false;
        }
        if k[tier] == 0 {
            k[tier] = layout.max_code(tier);
            return true;
        }
        if bump(k, tier + 1, layout) {
            return true;
        }
        if k[tier] > 1 {
            k[tier] -= 1;
            k[tier + 1..].iter_mut().for_each(|x| *x = 0);
            return true;
        }
        false
    }
    let mut next = code.clone();
    bump(&mut next.k, 0, layout).then_some(next)
}

/// Quantizes one value. Magnitudes beyond the representable range clip to
/// the extremum code.
pub fn quantize_value(w: f64, layout: &BitLayout, power_j: i32, mode: Mode) -> Result<CodeWord> {
    if !w.is_finite() {
        return Err(Error::NonFinite(0));
    }
    Ok(quantize_finite(w, layout, power_j, mode))
}

fn quantize_finite(w: f64, layout: &BitLayout, power_j: i32, mode: Mode) -> CodeWord {
    let mag = w.abs();
    let mut code = floor_magnitude(mag, layout, power_j);
    if mode == Mode::Nearest {
        if let Some(up) = successor(&code, layout) {
            let lo = reconstruct_unchecked(&code, power_j);
            let hi = reconstruct_unchecked(&up, power_j);
            if hi - mag < mag - lo {
                code = up;
            }
        }
    }
    if !code.is_zero() {
        code.sign = Sign::of(w);
    }
    code
}

/// `sign * Σ_i Π_{j<=i} v_j`, i.e. the sum of the code's flat power terms.
pub fn reconstruct(code: &CodeWord, layout: &BitLayout, power_j: i32) -> Result<f64> {
    code.validate(layout)?;
    Ok(reconstruct_unchecked(code, power_j))
}

fn reconstruct_unchecked(code: &CodeWord, power_j: i32) -> f64 {
    let mag = code.exponents(power_j).map(pow2).fold(0.0, |acc, x| acc + x);
    code.sign.apply(mag)
}

/// A tensor quantized with one layout and one scale exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub layout: BitLayout,
    pub power_j: i32,
    pub shape: Vec<usize>,
    pub codes: Vec<CodeWord>,
    pub mode: Mode,
    pub origin_stats: Option<OriginStats>,
}

impl QuantizedTensor {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Whether the scale exponent brackets the original tensor's maximum
    /// magnitude; `None` without origin statistics or for an all-zero origin.
    pub fn range_check(&self) -> Option<bool> {
        let stats = self.origin_stats?;
        let m = stats.max_abs();
        (m > 0.0).then(|| range_matches(m, self.power_j))
    }

    /// Row `i` when the tensor is viewed as `[rows, last_dim]`.
    pub fn row(&self, i: usize) -> &[CodeWord] {
        let cols = self.shape.last().copied().unwrap_or(self.codes.len()).max(1);
        &self.codes[i * cols..(i + 1) * cols]
    }

    pub fn validate(&self) -> Result<()> {
        let n: usize = self.shape.iter().product();
        if n != self.codes.len() {
            return Err(Error::ShapeMismatch(format!("shape {:?} vs {} codes", self.shape, self.codes.len())));
        }
        self.codes.iter().try_for_each(|c| c.validate(&self.layout))
    }
}

pub fn quantize_tensor(tensor: &Tensor, layout: &BitLayout, mode: Mode) -> Result<QuantizedTensor> {
    quantize_tensor_with_offset(tensor, layout, mode, 0)
}

/// As [`quantize_tensor`], with `offset` added to the scale exponent.
pub fn quantize_tensor_with_offset(
    tensor: &Tensor,
    layout: &BitLayout,
    mode: Mode,
    offset: i32,
) -> Result<QuantizedTensor> {
    let power_j = match scale_exponent(tensor.data()) {
        Ok(p) => p + offset,
        Err(Error::DegenerateTensor) => 0,
        Err(e) => return Err(e),
    };
    Ok(quantize_with_power(tensor, layout, mode, power_j))
}

/// Quantizes every element with an explicit scale exponent. The tensor must
/// be finite.
pub fn quantize_with_power(tensor: &Tensor, layout: &BitLayout, mode: Mode, power_j: i32) -> QuantizedTensor {
    let codes = tensor.data().par_iter().map(|&w| quantize_finite(w, layout, power_j, mode)).collect();
    QuantizedTensor {
        layout: layout.clone(),
        power_j,
        shape: tensor.shape().to_vec(),
        codes,
        mode,
        origin_stats: tensor.stats(),
    }
}

pub fn dequantize_tensor(qt: &QuantizedTensor) -> Vec<f64> {
    qt.codes.par_iter().map(|c| reconstruct_unchecked(c, qt.power_j)).collect()
}

/// Every representable non-negative magnitude, ascending, by enumerating
/// all codes.
pub fn representable_set(layout: &BitLayout, power_j: i32) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut code = CodeWord::zero(layout);
    while let Some(next) = successor(&code, layout) {
        out.push(reconstruct_unchecked(&next, power_j));
        code = next;
    }
    out.dedup();
    out
}

/// The extremum code: every field set to 1.
pub fn max_code(layout: &BitLayout) -> CodeWord {
    CodeWord { sign: Sign::Pos, k: smallvec::smallvec![1; layout.tiers() + 1] }
}

/// Largest representable magnitude `R`.
pub fn representable_max(layout: &BitLayout, power_j: i32) -> f64 {
    reconstruct_unchecked(&max_code(layout), power_j)
}
