//! Information-loss metrics and baseline quantizers for comparison.

use serde::{Deserialize, Serialize};

use crate::coding::BitLayout;
use crate::error::{Error, Result};
use crate::quantizer::{dequantize_tensor, quantize_tensor, Mode, QuantizedTensor};
use crate::tensor::Tensor;

/// Additive smoothing on quantized-level probabilities.
pub const KL_SMOOTHING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBin {
    pub level: f64,
    /// Share of original magnitudes falling in this level's bin.
    pub original_mass: f64,
    /// Share of quantized magnitudes equal to this level.
    pub quantized_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoLossReport {
    pub kl: f64,
    pub accuracy_loss: Option<f64>,
    pub total: f64,
    pub smoothing: f64,
    pub bins: Vec<LevelBin>,
}

impl InfoLossReport {
    pub fn with_accuracy_loss(mut self, accuracy_loss: Option<f64>) -> Self {
        self.accuracy_loss = accuracy_loss;
        self.total = total_information_loss(self.kl, accuracy_loss);
        self
    }
}

/// KL divergence between the binned original magnitudes and the mass the
/// quantizer assigns to each level.
///
/// Levels are the distinct reconstructed magnitudes. Bins between positive
/// levels split at geometric midpoints; the zero level (when present) owns
/// `[0, y_1 / 2)`. The lowest bin reaches down to 0 and the highest is open
/// above.
pub fn kl_information_loss(tensor: &[f64], qt: &QuantizedTensor) -> Result<InfoLossReport> {
    if tensor.is_empty() {
        return Err(Error::EmptyTensor);
    }
    if tensor.len() != qt.len() {
        return Err(Error::ShapeMismatch(format!(
            "tensor has {} elements, quantized tensor {}",
            tensor.len(),
            qt.len()
        )));
    }
    let mut quantized: Vec<f64> = dequantize_tensor(qt).into_iter().map(f64::abs).collect();
    quantized.sort_by(f64::total_cmp);
    let mut levels: Vec<(f64, usize)> = Vec::new();
    for q in quantized {
        match levels.last_mut() {
            Some((l, c)) if *l == q => *c += 1,
            _ => levels.push((q, 1)),
        }
    }

    // upper edge of every bin but the last
    let edges: Vec<f64> = levels
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].0, w[1].0);
            if a == 0.0 {
                0.5 * b
            } else {
                (a * b).sqrt()
            }
        })
        .collect();
    let mut original = vec![0usize; levels.len()];
    for &w in tensor {
        let bin = edges.partition_point(|&e| e <= w.abs());
        original[bin] += 1;
    }

    let n = tensor.len() as f64;
    let smoothed_total = 1.0 + KL_SMOOTHING * levels.len() as f64;
    let mut kl = 0.0;
    let bins: Vec<LevelBin> = levels
        .iter()
        .zip(&original)
        .map(|(&(level, qc), &oc)| {
            let p = oc as f64 / n;
            let q = qc as f64 / n;
            if p > 0.0 {
                kl += p * (p / ((q + KL_SMOOTHING) / smoothed_total)).ln();
            }
            LevelBin { level, original_mass: p, quantized_mass: q }
        })
        .collect();
    let kl = kl.max(0.0);
    Ok(InfoLossReport { kl, accuracy_loss: None, total: kl, smoothing: KL_SMOOTHING, bins })
}

/// KL plus an externally measured accuracy drop.
pub fn total_information_loss(kl: f64, accuracy_loss: Option<f64>) -> f64 {
    kl + accuracy_loss.unwrap_or(0.0)
}

/// Symmetric integer quantization `q = round(w / scale)` clamped to
/// `[qmin, qmax]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformQuantized {
    pub scale: f64,
    pub qmin: i32,
    pub qmax: i32,
    pub levels: Vec<i32>,
    pub shape: Vec<usize>,
}

impl UniformQuantized {
    pub fn dequantize(&self) -> Vec<f64> {
        self.levels.iter().map(|&q| q as f64 * self.scale).collect()
    }
}

/// Uniform quantization at a fixed scale; values past the grid clip.
pub fn uniform_with_scale(tensor: &Tensor, scale: f64, qmin: i32, qmax: i32) -> Result<UniformQuantized> {
    tensor.check_finite()?;
    if qmin > qmax || scale < 0.0 || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("bad uniform grid: scale {scale}, [{qmin}, {qmax}]")));
    }
    let levels = tensor
        .data()
        .iter()
        .map(|&w| if scale == 0.0 { 0 } else { ((w / scale).round() as i64).clamp(qmin as i64, qmax as i64) as i32 })
        .collect();
    Ok(UniformQuantized { scale, qmin, qmax, levels, shape: tensor.shape().to_vec() })
}

/// Symmetric affine baseline: scale `max|w| / (2^(bits-1) - 1)`.
pub fn baseline_uniform(tensor: &Tensor, bits: u32) -> Result<UniformQuantized> {
    if !(2..=16).contains(&bits) {
        return Err(Error::InvalidArgument(format!("uniform baseline needs 2..=16 bits, got {bits}")));
    }
    tensor.check_finite()?;
    let qmax = (1i32 << (bits - 1)) - 1;
    let scale = tensor.max_abs() / qmax as f64;
    uniform_with_scale(tensor, scale, -qmax, qmax)
}

/// Single power-of-two baseline: all data bits in the basic field.
pub fn baseline_power_of_two(tensor: &Tensor, bits: u32, mode: Mode) -> Result<QuantizedTensor> {
    if bits < 2 {
        return Err(Error::InvalidArgument(format!("power-of-two baseline needs >= 2 bits, got {bits}")));
    }
    let layout = BitLayout::new(bits, bits - 1, &[])?;
    quantize_tensor(tensor, &layout, mode)
}

/// Signal-to-quantization-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sqnr {
    Db(f64),
    /// Exact reconstruction.
    Infinite,
}

impl Sqnr {
    pub fn db(self) -> f64 {
        match self {
            Sqnr::Db(x) => x,
            Sqnr::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for Sqnr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sqnr::Db(x) => s.serialize_f64(*x),
            Sqnr::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Sqnr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Sqnr::Db(x)),
            Raw::Str(s) if s == "inf" => Ok(Sqnr::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad SQNR value {s:?}"))),
        }
    }
}

/// `10 log10(Σ w² / Σ (w - ŵ)²)`.
pub fn sqnr(original: &[f64], reconstructed: &[f64]) -> Result<Sqnr> {
    if original.len() != reconstructed.len() {
        return Err(Error::LengthMismatch { left: original.len(), right: reconstructed.len() });
    }
    let signal: f64 = original.iter().map(|w| w * w).sum();
    if signal == 0.0 {
        return Err(Error::UndefinedMetric("SQNR of a zero signal"));
    }
    let noise: f64 = original.iter().zip(reconstructed).map(|(w, q)| (w - q).powi(2)).sum();
    Ok(if noise == 0.0 { Sqnr::Infinite } else { Sqnr::Db(10.0 * (signal / noise).log10()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_model::{empirical_errors, search_layout};
    use crate::quantizer::{quantize_with_power, representable_set};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn kl_is_zero_for_exact_reproduction() {
        let layout = BitLayout::new(6, 3, &[2]).unwrap();
        let set = representable_set(&layout, 0);
        let data: Vec<f64> =
            set.iter().chain(set.iter()).enumerate().map(|(i, &v)| if i % 2 == 0 { v } else { -v }).collect();
        let qt = quantize_tensor(&Tensor::from_vec(data.clone()), &layout, Mode::Floor).unwrap();
        let r = kl_information_loss(&data, &qt).unwrap();
        assert_eq!(r.kl, 0.0);
        for b in &r.bins {
            assert_eq!(b.original_mass, b.quantized_mass);
        }
    }

    #[test]
    fn kl_masses_sum_to_one() {
        let data = normal(50_000, 1);
        let qt = quantize_tensor(&Tensor::from_vec(data.clone()), &BitLayout::new(5, 3, &[1]).unwrap(), Mode::Floor)
            .unwrap();
        let r = kl_information_loss(&data, &qt).unwrap();
        assert!(r.kl > 0.0);
        let p: f64 = r.bins.iter().map(|b| b.original_mass).sum();
        let q: f64 = r.bins.iter().map(|b| b.quantized_mass).sum();
        assert!((p - 1.0).abs() < 1e-9 && (q - 1.0).abs() < 1e-9);
        assert!(r.bins.windows(2).all(|w| w[0].level < w[1].level));
    }

    #[test]
    fn kl_single_level() {
        let data = vec![0.0; 10];
        let qt =
            quantize_tensor(&Tensor::from_vec(data.clone()), &BitLayout::new(4, 3, &[]).unwrap(), Mode::Floor).unwrap();
        let r = kl_information_loss(&data, &qt).unwrap();
        assert_eq!(r.bins.len(), 1);
        assert_eq!(r.kl, 0.0);
    }

    #[test]
    fn kl_errors() {
        let qt =
            quantize_tensor(&Tensor::from_vec(vec![1.0]), &BitLayout::new(4, 3, &[]).unwrap(), Mode::Floor).unwrap();
        assert!(kl_information_loss(&[], &qt).is_err());
        assert!(kl_information_loss(&[1.0, 2.0], &qt).is_err());
    }

    #[test]
    fn kl_decreases_with_nested_layouts() {
        let data = normal(200_000, 9);
        let t = Tensor::from_vec(data.clone());
        let narrow = quantize_with_power(&t, &BitLayout::new(4, 2, &[1]).unwrap(), Mode::Floor, 3);
        let wide = quantize_with_power(&t, &BitLayout::new(5, 3, &[1]).unwrap(), Mode::Floor, 3);
        let small = representable_set(&narrow.layout, 3);
        let big = representable_set(&wide.layout, 3);
        assert!(small.iter().all(|v| big.contains(v)));
        let kn = kl_information_loss(&data, &narrow).unwrap().kl;
        let kw = kl_information_loss(&data, &wide).unwrap().kl;
        assert!(kw <= kn, "{kw} > {kn}");
    }

    #[test]
    fn table_arithmetic() {
        assert!((total_information_loss(0.014, Some(-0.001)) - 0.013).abs() < 1e-12);
        assert!((total_information_loss(0.004, Some(3.23)) - 3.234).abs() < 1e-12);
        assert_eq!(total_information_loss(0.25, None), 0.25);
    }

    #[test]
    fn uniform_examples() {
        // two-bit unsigned grid [0, 3] at unit scale clips 6 to 3
        let q = uniform_with_scale(&Tensor::from_vec(vec![6.0, 0.0, 1.4]), 1.0, 0, 3).unwrap();
        assert_eq!(q.levels, vec![3, 0, 1]);
        let z = baseline_uniform(&Tensor::from_vec(vec![0.0, 0.0]), 4).unwrap();
        assert_eq!(z.dequantize(), vec![0.0, 0.0]);
        let grid = Tensor::from_vec(vec![-7.0, -3.0, 0.0, 2.0, 7.0]);
        let g = baseline_uniform(&grid, 4).unwrap();
        assert_eq!(g.scale, 1.0);
        assert_eq!(g.dequantize(), grid.data());
        assert!(baseline_uniform(&grid, 1).is_err());
    }

    #[test]
    fn power_of_two_examples() {
        let six = Tensor::from_vec(vec![6.0]);
        for mode in [Mode::Floor, Mode::Nearest] {
            let q = baseline_power_of_two(&six, 3, mode).unwrap();
            let v = dequantize_tensor(&q)[0];
            assert!(v == 4.0 || v == 8.0, "{v}");
        }
        let pows = Tensor::from_vec(vec![1.0, -0.5, 0.125, 0.0]);
        let q = baseline_power_of_two(&pows, 5, Mode::Floor).unwrap();
        // the maximum 2^power_j itself sits one step above the top basis value
        assert_eq!(dequantize_tensor(&q), vec![0.5, -0.5, 0.125, 0.0]);
    }

    #[test]
    fn power_of_two_never_beats_search() {
        let t = Tensor::from_vec(normal(50_000, 4));
        let pure = baseline_power_of_two(&t, 5, Mode::Floor).unwrap();
        let e = empirical_errors(t.data(), &pure).unwrap();
        let best = search_layout(&t, 5, 3, 1.0, Mode::Floor).unwrap();
        assert!(e.clipping + e.rounding >= best.objective);
    }

    #[test]
    fn sqnr_cases() {
        assert_eq!(sqnr(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), Sqnr::Infinite);
        assert_eq!(sqnr(&[1.0, -2.0], &[0.0, 0.0]).unwrap(), Sqnr::Db(0.0));
        assert!(matches!(sqnr(&[0.0], &[1.0]), Err(Error::UndefinedMetric(_))));
        assert!(sqnr(&[1.0], &[]).is_err());
        // independent recomputation via the mean-square form
        let w = normal(1000, 2);
        let q: Vec<f64> = w.iter().map(|x| (x * 4.0).round() / 4.0).collect();
        let ps = w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
        let pn = w.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / w.len() as f64;
        let want = 10.0 * ps.log10() - 10.0 * pn.log10();
        assert!((sqnr(&w, &q).unwrap().db() - want).abs() < 1e-9);
        assert_eq!(serde_json::to_string(&Sqnr::Infinite).unwrap(), "\"inf\"");
        assert_eq!(serde_json::from_str::<Sqnr>("12.5").unwrap(), Sqnr::Db(12.5));
    }
}
