//! Clipping and rounding error, measured on data and integrated against a
//! standard normal, plus the bit-allocation search built on them.
//!
//! Both error terms weight the absolute error by the magnitude of the
//! weight:
//!
//! ```text
//! E_b = E[ |w| (|w| - R)      ; |w| > R  ]
//! E_r = E[ |w| | |w| - |ŵ| |  ; |w| <= R ]
//! ```
//!
//! where `R` is the largest representable magnitude. The empirical form
//! averages over all `N` samples; the analytic form integrates over the
//! density of `|w|` for `w ~ N(0, 1)` truncated at `clip_bound`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::BitLayout;
use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::quantizer::{
    dequantize_tensor, quantize_value, representable_max, representable_set, scale_exponent, Mode, QuantizedTensor,
};
use crate::tensor::Tensor;

const CHUNK: usize = 8192;
const QUAD_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPair {
    pub clipping: f64,
    pub rounding: f64,
    /// Largest representable magnitude `R`.
    pub boundary: f64,
    /// Integration cutoff; the data's max magnitude for empirical errors.
    pub clip_bound: f64,
}

impl ErrorPair {
    pub fn objective(&self, lambda: f64) -> f64 {
        self.clipping + lambda * self.rounding
    }
}

/// Sums the two error integrands over `data` given reconstructed magnitudes.
/// Chunk partial sums are combined in order so the result does not depend on
/// thread scheduling.
fn error_sums<F>(data: &[f64], boundary: f64, recon: F) -> (f64, f64)
where
    F: Fn(usize, f64) -> f64 + Sync,
{
    let partial: Vec<(f64, f64)> = data
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            chunk.iter().enumerate().fold((0.0, 0.0), |(eb, er), (i, &w)| {
                let mag = w.abs();
                if mag > boundary {
                    (eb + mag * (mag - boundary), er)
                } else {
                    let q = recon(c * CHUNK + i, w).abs();
                    (eb, er + mag * (mag - q).abs())
                }
            })
        })
        .collect();
    partial.into_iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d))
}

/// Empirical errors of `qt` against the tensor it was quantized from.
pub fn empirical_errors(tensor: &[f64], qt: &QuantizedTensor) -> Result<ErrorPair> {
    if tensor.len() != qt.len() {
        return Err(Error::ShapeMismatch(format!(
            "tensor has {} elements, quantized tensor {}",
            tensor.len(),
            qt.len()
        )));
    }
    if tensor.is_empty() {
        return Err(Error::EmptyTensor);
    }
    let boundary = representable_max(&qt.layout, qt.power_j);
    let recon = dequantize_tensor(qt);
    let (eb, er) = error_sums(tensor, boundary, |i, _| recon[i]);
    let n = tensor.len() as f64;
    Ok(ErrorPair { clipping: eb / n, rounding: er / n, boundary, clip_bound: crate::tensor::max_abs(tensor) })
}

fn phi(w: f64) -> f64 {
    (-0.5 * w * w).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Analytic errors for a layout under a standard normal truncated at
/// `clip_bound`, with nearest-value rounding error.
pub fn analytic_errors(layout: &BitLayout, power_j: i32, clip_bound: f64) -> Result<ErrorPair> {
    analytic_errors_for_set(&representable_set(layout, power_j), clip_bound)
}

/// As [`analytic_errors`] for an arbitrary ascending set of non-negative
/// representable magnitudes (which must include 0).
pub fn analytic_errors_for_set(set: &[f64], clip_bound: f64) -> Result<ErrorPair> {
    if !clip_bound.is_finite() || clip_bound <= 0.0 {
        return Err(Error::InvalidArgument(format!("clip bound must be positive, got {clip_bound}")));
    }
    if set.is_empty() || set.windows(2).any(|w| w[0] >= w[1]) || set[0] < 0.0 {
        return Err(Error::InvalidArgument("representable set must be ascending and non-negative".into()));
    }
    let boundary = *set.last().unwrap();
    if boundary.is_nan() || boundary <= 0.0 {
        return Err(Error::InvalidArgument("representable set has no positive value".into()));
    }
    // density of |w| is 2 φ(w) on [0, ∞)
    let density = |w: f64| 2.0 * phi(w);
    let floor = 1e-300;

    let clipping = if boundary >= clip_bound {
        0.0
    } else {
        adaptive_simpson(&|w: f64| w * (w - boundary) * density(w), boundary, clip_bound, QUAD_REL_TOL * 1e-2, floor)
    };

    // nearest-value error is smooth on each half-gap
    let hi = boundary.min(clip_bound);
    let pieces: Vec<(f64, f64, f64)> = set
        .windows(2)
        .flat_map(|g| {
            let mid = 0.5 * (g[0] + g[1]);
            [(g[0], mid, g[0]), (mid, g[1], g[1])]
        })
        .filter_map(|(a, b, p)| (a < hi).then_some((a, b.min(hi), p)))
        .collect();
    let parts: Vec<f64> = pieces
        .par_iter()
        .map(|&(a, b, p)| adaptive_simpson(&|w: f64| w * (w - p).abs() * density(w), a, b, QUAD_REL_TOL * 1e-2, floor))
        .collect();
    let rounding = parts.iter().fold(0.0, |acc, x| acc + x);

    Ok(ErrorPair { clipping, rounding, boundary, clip_bound })
}

/// Every split of `data_bits` into a basic width and at most `n_max`
/// subdivision widths, each at least one bit. Ordered by tier count, then
/// descending basic width, then lexicographic tier widths.
pub fn compositions(data_bits: u32, n_max: usize) -> Vec<(u32, Vec<u32>)> {
    fn tails(bits: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 0 {
            if bits == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for b in 1..=bits.saturating_sub(parts as u32 - 1) {
            prefix.push(b);
            tails(bits - b, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for n in 0..=n_max {
        for basic in (1..=data_bits).rev() {
            let rest = data_bits - basic;
            if (n == 0) != (rest == 0) || rest < n as u32 {
                continue;
            }
            let mut t = Vec::new();
            tails(rest, n, &mut Vec::new(), &mut t);
            out.extend(t.into_iter().map(|tiers| (basic, tiers)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub layout: BitLayout,
    pub scale_offset: i32,
    pub power_j: i32,
    pub errors: ErrorPair,
    pub objective: f64,
}

impl Candidate {
    fn tie_key(&self) -> (usize, std::cmp::Reverse<u32>, i32, i32, &[u32]) {
        (
            self.layout.tiers(),
            std::cmp::Reverse(self.layout.b_basic()),
            self.scale_offset.abs(),
            self.scale_offset,
            self.layout.tier_bits(),
        )
    }

    fn better_than(&self, other: &Candidate) -> bool {
        match self.objective.total_cmp(&other.objective) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.tie_key() < other.tie_key(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub layout: BitLayout,
    pub scale_offset: i32,
    pub power_j: i32,
    pub errors: ErrorPair,
    pub objective: f64,
    pub candidates_evaluated: usize,
    pub candidates: Vec<Candidate>,
}

/// Evaluates one configuration without materializing codes.
pub fn evaluate_candidate(
    data: &[f64],
    layout: &BitLayout,
    power_j: i32,
    scale_offset: i32,
    lambda: f64,
    mode: Mode,
) -> Candidate {
    let boundary = representable_max(layout, power_j);
    let (eb, er) = error_sums(data, boundary, |_, w| {
        let code = quantize_value(w, layout, power_j, mode).expect("finite input");
        crate::quantizer::reconstruct(&code, layout, power_j).expect("valid code")
    });
    let n = data.len() as f64;
    let errors = ErrorPair { clipping: eb / n, rounding: er / n, boundary, clip_bound: crate::tensor::max_abs(data) };
    Candidate { layout: layout.clone(), scale_offset, power_j, objective: errors.objective(lambda), errors }
}

/// Exhaustive search over bit splits and scale offsets `{-1, 0, +1}`
/// minimizing `E_b + lambda * E_r`.
///
/// Ties prefer fewer tiers, then a wider basic field, then the offset
/// closest to zero.
pub fn search_layout(tensor: &Tensor, total_bits: u32, n_max: usize, lambda: f64, mode: Mode) -> Result<SearchResult> {
    if total_bits < 3 {
        return Err(Error::InvalidArgument(format!("search needs at least 3 bits, got {total_bits}")));
    }
    if tensor.is_empty() {
        return Err(Error::EmptyTensor);
    }
    tensor.check_finite()?;
    let base = match scale_exponent(tensor.data()) {
        Ok(p) => p,
        Err(Error::DegenerateTensor) => 0,
        Err(e) => return Err(e),
    };
    let configs: Vec<(BitLayout, i32)> = compositions(total_bits - 1, n_max)
        .into_iter()
        .map(|(b, tiers)| BitLayout::with_tier_cap(total_bits, b, &tiers, n_max))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|layout| [0, -1, 1].map(|d| (layout.clone(), d)))
        .collect();
    let candidates: Vec<Candidate> = configs
        .par_iter()
        .map(|(layout, d)| evaluate_candidate(tensor.data(), layout, base + d, *d, lambda, mode))
        .collect();
    let best = candidates
        .iter()
        .fold(None::<&Candidate>, |best, c| match best {
            Some(b) if !c.better_than(b) => Some(b),
            _ => Some(c),
        })
        .expect("search space is nonempty")
        .clone();
    Ok(SearchResult {
        layout: best.layout,
        scale_offset: best.scale_offset,
        power_j: best.power_j,
        errors: best.errors,
        objective: best.objective,
        candidates_evaluated: candidates.len(),
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::quantize_tensor;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn l(total: u32, b: u32, t: &[u32]) -> BitLayout {
        BitLayout::new(total, b, t).unwrap()
    }

    fn normal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn compositions_of_four_data_bits() {
        let got = compositions(4, 2);
        let want: Vec<(u32, Vec<u32>)> = vec![
            (4, vec![]),
            (3, vec![1]),
            (2, vec![2]),
            (1, vec![3]),
            (2, vec![1, 1]),
            (1, vec![1, 2]),
            (1, vec![2, 1]),
        ];
        assert_eq!(got, want);
        assert_eq!(compositions(4, 3).len(), 8);
        // 2^(d-1) compositions when nothing is capped
        assert_eq!(compositions(9, 8).len(), 256);
    }

    #[test]
    fn exact_representation_has_no_error() {
        let layout = l(6, 3, &[2]);
        let data = vec![0.75, -0.5, 0.28125, 0.0, 0.625];
        let qt = quantize_tensor(&Tensor::from_vec(data.clone()), &layout, Mode::Floor).unwrap();
        let e = empirical_errors(&data, &qt).unwrap();
        assert_eq!((e.clipping, e.rounding), (0.0, 0.0));
    }

    #[test]
    fn clipped_single_value() {
        // R = 3 = 2 + 1 under layout (3, 1, [1]) at power_j = 2
        let layout = l(3, 1, &[1]);
        let qt = crate::quantizer::quantize_with_power(&Tensor::from_vec(vec![6.0]), &layout, Mode::Floor, 2);
        let e = empirical_errors(&[6.0], &qt).unwrap();
        assert_eq!(e.boundary, 3.0);
        assert_eq!(e.clipping, 18.0);
        assert_eq!(e.rounding, 0.0);
    }

    #[test]
    fn empirical_shape_mismatch() {
        let layout = l(4, 3, &[]);
        let qt = quantize_tensor(&Tensor::from_vec(vec![1.0, 2.0]), &layout, Mode::Floor).unwrap();
        assert!(matches!(empirical_errors(&[1.0], &qt), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn empirical_clipping_non_increasing_in_boundary() {
        let data = normal(20_000, 7);
        let layout = l(5, 3, &[1]);
        let mut last = f64::INFINITY;
        for pj in -2..4 {
            let qt = crate::quantizer::quantize_with_power(&Tensor::from_vec(data.clone()), &layout, Mode::Floor, pj);
            let e = empirical_errors(&data, &qt).unwrap();
            assert!(e.clipping >= 0.0 && e.rounding >= 0.0);
            assert!(e.clipping <= last);
            last = e.clipping;
        }
    }

    #[test]
    fn analytic_empty_clip_range() {
        let e = analytic_errors(&l(6, 3, &[2]), 3, 2.0).unwrap();
        assert_eq!(e.clipping, 0.0);
        assert!(e.rounding > 0.0);
    }

    #[test]
    fn analytic_dense_set_has_small_rounding_error() {
        let set: Vec<f64> = (0..4096).map(|i| 4.0 * i as f64 / 4095.0).collect();
        let e = analytic_errors_for_set(&set, 4.0).unwrap();
        assert!(e.rounding < 1e-3, "{}", e.rounding);
        assert_eq!(e.clipping, 0.0);
    }

    #[test]
    fn analytic_clipping_matches_closed_form() {
        // ∫_R^∞ w (w - R) 2φ dw = 2[(R φ(R) + Q(R)) - R φ(R)] = 2 Q(R)
        // so with only 0 and R = 1 in the set and a far cutoff, E_b = 2 Q(1)
        let e = analytic_errors_for_set(&[0.0, 1.0], 40.0).unwrap();
        let q1 = 0.158_655_253_931_457_05;
        assert!((e.clipping - 2.0 * q1).abs() < 1e-7, "{}", e.clipping);
    }

    #[test]
    fn analytic_rejects_bad_input() {
        assert!(analytic_errors_for_set(&[0.0, 1.0], 0.0).is_err());
        assert!(analytic_errors_for_set(&[1.0, 0.0], 1.0).is_err());
        assert!(analytic_errors_for_set(&[0.0], 1.0).is_err());
    }

    #[test]
    fn search_candidate_set_for_five_bits() {
        let t = Tensor::from_vec(normal(2000, 3));
        let r = search_layout(&t, 5, 2, 1.0, Mode::Floor).unwrap();
        assert_eq!(r.candidates_evaluated, 21);
        let splits: std::collections::HashSet<String> = r.candidates.iter().map(|c| c.layout.spec_string()).collect();
        for s in ["4:", "3:1", "2:2", "2:1,1", "1:3", "1:2,1", "1:1,2"] {
            assert!(splits.contains(s), "{s}");
        }
        for c in &r.candidates {
            assert!(r.objective <= c.objective);
        }
    }

    #[test]
    fn search_on_powers_of_two_finds_zero_error_pure_layout() {
        let data: Vec<f64> = [1.0, 0.5, -0.25, 0.125, -1.0, 0.0625].to_vec();
        let r = search_layout(&Tensor::from_vec(data), 6, 3, 1.0, Mode::Floor).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.layout, l(6, 5, &[]));
        // 1.0 = 2^power_j is only reachable after raising the scale
        assert_eq!(r.scale_offset, 1);
    }

    #[test]
    fn search_is_deterministic() {
        let t = Tensor::from_vec(normal(30_000, 11));
        let a = search_layout(&t, 6, 3, 1.0, Mode::Nearest).unwrap();
        let b = search_layout(&t, 6, 3, 1.0, Mode::Nearest).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn search_rejects_narrow_width() {
        let t = Tensor::from_vec(vec![1.0]);
        assert!(search_layout(&t, 2, 3, 1.0, Mode::Floor).is_err());
    }

    #[test]
    fn search_reevaluation_agrees() {
        let t = Tensor::from_vec(normal(5000, 5));
        let r = search_layout(&t, 5, 3, 0.5, Mode::Floor).unwrap();
        let qt = crate::quantizer::quantize_with_power(&t, &r.layout, Mode::Floor, r.power_j);
        let e = empirical_errors(t.data(), &qt).unwrap();
        assert_eq!(e.objective(0.5), r.objective);
    }
}
