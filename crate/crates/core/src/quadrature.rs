//! Adaptive Simpson integration.

const MAX_DEPTH: u32 = 40;
const PANELS: usize = 32;

/// Integrates `f` over `[a, b]` to a relative tolerance `rel_tol` (with
/// `abs_floor` guarding integrals that are close to zero).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // the tolerance comes from a composite pass so a single coarse sample
    // that misses the mass cannot shrink it to the floor
    let h = (b - a) / PANELS as f64;
    let panels: Vec<(f64, f64, f64, f64, f64, f64)> = (0..PANELS)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = if i + 1 == PANELS { b } else { lo + h };
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            (lo, hi, fa, fm, fb, (hi - lo) / 6.0 * (fa + 4.0 * fm + fb))
        })
        .collect();
    let coarse: f64 = panels.iter().map(|p| p.5.abs()).sum();
    let tol = (rel_tol * coarse).max(abs_floor) / PANELS as f64;
    panels.iter().map(|&(lo, hi, fa, fm, fb, whole)| refine(f, lo, hi, fa, fm, fb, whole, tol, MAX_DEPTH)).sum()
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || delta.abs() <= 1e-15 * (left + right).abs() {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
