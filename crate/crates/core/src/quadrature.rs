//! Adaptive Simpson quadrature in one and two dimensions.

const MAX_DEPTH: u32 = 48;

/// `∫_a^b f` to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    refine(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &dyn Fn(f64) -> f64,
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
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `∫∫ f` over `[x0, x1] × [y0, y1]` with relative tolerance `rel_tol`.
pub fn integrate_box(f: &dyn Fn(f64, f64) -> f64, x0: f64, x1: f64, y0: f64, y1: f64, rel_tol: f64) -> f64 {
    if x0 == x1 || y0 == y1 {
        return 0.0;
    }
    // A coarse estimate sets the absolute scale for the adaptive passes.
    let n = 16;
    let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let coarse: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| f(x0 + (i as f64 + 0.5) * dx, y0 + (j as f64 + 0.5) * dy).abs())
        .sum::<f64>()
        * dx
        * dy;
    let tol = rel_tol * coarse.max(f64::MIN_POSITIVE);
    let inner_tol = 0.1 * tol / (x1 - x0);
    let row = |x: f64| integrate(&|y| f(x, y), y0, y1, inner_tol);
    integrate(&row, x0, x1, 0.5 * tol)
}
