//! Small quadrature kernels shared by the action evaluation and the oracles.

/// 4-point Gauss-Legendre abscissae on [-1, 1].
pub const GL4_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
/// 4-point Gauss-Legendre weights.
pub const GL4_W: [f64; 4] = [
    0.347_854_845_137_453_86,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_86,
];

/// Fixed 4-point Gauss-Legendre on [a, b].
pub fn gl4(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for i in 0..4 {
        s += GL4_W[i] * f(mid + half * GL4_X[i]);
    }
    half * s
}

/// Adaptive bisection built on the 4-point rule, with relative error control.
///
/// Relative control keeps the recursion pattern invariant under uniform
/// rescaling of the integrand and interval, which the blow-up action
/// identity relies on.
pub fn adaptive_gl4(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_depth: u32,
) -> f64 {
    let whole = gl4(f, a, b);
    adaptive_inner(f, a, b, whole, rel_tol, max_depth)
}

fn adaptive_inner(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
    rel_tol: f64,
    depth: u32,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = gl4(f, a, mid);
    let right = gl4(f, mid, b);
    let refined = left + right;
    if depth == 0 || (refined - whole).abs() <= rel_tol * refined.abs().max(1e-300) {
        return refined;
    }
    adaptive_inner(f, a, mid, left, rel_tol, depth - 1)
        + adaptive_inner(f, mid, b, right, rel_tol, depth - 1)
}

/// Adaptive Simpson quadrature (independent of the Gauss-Legendre path;
/// used by oracles and tests).
pub fn adaptive_simpson(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    simpson_inner(f, a, b, fa, fm, fb, simpson_rule(a, b, fa, fm, fb), tol, 48)
}

fn simpson_rule(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_inner(
    f: &mut impl FnMut(f64) -> f64,
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
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson_rule(a, m, fa, flm, fm);
    let right = simpson_rule(m, b, fm, frm, fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson_inner(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_inner(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}
