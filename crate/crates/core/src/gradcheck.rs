//! Central finite differences for validating analytic gradients.

/// Magnitude below which gradients are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    rel_error_floor(analytic, numeric, REL_FLOOR)
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_error_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for one coordinate. `f` receives
/// the perturbed vector; `x` is restored before returning.
pub fn partial(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * h)
}

/// Central difference of the projection `<w, f(x)>` along coordinate `i`.
/// Differencing each output before projecting keeps cancellation error at
/// the scale of the outputs rather than of their weighted sum.
pub fn projected_partial(
    x: &mut [f64],
    i: usize,
    h: f64,
    w: &[f64],
    mut f: impl FnMut(&[f64]) -> Vec<f64>,
) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    up.iter().zip(&down).zip(w).map(|((u, d), w)| w * (u - d)).sum::<f64>() / (2.0 * h)
}

/// Full central-difference gradient of `f` at `x`.
pub fn gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len()).map(|i| partial(&mut buf, i, h, &mut f)).collect()
}
