//! Small complex-arithmetic helpers shared by the series and quadrature code.

use num_complex::Complex64;

/// `e^z - 1` without cancellation for small `|z|`.
pub fn cexpm1(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let half = (0.5 * y).sin();
    Complex64::new(x.exp_m1() * y.cos() - 2.0 * half * half, x.exp() * y.sin())
}

/// `a / b` by Smith's algorithm; finite whenever the quotient is, even when
/// `|b|^2` overflows.
pub fn cdiv(a: Complex64, b: Complex64) -> Complex64 {
    if b.re.abs() >= b.im.abs() {
        let r = b.im / b.re;
        let den = b.re + b.im * r;
        Complex64::new((a.re + a.im * r) / den, (a.im - a.re * r) / den)
    } else {
        let r = b.re / b.im;
        let den = b.re * r + b.im;
        Complex64::new((a.re * r + a.im) / den, (a.im * r - a.re) / den)
    }
}

/// Lower bound of `|1 + a z|` over all `a >= 0`: 1 when `Re z >= 0`,
/// otherwise the distance from `-1` to the ray through `z`.
pub fn ray_floor(z: Complex64) -> f64 {
    if z.re >= 0.0 {
        1.0
    } else {
        let r = z.norm();
        if r == 0.0 {
            1.0
        } else {
            z.im.abs() / r
        }
    }
}
