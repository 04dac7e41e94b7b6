//! Closed forms for the free (non-interacting) walk: the Green's function
//! `G0(beta, x)`, its beta-derivative, the heat kernel `P0(T, x)` with its
//! shape function `f`, the free end-to-end moment and the log-periodic limit.
//!
//! Every series is truncated by an a priori geometric bound on the remaining
//! tail, never by the size of the last term.

use std::f64::consts::E;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::LatticeParams;
use crate::numeric::{cexpm1, ray_floor};

/// Denominators closer than this to zero are reported as a pole hit.
pub const POLE_GUARD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTolerance {
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesTolerance {
    fn default() -> Self {
        Self { rel_tol: 1e-12, max_terms: 10_000 }
    }
}

impl SeriesTolerance {
    pub fn new(rel_tol: f64, max_terms: usize) -> Result<Self> {
        if !(rel_tol > 0.0) || max_terms == 0 {
            return Err(Error::InvalidParameter(format!(
                "series tolerance needs rel_tol > 0 and max_terms >= 1 (got {rel_tol}, {max_terms})"
            )));
        }
        Ok(Self { rel_tol, max_terms })
    }
}

/// A point `(beta, x)` at which to evaluate the free Green's function; `x`
/// enters only through its level `N(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenQuery {
    pub beta: Complex64,
    pub x_level: u32,
}

impl GreenQuery {
    pub fn new(beta: impl Into<Complex64>, x_level: u32) -> Self {
        Self { beta: beta.into(), x_level }
    }
}

/// `C(L) = L^2 (1 - L^{-2}) / (1 - L^{-6})`, the large-beta limit of
/// `beta^2 G0(beta, x) |x|^6`.
pub fn jump_constant(l: u32) -> f64 {
    let l = l as f64;
    l * l * (1.0 - l.powi(-2)) / (1.0 - l.powi(-6))
}

/// `sum_k L^{-2k} coef(k) / (1 + L^{2k} z)` with `|coef| <= 1`.
fn resolvent_sum(
    z: Complex64,
    l: f64,
    coef: impl Fn(usize) -> f64,
    tol: &SeriesTolerance,
) -> Result<Complex64> {
    let l2 = l * l;
    let floor = ray_floor(z);
    let zn = z.norm();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut scale = 1.0; // L^{2k}
    for k in 0..tol.max_terms {
        let denom = 1.0 + scale * z;
        if denom.norm() < POLE_GUARD {
            return Err(Error::PoleProximity { term: k, modulus: denom.norm() });
        }
        let c = coef(k);
        if c != 0.0 {
            sum += c / (scale * denom);
        }
        scale *= l2;
        // tail from k + 1 on
        let mut tail = f64::INFINITY;
        if floor > 0.0 {
            tail = 1.0 / (scale * (1.0 - 1.0 / l2) * floor);
        }
        if scale * zn >= 2.0 {
            tail = tail.min(2.0 / (scale * scale * zn * (1.0 - l2.powi(-2))));
        }
        if tail <= tol.rel_tol * sum.norm() {
            return Ok(sum);
        }
    }
    Err(Error::Divergence { max_terms: tol.max_terms })
}

/// `sum_k coef(k) / (1 + L^{2k} z)^2` with `|coef| <= 1`; diverges at `z = 0`.
fn resolvent_sq_sum(
    z: Complex64,
    l: f64,
    coef: impl Fn(usize) -> f64,
    tol: &SeriesTolerance,
) -> Result<Complex64> {
    let l2 = l * l;
    let zn = z.norm();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut scale = 1.0;
    for k in 0..tol.max_terms {
        let denom = 1.0 + scale * z;
        if denom.norm() < POLE_GUARD {
            return Err(Error::PoleProximity { term: k, modulus: denom.norm() });
        }
        sum += coef(k) / (denom * denom);
        scale *= l2;
        if scale * zn >= 2.0 {
            let tail = 4.0 / (scale * scale * zn * zn * (1.0 - l2.powi(-2)));
            if tail <= tol.rel_tol * sum.norm() {
                return Ok(sum);
            }
        }
    }
    Err(Error::Divergence { max_terms: tol.max_terms })
}

/// Free Green's function from the closed series: for `x != 0`
/// `sum_j L^{-2j} B (1 - L^{-2-2j}) / (|x|^2 (1 + beta|x|^2 L^{-2}) (1 + beta|x|^2 L^{2j}))`,
/// and for `x = 0` `sum_j L^{-2j} B / (1 + L^{2j} beta)`.
pub fn green0(p: &LatticeParams, q: GreenQuery, tol: &SeriesTolerance) -> Result<Complex64> {
    let l = p.l_f64();
    let b = p.b();
    if q.x_level == 0 {
        return resolvent_sum(q.beta, l, |_| b, tol);
    }
    let x2 = l.powi(2 * q.x_level as i32);
    let z = q.beta * x2;
    let front = 1.0 + z / (l * l);
    if front.norm() < POLE_GUARD {
        return Err(Error::PoleProximity { term: 0, modulus: front.norm() });
    }
    let series = resolvent_sum(z, l, |j| b * (1.0 - l.powi(-2 - 2 * j as i32)), tol)?;
    Ok(series / (x2 * front))
}

/// The same function from the indicator-sum representation
/// `sum_k L^{-2k} (1{|x/L^k| = 0} - L^{-4} 1{|x/L^k| <= L}) / (1 + L^{2k} beta)`.
/// Kept as an independent cross-check of [`green0`].
pub fn green0_alt(p: &LatticeParams, q: GreenQuery, tol: &SeriesTolerance) -> Result<Complex64> {
    let l = p.l_f64();
    let b = p.b();
    let level = q.x_level as usize;
    let coef = |k: usize| {
        // x/L^k vanishes once k >= N and has norm <= L once k >= N - 1
        let zero = if k >= level { 1.0 } else { 0.0 };
        let near = if k + 1 >= level { 1.0 } else { 0.0 };
        zero - near * (1.0 - b)
    };
    resolvent_sum(q.beta, l, coef, tol)
}

/// Exact term-by-term `d/d beta` of [`green0`].
pub fn green0_dbeta(p: &LatticeParams, q: GreenQuery, tol: &SeriesTolerance) -> Result<Complex64> {
    let l = p.l_f64();
    let b = p.b();
    if q.x_level == 0 {
        return Ok(-resolvent_sq_sum(q.beta, l, |_| b, tol)?);
    }
    let l2 = l * l;
    let x2 = l.powi(2 * q.x_level as i32);
    let z = q.beta * x2;
    let front = 1.0 + z / l2;
    if front.norm() < POLE_GUARD {
        return Err(Error::PoleProximity { term: 0, modulus: front.norm() });
    }
    let coef = |j: usize| b * (1.0 - l.powi(-2 - 2 * j as i32));
    let s = resolvent_sum(z, l, coef, tol)?;
    let ds = -x2 * resolvent_sq_sum(z, l, coef, tol)?;
    let prefactor = 1.0 / (x2 * front);
    let dprefactor = -1.0 / (l2 * front * front);
    Ok(dprefactor * s + prefactor * ds)
}

/// Heat-kernel shape function
/// `f(t) = sum_j L^{-4j} B (e^{-L^{-2j} t} - e^{-L^2 t})`, defined for `Re t >= 0`.
pub fn f_shape(t: Complex64, p: &LatticeParams, tol: &SeriesTolerance) -> Result<Complex64> {
    if t.re < 0.0 {
        return Err(Error::Divergence { max_terms: 0 });
    }
    let l = p.l_f64();
    let l2 = l * l;
    let l4 = l2 * l2;
    let b = p.b();
    let cap = (l2 * t.norm()).min(2.0);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut weight = b; // L^{-4j} B
    let mut a = 1.0; // L^{-2j}
    for _ in 0..tol.max_terms {
        // e^{-a t} - e^{-L^2 t} = -e^{-a t} expm1(-(L^2 - a) t)
        sum -= weight * (-a * t).exp() * cexpm1(-(l2 - a) * t);
        weight /= l4;
        a /= l2;
        let tail = cap * weight / b;
        if tail <= tol.rel_tol * sum.norm() {
            return Ok(sum);
        }
    }
    Err(Error::Divergence { max_terms: tol.max_terms })
}

/// Transition kernel `P0(T, x)` for `Re T >= 0`; `x` enters through its level.
pub fn p0(t: impl Into<Complex64>, x_level: u32, p: &LatticeParams, tol: &SeriesTolerance) -> Result<Complex64> {
    let t = t.into();
    if t.re < 0.0 {
        return Err(Error::Divergence { max_terms: 0 });
    }
    let l = p.l_f64();
    if x_level > 0 {
        let x2 = l.powi(2 * x_level as i32);
        return Ok(f_shape(t / x2, p, tol)? / (x2 * x2));
    }
    let l2 = l * l;
    let b = p.b();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut weight = b;
    let mut a = 1.0;
    for _ in 0..tol.max_terms {
        sum += weight * (-a * t).exp();
        weight /= l2 * l2;
        a /= l2;
        if weight / b <= tol.rel_tol * sum.norm() {
            return Ok(sum);
        }
    }
    Err(Error::Divergence { max_terms: tol.max_terms })
}

/// `f_alpha(t) = t^{-alpha/2} B f(t)` (principal branch).
pub fn f_alpha(t: Complex64, alpha: f64, p: &LatticeParams, tol: &SeriesTolerance) -> Result<Complex64> {
    Ok(t.powf(-0.5 * alpha) * p.b() * f_shape(t, p, tol)?)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 2), got {alpha}")))
    }
}

/// Sum of `f_alpha(T L^{-2N})` over `N >= start`, with the small-`t` tail
/// bounded by `f(t) <= L^2 |t|`.
fn f_alpha_down(
    t: Complex64,
    start: i32,
    alpha: f64,
    p: &LatticeParams,
    tol: &SeriesTolerance,
) -> Result<Complex64> {
    let l = p.l_f64();
    let ratio = l.powf(-(2.0 - alpha));
    let mut sum = Complex64::new(0.0, 0.0);
    for (i, level) in (start..).enumerate() {
        if i >= tol.max_terms {
            return Err(Error::Divergence { max_terms: tol.max_terms });
        }
        let tn = t * l.powi(-2 * level);
        sum += f_alpha(tn, alpha, p, tol)?;
        let next = tn.norm() / (l * l);
        let tail = p.b() * l * l * next.powf(1.0 - 0.5 * alpha) / (1.0 - ratio);
        if tail <= tol.rel_tol * sum.norm() {
            return Ok(sum);
        }
    }
    unreachable!()
}

/// Free end-to-end moment `E0(|omega(T)|^alpha) = T^{alpha/2} sum_{N>=1} f_alpha(T / L^{2N})`.
pub fn endtoend_free(t: f64, alpha: f64, p: &LatticeParams, tol: &SeriesTolerance) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("T must be positive, got {t}")));
    }
    Ok(endtoend_free_complex(Complex64::new(t, 0.0), alpha, p, tol)?.re)
}

/// [`endtoend_free`] continued to complex time with `Re T > 0`.
pub fn endtoend_free_complex(
    t: Complex64,
    alpha: f64,
    p: &LatticeParams,
    tol: &SeriesTolerance,
) -> Result<Complex64> {
    check_alpha(alpha)?;
    if !(t.re > 0.0) {
        return Err(Error::InvalidParameter(format!("Re T must be positive, got {t}")));
    }
    Ok(t.powf(0.5 * alpha) * f_alpha_down(t, 1, alpha, p, tol)?)
}

/// `sum_x |x|^alpha G0(beta, x)` for `0 <= alpha < 2` (with `|0|^0 = 1`), the Laplace transform
/// of the free moment. With `m |1+w| >= max(1, |w|)` on the ray of `beta`,
/// shell `N` with `|beta| L^{2N} >= L^2` contributes at most
/// `L^2 L^{(alpha-2) N} / (m^2 |beta|^2)`, which bounds the tail.
pub fn green_moment(beta: impl Into<Complex64>, alpha: f64, p: &LatticeParams, tol: &SeriesTolerance) -> Result<Complex64> {
    let beta = beta.into();
    if !(0.0..2.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must lie in [0, 2), got {alpha}")));
    }
    if beta.norm() == 0.0 {
        return Err(Error::Divergence { max_terms: tol.max_terms });
    }
    let l = p.l_f64();
    let cos = beta.arg().cos();
    let m2 = if cos >= 0.0 { 1.0 } else { 1.0 - cos.abs() };
    let ratio = l.powf(alpha - 2.0);
    let scale = l * l / (m2 * beta.norm_sqr());
    let mut sum = if alpha == 0.0 {
        green0(p, GreenQuery::new(beta, 0), tol)?
    } else {
        Complex64::new(0.0, 0.0)
    };
    for level in 1..=tol.max_terms as u32 {
        let g = green0(p, GreenQuery::new(beta, level), tol)?;
        sum += p.shell_weight(level) * l.powf(alpha * level as f64) * g;
        let next = level + 1;
        if beta.norm() * l.powi(2 * next as i32) >= l * l {
            let tail = scale * ratio.powi(next as i32) / (1.0 - ratio);
            if tail <= tol.rel_tol * sum.norm() {
                return Ok(sum);
            }
        }
    }
    Err(Error::Divergence { max_terms: tol.max_terms })
}

/// The log-periodic limit `F_alpha(T) = (sum_{j in Z} f_alpha(T / L^{2j}))^{1/alpha}`
/// of `(L^{2m} T)^{-1/2} E0(|omega(L^{2m} T)|^alpha)^{1/alpha}` as `m -> infinity`.
pub fn log_periodic_limit(t: f64, alpha: f64, p: &LatticeParams, tol: &SeriesTolerance) -> Result<f64> {
    check_alpha(alpha)?;
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("T must be positive, got {t}")));
    }
    let tc = Complex64::new(t, 0.0);
    let down = f_alpha_down(tc, 0, alpha, p, tol)?.re;
    // large-t side: f(t) <= B (1/(2 ln L) + 4/e^2) t^{-2}
    let l = p.l_f64();
    let big = p.b() * (0.5 / l.ln() + 4.0 / (E * E));
    let ratio = l.powf(-(4.0 + alpha));
    let mut up = 0.0;
    for m in 1..=tol.max_terms as i32 {
        let tm = t * l.powi(2 * m);
        up += f_alpha(Complex64::new(tm, 0.0), alpha, p, tol)?.re;
        let next = tm * l * l;
        let tail = p.b() * big * next.powf(-2.0 - 0.5 * alpha) / (1.0 - ratio);
        if tail <= tol.rel_tol * (down + up) {
            return Ok((down + up).powf(1.0 / alpha));
        }
    }
    Err(Error::Divergence { max_terms: tol.max_terms })
}

/// `beta^2 G0(beta, x) |x|^6` at a single large real `beta`; tends to `C`.
pub fn jump_constant_probe(p: &LatticeParams, x_level: u32, beta: f64, tol: &SeriesTolerance) -> Result<f64> {
    if x_level == 0 {
        return Err(Error::InvalidParameter("jump-constant probe needs x != 0".into()));
    }
    let g = green0(p, GreenQuery::new(beta, x_level), tol)?.re;
    Ok(beta * beta * g * p.l_f64().powi(6 * x_level as i32))
}

/// Jump constant from the large-beta behaviour of `G0`: the probe at `beta`
/// and `2 beta` is Richardson-extrapolated to remove the `1/beta` correction.
pub fn derive_jump_constant(p: &LatticeParams, x_level: u32, beta: f64, tol: &SeriesTolerance) -> Result<f64> {
    let a = jump_constant_probe(p, x_level, beta, tol)?;
    let b = jump_constant_probe(p, x_level, 2.0 * beta, tol)?;
    Ok(2.0 * b - a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn l2() -> LatticeParams {
        LatticeParams::new(2).unwrap()
    }

    fn tol() -> SeriesTolerance {
        SeriesTolerance::default()
    }

    #[test]
    fn zero_beta_values() {
        let p = l2();
        let g = green0(&p, GreenQuery::new(0.0, 0), &tol()).unwrap();
        assert_relative_eq!(g.re, 1.25, max_relative = 1e-10);
        for n in 1..=5 {
            let g = green0(&p, GreenQuery::new(0.0, n), &tol()).unwrap();
            assert_relative_eq!(g.re, 4f64.powi(-(n as i32)), max_relative = 1e-10);
            let g = green0(&p, GreenQuery::new(1e-16, n), &tol()).unwrap();
            assert_relative_eq!(g.re, 4f64.powi(-(n as i32)), max_relative = 1e-10);
        }
        let alt = green0_alt(&p, GreenQuery::new(0.0, 0), &tol()).unwrap();
        assert_relative_eq!(alt.re, 1.25, max_relative = 1e-10);
    }

    #[test]
    fn origin_at_beta_one_matches_partial_sums() {
        let p = l2();
        let oracle: f64 = (0..200)
            .map(|k| 2f64.powi(-2 * k) * (15.0 / 16.0) / (1.0 + 4f64.powi(k)))
            .sum();
        let g = green0(&p, GreenQuery::new(1.0, 0), &tol()).unwrap();
        assert_relative_eq!(g.re, oracle, max_relative = 1e-12);
        assert!(g.im.abs() < 1e-16);
    }

    #[test]
    fn two_representations_agree() {
        let p = l2();
        for &r in &[0.1, 1.0, 10.0] {
            for &arg in &[0.0, PI / 3.0, -PI / 3.0] {
                for n in 0..4 {
                    let q = GreenQuery::new(Complex64::from_polar(r, arg), n);
                    let a = green0(&p, q, &tol()).unwrap();
                    let b = green0_alt(&p, q, &tol()).unwrap();
                    assert!((a - b).norm() <= 1e-10 * a.norm(), "{q:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn large_beta_alt_leading_term() {
        // beta G0(beta, 0) -> sum_k L^{-4k} B = 1; the k = 0 term alone carries B.
        let p = l2();
        let beta = 1e7;
        let g = green0_alt(&p, GreenQuery::new(beta, 0), &tol()).unwrap();
        assert_relative_eq!(beta * g.re, 1.0, max_relative = 1e-6);
        let k0 = beta * (15.0 / 16.0) / (1.0 + beta);
        assert_relative_eq!(k0, 1.0 - 1.0 / 16.0, max_relative = 1e-6);
        // next order: -gamma / beta
        assert_relative_eq!(beta * (beta * g.re - 1.0), -20.0 / 21.0, max_relative = 1e-5);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = l2();
        let q = GreenQuery::new(0.5, 2);
        let h = 1e-6 * 0.5;
        let plus = green0(&p, GreenQuery::new(0.5 + h, 2), &tol()).unwrap();
        let minus = green0(&p, GreenQuery::new(0.5 - h, 2), &tol()).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        let d = green0_dbeta(&p, q, &tol()).unwrap();
        assert!((d - fd).norm() <= 1e-6 * d.norm());
        assert!(d.re < 0.0 && d.im.abs() < 1e-18);
        for n in 0..5 {
            for &beta in &[0.01, 0.3, 7.0] {
                let d = green0_dbeta(&p, GreenQuery::new(beta, n), &tol()).unwrap();
                assert!(d.re < 0.0);
            }
        }
    }

    #[test]
    fn derivative_diverges_at_zero_beta() {
        let p = l2();
        let tiny = SeriesTolerance::new(1e-12, 50).unwrap();
        assert!(matches!(
            green0_dbeta(&p, GreenQuery::new(0.0, 1), &tiny),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn poles_are_reported() {
        let p = l2();
        // G0(beta, 0) has a pole at beta = -1/4
        let r = green0(&p, GreenQuery::new(-0.25, 0), &tol());
        assert!(matches!(r, Err(Error::PoleProximity { term: 1, .. })));
    }

    #[test]
    fn derivative_origin_envelope() {
        // |beta dG0(beta,0)| <= c v (1 + log_L(1 + 1/v)) / (1 + v)^2, v = |beta|
        let p = l2();
        let mut worst: f64 = 0.0;
        for i in -30..=30 {
            let v = 10f64.powf(i as f64 / 10.0);
            for &arg in &[0.0, 1.0, -1.0, 2.0] {
                let beta = Complex64::from_polar(v, arg);
                let d = green0_dbeta(&p, GreenQuery::new(beta, 0), &tol()).unwrap();
                let env = v * (1.0 + (1.0 + 1.0 / v).log2()) / (1.0 + v).powi(2);
                worst = worst.max((beta * d).norm() / env);
            }
        }
        assert!(worst < 3.0, "fitted c = {worst}");
    }

    #[test]
    fn f_shape_small_t_slope_and_positivity() {
        let p = l2();
        let slope: f64 = (0..80)
            .map(|j| 16f64.powi(-j) * (15.0 / 16.0) * (4.0 - 4f64.powi(-j)))
            .sum();
        let t = 1e-9;
        let f = f_shape(Complex64::new(t, 0.0), &p, &tol()).unwrap();
        assert_relative_eq!(f.re / t, slope, max_relative = 1e-7);
        for i in -40..=40 {
            let t = 10f64.powf(i as f64 / 10.0);
            assert!(f_shape(Complex64::new(t, 0.0), &p, &tol()).unwrap().re > 0.0);
        }
        assert!(f_shape(Complex64::new(-1.0, 0.0), &p, &tol()).is_err());
    }

    #[test]
    fn kernel_plumbing() {
        let p = l2();
        let a = p0(1.0, 1, &p, &tol()).unwrap();
        let b = f_shape(Complex64::new(0.25, 0.0), &p, &tol()).unwrap() / 16.0;
        assert_relative_eq!(a.re, b.re, max_relative = 1e-15);
    }

    #[test]
    fn small_alpha_moment_is_a_probability() {
        let p = l2();
        let t = 4.0;
        let m = endtoend_free(t, 1e-6, &p, &tol()).unwrap();
        let stay = p0(t, 0, &p, &tol()).unwrap().re;
        assert!(m <= 1.0);
        assert_relative_eq!(m, 1.0 - stay, max_relative = 1e-4);
    }

    #[test]
    fn jump_constant_closed_form() {
        assert_relative_eq!(jump_constant(2), 64.0 / 21.0, max_relative = 1e-15);
        for l in 2..10 {
            assert!(jump_constant(l) > 0.0);
        }
    }

    #[test]
    fn rejects_bad_alpha() {
        let p = l2();
        assert!(endtoend_free(1.0, 2.0, &p, &tol()).is_err());
        assert!(log_periodic_limit(1.0, 0.0, &p, &tol()).is_err());
    }

    #[test]
    fn zero_alpha_moment_is_inverse_beta() {
        let p = l2();
        for &beta in &[Complex64::new(0.3, 0.0), Complex64::from_polar(0.01, 1.9), Complex64::new(5.0, -2.0)] {
            let m = green_moment(beta, 0.0, &p, &tol()).unwrap();
            assert!((m * beta - 1.0).norm() < 1e-10, "{beta}: {m}");
        }
    }

    #[test]
    fn moment_matches_direct_shell_sum() {
        let p = l2();
        let (beta, alpha) = (Complex64::new(0.05, 0.02), 1.0);
        let mut direct = Complex64::new(0.0, 0.0);
        for n in 1..200 {
            direct += p.shell_weight(n) * 2f64.powi(n as i32) * green0(&p, GreenQuery::new(beta, n), &tol()).unwrap();
        }
        let m = green_moment(beta, alpha, &p, &tol()).unwrap();
        assert!((m - direct).norm() < 1e-11 * direct.norm());
    }
}
