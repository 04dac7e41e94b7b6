use std::f64::consts::PI;

use hierwalk_core::free::{endtoend_free, green0, p0, GreenQuery, SeriesTolerance};
use hierwalk_core::laplace::{
    ell_approx, ell_log_factor, endtoend_interacting, invert, laplace_transform, p_lambda, p_lambda_leading,
    ContourSpec, Interacting, InteractingKernelQuery,
};
use hierwalk_core::rg_flow::DomainSpec;
use hierwalk_core::LatticeParams;
use num_complex::Complex64;

fn l2() -> LatticeParams {
    LatticeParams::new(2).unwrap()
}

fn tight() -> SeriesTolerance {
    SeriesTolerance::new(1e-15, 10_000).unwrap()
}

fn ctx(lambda: impl Into<Complex64>) -> Interacting {
    Interacting::new(lambda, &DomainSpec::default(), &l2(), &ContourSpec::default()).unwrap()
}

#[test]
fn inverting_green_reproduces_heat_kernel() {
    let (p, tol, c) = (l2(), tight(), ContourSpec::default());
    for &t in &[1.0, 4.0, 16.0, 64.0] {
        for n in 0..=4 {
            let r = invert(|b| green0(&p, GreenQuery::new(b, n), &tol), t, &c).unwrap();
            let exact = p0(t, n, &p, &tol).unwrap();
            let err = (r.value - exact).norm();
            assert!(err < 1e-8 * exact.norm(), "T={t} N={n}: {} vs {exact}", r.value);
            // the doubling estimate bounds the true error above roundoff
            assert!(err <= r.error.max(1e-14 * exact.norm()), "T={t} N={n}: err {err:e} estimate {:e}", r.error);
        }
    }
}

#[test]
fn forward_transform_of_heat_kernel_reproduces_green() {
    let (p, tol) = (l2(), tight());
    for &(beta, n) in &[(0.05, 0u32), (0.5, 1), (2.0, 3)] {
        let r = laplace_transform(|t| p0(t, n, &p, &tol), Complex64::new(beta, 0.0), 1e-10, 6).unwrap();
        let exact = green0(&p, GreenQuery::new(beta, n), &tol).unwrap();
        assert!((r.value - exact).norm() < 1e-8 * exact.norm(), "beta={beta} N={n}: {} vs {exact}", r.value);
    }
}

#[test]
fn inversion_does_not_depend_on_ray_angle() {
    let (p, tol) = (l2(), tight());
    let reference = invert(|b| green0(&p, GreenQuery::new(b, 1), &tol), 4.0, &ContourSpec::default()).unwrap();
    let ctx_ref = ctx(0.02).p_lambda(16.0, 1).unwrap();
    for i in 0..=4 {
        let b = PI / 2.0 + 0.05 + i as f64 * (PI / 4.0 - 0.1) / 4.0;
        let c = ContourSpec::with_angle(b).unwrap();
        let r = invert(|z| green0(&p, GreenQuery::new(z, 1), &tol), 4.0, &c).unwrap();
        assert!((r.value - reference.value).norm() < 1e-8 * reference.value.norm(), "b={b}");
        let inter = Interacting::new(0.02, &DomainSpec::default(), &p, &c).unwrap().p_lambda(16.0, 1).unwrap();
        assert!((inter.value - ctx_ref.value).norm() < 1e-8 * ctx_ref.value.norm(), "b={b}");
    }
}

#[test]
fn zero_coupling_reduces_to_free_walk() {
    let (p, tol) = (l2(), tight());
    let free = ctx(0.0);
    for &(t, n) in &[(4.0, 0u32), (16.0, 1), (64.0, 3)] {
        let exact = p0(t, n, &p, &tol).unwrap();
        let q = InteractingKernelQuery::new(t, n, 0.0).unwrap();
        let pl = p_lambda(&q, &DomainSpec::default(), &p, &ContourSpec::default()).unwrap();
        assert!((pl.value - exact).norm() < 1e-8 * exact.norm());
        let lead = p_lambda_leading(&q, &DomainSpec::default(), &p).unwrap();
        assert!((lead - exact).norm() < 1e-14 * exact.norm());
    }
    for &t in &[4.0, 16.0, 64.0] {
        let e = free.endtoend(t, 1.0).unwrap();
        let exact = endtoend_free(t, 1.0, &p, &tol).unwrap();
        assert!((e.value - exact).abs() < 1e-8 * exact, "T={t}: {} vs {exact}", e.value);
        assert_eq!(e.ell, Complex64::new(1.0, 0.0));
    }
    let f = ell_log_factor(100.0, 0.0, &p).unwrap();
    assert_eq!((f.flow, f.approx), (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)));
}

#[test]
fn real_coupling_gives_real_kernels() {
    let c = ctx(0.02);
    for &t in &[4.0, 64.0] {
        let inv = c.p_lambda_levels(t, &[0, 1, 2, 3, 4]).unwrap();
        for v in &inv.values {
            assert!(v.im.abs() <= 1e-6 * v.re.abs(), "T={t}: {v}");
            assert!(v.re > 0.0);
        }
        // total mass sum_x P_lambda = inverse transform of 1/beta_eff
        let mass = invert(|b| Ok(1.0 / c.beta_eff(b)?), t, c.contour()).unwrap();
        assert!(mass.value.im.abs() <= 1e-6 * mass.value.re && mass.value.re > 0.0);
        let e = c.endtoend(t, 1.0).unwrap();
        assert!(e.imag_residue < 1e-6);
    }
}

// Fitted: max kappa = 1.52 at (T=4, N=1) for lambda = 0.02; asserted < 2.
#[test]
fn interacting_kernel_stays_in_leading_band() {
    let c = ctx(0.02);
    let levels = [0u32, 1, 2, 3];
    for &t in &[4.0, 16.0, 64.0] {
        let inv = c.p_lambda_levels(t, &levels).unwrap();
        let q = c.ell_quarter(t).unwrap().re;
        for (i, &n) in levels.iter().enumerate() {
            let lead = c.p_lambda_leading(t, n).unwrap();
            let x2 = if n == 0 { 0.0 } else { 4f64.powi(n as i32) };
            let r = (t * q + x2) / (1.0 + x2);
            let band = 2.0 * c.lambda_k(n as usize).norm() * r;
            let dev = (inv.values[i] / lead - 1.0).norm();
            assert!(dev <= band, "T={t} N={n}: deviation {dev} band {band}");
        }
    }
}

#[test]
fn effective_time_has_small_phase() {
    // |arg t| < pi/12 + c |lambda|, here with c = 0: measured |arg t| <= 0.05
    for &lam in &[Complex64::from_polar(0.02, 0.35), Complex64::from_polar(0.04, -0.38)] {
        let c = ctx(lam);
        for &t in &[4.0, 1e3, 1e6] {
            let phase = c.ell_quarter(t).unwrap().arg().abs();
            assert!(phase < PI / 12.0, "lambda={lam} T={t}: {phase}");
        }
    }
}

#[test]
fn log_factor_grows_with_time() {
    let c = ctx(0.02);
    let mut prev = 1.0;
    for e in 1..=12 {
        let ell = c.ell(10f64.powf(0.5 * e as f64)).unwrap();
        assert!(ell.im.abs() < 1e-14 && ell.re > prev, "step {e}: {ell}");
        prev = ell.re;
    }
}

// Fitted: |flow/approx - 1| = 1.19 lambda at T = 1e6; asserted <= 2 lambda.
#[test]
fn log_factor_matches_closed_approximant() {
    let p = l2();
    let f = ell_log_factor(1e6, 0.02, &p).unwrap();
    assert_eq!(f.approx, ell_approx(1e6, 0.02, &p));
    let dev = (f.flow / f.approx - 1.0).norm();
    assert!(dev <= 2.0 * 0.02, "{dev}");
}

// Fitted: kappa = |ratio - 1| ell / lambda = 0.87 (T=16), 0.85 (T=64); asserted < 1.5.
#[test]
fn interacting_endtoend_follows_rescaled_time() {
    let p = l2();
    let lambda = 0.02;
    for &t in &[16.0, 64.0] {
        let e = endtoend_interacting(t, 1.0, lambda, &DomainSpec::default(), &p, &ContourSpec::default()).unwrap();
        let theory = endtoend_free(e.t_eff.re, 1.0, &p, &tight()).unwrap();
        let kappa = (e.value / theory - 1.0).abs() * e.ell.re / lambda;
        assert!(kappa < 1.5, "T={t}: kappa {kappa}");
        assert!(e.error < 1e-8 * e.value);
    }
}

#[test]
fn parallel_reduction_is_bit_stable() {
    let c = ctx(0.02);
    let a = c.p_lambda_levels(16.0, &[0, 1, 2]).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| c.p_lambda_levels(16.0, &[0, 1, 2]).unwrap());
    assert_eq!(a, b);
}
