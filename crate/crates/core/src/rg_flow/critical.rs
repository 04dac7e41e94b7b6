//! The critical killing rate: the initial `beta` whose flow stays bounded.
//!
//! The unstable direction grows by `L^2` per step, so confinement for `K`
//! steps needs about `2 K log2(L)` bits. Searches run in binary floating
//! point of that precision and round the result to `f64` at the end.

use num_complex::Complex64;

use super::ring::{big, big_ratio, big_to_f64, Big, MapConsts, PComplex, PReal, Ring};
use super::shifted::CriticalTrajectory;
use super::{advance, CouplingState, DomainSpec, FlowReport, DEFAULT_MAX_STEPS};
use crate::error::{Error, Result};
use crate::lattice::LatticeParams;

/// Half-width of the initial bisection bracket in units of `|lambda|`.
const BRACKET_SCALE: f64 = 5.0;

/// `1 + beta_k` below this classifies the flow as escaping downward.
const LOWER_ESCAPE: f64 = 1e-3;

const NEWTON_ITERATIONS: usize = 40;

/// Steps beyond the requested window used to pin the critical value, so
/// the flow from it tracks the stable manifold across the whole window.
const MARGIN_STEPS: usize = 40;

/// Default bracket tolerance, `1e-14 |lambda|`.
pub fn default_tolerance(lambda: impl Into<Complex64>) -> f64 {
    1e-14 * lambda.into().norm()
}

/// High-precision value of the critical killing rate.
#[derive(Debug, Clone)]
pub struct PreciseBeta {
    value: PComplex,
    prec: usize,
}

impl PreciseBeta {
    pub fn precision(&self) -> usize {
        self.prec
    }

    pub fn to_c64(&self) -> Complex64 {
        self.value.to_c64()
    }
}

#[derive(Debug, Clone)]
pub struct CriticalData {
    pub lambda: Complex64,
    pub beta_c: Complex64,
    /// Bound on `|beta_c - true value|`, including rounding to `f64`.
    pub bracket_width: f64,
    /// The precise flow stays in the `rho`-ball for all steps `k <= steps_held`.
    pub steps_held: usize,
    pub precise: PreciseBeta,
}

fn precision_for(max_steps: usize, p: &LatticeParams) -> usize {
    (2.0 * max_steps as f64 * p.l_f64().log2()).ceil() as usize + 128
}

fn precise_consts<S: Ring>(embed: impl Fn(Big) -> S, prec: usize, p: &LatticeParams) -> MapConsts<S> {
    MapConsts::from_ratio(|a, b| embed(big_ratio(a, b, prec)), p)
}

impl CriticalData {
    fn start(&self, offset: Complex64) -> PComplex {
        self.precise.value.add(&PComplex::from_c64(offset, self.precise.prec))
    }

    /// Number of steps the precise flow from `beta_c + offset` stays in the
    /// `rho`-ball with `lambda_k` in the widened domain.
    pub fn steps_confined(&self, offset: Complex64, d: &DomainSpec, max_steps: usize, p: &LatticeParams) -> usize {
        let prec = self.precise.prec.max(precision_for(max_steps, p));
        let c = precise_consts(PComplex::real, prec, p);
        let lambda = PComplex::from_c64(self.lambda, prec);
        confined_steps(&c, self.start(offset), lambda, d, max_steps)
    }

    /// Flow from `beta_c + offset` computed at full precision, each state
    /// rounded to `f64`.
    pub fn precise_flow(
        &self,
        offset: Complex64,
        d: &DomainSpec,
        max_steps: usize,
        p: &LatticeParams,
    ) -> Result<FlowReport> {
        d.validate()?;
        let prec = self.precise.prec.max(precision_for(max_steps, p));
        let c = precise_consts(PComplex::real, prec, p);
        let mut beta = self.start(offset);
        let mut lambda = PComplex::from_c64(self.lambda, prec);
        let mut dbeta = PComplex::real(big(1.0, prec));
        let mut dlambda = PComplex::real(Big::ZERO);
        let mut trajectory = Vec::with_capacity(max_steps + 1);
        for k in 0..=max_steps {
            let state = CouplingState {
                step: k,
                beta: beta.to_c64(),
                lambda: lambda.to_c64(),
                dbeta: dbeta.to_c64(),
                dlambda: dlambda.to_c64(),
            };
            trajectory.push(state);
            if !d.contains(state.beta, state.lambda) {
                return Ok(FlowReport { trajectory, exit_step: Some(k), exited_domain: true });
            }
            if k == max_steps {
                break;
            }
            let next = advance(&c, &beta, &lambda, &dbeta, &dlambda).ok_or(Error::DenominatorCollapse { step: k })?;
            (beta, lambda, dbeta, dlambda) = next;
        }
        Ok(FlowReport { trajectory, exit_step: None, exited_domain: false })
    }
}

fn confined_steps<S: Ring>(c: &MapConsts<S>, mut beta: S, mut lambda: S, d: &DomainSpec, max_steps: usize) -> usize {
    let zero = c.one.sub(&c.one);
    for k in 0..=max_steps {
        if beta.abs_f64() >= d.rho || !d.in_lambda_bar(lambda.to_c64()) {
            return k.saturating_sub(1);
        }
        if k == max_steps {
            break;
        }
        match advance(c, &beta, &lambda, &zero, &zero) {
            Some((b, l, _, _)) => {
                beta = b;
                lambda = l;
            }
            None => return k,
        }
    }
    max_steps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Escape {
    Up,
    Down,
    Held,
}

fn classify(c: &MapConsts<PReal>, beta: &Big, lambda: &Big, rho: f64, max_steps: usize) -> Escape {
    let zero = PReal(Big::ZERO);
    let mut b = PReal(beta.clone());
    let mut l = PReal(lambda.clone());
    for k in 0..=max_steps {
        let x = big_to_f64(&b.0);
        if x > rho {
            return Escape::Up;
        }
        if x < -rho || 1.0 + x < LOWER_ESCAPE {
            return Escape::Down;
        }
        if k == max_steps {
            break;
        }
        let (nb, nl, _, _) = advance(c, &b, &l, &zero, &zero).expect("1 + beta bounded away from 0");
        b = nb;
        l = nl;
    }
    Escape::Held
}

/// Critical killing rate with the default step budget.
pub fn critical_beta(
    lambda: impl Into<Complex64>,
    d: &DomainSpec,
    p: &LatticeParams,
    tol: f64,
) -> Result<CriticalData> {
    critical_beta_with(lambda, d, p, tol, DEFAULT_MAX_STEPS)
}

/// Critical killing rate whose precise flow is confined for up to
/// `max_steps` steps. Real positive `lambda` is bisected on the escape
/// direction; other `lambda` use a damped Newton iteration on
/// `beta_K(beta) = beta^c_K`.
pub fn critical_beta_with(
    lambda: impl Into<Complex64>,
    d: &DomainSpec,
    p: &LatticeParams,
    tol: f64,
    max_steps: usize,
) -> Result<CriticalData> {
    let lambda = lambda.into();
    d.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    if max_steps == 0 {
        return Err(Error::InvalidParameter("max_steps must be at least 1".into()));
    }
    if !d.in_lambda_domain(lambda) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} outside the coupling domain")));
    }
    let prec = precision_for(max_steps + MARGIN_STEPS, p);
    if lambda.norm() == 0.0 {
        return Ok(CriticalData {
            lambda,
            beta_c: Complex64::new(0.0, 0.0),
            bracket_width: 0.0,
            steps_held: max_steps,
            precise: PreciseBeta { value: PComplex::real(Big::ZERO), prec },
        });
    }
    let (value, width) = if lambda.im == 0.0 {
        bisect_real(lambda.re, d, p, prec, max_steps + MARGIN_STEPS)?
    } else {
        newton_complex(lambda, p, prec, max_steps + MARGIN_STEPS)?
    };
    let beta_c = value.to_c64();
    let rounding = value.sub(&PComplex::from_c64(beta_c, prec)).abs_f64();
    let bracket_width = width + rounding;
    if bracket_width > tol {
        return Err(Error::NonConvergence { iterations: prec, what: "critical beta bracket above tolerance" });
    }
    let c = precise_consts(PComplex::real, prec, p);
    let steps_held = confined_steps(&c, value.clone(), PComplex::from_c64(lambda, prec), d, max_steps);
    Ok(CriticalData { lambda, beta_c, bracket_width, steps_held, precise: PreciseBeta { value, prec } })
}

fn bisect_real(
    lambda: f64,
    d: &DomainSpec,
    p: &LatticeParams,
    prec: usize,
    max_steps: usize,
) -> Result<(PComplex, f64)> {
    let c = precise_consts(PReal, prec, p);
    let lam = big(lambda, prec);
    let half = BRACKET_SCALE * lambda;
    let mut lo = big(-half, prec);
    let mut hi = big(half, prec);
    let (s_lo, s_hi) = (
        classify(&c, &lo, &lam, d.rho, max_steps),
        classify(&c, &hi, &lam, d.rho, max_steps),
    );
    if s_lo != Escape::Down || s_hi != Escape::Up {
        return Err(Error::NoBracket { lo: -half, hi: half });
    }
    let two = Big::from(2u32);
    for _ in 0..prec {
        let mid = &(&lo + &hi) / &two;
        match classify(&c, &mid, &lam, d.rho, max_steps) {
            Escape::Up => hi = mid,
            Escape::Down => lo = mid,
            Escape::Held => {
                let width = big_to_f64(&(&hi - &lo));
                return Ok((PComplex::real(mid), width));
            }
        }
    }
    let width = big_to_f64(&(&hi - &lo));
    Ok((PComplex::real(&(&lo + &hi) / &two), width))
}

/// Step ladder for the Newton search: confinement is extended a few dozen
/// steps at a time so each solve starts inside its linear regime.
fn ladder(max_steps: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = (1..).map(|i| 20 * i).take_while(|&k| k < max_steps).collect();
    ks.push(max_steps);
    ks
}

fn newton_complex(lambda: Complex64, p: &LatticeParams, prec: usize, max_steps: usize) -> Result<(PComplex, f64)> {
    let guide = CriticalTrajectory::solve(lambda, max_steps, p)?;
    let c = precise_consts(PComplex::real, prec, p);
    let lam0 = PComplex::from_c64(lambda, prec);
    let one = PComplex::real(big(1.0, prec));
    let zero = PComplex::real(Big::ZERO);
    let run = |beta: &PComplex, k: usize| -> Option<(PComplex, PComplex)> {
        let (mut b, mut l, mut db, mut dl) = (beta.clone(), lam0.clone(), one.clone(), zero.clone());
        for _ in 0..k {
            (b, l, db, dl) = advance(&c, &b, &l, &db, &dl)?;
            if !b.abs_f64().is_finite() || b.abs_f64() > 1e6 {
                return None;
            }
        }
        let _ = (&l, &dl);
        Some((b, db))
    };
    let mut beta = PComplex::from_c64(guide.beta(0), prec);
    let mut width = f64::INFINITY;
    for k in ladder(max_steps) {
        let target = PComplex::from_c64(guide.beta(k), prec);
        let target_abs = target.abs_f64();
        let accept = 1e-12 * lambda.norm();
        let (mut bk, mut dbk) = run(&beta, k).ok_or(Error::NonConvergence {
            iterations: 0,
            what: "critical beta guide escapes before the first Newton level",
        })?;
        let mut resid = bk.sub(&target);
        let mut converged = false;
        for _ in 0..NEWTON_ITERATIONS {
            if resid.abs_f64() <= accept {
                converged = true;
                break;
            }
            let full = resid.div(&dbk);
            let mut scale = 1.0;
            let mut improved = None;
            for _ in 0..30 {
                let trial = beta.sub(&full.scale(&big(scale, prec)));
                if let Some((b2, db2)) = run(&trial, k) {
                    let r2 = b2.sub(&target);
                    if r2.abs_f64() < resid.abs_f64() {
                        improved = Some((trial, b2, db2, r2));
                        break;
                    }
                }
                scale *= 0.5;
            }
            match improved {
                Some((trial, b2, db2, r2)) => {
                    beta = trial;
                    bk = b2;
                    dbk = db2;
                    resid = r2;
                }
                None => break,
            }
        }
        if !converged && resid.abs_f64() > accept {
            return Err(Error::NonConvergence { iterations: NEWTON_ITERATIONS, what: "complex critical beta Newton" });
        }
        // the target itself carries f64 rounding of beta^c_K
        width = (resid.abs_f64() + 4.0 * f64::EPSILON * target_abs) / dbk.abs_f64();
        let _ = &bk;
    }
    Ok((beta, width))
}
