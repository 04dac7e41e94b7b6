//! Coupling-constant recursion for the interacting walk.
//!
//! The map is the truncated recursion
//! `lambda' = lambda - 8B lambda^2 / (1+beta)^2`,
//! `beta' = L^2 (beta + 2B lambda / (1+beta))`,
//! together with its exact differential in the initial `beta`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::LatticeParams;

mod critical;
mod ring;
mod shifted;

pub use critical::{critical_beta, critical_beta_with, default_tolerance, CriticalData, PreciseBeta};
pub use shifted::{
    beta_eff, ell_k, k_hat, k_hat_model, l_k_aux, lambda_k_model, shifted_flow, CriticalTrajectory, Horizon,
};

use ring::{MapConsts, Ring};

/// Default number of recursion steps for flows and critical searches.
pub const DEFAULT_MAX_STEPS: usize = 200;

/// `|1 + beta_j|` at or below this value aborts the recursion.
pub const DENOMINATOR_FLOOR: f64 = 1e-8;

/// Which set of `beta` counts as "inside" when recording the exit step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// The closed sector widened by `rho`.
    SectorNeighborhood,
    /// The ball of radius `rho` about the origin.
    Ball,
}

/// Sector geometry of the `beta` and `lambda` domains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub b_beta: f64,
    pub b_lambda: f64,
    pub eps: f64,
    pub delta: f64,
    pub delta_bar: f64,
    pub rho: f64,
    pub region: Region,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            b_beta: 5.0 * PI / 8.0,
            b_lambda: PI / 8.0,
            eps: 0.01,
            delta: 0.06,
            delta_bar: 0.1,
            rho: 0.5,
            region: Region::SectorNeighborhood,
        }
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        let finite = [self.b_beta, self.b_lambda, self.eps, self.delta, self.delta_bar, self.rho];
        if finite.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return bad("domain parameters must be finite and positive");
        }
        if self.b_beta <= PI / 2.0 {
            return bad("b_beta must exceed pi/2");
        }
        if self.b_lambda >= PI / 3.0 {
            return bad("b_lambda must be below pi/3");
        }
        if 2.0 * self.b_beta + 1.5 * self.b_lambda >= 1.5 * PI
            || 2.0 * (self.b_beta + self.eps) + 1.5 * (self.b_lambda + self.eps) >= 1.5 * PI
        {
            return bad("2 b_beta + 3/2 b_lambda (with margin eps) must stay below 3pi/2");
        }
        if self.delta_bar <= self.delta {
            return bad("delta_bar must exceed delta");
        }
        Ok(())
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.region = region;
        self
    }

    /// Half-angle of the widened `beta` sector.
    pub fn beta_bar_angle(&self) -> f64 {
        self.b_beta + 0.25 * self.b_lambda + self.eps
    }

    /// `beta` in the open sector of half-angle `b_beta`.
    pub fn in_beta_sector(&self, beta: Complex64) -> bool {
        beta != Complex64::new(0.0, 0.0) && beta.arg().abs() < self.b_beta
    }

    /// `lambda` in the open domain used for critical searches; zero is admitted.
    pub fn in_lambda_domain(&self, lambda: Complex64) -> bool {
        lambda.norm() == 0.0 || (lambda.norm() < self.delta && lambda.arg().abs() < self.b_lambda)
    }

    /// `lambda` in the widened domain; zero is admitted as the free fixed line.
    pub fn in_lambda_bar(&self, lambda: Complex64) -> bool {
        lambda.norm() == 0.0 || (lambda.norm() < self.delta_bar && lambda.arg().abs() < self.b_lambda + self.eps)
    }

    /// Distance from `beta` to the closed widened sector.
    pub fn distance_to_beta_bar(&self, beta: Complex64) -> f64 {
        let excess = beta.arg().abs() - self.beta_bar_angle();
        if excess <= 0.0 {
            0.0
        } else if excess >= PI / 2.0 {
            beta.norm()
        } else {
            beta.norm() * excess.sin()
        }
    }

    /// Membership of `beta` in the region selected by `self.region`.
    pub fn contains_beta(&self, beta: Complex64) -> bool {
        match self.region {
            Region::Ball => beta.norm() < self.rho,
            Region::SectorNeighborhood => self.distance_to_beta_bar(beta) < self.rho,
        }
    }

    pub fn contains(&self, beta: Complex64, lambda: Complex64) -> bool {
        self.contains_beta(beta) && self.in_lambda_bar(lambda)
    }
}

/// One point of a trajectory with its derivatives in the initial `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingState {
    pub step: usize,
    pub beta: Complex64,
    pub lambda: Complex64,
    pub dbeta: Complex64,
    pub dlambda: Complex64,
}

impl CouplingState {
    pub fn initial(beta: impl Into<Complex64>, lambda: impl Into<Complex64>) -> Self {
        Self {
            step: 0,
            beta: beta.into(),
            lambda: lambda.into(),
            dbeta: Complex64::new(1.0, 0.0),
            dlambda: Complex64::new(0.0, 0.0),
        }
    }
}

/// Trajectory up to and including the first state outside the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub trajectory: Vec<CouplingState>,
    /// First step outside the domain; `None` if the flow stayed inside.
    pub exit_step: Option<usize>,
    pub exited_domain: bool,
}

impl FlowReport {
    pub fn last(&self) -> &CouplingState {
        self.trajectory.last().expect("trajectory holds the initial state")
    }
}

pub(crate) fn consts_c64(p: &LatticeParams) -> MapConsts<Complex64> {
    MapConsts::new(|x| Complex64::new(x, 0.0), p)
}

/// Advances `(beta, lambda, dbeta, dlambda)` by one step; `None` when
/// `|1 + beta|` is at or below the floor.
pub(crate) fn advance<S: Ring>(c: &MapConsts<S>, beta: &S, lambda: &S, dbeta: &S, dlambda: &S) -> Option<(S, S, S, S)> {
    let u = c.one.add(beta);
    if u.abs_f64() <= DENOMINATOR_FLOOR {
        return None;
    }
    let next_beta = c.l2.mul(&beta.add(&c.b2.mul(lambda).div(&u)));
    let next_lambda = lambda.sub(&c.b8.mul(&lambda.mul(lambda)).div(&u.mul(&u)));
    let (next_dbeta, next_dlambda) = advance_derivatives(c, &u, lambda, dbeta, dlambda);
    Some((next_beta, next_lambda, next_dbeta, next_dlambda))
}

/// Differential of the map at `u = 1 + beta`.
pub(crate) fn advance_derivatives<S: Ring>(c: &MapConsts<S>, u: &S, lambda: &S, dbeta: &S, dlambda: &S) -> (S, S) {
    let u2 = u.mul(u);
    let lam2 = lambda.mul(lambda);
    let next_dlambda = dlambda.sub(&c.b16.mul(&lambda.mul(dlambda).sub(&lam2.mul(dbeta).div(u))).div(&u2));
    let lam_dbeta_over_u = lambda.mul(dbeta).div(u);
    let next_dbeta = c.l2.mul(&dbeta.add(&c.b2.mul(&dlambda.sub(&lam_dbeta_over_u)).div(u)));
    (next_dbeta, next_dlambda)
}

/// One step of the truncated recursion with derivative tracking.
pub fn step(s: &CouplingState, p: &LatticeParams) -> Result<CouplingState> {
    step_with(&consts_c64(p), s)
}

fn step_with(c: &MapConsts<Complex64>, s: &CouplingState) -> Result<CouplingState> {
    let (beta, lambda, dbeta, dlambda) = advance(c, &s.beta, &s.lambda, &s.dbeta, &s.dlambda)
        .ok_or(Error::DenominatorCollapse { step: s.step })?;
    Ok(CouplingState { step: s.step + 1, beta, lambda, dbeta, dlambda })
}

/// Iterates `step` until the state leaves the domain or `max_steps` is reached.
pub fn flow(
    beta: impl Into<Complex64>,
    lambda: impl Into<Complex64>,
    d: &DomainSpec,
    max_steps: usize,
    p: &LatticeParams,
) -> Result<FlowReport> {
    if max_steps == 0 {
        return Err(Error::InvalidParameter("max_steps must be at least 1".into()));
    }
    d.validate()?;
    let c = consts_c64(p);
    let mut state = CouplingState::initial(beta, lambda);
    let mut trajectory = vec![state];
    if !d.contains(state.beta, state.lambda) {
        return Ok(FlowReport { trajectory, exit_step: Some(0), exited_domain: true });
    }
    for _ in 0..max_steps {
        state = step_with(&c, &state)?;
        trajectory.push(state);
        if !d.contains(state.beta, state.lambda) {
            return Ok(FlowReport { trajectory, exit_step: Some(state.step), exited_domain: true });
        }
    }
    Ok(FlowReport { trajectory, exit_step: None, exited_domain: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2() -> LatticeParams {
        LatticeParams::new(2).unwrap()
    }

    #[test]
    fn default_domain_is_admissible() {
        DomainSpec::default().validate().unwrap();
        let mut d = DomainSpec::default();
        d.b_beta = 0.75 * PI;
        assert!(d.validate().is_err());
        let mut d = DomainSpec::default();
        d.delta_bar = 0.05;
        assert!(d.validate().is_err());
    }

    #[test]
    fn free_line_is_geometric() {
        let p = l2();
        let s = step(&CouplingState::initial(0.1, 0.0), &p).unwrap();
        assert_eq!(s.beta, Complex64::new(0.4, 0.0));
        assert_eq!(s.lambda, Complex64::new(0.0, 0.0));
        assert_eq!(s.dbeta, Complex64::new(4.0, 0.0));
    }

    #[test]
    fn zero_beta_substitution() {
        let p = l2();
        let lam = 0.02;
        let s = step(&CouplingState::initial(0.0, lam), &p).unwrap();
        let b = p.b();
        assert!((s.lambda.re - (lam - 8.0 * b * lam * lam)).abs() < 1e-17);
        assert!((s.beta.re - 2.0 * b * 4.0 * lam).abs() < 1e-17);
    }

    #[test]
    fn collapse_is_reported_with_step() {
        let p = l2();
        let s = CouplingState { step: 7, ..CouplingState::initial(-1.0, 0.01) };
        assert_eq!(step(&s, &p), Err(Error::DenominatorCollapse { step: 7 }));
    }

    #[test]
    fn derivative_matches_finite_difference_after_ten_steps() {
        let p = l2();
        let d = DomainSpec::default();
        let run = |b: f64| flow(b, 0.02, &d, 10, &p).unwrap();
        let base = run(0.01);
        assert_eq!(base.trajectory.len(), 11);
        let h = 1e-7;
        let (plus, minus) = (run(0.01 + h), run(0.01 - h));
        let fd_beta = (plus.last().beta - minus.last().beta) / (2.0 * h);
        let fd_lambda = (plus.last().lambda - minus.last().lambda) / (2.0 * h);
        assert!((base.last().dbeta - fd_beta).norm() <= 1e-6 * base.last().dbeta.norm());
        assert!((base.last().dlambda - fd_lambda).norm() <= 1e-6 * base.last().dlambda.norm());
    }

    #[test]
    fn free_flow_exits_the_ball_at_the_analytic_step() {
        let p = l2();
        let d = DomainSpec::default().with_region(Region::Ball);
        for &beta in &[0.3, 0.01, 1e-5] {
            let r = flow(beta, 0.0, &d, 100, &p).unwrap();
            let analytic = (d.rho / beta).log(4.0).ceil() as usize;
            assert_eq!(r.exit_step, Some(analytic), "beta = {beta}");
        }
        // the positive axis lies inside the widened sector
        let r = flow(0.3, 0.0, &DomainSpec::default(), 100, &p).unwrap();
        assert!(!r.exited_domain);
        let r = flow(-0.3, 0.0, &DomainSpec::default(), 100, &p).unwrap();
        assert_eq!(r.exit_step, Some(1));
    }

    #[test]
    fn sector_distance() {
        let d = DomainSpec::default();
        let theta = d.beta_bar_angle();
        assert_eq!(d.distance_to_beta_bar(Complex64::from_polar(3.0, theta - 0.01)), 0.0);
        let z = Complex64::from_polar(2.0, theta + 0.3);
        assert!((d.distance_to_beta_bar(z) - 2.0 * 0.3f64.sin()).abs() < 1e-12);
        assert!(d.in_lambda_bar(Complex64::new(0.0, 0.0)));
        assert!(!d.in_lambda_bar(Complex64::from_polar(0.1, 1.0)));
    }
}
