//! Flow of `beta_hat = beta - beta^c` relative to the critical trajectory.
//!
//! The critical trajectory is obtained as a boundary-value problem: the
//! backward `beta` map contracts by `L^-2` per step, so solving backward
//! from `beta_M = 0` with `lambda_j` carried forward converges to the
//! bounded solution at full `f64` accuracy for every `j <= M - 64`.

use num_complex::Complex64;

use super::ring::MapConsts;
use super::{advance_derivatives, consts_c64, CouplingState, DomainSpec, FlowReport, DENOMINATOR_FLOOR};
use crate::error::{Error, Result};
use crate::lattice::LatticeParams;
use crate::numeric::cdiv;

/// Extra backward steps beyond the requested length.
const BVP_PADDING: usize = 64;

const BVP_ITERATIONS: usize = 200;

/// `|beta_hat_k|` beyond this ends a shifted trajectory.
pub const SATURATION: f64 = 1e150;

/// Step cap for `beta_eff` at infinite horizon.
pub const EFF_CAP: usize = 10_000;

const EFF_STABILITY: f64 = 1e-12;

/// Critical trajectory `(beta^c_j, lambda^c_j)` for `0 <= j <= len`.
#[derive(Debug, Clone)]
pub struct CriticalTrajectory {
    lambda: Complex64,
    betas: Vec<Complex64>,
    lambdas: Vec<Complex64>,
}

impl CriticalTrajectory {
    pub const DEFAULT_LEN: usize = EFF_CAP;

    pub fn solve(lambda: impl Into<Complex64>, len: usize, p: &LatticeParams) -> Result<Self> {
        let lambda = lambda.into();
        let m = len + BVP_PADDING;
        let b2 = 2.0 * p.b();
        let b8 = 8.0 * p.b();
        let inv_l2 = 1.0 / (p.l_f64() * p.l_f64());
        let mut betas = vec![Complex64::new(0.0, 0.0); m + 1];
        let mut lambdas = vec![lambda; m + 1];
        let mut prev_change = f64::INFINITY;
        for _ in 0..BVP_ITERATIONS {
            for j in 0..m {
                let u = 1.0 + betas[j];
                if u.norm() <= DENOMINATOR_FLOOR {
                    return Err(Error::DenominatorCollapse { step: j });
                }
                lambdas[j + 1] = lambdas[j] - b8 * lambdas[j] * lambdas[j] / (u * u);
                // the truncated map overshoots through zero for large couplings
                if lambdas[j + 1].re <= 0.0 && lambda.re > 0.0 {
                    return Err(Error::NonConvergence { iterations: 0, what: "coupling overshoots zero" });
                }
            }
            let mut change: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for j in (0..m).rev() {
                // small root of beta^2 + (1 - c) beta + (2B lambda - c) = 0
                let c = betas[j + 1] * inv_l2;
                let q = b2 * lambdas[j] - c;
                let a = 1.0 - c;
                let root = -2.0 * q / (a + (a * a - 4.0 * q).sqrt());
                if !root.is_finite() {
                    return Err(Error::NonConvergence { iterations: 0, what: "critical trajectory left the finite range" });
                }
                change = change.max((root - betas[j]).norm());
                scale = scale.max(root.norm());
                betas[j] = root;
            }
            // stop at the rounding floor or once updates stop shrinking near it
            let stalled = change >= 0.5 * prev_change && change <= 1e-13 * scale;
            prev_change = change;
            if change <= 1e-16 * scale || change == 0.0 || stalled {
                betas.truncate(len + 1);
                lambdas.truncate(len + 1);
                return Ok(Self { lambda, betas, lambdas });
            }
        }
        Err(Error::NonConvergence { iterations: BVP_ITERATIONS, what: "critical trajectory" })
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    /// Largest step index held.
    pub fn len(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn beta_c(&self) -> Complex64 {
        self.betas[0]
    }

    pub fn beta(&self, j: usize) -> Complex64 {
        self.betas[j]
    }

    pub fn lambda_at(&self, j: usize) -> Complex64 {
        self.lambdas[j]
    }
}

/// Iterator over the difference flow. The coupling is carried as its
/// offset from the critical coupling so neither component cancels.
struct Shifted<'a> {
    traj: &'a CriticalTrajectory,
    consts: MapConsts<Complex64>,
    dlam_offset: Complex64,
    state: CouplingState,
}

impl<'a> Shifted<'a> {
    fn new(beta_hat: Complex64, traj: &'a CriticalTrajectory, p: &LatticeParams) -> Self {
        let state = CouplingState::initial(beta_hat, traj.lambda());
        Self { traj, consts: consts_c64(p), dlam_offset: Complex64::new(0.0, 0.0), state }
    }

    fn next(&mut self) -> Result<Option<CouplingState>> {
        let s = self.state;
        if s.step >= self.traj.len() || s.beta.norm() > SATURATION {
            return Ok(None);
        }
        let c = &self.consts;
        let (bc, lc) = (self.traj.beta(s.step), self.traj.lambda_at(s.step));
        let uc = 1.0 + bc;
        let u = uc + s.beta;
        if u.norm() <= DENOMINATOR_FLOOR || uc.norm() <= DENOMINATOR_FLOOR {
            return Err(Error::DenominatorCollapse { step: s.step });
        }
        // lambda/u - lambda_c/uc and lambda/u + lambda_c/uc
        let diff = cdiv(self.dlam_offset, u) - cdiv(cdiv(lc * s.beta, u), uc);
        let sum = cdiv(s.lambda, u) + cdiv(lc, uc);
        let beta = c.l2 * (s.beta + c.b2 * diff);
        self.dlam_offset -= c.b8 * diff * sum;
        let (dbeta, dlambda) = advance_derivatives(c, &u, &s.lambda, &s.dbeta, &s.dlambda);
        let lambda = self.traj.lambda_at(s.step + 1) + self.dlam_offset;
        self.state = CouplingState { step: s.step + 1, beta, lambda, dbeta, dlambda };
        Ok(Some(self.state))
    }
}

/// Trajectory of `(beta_hat_k, lambda_k)` with derivatives in `beta_hat`.
/// Stops at domain exit, at `max_steps`, or where `|beta_hat_k|` saturates.
pub fn shifted_flow(
    beta_hat: impl Into<Complex64>,
    traj: &CriticalTrajectory,
    d: &DomainSpec,
    max_steps: usize,
    p: &LatticeParams,
) -> Result<FlowReport> {
    if max_steps == 0 || max_steps > traj.len() {
        return Err(Error::InvalidParameter(format!(
            "max_steps must lie in 1..={} for this critical trajectory",
            traj.len()
        )));
    }
    d.validate()?;
    let mut it = Shifted::new(beta_hat.into(), traj, p);
    let mut trajectory = vec![it.state];
    if !d.contains(it.state.beta, it.state.lambda) {
        return Ok(FlowReport { trajectory, exit_step: Some(0), exited_domain: true });
    }
    while it.state.step < max_steps {
        let Some(s) = it.next()? else { break };
        trajectory.push(s);
        if !d.contains(s.beta, s.lambda) {
            return Ok(FlowReport { trajectory, exit_step: Some(s.step), exited_domain: true });
        }
    }
    Ok(FlowReport { trajectory, exit_step: None, exited_domain: false })
}

/// Largest `k` with `|beta_hat_k| <= 1`, or 0 if there is none.
pub fn k_hat(beta_hat: impl Into<Complex64>, traj: &CriticalTrajectory, p: &LatticeParams) -> Result<usize> {
    let mut it = Shifted::new(beta_hat.into(), traj, p);
    let mut last = if it.state.beta.norm() <= 1.0 { Some(0) } else { None };
    // growth past modulus 1e3 is geometric and never returns
    while it.state.beta.norm() <= 1e3 {
        let Some(s) = it.next()? else { break };
        if s.beta.norm() <= 1.0 {
            last = Some(s.step);
        }
    }
    Ok(last.unwrap_or(0))
}

/// Horizon for the effective killing rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Step(usize),
    Infinity,
}

/// `beta_eff,k = L^{-2k} beta_hat_k`; at infinite horizon the limit, taken
/// once consecutive ratios differ from 1 by less than `1e-12`.
pub fn beta_eff(
    beta_hat: impl Into<Complex64>,
    traj: &CriticalTrajectory,
    horizon: Horizon,
    p: &LatticeParams,
) -> Result<Complex64> {
    let beta_hat = beta_hat.into();
    if beta_hat.norm() == 0.0 {
        return Err(Error::InvalidParameter("beta_hat must be nonzero".into()));
    }
    let l2 = p.l_f64() * p.l_f64();
    let mut it = Shifted::new(beta_hat, traj, p);
    // carried as beta_hat * prod(factors) to stay finite past saturation
    let mut eff = beta_hat;
    match horizon {
        Horizon::Step(k) => {
            if k > traj.len() {
                return Err(Error::InvalidParameter(format!("horizon {k} beyond trajectory length {}", traj.len())));
            }
            while it.state.step < k {
                let prev = it.state.beta;
                let Some(s) = it.next()? else {
                    return Err(Error::NonConvergence { iterations: it.state.step, what: "beta_hat saturated" });
                };
                if prev.norm() == 0.0 || s.beta.norm() == 0.0 {
                    return Err(Error::ZeroTrajectory { step: s.step });
                }
                eff *= s.beta / (l2 * prev);
            }
            Ok(eff)
        }
        Horizon::Infinity => {
            let cap = EFF_CAP.min(traj.len());
            while it.state.step < cap {
                let prev = it.state.beta;
                let Some(s) = it.next()? else { break };
                if s.beta.norm() == 0.0 {
                    return Err(Error::ZeroTrajectory { step: s.step });
                }
                let ratio = s.beta / (l2 * prev);
                eff *= ratio;
                if (ratio - 1.0).norm() < EFF_STABILITY {
                    return Ok(eff);
                }
            }
            Err(Error::NonConvergence { iterations: it.state.step, what: "beta_eff at infinite horizon" })
        }
    }
}

/// `ell_k = (beta_hat / beta_eff,k)^4`, also at infinite horizon.
pub fn ell_k(
    beta_hat: impl Into<Complex64>,
    traj: &CriticalTrajectory,
    horizon: Horizon,
    p: &LatticeParams,
) -> Result<Complex64> {
    let beta_hat = beta_hat.into();
    let eff = beta_eff(beta_hat, traj, horizon, p)?;
    Ok((beta_hat / eff).powi(4))
}

/// `exp(sum_{j < k_hat} 8B / (lambda^-1 + 8B j))`.
pub fn l_k_aux(lambda: impl Into<Complex64>, k_hat_val: usize, p: &LatticeParams) -> Complex64 {
    let lambda = lambda.into();
    let b8 = 8.0 * p.b();
    let sum: Complex64 = (0..k_hat_val).map(|j| b8 * lambda / (1.0 + b8 * j as f64 * lambda)).sum();
    sum.exp()
}

/// `lambda / (1 + 8B lambda k_hat)`.
pub fn lambda_k_model(lambda: impl Into<Complex64>, k_hat_val: usize, p: &LatticeParams) -> Complex64 {
    let lambda = lambda.into();
    lambda / (1.0 + 8.0 * p.b() * lambda * k_hat_val as f64)
}

/// `1/2 log_L(1 + |beta_hat|^-1) + 1/8 log_L |1 + 4B lambda log_L(1 + |beta_hat|^-1)|`.
pub fn k_hat_model(beta_hat_abs: f64, lambda: impl Into<Complex64>, p: &LatticeParams) -> f64 {
    let log_l = |x: f64| x.ln() / p.l_f64().ln();
    let big_log = log_l(1.0 + 1.0 / beta_hat_abs);
    0.5 * big_log + 0.125 * log_l((1.0 + 4.0 * p.b() * lambda.into() * big_log).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2() -> LatticeParams {
        LatticeParams::new(2).unwrap()
    }

    #[test]
    fn free_trajectory_is_zero() {
        let t = CriticalTrajectory::solve(0.0, 50, &l2()).unwrap();
        assert!((0..=50).all(|j| t.beta(j) == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn trajectory_satisfies_the_forward_map() {
        let p = l2();
        let lam = Complex64::from_polar(0.03, 0.3);
        let t = CriticalTrajectory::solve(lam, 300, &p).unwrap();
        let b = p.b();
        for j in 0..300 {
            let (bj, lj) = (t.beta(j), t.lambda_at(j));
            let next = 4.0 * (bj + 2.0 * b * lj / (1.0 + bj));
            // forward residual is amplified by L^2 only once
            assert!((next - t.beta(j + 1)).norm() < 1e-15, "j = {j}");
        }
        assert!(t.beta(300).norm() < 3.0 * t.lambda_at(300).norm());
    }

    #[test]
    fn shifted_trivial_cases() {
        let p = l2();
        let d = DomainSpec::default();
        let t = CriticalTrajectory::solve(0.02, 100, &p).unwrap();
        let r = shifted_flow(0.0, &t, &d, 100, &p).unwrap();
        assert!(r.trajectory.iter().all(|s| s.beta == Complex64::new(0.0, 0.0)));
        let free = CriticalTrajectory::solve(0.0, 100, &p).unwrap();
        let r = shifted_flow(1e-5, &free, &d, 30, &p).unwrap();
        for s in &r.trajectory {
            assert_eq!(s.beta.re, 1e-5 * 4f64.powi(s.step as i32));
        }
    }

    #[test]
    fn shifted_matches_difference_of_flows_while_resolvable() {
        // the f64 difference of two forward flows is accurate for ~10 steps
        let p = l2();
        let lam = 0.02;
        let t = CriticalTrajectory::solve(lam, 100, &p).unwrap();
        let bc = t.beta_c();
        let bh = 0.01;
        let d = DomainSpec::default();
        let a = super::super::flow(bh + bc, lam, &d, 10, &p).unwrap();
        let s = shifted_flow(bh, &t, &d, 10, &p).unwrap();
        for k in 0..=10 {
            let diff = a.trajectory[k].beta - t.beta(k);
            assert!((diff - s.trajectory[k].beta).norm() < 1e-12 * s.trajectory[k].beta.norm(), "k = {k}");
            assert!((a.trajectory[k].lambda - s.trajectory[k].lambda).norm() < 1e-15);
        }
    }

    #[test]
    fn k_hat_trivial_cases() {
        let p = l2();
        let free = CriticalTrajectory::solve(0.0, 200, &p).unwrap();
        assert_eq!(k_hat(2.0, &free, &p).unwrap(), 0);
        for &b in &[0.3, 1e-2, 1e-5, 1e-9] {
            let expect = ((1.0f64 / b).log(4.0)).floor() as usize;
            assert_eq!(k_hat(b, &free, &p).unwrap(), expect, "beta_hat = {b}");
        }
    }

    #[test]
    fn free_effective_rate_is_identity() {
        let p = l2();
        let free = CriticalTrajectory::solve(0.0, 200, &p).unwrap();
        let b = Complex64::new(1e-3, 2e-3);
        assert_eq!(beta_eff(b, &free, Horizon::Step(9), &p).unwrap(), b);
        assert_eq!(beta_eff(b, &free, Horizon::Infinity, &p).unwrap(), b);
        assert_eq!(ell_k(b, &free, Horizon::Step(4), &p).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn aux_and_models() {
        let p = l2();
        let b = p.b();
        assert_eq!(l_k_aux(0.03, 0, &p), Complex64::new(1.0, 0.0));
        assert!((l_k_aux(0.03, 1, &p).re - (8.0 * b * 0.03f64).exp()).abs() < 1e-15);
        assert_eq!(lambda_k_model(0.03, 0, &p), Complex64::new(0.03, 0.0));
        assert!((k_hat_model(1e-4, 0.0, &p) - 0.5 * (1.0f64 + 1e4).log2()).abs() < 1e-12);
    }

    #[test]
    fn overshooting_coupling_is_rejected() {
        assert!(CriticalTrajectory::solve(0.09, 100, &l2()).is_err());
    }

    #[test]
    fn infinite_horizon_needs_nonzero_beta() {
        let p = l2();
        let t = CriticalTrajectory::solve(0.02, 100, &p).unwrap();
        assert!(beta_eff(0.0, &t, Horizon::Infinity, &p).is_err());
    }
}
