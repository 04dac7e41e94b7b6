//! Inverse Laplace transforms along the sector contour `T^{-1} Gamma`, and the
//! interacting kernel and end-to-end distance obtained by inverting the free
//! Green's function at the effective killing rate.
//!
//! `Gamma` is the unit-circle arc `|arg z| <= b` joined to the two rays
//! `arg z = +-b, |z| >= 1`, with `pi/2 < b < 3pi/4`. Substituting `beta = z/T`,
//!
//! `(1/2 pi i) int e^{beta T} g(beta) d beta = (1/T) sum w e^{z} g(z/T)`,
//!
//! where `w` carries the Gauss-Legendre weight and `dz / (2 pi i)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::free::{endtoend_free_complex, green0, green_moment, p0, GreenQuery, SeriesTolerance};
use crate::lattice::LatticeParams;
use crate::rg_flow::{beta_eff, k_hat, CriticalTrajectory, DomainSpec, Horizon};

/// Gauss-Legendre order of every panel.
pub const PANEL_ORDER: usize = 8;

/// Target size of the dropped ray tail, `e^{R cos b}`.
pub const TRUNCATION: f64 = 1e-14;

/// Critical-trajectory length used for the effective killing rate; enough
/// for `|beta_hat|` down to `L^{-600}`.
pub const TRAJECTORY_LEN: usize = 400;

/// Series tolerance for integrands; tighter than the default so that series
/// truncation stays below the quadrature error estimate.
pub const INTEGRAND_TOL: f64 = 1e-15;

/// Rays are graded geometrically on `[1, GRADING_SPLIT]` and uniformly beyond.
const GRADING_SPLIT: f64 = 8.0;

/// Roundoff floor of the doubling test, in units of `eps * sum |w g|`.
const ROUNDING_FLOOR: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    pub b_beta: f64,
    pub arc_nodes: usize,
    /// Nodes per ray.
    pub ray_nodes: usize,
    pub ray_cutoff: f64,
    pub rel_tol: f64,
    pub max_refinements: usize,
}

impl Default for ContourSpec {
    fn default() -> Self {
        let b_beta = 5.0 * PI / 8.0;
        Self {
            b_beta,
            arc_nodes: 64,
            ray_nodes: 256,
            ray_cutoff: Self::default_cutoff(b_beta),
            rel_tol: 1e-8,
            max_refinements: 4,
        }
    }
}

impl ContourSpec {
    /// `R` with `e^{R cos b} = TRUNCATION`.
    pub fn default_cutoff(b_beta: f64) -> f64 {
        TRUNCATION.ln() / b_beta.cos()
    }

    /// Default contour with ray angle `b_beta` and its matching cutoff.
    pub fn with_angle(b_beta: f64) -> Result<Self> {
        let c = Self { b_beta, ray_cutoff: Self::default_cutoff(b_beta), ..Self::default() };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_beta > FRAC_PI_2 && self.b_beta < 0.75 * PI) {
            return Err(Error::InvalidParameter(format!(
                "contour angle must lie in (pi/2, 3pi/4), got {}",
                self.b_beta
            )));
        }
        if self.arc_nodes == 0 || self.arc_nodes % PANEL_ORDER != 0 {
            return Err(Error::InvalidParameter(format!(
                "arc_nodes must be a positive multiple of {PANEL_ORDER}, got {}",
                self.arc_nodes
            )));
        }
        if self.ray_nodes == 0 || self.ray_nodes % (2 * PANEL_ORDER) != 0 {
            return Err(Error::InvalidParameter(format!(
                "ray_nodes must be a positive multiple of {}, got {}",
                2 * PANEL_ORDER,
                self.ray_nodes
            )));
        }
        if !(self.ray_cutoff > GRADING_SPLIT) || !self.ray_cutoff.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ray cutoff must exceed {GRADING_SPLIT}, got {}",
                self.ray_cutoff
            )));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        Ok(())
    }
}

/// A contour integral with its node-doubling error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub value: Complex64,
    pub error: f64,
    /// Nodes used by the accepted (finest) rule.
    pub nodes: usize,
}

/// Several integrals sharing one set of integrand evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionMany {
    pub values: Vec<Complex64>,
    pub errors: Vec<f64>,
    pub nodes: usize,
}

impl InversionMany {
    pub fn get(&self, i: usize) -> Inversion {
        Inversion { value: self.values[i], error: self.errors[i], nodes: self.nodes }
    }
}

fn gl_rule() -> Vec<(f64, f64)> {
    GaussLegendre::new(NonZeroUsize::new(PANEL_ORDER).expect("nonzero order"))
        .as_node_weight_pairs()
        .to_vec()
}

/// Appends the nodes of `panels` equal panels in `s` on `[a, b]`, mapped by
/// `map(s) -> (z, dz/ds)`.
fn push_panels(
    out: &mut Vec<(Complex64, Complex64)>,
    rule: &[(f64, f64)],
    a: f64,
    b: f64,
    panels: usize,
    map: impl Fn(f64) -> (Complex64, Complex64),
) {
    let h = (b - a) / panels as f64;
    for k in 0..panels {
        let lo = a + k as f64 * h;
        for &(x, w) in rule {
            let s = lo + 0.5 * h * (x + 1.0);
            let (z, dz) = map(s);
            out.push((z, dz * (0.5 * h * w)));
        }
    }
}

/// Nodes `z` on `Gamma` and weights `e^z dz / (2 pi i)`, in a fixed order:
/// lower ray (inward), arc, upper ray (outward).
fn contour_nodes(c: &ContourSpec, level: usize) -> Vec<(Complex64, Complex64)> {
    let rule = gl_rule();
    let scale = 1usize << level;
    let arc_panels = c.arc_nodes / PANEL_ORDER * scale;
    let half = c.ray_nodes / (2 * PANEL_ORDER) * scale;
    let rot = Complex64::from_polar(1.0, c.b_beta);
    let split_log = GRADING_SPLIT.ln();

    let mut upper = Vec::with_capacity(2 * half * PANEL_ORDER);
    // r = e^s on [0, ln 8]
    push_panels(&mut upper, &rule, 0.0, split_log, half, |s| {
        let r = s.exp();
        (rot * r, rot * r)
    });
    push_panels(&mut upper, &rule, GRADING_SPLIT, c.ray_cutoff, half, |r| (rot * r, rot));

    let mut arc = Vec::with_capacity(arc_panels * PANEL_ORDER);
    push_panels(&mut arc, &rule, -c.b_beta, c.b_beta, arc_panels, |theta| {
        let z = Complex64::from_polar(1.0, theta);
        (z, Complex64::i() * z)
    });

    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    let finish = |(z, dz): (Complex64, Complex64)| (z, z.exp() * dz / two_pi_i);
    let mut nodes = Vec::with_capacity(2 * upper.len() + arc.len());
    // the lower ray is the mirror image traversed inward
    nodes.extend(upper.iter().rev().map(|&(z, dz)| finish((z.conj(), -dz.conj()))));
    nodes.extend(arc.into_iter().map(finish));
    nodes.extend(upper.into_iter().map(finish));
    nodes
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("T must be positive and finite, got {t}")))
    }
}

/// One quadrature pass: values and `sum |w g|` per component. Evaluation is
/// parallel; the reduction runs in node order so the bits do not depend on
/// the number of workers.
fn quadrature_pass<G>(g: &G, width: usize, t: f64, nodes: &[(Complex64, Complex64)]) -> Result<(Vec<Complex64>, Vec<f64>)>
where
    G: Fn(Complex64) -> Result<Vec<Complex64>> + Sync,
{
    let evals: Vec<Vec<Complex64>> = nodes.par_iter().map(|&(z, _)| g(z / t)).collect::<Result<_>>()?;
    let mut sum = vec![Complex64::new(0.0, 0.0); width];
    let mut abs = vec![0.0; width];
    for (&(_, w), e) in nodes.iter().zip(&evals) {
        if e.len() != width {
            return Err(Error::InvalidParameter(format!(
                "integrand returned {} components, expected {width}",
                e.len()
            )));
        }
        for i in 0..width {
            let term = w * e[i] / t;
            sum[i] += term;
            abs[i] += term.norm();
        }
    }
    Ok((sum, abs))
}

/// `(1/2 pi i) int_{T^{-1} Gamma} e^{beta T} g(beta) d beta` for each of the
/// `width` components of `g`. The rule is doubled until consecutive passes
/// agree to `rel_tol` (or to roundoff) in every component.
pub fn invert_many<G>(g: G, width: usize, t: f64, c: &ContourSpec) -> Result<InversionMany>
where
    G: Fn(Complex64) -> Result<Vec<Complex64>> + Sync,
{
    check_time(t)?;
    c.validate()?;
    let nodes = contour_nodes(c, 0);
    let (mut prev, _) = quadrature_pass(&g, width, t, &nodes)?;
    let mut worst = f64::INFINITY;
    for level in 1..=c.max_refinements {
        let nodes = contour_nodes(c, level);
        let (cur, abs) = quadrature_pass(&g, width, t, &nodes)?;
        let errors: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| (a - b).norm()).collect();
        let ok = (0..width).all(|i| errors[i] <= c.rel_tol * cur[i].norm() + ROUNDING_FLOOR * abs[i]);
        if ok {
            return Ok(InversionMany { values: cur, errors, nodes: nodes.len() });
        }
        worst = (0..width).map(|i| errors[i] / cur[i].norm()).fold(0.0, f64::max);
        prev = cur;
    }
    Err(Error::QuadratureStall { refinements: c.max_refinements, estimate: worst })
}

/// Scalar form of [`invert_many`].
pub fn invert<G>(g: G, t: f64, c: &ContourSpec) -> Result<Inversion>
where
    G: Fn(Complex64) -> Result<Complex64> + Sync,
{
    Ok(invert_many(|beta| Ok(vec![g(beta)?]), 1, t, c)?.get(0))
}

/// Forward transform `int_0^inf e^{-beta T} f(T) dT` for `Re beta > 0` and
/// bounded `f`, by Gauss-Legendre panels on `[0, 1/64]` and then on
/// doubling intervals up to where `e^{-Re beta T}` drops below `1e-17`.
pub fn laplace_transform<F>(f: F, beta: Complex64, rel_tol: f64, max_refinements: usize) -> Result<Inversion>
where
    F: Fn(f64) -> Result<Complex64> + Sync,
{
    if !(beta.re > 0.0) {
        return Err(Error::InvalidParameter(format!("forward transform needs Re beta > 0, got {beta}")));
    }
    let t_max = 40.0 / beta.re;
    let mut edges = vec![0.0, 1.0 / 64.0];
    while *edges.last().expect("nonempty") < t_max {
        let last = *edges.last().expect("nonempty");
        edges.push(2.0 * last);
    }
    let rule = gl_rule();
    let pass = |split: usize| -> Result<(Complex64, f64, usize)> {
        let mut nodes = Vec::new();
        for pair in edges.windows(2) {
            push_panels(&mut nodes, &rule, pair[0], pair[1], split, |s| {
                (Complex64::new(s, 0.0), Complex64::new(1.0, 0.0))
            });
        }
        let vals: Vec<Complex64> = nodes.par_iter().map(|&(s, _)| f(s.re)).collect::<Result<_>>()?;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut abs = 0.0;
        for (&(s, w), v) in nodes.iter().zip(&vals) {
            let term = w * (-beta * s.re).exp() * v;
            sum += term;
            abs += term.norm();
        }
        Ok((sum, abs, nodes.len()))
    };
    let (mut prev, _, _) = pass(1)?;
    let mut worst = f64::INFINITY;
    for level in 1..=max_refinements {
        let (cur, abs, n) = pass(1 << level)?;
        let err = (cur - prev).norm();
        if err <= rel_tol * cur.norm() + ROUNDING_FLOOR * abs {
            return Ok(Inversion { value: cur, error: err, nodes: n });
        }
        worst = err / cur.norm();
        prev = cur;
    }
    Err(Error::QuadratureStall { refinements: max_refinements, estimate: worst })
}

/// `(T, x, lambda)` for the interacting kernel `P_lambda(T, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractingKernelQuery {
    pub t: f64,
    pub x_level: u32,
    pub lambda: Complex64,
}

impl InteractingKernelQuery {
    pub fn new(t: f64, x_level: u32, lambda: impl Into<Complex64>) -> Result<Self> {
        check_time(t)?;
        Ok(Self { t, x_level, lambda: lambda.into() })
    }
}

/// `ell(T^{-1})` from the flow next to the closed approximant
/// `1 + B lambda (4 log_L T + log_L |1 + lambda log_L T|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllLogFactor {
    pub flow: Complex64,
    pub approx: Complex64,
}

/// Interacting end-to-end distance with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndToEnd {
    /// `(sum_x P_lambda |x|^alpha / sum_x P_lambda)^{1/alpha}`, real part.
    pub value: f64,
    /// `|Im| / |Re|` of the same quantity.
    pub imag_residue: f64,
    /// `ell(T^{-1})`.
    pub ell: Complex64,
    /// `T ell(T^{-1})^{1/4}`.
    pub t_eff: Complex64,
    /// Scale `k_{1/T}` at which the moment sums are dominated.
    pub scale_k: usize,
    /// Quadrature error of the ratio, propagated to first order.
    pub error: f64,
}

/// Effective-coupling evaluator for one `lambda`: the critical trajectory is
/// solved once and shared by every contour node.
#[derive(Debug, Clone)]
pub struct Interacting {
    lambda: Complex64,
    traj: CriticalTrajectory,
    p: LatticeParams,
    c: ContourSpec,
    tol: SeriesTolerance,
}

impl Interacting {
    pub fn new(lambda: impl Into<Complex64>, d: &DomainSpec, p: &LatticeParams, c: &ContourSpec) -> Result<Self> {
        let lambda = lambda.into();
        d.validate()?;
        c.validate()?;
        if !d.in_lambda_domain(lambda) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} outside the coupling sector")));
        }
        let traj = CriticalTrajectory::solve(lambda, TRAJECTORY_LEN, p)?;
        let tol = SeriesTolerance::new(INTEGRAND_TOL, SeriesTolerance::default().max_terms)?;
        Ok(Self { lambda, traj, p: p.clone(), c: *c, tol })
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    pub fn trajectory(&self) -> &CriticalTrajectory {
        &self.traj
    }

    pub fn contour(&self) -> &ContourSpec {
        &self.c
    }

    /// `beta_eff,inf(beta_hat)`.
    pub fn beta_eff(&self, beta_hat: Complex64) -> Result<Complex64> {
        if self.lambda == Complex64::new(0.0, 0.0) {
            return Ok(beta_hat);
        }
        beta_eff(beta_hat, &self.traj, Horizon::Infinity, &self.p)
    }

    /// `ell(T^{-1})^{1/4} = T^{-1} / beta_eff,inf(T^{-1})`.
    pub fn ell_quarter(&self, t: f64) -> Result<Complex64> {
        check_time(t)?;
        let beta_hat = Complex64::new(1.0 / t, 0.0);
        Ok(beta_hat / self.beta_eff(beta_hat)?)
    }

    pub fn ell(&self, t: f64) -> Result<Complex64> {
        Ok(self.ell_quarter(t)?.powi(4))
    }

    /// Running coupling `lambda_k` on the critical trajectory.
    pub fn lambda_k(&self, k: usize) -> Complex64 {
        self.traj.lambda_at(k.min(self.traj.len() - 1))
    }

    /// `P_lambda(T, x)` for every level in `levels`, with one effective-rate
    /// evaluation per contour node.
    pub fn p_lambda_levels(&self, t: f64, levels: &[u32]) -> Result<InversionMany> {
        let g = |beta_hat: Complex64| -> Result<Vec<Complex64>> {
            let eff = self.beta_eff(beta_hat)?;
            levels.iter().map(|&n| green0(&self.p, GreenQuery::new(eff, n), &self.tol)).collect()
        };
        invert_many(g, levels.len(), t, &self.c)
    }

    pub fn p_lambda(&self, t: f64, x_level: u32) -> Result<Inversion> {
        Ok(self.p_lambda_levels(t, &[x_level])?.get(0))
    }

    /// `ell^{1/4} P0(T ell^{1/4}, x)` with `ell = ell(T^{-1})`.
    pub fn p_lambda_leading(&self, t: f64, x_level: u32) -> Result<Complex64> {
        let q = self.ell_quarter(t)?;
        Ok(q * p0(t * q, x_level, &self.p, &self.tol)?)
    }

    /// End-to-end distance from the ratio of the inverted `|x|^alpha`
    /// moment and the inverted normalization `sum_x G0(beta_eff, x) = 1/beta_eff`.
    pub fn endtoend(&self, t: f64, alpha: f64) -> Result<EndToEnd> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 2), got {alpha}")));
        }
        let g = |beta_hat: Complex64| -> Result<Vec<Complex64>> {
            let eff = self.beta_eff(beta_hat)?;
            Ok(vec![green_moment(eff, alpha, &self.p, &self.tol)?, 1.0 / eff])
        };
        let inv = invert_many(g, 2, t, &self.c)?;
        let (num, den) = (inv.values[0], inv.values[1]);
        let ratio = num / den;
        let rel = inv.errors[0] / num.norm() + inv.errors[1] / den.norm();
        let root = ratio.powf(1.0 / alpha);
        let quarter = self.ell_quarter(t)?;
        let scale_k = if self.lambda == Complex64::new(0.0, 0.0) {
            0
        } else {
            k_hat(1.0 / t, &self.traj, &self.p)?
        };
        Ok(EndToEnd {
            value: root.re,
            imag_residue: root.im.abs() / root.re.abs(),
            ell: quarter.powi(4),
            t_eff: t * quarter,
            scale_k,
            error: root.norm() * rel / alpha,
        })
    }

    /// Right side of the time-rescaling law:
    /// `E0(|omega(T ell^{1/4})|^alpha)^{1/alpha}`.
    pub fn endtoend_theory(&self, t: f64, alpha: f64) -> Result<Complex64> {
        let t_eff = t * self.ell_quarter(t)?;
        Ok(endtoend_free_complex(t_eff, alpha, &self.p, &self.tol)?.powf(1.0 / alpha))
    }
}

/// `P_lambda(T, x)` by inverting `G0(beta_eff,inf(beta_hat), x)` on the contour.
pub fn p_lambda(q: &InteractingKernelQuery, d: &DomainSpec, p: &LatticeParams, c: &ContourSpec) -> Result<Inversion> {
    check_time(q.t)?;
    Interacting::new(q.lambda, d, p, c)?.p_lambda(q.t, q.x_level)
}

/// Leading term `ell^{1/4} P0(T ell^{1/4}, x)`; no contour integral.
pub fn p_lambda_leading(q: &InteractingKernelQuery, d: &DomainSpec, p: &LatticeParams) -> Result<Complex64> {
    check_time(q.t)?;
    Interacting::new(q.lambda, d, p, &ContourSpec::default())?.p_lambda_leading(q.t, q.x_level)
}

/// Closed approximant of `ell(T^{-1})` with the `O(lambda)` constant dropped.
pub fn ell_approx(t: f64, lambda: impl Into<Complex64>, p: &LatticeParams) -> Complex64 {
    let lambda = lambda.into();
    let log_t = t.ln() / p.l_f64().ln();
    let inner = (1.0 + lambda * log_t).norm().ln() / p.l_f64().ln();
    1.0 + p.b() * lambda * (4.0 * log_t + inner)
}

/// `ell(T^{-1})` from the flow and from the closed approximant, for `T > 1`.
pub fn ell_log_factor(t: f64, lambda: impl Into<Complex64>, p: &LatticeParams) -> Result<EllLogFactor> {
    let lambda = lambda.into();
    if !(t > 1.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("T must exceed 1, got {t}")));
    }
    let ctx = Interacting::new(lambda, &DomainSpec::default(), p, &ContourSpec::default())?;
    Ok(EllLogFactor { flow: ctx.ell(t)?, approx: ell_approx(t, lambda, p) })
}

/// Interacting end-to-end distance `E^T_{0,lambda}(|omega(T)|^alpha)^{1/alpha}`.
pub fn endtoend_interacting(
    t: f64,
    alpha: f64,
    lambda: impl Into<Complex64>,
    d: &DomainSpec,
    p: &LatticeParams,
    c: &ContourSpec,
) -> Result<EndToEnd> {
    Interacting::new(lambda, d, p, c)?.endtoend(t, alpha)
}
