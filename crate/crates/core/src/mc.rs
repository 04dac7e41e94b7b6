//! Continuous-time Monte Carlo of the free Levy walk, reweighted by the
//! self-repulsion `exp(-lambda tau^2)`.
//!
//! Path `i` draws from its own ChaCha stream `(seed, i)`, and every reduction
//! runs in path order, so results depend only on `(seed, config)`.

use std::collections::BTreeMap;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{sample_shell, LatticeParams, Site};

/// Estimates with an effective sample size below this are rejected.
pub const MIN_ESS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub t: f64,
    /// Repulsion strength; real and nonnegative.
    pub lambda: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub p: LatticeParams,
    pub alpha: f64,
}

impl McConfig {
    pub fn new(t: f64, lambda: f64, n_paths: usize, seed: u64, p: LatticeParams, alpha: f64) -> Result<Self> {
        let cfg = Self { t, lambda, n_paths, seed, p, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidParameter(format!("T must be positive and finite, got {}", self.t)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be real and >= 0, got {}", self.lambda)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidParameter("n_paths must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 2), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// The random stream of path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One simulated path on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub jump_times: Vec<f64>,
    /// Starts at the origin; one more entry than `jump_times`.
    pub sites: Vec<Site>,
    pub local_times: BTreeMap<Site, f64>,
    pub endpoint: Site,
    /// Jumps whose level exceeded the digit capacity and were folded into
    /// the top shell.
    pub depth_capped: u32,
}

/// Jump level `N >= 1` with probability `C shell_count(N) L^{-6N} / gamma
/// = (1 - L^{-2}) L^{-2(N-1)}`, by inversion of `P(N > m) = L^{-2m}`.
/// Levels beyond the capacity are folded into the top shell.
fn sample_level<R: Rng + ?Sized>(p: &LatticeParams, rng: &mut R) -> (u32, bool) {
    let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let m = (-u.ln() / (2.0 * p.l_f64().ln())).floor();
    let level = m + 1.0;
    let cap = p.max_depth() as f64;
    if level > cap {
        (p.max_depth() as u32, true)
    } else {
        (level as u32, false)
    }
}

fn exp_holding<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    -u.ln() / rate
}

/// Visits `(site, holding time)` in path order and returns
/// `(endpoint, depth_capped)`.
fn walk<R: Rng + ?Sized>(
    cfg: &McConfig,
    rng: &mut R,
    mut visit: impl FnMut(&Site, f64, Option<f64>),
) -> Result<(Site, u32)> {
    let p = &cfg.p;
    let gamma = p.gamma();
    let mut site = Site::zero();
    let mut clock = 0.0;
    let mut capped = 0;
    loop {
        let next = clock + exp_holding(gamma, rng);
        if next >= cfg.t {
            visit(&site, cfg.t - clock, None);
            return Ok((site, capped));
        }
        visit(&site, next - clock, Some(next));
        let (level, folded) = sample_level(p, rng);
        capped += folded as u32;
        let step = sample_shell(level, p, rng)?;
        site = site.add(&step, p);
        clock = next;
    }
}

/// Exact simulation: `Exp(gamma)` holding times, jump level from the shell
/// rates, uniform site within the shell, displacement added by the group law.
pub fn simulate_path<R: Rng + ?Sized>(cfg: &McConfig, rng: &mut R) -> Result<PathRecord> {
    let mut jump_times = Vec::new();
    let mut sites = Vec::new();
    let mut local_times = BTreeMap::new();
    let (endpoint, depth_capped) = walk(cfg, rng, |site, dt, jump| {
        sites.push(site.clone());
        *local_times.entry(site.clone()).or_insert(0.0) += dt;
        if let Some(t) = jump {
            jump_times.push(t);
        }
    })?;
    Ok(PathRecord { jump_times, sites, local_times, endpoint, depth_capped })
}

/// `sum_x tau(x)^2`.
pub fn tau_squared(path: &PathRecord) -> f64 {
    path.local_times.values().map(|t| t * t).sum()
}

/// What the estimators need from one path.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PathSummary {
    level: u32,
    tau2: f64,
    capped: u32,
}

/// Same draws as [`simulate_path`], without keeping the trajectory. Local
/// times are summed in canonical site order.
fn summarize<R: Rng + ?Sized>(cfg: &McConfig, rng: &mut R) -> Result<PathSummary> {
    let mut visits: Vec<(Site, f64)> = Vec::new();
    let (endpoint, capped) = walk(cfg, rng, |site, dt, _| visits.push((site.clone(), dt)))?;
    visits.sort_by(|a, b| a.0.cmp(&b.0));
    let mut tau2 = 0.0;
    let mut i = 0;
    while i < visits.len() {
        let mut local = 0.0;
        let mut j = i;
        while j < visits.len() && visits[j].0 == visits[i].0 {
            local += visits[j].1;
            j += 1;
        }
        tau2 += local * local;
        i = j;
    }
    Ok(PathSummary { level: endpoint.level(), tau2, capped })
}

/// Per-path endpoint levels and `tau^2` for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct McSample {
    cfg: McConfig,
    levels: Vec<u32>,
    tau2: Vec<f64>,
    /// Total number of folded jumps across all paths.
    pub depth_capped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndToEndEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl McSample {
    pub fn simulate(cfg: &McConfig) -> Result<Self> {
        cfg.validate()?;
        let summaries: Vec<PathSummary> = (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| summarize(cfg, &mut path_rng(cfg.seed, i)))
            .collect::<Result<_>>()?;
        let depth_capped = summaries.iter().map(|s| s.capped as u64).sum();
        Ok(Self {
            cfg: cfg.clone(),
            levels: summaries.iter().map(|s| s.level).collect(),
            tau2: summaries.iter().map(|s| s.tau2).collect(),
            depth_capped,
        })
    }

    pub fn config(&self) -> &McConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn tau_squared(&self) -> &[f64] {
        &self.tau2
    }

    pub fn endpoint_levels(&self) -> &[u32] {
        &self.levels
    }

    /// Log-weights `-lambda tau^2` and their maximum.
    fn log_weights(&self) -> (Vec<f64>, f64) {
        let lw: Vec<f64> = self.tau2.iter().map(|t| -self.cfg.lambda * t).collect();
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lw, max)
    }

    /// Self-normalized `[sum w |X|^alpha / sum w]^{1/alpha}` with a
    /// delta-method standard error.
    pub fn endtoend(&self) -> Result<EndToEndEstimate> {
        let (lw, max) = self.log_weights();
        let w: Vec<f64> = lw.iter().map(|l| (l - max).exp()).collect();
        let (l, alpha) = (self.cfg.p.l_f64(), self.cfg.alpha);
        let y: Vec<f64> = self.levels.iter().map(|&n| if n == 0 { 0.0 } else { l.powf(alpha * n as f64) }).collect();
        let s0: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|w| w * w).sum();
        let ess = s0 * s0 / s2;
        if ess < MIN_ESS {
            return Err(Error::DegenerateWeights { ess });
        }
        let ratio = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / s0;
        let var = w.iter().zip(&y).map(|(w, y)| (w * (y - ratio)).powi(2)).sum::<f64>() / (s0 * s0);
        let estimate = ratio.powf(1.0 / alpha);
        let std_error = estimate / (alpha * ratio) * var.sqrt();
        Ok(EndToEndEstimate { estimate, std_error, ess })
    }

    /// `e^{-beta_c T} E0(w 1{|X| = L^N}) / shell_count(N)` for each level,
    /// with `w = exp(-lambda tau^2)`; pass `beta_c = 0` for the untilted kernel.
    pub fn kernel(&self, x_levels: &[u32], beta_c: f64) -> Result<Vec<KernelEstimate>> {
        let (lw, max) = self.log_weights();
        let w: Vec<f64> = lw.iter().map(|l| (l - max).exp()).collect();
        let n = self.len() as f64;
        let ess = {
            let s0: f64 = w.iter().sum();
            s0 * s0 / w.iter().map(|w| w * w).sum::<f64>()
        };
        if ess < MIN_ESS {
            return Err(Error::DegenerateWeights { ess });
        }
        let log_scale = max - beta_c * self.cfg.t;
        x_levels
            .iter()
            .map(|&level| {
                let hits = w.iter().zip(&self.levels).map(|(&w, &l)| if l == level { w } else { 0.0 });
                let (s1, s2) = hits.fold((0.0, 0.0), |(a, b), h| (a + h, b + h * h));
                let mean = s1 / n;
                let var = (s2 / n - mean * mean).max(0.0) / n;
                let scale = log_scale.exp() / self.cfg.p.shell_weight(level);
                Ok(KernelEstimate { estimate: scale * mean, std_error: scale * var.sqrt() })
            })
            .collect()
    }
}

/// Self-normalized end-to-end estimate for `cfg`.
pub fn weighted_endtoend(cfg: &McConfig) -> Result<EndToEndEstimate> {
    McSample::simulate(cfg)?.endtoend()
}

/// Per-site kernel estimate at level `x_level`, tilted by `e^{-beta_c T}`.
pub fn weighted_kernel(cfg: &McConfig, x_level: u32, beta_c: f64) -> Result<KernelEstimate> {
    Ok(McSample::simulate(cfg)?.kernel(&[x_level], beta_c)?[0])
}
