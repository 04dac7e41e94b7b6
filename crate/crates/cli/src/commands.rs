//! One function per subcommand. Parameters are checked before any numerical
//! work, so a bad configuration fails fast with a config error.

use num_complex::Complex64;
use serde_json::json;

use hierwalk_core::free::{green0, green0_alt, p0, GreenQuery, SeriesTolerance};
use hierwalk_core::laplace::{invert_many, ContourSpec, Interacting};
use hierwalk_core::mc::{McConfig, McSample};
use hierwalk_core::rg_flow::{critical_beta, default_tolerance, flow, DomainSpec};
use hierwalk_core::{Error, LatticeParams};

use crate::config::{ConfigError, Params};
use crate::output::{num, Table};

/// Failure of a command, mapped to an exit status by the caller.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Numeric(Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numeric(e)
    }
}

pub type Outcome = Result<Table, Failure>;

/// Series tolerance used by every command; tight enough that contour
/// integrands do not bias the inversion.
fn series_tol() -> SeriesTolerance {
    SeriesTolerance { rel_tol: 1e-15, max_terms: 10_000 }
}

fn cfg_err(msg: impl Into<String>) -> Failure {
    Failure::Config(ConfigError(msg.into()))
}

/// Rejects parameters the core would refuse, as a config error.
fn check<T>(r: hierwalk_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| cfg_err(e.to_string()))
}

fn lattice(params: &Params) -> Result<LatticeParams, Failure> {
    let l = params.u64("L")?;
    let l = u32::try_from(l).map_err(|_| cfg_err(format!("L = {l} is too large")))?;
    check(LatticeParams::new(l))
}

fn positive_list(params: &Params, key: &str) -> Result<Vec<f64>, Failure> {
    let v = params.f64_list(key)?;
    if let Some(bad) = v.iter().find(|x| !(**x > 0.0)) {
        return Err(cfg_err(format!("'{key}' entries must be positive, got {bad}")));
    }
    Ok(v)
}

fn alpha(params: &Params) -> Result<f64, Failure> {
    let a = params.f64("alpha")?;
    if !(a > 0.0 && a < 2.0) {
        return Err(cfg_err(format!("alpha must lie in (0, 2), got {a}")));
    }
    Ok(a)
}

/// Couplings `|lambda| e^{i lambda_arg}` checked against the coupling domain.
fn lambdas(params: &Params, d: &DomainSpec) -> Result<Vec<Complex64>, Failure> {
    let arg = params.f64("lambda_arg")?;
    params
        .f64_list("lambda")?
        .into_iter()
        .map(|m| {
            let lam = Complex64::from_polar(m, arg);
            if m < 0.0 || (m > 0.0 && !d.in_lambda_domain(lam)) {
                Err(cfg_err(format!("lambda = {lam} outside the coupling domain")))
            } else {
                Ok(lam)
            }
        })
        .collect()
}

fn real_lambdas(params: &Params, d: &DomainSpec, command: &str) -> Result<Vec<f64>, Failure> {
    let lams = lambdas(params, d)?;
    if lams.iter().any(|l| l.im != 0.0) {
        return Err(cfg_err(format!("{command} needs real lambda (lambda_arg = 0)")));
    }
    Ok(lams.into_iter().map(|l| l.re).collect())
}

fn contour(params: &Params) -> Result<ContourSpec, Failure> {
    let mut c = check(ContourSpec::with_angle(params.f64("b_beta")?))?;
    c.rel_tol = params.f64("rel_tol")?;
    check(c.validate())?;
    Ok(c)
}

fn n_paths(params: &Params) -> Result<usize, Failure> {
    let n = params.u64("n_paths")?;
    usize::try_from(n).map_err(|_| cfg_err(format!("n_paths = {n} is too large")))
}

fn parts(z: Complex64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

pub fn greens(params: &Params) -> Outcome {
    let p = lattice(params)?;
    let mags = positive_list(params, "beta")?;
    let arg = params.f64("beta_arg")?;
    if arg.abs() >= std::f64::consts::PI {
        return Err(cfg_err(format!("beta_arg must satisfy |arg| < pi, got {arg}")));
    }
    let levels = params.u32_list("N")?;
    let mut table = Table::new(&["L", "beta_re", "beta_im", "N", "g0_re", "g0_im", "g0_alt_re", "g0_alt_im"]);
    for &m in &mags {
        let beta = Complex64::from_polar(m, arg);
        for &n in &levels {
            let q = GreenQuery::new(beta, n);
            let a = green0(&p, q, &series_tol())?;
            let b = green0_alt(&p, q, &series_tol())?;
            let mut row = vec![p.l().to_string()];
            row.extend(parts(beta));
            row.push(n.to_string());
            row.extend(parts(a));
            row.extend(parts(b));
            table.push(row);
        }
    }
    Ok(table)
}

pub fn kernel(params: &Params) -> Outcome {
    let p = lattice(params)?;
    let d = DomainSpec::default();
    let c = contour(params)?;
    let times = positive_list(params, "T")?;
    let levels = params.u32_list("N")?;
    let lams = lambdas(params, &d)?;
    let mut table = Table::new(&[
        "T", "N", "lambda_re", "lambda_im", "p0", "p_lambda_re", "p_lambda_im", "p_lambda_err", "leading_re",
        "leading_im",
    ]);
    for &lam in &lams {
        let ctx = Interacting::new(lam, &d, &p, &c)?;
        for &t in &times {
            let inv = ctx.p_lambda_levels(t, &levels)?;
            for (i, &n) in levels.iter().enumerate() {
                let free = p0(t, n, &p, &series_tol())?.re;
                let lead = ctx.p_lambda_leading(t, n)?;
                let mut row = vec![num(t), n.to_string()];
                row.extend(parts(lam));
                row.push(num(free));
                row.extend(parts(inv.values[i]));
                row.push(num(inv.errors[i]));
                row.extend(parts(lead));
                table.push(row);
            }
        }
    }
    table.meta.insert("scale_choice".into(), json!("k = N(x): lambda_k and ell taken at the level of the target site"));
    Ok(table)
}

pub fn flow_cmd(params: &Params) -> Outcome {
    let p = lattice(params)?;
    let d = DomainSpec::default();
    let lams = lambdas(params, &d)?;
    let [lam] = lams[..] else {
        return Err(cfg_err("flow takes a single lambda"));
    };
    let steps = params.u64("steps")?;
    if steps == 0 || steps > 10_000 {
        return Err(cfg_err(format!("steps must lie in 1..=10000, got {steps}")));
    }
    let beta0 = match params.raw("beta0") {
        None | Some("critical") => None,
        Some(_) => Some(params.f64("beta0")?),
    };
    let beta0 = match beta0 {
        Some(b) => Complex64::new(b, 0.0),
        None if lam == Complex64::new(0.0, 0.0) => Complex64::new(0.0, 0.0),
        None => critical_beta(lam, &d, &p, default_tolerance(lam))?.beta_c,
    };
    let report = flow(beta0, lam, &d, steps as usize, &p)?;
    let mut table = Table::new(&[
        "k", "beta_re", "beta_im", "lambda_re", "lambda_im", "dbeta_re", "dbeta_im", "dlambda_re", "dlambda_im",
    ]);
    for s in &report.trajectory {
        let mut row = vec![s.step.to_string()];
        for z in [s.beta, s.lambda, s.dbeta, s.dlambda] {
            row.extend(parts(z));
        }
        table.push(row);
    }
    table.meta.insert("exit_step".into(), json!(report.exit_step));
    table.meta.insert("initial_beta".into(), json!([beta0.re, beta0.im]));
    Ok(table)
}

pub fn critical(params: &Params) -> Outcome {
    let p = lattice(params)?;
    let d = DomainSpec::default();
    let lams = lambdas(params, &d)?;
    if lams.iter().any(|l| l.norm() == 0.0) {
        return Err(cfg_err("critical needs lambda != 0"));
    }
    let mut table = Table::new(&["lambda_re", "lambda_im", "beta_c_re", "beta_c_im", "bracket_width", "K"]);
    for &lam in &lams {
        let c = critical_beta(lam, &d, &p, default_tolerance(lam))?;
        let mut row = parts(lam).to_vec();
        row.extend(parts(c.beta_c));
        row.push(num(c.bracket_width));
        row.push(c.steps_held.to_string());
        table.push(row);
    }
    Ok(table)
}

pub fn invert_cmd(params: &Params) -> Outcome {
    let p = lattice(params)?;
    let c = contour(params)?;
    let times = positive_list(params, "T")?;
    let levels = params.u32_list("N")?;
    let mut table = Table::new(&["T", "N", "contour", "error", "nodes", "p0_closed", "rel_diff"]);
    for &t in &times {
        let g = |b: Complex64| -> hierwalk_core::Result<Vec<Complex64>> {
            levels.iter().map(|&n| green0(&p, GreenQuery::new(b, n), &series_tol())).collect()
        };
        let inv = invert_many(g, levels.len(), t, &c)?;
        for (i, &n) in levels.iter().enumerate() {
            let exact = p0(t, n, &p, &series_tol())?.re;
            let v = inv.values[i];
            table.push(vec![
                num(t),
                n.to_string(),
                num(v.re),
                num(inv.errors[i]),
                inv.nodes.to_string(),
                num(exact),
                num((v - exact).norm() / exact.abs()),
            ]);
        }
    }
    Ok(table)
}

pub fn endtoend(params: &Params) -> Outcome {
    let p = lattice(params)?;
    let d = DomainSpec::default();
    let c = contour(params)?;
    let times = positive_list(params, "T")?;
    let a = alpha(params)?;
    let lams = real_lambdas(params, &d, "endtoend")?;
    let paths = n_paths(params)?;
    let seed = params.u64("seed")?;
    if paths > 0 {
        for &lam in &lams {
            for &t in &times {
                check(McConfig::new(t, lam, paths, seed, p.clone(), a))?;
            }
        }
    }
    let mut table = Table::new(&[
        "T", "alpha", "lambda", "ell", "t_eff", "e2e_theory", "e2e_contour", "e2e_mc", "e2e_mc_stderr",
    ]);
    for &lam in &lams {
        let ctx = Interacting::new(lam, &d, &p, &c)?;
        for &t in &times {
            let e = ctx.endtoend(t, a)?;
            let theory = ctx.endtoend_theory(t, a)?.re;
            let (mc, se) = if paths == 0 {
                (String::new(), String::new())
            } else {
                let cfg = McConfig::new(t, lam, paths, seed, p.clone(), a)?;
                let est = McSample::simulate(&cfg)?.endtoend()?;
                (num(est.estimate), num(est.std_error))
            };
            table.push(vec![
                num(t),
                num(a),
                num(lam),
                num(e.ell.re),
                num(e.t_eff.re),
                num(theory),
                num(e.value),
                mc,
                se,
            ]);
        }
    }
    table.meta.insert(
        "scale_choice".into(),
        json!("moment sums use the scale k = k_hat(1/T); every T row reuses the configured seed"),
    );
    Ok(table)
}

pub fn mc(params: &Params) -> Outcome {
    let p = lattice(params)?;
    let d = DomainSpec::default();
    let times = positive_list(params, "T")?;
    let levels = params.u32_list("N")?;
    let a = alpha(params)?;
    let lams = real_lambdas(params, &d, "mc")?;
    let paths = n_paths(params)?;
    let seed = params.u64("seed")?;
    let mut table = Table::new(&[
        "T", "lambda", "N", "kernel", "kernel_stderr", "kernel_tilted", "kernel_tilted_stderr", "e2e", "e2e_stderr",
        "ess", "depth_capped",
    ]);
    for &lam in &lams {
        let cfgs = times
            .iter()
            .map(|&t| check(McConfig::new(t, lam, paths, seed, p.clone(), a)))
            .collect::<Result<Vec<_>, _>>()?;
        let beta_c = if lam == 0.0 { 0.0 } else { critical_beta(lam, &d, &p, default_tolerance(lam))?.beta_c.re };
        for cfg in &cfgs {
            let s = McSample::simulate(cfg)?;
            let e = s.endtoend()?;
            let plain = s.kernel(&levels, 0.0)?;
            let tilted = s.kernel(&levels, beta_c)?;
            for (i, &n) in levels.iter().enumerate() {
                table.push(vec![
                    num(cfg.t),
                    num(lam),
                    n.to_string(),
                    num(plain[i].estimate),
                    num(plain[i].std_error),
                    num(tilted[i].estimate),
                    num(tilted[i].std_error),
                    num(e.estimate),
                    num(e.std_error),
                    num(e.ess),
                    s.depth_capped.to_string(),
                ]);
            }
        }
        table.meta.insert(format!("beta_c[{lam}]"), json!(beta_c));
    }
    table.meta.insert(
        "tilt".into(),
        json!("kernel is the untilted weighted estimate; kernel_tilted multiplies by exp(-beta_c T)"),
    );
    Ok(table)
}
