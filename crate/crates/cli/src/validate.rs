//! Quick invariant suite behind `hierwalk validate`. Checks run at `L = 2`
//! with small budgets; the full acceptance suite lives in the core crate's
//! tests.

use std::f64::consts::PI;

use num_complex::Complex64;

use hierwalk_core::free::{derive_jump_constant, endtoend_free, green0, green0_alt, p0, GreenQuery, SeriesTolerance};
use hierwalk_core::laplace::{invert, ContourSpec, Interacting};
use hierwalk_core::lattice::sample_shell;
use hierwalk_core::mc::{path_rng, McConfig, McSample};
use hierwalk_core::rg_flow::{critical_beta, default_tolerance, DomainSpec};
use hierwalk_core::{LatticeParams, Result, Site};

use crate::output::Table;

/// Regression value of the critical rate at `lambda = 0.02`, `L = 2`.
const BETA_C_FIXTURE: f64 = -4.987_309_706_595_542e-2;

fn tol() -> SeriesTolerance {
    SeriesTolerance { rel_tol: 1e-15, max_terms: 10_000 }
}

struct Check {
    name: &'static str,
    run: fn(&LatticeParams) -> Result<(bool, String)>,
}

fn group_law(p: &LatticeParams) -> Result<(bool, String)> {
    let mut rng = path_rng(7, 0);
    let mut ok = true;
    for i in 0..200u32 {
        let x = sample_shell(1 + i % 6, p, &mut rng)?;
        let y = sample_shell(1 + (i / 6) % 6, p, &mut rng)?;
        let s = x.add(&y, p);
        ok &= s == y.add(&x, p);
        ok &= x.sub(&x, p) == Site::zero();
        ok &= s.sub(&y, p) == x;
        ok &= s.norm(p) <= x.norm(p).max(y.norm(p));
    }
    Ok((ok, "200 random pairs".into()))
}

fn green_representations(p: &LatticeParams) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for &r in &[0.1, 1.0, 10.0] {
        for &arg in &[0.0, PI / 3.0, -PI / 3.0] {
            for n in 0..4 {
                let q = GreenQuery::new(Complex64::from_polar(r, arg), n);
                let a = green0(p, q, &tol())?;
                worst = worst.max((a - green0_alt(p, q, &tol())?).norm() / a.norm());
            }
        }
    }
    Ok((worst < 1e-10, format!("max relative difference {worst:.1e}")))
}

fn round_trip(p: &LatticeParams) -> Result<(bool, String)> {
    let c = ContourSpec::default();
    let mut worst: f64 = 0.0;
    for &t in &[1.0, 16.0] {
        for n in 0..3 {
            let r = invert(|b| green0(p, GreenQuery::new(b, n), &tol()), t, &c)?;
            let exact = p0(t, n, p, &tol())?;
            worst = worst.max((r.value - exact).norm() / exact.norm());
        }
    }
    Ok((worst < 1e-8, format!("max relative error {worst:.1e}")))
}

fn heat_kernel_mass(p: &LatticeParams) -> Result<(bool, String)> {
    let t = 1.0;
    let mut total = p0(t, 0, p, &tol())?.re;
    for n in 1..100 {
        total += p.shell_weight(n) * p0(t, n, p, &tol())?.re;
    }
    Ok(((total - 1.0).abs() < 1e-9, format!("total mass {total}")))
}

fn jump_constant(p: &LatticeParams) -> Result<(bool, String)> {
    let c = derive_jump_constant(p, 1, 1e5, &tol())?;
    Ok(((c - 64.0 / 21.0).abs() < 1e-6, format!("C = {c}")))
}

fn critical_fixture(p: &LatticeParams) -> Result<(bool, String)> {
    let c = critical_beta(0.02, &DomainSpec::default(), p, default_tolerance(0.02))?;
    let ok = (c.beta_c.re - BETA_C_FIXTURE).abs() <= 1e-15 * BETA_C_FIXTURE.abs() && c.beta_c.im == 0.0;
    Ok((ok, format!("beta_c = {}", c.beta_c.re)))
}

fn zero_coupling(p: &LatticeParams) -> Result<(bool, String)> {
    let ctx = Interacting::new(0.0, &DomainSpec::default(), p, &ContourSpec::default())?;
    let t = 16.0;
    let e = ctx.endtoend(t, 1.0)?.value;
    let free = endtoend_free(t, 1.0, p, &tol())?;
    let rel = (e - free).abs() / free;
    Ok((rel < 1e-8, format!("relative difference {rel:.1e}")))
}

fn mc_determinism(p: &LatticeParams) -> Result<(bool, String)> {
    let cfg = McConfig::new(8.0, 0.02, 5_000, 3, p.clone(), 1.0)?;
    let a = McSample::simulate(&cfg)?.endtoend()?;
    let b = McSample::simulate(&cfg)?.endtoend()?;
    Ok((a == b, format!("estimate {}", a.estimate)))
}

const CHECKS: &[Check] = &[
    Check { name: "group_law", run: group_law },
    Check { name: "green_representations", run: green_representations },
    Check { name: "laplace_round_trip", run: round_trip },
    Check { name: "heat_kernel_mass", run: heat_kernel_mass },
    Check { name: "jump_constant", run: jump_constant },
    Check { name: "critical_fixture", run: critical_fixture },
    Check { name: "zero_coupling", run: zero_coupling },
    Check { name: "mc_determinism", run: mc_determinism },
];

/// Runs every check; an error counts as a failure.
pub fn run() -> Table {
    let p = LatticeParams::new(2).expect("L = 2 is valid");
    let mut table = Table::new(&["check", "pass", "detail"]);
    for c in CHECKS {
        let (ok, detail) = match (c.run)(&p) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        table.push(vec![c.name.to_string(), ok.to_string(), detail]);
    }
    table
}

pub fn passed(table: &Table) -> usize {
    table.rows.iter().filter(|r| r[1] == "true").count()
}
