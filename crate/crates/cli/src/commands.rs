use std::collections::BTreeMap;

use resonance_core::cyclealg::{cycle_from_point, cyclic_det_check, linear_cycle, newton_cycle};
use resonance_core::shrinkfind::{build_report, delta_ratio_residual, find_shrinking_point};
use resonance_core::tonguescan::scan;
use resonance_core::unfold::{unfold_verify, Verdict};
use resonance_core::verify::run_suites;
use resonance_core::{Cycle, ShrinkingPointReport, SuiteResult, UnfoldingReport, VerifySettings};
use serde::Serialize;

use crate::config::{RunConfig, ShrinkBlock};
use crate::failure::{Failure, EXIT_CHECKS, EXIT_HYPOTHESIS};
use crate::output::Output;

pub struct Context {
    pub config: RunConfig,
    pub mu: Option<f64>,
    pub out: Output,
}

fn no_mu(ctx: &Context, command: &str) -> Result<(), Failure> {
    match ctx.mu {
        Some(_) => Err(Failure::config(format!("--mu does not apply to `{command}`"))),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct ScanResult<'a> {
    grid: &'a resonance_core::GridSpec,
    settings: &'a resonance_core::ScanSettings,
    /// number of cells per detected period (0 escaped, -1 no period found)
    period_counts: BTreeMap<i32, usize>,
}

pub fn cmd_scan(ctx: &Context) -> Result<i32, Failure> {
    let mut block = RunConfig::block(&ctx.config.scan, "scan")?.clone();
    if let Some(mu) = ctx.mu {
        block.grid.fixed.mu = mu;
    }
    let grid = scan(&block.grid, &block.settings)?;
    let mut period_counts = BTreeMap::new();
    for &p in &grid.period {
        *period_counts.entry(p).or_insert(0) += 1;
    }
    let csv = ctx.out.write("scan.csv", &grid.to_csv())?;
    ctx.out.write_json("scan.json", &ScanResult { grid: &block.grid, settings: &block.settings, period_counts })?;
    println!("scan: {} x {} cells -> {}", block.grid.nx, block.grid.ny, csv.display());
    Ok(0)
}

#[derive(Serialize)]
struct CycleResult<'a> {
    method: &'static str,
    cycle: &'a Cycle,
    /// largest spread of det(I - D f) over the cyclic shifts of the word
    cyclic_det_residual: f64,
}

pub fn cmd_cycle(ctx: &Context) -> Result<i32, Failure> {
    let block = RunConfig::block(&ctx.config.cycle, "cycle")?;
    block.validate()?;
    let mut spec = ctx.config.map_spec()?;
    if let Some(mu) = ctx.mu {
        spec.set_mu(mu);
    }
    let map = spec.build()?;
    let word = block.word.word()?;
    let (method, x0) = if map.is_piecewise_linear() && block.guess.is_none() {
        ("linear", linear_cycle(&map, &word)?.points[0].clone())
    } else {
        let seed = match &block.guess {
            Some(g) => {
                if g.len() != map.dim() {
                    return Err(Failure::config(format!(
                        "config: guess has {} entries, map dimension is {}",
                        g.len(),
                        map.dim()
                    )));
                }
                resonance_core::linalg::Vector::from_vec(g.clone())
            }
            None => linear_cycle(&map.linear_part(), &word)?.points[0].clone(),
        };
        ("newton", newton_cycle(&map, &word, &seed, block.tol, block.max_iter)?.points[0].clone())
    };
    let cycle = cycle_from_point(&map, &word, &x0, block.tol_zero);
    let result = CycleResult { method, cyclic_det_residual: cyclic_det_check(&map, &cycle), cycle: &cycle };
    ctx.out.write_json("cycle.json", &result)?;
    println!(
        "cycle {}: {} {:?}, max residual {:.3e}",
        word,
        if cycle.admissible { "admissible" } else { "virtual" },
        cycle.stability,
        cycle.residual
    );
    Ok(0)
}

fn locate(ctx: &Context, block: &ShrinkBlock, at: Option<[f64; 2]>) -> Result<ShrinkingPointReport, Failure> {
    let plane = ctx.config.plane(block)?;
    let word = block.word.rotational_word()?;
    Ok(match at {
        Some([px, py]) => build_report(&plane, &word, px, py, &block.settings)?,
        None => find_shrinking_point(&plane, &word, &block.search_box, &block.settings)?,
    })
}

#[derive(Serialize)]
struct ShrinkResult<'a> {
    hypotheses_hold: bool,
    delta_ratio_residual: Option<f64>,
    report: &'a ShrinkingPointReport,
}

pub fn cmd_shrink(ctx: &Context) -> Result<i32, Failure> {
    no_mu(ctx, "shrink")?;
    let block = RunConfig::block(&ctx.config.shrink, "shrink")?;
    let rep = locate(ctx, block, None)?;
    let hold = rep.hypotheses_hold();
    let delta = delta_ratio_residual(&rep).ok();
    ctx.out.write_json("shrink.json", &ShrinkResult { hypotheses_hold: hold, delta_ratio_residual: delta, report: &rep })?;
    println!("shrink {}: ({:.10}, {:.10}), residual {:.3e}", rep.word, rep.location[0], rep.location[1], rep.residuals.max_abs());
    for c in rep.checks.iter().filter(|c| !c.passed) {
        println!("  failed: {} ({:.3e})", c.name, c.value);
    }
    Ok(if hold { 0 } else { EXIT_HYPOTHESIS })
}

#[derive(Serialize)]
struct UnfoldResult<'a> {
    all_passed: bool,
    verdicts: Vec<Verdict>,
    shrinking_point: &'a ShrinkingPointReport,
    unfolding: &'a UnfoldingReport,
}

pub fn cmd_unfold(ctx: &Context) -> Result<i32, Failure> {
    let shrink = RunConfig::block(&ctx.config.shrink, "shrink")?;
    let block = RunConfig::block(&ctx.config.unfold, "unfold")?;
    let mu = ctx.mu.unwrap_or(block.mu);
    block.settings.validate()?;
    let rep = locate(ctx, shrink, block.location)?;
    if !rep.hypotheses_hold() {
        let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(Failure::new(EXIT_HYPOTHESIS, format!("shrinking-point hypotheses fail: {}", failed.join(", "))));
    }
    let u = unfold_verify(&rep, mu, &block.settings)?;
    let verdicts = u.verdicts();
    let all = verdicts.iter().all(|v| v.passed);
    ctx.out.write("unfold_curves.csv", &u.curves_csv())?;
    ctx.out.write_json(
        "unfold.json",
        &UnfoldResult { all_passed: all, verdicts: verdicts.clone(), shrinking_point: &rep, unfolding: &u },
    )?;
    println!("unfold at mu = {mu}:");
    for v in &verdicts {
        println!("  {:<22} {}  {}", v.name, if v.passed { "pass" } else { "FAIL" }, v.detail);
    }
    Ok(if all { 0 } else { EXIT_CHECKS })
}

#[derive(Serialize)]
struct VerifyResult<'a> {
    settings: &'a VerifySettings,
    suites: &'a [SuiteResult],
}

pub fn cmd_verify(ctx: &Context) -> Result<i32, Failure> {
    no_mu(ctx, "verify")?;
    let settings = ctx.config.verify.unwrap_or_default();
    settings.validate()?;
    let suites = run_suites(&settings);
    ctx.out.write_json("verify.json", &VerifyResult { settings: &settings, suites: &suites })?;
    for s in &suites {
        println!(
            "{:<32} {}  instances {:>5}  failures {:>3}  max residual {:.3e}",
            s.name,
            if s.passed { "pass" } else { "FAIL" },
            s.instances,
            s.failures,
            s.max_residual
        );
    }
    Ok(if suites.iter().all(|s| s.passed) { 0 } else { EXIT_CHECKS })
}
