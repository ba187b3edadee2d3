//! The `lvito` scenario runner.
//!
//! Every subcommand writes `<out-dir>/<command>-<hash>-s<seed>/` holding
//! `config.snapshot`, `report.json`, `tables/*.csv` and `log.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::charfn::{cf_m_qg, write_cf_lattice};
use crate::config::{nu_value, parse_nu, parse_override, Mode, Scenario};
use crate::error::{Error, Result};
use crate::itoverify::{
    eval_terms_expectation, eval_terms_stransform, pathwise_study, verification_report, ItoTermSet,
};
use crate::kernels::{l2_norm_sq, validate_kernel, KernelHandle, TruncatedKernel};
use crate::levy::{LevyModel, LevySimulator, TimeGrid};
use crate::rng::path_seed;
use crate::stransform::{battery_element, s_m, s_transform_mc, TestFunctional, WeightEvaluator};
use crate::volterra::{mean_se, VolterraSimulator};

#[derive(Parser, Debug)]
#[command(name = "lvito", version, about = "Levy-driven Volterra processes: simulation, transforms and Ito-formula checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct Common {
    /// Scenario file (TOML); defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override `key=value` (dotted keys address nested tables).
    #[arg(long = "set", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Exact-order reductions. Reductions are always ordered; the flag is
    /// recorded in the report.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long = "out-dir", global = true, default_value = "runs")]
    pub out_dir: PathBuf,
    /// Kernel, e.g. `indicator` or `frac:d=0.25`.
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Jump measure: `none`, `cp:rate=2,atom=2`, `cp:rate=2,uniform=-1:1`, `ts:alpha=..,lambda=..,c=..`.
    #[arg(long, global = true)]
    pub nu: Option<String>,
    /// Horizon.
    #[arg(long, global = true)]
    pub t: Option<f64>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Simulate driver and Volterra paths to CSV, with a variance summary.
    Simulate,
    /// Probe the kernel class conditions.
    ValidateKernel,
    /// Characteristic function lattice under `Q_g`.
    Charfn,
    /// `S(M(t))(g)` by quadrature and by weighted Monte Carlo.
    #[command(name = "s-transform")]
    STransform,
    /// Term-by-term verification of the generalised Ito formula.
    VerifyIto {
        /// Shift one term of every Monte Carlo cell, `term=delta`.
        #[arg(long = "inject-fault")]
        inject_fault: Option<String>,
    },
    /// Print the default scenario.
    Defaults,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::ValidateKernel => "validate-kernel",
            Command::Charfn => "charfn",
            Command::STransform => "s-transform",
            Command::VerifyIto { .. } => "verify-ito",
            Command::Defaults => "defaults",
        }
    }
}

/// Exit status and the run directory, if one was written.
#[derive(Debug)]
pub struct Outcome {
    pub exit: i32,
    pub run_dir: Option<PathBuf>,
}

/// Exit code of an error: 2 for usage and preconditions, 3 for numerics.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Io(_)
        | Error::InvalidParameter(_)
        | Error::MomentGate(_)
        | Error::FourierRoute(_)
        | Error::KernelClass { .. } => 2,
        Error::NonConvergence { .. }
        | Error::SlowDecay { .. }
        | Error::GrowthAtOrigin
        | Error::NonFinite { .. }
        | Error::TooManyJumps { .. }
        | Error::WeightGate { .. } => 3,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return Outcome { exit: code, run_dir: None };
        }
    };
    match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            Outcome { exit: exit_code(&e), run_dir: None }
        }
    }
}

/// The scenario after the config file, `--set` overrides and shorthands.
pub fn scenario(common: &Common) -> Result<Scenario> {
    let mut overrides = Vec::new();
    for s in &common.set {
        overrides.push(parse_override(s)?);
    }
    if let Some(k) = &common.kernel {
        overrides.push(("kernel".into(), toml::Value::String(k.clone())));
    }
    if let Some(s) = common.sigma {
        overrides.push(("model.sigma".into(), toml::Value::Float(s)));
    }
    if let Some(nu) = &common.nu {
        overrides.push(("model.jumps".into(), nu_value(&parse_nu(nu)?)?));
    }
    if let Some(t) = common.t {
        overrides.push(("horizon".into(), toml::Value::Float(t)));
    }
    if let Some(seed) = common.seed {
        let seed = i64::try_from(seed).map_err(|_| Error::Config(format!("seed {seed} too large")))?;
        overrides.push(("seed".into(), toml::Value::Integer(seed)));
    }
    Scenario::load(common.config.as_deref(), &overrides)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    if let Command::Defaults = cli.command {
        print!("{}", Scenario::default().to_toml()?);
        return Ok(Outcome { exit: 0, run_dir: None });
    }
    let sc = scenario(&cli.common)?;
    if let Some(w) = cli.common.workers {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }
    let hash = sc.config_hash()?;
    let dir = cli.common.out_dir.join(format!("{}-{hash}-s{}", cli.command.name(), sc.seed));
    fs::create_dir_all(dir.join("tables"))?;
    fs::write(dir.join("config.snapshot"), sc.to_toml()?)?;
    let mut log = format!("command {}\nconfig {hash}\nseed {}\n", cli.command.name(), sc.seed);
    let ctx = Ctx { sc: &sc, dir: &dir, hash: &hash, deterministic: cli.common.deterministic };
    let passed = match &cli.command {
        Command::Simulate => simulate(&ctx, &mut log)?,
        Command::ValidateKernel => validate(&ctx, &mut log)?,
        Command::Charfn => charfn(&ctx, &mut log)?,
        Command::STransform => stransform(&ctx, &mut log)?,
        Command::VerifyIto { inject_fault } => verify(&ctx, inject_fault.as_deref(), &mut log)?,
        Command::Defaults => unreachable!("handled above"),
    };
    let _ = writeln!(log, "result {}", if passed { "pass" } else { "fail" });
    fs::write(dir.join("log.txt"), log)?;
    Ok(Outcome { exit: if passed { 0 } else { 1 }, run_dir: Some(dir) })
}

struct Ctx<'a> {
    sc: &'a Scenario,
    dir: &'a Path,
    hash: &'a str,
    deterministic: bool,
}

#[derive(Serialize)]
struct RunReport<'a, T: Serialize> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    deterministic: bool,
    passed: bool,
    result: T,
}

impl Ctx<'_> {
    fn write_report<T: Serialize>(&self, command: &str, passed: bool, result: T) -> Result<()> {
        let r = RunReport { command, config_hash: self.hash, seed: self.sc.seed, deterministic: self.deterministic, passed, result };
        let mut text = serde_json::to_string_pretty(&r)?;
        text.push('\n');
        fs::write(self.dir.join("report.json"), text)?;
        Ok(())
    }

    fn table(&self, name: &str) -> Result<fs::File> {
        Ok(fs::File::create(self.dir.join("tables").join(name))?)
    }

    fn kernel(&self) -> Result<KernelHandle> {
        self.sc.kernel.build()
    }

    /// The kernel realised on the simulation window.
    fn truncated(&self, k: &KernelHandle) -> Result<(KernelHandle, f64)> {
        let past = if k.tau() >= 0.0 { 0.0 } else { self.sc.past };
        Ok((Arc::new(TruncatedKernel::new(Arc::clone(k), past)?), past))
    }

    fn grid(&self, past: f64) -> Result<Arc<TimeGrid>> {
        Ok(Arc::new(TimeGrid::new(crate::levy::GridSpec { past, ..self.sc.grid() })?))
    }

    fn seeds(&self, n: usize) -> Vec<u64> {
        (0..n as u64).map(|i| path_seed(self.sc.seed, i)).collect()
    }

    fn times(&self, ts: &[f64]) -> Vec<f64> {
        if ts.is_empty() {
            vec![self.sc.horizon]
        } else {
            ts.to_vec()
        }
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    n_paths: usize,
    mean: f64,
    mean_se: f64,
    variance: f64,
    variance_se: f64,
    /// `(sigma^2 + int x^2 nu) ||f_A(T, .)||^2` for the simulated window.
    predicted_variance: f64,
    /// The same for the untruncated kernel.
    untruncated_variance: f64,
    passed: bool,
}

fn simulate(ctx: &Ctx, log: &mut String) -> Result<bool> {
    let sc = ctx.sc;
    let k = ctx.kernel()?;
    let (kt, past) = ctx.truncated(&k)?;
    let grid = ctx.grid(past)?;
    let levy = LevySimulator::new(&sc.model, Arc::clone(&grid))?;
    let all = VolterraSimulator::on_all_nodes(Arc::clone(&k), Arc::clone(&grid))?;
    for (i, &s) in ctx.seeds(sc.simulate.n_out).iter().enumerate() {
        let lp = levy.simulate(s);
        lp.write_csv(ctx.table(&format!("levy_{i}.csv"))?)?;
        all.simulate(&lp)?.write_csv(ctx.table(&format!("volterra_{i}.csv"))?)?;
    }
    let last = grid.nodes().len() - 1;
    let terminal = VolterraSimulator::new(Arc::clone(&k), Arc::clone(&grid), vec![last])?;
    let xs: Vec<f64> = ctx
        .seeds(sc.n_paths)
        .par_iter()
        .map(|&s| terminal.simulate(&levy.simulate(s)).map(|p| p.terminal()))
        .collect::<Result<_>>()?;
    let (mean, mean_err) = mean_se(&xs);
    let centred: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let (variance, variance_se) = mean_se(&centred);
    let sim = sc.model.simulated();
    let scale = sim.sigma().powi(2) + sim.nu_moment(2.0);
    let predicted = scale * l2_norm_sq(kt.as_ref(), sc.horizon, &sc.quad)?.value;
    let untruncated = (sc.model.sigma().powi(2) + sc.model.nu_moment(2.0)) * l2_norm_sq(k.as_ref(), sc.horizon, &sc.quad)?.value;
    let summary = SimulateSummary {
        n_paths: sc.n_paths,
        mean,
        mean_se: mean_err,
        variance,
        variance_se,
        predicted_variance: predicted,
        untruncated_variance: untruncated,
        passed: (variance - predicted).abs() <= 3.0 * variance_se,
    };
    let _ = writeln!(log, "Var M(T) {variance:.6} +- {variance_se:.2e}, predicted {predicted:.6}");
    println!("Var M(T) = {variance:.6} +- {variance_se:.2e} (predicted {predicted:.6}), mean {mean:.4e} +- {mean_err:.2e}");
    ctx.write_report("simulate", summary.passed, &summary)?;
    Ok(true)
}

fn validate(ctx: &Ctx, log: &mut String) -> Result<bool> {
    let k = ctx.kernel()?;
    let report = validate_kernel(k.as_ref(), &ctx.sc.probe)?;
    let text = report.to_text();
    print!("{text}");
    log.push_str(&text);
    ctx.write_report("validate-kernel", report.accepted, &report)?;
    Ok(report.accepted)
}

#[derive(Serialize)]
struct CfRow {
    t: f64,
    u: f64,
    re: f64,
    im: f64,
    error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_re: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_im: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_se: Option<f64>,
    passed: bool,
}

/// Index of the grid node closest to `t`.
fn nearest_node(grid: &TimeGrid, t: f64) -> usize {
    let nodes = grid.nodes();
    let i = nodes.partition_point(|&x| x < t).min(nodes.len() - 1);
    if i > 0 && (t - nodes[i - 1]).abs() < (nodes[i] - t).abs() {
        i - 1
    } else {
        i
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn charfn(ctx: &Ctx, log: &mut String) -> Result<bool> {
    let sc = ctx.sc;
    let o = &sc.charfn;
    let k = ctx.kernel()?;
    let g = battery_element(&o.g)?;
    let bound = g.bind(&sc.model)?;
    let ts = ctx.times(&o.ts);
    let us = linspace(o.u_min, o.u_max, o.n_u);
    write_cf_lattice(k.as_ref(), &bound, &ts, &us, &sc.quad, ctx.table("cf.csv")?)?;
    let mut rows = Vec::new();
    for &t in &ts {
        for &u in &us {
            let c = cf_m_qg(k.as_ref(), &bound, t, u, &sc.quad)?;
            rows.push(CfRow { t, u, re: c.value.re, im: c.value.im, error: c.error, mc_re: None, mc_im: None, mc_se: None, passed: true });
        }
    }
    if o.mc_paths > 0 {
        // the empirical side lives on the truncated window with the simulated jumps
        let (kt, past) = ctx.truncated(&k)?;
        let grid = ctx.grid(past)?;
        let sim_bound = g.bind(&sc.model.simulated())?;
        let eval: Vec<usize> = ts.iter().map(|&t| nearest_node(&grid, t)).collect();
        let vs = VolterraSimulator::new(Arc::clone(&k), Arc::clone(&grid), eval)?;
        let levy = LevySimulator::new(&sc.model, Arc::clone(&grid))?;
        let we = WeightEvaluator::new(&g, &sc.model, Arc::clone(&grid))?;
        let paths: Vec<(Vec<f64>, f64)> = ctx
            .seeds(o.mc_paths)
            .par_iter()
            .map(|&s| {
                let lp = levy.simulate(s);
                Ok((vs.simulate(&lp)?.values().to_vec(), we.weight(&lp)))
            })
            .collect::<Result<_>>()?;
        let w: Vec<f64> = paths.iter().map(|p| p.1).collect();
        for row in rows.iter_mut() {
            let i = ts.iter().position(|&t| t == row.t).expect("row time from ts");
            let phi: Vec<Complex64> = paths.iter().map(|p| Complex64::new(0.0, row.u * p.0[i]).exp()).collect();
            let est = s_transform_mc(&phi, &w)?;
            let reference = cf_m_qg(kt.as_ref(), &sim_bound, row.t, row.u, &sc.quad)?;
            row.mc_re = Some(est.value.re);
            row.mc_im = Some(est.value.im);
            row.mc_se = Some(est.std_error);
            row.passed = (est.value - reference.value).norm() <= 3.0 * est.std_error + reference.error;
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    let _ = writeln!(log, "{} lattice points, {}", rows.len(), if passed { "all within budget" } else { "deviations beyond budget" });
    println!("wrote {} characteristic function values to tables/cf.csv", rows.len());
    ctx.write_report("charfn", passed, &rows)?;
    Ok(passed)
}

#[derive(Serialize)]
struct SRow {
    g: String,
    t: f64,
    formula: f64,
    formula_error: f64,
    mc: f64,
    mc_se: f64,
    weight_mean: f64,
    passed: bool,
}

fn stransform(ctx: &Ctx, log: &mut String) -> Result<bool> {
    let sc = ctx.sc;
    let k = ctx.kernel()?;
    let (kt, past) = ctx.truncated(&k)?;
    let grid = ctx.grid(past)?;
    let ts = ctx.times(&sc.s_transform.ts);
    let mut eval: Vec<usize> = ts.iter().map(|&t| nearest_node(&grid, t)).collect();
    eval.dedup();
    let vs = VolterraSimulator::new(Arc::clone(&k), Arc::clone(&grid), eval)?;
    let levy = LevySimulator::new(&sc.model, Arc::clone(&grid))?;
    let lps: Vec<_> = ctx.seeds(sc.n_paths).par_iter().map(|&s| levy.simulate(s)).collect();
    let ms: Vec<Vec<f64>> = lps.par_iter().map(|lp| vs.simulate(lp).map(|p| p.values().to_vec())).collect::<Result<_>>()?;
    let sim = sc.model.simulated();
    let mut rows = Vec::new();
    let mut csv = csv::Writer::from_writer(ctx.table("s_transform.csv")?);
    csv.write_record(["g", "t", "formula", "formula_error", "mc", "mc_se", "passed"])?;
    for name in &sc.g_battery {
        let g: TestFunctional = battery_element(name)?;
        let bound = g.bind(&sim)?;
        let we = WeightEvaluator::new(&g, &sc.model, Arc::clone(&grid))?;
        let w: Vec<f64> = lps.iter().map(|lp| we.weight(lp)).collect();
        for &t in &ts {
            let i = vs.times().iter().position(|&x| x == grid.nodes()[nearest_node(&grid, t)]).expect("located node");
            let tn = vs.times()[i];
            let phi: Vec<f64> = ms.iter().map(|m| m[i]).collect();
            let est = s_transform_mc(&phi, &w)?;
            let f = s_m(kt.as_ref(), &bound, tn, &sc.quad)?;
            let passed = (est.value - f.value).abs() <= 3.0 * est.std_error + f.error;
            csv.write_record([name.clone(), crate::levy::fmt(tn), crate::levy::fmt(f.value), crate::levy::fmt(f.error), crate::levy::fmt(est.value), crate::levy::fmt(est.std_error), passed.to_string()])?;
            rows.push(SRow {
                g: name.clone(),
                t: tn,
                formula: f.value,
                formula_error: f.error,
                mc: est.value,
                mc_se: est.std_error,
                weight_mean: est.weights.map(|d| d.mean).unwrap_or(f64::NAN),
                passed,
            });
        }
    }
    csv.flush()?;
    let passed = rows.iter().all(|r| r.passed);
    for r in &rows {
        let line = format!(
            "{:<10} t={:<6} formula {:>11.6} mc {:>11.6} +- {:.2e} {}\n",
            r.g,
            r.t,
            r.formula,
            r.mc,
            r.mc_se,
            if r.passed { "ok" } else { "FAIL" }
        );
        print!("{line}");
        log.push_str(&line);
    }
    ctx.write_report("s-transform", passed, &rows)?;
    Ok(passed)
}

fn verify(ctx: &Ctx, fault: Option<&str>, log: &mut String) -> Result<bool> {
    let sc = ctx.sc;
    let k = ctx.kernel()?;
    let model: &LevyModel = &sc.model;
    let settings = sc.ito_settings();
    let gs: Vec<(String, TestFunctional)> =
        sc.g_battery.iter().map(|n| battery_element(n).map(|g| (n.clone(), g))).collect::<Result<_>>()?;
    let mut studies = Vec::new();
    let mut cells: Vec<ItoTermSet> = Vec::new();
    for spec in &sc.gt_battery {
        let gt = spec.build();
        if sc.modes.contains(&Mode::Pathwise) {
            studies.push(pathwise_study(&gt, model, &sc.pathwise_settings())?);
        }
        if sc.modes.contains(&Mode::Expectation) {
            cells.push(eval_terms_expectation(&gt, &k, model, &settings)?);
        }
        if sc.modes.contains(&Mode::Stransform) {
            cells.extend(eval_terms_stransform(&gt, &k, model, &gs, &settings)?);
        }
    }
    if let Some(f) = fault {
        let (term, delta) = f.split_once('=').ok_or_else(|| Error::Config(format!("fault `{f}` is not term=delta")))?;
        let delta: f64 = delta.trim().parse().map_err(|_| Error::Config(format!("`{delta}` is not a number")))?;
        for c in cells.iter_mut() {
            c.inject_fault(term.trim(), delta)?;
        }
        let _ = writeln!(log, "fault injected: {term} += {delta}");
    }
    let report = verification_report(studies, cells);
    report.write_terms_csv(ctx.table("terms.csv")?)?;
    report.write_residuals_csv(ctx.table("residuals.csv")?)?;
    let text = report.to_text();
    print!("{text}");
    log.push_str(&text);
    ctx.write_report("verify-ito", report.passed(), &report)?;
    Ok(report.passed())
}
