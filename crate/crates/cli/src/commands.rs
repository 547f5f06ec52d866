use std::path::{Path, PathBuf};

use grazing_lab::densities::DensityModel;
use grazing_lab::dsmc::{run, RunOutput};
use grazing_lab::dualpairs::{check_pair, pair_by_name};
use grazing_lab::functionals::{
    action_landau, boltzmann_suite, dissipation_landau, landau_optimal_flux, weak_q_boltzmann, weak_q_landau, Route,
};
use grazing_lab::geometry::{check_geometry as geometry_suite, QuadraticTest};
use grazing_lab::grazing::{sweep_dissipation, sweep_weak_operator, RATE_POINTS};
use grazing_lab::kernels::KernelSet;
use grazing_lab::numerics::loglog_fit;
use grazing_lab::Estimate;
use serde::Serialize;

use crate::config::{self, ExperimentConfig, RouteName, SweepQuantity, TestName};
use crate::output::{num, opt, plot_gaps, write_json, Table};
use crate::{CliError, Common, Outcome};

/// Loads the config and applies the flags every subcommand shares.
fn setup(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = config::load(common.config.as_deref())?;
    if let Some(w) = common.workers {
        cfg.mc.workers = w;
    }
    if cfg.mc.workers == 0 {
        return Err(CliError::Validation("mc.workers must be at least 1".into()));
    }
    // a second call (tests in one process) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.mc.workers).build_global();
    cfg.mc.seed = config::resolve_seed(common.seed, cfg.mc.seed)?;
    if let Some(o) = &common.out {
        cfg.output.path = Some(o.display().to_string());
    }
    Ok(cfg)
}

fn build_problem(cfg: &ExperimentConfig) -> Result<(DensityModel, KernelSet), CliError> {
    let f = cfg.density.build()?;
    let ks = cfg.kernel.build()?;
    if f.dim != ks.dim {
        return Err(CliError::Validation(format!("density dimension {} differs from kernel.dim {}", f.dim, ks.dim)));
    }
    Ok((f, ks))
}

fn out_path(cfg: &ExperimentConfig, default: &str) -> PathBuf {
    PathBuf::from(cfg.output.path.clone().unwrap_or_else(|| default.to_string()))
}

fn test_function(name: TestName, d: usize) -> (QuadraticTest, &'static str) {
    match name {
        TestName::X1v1 => (QuadraticTest::mixed(d, 0, 0), "x1v1"),
        TestName::Energy => (QuadraticTest::energy(d), "energy"),
        TestName::V1 => (QuadraticTest::velocity(d, 0), "v1"),
    }
}

fn flag_unreliable(estimates: &[(&str, Estimate)]) -> Outcome {
    let bad: Vec<&str> = estimates.iter().filter(|(_, e)| e.unreliable).map(|(n, _)| *n).collect();
    if bad.is_empty() {
        Outcome::Ok
    } else {
        Outcome::Flagged(format!("unreliable estimates: {}", bad.join(", ")))
    }
}

pub fn functionals(
    common: &Common,
    pair: Option<String>,
    eps_list: Option<Vec<f64>>,
    samples: Option<usize>,
) -> Result<Outcome, CliError> {
    let mut cfg = setup(common)?;
    if let Some(p) = pair {
        cfg.pair.name = p;
    }
    if let Some(e) = eps_list {
        cfg.functionals.eps_list = e;
    }
    if let Some(s) = samples {
        cfg.mc.samples = s;
    }
    let (f, ks_base) = build_problem(&cfg)?;
    let dual = cfg.pair.build()?;
    let route = match cfg.functionals.route {
        RouteName::Mc => Route::MonteCarlo(cfg.mc.sampler()),
        RouteName::Grid => Route::Grid(cfg.oracle.grid()),
    };
    let (phi, phi_name) = test_function(cfg.functionals.test_function, f.dim);
    let density = cfg.density.label();
    let seed = cfg.mc.seed.to_string();
    let mut table = Table::new(&[
        "functional",
        "epsilon",
        "pair",
        "density",
        "seed",
        "value",
        "value_stderr",
        "method",
        "n_samples",
        "rejected",
        "unreliable",
    ]);
    let mut all = Vec::new();
    let mut push = |name: String, eps: f64, pair: &str, e: Estimate| {
        table.push(vec![
            name.clone(),
            num(eps),
            pair.to_string(),
            density.to_string(),
            seed.clone(),
            num(e.value),
            num(e.std_error),
            format!("{:?}", e.method),
            e.n_samples.to_string(),
            e.rejected.to_string(),
            e.unreliable.to_string(),
        ]);
        all.push((name, e));
    };
    for &eps in &cfg.functionals.eps_list {
        let ks = ks_base.with_epsilon(eps)?;
        let s = boltzmann_suite(&f, &ks, &dual, &route)?;
        push("D_B".into(), eps, "", s.d_b);
        push("D_psi_star".into(), eps, &cfg.pair.name, s.d_psi);
        push("D_cosh".into(), eps, "", s.d_cosh);
        push("R".into(), eps, &cfg.pair.name, s.r_opt);
        push(format!("weak_Q_B[{phi_name}]"), eps, "", weak_q_boltzmann(&f, &phi, &ks, &route)?);
    }
    // ε = 0 marks the Landau limit
    push("D_L".into(), 0.0, "", dissipation_landau(&f, &ks_base, &route)?);
    let flux = landau_optimal_flux(&f, &ks_base);
    push("A_L".into(), 0.0, "", action_landau(&f, &flux, &ks_base, &route)?);
    push(format!("weak_Q_L[{phi_name}]"), 0.0, "", weak_q_landau(&f, &phi, &ks_base, &route)?);
    let path = out_path(&cfg, "functionals.csv");
    table.write(&path, &cfg)?;
    let named: Vec<(&str, Estimate)> = all.iter().map(|(n, e)| (n.as_str(), *e)).collect();
    Ok(flag_unreliable(&named))
}

pub struct SweepFlags {
    pub pair: Option<String>,
    pub gamma: Option<f64>,
    pub nu: Option<f64>,
    pub eps_list: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub quantity: Option<SweepQuantity>,
    pub plot: Option<PathBuf>,
}

pub fn grazing_sweep(common: &Common, flags: SweepFlags) -> Result<Outcome, CliError> {
    let mut cfg = setup(common)?;
    if let Some(p) = flags.pair {
        cfg.pair.name = p;
    }
    if let Some(g) = flags.gamma {
        cfg.kernel.gamma = g;
    }
    if let Some(n) = flags.nu {
        cfg.kernel.nu = n;
    }
    if let Some(e) = flags.eps_list {
        cfg.sweep.eps_list = e;
    }
    if let Some(s) = flags.samples {
        cfg.mc.samples = s;
    }
    if let Some(q) = flags.quantity {
        cfg.sweep.quantity = q;
    }
    if let Some(p) = &flags.plot {
        cfg.output.plot = Some(p.display().to_string());
    }
    let (f, ks) = build_problem(&cfg)?;
    let route = Route::MonteCarlo(cfg.mc.sampler());
    let grid = cfg.oracle.grid();
    let oracle = cfg.oracle.enabled.then_some(&grid);
    let (res, values, title) = match cfg.sweep.quantity {
        SweepQuantity::Dissipation => {
            let dual = cfg.pair.build()?;
            let res = sweep_dissipation(&f, &dual, &ks, &cfg.sweep.eps_list, &route, oracle)?;
            let values = res.pair_values.clone().unwrap_or_else(|| res.boltzmann_values.clone());
            (res, values, format!("D_psi* ({}) vs D_L/2", cfg.pair.name))
        }
        SweepQuantity::WeakX1v1 => {
            let phi = QuadraticTest::mixed(f.dim, 0, 0);
            let res = sweep_weak_operator(&f, &phi, &ks, &cfg.sweep.eps_list, &route, oracle)?;
            let values = res.boltzmann_values.clone();
            (res, values, "<Q_B, x1v1> vs <Q_L, x1v1>".to_string())
        }
    };
    let target = res.landau_target;
    let gaps: Vec<f64> = values.iter().map(|e| e.value - target.value).collect();
    let gap_errs: Vec<f64> = values.iter().map(|e| e.combined_error(&target)).collect();
    let k = values.len().saturating_sub(RATE_POINTS);
    let abs_gaps: Vec<f64> = gaps[k..].iter().map(|g| g.abs()).collect();
    let rate = loglog_fit(&res.epsilons[k..], &abs_gaps).map_or(f64::NAN, |r| r.0);
    let mut table =
        Table::new(&["epsilon", "value", "value_stderr", "target", "target_stderr", "gap", "gap_stderr", "rate"]);
    for (i, e) in values.iter().enumerate() {
        table.push(vec![
            num(res.epsilons[i]),
            num(e.value),
            num(e.std_error),
            num(target.value),
            num(target.std_error),
            num(gaps[i]),
            num(gap_errs[i]),
            num(rate),
        ]);
    }
    let path = out_path(&cfg, "grazing_sweep.csv");
    table.write(&path, &cfg)?;
    let plot_path = cfg.output.plot.clone().map(PathBuf::from).unwrap_or_else(|| path.with_extension("svg"));
    if let Err(e) = plot_gaps(&plot_path, &title, &res.epsilons, &gaps, &gap_errs) {
        log::warn!("plot {} not written: {e}", plot_path.display());
    }
    println!(
        "{}: target {} ± {}, gap at smallest epsilon {} ± {}, rate {}",
        title,
        target.value,
        target.std_error,
        gaps.last().copied().unwrap_or(f64::NAN),
        gap_errs.last().copied().unwrap_or(f64::NAN),
        rate
    );
    let mut named: Vec<(&str, Estimate)> = values.iter().map(|e| ("sweep value", *e)).collect();
    named.extend(res.target_routes.iter().map(|e| ("Landau target", *e)));
    let outcome = flag_unreliable(&named);
    if outcome == Outcome::Ok && !res.routes_agree {
        return Ok(Outcome::Flagged("Landau target routes disagree beyond 3 standard errors".into()));
    }
    Ok(outcome)
}

pub struct SimulateFlags {
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub theta_min: Option<f64>,
    pub eps: Option<f64>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub trace_out: Option<PathBuf>,
    pub snapshot_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    steps: usize,
    cutoff: &'a grazing_lab::dsmc::Cutoff,
    majorant_a0: f64,
    majorant_doublings: u32,
    cap_rejections: u64,
    max_momentum_drift: f64,
    max_energy_drift: f64,
    entropy_non_increasing: bool,
    entropy_balance: Option<grazing_lab::dsmc::EntropyBalance>,
}

pub fn simulate(common: &Common, flags: SimulateFlags) -> Result<Outcome, CliError> {
    let mut cfg = setup(common)?;
    let s = &mut cfg.solver;
    if let Some(n) = flags.n {
        s.n = n;
    }
    if let Some(dt) = flags.dt {
        s.dt = dt;
    }
    if let Some(h) = flags.horizon {
        s.horizon = h;
    }
    if flags.theta_min.is_some() {
        s.theta_min = flags.theta_min;
    }
    if let Some(e) = flags.eps {
        cfg.kernel.epsilon = e;
    }
    if let Some(g) = flags.gamma {
        cfg.kernel.gamma = g;
    }
    if let Some(k) = flags.kappa {
        cfg.kernel.kappa = k;
    }
    if let Some(t) = &flags.trace_out {
        cfg.output.path = Some(t.display().to_string());
    }
    if let Some(p) = &flags.snapshot_out {
        cfg.output.snapshot = Some(p.display().to_string());
    }
    let (f, ks) = build_problem(&cfg)?;
    let solver = cfg.solver.build(cfg.mc.seed);
    let out = run(&solver, &f, &ks)?;
    let path = out_path(&cfg, "trace.csv");
    trace_table(&out, ks.dim).write(&path, &cfg)?;
    if let Some(snap) = &cfg.output.snapshot {
        snapshot_table(&out, ks.dim).write(Path::new(snap), &cfg)?;
    }
    let (dp, de) = out.max_relative_drift();
    let summary = SimulateSummary {
        steps: solver.steps(),
        cutoff: &out.cutoff,
        majorant_a0: out.majorant_a0,
        majorant_doublings: out.majorant_doublings,
        cap_rejections: out.cap_rejections,
        max_momentum_drift: dp,
        max_energy_drift: de,
        entropy_non_increasing: out.entropy_non_increasing(3.0),
        entropy_balance: out.entropy_balance,
    };
    write_json(None, &summary)?;
    let refits: Vec<(&str, Estimate)> =
        out.trace.iter().filter_map(|r| r.dissipation_refit.map(|e| ("refit dissipation", e))).collect();
    Ok(flag_unreliable(&refits))
}

fn trace_table(out: &RunOutput, d: usize) -> Table {
    let mut cols = vec!["step".to_string(), "t".into(), "mass".into()];
    cols.extend((1..=d).map(|i| format!("momentum_{i}")));
    cols.extend(
        [
            "energy",
            "v_moment",
            "entropy",
            "entropy_stderr",
            "dissipation_refit",
            "dissipation_refit_stderr",
            "collisions_accepted",
            "candidates",
        ]
        .map(String::from),
    );
    let mut table = Table { columns: cols, rows: Vec::new() };
    for r in &out.trace {
        let mut row = vec![r.step.to_string(), num(r.t), num(r.mass)];
        row.extend(r.momentum.as_slice().iter().map(|&m| num(m)));
        row.extend([
            num(r.energy),
            num(r.v_moment),
            opt(r.entropy),
            opt(r.entropy_stderr),
            opt(r.dissipation_refit.map(|e| e.value)),
            opt(r.dissipation_refit.map(|e| e.std_error)),
            r.collisions_accepted.to_string(),
            r.candidates.to_string(),
        ]);
        table.push(row);
    }
    table
}

fn snapshot_table(out: &RunOutput, d: usize) -> Table {
    let mut cols: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    cols.extend((1..=d).map(|i| format!("v_{i}")));
    let mut table = Table { columns: cols, rows: Vec::new() };
    for (x, v) in out.ensemble.x.iter().zip(&out.ensemble.v) {
        table.push(x.as_slice().iter().chain(v.as_slice()).map(|&c| num(c)).collect());
    }
    table
}

pub fn check_pairs(common: &Common, pair: &str, psi_star: Option<String>) -> Result<Outcome, CliError> {
    let cfg = setup(common)?;
    let names: Vec<&str> = match pair {
        "all" => vec!["quadratic", "cosh"],
        p => vec![p],
    };
    let mut reports = Vec::new();
    for name in names {
        let p = pair_by_name(name, psi_star.as_deref())?;
        reports.push(check_pair(&p, cfg.mc.seed)?);
    }
    write_json(cfg.output.path.as_deref().map(Path::new), &reports)?;
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| r.checks.iter().filter(|c| !c.passed).map(move |c| format!("{}:{}", r.pair, c.name)))
        .collect();
    Ok(if failed.is_empty() { Outcome::Ok } else { Outcome::Flagged(format!("failed checks: {}", failed.join(", "))) })
}

pub fn check_geometry(common: &Common, dim: Option<usize>, frames: usize) -> Result<Outcome, CliError> {
    let cfg = setup(common)?;
    let dims = match dim {
        Some(d) => vec![d],
        None => vec![2, 3],
    };
    let reports = dims.iter().map(|&d| geometry_suite(d, frames, cfg.mc.seed)).collect::<grazing_lab::Result<Vec<_>>>()?;
    write_json(cfg.output.path.as_deref().map(Path::new), &reports)?;
    Ok(if reports.iter().all(|r| r.passed) {
        Outcome::Ok
    } else {
        Outcome::Flagged("geometry checks failed".into())
    })
}
