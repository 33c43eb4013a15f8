//! Command implementations shared by the binary and the integration tests.

use std::path::Path;

use num_complex::Complex64;

use levyq::first_passage::BusyPeriodView;
use levyq::inversion::marginal_distribution;
use levyq::models::CoupledSystem;
use levyq::sim::{simulate_cpp, simulate_euler, EstimateReport, SimConfig};
use levyq::transform::{FactorPlan, TransformContext};
use levyq::wiener_hopf::{FactorMethod, GridParams};
use levyq::{Error, Result};

use crate::config::{ModelConfig, RunOptions};
use crate::report::{fmt_float, text_table, write_csv, RunReport};

fn factor_plan(run: &RunOptions) -> FactorPlan {
    FactorPlan::Auto {
        grid: GridParams {
            theta_max: run.factor_theta,
            points: run.factor_points,
            tail_tol: run.tail_tol,
        },
        mc_paths: run.mc_paths,
        seed: run.seed,
    }
}

fn method_name(method: FactorMethod) -> &'static str {
    match method {
        FactorMethod::ClosedForm => "closed_form",
        FactorMethod::Grid => "grid_factorization",
        FactorMethod::MonteCarlo => "monte_carlo",
    }
}

fn sim_config(run: &RunOptions) -> SimConfig {
    let grid: Vec<(f64, f64)> = run
        .grid1
        .iter()
        .flat_map(|&a1| run.grid2.iter().map(move |&a2| (a1, a2)))
        .collect();
    SimConfig {
        horizon: run.horizon,
        warmup_frac: run.warmup,
        euler_step: run.euler_step,
        replications: run.replications,
        batches: run.batches,
        seed: run.seed,
        transform_grid: grid,
        cdf_points: run.xs.clone(),
    }
}

fn run_simulation(system: &CoupledSystem, config: &SimConfig) -> Result<EstimateReport> {
    if system.x1.bounded_variation() && system.x2.bounded_variation() {
        simulate_cpp(system, config)
    } else {
        simulate_euler(system, config)
    }
}

/// Three-point Richardson estimate of the atom `P(W_i = 0)` from the marginal
/// transform at large real arguments.
fn atom_estimate(ctx: &TransformContext, queue: usize) -> Result<f64> {
    let a0 = 1e4;
    let v1 = ctx.marginal_lst(queue, Complex64::new(a0, 0.0))?.re;
    let v2 = ctx.marginal_lst(queue, Complex64::new(2.0 * a0, 0.0))?.re;
    let v4 = ctx.marginal_lst(queue, Complex64::new(4.0 * a0, 0.0))?.re;
    Ok(((8.0 * v4 - 6.0 * v2 + v1) / 3.0).clamp(0.0, 1.0))
}

pub fn cmd_analyze(
    config: &ModelConfig,
    config_text: &str,
    out: Option<&Path>,
) -> Result<RunReport> {
    let (mut report, start) = RunReport::start("analyze", config_text);
    let system = config.coupled_system()?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push = |key: &str, value: String| {
        println!("{key}: {value}");
        rows.push(vec![key.to_string(), value]);
    };

    for (name, model) in [("queue1", &system.x1), ("queue2", &system.x2)] {
        push(&format!("{name}.model"), model.describe());
        push(&format!("{name}.drift"), fmt_float(model.drift()));
        push(&format!("{name}.curvature"), fmt_float(model.curvature()));
        push(
            &format!("{name}.variation"),
            if model.bounded_variation() {
                "bounded".into()
            } else {
                "unbounded".into()
            },
        );
        if let Some(rho) = model.load() {
            push(&format!("{name}.load"), fmt_float(rho));
        }
        if let Ok(view) = BusyPeriodView::new(model) {
            push(&format!("{name}.busy.residual"), view.residual.describe());
            push(
                &format!("{name}.busy.mean_initial"),
                fmt_float(view.residual.mean()),
            );
            push(&format!("{name}.busy.mean_period"), fmt_float(view.mean()));
        }
    }
    push("coupling.r1", fmt_float(system.r1));
    push("coupling.r2", fmt_float(system.r2));
    let st = system.stability();
    push("stability.margin1", fmt_float(st.margins.0));
    push("stability.margin2", fmt_float(st.margins.1));
    push("stability.stable", st.stable.to_string());

    if st.stable {
        let aux = levyq::auxiliary::AuxiliarySystem::new(&system)?;
        push("aux.p_left", fmt_float(aux.p_left));
        push("aux.p_right", fmt_float(aux.p_right));
        push("aux.p_left_zero", fmt_float(aux.p_left_zero));
        push("aux.p_right_zero", fmt_float(aux.p_right_zero));
        push("aux.phi1_zero", fmt_float(aux.phi1_zero));
        push("aux.phi2_zero", fmt_float(aux.phi2_zero));
        let (l1, l2) = system.regulator_rates();
        push("stationary.regulator_rate1", fmt_float(l1));
        push("stationary.regulator_rate2", fmt_float(l2));
    }

    if let Some(dir) = out {
        let path = write_csv(dir, "analyze.csv", "key,value", &rows)
            .map_err(|e| Error::Unsupported(format!("cannot write output: {e}")))?;
        report.outputs.push(path);
    }
    system.require_stable()?;
    report.elapsed_ms = start.elapsed().as_millis();
    Ok(report)
}

pub fn cmd_transform(
    config: &ModelConfig,
    config_text: &str,
    out: Option<&Path>,
) -> Result<RunReport> {
    let (mut report, start) = RunReport::start("transform", config_text);
    let system = config.coupled_system()?;
    let ctx = TransformContext::with_plan(&system, &factor_plan(&config.run))?;
    let method = method_name(ctx.method());
    let tolerance = ctx
        .tolerance()
        .map(fmt_float)
        .unwrap_or_else(|| "statistical".into());
    let mut rows = Vec::new();
    for &a1 in &config.run.grid1 {
        for &a2 in &config.run.grid2 {
            let value = ctx.joint_transform(Complex64::new(a1, 0.0), Complex64::new(a2, 0.0))?;
            let residual =
                ctx.functional_eq_residual(Complex64::new(a1, 0.0), Complex64::new(a2, 0.0), None)?;
            rows.push(vec![
                fmt_float(a1),
                fmt_float(a2),
                fmt_float(value.re),
                method.to_string(),
                fmt_float(residual),
            ]);
        }
    }
    println!("factor method: {method} (tolerance: {tolerance})");
    print!(
        "{}",
        text_table(&["alpha1", "alpha2", "value", "method", "residual"], &rows)
    );
    if let Some(dir) = out {
        let path = write_csv(dir, "transform.csv", "alpha1,alpha2,value,method,residual", &rows)
            .map_err(|e| Error::Unsupported(format!("cannot write output: {e}")))?;
        report.outputs.push(path);
    }
    report.elapsed_ms = start.elapsed().as_millis();
    Ok(report)
}

pub fn cmd_moments(
    config: &ModelConfig,
    config_text: &str,
    out: Option<&Path>,
) -> Result<RunReport> {
    let (mut report, start) = RunReport::start("moments", config_text);
    let system = config.coupled_system()?;
    let ctx = TransformContext::with_plan(&system, &factor_plan(&config.run))?;
    let m = ctx.moments(config.run.moment_step)?;
    println!("mean workload 1: {}", fmt_float(m.mean_w1));
    println!("mean workload 2: {}", fmt_float(m.mean_w2));
    println!(
        "means identity: lhs {} rhs {} relative residual {}",
        fmt_float(m.means_identity_lhs),
        fmt_float(m.means_identity_rhs),
        fmt_float(m.means_identity_residual)
    );
    if let Some(dir) = out {
        let rows = vec![
            vec!["mean_w1".into(), fmt_float(m.mean_w1)],
            vec!["mean_w2".into(), fmt_float(m.mean_w2)],
            vec!["step".into(), fmt_float(m.step)],
            vec!["means_identity_lhs".into(), fmt_float(m.means_identity_lhs)],
            vec!["means_identity_rhs".into(), fmt_float(m.means_identity_rhs)],
            vec![
                "means_identity_residual".into(),
                fmt_float(m.means_identity_residual),
            ],
        ];
        let path = write_csv(dir, "moments.csv", "quantity,value", &rows)
            .map_err(|e| Error::Unsupported(format!("cannot write output: {e}")))?;
        report.outputs.push(path);
    }
    report.elapsed_ms = start.elapsed().as_millis();
    Ok(report)
}

pub fn cmd_marginal(
    config: &ModelConfig,
    config_text: &str,
    out: Option<&Path>,
) -> Result<RunReport> {
    let (mut report, start) = RunReport::start("marginal", config_text);
    let queue = config.run.queue;
    let system = config.coupled_system()?;
    let ctx = TransformContext::with_plan(&system, &factor_plan(&config.run))?;
    let table = marginal_distribution(&ctx, queue, &config.run.xs, &config.run.inversion_config())?;
    println!(
        "queue {queue}: atom at zero = {} ({} grid points, max error estimate {})",
        fmt_float(table.atom_at_zero),
        table.x.len(),
        fmt_float(table.cdf_err.iter().cloned().fold(0.0, f64::max)),
    );
    let mut rows = vec![vec![
        fmt_float(0.0),
        fmt_float(table.atom_at_zero),
        fmt_float(1e-4),
        String::new(),
        "1".into(),
    ]];
    let density = table.density.as_ref();
    for (i, &x) in table.x.iter().enumerate() {
        if x == 0.0 {
            continue; // the flagged atom row already covers the origin
        }
        rows.push(vec![
            fmt_float(x),
            fmt_float(table.cdf[i]),
            fmt_float(table.cdf_err[i]),
            density.map(|d| fmt_float(d[i])).unwrap_or_default(),
            "0".into(),
        ]);
    }
    if let Some(dir) = out {
        let path = write_csv(
            dir,
            &format!("marginal_q{queue}.csv"),
            "x,cdf,cdf_err,density,is_atom",
            &rows,
        )
        .map_err(|e| Error::Unsupported(format!("cannot write output: {e}")))?;
        report.outputs.push(path);
    } else {
        print!(
            "{}",
            text_table(&["x", "cdf", "cdf_err", "density", "is_atom"], &rows)
        );
    }
    report.elapsed_ms = start.elapsed().as_millis();
    Ok(report)
}

fn estimate_rows(report: &EstimateReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for point in &report.transform {
        rows.push(vec![
            format!("transform({};{})", point.a1, point.a2),
            fmt_float(point.est.value),
            fmt_float(point.est.se),
        ]);
    }
    for (name, est) in [
        ("mean_w1", report.mean_w1),
        ("mean_w2", report.mean_w2),
        ("mean_w1w2", report.mean_w1w2),
        ("idle1", report.idle1),
        ("idle2", report.idle2),
        ("idle_both", report.idle_both),
        ("regulator_rate1", report.regulator_rate1),
        ("regulator_rate2", report.regulator_rate2),
    ] {
        rows.push(vec![name.into(), fmt_float(est.value), fmt_float(est.se)]);
    }
    for (x, est) in &report.cdf1 {
        rows.push(vec![
            format!("cdf1({x})"),
            fmt_float(est.value),
            fmt_float(est.se),
        ]);
    }
    for (x, est) in &report.cdf2 {
        rows.push(vec![
            format!("cdf2({x})"),
            fmt_float(est.value),
            fmt_float(est.se),
        ]);
    }
    rows
}

pub fn cmd_simulate(
    config: &ModelConfig,
    config_text: &str,
    out: Option<&Path>,
) -> Result<RunReport> {
    let (mut report, start) = RunReport::start("simulate", config_text);
    let system = config.coupled_system()?;
    let sim = run_simulation(&system, &sim_config(&config.run))?;
    println!(
        "simulated {} time units after warmup over {} batches (seed {})",
        fmt_float(sim.observed_time),
        sim.batch_count,
        config.run.seed
    );
    let rows = estimate_rows(&sim);
    print!("{}", text_table(&["statistic", "value", "se"], &rows));
    if let Some(dir) = out {
        let path = write_csv(dir, "simulate.csv", "statistic,value,se", &rows)
            .map_err(|e| Error::Unsupported(format!("cannot write output: {e}")))?;
        report.outputs.push(path);
    }
    report.elapsed_ms = start.elapsed().as_millis();
    Ok(report)
}

pub fn cmd_compare(
    config: &ModelConfig,
    config_text: &str,
    out: Option<&Path>,
) -> Result<RunReport> {
    let (mut report, start) = RunReport::start("compare", config_text);
    let system = config.coupled_system()?;
    let ctx = TransformContext::with_plan(&system, &factor_plan(&config.run))?;
    let sim = run_simulation(&system, &sim_config(&config.run))?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut add = |name: String, analytic: f64, value: f64, se: f64| {
        let z = (value - analytic).abs() / se.max(1e-300);
        let pass = z < 3.0;
        rows.push(vec![
            name,
            fmt_float(analytic),
            fmt_float(value),
            fmt_float(se),
            format!("{z:.2}"),
            if pass { "pass".into() } else { "FAIL".into() },
        ]);
    };

    for point in &sim.transform {
        let analytic = ctx
            .joint_transform(Complex64::new(point.a1, 0.0), Complex64::new(point.a2, 0.0))?
            .re;
        add(
            format!("transform({};{})", point.a1, point.a2),
            analytic,
            point.est.value,
            point.est.se,
        );
    }
    match ctx.moments(config.run.moment_step) {
        Ok(m) => {
            add("mean_w1".into(), m.mean_w1, sim.mean_w1.value, sim.mean_w1.se);
            add("mean_w2".into(), m.mean_w2, sim.mean_w2.value, sim.mean_w2.se);
        }
        Err(Error::Unsupported(_)) => {
            println!("note: moment extraction unavailable for this configuration");
        }
        Err(e) => return Err(e),
    }
    // idle probabilities vs transform tails, meaningful for bounded variation
    if system.x1.bounded_variation() && system.x2.bounded_variation() {
        for (queue, est) in [(1usize, sim.idle1), (2usize, sim.idle2)] {
            match atom_estimate(&ctx, queue) {
                Ok(atom) => add(format!("idle{queue}"), atom, est.value, est.se),
                Err(Error::Unsupported(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let (lr1, lr2) = system.regulator_rates();
    add(
        "regulator_rate1".into(),
        lr1,
        sim.regulator_rate1.value,
        sim.regulator_rate1.se,
    );
    add(
        "regulator_rate2".into(),
        lr2,
        sim.regulator_rate2.value,
        sim.regulator_rate2.se,
    );

    let passes = rows.iter().filter(|r| r[5] == "pass").count();
    println!(
        "factor method: {}; {} of {} comparisons within 3 standard errors",
        method_name(ctx.method()),
        passes,
        rows.len()
    );
    print!(
        "{}",
        text_table(
            &["quantity", "analytic", "simulated", "se", "z", "verdict"],
            &rows
        )
    );
    if let Some(dir) = out {
        let path = write_csv(
            dir,
            "compare.csv",
            "quantity,analytic,simulated,se,z,verdict",
            &rows,
        )
        .map_err(|e| Error::Unsupported(format!("cannot write output: {e}")))?;
        report.outputs.push(path);
    }
    report.elapsed_ms = start.elapsed().as_millis();
    Ok(report)
}
