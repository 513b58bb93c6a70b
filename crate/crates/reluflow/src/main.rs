//! `reluflow` command line: experiment orchestration and artifact emission.
//!
//! Exit status is the verdict: 0 when every asserted invariant of the
//! subcommand passed, nonzero otherwise (with a machine-readable failure
//! report in the output directory).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use reluflow::config::{load_config, ExperimentConfig};
use reluflow::diag::{detect_limit, fit_rates, loja_probe, LimitDetection};
use reluflow::instances::{problem_1d, problem_nd, test_rng};
use reluflow::network::ParamVector;
use reluflow::risk::{gradient, risk, subdiff_witness, Evaluator, Problem};
use reluflow::solver::{solve, Trajectory};

#[derive(Parser)]
#[command(
    name = "reluflow",
    version,
    about = "Exact gradient-flow laboratory for shallow ReLU networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the risk at the configured initialization.
    Risk(RunArgs),
    /// Print the generalized gradient at the configured initialization.
    Grad(RunArgs),
    /// Finite-difference verification of the gradient on seeded instances.
    Gradcheck(RunArgs),
    /// Integrate the gradient flow; writes trajectory CSV and events JSON.
    Simulate(RunArgs),
    /// Fit convergence-rate certificates on a simulated run.
    Rates(RunArgs),
    /// Probe the Łojasiewicz inequality around the detected limit.
    Loja(RunArgs),
    /// Subdifferential witness residuals at the configured initialization.
    Witness(RunArgs),
    /// Cross-agreement of the risk evaluators on seeded instances.
    Crosscheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the config's init seed (seeded inits only).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the solver horizon.
    #[arg(long)]
    t_max: Option<f64>,
    /// Suppress informational output.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("RELUFLOW_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = Cli::parse();
    let (name, args) = match &cli.cmd {
        Cmd::Risk(a) => ("risk", a),
        Cmd::Grad(a) => ("grad", a),
        Cmd::Gradcheck(a) => ("gradcheck", a),
        Cmd::Simulate(a) => ("simulate", a),
        Cmd::Rates(a) => ("rates", a),
        Cmd::Loja(a) => ("loja", a),
        Cmd::Witness(a) => ("witness", a),
        Cmd::Crosscheck(a) => ("crosscheck", a),
    };
    match run(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let _ = std::fs::create_dir_all(&args.out);
            let report = json!({
                "status": "fail",
                "subcommand": name,
                "reason": failure,
            });
            let _ = std::fs::write(
                args.out.join("failure.json"),
                serde_json::to_string_pretty(&report).unwrap(),
            );
            eprintln!("reluflow {name}: {failure}");
            ExitCode::FAILURE
        }
    }
}

fn run(name: &str, args: &RunArgs) -> Result<(), String> {
    std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    let mut cfg = load_config(&args.config).map_err(|e| e.to_string())?;
    if let Some(t_max) = args.t_max {
        cfg.solver.t_max = t_max;
    }
    std::fs::write(args.out.join("resolved_config.json"), cfg.dump()).map_err(|e| e.to_string())?;
    let (problem, theta0) = cfg.build(args.seed).map_err(|e| e.to_string())?;
    if let Some(warn) = &problem.density_warning {
        if !args.quiet {
            eprintln!(
                "warning: density audit found a negative value {} at {:?}",
                warn.value, warn.point
            );
        }
    }
    match name {
        "risk" => {
            let value = risk(&problem, &theta0).map_err(|e| e.to_string())?;
            println!("{value}");
            Ok(())
        }
        "grad" => {
            let g = gradient(&problem, &theta0).map_err(|e| e.to_string())?;
            println!(
                "{}",
                g.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            );
            Ok(())
        }
        "gradcheck" => cmd_gradcheck(args),
        "simulate" => cmd_simulate(&cfg, &problem, &theta0, args),
        "rates" => cmd_rates(&cfg, &problem, &theta0, args),
        "loja" => cmd_loja(&cfg, &problem, &theta0, args),
        "witness" => cmd_witness(&cfg, &problem, &theta0, args),
        "crosscheck" => cmd_crosscheck(args),
        _ => unreachable!(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    std::fs::write(
        path,
        serde_json::to_string_pretty(value).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let dim = traj.samples[0].theta.len();
    let mut out = String::from("t");
    for k in 1..=dim {
        let _ = write!(out, ",theta_{k}");
    }
    out.push_str(",loss,gnorm,ndeg\n");
    for s in &traj.samples {
        let _ = write!(out, "{}", s.t);
        for v in &s.theta {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{},{},{}", s.loss, s.gnorm, s.degenerate.len());
    }
    out
}

fn run_flow(
    cfg: &ExperimentConfig,
    problem: &Problem,
    theta0: &ParamVector,
) -> Result<Trajectory, String> {
    let traj = solve(problem, theta0, &cfg.solver).map_err(|e| e.to_string())?;
    // invariants asserted on every emitted trajectory
    let loss0 = traj.samples[0].loss;
    for w in traj.samples.windows(2) {
        if w[1].loss > w[0].loss + 1e-10 * (1.0 + loss0) {
            return Err(format!(
                "risk increased between t={} and t={}",
                w[0].t, w[1].t
            ));
        }
        if !w[0].degenerate.iter().all(|i| w[1].degenerate.contains(i)) {
            return Err(format!("degenerate set shrank at t={}", w[1].t));
        }
    }
    Ok(traj)
}

fn cmd_simulate(
    cfg: &ExperimentConfig,
    problem: &Problem,
    theta0: &ParamVector,
    args: &RunArgs,
) -> Result<(), String> {
    let traj = run_flow(cfg, problem, theta0)?;
    std::fs::write(args.out.join("trajectory.csv"), trajectory_csv(&traj))
        .map_err(|e| e.to_string())?;
    let events: Vec<_> = traj
        .events
        .iter()
        .map(|(t, i)| json!({ "t": t, "neuron": i }))
        .collect();
    write_json(&args.out.join("events.json"), &events)?;
    if !args.quiet {
        println!(
            "simulate: {} samples, {} events, final loss {}",
            traj.samples.len(),
            traj.events.len(),
            traj.final_state().loss
        );
    }
    Ok(())
}

/// Limit detection with a graceful path for very short runs: a run that
/// stopped at the gradient tolerance within a few steps is already at its
/// limit.
fn detected_limit(problem: &Problem, traj: &Trajectory) -> Result<ParamVector, String> {
    if traj.samples.len() < 10 {
        let end = traj.final_state();
        if end.gnorm <= 10.0 * traj.config.g_tol {
            return Ok(ParamVector {
                theta: end.theta.clone(),
                shape: problem.shape,
            });
        }
        return Err(format!(
            "trajectory too short to assess convergence ({} samples, gnorm {})",
            traj.samples.len(),
            end.gnorm
        ));
    }
    match detect_limit(problem, traj) {
        LimitDetection::Converged(l) => Ok(l),
        LimitDetection::NotConverged { gnorm, diameter } => Err(format!(
            "trajectory did not converge (gnorm {gnorm}, half-run diameter {diameter})"
        )),
    }
}

#[derive(Serialize)]
struct CertificateJson {
    limit: Vec<f64>,
    gnorm: f64,
    #[serde(rename = "C_loss")]
    c_loss: Option<f64>,
    beta_hat: Option<f64>,
    #[serde(rename = "C_param")]
    c_param: Option<f64>,
    alpha_hat: Option<f64>,
    c_hat: Option<f64>,
    seed: u64,
    window: Option<(f64, f64)>,
}

fn cmd_rates(
    cfg: &ExperimentConfig,
    problem: &Problem,
    theta0: &ParamVector,
    args: &RunArgs,
) -> Result<(), String> {
    let traj = run_flow(cfg, problem, theta0)?;
    let limit = detected_limit(problem, &traj)?;
    let cert = fit_rates(problem, &traj, &limit, cfg.diagnostics.fit_window_fraction)
        .map_err(|e| e.to_string())?;
    if !cert.passes() {
        return Err(format!(
            "rate certificate failed: C_loss {}, beta_hat {}",
            cert.c_loss, cert.beta_hat
        ));
    }
    let out = CertificateJson {
        limit: cert.limit.clone(),
        gnorm: cert.gnorm_at_limit,
        c_loss: Some(cert.c_loss),
        beta_hat: Some(cert.beta_hat),
        c_param: Some(cert.c_param),
        alpha_hat: None,
        c_hat: None,
        seed: args.seed.unwrap_or(0),
        window: Some(cert.window),
    };
    write_json(&args.out.join("certificate.json"), &out)?;
    if !args.quiet {
        println!(
            "rates: C_loss {} beta_hat {} C_param {}",
            cert.c_loss, cert.beta_hat, cert.c_param
        );
    }
    Ok(())
}

fn cmd_loja(
    cfg: &ExperimentConfig,
    problem: &Problem,
    theta0: &ParamVector,
    args: &RunArgs,
) -> Result<(), String> {
    let traj = run_flow(cfg, problem, theta0)?;
    let limit = detected_limit(problem, &traj)?;
    let seed = args.seed.unwrap_or(0);
    let est = loja_probe(
        problem,
        &limit,
        cfg.diagnostics.probe_epsilon,
        cfg.diagnostics.probe_n,
        seed,
    )
    .map_err(|e| e.to_string())?;
    if !est.c_hat.is_finite() {
        return Err("probe found a zero-gradient sample with nonzero loss gap".into());
    }
    let out = CertificateJson {
        limit: limit.theta.clone(),
        gnorm: traj.final_state().gnorm,
        c_loss: None,
        beta_hat: None,
        c_param: None,
        alpha_hat: Some(est.alpha_hat),
        c_hat: Some(est.c_hat),
        seed,
        window: None,
    };
    write_json(&args.out.join("certificate.json"), &out)?;
    if !args.quiet {
        println!(
            "loja: alpha_hat {} c_hat {} from {} kept samples",
            est.alpha_hat, est.c_hat, est.n_samples
        );
    }
    Ok(())
}

fn cmd_witness(
    cfg: &ExperimentConfig,
    problem: &Problem,
    theta0: &ParamVector,
    args: &RunArgs,
) -> Result<(), String> {
    let w =
        subdiff_witness(problem, theta0, cfg.diagnostics.witness_n).map_err(|e| e.to_string())?;
    write_json(
        &args.out.join("witness.json"),
        &json!({ "residuals": w.residuals, "final_residual": w.final_residual }),
    )?;
    if w.final_residual > 1e-6 {
        return Err(format!(
            "witness residual did not vanish: {}",
            w.final_residual
        ));
    }
    if !args.quiet {
        println!("witness: final residual {}", w.final_residual);
    }
    Ok(())
}

fn cmd_gradcheck(args: &RunArgs) -> Result<(), String> {
    let base_seed = args.seed.unwrap_or(0);
    let results: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = test_rng(base_seed.wrapping_add(k).wrapping_mul(0x9e3779b97f4a7c15));
            let (p, theta) = problem_1d(&mut rng, (k % 4 + 1) as usize);
            let g = gradient(&p, &theta).expect("gradient");
            let h = 1e-5;
            let mut worst = 0.0f64;
            for idx in 0..theta.dim() {
                let mut tp = theta.clone();
                tp.theta[idx] += h;
                let mut tm = theta.clone();
                tm.theta[idx] -= h;
                let fd = (risk(&p, &tp).unwrap() - risk(&p, &tm).unwrap()) / (2.0 * h);
                worst = worst.max((fd - g[idx]).abs() / g[idx].abs().max(1.0));
            }
            worst
        })
        .collect();
    let max_err = results.iter().cloned().fold(0.0f64, f64::max);
    write_json(
        &args.out.join("gradcheck.json"),
        &json!({ "instances": 100, "max_rel_error": max_err, "tolerance": 1e-5 }),
    )?;
    if !args.quiet {
        println!("gradcheck: max relative error {max_err} over 100 instances");
    }
    if max_err <= 1e-5 {
        Ok(())
    } else {
        Err(format!("finite-difference mismatch: {max_err} > 1e-5"))
    }
}

fn cmd_crosscheck(args: &RunArgs) -> Result<(), String> {
    let base_seed = args.seed.unwrap_or(0);
    let one_d: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = test_rng(base_seed.wrapping_add(1000 + k));
            let (p, theta) = problem_1d(&mut rng, (k % 4 + 1) as usize);
            let exact = risk(&p, &theta).unwrap();
            let q = p.with_evaluator(Evaluator::Quadrature).unwrap();
            (risk(&q, &theta).unwrap() - exact).abs() / (1.0 + exact.abs())
        })
        .collect();
    let multi: Vec<f64> = [(2usize, 8u64), (3usize, 4u64)]
        .iter()
        .flat_map(|&(d, n)| (0..n).map(move |k| (d, k)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(d, k)| {
            let mut rng = test_rng(base_seed.wrapping_add(2000 + 100 * d as u64 + k));
            let (p, theta) = problem_nd(&mut rng, d, if d == 2 { 2 } else { 1 });
            let elim = risk(&p, &theta).unwrap();
            let q = p.with_evaluator(Evaluator::Quadrature).unwrap();
            (risk(&q, &theta).unwrap() - elim).abs() / (1.0 + elim.abs())
        })
        .collect();
    let worst_1d = one_d.iter().cloned().fold(0.0f64, f64::max);
    let worst_nd = multi.iter().cloned().fold(0.0f64, f64::max);
    write_json(
        &args.out.join("crosscheck.json"),
        &json!({
            "exact_vs_quadrature_1d": { "instances": one_d.len(), "max_rel_gap": worst_1d, "tolerance": 1e-7 },
            "elimination_vs_quadrature": { "instances": multi.len(), "max_rel_gap": worst_nd, "tolerance": 1e-6 },
        }),
    )?;
    if !args.quiet {
        println!("crosscheck: 1d gap {worst_1d}, elimination gap {worst_nd}");
    }
    if worst_1d <= 1e-7 && worst_nd <= 1e-6 {
        Ok(())
    } else {
        Err(format!(
            "evaluator disagreement: 1d {worst_1d} (tol 1e-7), nd {worst_nd} (tol 1e-6)"
        ))
    }
}
