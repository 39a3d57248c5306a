use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde_json::json;
use urom::benchmarks::BenchmarkInstance;
use urom::solver::{predicted_iterations, run, trace_csv, PredictionMode, RunResult, SolverConfig, Status};

use crate::{timestamp, write_file, write_json, ProblemArgs, SolverArgs, EXIT_INNER_FAILURE, EXIT_MAX_ITERS, EXIT_OK};

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Print one line per iteration to stderr.
    #[arg(long)]
    pub verbose: bool,
}

pub fn status_code(status: Status) -> i32 {
    match status {
        Status::StoppedOnDelta | Status::StoppedOnEpsilon => EXIT_OK,
        Status::MaxIters => EXIT_MAX_ITERS,
        Status::InnerFailure => EXIT_INNER_FAILURE,
    }
}

/// Iteration bounds evaluated with the instance's analytic smoothing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Predictions {
    pub k_delta: Option<f64>,
    pub k_epsilon: Option<f64>,
}

pub fn predictions(inst: &BenchmarkInstance, cfg: &SolverConfig, res: &RunResult) -> Predictions {
    let Some(sigma) = inst.sigma(cfg.p) else { return Predictions::default() };
    let space = &inst.problem.space;
    let k_delta = inst.known.x_star.as_ref().and_then(|x_star| {
        let r0 = space.distance(&res.x0, x_star);
        predicted_iterations(sigma.as_ref(), cfg.p, res.delta_eff, res.m0, r0, PredictionMode::Delta).ok()
    });
    let k_epsilon = match inst.problem.diameter() {
        Some(d) if cfg.epsilon > 0.0 => {
            predicted_iterations(sigma.as_ref(), cfg.p, cfg.epsilon, res.m0, d, PredictionMode::Epsilon).ok()
        }
        _ => None,
    };
    Predictions { k_delta, k_epsilon }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub result: RunResult,
    pub predictions: Predictions,
    pub trace_csv: String,
    pub summary: serde_json::Value,
}

impl SolveOutcome {
    pub fn exit_code(&self) -> i32 {
        status_code(self.result.status)
    }
}

/// Solves from the instance's suggested start unless the config sets one.
pub fn solve_instance(inst: &BenchmarkInstance, label: &str, cfg: &SolverConfig) -> Result<SolveOutcome> {
    let mut cfg = cfg.clone();
    if cfg.x0.is_none() {
        cfg.x0 = Some(inst.start.clone());
    }
    let result = run(&inst.problem, &cfg)?;
    let predictions = predictions(inst, &cfg, &result);
    let summary = json!({
        "command": "solve",
        "instance": label,
        "status": result.status.to_string(),
        "iterations": result.iterations(),
        "final_delta_cert": result.final_certificate,
        "final_norm_v_psi": result.final_norm_v_psi,
        "predicted_K_delta": predictions.k_delta,
        "predicted_K_epsilon": predictions.k_epsilon,
        "config": cfg,
        "seed": cfg.seed,
        "delta_eff": result.delta_eff,
        "m0": result.m0,
        "x0": result.x0.as_slice(),
        "x_out": result.output_point().as_slice(),
        "failure": result.failure,
        "created_unix": timestamp(),
    });
    Ok(SolveOutcome { trace_csv: trace_csv(&result.trace), result, predictions, summary })
}

pub fn execute(args: &SolveArgs) -> Result<i32> {
    let inst = args.problem.load()?;
    let cfg = args.solver.config()?;
    let outcome = solve_instance(&inst, &args.problem.label(), &cfg)?;
    write_file(&args.out, "trace.csv", &outcome.trace_csv)?;
    write_json(&args.out, "summary.json", &outcome.summary)?;
    let res = &outcome.result;
    if args.verbose {
        for rec in &res.trace {
            eprintln!(
                "k={:>5} i={:>2} M+={:.3e} r={:.3e} |V_psi|={:.3e} Delta={}",
                rec.k,
                rec.doublings,
                rec.m_plus,
                rec.r,
                rec.norm_v_psi,
                rec.certificate.map_or("-".into(), |c| format!("{c:.3e}")),
            );
        }
    }
    println!(
        "{}: {} after {} iterations (|V_psi| = {}, certificate = {})",
        inst.name,
        res.status,
        res.iterations(),
        res.final_norm_v_psi.map_or("-".into(), |v| format!("{v:.6e}")),
        res.final_certificate.map_or("-".into(), |v| format!("{v:.6e}")),
    );
    if let Some(msg) = &res.failure {
        eprintln!("{msg}");
    }
    Ok(outcome.exit_code())
}
