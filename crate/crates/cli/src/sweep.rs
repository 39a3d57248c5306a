use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;
use urom::benchmarks::BenchmarkInstance;
use urom::solver::{format_float, SolverConfig, Status};

use crate::solve::solve_instance;
use crate::{timestamp, write_file, write_json, ProblemArgs, SolverArgs, Usage, EXIT_MAX_ITERS, EXIT_OK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Certificate target ε; the δ test is switched off.
    Eps,
    /// Reduced-operator target δ; the ε test is switched off.
    Delta,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value = "eps")]
    pub axis: Axis,
    /// Strictly decreasing positive targets, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Number of runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub target: f64,
    pub iterations: usize,
    pub predicted: Option<f64>,
    pub status: Option<Status>,
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn succeeded(&self) -> bool {
        matches!(self.status, Some(Status::StoppedOnDelta | Status::StoppedOnEpsilon))
    }
}

/// Least-squares line `log K = slope·log(1/target) + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub axis: Axis,
    pub points: Vec<SweepPoint>,
    pub fit: Option<Fit>,
    /// Every finished run used no more iterations than predicted.
    pub within_prediction: bool,
    /// Per-run trace bodies, in axis order.
    #[serde(skip)]
    pub traces: Vec<Option<String>>,
    #[serde(skip)]
    pub summaries: Vec<Option<serde_json::Value>>,
}

impl SweepOutcome {
    pub fn failed(&self) -> bool {
        self.points.iter().any(|p| !p.succeeded())
    }
}

pub fn validate_axis(values: &[f64]) -> Result<()> {
    if values.len() < 4 {
        return Err(Usage(format!("a sweep needs at least 4 values, got {}", values.len())).into());
    }
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Usage("sweep values must be positive".into()).into());
    }
    if values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Usage("sweep values must be strictly decreasing".into()).into());
    }
    Ok(())
}

/// Least squares over points with positive `y`; `None` with fewer than two.
pub fn fit_log_log(targets: &[f64], iterations: &[f64]) -> Option<Fit> {
    let pts: Vec<(f64, f64)> = targets
        .iter()
        .zip(iterations)
        .filter(|(_, k)| **k > 0.0)
        .map(|(t, k)| ((1.0 / t).ln(), k.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(Fit { slope, intercept: my - slope * mx })
}

fn config_for(base: &SolverConfig, axis: Axis, target: f64) -> SolverConfig {
    let mut cfg = base.clone();
    match axis {
        Axis::Eps => {
            cfg.epsilon = target;
            cfg.delta = 0.0;
        }
        Axis::Delta => {
            cfg.delta = target;
            cfg.epsilon = 0.0;
        }
    }
    cfg
}

/// Runs one solve per target on up to `jobs` threads; results keep axis order.
pub fn run_sweep(
    inst: &BenchmarkInstance,
    label: &str,
    base: &SolverConfig,
    axis: Axis,
    values: &[f64],
    jobs: usize,
) -> Result<SweepOutcome> {
    validate_axis(values)?;
    let slots: Mutex<Vec<Option<(SweepPoint, Option<String>, Option<serde_json::Value>)>>> =
        Mutex::new(vec![None; values.len()]);
    let next = AtomicUsize::new(0);
    thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, values.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&target) = values.get(i) else { break };
                let cfg = config_for(base, axis, target);
                let entry = match solve_instance(inst, label, &cfg) {
                    Ok(out) => {
                        let predicted = match axis {
                            Axis::Eps => out.predictions.k_epsilon,
                            Axis::Delta => out.predictions.k_delta,
                        };
                        let point = SweepPoint {
                            target,
                            iterations: out.result.iterations(),
                            predicted,
                            status: Some(out.result.status),
                            error: out.result.failure.clone(),
                        };
                        (point, Some(out.trace_csv), Some(out.summary))
                    }
                    Err(err) => {
                        let point = SweepPoint {
                            target,
                            iterations: 0,
                            predicted: None,
                            status: None,
                            error: Some(format!("{err:#}")),
                        };
                        (point, None, None)
                    }
                };
                slots.lock().expect("no panics while holding the lock")[i] = Some(entry);
            });
        }
    });
    let mut points = Vec::new();
    let mut traces = Vec::new();
    let mut summaries = Vec::new();
    for slot in slots.into_inner().expect("workers joined") {
        let (p, t, s) = slot.expect("every index is visited");
        points.push(p);
        traces.push(t);
        summaries.push(s);
    }
    let done: Vec<&SweepPoint> = points.iter().filter(|p| p.succeeded()).collect();
    let fit = fit_log_log(
        &done.iter().map(|p| p.target).collect::<Vec<_>>(),
        &done.iter().map(|p| p.iterations as f64).collect::<Vec<_>>(),
    );
    let within_prediction = done.iter().all(|p| p.predicted.is_none_or(|k| p.iterations as f64 <= k));
    Ok(SweepOutcome { axis, points, fit, within_prediction, traces, summaries })
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("target,iterations,predicted,status\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_float(Some(p.target)),
            p.iterations,
            format_float(p.predicted),
            p.status.map_or("error".into(), |s| s.to_string()),
        ));
    }
    out
}

pub fn execute(args: &SweepArgs) -> Result<i32> {
    validate_axis(&args.values)?;
    let inst = args.problem.load()?;
    let base = args.solver.config()?;
    let label = args.problem.label();
    let outcome = run_sweep(&inst, &label, &base, args.axis, &args.values, args.jobs)?;
    for (i, (trace, summary)) in outcome.traces.iter().zip(&outcome.summaries).enumerate() {
        let dir = args.out.join(format!("run_{i:02}"));
        if let Some(trace) = trace {
            write_file(&dir, "trace.csv", trace)?;
        }
        if let Some(summary) = summary {
            write_json(&dir, "summary.json", summary)?;
        }
    }
    write_file(&args.out, "sweep.csv", &sweep_csv(&outcome.points))?;
    let summary = json!({
        "command": "sweep",
        "instance": label,
        "axis": outcome.axis,
        "values": args.values,
        "points": outcome.points,
        "fit": outcome.fit,
        "within_prediction": outcome.within_prediction,
        "config": base,
        "seed": base.seed,
        "created_unix": timestamp(),
    });
    write_json(&args.out, "summary.json", &summary)?;
    for p in &outcome.points {
        if args.verbose || !p.succeeded() {
            eprintln!(
                "target={:e} K={} predicted={} {}",
                p.target,
                p.iterations,
                p.predicted.map_or("-".into(), |k| format!("{k:.1}")),
                p.error.as_deref().unwrap_or(""),
            );
        }
    }
    match outcome.fit {
        Some(fit) => println!("{}: slope {:.4} over {} runs", inst.name, fit.slope, outcome.points.len()),
        None => println!("{}: no fit (too few finished runs)", inst.name),
    }
    Ok(if outcome.failed() { EXIT_MAX_ITERS } else { EXIT_OK })
}
