//! `viterbi-par`: simulate, solve and certify state-space MAP problems from the shell.
//!
//! Exit codes: 0 success, 1 a `verify` check failed, 2 configuration error,
//! 3 I/O error, 4 solver divergence, 5 certification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use viterbi_par::certificates::{self, DecayConvexityCertificate};
use viterbi_par::models::config::ModelConfig;
use viterbi_par::models::simulate::simulate;
use viterbi_par::objective::{eval_u, BoundaryMode, Objective, WindowedObjective};
use viterbi_par::parallel::{relative_error, solve_parallel, sweep_delta};
use viterbi_par::solver::{solve_map, SolverConfig, StepMode};
use viterbi_par::{build_segment_plan, io, oracles, Error, GammaWeight, ModelSpec, Observations, PathVector};

#[derive(Parser)]
#[command(name = "viterbi-par", version, about = "MAP path estimation for state-space models with overlapped parallel segments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw states and observations from a model config.
    Simulate(SimulateArgs),
    /// Solve the full MAP problem.
    Solve(SolveArgs),
    /// Solve by overlapped segments and stitch.
    SolvePar(SolveParArgs),
    /// Decay-convexity certificate, with bounds when data are given.
    Certify(CertifyArgs),
    /// Relative error of the segment scheme over a list of overlaps.
    Sweep(SweepArgs),
    /// Oracle and property checks on a model and data set.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Largest time index; `n + 1` blocks are drawn.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    model: PathBuf,
    /// Observation CSV (`t,y0,…`).
    #[arg(long, conflicts_with = "spikes")]
    obs: Option<PathBuf>,
    /// Spike manifest written by `simulate` or by hand.
    #[arg(long)]
    spikes: Option<PathBuf>,
    /// Factor CSV (`t,z0,…`) for the stochastic-volatility likelihood.
    #[arg(long)]
    factors: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fixed,
    Backtracking,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "backtracking")]
    mode: ModeArg,
    /// Fixed step, or the initial trial step when backtracking.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Gradient-norm tolerance; defaults to `1e-8·√(n+1)`.
    #[arg(long)]
    tol: Option<f64>,
    /// Weight of the norm used by the stopping rule.
    #[arg(long, default_value_t = 1.0)]
    norm_gamma: f64,
}

impl SolverArgs {
    fn config(&self) -> anyhow::Result<SolverConfig> {
        let cfg = SolverConfig {
            step_mode: match self.mode {
                ModeArg::Fixed => StepMode::Fixed,
                ModeArg::Backtracking => StepMode::Backtracking,
            },
            step_size: self.step,
            max_iters: self.max_iters,
            grad_tol: self.tol,
            gamma: GammaWeight::new(self.norm_gamma)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct PlanArgs {
    /// Number of segments.
    #[arg(long, default_value_t = 1)]
    l: usize,
    /// Worker threads; never changes numeric output.
    #[arg(long, env = "VITERBI_PAR_WORKERS")]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    boundary: Option<BoundaryArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    FullPrior,
    MarginalPrior,
    FlatStart,
}

impl PlanArgs {
    fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    fn boundary(&self) -> Option<BoundaryMode> {
        self.boundary.map(|b| match b {
            BoundaryArg::FullPrior => BoundaryMode::FullPrior,
            BoundaryArg::MarginalPrior => BoundaryMode::MarginalPrior,
            BoundaryArg::FlatStart => BoundaryMode::FlatStart,
        })
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveParArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value_t = 0)]
    delta: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with = "spikes")]
    obs: Option<PathBuf>,
    #[arg(long)]
    spikes: Option<PathBuf>,
    #[arg(long)]
    factors: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Time index for the horizon bounds.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Segment count and overlap for the segment-error bound.
    #[arg(long, default_value_t = 1)]
    l: usize,
    #[arg(long, default_value_t = 0)]
    delta: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    plan: PlanArgs,
    /// Comma-separated, nondecreasing overlaps.
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40,50,60,70,80,90,100")]
    deltas: Vec<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Io(anyhow::Error),
    Divergence(anyhow::Error),
    Certificate(anyhow::Error),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Divergence(_) => 4,
            Failure::Certificate(_) => 5,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        for cause in e.chain() {
            if let Some(err) = cause.downcast_ref::<Error>() {
                return match err {
                    Error::Io(_) => Failure::Io(e),
                    Error::Divergence { .. } | Error::SegmentFailures(_) => Failure::Divergence(e),
                    Error::Certificate(_) => Failure::Certificate(e),
                    _ => Failure::Config(e),
                };
            }
            if cause.downcast_ref::<std::io::Error>().is_some() {
                return Failure::Io(e);
            }
        }
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::SolvePar(a) => cmd_solve_par(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Check(msg) => eprintln!("verification failed: {msg}"),
                Failure::Config(e) | Failure::Io(e) | Failure::Divergence(e) | Failure::Certificate(e) => {
                    eprintln!("error: {e:#}")
                }
            }
            ExitCode::from(f.code())
        }
    }
}

fn load_config(path: &Path) -> CliResult<ModelConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading model config {}", path.display()))
        .map_err(Failure::Io)?;
    ModelConfig::from_json(&text)
        .with_context(|| format!("parsing model config {}", path.display()))
        .map_err(Failure::Config)
}

fn read_context<T>(r: viterbi_par::Result<T>, what: &str, path: &Path) -> CliResult<T> {
    Ok(r.with_context(|| format!("reading {what} {}", path.display()))?)
}

fn load_model(
    model: &Path,
    obs: Option<&Path>,
    spikes: Option<&Path>,
    factors: Option<&Path>,
) -> CliResult<(ModelConfig, ModelSpec)> {
    let cfg = load_config(model)?;
    let observations = match (obs, spikes) {
        (Some(p), _) => Observations::Vectors(read_context(io::read_observations_csv(p), "observations", p)?),
        (None, Some(p)) => Observations::Spikes(read_context(io::read_spikes(p), "spike manifest", p)?),
        (None, None) => return Err(Failure::Config(anyhow!("one of --obs or --spikes is required"))),
    };
    let factors = factors
        .map(|p| read_context(io::read_factors_csv(p), "factors", p))
        .transpose()?;
    let spec = cfg.build_model(observations, factors)?;
    Ok((cfg, spec))
}

fn load_data(d: &DataArgs) -> CliResult<(ModelConfig, ModelSpec)> {
    load_model(&d.model, d.obs.as_deref(), d.spikes.as_deref(), d.factors.as_deref())
}

fn create_dir(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(Failure::Io)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Config(e.into()))?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Io)
}

fn print_json(value: &Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    let _ = writeln!(std::io::stdout(), "{text}");
}

/// Lag-1 autocorrelation pooled over coordinates, each centred by its own mean.
fn lag1_autocorrelation(x: &PathVector) -> Option<f64> {
    let (n, d) = (x.num_blocks(), x.dim());
    if n < 2 {
        return None;
    }
    let mut means = vec![0.0; d];
    for b in x.blocks() {
        for (m, v) in means.iter_mut().zip(b) {
            *m += v / n as f64;
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for t in 0..n {
        for i in 0..d {
            let c = x.block(t)[i] - means[i];
            den += c * c;
            if t + 1 < n {
                num += c * (x.block(t + 1)[i] - means[i]);
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let cfg = load_config(&a.model)?;
    let signal = cfg.build_signal()?;
    let likelihood = cfg.build_likelihood(None)?;
    let sim = simulate(&signal, &likelihood, a.n, a.seed)?;
    create_dir(&a.out)?;
    let states = a.out.join("states.csv");
    io::write_path_csv(&states, &sim.states)?;
    let mut files = vec![states.display().to_string()];
    match &sim.observations {
        Observations::Vectors(ys) => {
            let p = a.out.join("observations.csv");
            io::write_observations_csv(&p, ys)?;
            files.push(p.display().to_string());
        }
        Observations::Spikes(s) => {
            let p = io::write_spikes(a.out.join("spikes"), s)?;
            files.push(p.display().to_string());
        }
    }
    if let Some(zs) = &sim.factors {
        let p = a.out.join("factors.csv");
        io::write_factors_csv(&p, zs)?;
        files.push(p.display().to_string());
    }
    print_json(&json!({
        "horizon": a.n,
        "dim": sim.states.dim(),
        "seed": a.seed,
        "signal": match &signal { viterbi_par::Signal::LinearGaussian(_) => "linear_gaussian", viterbi_par::Signal::Huber(_) => "huber" },
        "likelihood": likelihood.name(),
        "lag1_autocorrelation": lag1_autocorrelation(&sim.states),
        "files": files,
    }));
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> CliResult<()> {
    let (_, model) = load_data(&a.data)?;
    let cfg = a.solver.config()?;
    let report = solve_map(&model, &cfg, None)?;
    create_dir(&a.out)?;
    io::write_path_csv(a.out.join("solution.csv"), &report.solution)?;
    write_json(&a.out.join("report.json"), &report)?;
    print_json(&serde_json::to_value(&report).map_err(|e| Failure::Config(e.into()))?);
    Ok(())
}

fn cmd_solve_par(a: SolveParArgs) -> CliResult<()> {
    let (_, model) = load_data(&a.data)?;
    let cfg = a.solver.config()?;
    let plan = build_segment_plan(model.horizon(), a.plan.l, a.delta)?;
    let report = solve_parallel(&model, &plan, &cfg, a.plan.workers(), a.plan.boundary())?;
    create_dir(&a.out)?;
    io::write_path_csv(a.out.join("solution.csv"), &report.stitched)?;
    write_json(&a.out.join("report.json"), &report)?;
    print_json(&json!({
        "segments": report.per_segment.len(),
        "delta": a.delta,
        "wall_clock_seconds": report.wall_clock_seconds,
        "converged": report.per_segment.iter().all(|s| s.report.converged),
    }));
    Ok(())
}

fn certificate_for(cfg: &ModelConfig, model: Option<&ModelSpec>) -> CliResult<DecayConvexityCertificate> {
    if let Some(m) = model {
        return Ok(certificates::certify(m)?);
    }
    let signal = cfg.build_signal()?;
    let lambda_g = match cfg.lambda_g {
        Some(l) => l,
        None => cfg.build_likelihood(None)?.semi_log_concavity(),
    };
    Ok(match &signal {
        viterbi_par::Signal::LinearGaussian(s) => certificates::certify_linear_gaussian(s, lambda_g)?,
        viterbi_par::Signal::Huber(s) => certificates::certify_huber(s, lambda_g),
    })
}

fn apply_choice(
    cert: DecayConvexityCertificate,
    gamma: Option<f64>,
    lambda: Option<f64>,
) -> CliResult<DecayConvexityCertificate> {
    if !cert.feasible {
        return Err(Failure::Certificate(anyhow!(
            "model is not certifiable: {}",
            cert.failure.clone().unwrap_or_default()
        )));
    }
    if gamma.is_none() && lambda.is_none() {
        return Ok(cert);
    }
    Ok(cert.with_choice(gamma, lambda)?)
}

fn cmd_certify(a: CertifyArgs) -> CliResult<()> {
    let has_data = a.obs.is_some() || a.spikes.is_some();
    let (cfg, model) = if has_data {
        let (c, m) = load_model(&a.model, a.obs.as_deref(), a.spikes.as_deref(), a.factors.as_deref())?;
        (c, Some(m))
    } else {
        (load_config(&a.model)?, None)
    };
    let cert = certificate_for(&cfg, model.as_ref())?;
    if !cert.feasible {
        print_json(&serde_json::to_value(&cert).map_err(|e| Failure::Config(e.into()))?);
    }
    let cert = apply_choice(cert, a.gamma, a.lambda)?;
    let mut out = json!({ "certificate": cert });
    if let Some(m) = &model {
        let horizon = m.horizon();
        let mut bounds = serde_json::Map::new();
        let (gamma, _) = cert.choice()?;
        bounds.insert("gamma".into(), json!(gamma));
        if let Ok(alpha) = m.alpha_gamma_n(GammaWeight::new(gamma)?, a.n.min(horizon)) {
            bounds.insert("alpha".into(), json!(alpha));
        }
        for (name, value) in [
            ("thm1", certificates::thm1_bound(m, &cert, a.n, horizon)),
            ("thm2", certificates::thm2_bound(m, &cert, a.n, horizon)),
        ] {
            bounds.insert(name.into(), bound_json(value));
        }
        let plan = build_segment_plan(horizon, a.l, a.delta);
        let cor3 = plan.and_then(|p| certificates::cor3_bound(m, &cert, p.block_len - 1, a.delta, horizon));
        bounds.insert("cor3".into(), bound_json(cor3));
        out["bounds"] = Value::Object(bounds);
    }
    print_json(&out);
    Ok(())
}

fn bound_json(b: viterbi_par::Result<certificates::BoundValue>) -> Value {
    match b {
        Ok(v) => serde_json::to_value(v).expect("bounds serialize"),
        Err(e) => json!({ "unavailable": e.to_string() }),
    }
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let (_, model) = load_data(&a.data)?;
    let cfg = a.solver.config()?;
    let result = sweep_delta(&model, a.plan.l, &a.deltas, &cfg, a.plan.workers(), a.plan.boundary())?;
    let bounds = match certificates::certify(&model) {
        Ok(cert) if cert.feasible && model.chi().is_some() => {
            let cert = cert.with_choice(a.gamma, a.lambda)?;
            let big_delta = (model.horizon() + 1) / a.plan.l - 1;
            let mut col = Vec::with_capacity(a.deltas.len());
            for &d in &a.deltas {
                let tail = model.horizon() - big_delta;
                col.push(certificates::cor3_bound(&model, &cert, big_delta, d, tail)?.value);
            }
            Some(col)
        }
        _ => None,
    };
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let file = std::fs::File::create(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .map_err(Failure::Io)?;
    io::write_sweep_csv(file, &result.rows, bounds.as_deref())?;
    print_json(&json!({
        "rows": result.rows.len(),
        "reference_wall_clock_s": result.reference_wall_clock_s,
        "cor3_bound": bounds.is_some(),
        "out": a.out.display().to_string(),
    }));
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> CliResult<()> {
    use rand::{Rng, SeedableRng};

    let (_, model) = load_data(&a.data)?;
    let (n, d) = (model.horizon(), model.dim());
    let mut checks = Vec::new();
    let mut failed = Vec::new();

    let obj = WindowedObjective::full(&model);
    let mut worst_grad = 0.0f64;
    for p in 0..a.points {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(p as u64));
        let data = (0..(n + 1) * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = PathVector::from_flat(d, data)?;
        let g = obj.gradient(&x);
        let fd = oracles::finite_diff_grad(|y| eval_u(&model, y).unwrap_or(f64::NAN), &x, 1e-6)?;
        let diff = g.sub(&fd)?;
        let scale = g.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let err = diff.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt() / scale;
        worst_grad = worst_grad.max(err);
    }
    let grad_ok = worst_grad <= 1e-5;
    checks.push(json!({ "check": "gradient_vs_finite_differences", "max_relative_error": worst_grad, "pass": grad_ok }));
    if !grad_ok {
        failed.push("gradient_vs_finite_differences");
    }

    match certificates::certify(&model) {
        Ok(cert) if cert.feasible => {
            let check = certificates::empirical_decay_convexity(&model, &cert, 200, a.seed)?;
            let ok = check.min_slack >= -1e-10 && check.min_slack_gamma_one >= -1e-10;
            checks.push(json!({ "check": "decay_convexity", "result": check, "pass": ok }));
            if !ok {
                failed.push("decay_convexity");
            }
        }
        Ok(cert) => checks.push(json!({ "check": "decay_convexity", "skipped": cert.failure })),
        Err(e) => checks.push(json!({ "check": "decay_convexity", "skipped": e.to_string() })),
    }

    match oracles::rts_smoother_model(&model) {
        Ok(rts) => {
            let cfg = SolverConfig::backtracking(200_000).with_grad_tol(1e-10);
            let sol = solve_map(&model, &cfg, None)?.solution;
            let err = sol.max_abs_diff(&rts)?;
            let ok = err <= 1e-6;
            let rel = relative_error(&sol, &rts).ok();
            checks.push(json!({ "check": "map_vs_rts_smoother", "max_abs_error": err, "relative_error": rel, "pass": ok }));
            if !ok {
                failed.push("map_vs_rts_smoother");
            }
        }
        Err(e) => checks.push(json!({ "check": "map_vs_rts_smoother", "skipped": e.to_string() })),
    }

    print_json(&json!({ "checks": checks, "pass": failed.is_empty() }));
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failed.join(", ")))
    }
}
