//! The `meanfield` command line.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use meanfield_core::dp::{backward_induction_with_cap, dp_value, DEFAULT_ATOM_CAP};
use meanfield_core::hjb::{build_simplex_grid, feedback_policy, solve_hjb, synthesize_action_function, ValueField};
use meanfield_core::meanfield::{flow_value, integrate_flow, DEFAULT_STEPS};
use meanfield_core::rng::seeded;
use meanfield_core::sim::{path_value, simulate, Policy};
use meanfield_core::validate::{validate_model, ValidationReport, Violation};
use meanfield_core::{ActionFunction, ConstantPolicy, ModelSpec, OccupancyMeasure, OpenLoopPolicy};
use serde_json::json;

use crate::artifact::{alpha_table, emit, flow_table, mc_table, report_table, trajectory_table, Artifact, Cell};
use crate::config::{
    alpha_function, alpha_rows, measure, parse_assignment, read_alpha_file, resolve_model, AlphaRow, Format,
    ResolvedModel, RunConfig,
};
use crate::error::{Error, Result};
use crate::parallel::{evaluate_value_mc_par, with_threads};
use crate::report::{convergence_report, ReportConfig};

#[derive(Debug, Parser)]
#[command(name = "meanfield", version, about = "Mean-field optimal control of large object populations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check rates, rate cap and reward bounds on sampled points.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Simulate the N-object chain once, or estimate its value by Monte-Carlo.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        n: usize,
        /// Estimate the value over this many replications instead of writing one path.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Integrate the limiting ODE under an action function.
    Flow {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<PathBuf>,
        /// Constant action (index into the action grid) when no file is given.
        #[arg(long)]
        action: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
    },
    /// Exact backward induction for N objects.
    Dp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_ATOM_CAP)]
        atom_cap: usize,
    },
    /// Solve the limit's HJB equation on a simplex grid.
    Hjb {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Build the optimal open-loop action function from the HJB solution.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Tabulate exact, open-loop, heuristic and limit values against N.
    Converge {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 50, 100])]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        replications: usize,
        /// Use this action function instead of synthesizing one.
        #[arg(long)]
        alpha: Option<PathBuf>,
        #[arg(long, default_value_t = ReportConfig::default().dp_atom_cap)]
        dp_atom_cap: usize,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model file or `builtin:pricing|virus|broker`.
    #[arg(long)]
    pub model: String,
    /// Override a model parameter (`key=value`, repeatable).
    #[arg(long = "set", value_parser = parse_assignment)]
    pub set: Vec<(String, f64)>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Time horizon T in rescaled time (built-in models have defaults).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Initial occupancy measure, comma separated (default: the model's own,
    /// or every object in the first state for model files).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub m0: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Simplex grid resolution G.
    #[arg(long, default_value_t = 40)]
    pub grid: usize,
    /// Time steps K.
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// `constant`, `open-loop` (needs --alpha) or `feedback` (solves the HJB equation).
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub alpha: Option<PathBuf>,
    /// Action index for the constant policy.
    #[arg(long)]
    pub action: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
}

struct Context {
    cfg: RunConfig,
    model: ModelSpec,
    /// NaN for commands that need no horizon.
    horizon: f64,
    m0: OccupancyMeasure,
    out: Option<PathBuf>,
}

fn context(name: &str, c: &Common) -> Result<Context> {
    context_with(name, c, true)
}

/// Like [`context`]; the horizon may stay unset when `timed` is false.
fn context_with(name: &str, c: &Common, timed: bool) -> Result<Context> {
    let set: BTreeMap<String, f64> = c.set.iter().cloned().collect();
    let ResolvedModel { model, horizon, initial } = resolve_model(&c.model, &set)?;
    let horizon = c.horizon.or(horizon);
    let horizon = match horizon {
        Some(h) if !(h > 0.0 && h.is_finite()) => {
            return Err(Error::Config(format!("horizon must be positive, got {h}")))
        }
        Some(h) => Some(h),
        None if timed => return Err(Error::Config("--horizon is required for model files".into())),
        None => None,
    };
    let weights = c.m0.clone().unwrap_or(initial);
    let m0 = measure(&weights, model.num_states())?;
    let cfg = RunConfig {
        subcommand: name.to_string(),
        model: c.model.clone(),
        set,
        seed: c.seed,
        format: c.format,
        horizon,
        m0: Some(weights),
        ..RunConfig::default()
    };
    Ok(Context {
        cfg,
        model,
        horizon: horizon.unwrap_or(f64::NAN),
        m0,
        out: c.out.clone(),
    })
}

fn finish(ctx: &Context, artifact: Artifact) -> Result<()> {
    emit(&artifact.render(&ctx.cfg), ctx.out.as_deref())
}

fn solve(ctx: &mut Context, s: &SolverArgs) -> Result<ValueField> {
    ctx.cfg.grid = Some(s.grid);
    ctx.cfg.steps = Some(s.steps);
    let grid = build_simplex_grid(ctx.model.num_states(), s.grid)?;
    let field = solve_hjb(&ctx.model, grid, ctx.horizon, s.steps)?;
    if !field.cfl_ok() {
        eprintln!("warning: CFL number {} exceeds 1; refine the time steps", field.cfl);
    }
    Ok(field)
}

fn constant_alpha(ctx: &Context, index: usize) -> Result<ActionFunction> {
    let actions = ctx.model.actions().actions();
    let a = actions.get(index).ok_or_else(|| {
        Error::Config(format!("action index {index} out of range (grid has {} actions)", actions.len()))
    })?;
    Ok(ActionFunction::constant(a.clone(), ctx.horizon)?)
}

fn load_alpha(ctx: &mut Context, path: &std::path::Path) -> Result<ActionFunction> {
    let rows = read_alpha_file(path)?;
    let alpha = alpha_function(&rows)?;
    if (alpha.horizon() - ctx.horizon).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "action function ends at {} but the horizon is {}",
            alpha.horizon(),
            ctx.horizon
        )));
    }
    ctx.cfg.alpha = Some(rows);
    Ok(alpha)
}

fn describe(model: &ModelSpec, v: &Violation) -> String {
    let name = |i: usize| model.state_names()[i].as_str();
    match v {
        Violation::NegativeRate { from, to, value, m, a } => {
            format!("negative rate {value} from {} to {} at m = {m:?}, a = {a:?}", name(*from), name(*to))
        }
        Violation::RateCapExceeded { state, row_sum, cap, m, a } => {
            format!("row sum {row_sum} of {} exceeds rate cap {cap} at m = {m:?}, a = {a:?}", name(*state))
        }
        Violation::NonFinite { what, m, a } => format!("non-finite {what} at m = {m:?}, a = {a:?}"),
        Violation::Evaluation(e) => format!("evaluation failed: {e}"),
    }
}

fn validation_document(model: &ModelSpec, r: &ValidationReport) -> serde_json::Value {
    json!({
        "ok": r.is_ok(),
        "probes": r.probes,
        "rate_cap": r.rate_cap,
        "max_row_sum": r.max_row_sum,
        "min_rate": r.min_rate,
        "reward_sup": r.reward_sup,
        "terminal_sup": r.terminal_sup,
        "drift_sup": r.drift_sup,
        "drift_lipschitz_m": r.drift_lipschitz_m,
        "drift_lipschitz_a": r.drift_lipschitz_a,
        "reward_lipschitz_m": r.reward_lipschitz_m,
        "reward_lipschitz_a": r.reward_lipschitz_a,
        "violations": r.violations.iter().map(|v| describe(model, v)).collect::<Vec<_>>(),
    })
}

fn cmd_validate(c: &Common, samples: usize) -> Result<()> {
    let mut ctx = context_with("validate", c, false)?;
    ctx.cfg.samples = Some(samples);
    let report = validate_model(&ctx.model, samples.max(1), c.seed);
    let doc = validation_document(&ctx.model, &report);
    let text = match c.format {
        Format::Json => Artifact::Document(doc).render(&ctx.cfg),
        Format::Csv => {
            let mut s = String::new();
            for (k, v) in doc.as_object().expect("object") {
                if k != "violations" {
                    s.push_str(&format!("{k}: {v}\n"));
                }
            }
            for v in &report.violations {
                s.push_str(&format!("violation: {}\n", describe(&ctx.model, v)));
            }
            s
        }
    };
    emit(&text, ctx.out.as_deref())?;
    if report.is_ok() {
        Ok(())
    } else {
        Err(Error::Violation(format!("{} violation(s)", report.violations.len())))
    }
}

fn cmd_simulate(c: &Common, p: &PolicyArgs, n: usize, replications: Option<usize>) -> Result<()> {
    let mut ctx = context("simulate", c)?;
    ctx.cfg.n = Some(n);
    ctx.cfg.replications = replications;
    let kind = p.policy.clone().unwrap_or_else(|| {
        if p.alpha.is_some() {
            "open-loop".into()
        } else {
            "constant".into()
        }
    });
    ctx.cfg.policy = Some(kind.clone());
    let field;
    let policy: Box<dyn Policy> = match kind.as_str() {
        "constant" => {
            let index = p.action.unwrap_or(0);
            ctx.cfg.action = Some(index);
            let a = constant_alpha(&ctx, index)?.eval(0.0)?;
            Box::new(ConstantPolicy(a))
        }
        "open-loop" => {
            let path = p
                .alpha
                .as_ref()
                .ok_or_else(|| Error::Config("open-loop policy needs --alpha".into()))?;
            Box::new(OpenLoopPolicy(load_alpha(&mut ctx, path)?))
        }
        "feedback" => {
            let solver = SolverArgs {
                grid: p.grid.unwrap_or(40),
                steps: p.steps.unwrap_or(400),
            };
            field = solve(&mut ctx, &solver)?;
            Box::new(feedback_policy(&field, &ctx.model))
        }
        other => return Err(Error::Config(format!("unknown policy `{other}`"))),
    };
    let m0 = ctx.m0.round_to_grain(n)?;
    let artifact = match replications {
        Some(r) => {
            let est = evaluate_value_mc_par(&ctx.model, n, policy.as_ref(), &m0, ctx.horizon, r, c.seed)?;
            eprintln!("value {} +- {}", est.mean, est.std_error);
            Artifact::Table(mc_table(&est))
        }
        None => {
            let traj = simulate(&ctx.model, n, policy.as_ref(), &m0, ctx.horizon, &mut seeded(c.seed))?;
            let value = path_value(&ctx.model, &traj)?;
            eprintln!("value {value}");
            Artifact::Table(trajectory_table(&ctx.model, &traj, value))
        }
    };
    finish(&ctx, artifact)
}

fn cmd_flow(c: &Common, alpha: Option<&std::path::Path>, action: Option<usize>, step: Option<f64>) -> Result<()> {
    let mut ctx = context("flow", c)?;
    let alpha = match alpha {
        Some(path) => load_alpha(&mut ctx, path)?,
        None => {
            let index = action.unwrap_or(0);
            ctx.cfg.action = Some(index);
            constant_alpha(&ctx, index)?
        }
    };
    let h = step.unwrap_or(ctx.horizon / DEFAULT_STEPS as f64);
    ctx.cfg.step_size = Some(h);
    let flow = integrate_flow(&ctx.model, ctx.m0.weights(), &alpha, ctx.horizon, h)?;
    let value = flow_value(&ctx.model, &flow)?;
    eprintln!("value {value}");
    finish(&ctx, Artifact::Table(flow_table(&ctx.model, &flow, value)))
}

fn cmd_dp(c: &Common, n: usize, atom_cap: usize) -> Result<()> {
    let mut ctx = context("dp", c)?;
    ctx.cfg.n = Some(n);
    let sol = backward_induction_with_cap(&ctx.model, n, ctx.horizon, atom_cap)?;
    let m0 = ctx.m0.round_to_grain(n)?;
    let value = dp_value(&sol, &m0)?;
    eprintln!("value {value}");
    let atoms: Vec<Vec<usize>> = (0..sol.index.len()).map(|i| sol.index.counts(i)).collect();
    let doc = json!({
        "states": ctx.model.state_names(),
        "population": n,
        "slots": sol.slots(),
        "start": m0.counts()?,
        "value": value,
        "actions": sol.actions.iter().map(|a| a.0.clone()).collect::<Vec<_>>(),
        "atoms": atoms,
        "values_t0": sol.values[0],
        "argmax": sol.argmax,
    });
    finish(&ctx, Artifact::Document(doc))
}

fn field_document(model: &ModelSpec, field: &ValueField, m0: &OccupancyMeasure) -> Result<serde_json::Value> {
    let nodes: Vec<Vec<usize>> = (0..field.grid.len()).map(|i| field.grid.node_counts(i)).collect();
    Ok(json!({
        "states": model.state_names(),
        "resolution": field.grid.resolution(),
        "horizon": field.horizon,
        "steps": field.steps,
        "cfl": field.cfl,
        "value_at_m0": field.value(m0.weights(), 0.0)?,
        "actions": field.actions.iter().map(|a| a.0.clone()).collect::<Vec<_>>(),
        "nodes": nodes,
        "values_t0": field.values[0],
        "greedy": field.greedy,
    }))
}

fn cmd_hjb(c: &Common, s: &SolverArgs) -> Result<()> {
    let mut ctx = context("hjb", c)?;
    let field = solve(&mut ctx, s)?;
    let doc = field_document(&ctx.model, &field, &ctx.m0)?;
    finish(&ctx, Artifact::Document(doc))
}

fn synthesized(ctx: &mut Context, s: &SolverArgs) -> Result<(ActionFunction, f64)> {
    let field = solve(ctx, s)?;
    let (alpha, flow) = synthesize_action_function(&field, &ctx.model, ctx.m0.weights())?;
    let value = flow_value(&ctx.model, &flow)?;
    Ok((alpha, value))
}

fn cmd_synthesize(c: &Common, s: &SolverArgs) -> Result<()> {
    let mut ctx = context("synthesize", c)?;
    let (alpha, value) = synthesized(&mut ctx, s)?;
    let rows: Vec<AlphaRow> = alpha_rows(&alpha)?;
    let switches: Vec<String> = alpha.switch_times().iter().map(f64::to_string).collect();
    eprintln!("v_star {value}; switches at [{}]", switches.join(", "));
    let summary = vec![
        ("v_star".into(), Cell::Num(value)),
        ("switches".into(), Cell::Text(switches.join(";"))),
    ];
    finish(&ctx, Artifact::Table(alpha_table(&rows, summary)))
}

fn cmd_converge(
    c: &Common,
    s: &SolverArgs,
    n_list: &[usize],
    replications: usize,
    alpha: Option<&std::path::Path>,
    dp_atom_cap: usize,
) -> Result<()> {
    let mut ctx = context("converge", c)?;
    ctx.cfg.n_list = Some(n_list.to_vec());
    ctx.cfg.replications = Some(replications);
    let field = solve(&mut ctx, s)?;
    let alpha = match alpha {
        Some(path) => load_alpha(&mut ctx, path)?,
        None => synthesize_action_function(&field, &ctx.model, ctx.m0.weights())?.0,
    };
    let rc = ReportConfig {
        n_list: n_list.to_vec(),
        replications,
        seed: c.seed,
        dp_atom_cap,
        ..ReportConfig::default()
    };
    let rows = convergence_report(&ctx.model, &alpha, &field, &ctx.m0, &rc)?;
    finish(&ctx, Artifact::Table(report_table(&rows)))
}

fn threads_of(cmd: &Command) -> Option<usize> {
    match cmd {
        Command::Validate { common, .. }
        | Command::Simulate { common, .. }
        | Command::Flow { common, .. }
        | Command::Dp { common, .. }
        | Command::Hjb { common, .. }
        | Command::Synthesize { common, .. }
        | Command::Converge { common, .. } => common.threads,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cmd = &cli.command;
    with_threads(threads_of(cmd), || match cmd {
        Command::Validate { common, samples } => cmd_validate(common, *samples),
        Command::Simulate {
            common,
            policy,
            n,
            replications,
        } => cmd_simulate(common, policy, *n, *replications),
        Command::Flow {
            common,
            alpha,
            action,
            step_size,
        } => cmd_flow(common, alpha.as_deref(), *action, *step_size),
        Command::Dp { common, n, atom_cap } => cmd_dp(common, *n, *atom_cap),
        Command::Hjb { common, solver } => cmd_hjb(common, solver),
        Command::Synthesize { common, solver } => cmd_synthesize(common, solver),
        Command::Converge {
            common,
            solver,
            n_list,
            replications,
            alpha,
            dp_atom_cap,
        } => cmd_converge(common, solver, n_list, *replications, alpha.as_deref(), *dp_atom_cap),
    })?
}

/// Parse `args`, run, and map the outcome to an exit code, reporting
/// failures as `error[category]: detail` on stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}
