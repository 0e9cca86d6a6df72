//! Command-line front end.
//!
//! Every subcommand reads `--config`, lets flags override config values,
//! prints one JSON document on stdout and, where a table makes sense, writes
//! it with `--csv`. Exit codes: 0 success, 1 invalid input, 2 solver failure,
//! 3 I/O failure.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{Config, ConfigError};
use crate::design::{design_case1, design_case2, feasibility_report, retarget, Calibration};
use crate::error::Error;
use crate::exec::Execution;
use crate::model::{CostParams, Policy, PolicyTargets};
use crate::output::{to_json, to_value, Csv};
use crate::roots::{model_roots, RootPair};
use crate::sens::{richardson_ratio, sens_fd, sens_ift, sens_printed, DEFAULT_FD_STEP};
use crate::sim::{policy_grid, principal_target_search, relative_grid, simulate_agent, simulate_both};
use crate::solve::forward_solve_all;
use crate::value::{coeff_b_c, qvi_check, GridSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "impulse-design", version, about = "Design and check transaction costs for impulse-controlled agents")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Also write the command's table to this CSV file.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    /// Run on the calling thread only.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy, Default)]
pub struct TargetFlags {
    #[arg(long)]
    pub x_hat: Option<f64>,
    #[arg(long)]
    pub x_star: Option<f64>,
}

#[derive(Debug, Args, Clone, Copy, Default)]
pub struct CostFlags {
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Args, Clone, Copy, Default)]
pub struct InitFlags {
    /// Starting post-purchase level; selects one branch of the forward problem.
    #[arg(long)]
    pub init_x_hat: Option<f64>,
    #[arg(long)]
    pub init_x_star: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roots l1 < 0 < l2 of the characteristic equation.
    Roots,
    /// Value-function coefficients (a1, a2, b, c) at the targets.
    Coeffs {
        #[command(flatten)]
        targets: TargetFlags,
        /// Solve with this fixed λ instead of a shared coefficient.
        #[arg(long, allow_hyphen_values = true)]
        fixed_lambda: Option<f64>,
    },
    /// Costs (λ, κ) implementing the targets.
    Design {
        #[command(flatten)]
        targets: TargetFlags,
        /// Keep λ fixed and design κ only.
        #[arg(long, allow_hyphen_values = true)]
        fixed_lambda: Option<f64>,
    },
    /// Every stationary policy (x̂, x*) under the costs.
    Solve {
        #[command(flatten)]
        costs: CostFlags,
        #[command(flatten)]
        init: InitFlags,
    },
    /// Shift the policy induced by the costs and design costs for the shifted one.
    Retarget {
        #[command(flatten)]
        costs: CostFlags,
        #[command(flatten)]
        init: InitFlags,
        /// Threshold shift.
        #[arg(long, allow_hyphen_values = true)]
        h1: f64,
        /// Post-purchase level shift.
        #[arg(long = "h-1", allow_hyphen_values = true)]
        h_minus1: f64,
    },
    /// Policy sensitivities at the calibrated targets.
    Sens {
        #[command(flatten)]
        targets: TargetFlags,
        /// Relative finite-difference step.
        #[arg(long, default_value_t = DEFAULT_FD_STEP)]
        step: f64,
    },
    /// QVI check of the calibrated value function.
    ///
    /// CSV columns: x, phi, m_phi, residual (empty where undefined).
    VerifyQvi {
        #[command(flatten)]
        targets: TargetFlags,
        #[arg(long, default_value_t = crate::value::QVI_GRID_POINTS)]
        points: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Agent (and, with a `principal` section, Principal) payoff of one policy.
    ///
    /// CSV columns: trigger, after, mean, stderr, bankruptcies.
    Simulate {
        #[command(flatten)]
        costs: CostFlags,
        #[command(flatten)]
        targets: TargetFlags,
    },
    /// Agent payoffs on an n×n policy grid around the targets, common random numbers.
    ///
    /// CSV columns: trigger, after, mean, stderr, bankruptcies.
    Grid {
        #[command(flatten)]
        costs: CostFlags,
        #[command(flatten)]
        targets: TargetFlags,
        #[arg(long, default_value_t = 0.2)]
        spread: f64,
        #[arg(long, default_value_t = 9)]
        points: usize,
    },
    /// Principal payoff over an n×n grid of designable targets.
    ///
    /// CSV columns: trigger, after, mean, stderr, bankruptcies.
    PrincipalSearch {
        #[command(flatten)]
        targets: TargetFlags,
        #[arg(long, default_value_t = 0.2)]
        spread: f64,
        #[arg(long, default_value_t = 5)]
        points: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{op}: {source}")]
    Domain { op: &'static str, source: Error },
    #[error("--config is required")]
    NoConfig,
    #[error("{0}")]
    Usage(&'static str),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) | CliError::Write { .. } => EXIT_IO,
            CliError::Config(ConfigError::Model(e)) | CliError::Domain { source: e, .. } => {
                if e.is_validation() {
                    EXIT_VALIDATION
                } else {
                    EXIT_SOLVER
                }
            }
            CliError::Config(_) | CliError::NoConfig | CliError::Usage(_) => EXIT_VALIDATION,
        }
    }
}

trait Op<T> {
    fn op(self, name: &'static str) -> Result<T, CliError>;
}

impl<T> Op<T> for crate::Result<T> {
    fn op(self, name: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Domain { op: name, source })
    }
}

struct Ctx {
    config: Config,
    csv: Option<PathBuf>,
    exec: Execution,
}

impl Ctx {
    fn targets(&self, flags: &TargetFlags) -> Result<PolicyTargets, CliError> {
        let base = self.config.targets;
        let x_hat = flags.x_hat.or(base.map(|t| t.x_hat));
        let x_star = flags.x_star.or(base.map(|t| t.x_star));
        match (x_hat, x_star) {
            (Some(x_hat), Some(x_star)) => PolicyTargets::new(x_hat, x_star).op("targets"),
            _ => Err(ConfigError::Missing("targets").into()),
        }
    }

    fn costs(&self, flags: &CostFlags) -> Result<CostParams, CliError> {
        let base = self.config.costs;
        let lambda = flags.lambda.or(base.map(|c| c.lambda));
        let kappa = flags.kappa.or(base.map(|c| c.kappa));
        match (lambda, kappa) {
            (Some(lambda), Some(kappa)) => CostParams::new(lambda, kappa).op("costs"),
            _ => Err(ConfigError::Missing("costs").into()),
        }
    }

    fn init(&self, flags: &InitFlags) -> Result<Option<PolicyTargets>, CliError> {
        match (flags.init_x_hat, flags.init_x_star) {
            (Some(h), Some(s)) => PolicyTargets::new(h, s).op("init").map(Some),
            (None, None) => Ok(None),
            _ => Err(CliError::Usage("--init-x-hat and --init-x-star go together")),
        }
    }

    fn roots_and_b(&self) -> Result<(RootPair, f64), CliError> {
        let model = self.config.validated_model()?;
        let roots = model_roots(&model).op("roots")?;
        Ok((roots, coeff_b_c(&model).0))
    }

    fn write_csv(&self, csv: &Csv) -> Result<(), CliError> {
        if let Some(path) = &self.csv {
            csv.write(path).map_err(|source| CliError::Write { path: path.clone(), source })?;
        }
        Ok(())
    }
}

fn policy_csv() -> Csv {
    Csv::new(&["trigger", "after", "mean", "stderr", "bankruptcies"])
}

fn design_json(targets: &PolicyTargets, costs: &CostParams) -> serde_json::Value {
    let report = feasibility_report(targets, costs);
    json!({
        "lambda": to_value(&costs.lambda),
        "kappa": to_value(&costs.kappa),
        "z_hat": to_value(&report.z_hat),
        "warnings": to_value(&report.warnings),
    })
}

fn execute(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let path = cli.config.as_ref().ok_or(CliError::NoConfig)?;
    let config = Config::load(path)?;
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let ctx = Ctx { config, csv: cli.csv.clone(), exec };
    let opts = crate::solve::SolveOptions { exec, ..ctx.config.solve_options() };

    Ok(match &cli.command {
        Command::Roots => {
            let model = ctx.config.validated_model()?;
            let roots = model_roots(&model).op("roots")?;
            json!({
                "l1": to_value(&roots.l1),
                "l2": to_value(&roots.l2),
                "residual": to_value(&roots.residual(&model)),
                "method": if model.jumps().is_empty() { "closed_form" } else { "bracketed" },
            })
        }
        Command::Coeffs { targets, fixed_lambda } => {
            let model = ctx.config.validated_model()?;
            let t = ctx.targets(targets)?;
            let cal = match fixed_lambda {
                Some(l) => Calibration::case1(&model, &t, *l),
                None => Calibration::case2(&model, &t),
            }
            .op("coeffs")?;
            to_value(&cal.coeffs)
        }
        Command::Design { targets, fixed_lambda } => {
            let t = ctx.targets(targets)?;
            let (roots, b) = ctx.roots_and_b()?;
            let costs = match fixed_lambda {
                Some(l) => CostParams::new(*l, design_case1(&t, *l, &roots, b).op("design")?).op("design")?,
                None => design_case2(&t, &roots, b).op("design")?,
            };
            design_json(&t, &costs)
        }
        Command::Solve { costs, init } => {
            let c = ctx.costs(costs)?;
            let init = ctx.init(init)?;
            let (roots, b) = ctx.roots_and_b()?;
            let all = forward_solve_all(&c, &roots, b, init, &opts).op("solve")?;
            let solutions: Vec<serde_json::Value> = all
                .iter()
                .map(|s| {
                    json!({
                        "x_hat": to_value(&s.targets.x_hat),
                        "x_star": to_value(&s.targets.x_star),
                        "residuals": to_value(&s.residuals),
                        "newton_iters": s.newton_iters,
                        "condition_number": to_value(&s.condition_number),
                    })
                })
                .collect();
            json!({ "unique": all.len() == 1, "solutions": solutions })
        }
        Command::Retarget { costs, init, h1, h_minus1 } => {
            let c0 = ctx.costs(costs)?;
            let init = ctx.init(init)?.or(ctx.config.targets);
            let (roots, b) = ctx.roots_and_b()?;
            let c1 = retarget(&c0, (*h1, *h_minus1), &roots, b, init, &opts).op("retarget")?;
            let base = crate::solve::forward_solve(&c0, &roots, b, init, &opts).op("retarget")?.targets;
            let shifted = PolicyTargets { x_hat: base.x_hat + h_minus1, x_star: base.x_star + h1 };
            let mut out = design_json(&shifted, &c1);
            out["from"] = to_value(&base);
            out["to"] = to_value(&shifted);
            out
        }
        Command::Sens { targets, step } => {
            let t = ctx.targets(targets)?;
            let (roots, b) = ctx.roots_and_b()?;
            let costs = design_case2(&t, &roots, b).op("sens")?;
            let ift = sens_ift(&costs, &t, &roots, b).op("sens_ift")?;
            let fd = sens_fd(&costs, &roots, b, *step, &t, &opts).op("sens_fd")?;
            let printed = sens_printed(&t, &roots, b);
            let ratio = richardson_ratio(&costs, &roots, b, 1e-2, &t, &opts).op("richardson")?;
            json!({
                "costs": to_value(&costs),
                "ift": to_value(&ift),
                "fd": to_value(&fd),
                "printed": match &printed { Ok(p) => to_value(p), Err(e) => json!({"error": e.to_string()}) },
                "relative_differences": {
                    "fd_vs_ift": to_value(&fd.relative_difference(&ift, 1e-12)),
                    "printed_vs_ift": printed.as_ref().map(|p| to_value(&p.relative_difference(&ift, 1e-12))).unwrap_or(serde_json::Value::Null),
                },
                "richardson_ratio": to_value(&ratio),
            })
        }
        Command::VerifyQvi { targets, points, tol } => {
            let model = ctx.config.validated_model()?;
            let t = ctx.targets(targets)?;
            let cal = Calibration::case2(&model, &t).op("verify-qvi")?;
            let grid = GridSpec { points: *points, ..GridSpec::around(&t) };
            let report = qvi_check(&cal.candidate(), &model, &grid, ctx.exec).op("verify-qvi")?;
            let mut csv = Csv::new(&["x", "phi", "m_phi", "residual"]);
            for r in &report.grid {
                csv.row(&[r.x.into(), r.phi.into(), r.m_phi.into(), r.residual.into()]);
            }
            ctx.write_csv(&csv)?;
            json!({
                "lambda": to_value(&cal.costs.lambda),
                "kappa": to_value(&cal.costs.kappa),
                "grid": to_value(&grid),
                "min_margin_continuation": to_value(&report.min_margin_continuation),
                "max_abs_residual_continuation": to_value(&report.max_abs_residual_continuation),
                "max_gap_intervention": to_value(&report.max_gap_intervention),
                "tolerance": to_value(tol),
                "passes": report.passes(*tol),
                "violations": report.violations(*tol),
            })
        }
        Command::Simulate { costs, targets } => {
            let model = ctx.config.validated_model()?;
            let c = ctx.costs(costs)?;
            let policy = ctx.targets(targets)?.as_policy();
            let cfg = ctx.config.sim()?;
            let (agent, principal) = match ctx.config.principal {
                Some(_) => {
                    let pp = ctx.config.principal()?;
                    let (a, p) = simulate_both(&model, &c, &policy, &pp, &cfg, ctx.exec).op("simulate")?;
                    (a, Some(p))
                }
                None => (simulate_agent(&model, &c, &policy, &cfg, ctx.exec).op("simulate")?, None),
            };
            let mut csv = policy_csv();
            csv.row(&[policy.trigger.into(), policy.after.into(), agent.mean.into(), agent.stderr.into(), agent.bankruptcies.into()]);
            ctx.write_csv(&csv)?;
            json!({
                "policy": to_value(&policy),
                "z": to_value(&policy.purchase_size(&c)),
                "agent": to_value(&agent),
                "principal": to_value(&principal),
            })
        }
        Command::Grid { costs, targets, spread, points } => {
            let model = ctx.config.validated_model()?;
            let c = ctx.costs(costs)?;
            let t = ctx.targets(targets)?;
            let cfg = ctx.config.sim()?;
            let grid = relative_grid(&t, *spread, *points);
            let surface = policy_grid(&model, &c, &grid, &cfg, ctx.exec).op("grid")?;
            let mut csv = policy_csv();
            for r in &surface.rows {
                let e = &r.estimate;
                csv.row(&[r.policy.trigger.into(), r.policy.after.into(), e.mean.into(), e.stderr.into(), e.bankruptcies.into()]);
            }
            ctx.write_csv(&csv)?;
            to_value(&surface)
        }
        Command::PrincipalSearch { targets, spread, points } => {
            let model = ctx.config.validated_model()?;
            let t = ctx.targets(targets)?;
            let cfg = ctx.config.sim()?;
            let pp = ctx.config.principal()?;
            let (roots, b) = ctx.roots_and_b()?;
            let grid: Vec<PolicyTargets> = relative_grid(&t, *spread, *points).iter().map(Policy::as_targets).collect();
            let search = principal_target_search(&model, &grid, &pp, &cfg, &roots, b, ctx.exec).op("principal-search")?;
            let mut csv = policy_csv();
            for r in &search.surface {
                let e = &r.estimate;
                csv.row(&[r.targets.x_star.into(), r.targets.x_hat.into(), e.mean.into(), e.stderr.into(), e.bankruptcies.into()]);
            }
            ctx.write_csv(&csv)?;
            to_value(&search)
        }
    })
}

/// Parses `argv`, runs the command and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(value) => {
            let _ = writeln!(out, "{}", to_json(&value));
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
