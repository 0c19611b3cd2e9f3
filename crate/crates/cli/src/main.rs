//! `rsp`: robust storage planning with scenario-approach risk certificates.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rsp_core::certify::{estimate_violation, min_k_for, GuaranteeCertificate, GuaranteeMode};
use rsp_core::grid::load_case;
use rsp_core::pipeline::{self, load_config, RunConfig, RunContext};
use rsp_core::report::{certify_csv, emit_reports, write_atomic, Artifacts};
use rsp_core::rsp::{ccg_solve, evaluate_operation, FormulationKind, StoragePlan};
use rsp_core::scenarios::{sample_iid, save_profiles, synthetic_load_year, Replacement, Source, WindModel};
use rsp_core::CoreError;

#[derive(Parser, Debug)]
#[command(name = "rsp", version, about = "Robust energy-storage planning with risk certificates")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Formulation override: c-cost, nc-cost, c-curtailment or nc-curtailment.
    #[arg(long, global = true)]
    kind: Option<FormulationKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic daily profiles as a time-series CSV.
    Gen(GenArgs),
    /// Solve the robust problem once on a training draw.
    Plan,
    /// Print risk levels or sample sizes as a CSV table.
    Certify(CertifyArgs),
    /// One pass of the guarantee loop with reports.
    Run,
    /// Repeated seeded experiments with least-investment selection.
    Experiments,
    /// Curtailment planning over the configured budget grid.
    SweepBudget,
    /// Out-of-sample evaluation of a saved plan.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Network case (JSON); defaults to the config's case.
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    days: usize,
    /// Relative load noise.
    #[arg(long, default_value_t = 0.01)]
    sigma_rel: f64,
    /// Destination CSV.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long)]
    mode: GuaranteeMode,
    /// Essential-set sizes (or decision dimension), comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<u64>,
    #[arg(long, default_value_t = 1e-3)]
    beta: f64,
    /// Evaluate ε at this sample size.
    #[arg(long, conflicts_with = "eps_bar")]
    sample_size: Option<u64>,
    /// Find the smallest sample size reaching this ε.
    #[arg(long)]
    eps_bar: Option<f64>,
    #[arg(long)]
    s_bar: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Plan JSON as written by `plan`.
    #[arg(long)]
    plan: PathBuf,
    /// Worst-case threshold; defaults to the value stored with the plan.
    #[arg(long)]
    gamma: Option<f64>,
    /// Test scenarios; defaults to the config's test size.
    #[arg(long)]
    test_size: Option<usize>,
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().context("this command needs --config")?;
    let mut cfg = load_config(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(k) = cli.kind {
        cfg.kind = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summary(cfg: &RunConfig) -> serde_json::Value {
    serde_json::json!({
        "kind": cfg.kind,
        "mode": cfg.mode,
        "eps_bar": cfg.eps_bar,
        "beta": cfg.beta,
        "seed": cfg.seed,
        "experiments": cfg.experiments,
        "test_size": cfg.test_size,
        "initial_k_guess": cfg.initial_k_guess,
        "rng": rsp_core::rng::RNG_ALGORITHM,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn list_written(out: &Path, files: &[String]) {
    for f in files {
        println!("{}", out.join(f).display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => {
            let case_path = match (&a.case, &cli.config) {
                (Some(p), _) => p.clone(),
                (None, Some(_)) => config(&cli)?.case,
                (None, None) => bail!("gen needs --case or --config"),
            };
            let case = load_case(&case_path)?;
            let seed = cli.seed.unwrap_or(0);
            let base = synthetic_load_year(365, case.num_buses(), case.horizon, seed);
            let g = pipeline::generator(&case, WindModel::default(), a.sigma_rel, base)?;
            let set = sample_iid(Source::Models(&g), a.days, seed, Replacement::With)?;
            save_profiles(&set, &a.output)?;
            println!("wrote {} days to {}", set.len(), a.output.display());
        }
        Command::Certify(a) => {
            let mut certs = Vec::new();
            for &k in &a.k {
                let s_bar = a.s_bar.or((a.mode == GuaranteeMode::ImprovedNonconvex).then_some(k.max(1)));
                let n = match (a.sample_size, a.eps_bar) {
                    (Some(n), None) => n,
                    (None, Some(e)) => min_k_for(a.mode, k, e, a.beta, s_bar)?,
                    _ => bail!("certify needs exactly one of --sample-size or --eps-bar"),
                };
                let c = GuaranteeCertificate::issue(a.mode, k, a.beta, n, s_bar)?;
                c.verify()?;
                certs.push(c);
            }
            std::io::stdout().write_all(&certify_csv(&certs)?)?;
            if let Some(out) = &cli.out {
                write_atomic(&out.join("certify.csv"), &certify_csv(&certs)?)?;
            }
        }
        Command::Plan => {
            let cfg = config(&cli)?;
            let ctx = RunContext::load(&cfg)?;
            let k = pipeline::training_size(&cfg, &ctx.case)?;
            let train = ctx.draw(k, rsp_core::rng::derive_seed(cfg.seed, 0))?;
            let sol = ccg_solve(&ctx.case, &train, cfg.kind, &cfg.ccg)?;
            write_json(&cfg.out.join("plan.json"), &sol)?;
            println!(
                "{}: K = {k}, objective {:.4}, investment {:.4}, gamma {:.6}, {} iterations",
                cfg.kind, sol.objective, sol.investment, sol.gamma, sol.iterations
            );
            println!("{}", cfg.out.join("plan.json").display());
        }
        Command::Run => {
            let cfg = config(&cli)?;
            let ctx = RunContext::load(&cfg)?;
            let runr = pipeline::run_with_guarantee(&cfg, &ctx, cfg.seed)?;
            write_json(&cfg.out.join("plan.json"), &runr.solution)?;
            let art = Artifacts {
                summary: serde_json::json!({ "config": summary(&cfg), "run": runr }),
                certificates: vec![runr.certificate.clone()],
                ..Artifacts::default()
            };
            let files = emit_reports(&art, cfg.eps_bar, &cfg.out)?;
            println!(
                "{}: |I| = {}, K = {}, epsilon = {:.6} ({})",
                cfg.kind,
                runr.essential.cardinality,
                runr.certificate.sample_size,
                runr.certificate.epsilon,
                cfg.mode
            );
            list_written(&cfg.out, &files);
        }
        Command::Experiments => {
            let cfg = config(&cli)?;
            let ctx = RunContext::load(&cfg)?;
            let rep = pipeline::run_experiments(&cfg, &ctx)?;
            let certificates = rep.rows.iter().filter_map(|r| r.outcome.as_ref().ok()).map(|o| o.certificate.clone()).collect();
            let selected = rep.selected;
            let art = Artifacts {
                summary: summary(&cfg),
                experiments: Some(rep),
                certificates,
                ..Artifacts::default()
            };
            let files = emit_reports(&art, cfg.eps_bar, &cfg.out)?;
            match selected {
                Some(i) => println!("selected experiment {i}"),
                None => println!("no experiment met the target risk level"),
            }
            list_written(&cfg.out, &files);
        }
        Command::SweepBudget => {
            let cfg = config(&cli)?;
            let ctx = RunContext::load(&cfg)?;
            let sw = pipeline::sweep_budget(&cfg, &ctx)?;
            match sw.first_zero {
                Some(i) => println!("zero worst-case curtailment from budget {}", sw.points[i].budget),
                None => println!("grid exhausted without reaching zero worst-case curtailment"),
            }
            let art = Artifacts {
                summary: summary(&cfg),
                sweep: Some(sw),
                ..Artifacts::default()
            };
            let files = emit_reports(&art, cfg.eps_bar, &cfg.out)?;
            list_written(&cfg.out, &files);
        }
        Command::Eval(a) => {
            let cfg = config(&cli)?;
            let ctx = RunContext::load(&cfg)?;
            let text = std::fs::read_to_string(&a.plan).with_context(|| a.plan.display().to_string())?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let plan: StoragePlan = serde_json::from_value(v.get("plan").cloned().unwrap_or(v.clone()))?;
            let gamma = match (a.gamma, v.get("gamma").and_then(|g| g.as_f64())) {
                (Some(g), _) | (None, Some(g)) => g,
                (None, None) => bail!("no gamma given and none stored with the plan"),
            };
            plan.check(&ctx.case, cfg.kind, 1e-6)?;
            let n = a.test_size.unwrap_or(cfg.test_size);
            if n == 0 {
                bail!("test size is zero");
            }
            let test = ctx.draw_test(n, cfg.seed)?;
            let est = estimate_violation(&ctx.case, &plan, gamma, &test, cfg.kind, cfg.margin, &cfg.ccg)?;
            let first = evaluate_operation(&ctx.case, &plan, test.get(0), cfg.kind, &cfg.ccg.model, &cfg.ccg.solve)?;
            log::info!("first test day: cost {:.4}, shed {:.4}", first.total_cost, first.total_shed);
            println!("{}", serde_json::to_string_pretty(&est)?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::GuessCapExceeded { .. }) => 3,
        Some(CoreError::Solver(_) | CoreError::SolveFailed(_) | CoreError::SizeCap { .. } | CoreError::NotInvariant { .. }) => 4,
        Some(_) => 2,
        None => match err.downcast_ref::<rsp_solver::SolverError>() {
            Some(_) => 4,
            None => 2,
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RSP_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
