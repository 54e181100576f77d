use clap::{Args, Parser, Subcommand};
use slowfast::evolution::build_slow_fast_evolution;
use slowfast::fast::HetOptions;
use slowfast::pipeline::{
    branch_csv, cmd_check, cmd_critical, cmd_fast, cmd_pipeline, critical_csv, gate, heteroclinic_csv, report_csv,
    run_ladder, simulate, trajectory_csv, write_file, RunConfig, WATERMARK,
};
use slowfast::Error;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Slow-fast limits of ε-gradient flows: assumption checks, limit
/// construction, ε-flow simulation and convergence verification.
#[derive(Parser, Debug)]
#[command(name = "slowfast", version)]
struct Cli {
    /// Scenario file, or `builtin:NAME` (quadratic, tracking, dwell, dwell2d,
    /// oscillating, degenerate, saddle_landing).
    #[arg(long, global = true, default_value = "builtin:dwell")]
    scenario: String,
    /// Directory for output files; relative `--out` paths are resolved
    /// against it.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for the ε ladder (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Tolerance override `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run the later stages even when an assumption check fails; outputs are
    /// then watermarked.
    #[arg(long, global = true)]
    force: bool,
    /// Move the heteroclinic seed onto the quadratic center-manifold
    /// approximation.
    #[arg(long, global = true)]
    seed_correction: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct LadderArgs {
    /// Comma-separated ε ladder replacing the scenario's.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eps: Option<Vec<f64>>,
    /// Initial data `y0 + ε·d` with `d` comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    perturb: Option<Vec<f64>>,
    /// Exclusion half-width around jump times (default `eta · T`).
    #[arg(long)]
    eta: Option<f64>,
    /// Weight of time against space in the graph distance.
    #[arg(long, default_value_t = 1.0)]
    time_weight: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every standing assumption and print PASS/FAIL lines.
    Check,
    /// Critical points of f(t, ·) as CSV `t,x1..xn,lambda_min,class`.
    Critical {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stable branches of the limit evolution as CSV
    /// `t,x1..xn,lambda_min,branch_index,event`.
    Slow {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Heteroclinic orbit leaving a fold as CSV `s,x1..xn,grad_norm,f_value`.
    Fast {
        /// 1-based index into the time-sorted folds.
        #[arg(long, default_value_t = 1)]
        fold_index: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One ε-flow trajectory as CSV `t,x1..xn,deriv_norm,step_size` with
    /// `# event` lines.
    Simulate {
        #[arg(long)]
        eps: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        perturb: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence report over the ε ladder, one CSV row per rung.
    Verify {
        #[command(flatten)]
        ladder: LadderArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// All stages; writes every artifact into the output directory.
    Pipeline {
        #[command(flatten)]
        ladder: LadderArgs,
    },
}

fn emit(cfg: &RunConfig, out: &Option<PathBuf>, text: &str, unverified: bool) -> Result<(), Error> {
    match out {
        Some(p) => write_file(&cfg.output_path(p), text, unverified),
        None => {
            // a closed pipe on stdout is not an error worth reporting
            let mut stdout = std::io::stdout().lock();
            if unverified {
                let _ = writeln!(stdout, "{WATERMARK}");
            }
            let _ = stdout.write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let mut cfg = RunConfig::new(cli.scenario.clone());
    cfg.out_dir = cli.out_dir.clone();
    cfg.jobs = cli.jobs;
    cfg.overrides = cli.overrides.clone();
    cfg.force = cli.force;
    cfg.het = HetOptions { seed_correction: cli.seed_correction };
    let apply = |cfg: &mut RunConfig, l: &LadderArgs| {
        cfg.eps = l.eps.clone();
        cfg.perturb = l.perturb.clone();
        cfg.eta = l.eta;
        cfg.time_weight = l.time_weight;
    };
    match &cli.command {
        Command::Check => {
            let (s, tol) = cfg.load()?;
            let rep = cmd_check(&s, &tol, cfg.het);
            print!("{rep}");
            return Ok(if rep.pass() { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Critical { t, out } => {
            let (s, tol) = cfg.load()?;
            let pts = cmd_critical(&s, *t, &tol)?;
            emit(&cfg, out, &critical_csv(&pts, s.dim), false)?;
        }
        Command::Slow { out } => {
            let (s, tol) = cfg.load()?;
            let unverified = gate(&s, &tol, &cfg)?;
            let pe = build_slow_fast_evolution(&s, &tol, cfg.het)?;
            emit(&cfg, out, &branch_csv(&pe, s.dim), unverified)?;
        }
        Command::Fast { fold_index, out } => {
            let (s, tol) = cfg.load()?;
            let unverified = gate(&s, &tol, &cfg)?;
            let het = cmd_fast(&s, *fold_index, &tol, cfg.het)?;
            emit(&cfg, out, &heteroclinic_csv(&s, &het), unverified)?;
        }
        Command::Simulate { eps, perturb, out } => {
            cfg.perturb = perturb.clone();
            cfg.eps = Some(vec![*eps]);
            let (s, tol) = cfg.load()?;
            let unverified = gate(&s, &tol, &cfg)?;
            let pe = match build_slow_fast_evolution(&s, &tol, cfg.het) {
                Ok(pe) => Some(pe),
                Err(e) => {
                    log::warn!("no limit evolution, events are not located: {e}");
                    None
                }
            };
            let traj = simulate(&s, pe.as_ref(), *eps, &cfg.initial_point(&s, *eps), &tol)?;
            emit(&cfg, out, &trajectory_csv(&traj), unverified)?;
        }
        Command::Verify { ladder, out } => {
            apply(&mut cfg, ladder);
            let (s, tol) = cfg.load()?;
            let unverified = gate(&s, &tol, &cfg)?;
            let pe = build_slow_fast_evolution(&s, &tol, cfg.het)?;
            let run = run_ladder(&s, &pe, &tol, &cfg)?;
            emit(&cfg, out, &report_csv(&run.reports, &run.orders, pe.jumps.len()), unverified)?;
        }
        Command::Pipeline { ladder } => {
            apply(&mut cfg, ladder);
            for p in cmd_pipeline(&cfg)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
