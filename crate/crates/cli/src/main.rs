//! Command-line front end.
//!
//! Exit status: 0 when every enabled check passes, 2 when the instance does
//! not meet a precondition (e.g. the measures are not causally related), 1 on
//! a failed check or any other error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lorentz_ot::io;
use lorentz_ot::measures::{GeneratorConfig, Profile};
use lorentz_ot::pipeline::{self, Checks, RunConfig, Stage, Tolerances};

#[derive(Parser)]
#[command(
    name = "lorentz-ot",
    version,
    about = "Optimal transport with Lorentzian costs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance and write instance.json.
    Generate(InstanceArgs),
    /// Solve the transport problem and run every enabled check.
    Solve(RunArgs),
    /// Solve and build potentials, stopping before the map.
    Potential(RunArgs),
    /// Run up to map recovery.
    Map(RunArgs),
    /// Run up to the regularity checks (same as solve).
    Regularity(RunArgs),
    /// Re-check a stored plan against its instance.
    Verify(VerifyArgs),
    /// Run many seeds and write one CSV row per seed.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct InstanceArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spatial dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Number of source points.
    #[arg(long, default_value_t = 10)]
    mu: usize,
    /// Number of target points.
    #[arg(long, default_value_t = 10)]
    nu: usize,
    /// slices, marginal, infeasible or custom-file.
    #[arg(long, default_value = "slices", value_parser = parse_profile)]
    profile: Profile,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Load this instance instead of generating one.
    #[arg(long)]
    instance_file: Option<PathBuf>,
    /// Use this plan instead of solving.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Comma-separated subset of monotone,potential,map,regularity, or all / none.
    #[arg(long, default_value = "all")]
    checks: String,
    /// Nodes per axis of the regularity grid.
    #[arg(long, default_value_t = lorentz_ot::regularity::DEFAULT_NODES)]
    grid_nodes: usize,
    #[command(flatten)]
    tol: TolArgs,
}

#[derive(Args)]
struct TolArgs {
    #[arg(long)]
    tol_marginal: Option<f64>,
    #[arg(long)]
    tol_support_eq: Option<f64>,
    #[arg(long)]
    tol_gap: Option<f64>,
    #[arg(long)]
    tol_tie: Option<f64>,
    #[arg(long)]
    tol_snap: Option<f64>,
    #[arg(long)]
    tol_residual: Option<f64>,
}

impl TolArgs {
    fn resolve(&self) -> lorentz_ot::Result<Tolerances> {
        let mut t = Tolerances::default();
        for (name, v) in [
            ("marginal", self.tol_marginal),
            ("support-eq", self.tol_support_eq),
            ("gap", self.tol_gap),
            ("tie", self.tol_tie),
            ("snap", self.tol_snap),
            ("residual", self.tol_residual),
        ] {
            if let Some(v) = v {
                t.set(name, v)?;
            }
        }
        Ok(t)
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    tol: TolArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Seeds, as a count `N` (meaning 0..N) or a half-open range `a..b`.
    #[arg(long, default_value = "10", value_parser = parse_seeds)]
    seeds: std::ops::Range<u64>,
    /// Comma-separated profiles.
    #[arg(long, default_value = "slices")]
    profiles: String,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    mu: usize,
    #[arg(long, default_value_t = 10)]
    nu: usize,
    #[arg(long, default_value = "all")]
    checks: String,
    #[arg(long, default_value_t = lorentz_ot::regularity::DEFAULT_NODES)]
    grid_nodes: usize,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tol: TolArgs,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    Profile::parse(s).map_err(|e| e.to_string())
}

fn parse_seeds(s: &str) -> Result<std::ops::Range<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("{t:?}: {e}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b)?);
            if a > b {
                return Err(format!("empty range {s}"));
            }
            Ok(a..b)
        }
        None => Ok(0..num(s)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> lorentz_ot::Result<u8> {
    match cli.command {
        Command::Generate(a) => {
            let inst = lorentz_ot::measures::generate(&GeneratorConfig::new(
                a.seed, a.dim, a.mu, a.nu, a.profile,
            ))?;
            std::fs::create_dir_all(&a.out)?;
            let path = a.out.join(pipeline::INSTANCE_FILE);
            io::write_instance(&path, &inst)?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::Solve(a) | Command::Regularity(a) => run_stage(a, Stage::Regularity),
        Command::Potential(a) => run_stage(a, Stage::Potential),
        Command::Map(a) => run_stage(a, Stage::Map),
        Command::Verify(a) => {
            let inst = io::read_instance(&a.instance)?;
            let plan = io::read_plan(&a.plan)?;
            let rep = pipeline::verify(&inst, &plan, &a.tol.resolve()?)?;
            print!("{}", io::to_json(&rep)?);
            Ok(rep.exit_code as u8)
        }
        Command::Sweep(a) => {
            let profiles = a
                .profiles
                .split(',')
                .map(|p| Profile::parse(p.trim()))
                .collect::<lorentz_ot::Result<Vec<_>>>()?;
            let mut template = RunConfig::new(0, a.dim, (a.mu, a.nu), Profile::Slices);
            template.checks = Checks::parse(&a.checks)?;
            template.tolerances = a.tol.resolve()?;
            template.grid_nodes = a.grid_nodes;
            let csv = pipeline::sweep(&template, &profiles, a.seeds)?;
            match a.out {
                Some(p) => io::write_text(&p, &csv)?,
                None => print!("{csv}"),
            }
            Ok(0)
        }
    }
}

fn run_stage(a: RunArgs, until: Stage) -> lorentz_ot::Result<u8> {
    let i = &a.instance;
    let mut cfg = RunConfig::new(i.seed, i.dim, (i.mu, i.nu), i.profile);
    cfg.instance_path = a.instance_file;
    cfg.plan_path = a.plan;
    cfg.out_dir = i.out.clone();
    cfg.checks = Checks::parse(&a.checks)?;
    cfg.tolerances = a.tol.resolve()?;
    cfg.grid_nodes = a.grid_nodes;
    cfg.until = until;
    let out = pipeline::run_pipeline(&cfg)?;
    print!("{}", io::to_json(&out.summary)?);
    Ok(out.summary.exit_code as u8)
}
