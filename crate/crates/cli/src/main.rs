//! Command-line front end for the weakoe harness.
//!
//! Exit codes: 0 when every check holds, 1 on a stage failure or a failed
//! check, 2 on a configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use weakoe::error::Error;
use weakoe::harness::{self, Overrides, RunConfig};
use weakoe::space::RationalMass;

#[derive(Parser)]
#[command(name = "weakoe", version, about = "Orbit-equivalence rewiring on finite permutation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Rational such as 1/5 or 0.2.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    space_size: Option<usize>,
    #[arg(long)]
    override_eps_prime: Option<String>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build α and β from the config and write them with a summary.
    Generate(Common),
    /// Run the construction and write report.json, summary.csv, gamma.json, witness.json.
    Run(Common),
    /// Re-check gamma.json and witness.json in the output directory.
    Verify(Common),
    /// Render summary CSV from a saved report.
    Report {
        report: PathBuf,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Fail {
    Config(String),
    Stage(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::Config(_) => Fail::Config(e.to_string()),
            _ => Fail::Stage(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail::Config(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Fail> {
    fs::create_dir_all(dir).map_err(|e| Fail::Stage(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| Fail::Stage(format!("{}: {e}", p.display())))
}

fn rational(flag: &str, v: &Option<String>) -> Result<Option<RationalMass>, Fail> {
    v.as_deref()
        .map(|s| RationalMass::parse(s).map_err(|e| Fail::Config(format!("--{flag}: {e}"))))
        .transpose()
}

fn load(c: &Common) -> Result<RunConfig, Fail> {
    let text = read(&c.config)?;
    let mut cfg = RunConfig::from_json(&text).map_err(|e| Fail::Config(format!("{}: {e}", c.config.display())))?;
    cfg.apply(&Overrides {
        seed: c.seed,
        epsilon: rational("epsilon", &c.epsilon)?,
        n_points: c.space_size,
        eps_prime: rational("override-eps-prime", &c.override_eps_prime)?,
        max_retries: c.max_retries,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<bool, Fail> {
    match cmd {
        Command::Generate(c) => {
            let cfg = load(&c)?;
            let (alpha, beta, summary) = harness::generate(&cfg)?;
            write(&c.out, "alpha.json", &alpha)?;
            write(&c.out, "beta.json", &beta)?;
            write(&c.out, "instance.json", &summary)?;
            Ok(true)
        }
        Command::Run(c) => {
            let cfg = load(&c)?;
            let out = harness::run(&cfg)?;
            write(&c.out, "report.json", &out.report_json)?;
            write(&c.out, "summary.csv", &out.summary_csv)?;
            if let (Some(g), Some(w)) = (&out.gamma_json, &out.witness_json) {
                write(&c.out, "gamma.json", g)?;
                write(&c.out, "witness.json", w)?;
            }
            match &out.report.failure {
                Some(f) => eprintln!("stage {} failed: {}", f.stage.as_deref().unwrap_or("?"), f.error),
                None => {
                    for ch in out.report.checks.iter().filter(|c| !c.holds) {
                        eprintln!("check failed: {} = {} {} {}", ch.name, ch.value, ch.relation, ch.bound);
                    }
                }
            }
            Ok(out.report.passed)
        }
        Command::Verify(c) => {
            let cfg = load(&c)?;
            let gamma = read(&c.out.join("gamma.json"))?;
            let witness = read(&c.out.join("witness.json"))?;
            let report = fs::read_to_string(c.out.join("report.json")).ok();
            let v = harness::verify(&cfg, &gamma, &witness, report.as_deref())?;
            write(&c.out, "verify.json", &harness::verify_json(&v))?;
            Ok(v.passed)
        }
        Command::Report { report, out } => {
            let csv = harness::report_csv(&read(&report)?)?;
            match out {
                Some(p) => fs::write(&p, csv).map_err(|e| Fail::Stage(format!("{}: {e}", p.display())))?,
                None => print!("{csv}"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Fail::Stage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Fail::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
    }
}
