use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgdthermo::experiment::{oracle_suite, report_dir, run_config_file, OracleOptions, RunOptions};
use sgdthermo::Error;

#[derive(Parser)]
#[command(name = "sgdthermo", version, about = "Stationary-state and fluctuation experiments for SGD")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment config and write its artifact directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory (default: the config's output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Check closed forms against enumeration and derivatives against finite differences.
    Oracle {
        /// Write the JSON report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Shift one WOR table coefficient, NAME=DELTA (negative control).
        #[arg(long, value_name = "NAME=DELTA")]
        perturb: Option<String>,
    },
    /// Summarize an artifact directory and redraw its charts.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_svg: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::Toml(_) => 2,
        Error::Diverged { .. } => 3,
        Error::Capability(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { config, out, workers, seed_override } => {
            run_config_file(&config, &RunOptions { out, workers, seed_override }).map(|(dir, s)| {
                println!("{} written to {} in {:.1} s", s.name, dir.display(), s.wall_time_s);
                ExitCode::SUCCESS
            })
        }
        Cmd::Oracle { out, perturb } => (|| {
            let perturb = match perturb {
                Some(p) => {
                    let (name, d) = p.split_once('=').ok_or_else(|| Error::Validation("--perturb expects NAME=DELTA".into()))?;
                    let d: f64 = d.parse().map_err(|_| Error::Validation(format!("bad delta {d}")))?;
                    Some((name.to_string(), d))
                }
                None => None,
            };
            let rep = oracle_suite(&OracleOptions { perturb, seed: 0 })?;
            let json = serde_json::to_string_pretty(&rep)?;
            println!("{json}");
            if let Some(p) = out {
                std::fs::write(p, &json)?;
            }
            for c in rep.failures() {
                eprintln!("MISMATCH {} {}: error {:e} > {:e}", c.suite, c.case, c.error, c.tolerance);
                for d in &c.detail {
                    eprintln!("  {d}");
                }
            }
            Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        })(),
        Cmd::Report { out, no_svg } => report_dir(&out, !no_svg).map(|r| {
            print!("{}", r.text);
            for p in r.svgs {
                println!("drew {}", p.display());
            }
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(exit_code(&e))
    })
}
