//! Drive the experiment layer from code: validate a config, run it, and run
//! the oracle suite. The `sgdthermo` binary does the same from the shell.
//!
//! cargo run --release --example run_experiment

use sgdthermo::experiment::{oracle_suite, report_dir, run_experiment, ExperimentConfig, OracleOptions, RunOptions};

const CONFIG: &str = r#"
[experiment]
name = "posterior_quick"
kind = "posterior"

[model]
kind = "linearized-regression"
lambda = 10.0
data = { source = "synthetic", samples = 200, seed = 1 }

[analysis]
batch = 10
etas = [1e-7, 1e-6, 1e-5]
"#;

fn main() -> sgdthermo::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let out = std::env::temp_dir().join("sgdthermo_posterior_quick");
    let (dir, _) = run_experiment(&cfg, CONFIG, &RunOptions { out: Some(out), ..Default::default() })?;
    print!("{}", report_dir(&dir, false)?.text);
    println!("artifacts in {}", dir.display());

    // A typo in a key is rejected before anything runs.
    let bad = CONFIG.replace("etas", "etaz");
    println!("misspelled key: {}", ExperimentConfig::from_toml(&bad).unwrap_err());

    let rep = oracle_suite(&OracleOptions::default())?;
    println!("oracle suite: {} checks, all pass: {}", rep.checks.len(), rep.pass);
    for n in rep.printed_table_notes.iter().take(3) {
        println!("  printed table differs: {n}");
    }
    Ok(())
}
