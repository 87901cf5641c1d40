//! Re-reads an artifact directory and summarizes it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::run::Summary;
use super::svg;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DirReport {
    pub summary: Summary,
    pub text: String,
    pub svgs: Vec<PathBuf>,
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.4e}"),
        None => "-".into(),
    }
}

fn describe_mode(out: &mut String, name: &str, r: &Value) {
    let _ = writeln!(out, "[{name}] records {}  tr Σ theory {}  measured {}", r["records"], num(&r["trace_sigma_theory"]), num(&r["trace_sigma_empirical"]));
    if r["sigma"].is_object() {
        let s = &r["sigma"];
        let _ = writeln!(out, "  Σ worst rel {}  pearson {}  pass {}", num(&s["worst_rel"]), num(&s["pearson"]), s["pass"]);
    }
    if r["area"].is_object() {
        let a = &r["area"];
        let _ = writeln!(out, "  C worst rel {}  max |C|/se {}  pass {}", num(&a["worst_rel"]), num(&a["max_z"]), a["pass"]);
    }
    if let Some(ells) = r["entropy"].as_array() {
        for e in ells {
            let _ = writeln!(
                out,
                "  ℓ={} rate {} (theory {})  ift {}  dft slope {}  pass {}",
                e["ell"],
                num(&e["rate"]),
                num(&r["entropy_rate_theory"]),
                num(&e["ift"]),
                num(&e["dft_slope"]),
                e["pass"]
            );
        }
    }
    if r["fdt"].is_object() {
        let _ = writeln!(out, "  FDT trace lhs {}  rhs {}", num(&r["fdt"]["lhs"]), num(&r["fdt"]["rhs"]));
    }
}

/// Summary text for an artifact directory, redrawing its charts when `svg` is set.
pub fn report_dir(dir: &Path, draw: bool) -> Result<DirReport> {
    if !dir.join("summary.json").is_file() {
        return Err(Error::Validation(format!("{} has no summary.json", dir.display())));
    }
    let summary = Summary::read(dir)?;
    let mut text = String::new();
    let _ = writeln!(text, "{} ({:?}), version {}, {:.1} s", summary.name, summary.kind, summary.version, summary.wall_time_s);
    let _ = writeln!(text, "config sha256 {}", summary.config_sha256);
    let d = &summary.results["details"];
    match summary.kind {
        super::ExperimentKind::Stationary => {
            if let Some(modes) = d.as_object() {
                for (k, v) in modes {
                    describe_mode(&mut text, k, v);
                }
            }
        }
        super::ExperimentKind::Training => {
            if let Some(modes) = d["modes"].as_object() {
                for (k, v) in modes {
                    let _ = writeln!(text, "[{k}] final relative loss error {} ± {}", num(&v["final_mean"]), num(&v["final_se"]));
                }
            }
        }
        super::ExperimentKind::Posterior => {
            let _ = writeln!(
                text,
                "KL slopes: sgld {}  sgworld {}  uncorrected (small η) {}",
                num(&d["slope_sgld"]),
                num(&d["slope_sgworld"]),
                num(&d["slope_sgworld_uncorrected_small_eta"])
            );
        }
    }
    let svgs = if draw { svg::render_dir(dir)? } else { Vec::new() };
    Ok(DirReport { summary, text, svgs })
}
