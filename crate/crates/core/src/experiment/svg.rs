//! Minimal SVG charts for quick inspection of artifacts. Numbers live in the
//! CSV files; these pictures are never read back.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::io::read_table;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Draw `y = slope·x` across the frame.
    pub reference_slope: Option<f64>,
}

fn tx(v: f64, log: bool) -> f64 {
    if log {
        v.log10()
    } else {
        v
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let pts = || {
            self.series.iter().flat_map(|s| s.points.iter()).map(|&(x, y)| (tx(x, self.log_x), tx(y, self.log_y))).filter(|(x, y)| x.is_finite() && y.is_finite())
        };
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in pts() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(&self.title));
        let _ = writeln!(
            s,
            r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let lab = |v: f64, log: bool| if log { format!("1e{v:.1}") } else { format!("{v:.3e}") };
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(xv), H - PAD + 16.0, lab(xv, self.log_x));
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, PAD - 4.0, sy(yv) + 4.0, lab(yv, self.log_y));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            esc(&self.y_label)
        );
        if let Some(k) = self.reference_slope {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
                sx(x0),
                sy(k * x0),
                sx(x1),
                sy(k * x1)
            );
        }
        for (i, ser) in self.series.iter().enumerate() {
            let c = COLORS[i % COLORS.len()];
            let p: Vec<(f64, f64)> = ser
                .points
                .iter()
                .map(|&(x, y)| (tx(x, self.log_x), tx(y, self.log_y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| (sx(x), sy(y)))
                .collect();
            match ser.style {
                Style::Line => {
                    let d: Vec<String> = p.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
                    let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, d.join(" "));
                }
                Style::Points => {
                    for (x, y) in p {
                        let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="2.5" fill="{c}"/>"#);
                    }
                }
            }
            let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{c}">{}</text>"#, W - PAD - 150.0, PAD + 16.0 * (i as f64 + 1.0), esc(&ser.name));
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

fn esc(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn column(headers: &[String], name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

/// Draws every chart whose source CSV is present in `dir` or its mode subdirectories.
pub fn render_dir(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    let mut dirs = vec![dir.to_path_buf()];
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            dirs.push(p);
        }
    }
    dirs.sort();
    for d in dirs {
        written.extend(render_one(&d)?);
    }
    Ok(written)
}

fn render_one(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    let tag = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let loss = dir.join("loss_curve.csv");
    if loss.is_file() {
        let (h, rows) = read_table(&loss)?;
        let series = h
            .iter()
            .enumerate()
            .filter(|(_, n)| n.ends_with("_mean"))
            .map(|(k, n)| Series {
                name: n.trim_end_matches("_mean").into(),
                points: rows.iter().filter(|r| r[0] > 0.0).map(|r| (r[0], r[k])).collect(),
                style: Style::Line,
            })
            .collect();
        let c = Chart {
            title: "Relative loss error".into(),
            x_label: "step".into(),
            y_label: "L/L0 - 1".into(),
            log_x: true,
            log_y: true,
            series,
            reference_slope: None,
        };
        out.push(dir.join("loss_curve.svg"));
        c.write(out.last().unwrap())?;
    }
    let kl = dir.join("kl_vs_eta.csv");
    if kl.is_file() {
        let (h, rows) = read_table(&kl)?;
        let series = (1..h.len())
            .map(|k| Series { name: h[k].clone(), points: rows.iter().map(|r| (r[0], r[k])).collect(), style: Style::Line })
            .collect();
        let c = Chart { title: "KL to posterior (bits)".into(), x_label: "eta".into(), y_label: "KL".into(), log_x: true, log_y: true, series, reference_slope: None };
        out.push(dir.join("kl_vs_eta.svg"));
        c.write(out.last().unwrap())?;
    }
    let pairs = dir.join("pairs.csv");
    if pairs.is_file() {
        let (h, rows) = read_table(&pairs)?;
        for (sym, t, e) in [("sigma", "sigma_theory", "sigma_empirical"), ("C", "c_theory", "c_empirical")] {
            let (Some(ti), Some(ei)) = (column(&h, t), column(&h, e)) else { continue };
            let pts: Vec<(f64, f64)> = rows.iter().filter(|r| sym == "sigma" || r[0] != r[1]).map(|r| (r[ti], r[ei])).collect();
            let c = Chart {
                title: format!("{sym} {tag}: measured vs theory"),
                x_label: "theory".into(),
                y_label: "measured".into(),
                series: vec![Series { name: sym.into(), points: pts, style: Style::Points }],
                reference_slope: Some(1.0),
                ..Default::default()
            };
            out.push(dir.join(format!("{sym}_scatter.svg")));
            c.write(out.last().unwrap())?;
        }
    }
    let dft = dir.join("dft.csv");
    if dft.is_file() {
        let (_, rows) = read_table(&dft)?;
        let mut ells: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        ells.dedup();
        let series = ells
            .iter()
            .map(|&l| Series {
                name: format!("l = {l}"),
                points: rows.iter().filter(|r| r[0] == l).map(|r| (r[1], r[2])).collect(),
                style: Style::Points,
            })
            .collect();
        let c = Chart {
            title: format!("Detailed fluctuation theorem {tag}"),
            x_label: "sigma".into(),
            y_label: "ln P(-sigma)/P(sigma)".into(),
            series,
            reference_slope: Some(-1.0),
            ..Default::default()
        };
        out.push(dir.join("dft.svg"));
        c.write(out.last().unwrap())?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_svg() {
        let c = Chart {
            title: "a < b".into(),
            log_y: true,
            series: vec![Series { name: "s".into(), points: vec![(0.0, 1.0), (1.0, 10.0), (2.0, 0.0)], style: Style::Line }],
            ..Default::default()
        };
        let s = c.render();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a &lt; b"));
        assert!(!s.contains("NaN") && !s.contains("inf"));
    }
}
