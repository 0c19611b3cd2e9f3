//! Report files: JSON dump, CSV tables and small deterministic SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::certify::GuaranteeCertificate;
use crate::error::{CoreError, Result};
use crate::pipeline::{ExperimentReport, SweepReport};

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CoreError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CoreError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CoreError::io(path, e))?;
    tmp.persist(path).map_err(|e| CoreError::io(path, e.error))?;
    Ok(())
}

/// Everything a run produced.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Artifacts {
    pub summary: serde_json::Value,
    pub experiments: Option<ExperimentReport>,
    pub sweep: Option<SweepReport>,
    pub certificates: Vec<GuaranteeCertificate>,
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CoreError::Parse(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CoreError::Parse(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CoreError::Parse(e.to_string()))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const EXPERIMENT_HEADER: [&str; 14] = [
    "row",
    "seed",
    "status",
    "objective",
    "investment",
    "gamma",
    "cardinality",
    "sample_size",
    "epsilon",
    "certified",
    "epsilon_hat",
    "energy",
    "power",
    "selected",
];

pub fn experiments_csv(rep: &ExperimentReport) -> Result<Vec<u8>> {
    let mut rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| match &r.outcome {
            Ok(o) => vec![
                r.index.to_string(),
                r.seed.to_string(),
                "ok".into(),
                o.solution.objective.to_string(),
                o.solution.investment.to_string(),
                o.solution.gamma.to_string(),
                o.essential.cardinality.to_string(),
                o.certificate.sample_size.to_string(),
                o.certificate.epsilon.to_string(),
                o.certified.to_string(),
                opt(o.risk.as_ref().map(|x| x.epsilon_hat)),
                join(&o.solution.plan.energy),
                join(&o.solution.plan.power),
                (rep.selected == Some(r.index)).to_string(),
            ],
            Err(msg) => {
                let mut v = vec![r.index.to_string(), r.seed.to_string(), format!("error: {msg}")];
                v.resize(EXPERIMENT_HEADER.len() - 1, String::new());
                v.push("false".into());
                v
            }
        })
        .collect();
    if !rep.rows.is_empty() {
        let mut s = vec!["summary".to_string(), String::new(), rep.selection_rule.clone()];
        s.resize(EXPERIMENT_HEADER.len() - 1, String::new());
        s.push(opt(rep.selected));
        rows.push(s);
    }
    csv_bytes(&EXPERIMENT_HEADER, rows)
}

pub fn sweep_csv(rep: &SweepReport) -> Result<Vec<u8>> {
    let rows = rep.points.iter().enumerate().map(|(i, p)| {
        vec![
            p.budget.to_string(),
            p.gamma.to_string(),
            p.investment.to_string(),
            opt(p.risk.as_ref().map(|r| r.epsilon_hat)),
            (rep.first_zero == Some(i)).to_string(),
        ]
    });
    csv_bytes(&["budget", "gamma", "investment", "epsilon_hat", "first_zero"], rows)
}

/// CSV table of certificates: mode, k, beta, K, epsilon.
pub fn certify_csv(certs: &[GuaranteeCertificate]) -> Result<Vec<u8>> {
    let rows = certs.iter().map(|c| {
        vec![
            c.mode.to_string(),
            c.k_or_d.to_string(),
            c.beta.to_string(),
            c.sample_size.to_string(),
            c.epsilon.to_string(),
        ]
    });
    csv_bytes(&["mode", "k", "beta", "K", "epsilon"], rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartKind {
    Bar,
    Line,
}

pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
}

/// Minimal self-contained chart. Each x label becomes an element of class
/// `xtick`; the optional reference line has class `ref-line`.
pub fn chart_svg(title: &str, kind: ChartKind, x_labels: &[String], series: &[Series<'_>], reference: Option<(&str, f64)>) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const TOP: f64 = 40.0;
    const B: f64 = 50.0;
    let finite = series.iter().flat_map(|s| s.values.iter().copied()).chain(reference.map(|r| r.1)).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((0.0f64, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !hi.is_finite() || hi <= lo {
        hi = lo + 1.0;
    }
    hi += 0.05 * (hi - lo);
    if lo < 0.0 {
        lo -= 0.05 * (hi - lo);
    }
    let n = x_labels.len().max(1);
    let slot = (W - L - R) / n as f64;
    let xc = |i: usize| L + slot * (i as f64 + 0.5);
    let y = |v: f64| TOP + (H - TOP - B) * (1.0 - (v - lo) / (hi - lo));
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="22" font-size="15" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{L}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#, H - B, W - R, H - B);
    let _ = writeln!(s, r#"<line x1="{L}" y1="{TOP}" x2="{L}" y2="{:.2}" stroke="black"/>"#, H - B);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end" font-family="sans-serif">{}</text>"#,
            L - 6.0,
            y(v) + 3.0,
            short(v)
        );
    }
    for (i, label) in x_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<g class="xtick"><line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="middle" font-family="sans-serif">{}</text></g>"#,
            H - B,
            H - B + 4.0,
            H - B + 16.0,
            escape(label),
            x = xc(i)
        );
    }
    let k = series.len().max(1) as f64;
    for (si, ser) in series.iter().enumerate() {
        match kind {
            ChartKind::Bar => {
                let bw = 0.8 * slot / k;
                for (i, &v) in ser.values.iter().enumerate() {
                    if !v.is_finite() {
                        continue;
                    }
                    let x0 = xc(i) - 0.4 * slot + bw * si as f64;
                    let (y0, y1) = (y(v.max(lo).max(0.0)), y(0.0f64.max(lo)));
                    let (top, h) = if v >= 0.0 { (y0, y1 - y0) } else { (y1, y(v) - y1) };
                    let _ = writeln!(s, r#"<rect x="{x0:.2}" y="{top:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#, h.max(0.0), ser.color);
                }
            }
            ChartKind::Line => {
                let pts: Vec<String> = ser
                    .values
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.is_finite())
                    .map(|(i, &v)| format!("{:.2},{:.2}", xc(i), y(v)))
                    .collect();
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#, ser.color, pts.join(" "));
                for p in &pts {
                    let (px, py) = p.split_once(',').unwrap_or(("0", "0"));
                    let _ = writeln!(s, r#"<circle cx="{px}" cy="{py}" r="3" fill="{}"/>"#, ser.color);
                }
            }
        }
        let ly = TOP + 14.0 * si as f64;
        let _ = writeln!(s, r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{}"/>"#, W - R - 150.0, ly - 9.0, ser.color);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="11" font-family="sans-serif">{}</text>"#,
            W - R - 135.0,
            escape(ser.name)
        );
    }
    if let Some((label, v)) = reference {
        let yv = y(v);
        let _ = writeln!(
            s,
            r#"<g class="ref-line"><line x1="{L}" y1="{yv:.2}" x2="{:.2}" y2="{yv:.2}" stroke="red" stroke-dasharray="6,4"/><text x="{:.2}" y="{:.2}" font-size="10" fill="red" text-anchor="end" font-family="sans-serif">{}</text></g>"#,
            W - R,
            W - R,
            yv - 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn short(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the report files for `art` under `out` and returns their names.
pub fn emit_reports(art: &Artifacts, eps_bar: f64, out: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        write_atomic(&out.join(name), bytes)?;
        written.push(name.to_string());
        Ok(())
    };
    let json = serde_json::to_string_pretty(art).map_err(|e| CoreError::Parse(e.to_string()))?;
    put("report.json", json.as_bytes())?;
    put("certify.csv", &certify_csv(&art.certificates)?)?;
    if let Some(rep) = &art.experiments {
        put("experiments.csv", &experiments_csv(rep)?)?;
        if !rep.rows.is_empty() {
            let labels: Vec<String> = rep.rows.iter().map(|r| r.index.to_string()).collect();
            let field = |f: fn(&crate::pipeline::ExperimentOutcome) -> f64| -> Vec<f64> {
                rep.rows.iter().map(|r| r.outcome.as_ref().map_or(f64::NAN, f)).collect()
            };
            let inv = field(|o| o.solution.investment);
            put(
                "investment.svg",
                chart_svg(
                    "Investment by experiment ($/yr)",
                    ChartKind::Bar,
                    &labels,
                    &[Series { name: "investment", values: &inv, color: "#4477aa" }],
                    None,
                )
                .as_bytes(),
            )?;
            let risk = field(|o| o.risk.as_ref().map_or(f64::NAN, |r| r.epsilon_hat));
            put(
                "risk.svg",
                chart_svg(
                    "Out-of-sample violation frequency by experiment",
                    ChartKind::Bar,
                    &labels,
                    &[Series { name: "epsilon_hat", values: &risk, color: "#228833" }],
                    Some(("eps_bar", eps_bar)),
                )
                .as_bytes(),
            )?;
        }
    }
    if let Some(sw) = &art.sweep {
        put("sweep.csv", &sweep_csv(sw)?)?;
        if !sw.points.is_empty() {
            let labels: Vec<String> = sw.points.iter().map(|p| short(p.budget)).collect();
            let gamma: Vec<f64> = sw.points.iter().map(|p| p.gamma).collect();
            let risk: Vec<f64> = sw.points.iter().map(|p| p.risk.as_ref().map_or(f64::NAN, |r| r.epsilon_hat)).collect();
            put(
                "sweep.svg",
                chart_svg(
                    "Out-of-sample violation frequency vs budget",
                    ChartKind::Line,
                    &labels,
                    &[Series { name: "epsilon_hat", values: &risk, color: "#228833" }],
                    Some(("eps_bar", eps_bar)),
                )
                .as_bytes(),
            )?;
            put(
                "sweep_gamma.svg",
                chart_svg(
                    "Worst-case curtailment vs budget (MWh)",
                    ChartKind::Line,
                    &labels,
                    &[Series { name: "gamma", values: &gamma, color: "#aa3377" }],
                    None,
                )
                .as_bytes(),
            )?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn chart_has_one_tick_per_label_and_reference() {
        let labels: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let v = [3.0, 2.0, 1.0, 0.0, 0.0];
        let svg = chart_svg("t", ChartKind::Line, &labels, &[Series { name: "g", values: &v, color: "black" }], Some(("eps", 0.05)));
        assert_eq!(svg.matches(r#"class="xtick""#).count(), 5);
        assert_eq!(svg.matches(r#"class="ref-line""#).count(), 1);
        assert_eq!(svg, chart_svg("t", ChartKind::Line, &labels, &[Series { name: "g", values: &v, color: "black" }], Some(("eps", 0.05))));
    }
}
