//! History, log-log plots and fitted rates of a run.

use std::fmt::Write as _;
use std::path::Path;

use crate::adaptive::{ConvergenceHistory, Field};
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#555555"];

/// One curve of a plot.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn decades(lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (lo.log10().floor(), hi.log10().ceil());
    if a == b {
        (a, a + 1.0)
    } else {
        (a, b)
    }
}

/// Log-log SVG with a dashed guide line of slope `-rate` through the last
/// point of the last series.
pub fn loglog_svg(title: &str, x_label: &str, series: &[Series<'_>], guide: Option<(f64, &str)>) -> String {
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).filter(|(x, y)| *x > 0.0 && *y > 0.0).collect();
    let (xmin, xmax) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (ymin, ymax) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (xa, xb) = if pts.is_empty() { (0.0, 1.0) } else { decades(xmin, xmax) };
    let (ya, yb) = if pts.is_empty() { (0.0, 1.0) } else { decades(ymin, ymax) };
    let sx = |x: f64| MARGIN + (x.log10() - xa) / (xb - xa) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y.log10() - ya) / (yb - ya) * (HEIGHT - 2.0 * MARGIN);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    for d in xa as i32..=xb as i32 {
        let x = sx(10f64.powi(d));
        let _ = writeln!(out, r##"<line x1="{x:.1}" y1="{y0}" x2="{x:.1}" y2="{y1}" stroke="#dddddd"/>"##);
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{}" text-anchor="middle">1e{d}</text>"#, y1 + 16.0);
    }
    for d in ya as i32..=yb as i32 {
        let y = sy(10f64.powi(d));
        let _ = writeln!(out, r##"<line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#dddddd"/>"##);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">1e{d}</text>"#, x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, WIDTH / 2.0, HEIGHT - 15.0);
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = s.points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        for p in &path {
            let (cx, cy) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
        }
        let ly = y0 + 18.0 + 16.0 * k as f64;
        let _ = writeln!(out, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, x1 - 150.0, s.label);
    }
    if let (Some((rate, label)), Some(last)) = (guide, series.last()) {
        if let (Some(&(xe, ye)), Some(&(xs, _))) = (last.points.last(), last.points.first()) {
            let ys = ye * (xs / xe).powf(-rate) * 0.5;
            let color = COLORS[2];
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-dasharray="6,4"/>"#,
                sx(xs),
                sy(ys),
                sx(xe),
                sy(ye * 0.5)
            );
            let ly = y0 + 18.0 + 16.0 * series.len() as f64;
            let _ = writeln!(out, r#"<text x="{}" y="{ly}" fill="{color}">{label}</text>"#, x1 - 150.0);
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Fitted rates in a small table.
pub fn rates_text(history: &ConvergenceHistory, p: usize, q: usize) -> String {
    let mut out = String::from("# symbol quantity x rate residual points\n");
    for (sym, x, y) in [
        ("alpha", Field::N, Field::ErrOmega),
        ("alpha", Field::N, Field::RhoOmega),
        ("beta", Field::M, Field::ErrGamma),
        ("beta", Field::M, Field::RhoGamma),
    ] {
        match history.fit_rate(x, y) {
            Ok(f) => {
                let _ = writeln!(out, "{sym} {} {} {:.6} {:.6} {}", y.as_str(), x.as_str(), f.rate, f.residual, f.points);
            }
            Err(e) => {
                let _ = writeln!(out, "{sym} {} {} nan nan 0 # {e}", y.as_str(), x.as_str());
            }
        }
    }
    let _ = writeln!(out, "# optimal alpha = p/2 = {}", p as f64 / 2.0);
    let _ = writeln!(out, "# optimal beta = 3/2 + q = {}", 1.5 + q as f64);
    out
}

/// Writes `history.csv`, `omega.svg`, `gamma.svg` and `rates.txt` to `dir`.
pub fn emit_outputs(history: &ConvergenceHistory, p: usize, q: usize, dir: &Path) -> Result<()> {
    if history.rows.is_empty() {
        return Err(Error::InsufficientData("no levels".into()));
    }
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("history.csv"), history.to_csv())?;
    let col = |x: Field, y: Field| history.rows.iter().map(|r| (x.of(r), y.of(r))).collect::<Vec<_>>();
    let alpha = p as f64 / 2.0;
    let beta = 1.5 + q as f64;
    let omega = loglog_svg(
        "volume error and estimator",
        "N (triangles)",
        &[Series { label: "err(Omega)", points: col(Field::N, Field::ErrOmega) }, Series { label: "rho(Omega)", points: col(Field::N, Field::RhoOmega) }],
        Some((alpha, &format!("O(N^-{alpha})"))),
    );
    std::fs::write(dir.join("omega.svg"), omega)?;
    let gamma = loglog_svg(
        "boundary error and estimator",
        "M (boundary segments)",
        &[Series { label: "err(Gamma)", points: col(Field::M, Field::ErrGamma) }, Series { label: "rho(Gamma)", points: col(Field::M, Field::RhoGamma) }],
        Some((beta, &format!("O(M^-{beta})"))),
    );
    std::fs::write(dir.join("gamma.svg"), gamma)?;
    std::fs::write(dir.join("rates.txt"), rates_text(history, p, q))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::{LevelRecord, HISTORY_HEADER};

    fn history(n: usize) -> ConvergenceHistory {
        let rows = (0..n)
            .map(|k| {
                let x = 4f64.powi(k as i32) * 14.0;
                LevelRecord {
                    level: k,
                    n: x as usize,
                    m: 10 << k,
                    rho_total: x.powf(-0.3),
                    rho_omega: x.powf(-0.3),
                    rho_gamma: x.powf(-0.75),
                    osc: 0.1,
                    err_omega: 0.5 * x.powf(-0.3),
                    err_gamma: x.powf(-0.75),
                    seconds: 0.0,
                }
            })
            .collect();
        ConvergenceHistory { rows, stop: None }
    }

    #[test]
    fn empty_history_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        match emit_outputs(&ConvergenceHistory { rows: vec![], stop: None }, 1, 0, dir.path()) {
            Err(Error::InsufficientData(msg)) => assert_eq!(msg, "no levels"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(&history(6), 1, 0, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), HISTORY_HEADER);
        assert_eq!(HISTORY_HEADER, "level,N,M,rho_total,rho_vol,rho_bnd,osc,err_omega,err_gamma,seconds");
        let rates = std::fs::read_to_string(dir.path().join("rates.txt")).unwrap();
        assert!(rates.contains("alpha err_omega N 0.300000"), "{rates}");
        assert!(rates.contains("beta rho_bnd M"), "{rates}");
        for f in ["omega.svg", "gamma.svg"] {
            let svg = std::fs::read_to_string(dir.path().join(f)).unwrap();
            assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
            assert_eq!(svg.matches("<polyline").count(), 2);
            assert!(svg.contains("stroke-dasharray"));
        }
    }

    #[test]
    fn short_history_reports_missing_rates() {
        let t = rates_text(&history(2), 2, 1);
        assert!(t.contains("nan") && t.contains("optimal beta = 3/2 + q = 2.5"));
    }
}
