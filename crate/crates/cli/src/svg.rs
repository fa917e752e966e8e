//! Minimal SVG rendering of the SBC ECDF difference plots.

use std::fmt::Write;

use crate::commands::SbcReport;

const PANEL_W: f64 = 220.0;
const PANEL_H: f64 = 150.0;
const PAD: f64 = 28.0;
const PER_ROW: usize = 4;

/// One panel per (condition, parameter): `F(z) - z` with the simultaneous
/// band shaded.
pub fn ecdf_panels(report: &SbcReport) -> String {
    let panels: Vec<(String, &[f64])> = report
        .conditions
        .iter()
        .flat_map(|c| c.verdicts.iter().map(move |v| (format!("{} / {}", c.label, v.param), v.ecdf.as_slice())))
        .collect();
    let rows = panels.len().div_ceil(PER_ROW).max(1);
    let width = PER_ROW as f64 * (PANEL_W + PAD) + PAD;
    let height = rows as f64 * (PANEL_H + PAD) + PAD;
    let band = &report.band;
    let span = band
        .grid
        .iter()
        .zip(band.lower.iter().zip(&band.upper))
        .map(|(z, (l, u))| (z - l).max(u - z))
        .chain(panels.iter().flat_map(|(_, e)| e.iter().zip(&band.grid).map(|(f, z)| (f - z).abs())))
        .fold(0.01_f64, f64::max)
        * 1.1;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (n, (title, ecdf)) in panels.iter().enumerate() {
        let x0 = PAD + (n % PER_ROW) as f64 * (PANEL_W + PAD);
        let y0 = PAD + (n / PER_ROW) as f64 * (PANEL_H + PAD);
        let px = |z: f64| x0 + z * PANEL_W;
        let py = |d: f64| y0 + PANEL_H / 2.0 - d / span * PANEL_H / 2.0;
        let mut poly = String::new();
        for (z, u) in band.grid.iter().zip(&band.upper) {
            let _ = write!(poly, "{:.2},{:.2} ", px(*z), py(u - z));
        }
        for (z, l) in band.grid.iter().zip(&band.lower).rev() {
            let _ = write!(poly, "{:.2},{:.2} ", px(*z), py(l - z));
        }
        let _ = writeln!(s, r##"<polygon points="{}" fill="#cfe0f3" stroke="none"/>"##, poly.trim_end());
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="3,3"/>"##,
            px(0.0),
            py(0.0),
            px(1.0),
            py(0.0)
        );
        let line: Vec<String> = band
            .grid
            .iter()
            .zip(ecdf.iter())
            .map(|(z, f)| format!("{:.2},{:.2}", px(*z), py(f - z)))
            .collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f4e8c" stroke-width="1.2"/>"##, line.join(" "));
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.2}" y="{y0:.2}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x0, y0 - 6.0, escape(title));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
