//! SVG line plots of ledgers: energy balance and reaction force over time.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sim::{rupture_step, LedgerRow};

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 90.0;
const MARGIN_RIGHT: f64 = 230.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSummary {
    pub energy_svg: PathBuf,
    pub reaction_svg: PathBuf,
    /// Final `|balance residual|` per ledger, in input order.
    pub terminal_gaps: Vec<(String, f64)>,
    /// Whether the terminal gaps strictly decrease in input order.
    pub gaps_decreasing: bool,
    /// First step and time of a >50% reaction-force drop, per ledger.
    pub ruptures: Vec<(String, Option<(usize, f64)>)>,
}

struct Series<'a> {
    points: Vec<(f64, f64)>,
    color: &'a str,
    dashed: bool,
}

struct Chart {
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Chart {
    fn new(series: &[Series<'_>]) -> Self {
        let bounds = |f: fn(&(f64, f64)) -> f64| {
            let (lo, hi) = series
                .iter()
                .flat_map(|s| s.points.iter().map(f))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if hi > lo {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            } else {
                let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
                (lo - pad, hi + pad)
            }
        };
        Chart {
            x_range: bounds(|p| p.0),
            y_range: bounds(|p| p.1),
        }
    }

    fn x(&self, v: f64) -> f64 {
        let (a, b) = self.x_range;
        MARGIN_LEFT + (v - a) / (b - a) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let (a, b) = self.y_range;
        HEIGHT - MARGIN_BOTTOM - (v - a) / (b - a) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn render(&self, title: &str, x_label: &str, y_label: &str, series: &[Series<'_>], legend: &[(String, &str)], notes: &[String]) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" font-size="15">{}</text>"#, MARGIN_LEFT, escape(title));
        let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
        let _ = writeln!(s, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
        for v in ticks(self.x_range) {
            let px = self.x(v);
            let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/>"#, y0 + 5.0);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, label(v));
        }
        for v in ticks(self.y_range) {
            let py = self.y(v);
            let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, label(v));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, 0.5 * (x0 + x1), HEIGHT - 15.0, escape(x_label));
        let _ = writeln!(
            s,
            r#"<text transform="translate(20,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
            0.5 * (y0 + y1),
            escape(y_label)
        );
        for series in series {
            let path: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", self.x(x), self.y(y)))
                .collect();
            let dash = if series.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
                path.join(" "),
                series.color
            );
        }
        let lx = WIDTH - MARGIN_RIGHT + 15.0;
        let mut ly = MARGIN_TOP + 10.0;
        for (text, color) in legend {
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(text));
            ly += 18.0;
        }
        ly += 10.0;
        for note in notes {
            let _ = writeln!(s, r#"<text x="{lx}" y="{ly}" font-size="11">{}</text>"#, escape(note));
            ly += 15.0;
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e5 {
        format!("{}", (v * 1e6).round() / 1e6)
    } else {
        format!("{v:.2e}")
    }
}

/// Roughly six round tick values covering the range.
fn ticks((lo, hi): (f64, f64)) -> Vec<f64> {
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut v = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while v <= hi + 1e-9 * step {
        out.push(if v.abs() < 1e-9 * step { 0.0 } else { v });
        v += step;
    }
    out
}

/// Write `energy.svg` and `reaction_force.svg` for labelled ledgers.
///
/// The energy plot overlays `E + dissipation` (solid) and `E⁰ + work`
/// (dashed) per ledger; the reaction plot marks the rupture steps.
pub fn emit_plots(ledgers: &[(String, Vec<LedgerRow>)], out_dir: &Path) -> Result<PlotSummary> {
    if ledgers.is_empty() {
        return Err(Error::EmptyLedger("no ledgers given".into()));
    }
    if let Some((name, _)) = ledgers.iter().find(|(_, rows)| rows.is_empty()) {
        return Err(Error::EmptyLedger(name.clone()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut energy_series = Vec::new();
    let mut reaction_series = Vec::new();
    let mut energy_legend = Vec::new();
    let mut reaction_legend = Vec::new();
    let mut terminal_gaps = Vec::new();
    let mut ruptures = Vec::new();
    for (i, (name, rows)) in ledgers.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let e0 = rows[0].stored_energy;
        energy_series.push(Series {
            points: rows
                .iter()
                .map(|r| (r.time / 1e3, r.stored_energy + r.plastic_dissipation_cum + r.damage_dissipation_cum))
                .collect(),
            color,
            dashed: false,
        });
        energy_series.push(Series {
            points: rows.iter().map(|r| (r.time / 1e3, e0 + r.external_work_cum)).collect(),
            color,
            dashed: true,
        });
        let gap = rows.last().map(|r| r.balance_residual.abs()).unwrap_or(0.0);
        terminal_gaps.push((name.clone(), gap));
        energy_legend.push((format!("{name}: gap {gap:.3e} J"), color));

        reaction_series.push(Series {
            points: rows.iter().map(|r| (r.time / 1e3, r.reaction_force / 1e6)).collect(),
            color,
            dashed: false,
        });
        let rupture = rupture_step(rows).and_then(|step| rows.iter().find(|r| r.step == step).map(|r| (step, r.time)));
        let note = match rupture {
            Some((step, t)) => format!("{name}: rupture step {step} ({:.0} ks)", t / 1e3),
            None => format!("{name}: no rupture"),
        };
        reaction_legend.push((note, color));
        ruptures.push((name.clone(), rupture));
    }
    let gaps_decreasing = terminal_gaps.windows(2).all(|w| w[1].1 < w[0].1);
    let ordering = if ledgers.len() < 2 {
        "single ledger".to_string()
    } else if gaps_decreasing {
        "terminal gaps decrease in listed order".to_string()
    } else {
        "terminal gaps not monotone in listed order".to_string()
    };

    let energy_svg = out_dir.join("energy.svg");
    let chart = Chart::new(&energy_series);
    let svg = chart.render(
        "Energy balance: E + dissipation (solid), E0 + external work (dashed)",
        "time (ks)",
        "energy (J)",
        &energy_series,
        &energy_legend,
        &[ordering],
    );
    std::fs::write(&energy_svg, svg).map_err(|e| Error::io(&energy_svg, e))?;

    let reaction_svg = out_dir.join("reaction_force.svg");
    let chart = Chart::new(&reaction_series);
    let mut svg = chart.render(
        "Reaction force: stripe mean of |dev σ|",
        "time (ks)",
        "reaction force (MPa)",
        &reaction_series,
        &reaction_legend,
        &[],
    );
    let markers: String = ruptures
        .iter()
        .zip(ledgers)
        .enumerate()
        .filter_map(|(i, ((_, r), (_, rows)))| {
            let (step, t) = (*r)?;
            let f = rows.iter().find(|row| row.step == step)?.reaction_force / 1e6;
            Some(format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\"/>\n",
                chart.x(t / 1e3),
                chart.y(f),
                COLORS[i % COLORS.len()]
            ))
        })
        .collect();
    svg.insert_str(svg.len() - "</svg>\n".len(), &markers);
    std::fs::write(&reaction_svg, svg).map_err(|e| Error::io(&reaction_svg, e))?;

    Ok(PlotSummary {
        energy_svg,
        reaction_svg,
        terminal_gaps,
        gaps_decreasing,
        ruptures,
    })
}
