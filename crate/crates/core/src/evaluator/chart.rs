use std::fmt::Write;

use super::report::EvalReport;

pub const CHART_WIDTH: f64 = 1000.0;
pub const CHART_HEIGHT: f64 = 600.0;
/// Y coordinate of an error of 1.0.
pub const PLOT_TOP: f64 = 60.0;
/// Y coordinate of an error of 0.0.
pub const PLOT_BOTTOM: f64 = 520.0;
const PLOT_LEFT: f64 = 80.0;
const PLOT_RIGHT: f64 = 960.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ChartBar {
    pub condition: String,
    pub inpainted: bool,
    pub value: f64,
    pub x: f64,
    pub width: f64,
}

fn y_of(value: f64) -> f64 {
    PLOT_BOTTOM - value.clamp(0.0, 1.0) * (PLOT_BOTTOM - PLOT_TOP)
}

/// Bars grouped by occlusion condition: the occluded bar, then its
/// inpainted counterpart when present. The clean condition is drawn as a
/// horizontal rule instead.
pub fn chart_bars(report: &EvalReport) -> Vec<(String, Vec<ChartBar>)> {
    type Group = (String, Vec<(String, bool, f64)>);
    let mut groups: Vec<Group> = Vec::new();
    for c in report.conditions.iter().filter(|c| c.id != "clean") {
        let (base, inpainted) = match c.id.strip_suffix("+inpaint") {
            Some(b) => (b.to_string(), true),
            None => (c.id.clone(), false),
        };
        let idx = match groups.iter().position(|(b, _)| *b == base) {
            Some(i) => i,
            None => {
                groups.push((base, Vec::new()));
                groups.len() - 1
            }
        };
        groups[idx].1.push((c.id.clone(), inpainted, c.top1_error));
    }
    let slot = (PLOT_RIGHT - PLOT_LEFT) / groups.len().max(1) as f64;
    let bar_w = slot * 0.35;
    groups
        .into_iter()
        .enumerate()
        .map(|(g, (base, mut items))| {
            items.sort_by_key(|(_, inpainted, _)| *inpainted);
            let left = PLOT_LEFT + g as f64 * slot + slot * 0.15;
            let bars = items
                .into_iter()
                .map(|(condition, inpainted, value)| ChartBar {
                    x: left + if inpainted { bar_w } else { 0.0 },
                    width: bar_w,
                    condition,
                    inpainted,
                    value,
                })
                .collect();
            (base, bars)
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// 1000x600 grouped bar chart of top-1 error per condition.
pub fn render_chart(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CHART_WIDTH}" height="{CHART_HEIGHT}" viewBox="0 0 {CHART_WIDTH} {CHART_HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{CHART_WIDTH}" height="{CHART_HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="18">Top-1 error by condition ({})</text>"#,
        CHART_WIDTH / 2.0,
        escape(&report.model.id)
    );
    for tick in 0..=10 {
        let v = tick as f64 / 10.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r##"<line class="grid" x1="{PLOT_LEFT}" y1="{y:.3}" x2="{PLOT_RIGHT}" y2="{y:.3}" stroke="#ddd"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.3}" text-anchor="end" font-size="11">{v:.1}</text>"#,
            PLOT_LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{PLOT_LEFT}" y1="{PLOT_BOTTOM}" x2="{PLOT_RIGHT}" y2="{PLOT_BOTTOM}" stroke="black"/>"#
    );
    for (base, bars) in chart_bars(report) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for b in &bars {
            let y = y_of(b.value);
            let h = PLOT_BOTTOM - y;
            let fill = if b.inpainted { "#4c9f70" } else { "#c0504d" };
            let class = if b.inpainted {
                "bar inpainted"
            } else {
                "bar occluded"
            };
            let _ = writeln!(
                s,
                r#"<rect class="{class}" data-condition="{}" data-value="{}" x="{:.3}" y="{y:.6}" width="{:.3}" height="{h:.6}" fill="{fill}"/>"#,
                escape(&b.condition),
                b.value,
                b.x,
                b.width
            );
            let _ = writeln!(
                s,
                r#"<text class="value" x="{:.3}" y="{:.3}" text-anchor="middle" font-size="10">{:.3}</text>"#,
                b.x + b.width / 2.0,
                y - 4.0,
                b.value
            );
            lo = lo.min(b.x);
            hi = hi.max(b.x + b.width);
        }
        let _ = writeln!(
            s,
            r#"<text class="group" x="{:.3}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            (lo + hi) / 2.0,
            PLOT_BOTTOM + 20.0,
            escape(&base)
        );
    }
    if let Some(clean) = report.condition("clean") {
        let y = y_of(clean.top1_error);
        let _ = writeln!(
            s,
            r#"<line class="baseline" data-value="{}" x1="{PLOT_LEFT}" y1="{y:.6}" x2="{PLOT_RIGHT}" y2="{y:.6}" stroke="black" stroke-dasharray="6 4"/>"#,
            clean.top1_error
        );
        let _ = writeln!(
            s,
            r#"<text x="{PLOT_RIGHT}" y="{:.3}" text-anchor="end" font-size="11">clean {:.3}</text>"#,
            y - 5.0,
            clean.top1_error
        );
    }
    let legend_y = CHART_HEIGHT - 40.0;
    let _ = writeln!(
        s,
        r##"<rect x="{PLOT_LEFT}" y="{}" width="14" height="14" fill="#c0504d"/><text x="{}" y="{}" font-size="12">occluded</text>"##,
        legend_y - 11.0,
        PLOT_LEFT + 20.0,
        legend_y
    );
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="14" height="14" fill="#4c9f70"/><text x="{}" y="{}" font-size="12">inpainted</text>"##,
        PLOT_LEFT + 120.0,
        legend_y - 11.0,
        PLOT_LEFT + 140.0,
        legend_y
    );
    s.push_str("</svg>\n");
    s
}
