//! Static SVG bar charts of ego-state distributions.
//!
//! Linear scale: `axis_max = max(10, ceil(max_count / 10) * 10)` and a bar of
//! `count` is `count / axis_max * PLOT_HEIGHT` pixels tall, drawn upward from
//! the baseline. Heights are written with three decimals.

use std::fmt::Write;

use super::analysis::EgoStateDistribution;
use crate::types::EgoState;

pub const PLOT_HEIGHT: f64 = 200.0;
pub const BAR_WIDTH: f64 = 40.0;
pub const BAR_GAP: f64 = 20.0;
const MARGIN_LEFT: f64 = 40.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 40.0;
const PANEL_WIDTH: f64 = MARGIN_LEFT + 3.0 * BAR_WIDTH + 4.0 * BAR_GAP + 20.0;
const PANEL_HEIGHT: f64 = MARGIN_TOP + PLOT_HEIGHT + MARGIN_BOTTOM;

const COLORS: [&str; 3] = ["#c0504d", "#4f81bd", "#9bbb59"];

pub fn axis_max(max_count: u64) -> u64 {
    (max_count.div_ceil(10) * 10).max(10)
}

pub fn bar_height(count: u64, axis_max: u64) -> f64 {
    count as f64 / axis_max as f64 * PLOT_HEIGHT
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn panel(out: &mut String, d: &EgoStateDistribution, axis: u64, dx: f64, dy: f64) {
    let title = match d.condition {
        Some(c) => format!("{} ({})", d.agent_name, c),
        None => d.agent_name.clone(),
    };
    let base = dy + MARGIN_TOP + PLOT_HEIGHT;
    let _ = writeln!(out, r#"<g class="panel">"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.3}" y="{:.3}" font-size="14" text-anchor="middle">{}</text>"#,
        dx + PANEL_WIDTH / 2.0,
        dy + 20.0,
        escape(&title)
    );
    let _ = writeln!(
        out,
        r#"<line x1="{:.3}" y1="{base:.3}" x2="{:.3}" y2="{base:.3}" stroke="black"/>"#,
        dx + MARGIN_LEFT,
        dx + PANEL_WIDTH - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.3}" y="{:.3}" font-size="10" text-anchor="end">{axis}</text>"#,
        dx + MARGIN_LEFT - 4.0,
        dy + MARGIN_TOP + 4.0
    );
    for (i, state) in EgoState::ALL.into_iter().enumerate() {
        let count = d.counts.get(state);
        let h = bar_height(count, axis);
        let x = dx + MARGIN_LEFT + BAR_GAP + i as f64 * (BAR_WIDTH + BAR_GAP);
        let _ = writeln!(
            out,
            r#"<rect class="bar" data-state="{state}" data-count="{count}" x="{x:.3}" y="{:.3}" width="{BAR_WIDTH:.3}" height="{h:.3}" fill="{}"/>"#,
            base - h,
            COLORS[i]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" font-size="12" text-anchor="middle">{count}</text>"#,
            x + BAR_WIDTH / 2.0,
            base - h - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" font-size="12" text-anchor="middle">{}</text>"#,
            x + BAR_WIDTH / 2.0,
            base + 16.0,
            state.tag()
        );
    }
    out.push_str("</g>\n");
}

fn document(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// One distribution, scaled to its own largest bar.
pub fn distribution_svg(d: &EgoStateDistribution) -> String {
    let mut body = String::new();
    panel(&mut body, d, axis_max(d.counts.max()), 0.0, 0.0);
    document(PANEL_WIDTH, PANEL_HEIGHT, &body)
}

/// Grid of panels, `rows[r][c]`, on one shared scale.
pub fn panel_grid_svg(rows: &[Vec<&EgoStateDistribution>]) -> String {
    let shared = axis_max(rows.iter().flatten().map(|d| d.counts.max()).max().unwrap_or(0));
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut body = String::new();
    for (r, row) in rows.iter().enumerate() {
        for (c, d) in row.iter().enumerate() {
            panel(&mut body, d, shared, c as f64 * PANEL_WIDTH, r as f64 * PANEL_HEIGHT);
        }
    }
    document(cols as f64 * PANEL_WIDTH, rows.len() as f64 * PANEL_HEIGHT, &body)
}
