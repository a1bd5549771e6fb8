//! Hand-rolled SVG charts and CSV tables. Both are plain text with stable
//! formatting so reruns diff cleanly; every file carries the tool version
//! and the resolved config hash (CSV as `#` comment lines, SVG in `<desc>`).

use std::path::Path;

use crate::error::CliError;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const M_LEFT: f64 = 72.0;
const M_RIGHT: f64 = 24.0;
const M_TOP: f64 = 44.0;
const M_BOTTOM: f64 = 56.0;

pub struct LineSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct BarSeries {
    pub name: String,
    pub values: Vec<f64>,
}

/// Shortest stable text for a value: plain decimal in a friendly range,
/// scientific outside it.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let a = v.abs();
    if (1e-3..1e6).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn cover(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let mut f = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for x in xs {
            f.x_min = f.x_min.min(x);
            f.x_max = f.x_max.max(x);
        }
        for y in ys {
            f.y_min = f.y_min.min(y);
            f.y_max = f.y_max.max(y);
        }
        if !f.x_min.is_finite() || f.x_min == f.x_max {
            f.x_max = f.x_min + 1.0;
        }
        if !f.y_min.is_finite() {
            f.y_min = 0.0;
            f.y_max = 1.0;
        } else {
            // Always show the zero line when it is nearby.
            if f.y_min > 0.0 && f.y_min < 0.25 * f.y_max {
                f.y_min = 0.0;
            }
            if f.y_min == f.y_max {
                f.y_max = f.y_min + 1.0;
            }
        }
        f
    }

    fn px(&self, x: f64) -> f64 {
        M_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - M_LEFT - M_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - M_BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - M_TOP - M_BOTTOM)
    }
}

fn svg_open(title: &str, meta: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"12\">\n\
         <desc>{}</desc>\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        escape(meta),
        WIDTH / 2.0,
        escape(title)
    )
}

fn axes_and_y_ticks(out: &mut String, frame: &Frame, y_label: &str) {
    let x0 = M_LEFT;
    let x1 = WIDTH - M_RIGHT;
    let y0 = HEIGHT - M_BOTTOM;
    let y1 = M_TOP;
    out.push_str(&format!(
        "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x0:.1}\" y2=\"{y1:.1}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let v = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 4.0;
        let y = frame.py(v);
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{x1:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            x0,
            x0 - 6.0,
            y + 4.0,
            fmt_num(v)
        ));
    }
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" transform=\"rotate(-90 16 {:.1})\" text-anchor=\"middle\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    ));
}

fn legend(out: &mut String, names: &[&str]) {
    if names.len() <= 1 {
        return;
    }
    for (i, name) in names.iter().enumerate() {
        let y = M_TOP + 14.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        out.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            WIDTH - M_RIGHT - 180.0,
            y,
            WIDTH - M_RIGHT - 165.0,
            y + 9.0,
            escape(name)
        ));
    }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[LineSeries], meta: &str) -> String {
    let frame = Frame::cover(
        series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
        series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
    );
    let mut out = svg_open(title, meta);
    axes_and_y_ticks(&mut out, &frame, y_label);
    for i in 0..=4 {
        let v = frame.x_min + (frame.x_max - frame.x_min) * i as f64 / 4.0;
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            frame.px(v),
            HEIGHT - M_BOTTOM + 18.0,
            fmt_num(v)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        (M_LEFT + WIDTH - M_RIGHT) / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    ));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
    }
    legend(&mut out, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

pub fn grouped_bar_chart(
    title: &str,
    y_label: &str,
    groups: &[String],
    series: &[BarSeries],
    meta: &str,
) -> String {
    let frame = Frame::cover(
        [0.0, 1.0].into_iter(),
        series
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .chain(std::iter::once(0.0)),
    );
    let mut out = svg_open(title, meta);
    axes_and_y_ticks(&mut out, &frame, y_label);
    let plot_w = WIDTH - M_LEFT - M_RIGHT;
    let group_w = plot_w / groups.len().max(1) as f64;
    let bar_w = (group_w * 0.8) / series.len().max(1) as f64;
    for (g, label) in groups.iter().enumerate() {
        let gx = M_LEFT + group_w * g as f64;
        for (i, s) in series.iter().enumerate() {
            let v = s.values.get(g).copied().unwrap_or(f64::NAN);
            if !v.is_finite() {
                continue;
            }
            let x = gx + group_w * 0.1 + bar_w * i as f64;
            let y_top = frame.py(v.max(0.0));
            let y_zero = frame.py(v.min(0.0).max(frame.y_min));
            out.push_str(&format!(
                "<rect x=\"{x:.2}\" y=\"{y_top:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                (frame.py(frame.y_min.max(0.0)).min(y_zero) - y_top).abs().max(0.5),
                PALETTE[i % PALETTE.len()]
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            gx + group_w / 2.0,
            HEIGHT - M_BOTTOM + 18.0,
            escape(label)
        ));
    }
    legend(&mut out, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// CSV with leading `#` metadata lines (tool version, config hash).
pub fn write_csv(
    path: &Path,
    comments: &[String],
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut body = String::new();
    for c in comments {
        body.push_str(&format!("# {c}\n"));
    }
    body.push_str(&header.join(","));
    body.push('\n');
    for row in rows {
        body.push_str(&row.join(","));
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn write_text(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
