//! Minimal static SVG line plots, one per observer stage.
//!
//! Output bytes depend only on the input values.

use std::fmt::Write as _;

use super::trace::Trace;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

const STATE_NAMES: [&str; 3] = ["displacement", "velocity", "acceleration"];

fn state_label(k: usize, order: usize) -> String {
    if order == 3 {
        STATE_NAMES[k - 1].to_string()
    } else {
        format!("state {k}")
    }
}

struct Axes {
    t_min: f64,
    t_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Axes {
    fn x(&self, t: f64) -> f64 {
        LEFT + (t - self.t_min) / (self.t_max - self.t_min) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Renders every follower's global error on state `k` against time, with the
/// stage's time-varying-gain window `shade` drawn as a grey band.
pub fn stage_plot(trace: &Trace, k: usize, shade: Option<(f64, f64)>) -> String {
    let times = trace.times();
    let series: Vec<Vec<f64>> = (1..=trace.followers).map(|i| trace.global_error(i, k)).collect();

    let mut t_min = times.first().copied().unwrap_or(0.0);
    let mut t_max = times.last().copied().unwrap_or(1.0);
    if !(t_max > t_min) {
        t_min -= 0.5;
        t_max += 0.5;
    }
    let finite = series.iter().flatten().copied().filter(|v| v.is_finite());
    let (mut y_min, mut y_max) = finite.fold((0.0_f64, 0.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = 0.05 * (y_max - y_min).max(1e-12);
    y_min -= pad;
    y_max += pad;
    let ax = Axes {
        t_min,
        t_max,
        y_min,
        y_max,
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    if let Some((a, b)) = shade {
        let x0 = ax.x(a.max(t_min)).clamp(LEFT, WIDTH - RIGHT);
        let x1 = ax.x(b.min(t_max)).clamp(LEFT, WIDTH - RIGHT);
        if x1 > x0 {
            let _ = writeln!(
                s,
                r##"<rect class="gain-window" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#d9d9d9" fill-opacity="0.6"/>"##,
                x0,
                TOP,
                x1 - x0,
                HEIGHT - TOP - BOTTOM
            );
        }
    }

    // Axes box, ticks and zero line.
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let t = t_min + f * (t_max - t_min);
        let x = ax.x(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t:.3}</text>"#,
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM + 5.0,
            HEIGHT - BOTTOM + 20.0
        );
        let v = y_min + f * (y_max - y_min);
        let y = ax.y(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
    if y_min < 0.0 && y_max > 0.0 {
        let y0 = ax.y(0.0);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="#888888" stroke-dasharray="4 3"/>"##,
            WIDTH - RIGHT
        );
    }

    for (i, ys) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = String::new();
        for (t, v) in times.iter().zip(ys) {
            if v.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", ax.x(*t), ax.y(*v));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline class="follower-{}" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            i + 1,
            pts.trim_end()
        );
        if times.len() == 1 {
            if let (Some(t), Some(v)) = (times.first(), ys.first()) {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                    ax.x(*t),
                    ax.y(*v)
                );
            }
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">follower {}</text>"#,
            WIDTH - RIGHT - 110.0,
            WIDTH - RIGHT - 90.0,
            WIDTH - RIGHT - 85.0,
            ly + 4.0,
            i + 1
        );
    }

    let label = state_label(k, trace.order);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">Global estimation error, {label} (stage {k})</text>"#,
        WIDTH / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (s)</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18,{:.2}) rotate(-90)" text-anchor="middle">estimation error ({label} units)</text>"#,
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(rows: Vec<Vec<f64>>) -> Trace {
        Trace {
            order: 1,
            followers: 1,
            rows,
        }
    }

    #[test]
    fn single_sample_plot_is_valid() {
        let t = tiny(vec![vec![0.0, 1.0, 0.5, 0.5, 0.1, 0.1]]);
        let svg = stage_plot(&t, 1, Some((0.0, 0.2)));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("<circle"));
        assert!(svg.contains("class=\"follower-1\""));
    }

    #[test]
    fn deterministic_and_shaded() {
        let t = tiny(vec![
            vec![0.0, 1.0, 0.5, 0.5, 0.1, 0.1],
            vec![0.5, 1.0, -0.2, -0.2, 0.1, 0.1],
            vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        ]);
        let a = stage_plot(&t, 1, Some((0.0, 0.5)));
        assert_eq!(a, stage_plot(&t, 1, Some((0.0, 0.5))));
        assert!(a.contains("gain-window"));
        assert!(!stage_plot(&t, 1, None).contains("gain-window"));
        assert!(a.contains("time (s)"));
    }
}
